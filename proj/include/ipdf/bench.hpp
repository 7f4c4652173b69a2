#pragma once

// Wall-clock timing of full-distribution inference for one descriptor.

#include <chrono>
#include <ostream>
#include <span>
#include <vector>

#include "ipdf/errors.hpp"
#include "ipdf/infer.hpp"
#include "ipdf/model.hpp"
#include "ipdf/random.hpp"
#include "ipdf/so3_grid.hpp"

namespace ipdf {

struct InferenceTiming {
  int grid_level = 0;
  std::size_t cells = 0;
  std::vector<double> seconds;  // one entry per timed repetition
  double median_seconds = 0.0;
  double frames_per_second = 0.0;
  double cells_per_second = 0.0;
};

// Fixed descriptor used by the benchmark.
inline VectorXd bench_descriptor(const ImplicitDensityModel& model) {
  Rng rng = make_rng(0xBE7C4, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd d(model.config().descriptor_dim);
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = normal(rng);
  return d;
}

// Times evaluate_distribution on a pre-built grid: one discarded warm-up
// run, then `repetitions` timed runs summarized by their median.
inline InferenceTiming time_inference(const ImplicitDensityModel& model, const EquivolumetricGrid& grid,
                                      int repetitions, unsigned threads = 1,
                                      PoseDistribution* last_distribution = nullptr) {
  if (repetitions < 3) throw Error("repetitions must be >= 3");
  const VectorXd descriptor = bench_descriptor(model);
  InferenceTiming out;
  out.grid_level = grid.level;
  out.cells = grid.size();
  PoseDistribution dist = evaluate_distribution(model, descriptor, grid, threads);
  for (int r = 0; r < repetitions; ++r) {
    const auto start = std::chrono::steady_clock::now();
    dist = evaluate_distribution(model, descriptor, grid, threads);
    const auto stop = std::chrono::steady_clock::now();
    out.seconds.push_back(std::chrono::duration<double>(stop - start).count());
  }
  out.median_seconds = median(out.seconds);
  out.frames_per_second = out.median_seconds > 0 ? 1.0 / out.median_seconds : 0.0;
  out.cells_per_second = out.median_seconds > 0 ? static_cast<double>(out.cells) / out.median_seconds : 0.0;
  if (last_distribution) *last_distribution = std::move(dist);
  return out;
}

inline InferenceTiming time_inference(const ImplicitDensityModel& model, int grid_level, int repetitions,
                                      unsigned threads = 1) {
  return time_inference(model, generate_grid(grid_level, threads), repetitions, threads);
}

// level, cells, median_seconds, fps
inline void write_timings_csv(std::ostream& out, std::span<const InferenceTiming> timings) {
  out << "level,cells,median_seconds,fps\n";
  out.precision(9);
  for (const auto& t : timings) {
    out << t.grid_level << ',' << t.cells << ',' << t.median_seconds << ',' << t.frames_per_second << '\n';
  }
  if (!out) throw IoError("timing CSV write failed");
}

}  // namespace ipdf
