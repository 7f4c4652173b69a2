#pragma once

// Dataset-level evaluation of a trained model: one distribution per record,
// reduced to per-record scalars so memory stays bounded.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "json.hpp"

#include "ipdf/dataset.hpp"
#include "ipdf/infer.hpp"
#include "ipdf/metrics.hpp"
#include "ipdf/model.hpp"
#include "ipdf/symsol.hpp"
#include "ipdf/train.hpp"

namespace ipdf {

struct EvalOptions {
  int grid_level = 3;
  std::size_t topk = 1;
  double density_floor = 2.0;
  double link_radius = 0.0;  // radians; 0 selects twice the median grid spacing
  int ascent_steps = 0;      // refinement of the point prediction
  bool exact_log_likelihood = false;
  int orbit_samples = kDefaultOrbitSamples;
  std::vector<double> thresholds_deg{15.0, 30.0};
  unsigned threads = 1;

  nlohmann::json to_json() const {
    return {{"grid_level", grid_level},         {"topk", topk},
            {"density_floor", density_floor},   {"link_radius", link_radius},
            {"ascent_steps", ascent_steps},     {"exact_log_likelihood", exact_log_likelihood},
            {"orbit_samples", orbit_samples},   {"thresholds_deg", thresholds_deg}};
  }
};

// Full equivalence set of the annotation; unknown for sphereX.
inline std::optional<std::vector<Rotation>> full_ground_truth(const DatasetRecord& rec,
                                                              int samples = kDefaultOrbitSamples) {
  if (rec.kind == ShapeKind::sphereX) return std::nullopt;
  return orbit(rec.gt_rotation, cached_group(rec.kind), samples);
}

struct RecordEvaluation {
  double log_likelihood = 0.0;
  bool floored = false;
  Rotation prediction;
  double error = 0.0;  // radians
  std::optional<double> spread;
  std::size_t mode_count = 0;
  std::vector<TopkRecord> topk;  // entry k-1 for top-k
};

struct EvaluationResult {
  LogLikelihoodResult log_likelihood;
  std::optional<double> spread_deg;
  PrecisionMetrics precision;
  std::vector<TopkMetrics> topk;
  std::vector<RecordEvaluation> records;

  nlohmann::json report() const {
    nlohmann::json j = report_json(log_likelihood.mean, spread_deg, precision, topk);
    j["n_records"] = records.size();
    j["floored_records"] = log_likelihood.floored;
    return j;
  }

  // index, error_deg, log_likelihood, spread_deg, mode_count, top1_error_deg ...
  void write_csv(std::ostream& out) const {
    out << "index,error_deg,log_likelihood,spread_deg,mode_count";
    const std::size_t k = records.empty() ? 0 : records.front().topk.size();
    for (std::size_t i = 1; i <= k; ++i) out << ",top" << i << "_error_deg";
    out << '\n';
    out.precision(10);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      out << i << ',' << to_degrees(r.error) << ',' << r.log_likelihood << ',';
      if (r.spread) out << to_degrees(*r.spread);
      out << ',' << r.mode_count;
      for (const auto& t : r.topk) out << ',' << to_degrees(t.error);
      out << '\n';
    }
    if (!out) throw IoError("evaluation CSV write failed");
  }
};

// Modes above the density floor; when none qualify, the argmax cell alone
// with the whole distribution as its mode.
inline ModeSet modes_or_argmax(const PoseDistribution& dist, const EquivolumetricGrid& grid, double density_floor,
                               double link_radius) {
  try {
    return extract_modes(dist, grid, density_floor, link_radius);
  } catch (const EmptyModeSet&) {
    Mode m;
    m.center_cell = static_cast<std::size_t>(std::max_element(dist.densities.begin(), dist.densities.end()) -
                                             dist.densities.begin());
    m.center = grid.rotations[m.center_cell];
    m.mass = 1.0;
    m.members.resize(grid.size());
    std::iota(m.members.begin(), m.members.end(), std::size_t{0});
    return ModeSet{{std::move(m)}};
  }
}

using RecordCallback =
    std::function<void(std::size_t index, const DatasetRecord&, const PoseDistribution&, const RecordEvaluation&)>;

inline EvaluationResult evaluate_dataset(const ImplicitDensityModel& model, std::span<const DatasetRecord> data,
                                         const EvalOptions& options, const RecordCallback& on_record = {}) {
  if (options.topk < 1) throw Error("topk must be >= 1");
  const EquivolumetricGrid grid = generate_grid(options.grid_level, options.threads);
  const RotationIndex grid_index(grid.rotations);
  const double link = options.link_radius > 0.0 ? options.link_radius : default_link_radius(grid, options.threads);
  const double log_volume = std::log(grid.cell_volume());

  EvaluationResult result;
  result.records.reserve(data.size());
  std::vector<double> errors;
  double spread_sum = 0.0;
  std::size_t spread_count = 0;
  std::vector<std::vector<TopkRecord>> topk_rows(options.topk);

  for (std::size_t i = 0; i < data.size(); ++i) {
    const DatasetRecord& rec = data[i];
    const std::vector<double> f = model.forward(rec.descriptor, grid.rotations, options.threads);
    const PoseDistribution dist = distribution_from_log_densities(f, grid.level);
    const auto full = full_ground_truth(rec, options.orbit_samples);

    RecordEvaluation ev;
    if (options.exact_log_likelihood) {
      ev.log_likelihood = model.log_density(rec.descriptor, rec.gt_rotation) - log_sum_exp(f) - log_volume;
    } else {
      const CellLogDensity c = cell_log_density(dist, grid_index, rec.gt_rotation);
      ev.log_likelihood = c.value;
      ev.floored = c.floored;
    }
    result.log_likelihood.mean += ev.log_likelihood;
    result.log_likelihood.floored += ev.floored ? 1 : 0;

    if (options.ascent_steps > 0) {
      AscentOptions ascent;
      ascent.steps = options.ascent_steps;
      ev.prediction = predict_pose(model, rec.descriptor, grid, ascent, options.threads).rotation;
    } else {
      ev.prediction = grid.rotations[static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin())];
    }
    ev.error = prediction_error(ev.prediction, rec.gt_rotation, full);
    errors.push_back(ev.error);

    if (full) {
      ev.spread = record_spread(dist, grid, *full, options.threads);
      spread_sum += *ev.spread;
      ++spread_count;
    }

    const ModeSet modes = modes_or_argmax(dist, grid, options.density_floor, link);
    ev.mode_count = modes.modes.size();
    for (std::size_t k = 1; k <= options.topk; ++k) {
      ev.topk.push_back(topk_record(modes, dist, grid, rec.gt_rotation, k));
      topk_rows[k - 1].push_back(ev.topk.back());
    }
    if (on_record) on_record(i, rec, dist, ev);
    result.records.push_back(std::move(ev));
  }

  if (!data.empty()) result.log_likelihood.mean /= static_cast<double>(data.size());
  if (spread_count > 0) result.spread_deg = to_degrees(spread_sum / static_cast<double>(spread_count));
  result.precision = precision_from_errors(errors, options.thresholds_deg);
  for (std::size_t k = 1; k <= options.topk; ++k) {
    result.topk.push_back(topk_from_records(topk_rows[k - 1], k, options.thresholds_deg));
  }
  return result;
}

}  // namespace ipdf
