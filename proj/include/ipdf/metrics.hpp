#pragma once

// Evaluation metrics: average log-likelihood, spread (mean absolute angular
// deviation), precision and top-k recall metrics. Radians internally,
// degrees in reports.

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ipdf/errors.hpp"
#include "ipdf/infer.hpp"
#include "ipdf/rotation.hpp"
#include "ipdf/rotation_index.hpp"
#include "ipdf/so3_grid.hpp"

namespace ipdf {

inline double to_degrees(double rad) { return rad * 180.0 / kPi; }
inline double to_radians(double deg) { return deg * kPi / 180.0; }

struct EvalRecord {
  PoseDistribution distribution;
  Rotation gt_annotated;
  std::optional<std::vector<Rotation>> gt_full;
};

struct CellLogDensity {
  double value = 0.0;
  bool floored = false;
};

// log of the density of the cell nearest `gt`; zero densities are floored
// at the smallest normal double.
inline CellLogDensity cell_log_density(const PoseDistribution& dist, const RotationIndex& grid_index,
                                       const Rotation& gt) {
  if (dist.size() != grid_index.size()) throw DimensionMismatch("distribution and grid sizes differ");
  const double d = dist.densities[grid_index.nearest(gt)];
  if (d < DBL_MIN) return {std::log(DBL_MIN), true};
  return {std::log(d), false};
}

struct LogLikelihoodResult {
  double mean = 0.0;
  std::size_t floored = 0;
};

inline LogLikelihoodResult average_log_likelihood(std::span<const EvalRecord> records,
                                                  const RotationIndex& grid_index) {
  LogLikelihoodResult out;
  if (records.empty()) return out;
  for (const auto& r : records) {
    const CellLogDensity c = cell_log_density(r.distribution, grid_index, r.gt_annotated);
    out.mean += c.value;
    out.floored += c.floored ? 1 : 0;
  }
  out.mean /= static_cast<double>(records.size());
  return out;
}

// Expected distance from the distribution to the nearest orbit member.
inline double record_spread(const PoseDistribution& dist, const EquivolumetricGrid& grid,
                            std::span<const Rotation> orbit, unsigned threads = 1) {
  if (dist.size() != grid.size()) throw DimensionMismatch("distribution and grid sizes differ");
  if (orbit.empty()) throw MissingFullGroundTruth("empty ground-truth orbit");
  const RotationIndex index(orbit);
  const std::size_t chunk = 4096;
  const std::size_t chunks = (grid.size() + chunk - 1) / chunk;
  std::vector<double> partial(chunks, 0.0);
  parallel_for(chunks, threads, [&](std::size_t cb, std::size_t ce) {
    for (std::size_t c = cb; c < ce; ++c) {
      double s = 0.0;
      for (std::size_t i = c * chunk; i < std::min(grid.size(), (c + 1) * chunk); ++i) {
        if (dist.densities[i] == 0.0) continue;
        const Rotation& r = grid.rotations[i];
        s += dist.probability(i) * geodesic_distance(r, orbit[index.nearest(r)]);
      }
      partial[c] = s;
    }
  });
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

inline double spread(std::span<const EvalRecord> records, const EquivolumetricGrid& grid, unsigned threads = 1) {
  if (records.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : records) {
    if (!r.gt_full) throw MissingFullGroundTruth("record has no full ground-truth orbit");
    total += record_spread(r.distribution, grid, *r.gt_full, threads);
  }
  return total / static_cast<double>(records.size());
}

// Distance from `pred` to the annotation, or to the nearest member of the
// full orbit when it is known.
inline double prediction_error(const Rotation& pred, const Rotation& gt,
                               const std::optional<std::vector<Rotation>>& gt_full = std::nullopt) {
  if (!gt_full || gt_full->empty()) return geodesic_distance(pred, gt);
  double best = kPi;
  for (const auto& g : *gt_full) best = std::min(best, geodesic_distance(pred, g));
  return best;
}

inline const std::vector<double>& default_thresholds_deg() {
  static const std::vector<double> t{15.0, 30.0};
  return t;
}

struct PrecisionMetrics {
  double median_error_deg = 0.0;
  std::map<double, double> acc_at;  // threshold in degrees -> fraction with error < threshold
  std::vector<double> errors_deg;
};

inline PrecisionMetrics precision_from_errors(std::span<const double> errors_rad,
                                              std::span<const double> thresholds_deg = default_thresholds_deg()) {
  PrecisionMetrics out;
  for (double e : errors_rad) out.errors_deg.push_back(to_degrees(e));
  out.median_error_deg = out.errors_deg.empty() ? 0.0 : median(out.errors_deg);
  for (double t : thresholds_deg) {
    std::size_t hits = 0;
    const double limit = to_radians(t);
    for (double e : errors_rad) hits += e < limit ? 1 : 0;
    out.acc_at[t] = out.errors_deg.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(out.errors_deg.size());
  }
  return out;
}

inline PrecisionMetrics precision_metrics(std::span<const Rotation> predictions, std::span<const EvalRecord> records,
                                          std::span<const double> thresholds_deg = default_thresholds_deg()) {
  if (predictions.size() != records.size()) throw DimensionMismatch("one prediction per record is required");
  std::vector<double> errors;
  errors.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    errors.push_back(prediction_error(predictions[i], records[i].gt_annotated, records[i].gt_full));
  }
  return precision_from_errors(errors, thresholds_deg);
}

struct TopkRecord {
  double error = kPi;   // min over candidates of the distance to the annotation
  double spread = kPi;  // min over modes of the renormalized mode's expected distance
};

// The first k modes are the candidates; each mode's distribution is its
// member cells renormalized to unit mass.
inline TopkRecord topk_record(const ModeSet& modes, const PoseDistribution& dist, const EquivolumetricGrid& grid,
                              const Rotation& gt, std::size_t k) {
  if (k < 1) throw Error("k must be >= 1");
  TopkRecord out;
  for (std::size_t j = 0; j < std::min(k, modes.modes.size()); ++j) {
    const Mode& mode = modes.modes[j];
    out.error = std::min(out.error, geodesic_distance(mode.center, gt));
    double mass = 0.0;
    double weighted = 0.0;
    for (std::size_t cell : mode.members) {
      const double p = dist.probability(cell);
      mass += p;
      weighted += p * geodesic_distance(grid.rotations[cell], gt);
    }
    if (mass > 0.0) out.spread = std::min(out.spread, weighted / mass);
  }
  return out;
}

struct TopkMetrics {
  std::size_t k = 1;
  std::map<double, double> acc_at;
  double median_error_deg = 0.0;
  double mean_spread_deg = 0.0;
};

inline TopkMetrics topk_from_records(std::span<const TopkRecord> per_record, std::size_t k,
                                     std::span<const double> thresholds_deg = default_thresholds_deg()) {
  TopkMetrics out;
  out.k = k;
  std::vector<double> errors;
  double spread_sum = 0.0;
  for (const auto& r : per_record) {
    errors.push_back(r.error);
    spread_sum += r.spread;
  }
  const PrecisionMetrics p = precision_from_errors(errors, thresholds_deg);
  out.acc_at = p.acc_at;
  out.median_error_deg = p.median_error_deg;
  out.mean_spread_deg = per_record.empty() ? 0.0 : to_degrees(spread_sum / static_cast<double>(per_record.size()));
  return out;
}

inline TopkMetrics topk_metrics(std::span<const ModeSet> modes, std::span<const EvalRecord> records,
                                const EquivolumetricGrid& grid, std::size_t k,
                                std::span<const double> thresholds_deg = default_thresholds_deg()) {
  if (modes.size() != records.size()) throw DimensionMismatch("one mode set per record is required");
  std::vector<TopkRecord> per;
  per.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    per.push_back(topk_record(modes[i], records[i].distribution, grid, records[i].gt_annotated, k));
  }
  return topk_from_records(per, k, thresholds_deg);
}

inline std::string threshold_key(const char* prefix, double deg) {
  const double r = std::round(deg);
  return prefix + (std::abs(deg - r) < 1e-9 ? std::to_string(static_cast<long long>(r)) : std::to_string(deg));
}

// {avg_log_likelihood, spread_deg, median_error_deg, acc15, acc30, topk: {k: {...}}}
inline nlohmann::json report_json(double avg_log_likelihood, std::optional<double> spread_deg,
                                  const PrecisionMetrics& precision, std::span<const TopkMetrics> topk) {
  nlohmann::json j;
  j["avg_log_likelihood"] = avg_log_likelihood;
  j["spread_deg"] = spread_deg ? nlohmann::json(*spread_deg) : nlohmann::json(nullptr);
  j["median_error_deg"] = precision.median_error_deg;
  for (const auto& [t, acc] : precision.acc_at) j[threshold_key("acc", t)] = acc;
  nlohmann::json tk = nlohmann::json::object();
  for (const auto& m : topk) {
    nlohmann::json e;
    for (const auto& [t, acc] : m.acc_at) e[threshold_key("acc", t)] = acc;
    e["median_error_deg"] = m.median_error_deg;
    e["spread_deg"] = m.mean_spread_deg;
    tk[std::to_string(m.k)] = e;
  }
  j["topk"] = tk;
  return j;
}

}  // namespace ipdf
