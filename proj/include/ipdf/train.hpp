#pragma once

// Negative log-likelihood training of the implicit density model. Each
// example is normalized over its own query set, whose first element is the
// ground truth: either the equivolumetric grid left-translated onto the
// ground truth, or the ground truth plus Haar-uniform samples.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ipdf/config.hpp"
#include "ipdf/dataset.hpp"
#include "ipdf/errors.hpp"
#include "ipdf/model.hpp"
#include "ipdf/random.hpp"
#include "ipdf/so3_grid.hpp"

namespace ipdf {

enum class QueryMode { rotated_grid, random };

inline const char* to_string(QueryMode m) { return m == QueryMode::random ? "random" : "rotated_grid"; }

inline QueryMode query_mode_from_string(const std::string& s) {
  if (s == "rotated_grid") return QueryMode::rotated_grid;
  if (s == "random") return QueryMode::random;
  throw Error("unknown query mode \"" + s + "\"");
}

struct TrainConfig {
  std::size_t query_count = 4096;
  QueryMode query_mode = QueryMode::rotated_grid;
  double base_lr = 1e-4;
  std::size_t warmup_steps = 1000;
  std::size_t total_steps = 10000;
  std::size_t batch_size = 32;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
  std::uint64_t seed = 0;

  void validate() const {
    if (query_count < 2) throw Error("query_count must be >= 2");
    if (warmup_steps >= total_steps) throw Error("warmup_steps must be < total_steps");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (!(base_lr > 0)) throw Error("base_lr must be positive");
  }
};

// Linear warm-up to base_lr, then cosine decay to zero at total_steps.
inline double learning_rate(std::size_t step, const TrainConfig& c) {
  if (step < c.warmup_steps) {
    return c.base_lr * static_cast<double>(step) / static_cast<double>(c.warmup_steps);
  }
  const double progress = std::min(1.0, static_cast<double>(step - c.warmup_steps) /
                                            static_cast<double>(c.total_steps - c.warmup_steps));
  return c.base_lr * 0.5 * (1.0 + std::cos(kPi * progress));
}

inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

// -log p(gt | x) from the log densities of a query set whose element 0 is
// the ground truth: -f_0 + logsumexp(f) + log(pi^2 / N).
inline double nll_from_log_densities(std::span<const double> f) {
  const double volume = kSo3Volume / static_cast<double>(f.size());
  return -f[0] + log_sum_exp(f) + std::log(volume);
}

inline double loss_single(const ImplicitDensityModel& model, const VectorXd& descriptor, const Rotation& gt,
                          std::span<const Rotation> queries) {
  if (queries.empty() || geodesic_distance(queries[0], gt) > 1e-9) {
    throw QueryMissingGroundTruth("queries[0] must equal the ground-truth rotation");
  }
  const std::vector<double> f = model.forward(descriptor, queries);
  return nll_from_log_densities(f);
}

// Rotated-grid mode: the grid must have exactly `count` cells. Random mode:
// gt followed by count - 1 Haar samples drawn from `rng`.
inline std::vector<Rotation> make_queries(QueryMode mode, const EquivolumetricGrid* grid, Rng& rng,
                                          const Rotation& gt, std::size_t count) {
  if (count < 2) throw Error("query count must be >= 2");
  if (mode == QueryMode::rotated_grid) {
    if (grid == nullptr || grid->size() != count) {
      throw Error("rotated_grid queries need a grid with exactly " + std::to_string(count) + " cells");
    }
    return rotate_grid(*grid, gt);
  }
  std::vector<Rotation> out;
  out.reserve(count);
  out.push_back(gt);
  for (std::size_t i = 1; i < count; ++i) out.push_back(sample_uniform(rng));
  return out;
}

// Grid level whose cell count is closest to `count` on a log scale.
inline int grid_level_for_count(std::size_t count) {
  int best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int level = 0; level <= kMaxGridLevel; ++level) {
    const double gap = std::abs(std::log(static_cast<double>(grid_size(level))) - std::log(static_cast<double>(count)));
    if (gap < best_gap) {
      best_gap = gap;
      best = level;
    }
  }
  return best;
}

// Number of queries each example actually gets under `config`.
inline std::size_t effective_query_count(const TrainConfig& config) {
  return config.query_mode == QueryMode::rotated_grid ? grid_size(grid_level_for_count(config.query_count))
                                                      : config.query_count;
}

class AdamOptimizer {
 public:
  AdamOptimizer(const ModelConfig& config, double beta1, double beta2, double epsilon)
      : m_(ModelParameters::zeros(config)), v_(ModelParameters::zeros(config)),
        beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(ModelParameters& params, const ModelParameters& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    ModelParameters::zip(m_, grads, [&](auto& m, const auto& g) { m = beta1_ * m + (1.0 - beta1_) * g; });
    ModelParameters::zip(v_, grads,
                         [&](auto& v, const auto& g) { v = beta2_ * v + (1.0 - beta2_) * g.cwiseAbs2(); });
    // params -= lr * mhat / (sqrt(vhat) + eps), tensor by tensor.
    std::vector<const double*> ms, vs;
    m_.for_each([&](const auto& t) { ms.push_back(t.data()); });
    v_.for_each([&](const auto& t) { vs.push_back(t.data()); });
    std::size_t k = 0;
    params.for_each([&](auto& p) {
      const double* m = ms[k];
      const double* v = vs[k];
      double* d = p.data();
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        d[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon_);
      }
      ++k;
    });
  }

  std::uint64_t steps() const noexcept { return t_; }

 private:
  ModelParameters m_, v_;
  double beta1_, beta2_, epsilon_;
  std::uint64_t t_ = 0;
};

struct TraceEntry {
  std::size_t step;
  double lr;
  double loss;
};

inline void write_loss_trace_csv(std::ostream& out, std::span<const TraceEntry> trace) {
  out << "step,lr,loss\n";
  char buf[96];
  for (const auto& e : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", e.step, e.lr, e.loss);
    out << buf;
  }
}

struct TrainResult {
  std::vector<TraceEntry> trace;
};

// Mean training loss of one minibatch and, unless `grads` is null, its
// parameter gradient. queries[k][0] must be the ground truth of example k.
inline double minibatch_loss(const ImplicitDensityModel& model, std::span<const VectorXd> descriptors,
                             std::span<const MatrixXd> encoded_queries, ModelParameters* grads) {
  const BatchEvaluation eval(model, descriptors, encoded_queries);
  const RowVectorXd& f = eval.outputs();
  const auto& off = eval.offsets();
  const double batch = static_cast<double>(descriptors.size());
  RowVectorXd weights(f.size());
  double loss = 0.0;
  for (std::size_t k = 0; k < descriptors.size(); ++k) {
    const Eigen::Index n = off[k + 1] - off[k];
    const std::span<const double> block(f.data() + off[k], static_cast<std::size_t>(n));
    const double lse = log_sum_exp(block);
    loss += -block[0] + lse + std::log(kSo3Volume / static_cast<double>(n));
    for (Eigen::Index i = 0; i < n; ++i) weights(off[k] + i) = std::exp(block[static_cast<std::size_t>(i)] - lse) / batch;
    weights(off[k]) -= 1.0 / batch;
  }
  if (grads != nullptr) *grads = eval.backward(weights);
  return loss / batch;
}

using TrainCallback = std::function<void(const TraceEntry&)>;

// Runs config.total_steps Adam steps over minibatches drawn from per-epoch
// permutations of the dataset. Deterministic given config.seed.
inline TrainResult train(ImplicitDensityModel& model, std::span<const DatasetRecord> dataset,
                         const TrainConfig& config, const TrainCallback& on_step = {}) {
  config.validate();
  if (dataset.empty()) throw Error("cannot train on an empty dataset");
  for (const auto& r : dataset) model.check_descriptor(r.descriptor.size());

  std::optional<EquivolumetricGrid> grid;
  std::size_t query_count = config.query_count;
  if (config.query_mode == QueryMode::rotated_grid) {
    grid = generate_grid(grid_level_for_count(config.query_count));
    query_count = grid->size();
  }

  AdamOptimizer adam(model.config(), config.adam_beta1, config.adam_beta2, config.adam_epsilon);
  TrainResult result;
  result.trace.reserve(config.total_steps);

  std::vector<std::size_t> order(dataset.size());
  std::size_t epoch = 0, cursor = dataset.size();
  const std::uint64_t shuffle_stream = mix_seed(config.seed, 0x5eed5u);
  const std::uint64_t query_stream = mix_seed(config.seed, 0x9e71u);

  std::vector<VectorXd> descs(config.batch_size);
  std::vector<MatrixXd> encs(config.batch_size);
  for (std::size_t step = 0; step < config.total_steps; ++step) {
    for (std::size_t slot = 0; slot < config.batch_size; ++slot) {
      if (cursor == dataset.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng perm_rng = make_rng(shuffle_stream, epoch++);
        std::shuffle(order.begin(), order.end(), perm_rng);
        cursor = 0;
      }
      const DatasetRecord& rec = dataset[order[cursor++]];
      Rng qrng = make_rng(mix_seed(query_stream, step), slot);
      const std::vector<Rotation> queries =
          make_queries(config.query_mode, grid ? &*grid : nullptr, qrng, rec.gt_rotation, query_count);
      descs[slot] = rec.descriptor;
      encs[slot] = encode_queries(queries, model.config());
    }
    ModelParameters grads;
    const double loss = minibatch_loss(model, descs, encs, &grads);
    if (!std::isfinite(loss)) throw NonFiniteLoss(step, loss);
    if (config.clip_norm > 0.0) {
      const double norm = std::sqrt(grads.squared_norm());
      if (norm > config.clip_norm) grads *= config.clip_norm / norm;
    }
    const double lr = learning_rate(step, config);
    adam.step(model.parameters(), grads, lr);
    model.set_step_count(model.step_count() + 1);
    result.trace.push_back({step, lr, loss});
    if (on_step) on_step(result.trace.back());
  }
  return result;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"query_count", c.query_count},   {"query_mode", to_string(c.query_mode)},
          {"base_lr", c.base_lr},           {"warmup_steps", c.warmup_steps},
          {"total_steps", c.total_steps},   {"batch_size", c.batch_size},
          {"adam_beta1", c.adam_beta1},     {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon}, {"clip_norm", c.clip_norm},
          {"seed", c.seed}};
}

// Applies one "key = value" setting to the training or model config.
// Returns false for unknown keys.
inline bool apply_setting(TrainConfig& t, ModelConfig& m, const std::string& key, const std::string& value) {
  if (key == "query_count") t.query_count = parse_uint(key, value);
  else if (key == "query_mode") t.query_mode = query_mode_from_string(value);
  else if (key == "base_lr") t.base_lr = parse_double(key, value);
  else if (key == "warmup_steps") t.warmup_steps = parse_uint(key, value);
  else if (key == "total_steps") t.total_steps = parse_uint(key, value);
  else if (key == "batch_size") t.batch_size = parse_uint(key, value);
  else if (key == "adam_beta1") t.adam_beta1 = parse_double(key, value);
  else if (key == "adam_beta2") t.adam_beta2 = parse_double(key, value);
  else if (key == "adam_epsilon") t.adam_epsilon = parse_double(key, value);
  else if (key == "clip_norm") t.clip_norm = parse_double(key, value);
  else if (key == "seed") t.seed = m.seed = parse_uint(key, value);
  else if (key == "pe_frequencies") m.pe_frequencies = static_cast<int>(parse_uint(key, value));
  else if (key == "hidden_width") m.hidden_width = static_cast<int>(parse_uint(key, value));
  else if (key == "hidden_layers") m.hidden_layers = static_cast<int>(parse_uint(key, value));
  else if (key == "rotation_format") m.rotation_format = rotation_format_from_string(value);
  else if (key == "include_raw") m.include_raw = parse_bool(key, value);
  else return false;
  return true;
}

inline void apply_settings(TrainConfig& t, ModelConfig& m, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    if (!apply_setting(t, m, key, value)) throw FormatError("unknown config key \"" + key + "\"");
  }
}

}  // namespace ipdf
