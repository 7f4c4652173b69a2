#pragma once

// Implicit density head: an MLP scoring (descriptor, rotation) pairs with an
// unnormalized log density. The first dense layer is stored split into a
// descriptor block and a query block so that W [d; q] = W_d d + W_q q can be
// evaluated as a broadcast sum over all (descriptor, query) pairs.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ipdf/binary_io.hpp"
#include "ipdf/errors.hpp"
#include "ipdf/parallel.hpp"
#include "ipdf/random.hpp"
#include "ipdf/rotation.hpp"

namespace ipdf {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

struct ModelConfig {
  int descriptor_dim = 16;
  int pe_frequencies = 3;  // m; 0 feeds the raw representation
  int hidden_width = 256;
  int hidden_layers = 4;  // dense ReLU layers before the scalar head
  std::uint64_t seed = 0;
  RotationFormat rotation_format = RotationFormat::matrix;
  bool include_raw = false;  // prepend raw values to the sin/cos features (ablation only)

  int query_dim() const {
    const int base = representation_size(rotation_format);
    if (pe_frequencies == 0) return base;
    return 2 * pe_frequencies * base + (include_raw ? base : 0);
  }

  void validate() const {
    if (descriptor_dim < 1) throw Error("descriptor_dim must be >= 1");
    if (pe_frequencies < 0) throw Error("pe_frequencies must be >= 0");
    if (hidden_width < 1) throw Error("hidden_width must be >= 1");
    if (hidden_layers < 1) throw Error("hidden_layers must be >= 1");
  }
};

inline const char* to_string(RotationFormat f) {
  switch (f) {
    case RotationFormat::matrix: return "matrix";
    case RotationFormat::quaternion: return "quaternion";
    case RotationFormat::axis_angle: return "axis_angle";
    case RotationFormat::euler_zyx: return "euler_zyx";
  }
  return "matrix";
}

inline RotationFormat rotation_format_from_string(const std::string& s) {
  if (s == "matrix") return RotationFormat::matrix;
  if (s == "quaternion") return RotationFormat::quaternion;
  if (s == "axis_angle") return RotationFormat::axis_angle;
  if (s == "euler_zyx") return RotationFormat::euler_zyx;
  throw Error("unknown rotation format \"" + s + "\"");
}

// Writes config.query_dim() features for `r` into `out`: optional raw values,
// then for each representation entry u and j = 0..m-1 the pair
// sin(2^j pi u), cos(2^j pi u).
inline void encode_query(const Rotation& r, const ModelConfig& config, double* out) {
  const std::vector<double> raw = convert(r, config.rotation_format);
  const int m = config.pe_frequencies;
  if (m == 0) {
    std::copy(raw.begin(), raw.end(), out);
    return;
  }
  if (config.include_raw) out = std::copy(raw.begin(), raw.end(), out);
  for (double u : raw) {
    double freq = kPi;
    for (int j = 0; j < m; ++j) {
      *out++ = std::sin(freq * u);
      *out++ = std::cos(freq * u);
      freq *= 2.0;
    }
  }
}

// Matrix-format encoding of a single rotation, without raw passthrough.
inline VectorXd positional_encode(const Rotation& r, int m) {
  ModelConfig config;
  config.pe_frequencies = m;
  VectorXd v(config.query_dim());
  encode_query(r, config, v.data());
  return v;
}

// One column per rotation.
inline MatrixXd encode_queries(std::span<const Rotation> rotations, const ModelConfig& config) {
  MatrixXd out(config.query_dim(), static_cast<Eigen::Index>(rotations.size()));
  for (std::size_t i = 0; i < rotations.size(); ++i) {
    encode_query(rotations[i], config, out.col(static_cast<Eigen::Index>(i)).data());
  }
  return out;
}

// Weights in declaration order (also the checkpoint order).
struct ModelParameters {
  MatrixXd w_descriptor;  // H x D
  MatrixXd w_query;       // H x Q
  VectorXd b_first;       // H
  std::vector<MatrixXd> w_hidden;  // hidden_layers - 1 matrices, H x H
  std::vector<VectorXd> b_hidden;
  RowVectorXd w_out;  // 1 x H
  double b_out = 0.0;

  static ModelParameters zeros(const ModelConfig& c) {
    ModelParameters p;
    const int h = c.hidden_width;
    p.w_descriptor = MatrixXd::Zero(h, c.descriptor_dim);
    p.w_query = MatrixXd::Zero(h, c.query_dim());
    p.b_first = VectorXd::Zero(h);
    for (int i = 1; i < c.hidden_layers; ++i) {
      p.w_hidden.push_back(MatrixXd::Zero(h, h));
      p.b_hidden.push_back(VectorXd::Zero(h));
    }
    p.w_out = RowVectorXd::Zero(h);
    p.b_out = 0.0;
    return p;
  }

  // f(tensor) for every tensor in declaration order; b_out is passed as a
  // 1x1 Eigen::Map.
  template <typename F>
  void for_each(F&& f) {
    f(w_descriptor);
    f(w_query);
    f(b_first);
    for (std::size_t i = 0; i < w_hidden.size(); ++i) {
      f(w_hidden[i]);
      f(b_hidden[i]);
    }
    f(w_out);
    Eigen::Map<Eigen::Matrix<double, 1, 1>> b(&b_out);
    f(b);
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<ModelParameters*>(this)->for_each([&](auto& t) { f(std::as_const(t)); });
  }

  // f(a_tensor, b_tensor) over matching tensors of two parameter sets.
  template <typename F>
  static void zip(ModelParameters& a, const ModelParameters& b, F&& f) {
    f(a.w_descriptor, b.w_descriptor);
    f(a.w_query, b.w_query);
    f(a.b_first, b.b_first);
    for (std::size_t i = 0; i < a.w_hidden.size(); ++i) {
      f(a.w_hidden[i], b.w_hidden[i]);
      f(a.b_hidden[i], b.b_hidden[i]);
    }
    f(a.w_out, b.w_out);
    Eigen::Map<Eigen::Matrix<double, 1, 1>> ab(&a.b_out);
    Eigen::Map<const Eigen::Matrix<double, 1, 1>> bb(&b.b_out);
    f(ab, bb);
  }

  std::size_t count() const {
    std::size_t n = 0;
    for_each([&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  double squared_norm() const {
    double s = 0.0;
    for_each([&](const auto& t) { s += t.squaredNorm(); });
    return s;
  }

  ModelParameters& operator*=(double k) {
    for_each([&](auto& t) { t *= k; });
    return *this;
  }

  ModelParameters& operator+=(const ModelParameters& other) {
    zip(*this, other, [](auto& a, const auto& b) { a += b; });
    return *this;
  }
};

class ImplicitDensityModel;

// Activations of one forward pass over a batch of (descriptor, query set)
// blocks, kept for back-propagation. Column c of every activation matrix
// belongs to block k with offsets[k] <= c < offsets[k + 1].
class BatchEvaluation {
 public:
  BatchEvaluation(const ImplicitDensityModel& model, std::span<const VectorXd> descriptors,
                  std::span<const MatrixXd> encoded_queries);

  const RowVectorXd& outputs() const noexcept { return outputs_; }
  const std::vector<Eigen::Index>& offsets() const noexcept { return offsets_; }

  // Gradient of sum_c weights[c] * outputs[c] with respect to every
  // parameter. `encoded_input_gradient`, when given, receives the gradient
  // with respect to the encoded query columns (Q x total).
  ModelParameters backward(const RowVectorXd& weights, MatrixXd* encoded_input_gradient = nullptr) const;

 private:
  const ImplicitDensityModel& model_;
  std::vector<VectorXd> descriptors_;
  MatrixXd encoded_;
  std::vector<Eigen::Index> offsets_;
  std::vector<MatrixXd> activations_;  // post-ReLU, one per dense ReLU layer
  RowVectorXd outputs_;
};

class ImplicitDensityModel {
 public:
  // Column block size for chunked evaluation over large query sets.
  static constexpr std::size_t kChunk = 4096;

  ImplicitDensityModel() : ImplicitDensityModel(ModelConfig{}) {}

  // He-uniform init for the ReLU layers, zero biases, zero output layer (so
  // the initial density is exactly uniform).
  explicit ImplicitDensityModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    params_ = ModelParameters::zeros(config_);
    Rng rng(config_.seed);
    auto he_uniform = [&rng](MatrixXd& w, int fan_in) {
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      const double limit = std::sqrt(6.0 / fan_in);
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = limit * dist(rng);
      }
    };
    const int first_fan_in = config_.descriptor_dim + config_.query_dim();
    he_uniform(params_.w_descriptor, first_fan_in);
    he_uniform(params_.w_query, first_fan_in);
    for (auto& w : params_.w_hidden) he_uniform(w, config_.hidden_width);
  }

  ImplicitDensityModel(const ModelConfig& config, ModelParameters params)
      : config_(config), params_(std::move(params)) {
    config_.validate();
    check_shapes();
  }

  const ModelConfig& config() const noexcept { return config_; }
  const ModelParameters& parameters() const noexcept { return params_; }
  ModelParameters& parameters() noexcept { return params_; }
  std::uint64_t step_count() const noexcept { return step_count_; }
  void set_step_count(std::uint64_t s) noexcept { step_count_ = s; }

  void check_shapes() const {
    const ModelParameters ref = ModelParameters::zeros(config_);
    bool ok = ref.w_hidden.size() == params_.w_hidden.size() &&
              ref.b_hidden.size() == params_.b_hidden.size();
    if (ok) {
      ModelParameters copy = params_;
      ModelParameters::zip(copy, ref, [&](auto& a, const auto& b) {
        ok = ok && a.rows() == b.rows() && a.cols() == b.cols();
      });
    }
    if (!ok) throw DimensionMismatch("model parameters do not match the model config");
  }

  void check_descriptor(Eigen::Index size) const {
    if (size != config_.descriptor_dim) {
      throw DimensionMismatch("descriptor has " + std::to_string(size) + " entries, model expects " +
                              std::to_string(config_.descriptor_dim));
    }
  }

  // W_d d + b_first: the per-descriptor half of the first layer.
  VectorXd descriptor_term(const VectorXd& descriptor) const {
    check_descriptor(descriptor.size());
    return params_.w_descriptor * descriptor + params_.b_first;
  }

  // Layers after the broadcast sum: ReLU, hidden layers, scalar head.
  RowVectorXd head(MatrixXd first_preactivation) const {
    MatrixXd h = first_preactivation.cwiseMax(0.0);
    for (std::size_t k = 0; k < params_.w_hidden.size(); ++k) {
      MatrixXd next = params_.w_hidden[k] * h;
      next.colwise() += params_.b_hidden[k];
      h = next.cwiseMax(0.0);
    }
    RowVectorXd out = params_.w_out * h;
    out.array() += params_.b_out;
    return out;
  }

  // f(d, q_j) for pre-encoded query columns.
  RowVectorXd forward_encoded(const VectorXd& descriptor, const MatrixXd& encoded) const {
    const VectorXd dterm = descriptor_term(descriptor);
    MatrixXd pre = params_.w_query * encoded;
    pre.colwise() += dterm;
    return head(std::move(pre));
  }

  // f(d, R_i) for every rotation; processed in fixed chunks of kChunk
  // queries, so results do not depend on `threads`.
  std::vector<double> forward(const VectorXd& descriptor, std::span<const Rotation> rotations,
                              unsigned threads = 1) const {
    const VectorXd dterm = descriptor_term(descriptor);
    std::vector<double> out(rotations.size());
    const std::size_t chunks = (rotations.size() + kChunk - 1) / kChunk;
    parallel_for(chunks, threads, [&](std::size_t cb, std::size_t ce) {
      for (std::size_t c = cb; c < ce; ++c) {
        const std::size_t begin = c * kChunk;
        const std::size_t end = std::min(rotations.size(), begin + kChunk);
        const MatrixXd enc = encode_queries(rotations.subspan(begin, end - begin), config_);
        MatrixXd pre = params_.w_query * enc;
        pre.colwise() += dterm;
        const RowVectorXd f = head(std::move(pre));
        std::copy(f.data(), f.data() + f.size(), out.begin() + static_cast<std::ptrdiff_t>(begin));
      }
    });
    return out;
  }

  double log_density(const VectorXd& descriptor, const Rotation& r) const {
    return forward(descriptor, std::span<const Rotation>(&r, 1)).front();
  }

  // N_B x N_Q log densities; the first layer is W_d d_i (+) W_q q_j formed
  // as a broadcast sum, never materializing the tiled input.
  MatrixXd forward_batch_efficient(const MatrixXd& descriptors, std::span<const Rotation> rotations) const {
    check_descriptor(descriptors.cols());
    const MatrixXd enc = encode_queries(rotations, config_);
    const MatrixXd query_term = params_.w_query * enc;
    const MatrixXd desc_term =
        (params_.w_descriptor * descriptors.transpose()).colwise() + params_.b_first;
    MatrixXd out(descriptors.rows(), enc.cols());
    for (Eigen::Index b = 0; b < descriptors.rows(); ++b) {
      MatrixXd pre = query_term;
      pre.colwise() += desc_term.col(b);
      out.row(b) = head(std::move(pre));
    }
    return out;
  }

  // Reference layout: tile [d_i; q_j] for all pairs and multiply by the full
  // first-layer matrix [W_d W_q].
  MatrixXd forward_batch_tiled(const MatrixXd& descriptors, std::span<const Rotation> rotations) const {
    check_descriptor(descriptors.cols());
    const MatrixXd enc = encode_queries(rotations, config_);
    const Eigen::Index nb = descriptors.rows(), nq = enc.cols();
    const Eigen::Index d = descriptors.cols(), q = enc.rows();
    MatrixXd w(config_.hidden_width, d + q);
    w << params_.w_descriptor, params_.w_query;
    MatrixXd tiled(d + q, nb * nq);
    for (Eigen::Index b = 0; b < nb; ++b) {
      for (Eigen::Index j = 0; j < nq; ++j) {
        tiled.col(b * nq + j) << descriptors.row(b).transpose(), enc.col(j);
      }
    }
    MatrixXd pre = w * tiled;
    pre.colwise() += params_.b_first;
    const RowVectorXd f = head(std::move(pre));
    MatrixXd out(nb, nq);
    for (Eigen::Index b = 0; b < nb; ++b) out.row(b) = f.segment(b * nq, nq);
    return out;
  }

  // d f / d M for the 3x3 matrix entries of `r`, chained through the
  // positional encoding. Only defined for the matrix query format.
  Matrix3d input_gradient(const VectorXd& descriptor, const Rotation& r) const {
    if (config_.rotation_format != RotationFormat::matrix) {
      throw Error("input_gradient requires the matrix rotation format");
    }
    const VectorXd enc = [&] {
      VectorXd v(config_.query_dim());
      encode_query(r, config_, v.data());
      return v;
    }();
    const std::vector<VectorXd> descs{descriptor};
    const std::vector<MatrixXd> queries{enc};
    const BatchEvaluation eval(*this, descs, queries);
    MatrixXd denc;
    eval.backward(RowVectorXd::Ones(1), &denc);

    const std::vector<double> raw = convert(r, RotationFormat::matrix);
    const int m = config_.pe_frequencies;
    Matrix3d grad = Matrix3d::Zero();
    Eigen::Index pos = 0;
    if (m == 0 || config_.include_raw) {
      for (int e = 0; e < 9; ++e) grad(e / 3, e % 3) += denc(pos++, 0);
    }
    if (m > 0) {
      for (int e = 0; e < 9; ++e) {
        double freq = kPi;
        for (int j = 0; j < m; ++j) {
          const double u = raw[static_cast<std::size_t>(e)];
          grad(e / 3, e % 3) += denc(pos, 0) * freq * std::cos(freq * u);
          grad(e / 3, e % 3) -= denc(pos + 1, 0) * freq * std::sin(freq * u);
          pos += 2;
          freq *= 2.0;
        }
      }
    }
    return grad;
  }

  // Upper bound on |f| from operator norms, for encoded queries of norm at
  // most `query_norm` and descriptors of norm at most `descriptor_norm`.
  double output_bound(double descriptor_norm, double query_norm) const {
    auto op_norm = [](const MatrixXd& w) {
      if (w.size() == 0) return 0.0;
      return Eigen::JacobiSVD<MatrixXd>(w).singularValues()(0);
    };
    double a = op_norm(params_.w_descriptor) * descriptor_norm + op_norm(params_.w_query) * query_norm +
               params_.b_first.norm();
    for (std::size_t k = 0; k < params_.w_hidden.size(); ++k) {
      a = op_norm(params_.w_hidden[k]) * a + params_.b_hidden[k].norm();
    }
    return params_.w_out.norm() * a + std::abs(params_.b_out);
  }

 private:
  ModelConfig config_;
  ModelParameters params_;
  std::uint64_t step_count_ = 0;
};

inline BatchEvaluation::BatchEvaluation(const ImplicitDensityModel& model,
                                        std::span<const VectorXd> descriptors,
                                        std::span<const MatrixXd> encoded_queries)
    : model_(model), descriptors_(descriptors.begin(), descriptors.end()) {
  if (descriptors.size() != encoded_queries.size()) {
    throw DimensionMismatch("one query block is required per descriptor");
  }
  const auto& p = model.parameters();
  const Eigen::Index qdim = model.config().query_dim();
  offsets_.push_back(0);
  for (const auto& e : encoded_queries) {
    if (e.rows() != qdim) throw DimensionMismatch("encoded queries have the wrong feature count");
    offsets_.push_back(offsets_.back() + e.cols());
  }
  encoded_.resize(qdim, offsets_.back());
  for (std::size_t k = 0; k < encoded_queries.size(); ++k) {
    encoded_.middleCols(offsets_[k], encoded_queries[k].cols()) = encoded_queries[k];
  }
  MatrixXd pre = p.w_query * encoded_;
  for (std::size_t k = 0; k < descriptors_.size(); ++k) {
    const VectorXd dterm = model.descriptor_term(descriptors_[k]);
    pre.middleCols(offsets_[k], offsets_[k + 1] - offsets_[k]).colwise() += dterm;
  }
  activations_.push_back(pre.cwiseMax(0.0));
  for (std::size_t k = 0; k < p.w_hidden.size(); ++k) {
    MatrixXd next = p.w_hidden[k] * activations_.back();
    next.colwise() += p.b_hidden[k];
    activations_.push_back(next.cwiseMax(0.0));
  }
  outputs_ = p.w_out * activations_.back();
  outputs_.array() += p.b_out;
}

inline ModelParameters BatchEvaluation::backward(const RowVectorXd& weights,
                                                 MatrixXd* encoded_input_gradient) const {
  if (weights.size() != outputs_.size()) throw DimensionMismatch("one weight per output is required");
  const auto& p = model_.parameters();
  ModelParameters g = ModelParameters::zeros(model_.config());
  const MatrixXd& last = activations_.back();
  g.w_out.noalias() = weights * last.transpose();
  g.b_out = weights.sum();
  MatrixXd delta = (p.w_out.transpose() * weights).cwiseProduct((last.array() > 0.0).cast<double>().matrix());
  for (std::size_t k = p.w_hidden.size(); k-- > 0;) {
    const MatrixXd& below = activations_[k];
    g.w_hidden[k].noalias() = delta * below.transpose();
    g.b_hidden[k] = delta.rowwise().sum();
    MatrixXd next = p.w_hidden[k].transpose() * delta;
    delta = next.cwiseProduct((below.array() > 0.0).cast<double>().matrix());
  }
  g.w_query.noalias() = delta * encoded_.transpose();
  g.b_first = delta.rowwise().sum();
  for (std::size_t k = 0; k < descriptors_.size(); ++k) {
    const VectorXd block_sum = delta.middleCols(offsets_[k], offsets_[k + 1] - offsets_[k]).rowwise().sum();
    g.w_descriptor.noalias() += block_sum * descriptors_[k].transpose();
  }
  if (encoded_input_gradient != nullptr) *encoded_input_gradient = p.w_query.transpose() * delta;
  return g;
}

// One block of a parameter-gradient request: f(descriptor, queries[i]) is
// weighted by loss_weights[i].
struct GradientBlock {
  VectorXd descriptor;
  std::vector<Rotation> queries;
  VectorXd loss_weights;
};

// Gradient of sum over blocks and queries of loss_weight * f.
inline ModelParameters parameter_gradients(const ImplicitDensityModel& model, std::span<const GradientBlock> batch) {
  std::vector<VectorXd> descs;
  std::vector<MatrixXd> encs;
  Eigen::Index total = 0;
  for (const auto& b : batch) {
    if (b.loss_weights.size() != static_cast<Eigen::Index>(b.queries.size())) {
      throw DimensionMismatch("loss_weights must have one entry per query");
    }
    descs.push_back(b.descriptor);
    encs.push_back(encode_queries(b.queries, model.config()));
    total += b.loss_weights.size();
  }
  const BatchEvaluation eval(model, descs, encs);
  RowVectorXd w(total);
  Eigen::Index pos = 0;
  for (const auto& b : batch) {
    w.segment(pos, b.loss_weights.size()) = b.loss_weights.transpose();
    pos += b.loss_weights.size();
  }
  return eval.backward(w);
}

// Checkpoint: "IPDF", u8 version, u32 metadata length, JSON metadata, then
// every tensor row-major as little-endian f32 in declaration order.
inline constexpr std::uint8_t kCheckpointVersion = 1;

inline nlohmann::json model_metadata(const ImplicitDensityModel& model) {
  const auto& c = model.config();
  return {{"descriptor_dim", c.descriptor_dim},
          {"m", c.pe_frequencies},
          {"hidden_width", c.hidden_width},
          {"hidden_layers", c.hidden_layers},
          {"seed", c.seed},
          {"step_count", model.step_count()},
          {"rotation_format", to_string(c.rotation_format)},
          {"include_raw", c.include_raw}};
}

// `extra` is merged into the metadata (e.g. the effective training config).
inline void save_checkpoint(std::ostream& out, const ImplicitDensityModel& model,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json meta = model_metadata(model);
  for (auto it = extra.begin(); it != extra.end(); ++it) {
    if (!meta.contains(it.key())) meta[it.key()] = it.value();
  }
  const std::string text = meta.dump();
  io::write_magic(out, "IPDF");
  io::write_le<std::uint8_t>(out, kCheckpointVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  model.parameters().for_each([&](const auto& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) io::write_le<float>(out, static_cast<float>(t(r, c)));
    }
  });
  if (!out) throw IoError("checkpoint write failed");
}

inline void save_checkpoint(const std::string& path, const ImplicitDensityModel& model,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  auto out = io::open_for_write(path);
  save_checkpoint(out, model, extra);
}

struct LoadedCheckpoint {
  ImplicitDensityModel model;
  nlohmann::json metadata;
};

inline LoadedCheckpoint load_checkpoint(std::istream& in, const std::string& what) {
  io::expect_magic(in, "IPDF", what);
  const auto version = io::read_le<std::uint8_t>(in);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " + what);
  }
  const auto length = io::read_le<std::uint32_t>(in);
  std::string text(length, '\0');
  in.read(text.data(), length);
  if (!in) throw FormatError("truncated checkpoint metadata in " + what);
  nlohmann::json meta;
  ModelConfig config;
  try {
    meta = nlohmann::json::parse(text);
    config.descriptor_dim = meta.at("descriptor_dim").get<int>();
    config.pe_frequencies = meta.at("m").get<int>();
    config.hidden_width = meta.at("hidden_width").get<int>();
    config.hidden_layers = meta.at("hidden_layers").get<int>();
    config.seed = meta.at("seed").get<std::uint64_t>();
    config.rotation_format = rotation_format_from_string(meta.value("rotation_format", "matrix"));
    config.include_raw = meta.value("include_raw", false);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint metadata in " + what + ": " + e.what());
  }
  ModelParameters params = ModelParameters::zeros(config);
  params.for_each([&](auto& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = io::read_le<float>(in);
    }
  });
  ImplicitDensityModel model(config, std::move(params));
  model.set_step_count(meta.value("step_count", std::uint64_t{0}));
  return {std::move(model), std::move(meta)};
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  auto in = io::open_for_read(path);
  return load_checkpoint(in, path);
}

}  // namespace ipdf
