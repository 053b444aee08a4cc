#ifndef RAEC_MODEL_HPP_
#define RAEC_MODEL_HPP_

// LSTM stack + pooling + sigmoid head, with batched forward and backward passes.

#include <raec/lstm.hpp>
#include <raec/pooling.hpp>

#include <array>

namespace raec {

enum class Direction : std::uint8_t { Uni, Bi };

inline std::string_view name(Direction d) { return d == Direction::Uni ? "uni" : "bi"; }

inline Direction parse_direction(std::string_view s) {
  if (s == "uni") return Direction::Uni;
  if (s == "bi") return Direction::Bi;
  throw ValidationError("direction must be 'uni' or 'bi', got '" + std::string(s) + "'");
}

struct ModelConfig {
  int n_layers = 1;
  int units = 32;  // per layer, summed over directions
  Direction direction = Direction::Uni;
  PoolingKind pooling = PoolingKind::PredMax;
  int input_dim = 64;

  int directions() const { return direction == Direction::Bi ? 2 : 1; }
  int units_per_direction() const { return units / directions(); }

  void validate() const {
    if (n_layers != 1 && n_layers != 2) throw ValidationError("n_layers must be 1 or 2, got " + std::to_string(n_layers));
    if (units < 1) throw ValidationError("units must be positive");
    if (direction == Direction::Bi && units % 2 != 0) throw ValidationError("bidirectional models need an even unit count");
    if (input_dim < 1) throw ValidationError("input_dim must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Global per-dimension standardisation x' = (x - mean) * scale, fitted on training data.
struct FeatureNormalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

inline std::string lstm_param_name(int layer, int dir, std::string_view what) {
  return "lstm." + std::to_string(layer) + (dir == 0 ? ".fwd." : ".bwd.") + std::string(what);
}

class Model {
 public:
  ModelConfig config;
  ParamSet params;
  FeatureNormalizer norm;

  Model() = default;

  /// Builds the parameter set. Input weights and dense heads are Glorot-uniform,
  /// recurrent blocks orthogonal per gate, biases zero except forget = 1.
  static Model initialize(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.config = cfg;
    Rng rng(seed);
    const auto n = static_cast<std::size_t>(cfg.units_per_direction());
    for (int layer = 0; layer < cfg.n_layers; ++layer) {
      const auto d = static_cast<std::size_t>(layer == 0 ? cfg.input_dim : cfg.units);
      for (int dir = 0; dir < cfg.directions(); ++dir) {
        auto& W = m.params.add(lstm_param_name(layer, dir, "W"), {4 * n, d});
        init_uniform(W, uniform_glorot_limit(d, 4 * n), rng);
        auto& U = m.params.add(lstm_param_name(layer, dir, "U"), {4 * n, n});
        auto Um = U.matrix();
        for (Eigen::Index g = 0; g < 4; ++g)
          Um.middleRows(g * static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) = random_orthogonal(static_cast<Eigen::Index>(n), rng);
        auto& b = m.params.add(lstm_param_name(layer, dir, "b"), {4 * n});
        b.vector().segment(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)).setOnes();
      }
    }
    const auto total = static_cast<std::size_t>(cfg.units);
    auto& hw = m.params.add("head.w", {total});
    init_uniform(hw, uniform_glorot_limit(total, 1), rng);
    m.params.add("head.b", {1});
    if (cfg.pooling == PoolingKind::PredAttention) {
      auto& aw = m.params.add("attention.w", {total});
      init_uniform(aw, uniform_glorot_limit(total, 1), rng);
    }
    m.norm.mean = Eigen::VectorXd::Zero(cfg.input_dim);
    m.norm.scale = Eigen::VectorXd::Ones(cfg.input_dim);
    return m;
  }

  LstmWeights lstm(int layer, int dir) const {
    return lstm_weights(params.at(lstm_param_name(layer, dir, "W")), params.at(lstm_param_name(layer, dir, "U")),
                        params.at(lstm_param_name(layer, dir, "b")));
  }

  DenseHead head() const { return {params.at("head.w").vector(), params.at("head.b").values[0]}; }

  AttentionHead attention() const { return {params.at("attention.w").vector()}; }
};

/// y_t = sigmoid(w . h_t + b) for every frame.
inline std::vector<double> frame_predictions(const HiddenView& H, const DenseHead& head) {
  if (head.w.size() != H.rows()) throw ValidationError("head size " + std::to_string(head.w.size()) + " does not match hidden size " + std::to_string(H.rows()));
  const Eigen::VectorXd z = (H.transpose() * head.w).array() + head.b;
  std::vector<double> y(static_cast<std::size_t>(z.size()));
  for (Eigen::Index t = 0; t < z.size(); ++t) y[static_cast<std::size_t>(t)] = sigmoid(z(t));
  return y;
}

inline double utterance_from_feature(const Eigen::VectorXd& h, const DenseHead& head) {
  if (head.w.size() != h.size()) throw ValidationError("head size " + std::to_string(head.w.size()) + " does not match feature size " + std::to_string(h.size()));
  return sigmoid(head.w.dot(h) + head.b);
}

/// Activations of one batch of equal-length utterances.
struct BatchCache {
  Eigen::Index steps = 0;
  Eigen::Index batch = 0;
  std::vector<Eigen::MatrixXd> layer_inputs;             // per layer, d x T*B
  std::vector<std::array<LstmLayerCache, 2>> layers;     // per layer, per direction
  Eigen::MatrixXd hidden;                                // top layer output, N x T*B
  std::vector<Eigen::VectorXd> pooled;                   // feature-side pooled vectors
  std::vector<std::vector<double>> frame_y;              // prediction-side frame scores
  std::vector<double> output;                            // utterance-level predictions

  HiddenView utterance_hidden(Eigen::Index b) const {
    return Eigen::Map<const Eigen::MatrixXd, 0, Eigen::OuterStride<>>(hidden.data() + b * hidden.rows(), hidden.rows(), steps,
                                                                       Eigen::OuterStride<>(hidden.rows() * batch));
  }
};

/// Normalised, time-major input matrix for a batch.
inline Eigen::MatrixXd batch_input(const Model& model, std::span<const FeatureMatrix* const> batch) {
  if (batch.empty()) throw ValidationError("empty batch");
  const Eigen::Index T = batch.front()->frames();
  const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index d = model.config.input_dim;
  if (T < 1) throw ValidationError("utterance has no frames");
  Eigen::MatrixXd X(d, T * B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& fm = *batch[static_cast<std::size_t>(b)];
    if (fm.dims() != d) throw ValidationError("feature dimension " + std::to_string(fm.dims()) + " does not match model input " + std::to_string(d));
    if (fm.frames() != T) throw ValidationError("batch mixes utterance lengths");
    for (Eigen::Index t = 0; t < T; ++t)
      X.col(t * B + b) = ((fm.values.row(t).transpose() - model.norm.mean).array() * model.norm.scale.array()).matrix();
  }
  return X;
}

inline std::vector<double> forward(const Model& model, std::span<const FeatureMatrix* const> batch, BatchCache& cache) {
  const auto& cfg = model.config;
  cache.batch = static_cast<Eigen::Index>(batch.size());
  cache.layer_inputs.resize(static_cast<std::size_t>(cfg.n_layers));
  cache.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  cache.layer_inputs[0] = batch_input(model, batch);
  cache.steps = cache.layer_inputs[0].cols() / cache.batch;
  const auto T = cache.steps, B = cache.batch;

  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    auto& lc = cache.layers[static_cast<std::size_t>(layer)];
    const auto& X = cache.layer_inputs[static_cast<std::size_t>(layer)];
    for (int dir = 0; dir < cfg.directions(); ++dir) lstm_layer_forward(model.lstm(layer, dir), X, T, B, dir == 1, lc[static_cast<std::size_t>(dir)]);
    Eigen::MatrixXd out;
    if (cfg.directions() == 1) {
      out = lc[0].h;
    } else {
      out.resize(cfg.units, T * B);
      out << lc[0].h, lc[1].h;
    }
    if (layer + 1 < cfg.n_layers) {
      cache.layer_inputs[static_cast<std::size_t>(layer) + 1] = std::move(out);
    } else {
      cache.hidden = std::move(out);
    }
  }

  const DenseHead head = model.head();
  cache.output.assign(batch.size(), 0.0);
  cache.pooled.clear();
  cache.frame_y.clear();
  for (Eigen::Index b = 0; b < B; ++b) {
    const HiddenView H = cache.utterance_hidden(b);
    if (is_feature_side(cfg.pooling)) {
      cache.pooled.push_back(pool_feature(cfg.pooling, H, head));
      cache.output[static_cast<std::size_t>(b)] = utterance_from_feature(cache.pooled.back(), head);
    } else {
      cache.frame_y.push_back(frame_predictions(H, head));
      if (cfg.pooling == PoolingKind::PredAttention) {
        const AttentionHead att = model.attention();
        cache.output[static_cast<std::size_t>(b)] = pool_prediction(cfg.pooling, cache.frame_y.back(), &H, &att);
      } else {
        cache.output[static_cast<std::size_t>(b)] = pool_prediction(cfg.pooling, cache.frame_y.back());
      }
    }
  }
  return cache.output;
}

inline std::vector<double> forward(const Model& model, std::span<const FeatureMatrix* const> batch) {
  BatchCache cache;
  return forward(model, batch, cache);
}

inline double predict(const Model& model, const FeatureMatrix& fm) {
  const FeatureMatrix* one[] = {&fm};
  return forward(model, one).front();
}

/// Accumulates parameter gradients given dL/dy for each utterance of the batch.
inline void backward(const Model& model, const BatchCache& cache, std::span<const double> d_output, GradientMap& grads) {
  const auto& cfg = model.config;
  const auto T = cache.steps, B = cache.batch;
  if (static_cast<Eigen::Index>(d_output.size()) != B) throw ValidationError("backward: gradient count does not match batch");
  const DenseHead head = model.head();
  auto g_head_w = grads.vector("head.w");
  double& g_head_b = grads["head.b"][0];

  Eigen::MatrixXd dH = Eigen::MatrixXd::Zero(cfg.units, T * B);
  std::vector<double> d_frames(static_cast<std::size_t>(T));
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    const HiddenView H = cache.utterance_hidden(b);
    Eigen::Map<Eigen::MatrixXd, 0, Eigen::OuterStride<>> dH_map(dH.data() + b * dH.rows(), dH.rows(), T, Eigen::OuterStride<>(dH.rows() * B));
    HiddenGradView dHb(dH_map);
    const double dy = d_output[ub];
    if (is_feature_side(cfg.pooling)) {
      const double y = cache.output[ub];
      const double dz = dy * y * (1.0 - y);
      const auto& h = cache.pooled[ub];
      g_head_w += dz * h;
      g_head_b += dz;
      const Eigen::VectorXd d_pooled = dz * head.w;
      pool_feature_backward(cfg.pooling, H, head, d_pooled, dHb, g_head_w, g_head_b);
    } else {
      const auto& y = cache.frame_y[ub];
      if (cfg.pooling == PoolingKind::PredAttention) {
        const AttentionHead att = model.attention();
        Eigen::VectorXd g_att = Eigen::VectorXd::Zero(cfg.units);
        pool_prediction_backward(cfg.pooling, y, dy, d_frames, &H, &att, &dHb, &g_att);
        grads.vector("attention.w") += g_att;
      } else {
        pool_prediction_backward(cfg.pooling, y, dy, d_frames);
      }
      Eigen::VectorXd dz(T);
      for (Eigen::Index t = 0; t < T; ++t) {
        const auto ut = static_cast<std::size_t>(t);
        dz(t) = d_frames[ut] * y[ut] * (1.0 - y[ut]);
      }
      g_head_w += H * dz;
      g_head_b += dz.sum();
      dHb += head.w * dz.transpose();
    }
  }

  const auto n = cfg.units_per_direction();
  for (int layer = cfg.n_layers - 1; layer >= 0; --layer) {
    const auto ul = static_cast<std::size_t>(layer);
    const auto& X = cache.layer_inputs[ul];
    Eigen::MatrixXd dX_total;
    for (int dir = 0; dir < cfg.directions(); ++dir) {
      const auto& Wp = model.params.at(lstm_param_name(layer, dir, "W"));
      const auto& Up = model.params.at(lstm_param_name(layer, dir, "U"));
      Eigen::MatrixXd dh_dir = dH.middleRows(dir * n, n);
      Eigen::MatrixXd dX;
      lstm_layer_backward(model.lstm(layer, dir), X, cache.layers[ul][static_cast<std::size_t>(dir)], dir == 1, dh_dir, grads.matrix(Wp),
                          grads.matrix(Up), grads.vector(lstm_param_name(layer, dir, "b")), layer > 0 ? &dX : nullptr);
      if (layer > 0) {
        if (dir == 0) {
          dX_total = std::move(dX);
        } else {
          dX_total += dX;
        }
      }
    }
    if (layer > 0) dH = std::move(dX_total);
  }
}

struct BatchLoss {
  double loss = 0.0;  // mean BCE over the batch
  std::vector<double> predictions;
};

/// Mean BCE over the batch; when grads is non-null, adds the batch-mean gradient scaled by weight.
inline BatchLoss loss_and_gradient(const Model& model, std::span<const FeatureMatrix* const> batch, std::span<const int> labels,
                                   GradientMap* grads, double weight = 1.0) {
  BatchCache cache;
  BatchLoss out;
  out.predictions = forward(model, batch, cache);
  out.loss = bce_loss(out.predictions, labels);
  if (grads != nullptr) {
    std::vector<double> d(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) d[i] = weight * bce_grad(out.predictions[i], labels[i]) / static_cast<double>(batch.size());
    backward(model, cache, d, *grads);
  }
  return out;
}

/// Smallest gap between the largest and second-largest candidate of every max
/// operation in the forward pass; infinity for kinds without a max.
inline double max_pooling_margin(const Model& model, std::span<const FeatureMatrix* const> batch) {
  const auto kind = model.config.pooling;
  if (!is_max_kind(kind)) return std::numeric_limits<double>::infinity();
  BatchCache cache;
  forward(model, batch, cache);
  double margin = std::numeric_limits<double>::infinity();
  auto gap = [](auto&& row) {
    double top = -std::numeric_limits<double>::infinity(), second = top;
    for (Eigen::Index t = 0; t < row.size(); ++t) {
      const double v = row(t);
      if (v > top) {
        second = top;
        top = v;
      } else if (v > second) {
        second = v;
      }
    }
    return top - second;
  };
  for (Eigen::Index b = 0; b < cache.batch; ++b) {
    if (kind == PoolingKind::FeatMax) {
      const HiddenView H = cache.utterance_hidden(b);
      for (Eigen::Index n = 0; n < H.rows(); ++n) margin = std::min(margin, gap(H.row(n)));
    } else {
      const auto& y = cache.frame_y[static_cast<std::size_t>(b)];
      margin = std::min(margin, gap(Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()))));
    }
  }
  return margin;
}

}  // namespace raec

#endif  // RAEC_MODEL_HPP_
