#ifndef RAEC_POOLING_HPP_
#define RAEC_POOLING_HPP_

// The nine utterance-level aggregation methods. Four pool the per-frame hidden
// features before the classifier head; five pool the per-frame predictions.

#include <raec/common.hpp>

#include <array>
#include <optional>
#include <span>

namespace raec {

enum class PoolingKind : std::uint8_t {
  FeatLastFrame,
  FeatAttention,
  FeatMax,
  FeatAvg,
  PredMax,
  PredAvg,
  PredLinSoftmax,
  PredExpSoftmax,
  PredAttention,
};

inline constexpr std::array<PoolingKind, 9> kAllPoolingKinds = {
    PoolingKind::FeatLastFrame, PoolingKind::FeatAttention, PoolingKind::FeatMax,
    PoolingKind::FeatAvg,       PoolingKind::PredMax,       PoolingKind::PredAvg,
    PoolingKind::PredLinSoftmax, PoolingKind::PredExpSoftmax, PoolingKind::PredAttention,
};

inline constexpr std::array<std::string_view, 9> kPoolingNames = {
    "LastFrame", "Attention", "MaxPooling", "AvgPooling", "Y.MaxPooling",
    "Y.AvgPooling", "Y.LinSoftmax", "Y.ExpSoftmax", "Y.Attention",
};

inline std::string_view name(PoolingKind kind) { return kPoolingNames[static_cast<std::size_t>(kind)]; }

inline PoolingKind parse_pooling_kind(std::string_view s) {
  for (std::size_t i = 0; i < kPoolingNames.size(); ++i)
    if (kPoolingNames[i] == s) return kAllPoolingKinds[i];
  std::string valid;
  for (auto n : kPoolingNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
  throw ValidationError("unknown pooling kind '" + std::string(s) + "' (valid: " + valid + ")");
}

inline bool is_feature_side(PoolingKind kind) { return static_cast<std::uint8_t>(kind) <= static_cast<std::uint8_t>(PoolingKind::FeatAvg); }

inline bool is_max_kind(PoolingKind kind) { return kind == PoolingKind::FeatMax || kind == PoolingKind::PredMax; }

/// N x T hidden sequence, possibly a strided view into a batch.
using HiddenView = Eigen::Ref<const Eigen::MatrixXd, 0, Eigen::OuterStride<>>;
using HiddenGradView = Eigen::Ref<Eigen::MatrixXd, 0, Eigen::OuterStride<>>;

/// The final sigmoid unit. With FeatAttention the same weights also score frames.
struct DenseHead {
  Eigen::Map<const Eigen::VectorXd> w;
  double b;
};

/// Dedicated per-frame scorer for PredAttention; z_t = w . h_t.
struct AttentionHead {
  Eigen::Map<const Eigen::VectorXd> w;
};

inline constexpr double kAttentionClamp = 30.0;
inline constexpr double kLinSoftmaxGuard = 1e-12;

namespace detail {

inline void require_frames(Eigen::Index t) {
  if (t < 1) throw ValidationError("pooling needs at least one frame");
}

inline void require_side(PoolingKind kind, bool feature_side) {
  if (is_feature_side(kind) != feature_side)
    throw ValidationError("pooling kind " + std::string(name(kind)) + " is not a " + (feature_side ? "feature" : "prediction") + "-side kind");
}

inline Eigen::Index first_argmax(std::span<const double> y) {
  Eigen::Index best = 0;
  for (std::size_t t = 1; t < y.size(); ++t)
    if (y[t] > y[static_cast<std::size_t>(best)]) best = static_cast<Eigen::Index>(t);
  return best;
}

}  // namespace detail

/// a_t = softmax_t(w . h_t + b) using the shared head.
inline Eigen::VectorXd attention_weights_feature(const HiddenView& H, const DenseHead& head) {
  detail::require_frames(H.cols());
  if (head.w.size() != H.rows()) throw ValidationError("attention head size does not match hidden size");
  Eigen::VectorXd s = (H.transpose() * head.w).array() + head.b;
  s.array() -= s.maxCoeff();
  s = s.array().exp().matrix();
  return s / s.sum();
}

/// w_t = exp(clamp(z_t, -30, 30)).
inline Eigen::VectorXd attention_weights_prediction(const HiddenView& H, const AttentionHead& head) {
  detail::require_frames(H.cols());
  if (head.w.size() != H.rows()) throw ValidationError("attention head size does not match hidden size");
  Eigen::VectorXd z = H.transpose() * head.w;
  return z.array().max(-kAttentionClamp).min(kAttentionClamp).exp().matrix();
}

inline Eigen::VectorXd pool_feature(PoolingKind kind, const HiddenView& H, const DenseHead& head) {
  detail::require_side(kind, true);
  detail::require_frames(H.cols());
  switch (kind) {
    case PoolingKind::FeatLastFrame:
      return H.col(H.cols() - 1);
    case PoolingKind::FeatMax:
      return H.rowwise().maxCoeff();
    case PoolingKind::FeatAvg:
      return H.rowwise().mean();
    case PoolingKind::FeatAttention:
      return H * attention_weights_feature(H, head);
    default:
      break;
  }
  throw ValidationError("unreachable pooling kind");
}

/// Accumulates dL/dH and, for FeatAttention, the frame-scoring share of the head gradient.
inline void pool_feature_backward(PoolingKind kind, const HiddenView& H, const DenseHead& head, const Eigen::VectorXd& d_pooled,
                                  HiddenGradView dH, Eigen::Ref<Eigen::VectorXd> head_w_grad, double& head_b_grad) {
  detail::require_side(kind, true);
  const Eigen::Index T = H.cols();
  detail::require_frames(T);
  switch (kind) {
    case PoolingKind::FeatLastFrame:
      dH.col(T - 1) += d_pooled;
      return;
    case PoolingKind::FeatMax:
      for (Eigen::Index n = 0; n < H.rows(); ++n) {
        Eigen::Index best = 0;
        for (Eigen::Index t = 1; t < T; ++t)
          if (H(n, t) > H(n, best)) best = t;
        dH(n, best) += d_pooled(n);
      }
      return;
    case PoolingKind::FeatAvg:
      dH.colwise() += d_pooled / static_cast<double>(T);
      return;
    case PoolingKind::FeatAttention: {
      const Eigen::VectorXd a = attention_weights_feature(H, head);
      // h = sum_t a_t h_t
      const Eigen::VectorXd da = H.transpose() * d_pooled;
      const double mean_da = a.dot(da);
      const Eigen::VectorXd ds = a.array() * (da.array() - mean_da);
      dH += d_pooled * a.transpose();
      dH += head.w * ds.transpose();
      head_w_grad += H * ds;
      head_b_grad += ds.sum();
      return;
    }
    default:
      break;
  }
}

/// Pools per-frame predictions. H and the attention head are used only by PredAttention.
inline double pool_prediction(PoolingKind kind, std::span<const double> y, const HiddenView* H = nullptr,
                              const AttentionHead* att = nullptr) {
  detail::require_side(kind, false);
  detail::require_frames(static_cast<Eigen::Index>(y.size()));
  const double T = static_cast<double>(y.size());
  switch (kind) {
    case PoolingKind::PredMax:
      return y[static_cast<std::size_t>(detail::first_argmax(y))];
    case PoolingKind::PredAvg: {
      double s = 0.0;
      for (double v : y) s += v;
      return s / T;
    }
    case PoolingKind::PredLinSoftmax: {
      double s1 = 0.0, s2 = 0.0;
      for (double v : y) {
        s1 += v;
        s2 += v * v;
      }
      return s2 / std::max(s1, kLinSoftmaxGuard);
    }
    case PoolingKind::PredExpSoftmax: {
      double num = 0.0, den = 0.0;
      for (double v : y) {
        const double e = std::exp(v);
        num += v * e;
        den += e;
      }
      return num / den;
    }
    case PoolingKind::PredAttention: {
      if (H == nullptr || att == nullptr) throw ValidationError("Y.Attention pooling needs the hidden sequence and its attention head");
      if (H->cols() != static_cast<Eigen::Index>(y.size())) throw ValidationError("hidden sequence and predictions differ in length");
      const Eigen::VectorXd w = attention_weights_prediction(*H, *att);
      double num = 0.0, den = 0.0;
      for (std::size_t t = 0; t < y.size(); ++t) {
        num += y[t] * w(static_cast<Eigen::Index>(t));
        den += w(static_cast<Eigen::Index>(t));
      }
      return num / den;
    }
    default:
      break;
  }
  throw ValidationError("unreachable pooling kind");
}

/// Writes dL/dy_t for every frame given dL/dy. For PredAttention also accumulates
/// the score path into dH and the attention head gradient.
inline void pool_prediction_backward(PoolingKind kind, std::span<const double> y, double dy, std::span<double> d_frames,
                                     const HiddenView* H = nullptr, const AttentionHead* att = nullptr,
                                     HiddenGradView* dH = nullptr, Eigen::VectorXd* att_grad = nullptr) {
  detail::require_side(kind, false);
  detail::require_frames(static_cast<Eigen::Index>(y.size()));
  if (d_frames.size() != y.size()) throw ValidationError("gradient buffer length mismatch");
  const std::size_t T = y.size();
  switch (kind) {
    case PoolingKind::PredMax: {
      std::fill(d_frames.begin(), d_frames.end(), 0.0);
      d_frames[static_cast<std::size_t>(detail::first_argmax(y))] = dy;
      return;
    }
    case PoolingKind::PredAvg:
      std::fill(d_frames.begin(), d_frames.end(), dy / static_cast<double>(T));
      return;
    case PoolingKind::PredLinSoftmax: {
      double s1 = 0.0, s2 = 0.0;
      for (double v : y) {
        s1 += v;
        s2 += v * v;
      }
      if (s1 < kLinSoftmaxGuard) {  // floored denominator is constant
        for (std::size_t t = 0; t < T; ++t) d_frames[t] = dy * 2.0 * y[t] / kLinSoftmaxGuard;
        return;
      }
      for (std::size_t t = 0; t < T; ++t) d_frames[t] = dy * (2.0 * y[t] / s1 - s2 / (s1 * s1));
      return;
    }
    case PoolingKind::PredExpSoftmax: {
      double num = 0.0, den = 0.0;
      for (double v : y) {
        const double e = std::exp(v);
        num += v * e;
        den += e;
      }
      const double pooled = num / den;
      for (std::size_t t = 0; t < T; ++t) d_frames[t] = dy * std::exp(y[t]) * (1.0 + y[t] - pooled) / den;
      return;
    }
    case PoolingKind::PredAttention: {
      if (H == nullptr || att == nullptr || dH == nullptr || att_grad == nullptr)
        throw ValidationError("Y.Attention backward needs the hidden sequence, head and gradient buffers");
      const Eigen::VectorXd z = H->transpose() * att->w;
      const Eigen::VectorXd w = z.array().max(-kAttentionClamp).min(kAttentionClamp).exp().matrix();
      const double wsum = w.sum();
      double num = 0.0;
      for (std::size_t t = 0; t < T; ++t) num += y[t] * w(static_cast<Eigen::Index>(t));
      const double pooled = num / wsum;
      Eigen::VectorXd dz(static_cast<Eigen::Index>(T));
      for (std::size_t t = 0; t < T; ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        d_frames[t] = dy * w(i) / wsum;
        const bool clamped = z(i) <= -kAttentionClamp || z(i) >= kAttentionClamp;
        dz(i) = clamped ? 0.0 : dy * (y[t] - pooled) / wsum * w(i);
      }
      *dH += att->w * dz.transpose();
      *att_grad += (*H) * dz;
      return;
    }
    default:
      break;
  }
}

}  // namespace raec

#endif  // RAEC_POOLING_HPP_
