#ifndef RAEC_LSTM_HPP_
#define RAEC_LSTM_HPP_

// LSTM cell and sequence layers. Gate blocks are stacked in the order
// input, forget, output, candidate:
//   i, f, o = sigmoid(.), g = tanh(.), c_t = f*c_{t-1} + i*g, h_t = o*tanh(c_t)
//
// Sequences are column-major d x T matrices. Batched layers use time-major
// column order: column t*B + b holds frame t of utterance b.

#include <raec/dsp.hpp>
#include <raec/nn.hpp>

namespace raec {

/// Non-owning view of one direction's weights: W (4N x d), U (4N x N), b (4N).
struct LstmWeights {
  Eigen::Map<const RowMatrix> W;
  Eigen::Map<const RowMatrix> U;
  Eigen::Map<const Eigen::VectorXd> b;

  Eigen::Index units() const { return U.cols(); }
  Eigen::Index input_dim() const { return W.cols(); }

  void validate() const {
    const auto n = U.cols();
    if (U.rows() != 4 * n || W.rows() != 4 * n || b.size() != 4 * n)
      throw ValidationError("LSTM weights do not conform: W " + shape_string(W.rows(), W.cols()) + ", U " +
                            shape_string(U.rows(), U.cols()) + ", b " + std::to_string(b.size()));
  }
};

/// Owning LSTM parameters, handy for tests and standalone use.
struct LstmParams {
  RowMatrix W;
  RowMatrix U;
  Eigen::VectorXd b;

  static LstmParams zeros(Eigen::Index units, Eigen::Index input_dim) {
    return {RowMatrix::Zero(4 * units, input_dim), RowMatrix::Zero(4 * units, units), Eigen::VectorXd::Zero(4 * units)};
  }

  LstmWeights view() const {
    return {Eigen::Map<const RowMatrix>(W.data(), W.rows(), W.cols()), Eigen::Map<const RowMatrix>(U.data(), U.rows(), U.cols()),
            Eigen::Map<const Eigen::VectorXd>(b.data(), b.size())};
  }
};

inline LstmWeights lstm_weights(const ParamTensor& W, const ParamTensor& U, const ParamTensor& b) {
  LstmWeights w{W.matrix(), U.matrix(), b.vector()};
  w.validate();
  return w;
}

struct CellState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;
};

namespace detail {

template <typename Block>
void activate_gates(Block&& z, Eigen::Index n) {
  auto ifo = z.topRows(3 * n);
  ifo = (1.0 + (-ifo.array()).exp()).inverse().matrix();
  auto g = z.bottomRows(n);
  g = g.array().tanh().matrix();
}

}  // namespace detail

inline CellState lstm_cell(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev, const LstmWeights& w) {
  w.validate();
  const auto n = w.units();
  if (x.size() != w.input_dim() || h_prev.size() != n || c_prev.size() != n)
    throw ValidationError("lstm_cell: input " + std::to_string(x.size()) + ", state " + std::to_string(h_prev.size()) + "/" +
                          std::to_string(c_prev.size()) + " do not match weights (units " + std::to_string(n) + ", input " +
                          std::to_string(w.input_dim()) + ")");
  Eigen::VectorXd z = w.W * x + w.U * h_prev + w.b;
  detail::activate_gates(z, n);
  CellState s;
  s.c = z.segment(n, n).cwiseProduct(c_prev) + z.head(n).cwiseProduct(z.tail(n));
  s.h = z.segment(2 * n, n).cwiseProduct(s.c.array().tanh().matrix());
  return s;
}

/// Per-direction activations kept for the backward pass.
struct LstmLayerCache {
  Eigen::Index steps = 0;
  Eigen::Index batch = 0;
  Eigen::MatrixXd gates;   // 4N x T*B, post-activation
  Eigen::MatrixXd c;       // N x T*B
  Eigen::MatrixXd tanh_c;  // N x T*B
  Eigen::MatrixXd h;       // N x T*B
};

/// Runs one direction over a time-major batch. With reverse = true the
/// recurrence starts at the last frame; outputs stay at their own time index.
inline void lstm_layer_forward(const LstmWeights& w, const Eigen::MatrixXd& X, Eigen::Index steps, Eigen::Index batch, bool reverse,
                               LstmLayerCache& cache) {
  w.validate();
  const auto n = w.units();
  if (X.rows() != w.input_dim() || X.cols() != steps * batch)
    throw ValidationError("LSTM input " + shape_string(X.rows(), X.cols()) + " does not match input dim " + std::to_string(w.input_dim()) +
                          " with " + std::to_string(steps) + " steps x " + std::to_string(batch) + " utterances");
  cache.steps = steps;
  cache.batch = batch;
  cache.gates.noalias() = w.W * X;
  cache.gates.colwise() += w.b;
  cache.c.resize(n, steps * batch);
  cache.tanh_c.resize(n, steps * batch);
  cache.h.resize(n, steps * batch);

  for (Eigen::Index s = 0; s < steps; ++s) {
    const Eigen::Index t = reverse ? steps - 1 - s : s;
    const Eigen::Index prev = reverse ? t + 1 : t - 1;
    auto z = cache.gates.middleCols(t * batch, batch);
    if (s > 0) z.noalias() += w.U * cache.h.middleCols(prev * batch, batch);
    detail::activate_gates(z, n);
    auto c = cache.c.middleCols(t * batch, batch);
    if (s > 0) {
      c.array() = z.middleRows(n, n).array() * cache.c.middleCols(prev * batch, batch).array() +
                  z.topRows(n).array() * z.bottomRows(n).array();
    } else {
      c.array() = z.topRows(n).array() * z.bottomRows(n).array();
    }
    auto tc = cache.tanh_c.middleCols(t * batch, batch);
    tc = c.array().tanh().matrix();
    cache.h.middleCols(t * batch, batch).array() = z.middleRows(2 * n, n).array() * tc.array();
  }
}

/// Backpropagation through time for one direction. Accumulates into the
/// weight gradients; writes dL/dX when dX is non-null.
inline void lstm_layer_backward(const LstmWeights& w, const Eigen::MatrixXd& X, const LstmLayerCache& cache, bool reverse,
                                const Eigen::MatrixXd& dH, Eigen::Map<RowMatrix> dW, Eigen::Map<RowMatrix> dU,
                                Eigen::Map<Eigen::VectorXd> db, Eigen::MatrixXd* dX) {
  const auto n = w.units();
  const auto steps = cache.steps;
  const auto batch = cache.batch;
  Eigen::MatrixXd dpre(4 * n, steps * batch);
  Eigen::MatrixXd dh_rec = Eigen::MatrixXd::Zero(n, batch);
  Eigen::MatrixXd dc_carry = Eigen::MatrixXd::Zero(n, batch);
  Eigen::MatrixXd dh(n, batch), dc(n, batch);

  for (Eigen::Index s = steps - 1; s >= 0; --s) {
    const Eigen::Index t = reverse ? steps - 1 - s : s;
    const Eigen::Index prev = reverse ? t + 1 : t - 1;
    const auto z = cache.gates.middleCols(t * batch, batch);
    const auto i = z.topRows(n).array();
    const auto f = z.middleRows(n, n).array();
    const auto o = z.middleRows(2 * n, n).array();
    const auto g = z.bottomRows(n).array();
    const auto tc = cache.tanh_c.middleCols(t * batch, batch).array();

    dh = dH.middleCols(t * batch, batch) + dh_rec;
    dc.array() = dh.array() * o * (1.0 - tc.square()) + dc_carry.array();

    auto d = dpre.middleCols(t * batch, batch);
    d.middleRows(2 * n, n).array() = dh.array() * tc * o * (1.0 - o);
    d.topRows(n).array() = dc.array() * g * i * (1.0 - i);
    d.bottomRows(n).array() = dc.array() * i * (1.0 - g.square());
    if (s > 0) {
      d.middleRows(n, n).array() = dc.array() * cache.c.middleCols(prev * batch, batch).array() * f * (1.0 - f);
    } else {
      d.middleRows(n, n).setZero();
    }
    dc_carry.array() = dc.array() * f;
    if (s > 0) dh_rec.noalias() = w.U.transpose() * d;
  }

  dW.noalias() += dpre * X.transpose();
  db += dpre.rowwise().sum();
  if (steps > 1) {
    const auto m = (steps - 1) * batch;
    if (reverse) {
      dU.noalias() += dpre.leftCols(m) * cache.h.rightCols(m).transpose();
    } else {
      dU.noalias() += dpre.rightCols(m) * cache.h.leftCols(m).transpose();
    }
  }
  if (dX != nullptr) dX->noalias() = w.W.transpose() * dpre;
}

/// H = [h_1 .. h_T] (N x T) for a d x T input, zero initial state.
inline Eigen::MatrixXd lstm_forward(const Eigen::MatrixXd& X, const LstmWeights& w) {
  if (X.cols() < 1) throw ValidationError("lstm_forward needs at least one frame");
  LstmLayerCache cache;
  lstm_layer_forward(w, X, X.cols(), 1, false, cache);
  return std::move(cache.h);
}

inline Eigen::MatrixXd lstm_forward(const FeatureMatrix& fm, const LstmWeights& w) { return lstm_forward(fm.values.transpose(), w); }

/// Forward units on top, backward units (run on the time-reversed input) below.
inline Eigen::MatrixXd bilstm_forward(const Eigen::MatrixXd& X, const LstmWeights& fwd, const LstmWeights& bwd) {
  if (fwd.input_dim() != bwd.input_dim()) throw ValidationError("bidirectional halves disagree on input dim");
  if (X.cols() < 1) throw ValidationError("bilstm_forward needs at least one frame");
  LstmLayerCache f, b;
  lstm_layer_forward(fwd, X, X.cols(), 1, false, f);
  lstm_layer_forward(bwd, X, X.cols(), 1, true, b);
  Eigen::MatrixXd H(fwd.units() + bwd.units(), X.cols());
  H << f.h, b.h;
  return H;
}

}  // namespace raec

#endif  // RAEC_LSTM_HPP_
