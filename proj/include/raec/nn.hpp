#ifndef RAEC_NN_HPP_
#define RAEC_NN_HPP_

// Differentiable building blocks: named parameter tensors, dense layers,
// binary cross-entropy, ADAM and a central-difference gradient checker.

#include <raec/common.hpp>

#include <map>
#include <numeric>
#include <optional>
#include <span>

namespace raec {

/// A named trainable tensor. Values are stored row-major.
struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;

  ParamTensor() = default;
  ParamTensor(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
    values.assign(element_count(shape), 0.0);
  }

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return values.size(); }
  Eigen::Index rows() const { return shape.empty() ? 1 : static_cast<Eigen::Index>(shape[0]); }
  Eigen::Index cols() const { return shape.size() < 2 ? 1 : static_cast<Eigen::Index>(shape[1]); }

  Eigen::Map<const RowMatrix> matrix() const { return {values.data(), rows(), cols()}; }
  Eigen::Map<RowMatrix> matrix() { return {values.data(), rows(), cols()}; }
  Eigen::Map<const Eigen::VectorXd> vector() const { return {values.data(), static_cast<Eigen::Index>(values.size())}; }
  Eigen::Map<Eigen::VectorXd> vector() { return {values.data(), static_cast<Eigen::Index>(values.size())}; }

  friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

/// Ordered collection of parameter tensors with lookup by name.
class ParamSet {
 public:
  ParamTensor& add(std::string name, std::vector<std::size_t> shape) {
    if (contains(name)) throw ValidationError("duplicate parameter " + name);
    tensors_.emplace_back(std::move(name), std::move(shape));
    return tensors_.back();
  }

  void add(ParamTensor t) {
    if (contains(t.name)) throw ValidationError("duplicate parameter " + t.name);
    tensors_.push_back(std::move(t));
  }

  bool contains(std::string_view name) const { return find(name) != nullptr; }

  const ParamTensor* find(std::string_view name) const {
    for (const auto& t : tensors_)
      if (t.name == name) return &t;
    return nullptr;
  }
  ParamTensor* find(std::string_view name) {
    for (auto& t : tensors_)
      if (t.name == name) return &t;
    return nullptr;
  }

  const ParamTensor& at(std::string_view name) const {
    if (auto* t = find(name)) return *t;
    throw ValidationError("unknown parameter " + std::string(name));
  }
  ParamTensor& at(std::string_view name) {
    if (auto* t = find(name)) return *t;
    throw ValidationError("unknown parameter " + std::string(name));
  }

  std::size_t size() const { return tensors_.size(); }
  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<ParamTensor> tensors_;
};

/// Gradients keyed by parameter name, shaped like the parameters.
class GradientMap {
 public:
  GradientMap() = default;
  explicit GradientMap(const ParamSet& params) {
    for (const auto& t : params) grads_[t.name].assign(t.size(), 0.0);
  }

  std::vector<double>& operator[](const std::string& name) { return grads_[name]; }
  const std::vector<double>& at(const std::string& name) const {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw ValidationError("no gradient for parameter " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return grads_.count(name) != 0; }

  Eigen::Map<RowMatrix> matrix(const ParamTensor& like) { return {grads_.at(like.name).data(), like.rows(), like.cols()}; }
  Eigen::Map<Eigen::VectorXd> vector(const std::string& name) {
    auto& g = grads_.at(name);
    return {g.data(), static_cast<Eigen::Index>(g.size())};
  }

  void set_zero() {
    for (auto& [_, g] : grads_) std::fill(g.begin(), g.end(), 0.0);
  }

  void scale(double s) {
    for (auto& [_, g] : grads_)
      for (auto& v : g) v *= s;
  }

  void add(const GradientMap& other) {
    for (const auto& [name, g] : other.grads_) {
      auto& mine = grads_.at(name);
      for (std::size_t i = 0; i < g.size(); ++i) mine[i] += g[i];
    }
  }

  std::size_t size() const { return grads_.size(); }
  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::map<std::string, std::vector<double>> grads_;
};

enum class Activation { Sigmoid, Tanh, Identity };

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Eigen::VectorXd activate(Activation act, const Eigen::VectorXd& z) {
  switch (act) {
    case Activation::Sigmoid:
      return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    case Activation::Tanh:
      return z.array().tanh().matrix();
    case Activation::Identity:
      return z;
  }
  return z;
}

/// activation(W x + b) for a weights tensor of shape (out, in) and a bias of shape (out).
inline Eigen::VectorXd dense(const Eigen::VectorXd& input, const ParamTensor& weights, const ParamTensor& bias, Activation act) {
  if (weights.shape.size() != 2 || weights.cols() != input.size() || bias.size() != static_cast<std::size_t>(weights.rows()))
    throw ValidationError("dense: weights " + shape_string(weights.rows(), weights.cols()) + " and bias " +
                          std::to_string(bias.size()) + " do not conform to input " + std::to_string(input.size()));
  return activate(act, weights.matrix() * input + bias.vector());
}

struct DenseGradients {
  Eigen::VectorXd input;
  RowMatrix weights;
  Eigen::VectorXd bias;
};

/// Backward pass of dense() given the forward output and dL/d(output).
inline DenseGradients dense_backward(const Eigen::VectorXd& input, const ParamTensor& weights, const Eigen::VectorXd& output,
                                     Activation act, const Eigen::VectorXd& grad_output) {
  Eigen::VectorXd dz = grad_output;
  if (act == Activation::Sigmoid) dz.array() *= output.array() * (1.0 - output.array());
  if (act == Activation::Tanh) dz.array() *= 1.0 - output.array().square();
  DenseGradients g;
  g.input = weights.matrix().transpose() * dz;
  g.weights = dz * input.transpose();
  g.bias = dz;
  return g;
}

inline constexpr double kBceEps = 1e-7;

inline void check_label(int label) {
  if (label != 0 && label != 1) throw ValidationError("binary label must be 0 or 1, got " + std::to_string(label));
}

inline double bce_loss(double prediction, int label) {
  check_label(label);
  const double p = std::clamp(prediction, kBceEps, 1.0 - kBceEps);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

/// dL/dp; zero where the clamp is active.
inline double bce_grad(double prediction, int label) {
  check_label(label);
  if (prediction < kBceEps || prediction > 1.0 - kBceEps) return 0.0;
  return label == 1 ? -1.0 / prediction : 1.0 / (1.0 - prediction);
}

inline double bce_loss(std::span<const double> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size() || predictions.empty())
    throw ValidationError("bce_loss: " + std::to_string(predictions.size()) + " predictions vs " + std::to_string(labels.size()) + " labels");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) sum += bce_loss(predictions[i], labels[i]);
  return sum / static_cast<double>(predictions.size());
}

struct Hyper {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning rate must be finite and >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("ADAM betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ValidationError("ADAM epsilon must be positive");
    if (batch_size == 0) throw ValidationError("batch size must be positive");
  }
};

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::uint64_t t = 0;
};

/// One bias-corrected ADAM update. Either every parameter is updated or, on error, none is.
inline void adam_step(ParamSet& params, const GradientMap& grads, AdamState& state, const Hyper& hyper) {
  hyper.validate();
  if (grads.size() != params.size()) throw ValidationError("gradient map does not match the parameter set");
  for (const auto& p : params) {
    const auto& g = grads.at(p.name);
    if (g.size() != p.size()) throw ValidationError("gradient for " + p.name + " has " + std::to_string(g.size()) + " entries, expected " + std::to_string(p.size()));
    for (double x : g)
      if (!std::isfinite(x)) throw Error("non-finite gradient for parameter " + p.name);
  }

  const auto t = state.t + 1;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  for (auto& p : params) {
    const auto& g = grads.at(p.name);
    auto& m = state.m[p.name];
    auto& v = state.v[p.name];
    m.resize(p.size(), 0.0);
    v.resize(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.values[i] -= hyper.learning_rate * mhat / (std::sqrt(vhat) + hyper.epsilon);
    }
  }
  state.t = t;
}

inline double uniform_glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline void init_uniform(ParamTensor& t, double limit, Rng& rng) {
  for (auto& v : t.values) v = rng.uniform(-limit, limit);
}

/// Random n x n orthogonal matrix (QR of a Gaussian matrix with the sign fix of Mezzadri).
inline Eigen::MatrixXd random_orthogonal(Eigen::Index n, Rng& rng) {
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) a(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  std::vector<std::string> offenders;
  double max_rel_error = 0.0;
  bool passed() const { return offenders.empty(); }
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Compares an analytic gradient with central differences (f(p+h) - f(p-h)) / 2h,
/// one coordinate at a time.
inline GradCheckReport grad_check(const std::function<double(const ParamSet&)>& loss, const ParamSet& params,
                                  const GradientMap& analytic, double perturbation, double tolerance) {
  if (!(perturbation > 0.0)) throw ValidationError("gradient check perturbation must be positive");
  GradCheckReport report;
  ParamSet probe = params;
  for (auto& p : probe) {
    const auto& a = analytic.at(p.name);
    if (a.size() != p.size()) throw ValidationError("analytic gradient for " + p.name + " has the wrong size");
    GradCheckEntry entry{p.name};
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.values[i];
      p.values[i] = saved + perturbation;
      const double up = loss(probe);
      p.values[i] = saved - perturbation;
      const double down = loss(probe);
      p.values[i] = saved;
      const double numeric = (up - down) / (2.0 * perturbation);
      const double err = relative_error(a[i], numeric);
      if (err > entry.max_rel_error || i == 0) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = a[i];
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    if (!(entry.max_rel_error < tolerance)) report.offenders.push_back(p.name);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace raec

#endif  // RAEC_NN_HPP_
