#ifndef RAEC_SELFTEST_HPP_
#define RAEC_SELFTEST_HPP_

// Built-in gradient and property suites.

#include <raec/model.hpp>

namespace raec {

struct SuiteResult {
  std::string name;
  std::size_t passed = 0;
  std::size_t failed = 0;
  std::vector<std::string> failures;  // first few failure descriptions
  double worst = 0.0;                 // suite-specific worst statistic

  bool ok() const { return failed == 0 && passed > 0; }

  void record(bool pass, const std::function<std::string()>& what) {
    if (pass) {
      ++passed;
      return;
    }
    ++failed;
    if (failures.size() < 10) failures.push_back(what());
  }
};

inline FeatureMatrix random_features(Eigen::Index frames, Eigen::Index dims, Rng& rng, double scale = 1.0) {
  FeatureMatrix fm;
  fm.values.resize(frames, dims);
  for (Eigen::Index t = 0; t < frames; ++t)
    for (Eigen::Index f = 0; f < dims; ++f) fm.values(t, f) = scale * rng.gaussian();
  fm.n_mels = static_cast<int>(dims);
  return fm;
}

struct GradCase {
  ModelConfig config;
  std::uint64_t seed = 0;
  Eigen::Index frames = 6;
  std::size_t batch = 2;
  double h = 1e-5;
  double tolerance = 1e-4;
  double min_margin = 1e-3;  // required gap at every max for the max kinds
};

/// Gradient check of the whole model (LSTM stack, pooling, head) on random data.
inline GradCheckReport check_model_gradient(const GradCase& c) {
  Rng rng(derive_seed(c.seed, 77));
  Model model = Model::initialize(c.config, c.seed);
  // Non-zero biases so every path carries gradient.
  for (auto& p : model.params)
    if (p.name.ends_with(".b") || p.name == "head.b")
      for (auto& v : p.values) v += rng.uniform(-0.5, 0.5);
  model.norm.mean = Eigen::VectorXd::Zero(c.config.input_dim);
  model.norm.scale = Eigen::VectorXd::Ones(c.config.input_dim);

  std::vector<FeatureMatrix> data;
  std::vector<const FeatureMatrix*> batch;
  std::vector<int> labels;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) throw Error("could not draw inputs with a unique argmax");
    data.clear();
    labels.clear();
    for (std::size_t b = 0; b < c.batch; ++b) {
      data.push_back(random_features(c.frames, c.config.input_dim, rng));
      labels.push_back(static_cast<int>(b % 2));
    }
    batch.clear();
    for (const auto& d : data) batch.push_back(&d);
    if (max_pooling_margin(model, batch) >= c.min_margin) break;
  }

  GradientMap grads(model.params);
  loss_and_gradient(model, batch, labels, &grads);
  Model probe = model;
  auto loss = [&](const ParamSet& p) {
    probe.params = p;
    return loss_and_gradient(probe, batch, labels, nullptr).loss;
  };
  return grad_check(loss, model.params, grads, c.h, c.tolerance);
}

/// Every pooling kind on a 1-layer LSTM of `units` units over `n_seeds` seeds.
inline SuiteResult gradient_suite(std::size_t n_seeds = 20, int units = 8, int input_dim = 5) {
  SuiteResult r{"gradient", 0, 0, {}, 0.0};
  for (auto kind : kAllPoolingKinds) {
    for (std::size_t s = 0; s < n_seeds; ++s) {
      GradCase c;
      c.config.n_layers = 1;
      c.config.units = units;
      c.config.pooling = kind;
      c.config.input_dim = input_dim;
      c.seed = 1000 + s;
      const auto rep = check_model_gradient(c);
      r.worst = std::max(r.worst, rep.max_rel_error);
      r.record(rep.passed(), [&] {
        std::string who;
        for (const auto& o : rep.offenders) who += " " + o;
        return std::string(name(kind)) + " seed " + std::to_string(c.seed) + ": max rel error " + format_double(rep.max_rel_error) + " in" + who;
      });
    }
  }
  return r;
}

/// Two-layer stacks, both directions.
inline SuiteResult deep_gradient_suite(std::size_t n_seeds = 3) {
  SuiteResult r{"gradient-deep", 0, 0, {}, 0.0};
  for (auto dir : {Direction::Uni, Direction::Bi}) {
    for (auto kind : {PoolingKind::FeatLastFrame, PoolingKind::PredAvg, PoolingKind::PredAttention}) {
      for (std::size_t s = 0; s < n_seeds; ++s) {
        GradCase c;
        c.config = {2, 6, dir, kind, 4};
        c.seed = 2000 + s;
        const auto rep = check_model_gradient(c);
        r.worst = std::max(r.worst, rep.max_rel_error);
        r.record(rep.passed(), [&] {
          return std::string(name(dir)) + " " + std::string(name(kind)) + " seed " + std::to_string(c.seed) + ": " + format_double(rep.max_rel_error);
        });
      }
    }
  }
  return r;
}

inline constexpr std::array<PoolingKind, 5> kPredictionKinds = {PoolingKind::PredMax, PoolingKind::PredAvg, PoolingKind::PredLinSoftmax,
                                                                PoolingKind::PredExpSoftmax, PoolingKind::PredAttention};

/// Range containment, constant fixed point and the sandwich inequalities on random sequences.
/// `slack` absorbs the LinSoftmax denominator guard and final-ulp rounding.
inline SuiteResult pooling_algebra_suite(std::size_t n_sequences = 10000, std::uint64_t seed = 7, double slack = 1e-12) {
  SuiteResult r{"pooling-algebra", 0, 0, {}, 0.0};
  Rng rng(seed);
  constexpr Eigen::Index kUnits = 4;
  for (std::size_t i = 0; i < n_sequences; ++i) {
    const auto T = static_cast<std::size_t>(1 + rng.below(64));
    std::vector<double> y(T);
    for (auto& v : y) v = rng.uniform(0.0, 1.0);
    Eigen::MatrixXd Hm(kUnits, static_cast<Eigen::Index>(T));
    for (Eigen::Index k = 0; k < Hm.size(); ++k) Hm(k) = rng.uniform(-1.0, 1.0);
    Eigen::VectorXd aw(kUnits);
    for (Eigen::Index k = 0; k < kUnits; ++k) aw(k) = rng.uniform(-3.0, 3.0);
    const HiddenView H(Hm);
    const AttentionHead att{Eigen::Map<const Eigen::VectorXd>(aw.data(), kUnits)};

    const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
    const double lo = *lo_it, hi = *hi_it;
    std::array<double, 5> pooled{};
    for (std::size_t k = 0; k < kPredictionKinds.size(); ++k) {
      pooled[k] = pool_prediction(kPredictionKinds[k], y, &H, &att);
      const bool in_range = pooled[k] >= lo - slack && pooled[k] <= hi + slack;
      r.record(in_range, [&] { return "range: " + std::string(name(kPredictionKinds[k])) + " sequence " + std::to_string(i); });
    }
    const double mx = pooled[0], avg = pooled[1], lin = pooled[2], ex = pooled[3];
    r.record(avg <= lin + slack && lin <= mx + slack, [&] { return "Avg <= LinSoftmax <= Max violated on sequence " + std::to_string(i); });
    r.record(avg <= ex + slack && ex <= mx + slack, [&] { return "Avg <= ExpSoftmax <= Max violated on sequence " + std::to_string(i); });

    const double c = y[0];
    const std::vector<double> flat(T, c);
    for (auto kind : kPredictionKinds) {
      const double v = pool_prediction(kind, flat, &H, &att);
      r.worst = std::max(r.worst, std::abs(v - c));
      r.record(std::abs(v - c) <= 1e-12, [&] { return "fixed point: " + std::string(name(kind)) + " sequence " + std::to_string(i); });
    }
  }
  return r;
}

/// Bounded hidden states and the bidirectional decomposition identity on random models.
inline SuiteResult lstm_property_suite(std::size_t n_cases = 50, std::uint64_t seed = 11) {
  SuiteResult r{"lstm-properties", 0, 0, {}, 0.0};
  Rng rng(seed);
  for (std::size_t i = 0; i < n_cases; ++i) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(6));
    const auto n = static_cast<Eigen::Index>(1 + rng.below(6));
    const auto T = static_cast<Eigen::Index>(1 + rng.below(20));
    auto random_params = [&] {
      auto p = LstmParams::zeros(n, d);
      for (Eigen::Index k = 0; k < p.W.size(); ++k) p.W(k) = rng.gaussian() * 2.0;
      for (Eigen::Index k = 0; k < p.U.size(); ++k) p.U(k) = rng.gaussian() * 2.0;
      for (Eigen::Index k = 0; k < p.b.size(); ++k) p.b(k) = rng.gaussian();
      return p;
    };
    const auto fwd = random_params(), bwd = random_params();
    Eigen::MatrixXd X(d, T);
    for (Eigen::Index k = 0; k < X.size(); ++k) X(k) = rng.gaussian() * 3.0;

    const Eigen::MatrixXd H = bilstm_forward(X, fwd.view(), bwd.view());
    r.record(H.cwiseAbs().maxCoeff() < 1.0, [&] { return "hidden state out of (-1, 1) in case " + std::to_string(i); });
    const Eigen::MatrixXd rev = lstm_forward(Eigen::MatrixXd(X.rowwise().reverse()), bwd.view());
    r.record(H.bottomRows(n) == Eigen::MatrixXd(rev.rowwise().reverse()), [&] { return "bidirectional identity broken in case " + std::to_string(i); });
    r.record(H.topRows(n) == lstm_forward(X, fwd.view()), [&] { return "forward half differs in case " + std::to_string(i); });
  }
  return r;
}

/// Frame-count formula, Parseval and amplitude scaling of the LFBE front end.
inline SuiteResult dsp_property_suite(std::size_t n_cases = 1000, std::uint64_t seed = 13) {
  SuiteResult r{"dsp-properties", 0, 0, {}, 0.0};
  Rng rng(seed);
  for (std::size_t i = 0; i < n_cases; ++i) {
    const int sr = 1000 * static_cast<int>(1 + rng.below(48));
    const double hop_ms = rng.uniform(1.0, 20.0);
    const double frame_ms = hop_ms + rng.uniform(0.0, 30.0);
    const auto fs = ms_to_samples(frame_ms, sr), hs = ms_to_samples(hop_ms, sr);
    if (fs == 0 || hs == 0) continue;
    const auto len = fs + static_cast<std::size_t>(rng.below(20 * fs + 1));
    const auto g = frame_geometry(len, sr, frame_ms, hop_ms);
    std::size_t expected = 0;
    while (expected * hs + fs <= len) ++expected;
    r.record(g.count == expected, [&] { return "frame count for length " + std::to_string(len); });
  }
  for (std::size_t i = 0; i < 50; ++i) {
    const auto n = static_cast<std::size_t>(8 + rng.below(500));
    std::vector<double> frame(n);
    for (auto& v : frame) v = rng.gaussian();
    const auto p = power_spectrum(frame);
    const auto win = hann_window(n);
    const std::size_t N = next_pow2(n);
    double energy = 0.0;
    for (std::size_t k = 0; k < n; ++k) energy += frame[k] * win[k] * frame[k] * win[k];
    double total = p.front() + p.back();
    for (std::size_t k = 1; k + 1 < p.size(); ++k) total += 2.0 * p[k];
    const double rel = std::abs(total / static_cast<double>(N) - energy) / energy;
    r.worst = std::max(r.worst, rel);
    r.record(rel < 1e-9, [&] { return "Parseval failed for frame length " + std::to_string(n); });
  }
  Waveform w{std::vector<double>(4000), 8000};
  for (auto& v : w.samples) v = 0.1 * rng.gaussian();
  LfbeConfig cfg;
  cfg.n_mels = 32;
  const auto a = compute_lfbe(w, cfg);
  for (auto& v : w.samples) v *= 2.0;
  const auto b = compute_lfbe(w, cfg);
  const double floor = std::log(cfg.energy_floor);
  for (Eigen::Index k = 0; k < a.values.size(); ++k) {
    if (a.values(k) <= floor + 1e-9) continue;
    r.record(std::abs(b.values(k) - a.values(k) - 2.0 * std::log(2.0)) < 1e-9, [&] { return "amplitude shift at entry " + std::to_string(k); });
  }
  return r;
}

inline std::vector<SuiteResult> run_selftest() {
  return {gradient_suite(), deep_gradient_suite(), pooling_algebra_suite(), lstm_property_suite(), dsp_property_suite()};
}

}  // namespace raec

#endif  // RAEC_SELFTEST_HPP_
