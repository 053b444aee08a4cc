#pragma once

// Reference implementations written from the textbook formulas with plain loops.
// They share no code with the library.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<std::vector<double>>;  // row-major

inline std::size_t samples_for_ms(double ms, int sr) { return static_cast<std::size_t>(std::floor(ms * sr / 1000.0 + 1e-9)); }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p *= 2;
  return p;
}

/// Periodic Hann window.
inline Vec hann(std::size_t n) {
  Vec w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

/// O(N^2) DFT of the Hann-windowed frame zero-padded to a power of two; |X_k|^2 for k = 0..N/2.
inline Vec power_spectrum(const Vec& frame) {
  const auto w = hann(frame.size());
  const std::size_t N = next_pow2(frame.size());
  Vec out(N / 2 + 1);
  for (std::size_t k = 0; k <= N / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < frame.size(); ++n)
      acc += frame[n] * w[n] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * n % N) / static_cast<double>(N));
    out[k] = std::norm(acc);
  }
  return out;
}

inline double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

inline Vec mel_edges(int n_mels, double sr) {
  Vec e(n_mels + 2);
  const double top = mel(sr / 2.0);
  for (int i = 0; i < n_mels + 2; ++i) e[i] = hz(top * i / (n_mels + 1));
  return e;
}

inline Vec mel_centers(int n_mels, double sr) {
  const auto e = mel_edges(n_mels, sr);
  return Vec(e.begin() + 1, e.end() - 1);
}

inline Mat mel_weights(int n_mels, double sr, std::size_t fft_size) {
  const auto e = mel_edges(n_mels, sr);
  Mat w(n_mels, Vec(fft_size / 2 + 1, 0.0));
  for (int b = 0; b < n_mels; ++b) {
    for (std::size_t k = 0; k <= fft_size / 2; ++k) {
      const double f = k * sr / fft_size;
      if (f > e[b] && f <= e[b + 1]) w[b][k] = (f - e[b]) / (e[b + 1] - e[b]);
      else if (f > e[b + 1] && f < e[b + 2]) w[b][k] = (e[b + 2] - f) / (e[b + 2] - e[b + 1]);
    }
  }
  return w;
}

inline Mat lfbe(const Vec& x, int sr, double frame_ms, double hop_ms, int n_mels, double floor) {
  const auto fs = samples_for_ms(frame_ms, sr), hs = samples_for_ms(hop_ms, sr);
  const auto w = mel_weights(n_mels, sr, next_pow2(fs));
  Mat out;
  for (std::size_t start = 0; start + fs <= x.size(); start += hs) {
    const auto p = power_spectrum(Vec(x.begin() + start, x.begin() + start + fs));
    Vec row(n_mels);
    for (int b = 0; b < n_mels; ++b) {
      double e = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) e += w[b][k] * p[k];
      row[b] = std::log(std::max(e, floor));
    }
    out.push_back(row);
  }
  return out;
}

inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// y = act(W x + b) with explicit loops. act: 0 identity, 1 sigmoid, 2 tanh.
inline Vec dense(const Mat& W, const Vec& x, const Vec& b, int act) {
  Vec y(W.size());
  for (std::size_t i = 0; i < W.size(); ++i) {
    double s = b[i];
    for (std::size_t j = 0; j < x.size(); ++j) s += W[i][j] * x[j];
    y[i] = act == 1 ? sigm(s) : act == 2 ? std::tanh(s) : s;
  }
  return y;
}

/// Scalar-loop LSTM cell; W is 4N x d, U is 4N x N, gate blocks ordered i, f, o, g.
inline void lstm_cell(const Mat& W, const Mat& U, const Vec& b, const Vec& x, Vec& h, Vec& c) {
  const std::size_t N = h.size();
  Vec hn(N), cn(N);
  for (std::size_t n = 0; n < N; ++n) {
    double z[4];
    for (int g = 0; g < 4; ++g) {
      const std::size_t r = g * N + n;
      double s = b[r];
      for (std::size_t j = 0; j < x.size(); ++j) s += W[r][j] * x[j];
      for (std::size_t j = 0; j < N; ++j) s += U[r][j] * h[j];
      z[g] = s;
    }
    const double i = sigm(z[0]), f = sigm(z[1]), o = sigm(z[2]), g = std::tanh(z[3]);
    cn[n] = f * c[n] + i * g;
    hn[n] = o * std::tanh(cn[n]);
  }
  h = hn;
  c = cn;
}

/// Runs the cell over columns of X (d x T given as T input vectors); returns T hidden vectors.
inline Mat lstm_run(const Mat& W, const Mat& U, const Vec& b, const Mat& xs) {
  const std::size_t N = U.empty() ? 0 : U[0].size();
  Vec h(N, 0.0), c(N, 0.0);
  Mat out;
  for (const auto& x : xs) {
    lstm_cell(W, U, b, x, h, c);
    out.push_back(h);
  }
  return out;
}

/// The ADAM recurrences for one scalar parameter.
struct Adam {
  double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double theta, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return theta - lr * mh / (std::sqrt(vh) + eps);
  }
};

/// Slice-add mixer: out = bg; out[s:s+len] += gain * ev.
inline Vec mix(const Vec& ev, const Vec& bg, std::size_t start, double gain) {
  Vec out = bg;
  for (std::size_t i = 0; i < ev.size(); ++i) out[start + i] = bg[start + i] + gain * ev[i];
  return out;
}

inline Vec softmax(const Vec& s) {
  double mx = s[0];
  for (double v : s) mx = std::max(mx, v);
  Vec e(s.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) sum += e[i] = std::exp(s[i] - mx);
  for (auto& v : e) v /= sum;
  return e;
}

}  // namespace oracle
