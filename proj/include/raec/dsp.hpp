#ifndef RAEC_DSP_HPP_
#define RAEC_DSP_HPP_

// Log filter-bank energy front end: framing, Hann-windowed power spectra,
// HTK mel filter banks.

#include <raec/common.hpp>

#include <unsupported/Eigen/FFT>

#include <complex>
#include <span>

namespace raec {

/// Mono audio. Samples are nominally in [-1, 1]; louder input is accepted with a warning.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }

  void validate() const {
    if (sample_rate <= 0) throw ValidationError("waveform sample rate must be positive, got " + std::to_string(sample_rate));
    if (samples.empty()) throw ValidationError("waveform has no samples");
    bool loud = false;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!std::isfinite(samples[i])) throw ValidationError("waveform sample " + std::to_string(i) + " is not finite");
      loud = loud || std::abs(samples[i]) > 1.0;
    }
    if (loud) warn("waveform amplitude exceeds [-1, 1]; no clipping applied");
  }
};

/// T x F log filter-bank energies, one row per frame.
struct FeatureMatrix {
  RowMatrix values;
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 0;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }
};

struct FrameGeometry {
  std::size_t frame_samples = 0;
  std::size_t hop_samples = 0;
  std::size_t count = 0;
};

inline std::size_t ms_to_samples(double ms, int sample_rate) {
  // 1e-9 keeps values like 199.99999999 from flooring to 199.
  return static_cast<std::size_t>(std::floor(ms * sample_rate / 1000.0 + 1e-9));
}

/// Frame layout for a signal of n_samples; the trailing partial frame is dropped.
inline FrameGeometry frame_geometry(std::size_t n_samples, int sample_rate, double frame_ms, double hop_ms) {
  if (!(hop_ms > 0.0) || frame_ms < hop_ms)
    throw ValidationError("framing requires frame_ms >= hop_ms > 0 (got frame " + format_double(frame_ms) + " ms, hop " +
                          format_double(hop_ms) + " ms)");
  if (sample_rate <= 0) throw ValidationError("sample rate must be positive");
  FrameGeometry g;
  g.frame_samples = ms_to_samples(frame_ms, sample_rate);
  g.hop_samples = ms_to_samples(hop_ms, sample_rate);
  if (g.frame_samples == 0 || g.hop_samples == 0) throw ValidationError("frame or hop shorter than one sample");
  if (n_samples < g.frame_samples)
    throw ValidationError("waveform too short: " + std::to_string(n_samples) + " samples, one frame needs " +
                          std::to_string(g.frame_samples));
  g.count = (n_samples - g.frame_samples) / g.hop_samples + 1;
  return g;
}

inline std::vector<std::vector<double>> frame_signal(const Waveform& wave, double frame_ms, double hop_ms) {
  const auto g = frame_geometry(wave.size(), wave.sample_rate, frame_ms, hop_ms);
  std::vector<std::vector<double>> frames(g.count);
  for (std::size_t i = 0; i < g.count; ++i) {
    const auto first = wave.samples.begin() + static_cast<std::ptrdiff_t>(i * g.hop_samples);
    frames[i].assign(first, first + static_cast<std::ptrdiff_t>(g.frame_samples));
  }
  return frames;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Periodic Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

/// Reusable power-spectrum evaluator for frames of a fixed length.
class PowerSpectrum {
 public:
  explicit PowerSpectrum(std::size_t frame_length)
      : window_(hann_window(frame_length)), fft_size_(next_pow2(frame_length)), buffer_(fft_size_, 0.0) {
    if (frame_length == 0) throw ValidationError("power spectrum of an empty frame");
    fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  }

  std::size_t fft_size() const { return fft_size_; }
  std::size_t bins() const { return fft_size_ / 2 + 1; }

  /// Squared DFT magnitudes of the windowed, zero-padded frame.
  void operator()(std::span<const double> frame, std::span<double> out, std::size_t frame_index = 0) {
    if (frame.size() != window_.size())
      throw ValidationError("frame length " + std::to_string(frame.size()) + " does not match " + std::to_string(window_.size()));
    for (std::size_t i = 0; i < frame.size(); ++i) {
      if (!std::isfinite(frame[i])) throw ValidationError("non-finite sample in frame " + std::to_string(frame_index));
      buffer_[i] = frame[i] * window_[i];
    }
    if (fft_size_ == 1) {  // kissfft cannot plan a length-1 transform
      out[0] = buffer_[0] * buffer_[0];
      return;
    }
    fft_.fwd(spectrum_, buffer_);
    for (std::size_t k = 0; k < bins(); ++k) out[k] = std::norm(spectrum_[k]);
  }

  const std::vector<double>& window() const { return window_; }

 private:
  std::vector<double> window_;
  std::size_t fft_size_;
  std::vector<double> buffer_;
  std::vector<std::complex<double>> spectrum_;
  Eigen::FFT<double> fft_;
};

inline std::vector<double> power_spectrum(std::span<const double> frame) {
  PowerSpectrum ps(frame.size());
  std::vector<double> out(ps.bins());
  ps(frame, out);
  return out;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// B x K triangular filters over the K = fft_size/2 + 1 spectral bins.
struct MelBank {
  RowMatrix weights;
  std::vector<double> band_edges_hz;  // B + 2 points; band b spans edges b..b+2, peaking at b+1

  Eigen::Index bands() const { return weights.rows(); }
  Eigen::Index bins() const { return weights.cols(); }
  double center_hz(Eigen::Index band) const { return band_edges_hz[static_cast<std::size_t>(band) + 1]; }
};

inline MelBank mel_bank(int n_mels, int sample_rate, std::size_t fft_size) {
  if (n_mels < 1) throw ValidationError("mel bank needs at least one band");
  if (sample_rate <= 0) throw ValidationError("sample rate must be positive");
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) throw ValidationError("fft size must be a power of two, got " + std::to_string(fft_size));
  const std::size_t n_bins = fft_size / 2 + 1;
  if (static_cast<std::size_t>(n_mels) > n_bins)
    throw ValidationError("too many mel bands (" + std::to_string(n_mels) + ") for " + std::to_string(n_bins) + " spectral bins");

  MelBank bank;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  bank.band_edges_hz.resize(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) bank.band_edges_hz[static_cast<std::size_t>(i)] = mel_to_hz(mel_max * i / (n_mels + 1));
  bank.band_edges_hz.front() = 0.0;
  bank.band_edges_hz.back() = sample_rate / 2.0;

  bank.weights = RowMatrix::Zero(n_mels, static_cast<Eigen::Index>(n_bins));
  for (int b = 0; b < n_mels; ++b) {
    const double lo = bank.band_edges_hz[static_cast<std::size_t>(b)];
    const double mid = bank.band_edges_hz[static_cast<std::size_t>(b) + 1];
    const double hi = bank.band_edges_hz[static_cast<std::size_t>(b) + 2];
    bool any = false;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
      const double w = std::max(0.0, std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid)));
      bank.weights(b, static_cast<Eigen::Index>(k)) = w;
      any = any || w > 0.0;
    }
    if (!any)
      throw ValidationError("mel band " + std::to_string(b) + " covers no spectral bin; reduce n_mels or raise the fft size");
  }
  return bank;
}

struct LfbeConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 64;
  double energy_floor = 1e-10;
};

/// Frame-wise ln(max(mel . |DFT|^2, floor)).
inline FeatureMatrix compute_lfbe(const Waveform& wave, const LfbeConfig& cfg, const MelBank* bank = nullptr) {
  wave.validate();
  if (!(cfg.energy_floor > 0.0)) throw ValidationError("energy floor must be positive");
  const auto g = frame_geometry(wave.size(), wave.sample_rate, cfg.frame_ms, cfg.hop_ms);
  PowerSpectrum ps(g.frame_samples);
  MelBank local;
  if (bank == nullptr) {
    local = mel_bank(cfg.n_mels, wave.sample_rate, ps.fft_size());
    bank = &local;
  } else if (bank->bins() != static_cast<Eigen::Index>(ps.bins()) || bank->bands() != cfg.n_mels) {
    throw ValidationError("mel bank shape " + shape_string(bank->bands(), bank->bins()) + " does not match configuration");
  }

  FeatureMatrix out;
  out.frame_ms = cfg.frame_ms;
  out.hop_ms = cfg.hop_ms;
  out.n_mels = cfg.n_mels;
  out.values.resize(static_cast<Eigen::Index>(g.count), cfg.n_mels);
  Eigen::VectorXd power(static_cast<Eigen::Index>(ps.bins()));
  const double log_floor = std::log(cfg.energy_floor);
  for (std::size_t t = 0; t < g.count; ++t) {
    std::span<const double> frame(wave.samples.data() + t * g.hop_samples, g.frame_samples);
    ps(frame, std::span<double>(power.data(), ps.bins()), t);
    const Eigen::VectorXd energies = bank->weights * power;
    for (int b = 0; b < cfg.n_mels; ++b) {
      const double e = energies(b);
      out.values(static_cast<Eigen::Index>(t), b) = e > cfg.energy_floor ? std::log(e) : log_floor;
    }
  }
  return out;
}

}  // namespace raec

#endif  // RAEC_DSP_HPP_
