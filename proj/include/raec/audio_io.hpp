#ifndef RAEC_AUDIO_IO_HPP_
#define RAEC_AUDIO_IO_HPP_

#include <raec/dsp.hpp>

#include <filesystem>
#include <fstream>

namespace raec {

enum class WavSampleFormat { Pcm16, Float32 };

namespace detail {

inline std::uint32_t read_u32(std::istream& is) { return binio::read_le<std::uint32_t>(is, "wav header"); }
inline std::uint16_t read_u16(std::istream& is) { return binio::read_le<std::uint16_t>(is, "wav header"); }

}  // namespace detail

/// Reads a mono RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.
inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open wav file " + path.string());
  const std::string where = "wav file " + path.string();
  binio::expect_magic(is, "RIFF", where);
  detail::read_u32(is);
  binio::expect_magic(is, "WAVE", where);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (true) {
    char id[4];
    if (!is.read(id, 4)) throw ValidationError(where + ": no data chunk");
    const std::uint32_t size = detail::read_u32(is);
    const std::string chunk(id, 4);
    if (chunk == "fmt ") {
      format = detail::read_u16(is);
      channels = detail::read_u16(is);
      rate = detail::read_u32(is);
      detail::read_u32(is);  // byte rate
      detail::read_u16(is);  // block align
      bits = detail::read_u16(is);
      std::uint32_t consumed = 16;
      if (format == 0xFFFE && size >= 40) {
        detail::read_u16(is);  // cb size
        detail::read_u16(is);  // valid bits
        detail::read_u32(is);  // channel mask
        format = detail::read_u16(is);  // first two bytes of the sub-format GUID
        consumed = 26;
      }
      is.ignore(static_cast<std::streamsize>(size - consumed + (size & 1)));
      have_fmt = true;
    } else if (chunk == "data") {
      if (!have_fmt) throw ValidationError(where + ": data chunk before fmt chunk");
      if (channels != 1) throw ValidationError(where + ": expected mono audio, found " + std::to_string(channels) + " channels");
      Waveform wave;
      wave.sample_rate = static_cast<int>(rate);
      if (format == 1 && bits == 16) {
        wave.samples.resize(size / 2);
        for (auto& s : wave.samples) s = binio::read_le<std::int16_t>(is, where) / 32768.0;
      } else if (format == 3 && bits == 32) {
        wave.samples.resize(size / 4);
        for (auto& s : wave.samples) s = binio::read_le<float>(is, where);
      } else {
        throw ValidationError(where + ": unsupported sample format (format tag " + std::to_string(format) + ", " +
                              std::to_string(bits) + " bits); use 16-bit PCM or 32-bit float");
      }
      return wave;
    } else {
      is.ignore(static_cast<std::streamsize>(size + (size & 1)));
    }
  }
}

inline void write_wav(const std::filesystem::path& path, const Waveform& wave, WavSampleFormat fmt = WavSampleFormat::Float32) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write wav file " + path.string());
  const std::uint16_t bits = fmt == WavSampleFormat::Pcm16 ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.samples.size() * bits / 8);
  os.write("RIFF", 4);
  binio::write_le<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  binio::write_le<std::uint32_t>(os, 16);
  binio::write_le<std::uint16_t>(os, fmt == WavSampleFormat::Pcm16 ? 1 : 3);
  binio::write_le<std::uint16_t>(os, 1);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(wave.sample_rate));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(wave.sample_rate) * bits / 8);
  binio::write_le<std::uint16_t>(os, bits / 8);
  binio::write_le<std::uint16_t>(os, bits);
  os.write("data", 4);
  binio::write_le<std::uint32_t>(os, data_bytes);
  for (double s : wave.samples) {
    if (fmt == WavSampleFormat::Pcm16) {
      const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
      binio::write_le<std::int16_t>(os, static_cast<std::int16_t>(scaled));
    } else {
      binio::write_le<float>(os, static_cast<float>(s));
    }
  }
  if (!os) throw Error("failed writing wav file " + path.string());
}

inline constexpr std::uint16_t kLfbeFormatVersion = 1;

/// "LFBE" magic, u16 version, u32 T, u32 F, then T*F row-major float32.
inline void write_lfbe(std::ostream& os, const FeatureMatrix& fm) {
  os.write("LFBE", 4);
  binio::write_le<std::uint16_t>(os, kLfbeFormatVersion);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(fm.frames()));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(fm.dims()));
  for (Eigen::Index t = 0; t < fm.frames(); ++t)
    for (Eigen::Index f = 0; f < fm.dims(); ++f) binio::write_le<float>(os, static_cast<float>(fm.values(t, f)));
}

inline FeatureMatrix read_lfbe(std::istream& is) {
  binio::expect_magic(is, "LFBE", "feature file");
  const auto version = binio::read_le<std::uint16_t>(is, "feature file version");
  if (version != kLfbeFormatVersion) throw ValidationError("unsupported feature file version " + std::to_string(version));
  const auto rows = binio::read_le<std::uint32_t>(is, "feature rows");
  const auto cols = binio::read_le<std::uint32_t>(is, "feature cols");
  FeatureMatrix fm;
  fm.n_mels = static_cast<int>(cols);
  fm.values.resize(rows, cols);
  for (std::uint32_t t = 0; t < rows; ++t)
    for (std::uint32_t f = 0; f < cols; ++f) fm.values(t, f) = binio::read_le<float>(is, "feature values");
  return fm;
}

}  // namespace raec

#endif  // RAEC_AUDIO_IO_HPP_
