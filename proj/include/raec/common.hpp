#ifndef RAEC_COMMON_HPP_
#define RAEC_COMMON_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <iostream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace raec {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input, shape or configuration. The CLI maps it to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::function<void(std::string_view)>& warning_sink() {
  static std::function<void(std::string_view)> sink = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

}  // namespace detail

inline void warn(std::string_view msg) {
  if (detail::warning_sink()) detail::warning_sink()(msg);
}

/// Replaces the warning sink; returns the previous one. An empty function silences warnings.
inline std::function<void(std::string_view)> set_warning_sink(std::function<void(std::string_view)> sink) {
  auto previous = std::move(detail::warning_sink());
  detail::warning_sink() = std::move(sink);
  return previous;
}

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError("cannot parse '" + std::string(s) + "' as a number for " + std::string(what));
  return v;
}

template <typename Int>
Int parse_integer(std::string_view s, std::string_view what) {
  Int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError("cannot parse '" + std::string(s) + "' as an integer for " + std::string(what));
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Seeded random numbers. Distributions are written out here so that a seed
// produces the same stream with any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ValidationError("Rng::below called with n = 0");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Deterministic seed derivation for sub-streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  Rng r(base ^ (0xd1b54a32d192ed03ULL * (stream + 1)));
  return r.next();
}

// Little-endian binary helpers shared by the file formats.
namespace binio {

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, std::string_view what) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ValidationError("truncated input while reading " + std::string(what));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void expect_magic(std::istream& is, std::string_view magic, std::string_view what) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic)
    throw ValidationError(std::string(what) + ": bad magic, expected '" + std::string(magic) + "'");
}

}  // namespace binio

}  // namespace raec

#endif  // RAEC_COMMON_HPP_
