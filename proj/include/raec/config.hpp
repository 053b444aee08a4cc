#ifndef RAEC_CONFIG_HPP_
#define RAEC_CONFIG_HPP_

// Flat "key = value" configuration files. Lines starting with '#' are comments.

#include <raec/common.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace raec {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is, std::string_view source = "config") {
    KeyValueConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      auto s = trim(line);
      if (s.empty() || s.front() == '#') continue;
      const auto eq = s.find('=');
      if (eq == std::string_view::npos)
        throw ValidationError(std::string(source) + ":" + std::to_string(lineno) + ": expected 'key = value'");
      const auto key = trim(s.substr(0, eq));
      if (key.empty()) throw ValidationError(std::string(source) + ":" + std::to_string(lineno) + ": empty key");
      cfg.values_[std::string(key)] = std::string(trim(s.substr(eq + 1)));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open config file " + path.string());
    return parse(is, path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  /// Overlays every entry of `other` onto this config.
  void merge(const KeyValueConfig& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  std::string get(const std::string& key, std::string fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  double get(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_double(it->second, key);
  }
  long long get(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_integer<long long>(it->second, key);
  }
  std::uint64_t get(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : parse_integer<std::uint64_t>(it->second, key);
  }

  std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (auto part : split(it->second, ',')) out.push_back(parse_double(trim(part), key));
    return out;
  }

  void write(std::ostream& os) const {
    for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  }

  std::string text() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

}  // namespace raec

#endif  // RAEC_CONFIG_HPP_
