#ifndef RAEC_SYNTH_HPP_
#define RAEC_SYNTH_HPP_

// Mixture synthesis: event clips laid over background clips at a requested
// event-to-background ratio (EBR) and onset, corpus manifests, and a seeded
// generator of toy event/background assets.

#include <raec/audio_io.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace raec {

inline double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

inline double peak(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

enum class EbrMode { Rms, Peak };

/// Gain that puts the event at ebr_db relative to the background segment it overlays.
inline double ebr_gain(std::span<const double> event, std::span<const double> background_segment, double ebr_db, EbrMode mode = EbrMode::Rms) {
  if (event.empty() || background_segment.empty()) throw ValidationError("ebr_gain needs non-empty event and background");
  const double ev = mode == EbrMode::Rms ? rms(event) : peak(event);
  const double bg = mode == EbrMode::Rms ? rms(background_segment) : peak(background_segment);
  if (!(ev > 0.0)) throw ValidationError("unusable event asset: event is silent");
  if (!(bg > 0.0)) throw ValidationError("background segment is silent; EBR is undefined");
  return std::pow(10.0, ebr_db / 20.0) * bg / ev;
}

inline std::size_t onset_sample(double onset_s, int sample_rate) {
  if (!(onset_s >= 0.0)) throw ValidationError("onset must be >= 0 seconds");
  return static_cast<std::size_t>(std::llround(onset_s * sample_rate));
}

/// Background with gain * event added over [onset, onset + event length).
inline Waveform mix(const Waveform& event, const Waveform& background, double ebr_db, double onset_s, EbrMode mode = EbrMode::Rms) {
  if (event.sample_rate != background.sample_rate)
    throw ValidationError("event and background sample rates differ (" + std::to_string(event.sample_rate) + " vs " + std::to_string(background.sample_rate) + ")");
  if (event.samples.empty() || background.samples.empty()) throw ValidationError("mix needs non-empty event and background");
  const auto start = onset_sample(onset_s, background.sample_rate);
  if (start + event.size() > background.size())
    throw ValidationError("placement out of range: event of " + std::to_string(event.size()) + " samples at sample " + std::to_string(start) +
                          " exceeds background of " + std::to_string(background.size()));
  Waveform out = background;
  if (peak(event.samples) == 0.0) return out;
  const std::span<const double> segment(background.samples.data() + start, event.size());
  const double gain = ebr_gain(event.samples, segment, ebr_db, mode);
  for (std::size_t i = 0; i < event.size(); ++i) out.samples[start + i] = background.samples[start + i] + gain * event.samples[i];
  return out;
}

/// EBR of a rendered mixture, measured over the event window as 20 log10(rms(mix - bg) / rms(bg)).
inline double measured_ebr_db(const Waveform& mixture, const Waveform& background, std::size_t start, std::size_t length) {
  std::vector<double> added(length);
  for (std::size_t i = 0; i < length; ++i) added[i] = mixture.samples[start + i] - background.samples[start + i];
  return 20.0 * std::log10(rms(added) / rms(std::span<const double>(background.samples.data() + start, length)));
}

enum class Split { Train, Dev, Test, Sensitivity };

inline std::string_view name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
    case Split::Sensitivity: return "sensitivity";
  }
  return "train";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  if (s == "sensitivity") return Split::Sensitivity;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

struct MixtureSpec {
  std::string id;
  std::optional<std::string> event_id;  // empty for negatives
  std::string background_id;
  double ebr_db = 0.0;
  double onset_s = 0.0;
  int label = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const MixtureSpec&, const MixtureSpec&) = default;
};

struct CorpusManifest {
  Split split = Split::Train;
  std::string asset_dir;
  std::uint64_t seed = 0;
  std::vector<MixtureSpec> specs;

  friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

inline constexpr int kManifestVersion = 1;
inline constexpr std::string_view kManifestColumns = "id\tsplit\tevent\tbackground\tebr_db\tonset_s\tlabel\tseed";

inline void write_manifest(std::ostream& os, const CorpusManifest& m) {
  os << "#raec-manifest\tversion=" << kManifestVersion << "\tsplit=" << name(m.split) << "\tseed=" << m.seed << "\tassets=" << m.asset_dir << '\n';
  os << kManifestColumns << '\n';
  for (const auto& s : m.specs) {
    os << s.id << '\t' << name(m.split) << '\t' << (s.event_id ? *s.event_id : "-") << '\t' << s.background_id << '\t' << format_double(s.ebr_db)
       << '\t' << format_double(s.onset_s) << '\t' << s.label << '\t' << s.seed << '\n';
  }
}

inline std::string manifest_text(const CorpusManifest& m) {
  std::ostringstream os;
  write_manifest(os, m);
  return os.str();
}

inline CorpusManifest read_manifest(std::istream& is) {
  CorpusManifest m;
  std::string line;
  if (!std::getline(is, line) || !line.starts_with("#raec-manifest")) throw ValidationError("not a manifest file (missing #raec-manifest header)");
  for (auto field : split(line, '\t')) {
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) continue;
    const auto key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "version" && parse_integer<int>(value, "manifest version") != kManifestVersion)
      throw ValidationError("unsupported manifest version " + std::string(value));
    if (key == "split") m.split = parse_split(value);
    if (key == "seed") m.seed = parse_integer<std::uint64_t>(value, "manifest seed");
    if (key == "assets") m.asset_dir = std::string(value);
  }
  if (!std::getline(is, line) || trim(line) != kManifestColumns) throw ValidationError("manifest column header mismatch");
  std::size_t lineno = 2;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), '\t');
    if (f.size() != 8) throw ValidationError("manifest line " + std::to_string(lineno) + ": expected 8 fields, got " + std::to_string(f.size()));
    MixtureSpec s;
    s.id = std::string(f[0]);
    if (f[2] != "-") s.event_id = std::string(f[2]);
    s.background_id = std::string(f[3]);
    s.ebr_db = parse_double(f[4], "ebr_db");
    s.onset_s = parse_double(f[5], "onset_s");
    s.label = parse_integer<int>(f[6], "label");
    s.seed = parse_integer<std::uint64_t>(f[7], "seed");
    if ((s.label == 1) != s.event_id.has_value())
      throw ValidationError("manifest line " + std::to_string(lineno) + ": label must be 1 exactly when an event is present");
    m.specs.push_back(std::move(s));
  }
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const CorpusManifest& m) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write manifest " + path.string());
  write_manifest(os, m);
}

inline CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open manifest " + path.string());
  return read_manifest(is);
}

struct Asset {
  std::string id;           // path relative to the asset directory
  std::string event_class;  // empty for backgrounds
  Waveform wave;
};

struct AssetPool {
  std::vector<Asset> events;
  std::vector<Asset> backgrounds;

  const Asset& find(std::string_view id) const {
    for (const auto& a : events)
      if (a.id == id) return a;
    for (const auto& a : backgrounds)
      if (a.id == id) return a;
    throw ValidationError("unknown asset '" + std::string(id) + "'");
  }

  std::vector<const Asset*> events_of(std::string_view cls) const {
    std::vector<const Asset*> out;
    for (const auto& a : events)
      if (a.event_class == cls) out.push_back(&a);
    return out;
  }

  std::vector<std::string> event_classes() const {
    std::vector<std::string> out;
    for (const auto& a : events)
      if (std::find(out.begin(), out.end(), a.event_class) == out.end()) out.push_back(a.event_class);
    return out;
  }
};

inline bool fits(const Waveform& event, const Waveform& background, double onset_s) {
  return onset_sample(onset_s, background.sample_rate) + event.size() <= background.size();
}

/// Audio for one manifest entry. Negatives are the background itself.
inline Waveform render(const MixtureSpec& spec, const AssetPool& pool, EbrMode mode = EbrMode::Rms) {
  const auto& bg = pool.find(spec.background_id).wave;
  if (!spec.event_id) return bg;
  return mix(pool.find(*spec.event_id).wave, bg, spec.ebr_db, spec.onset_s, mode);
}

struct CorpusOptions {
  std::vector<double> ebr_set = {-6.0, 0.0, 6.0};
  double positive_ratio = 0.5;
  std::uint64_t seed = 0;
};

/// Random mixtures of one event class: positives at uniformly drawn EBRs and
/// onsets, negatives as raw backgrounds, in shuffled order.
inline CorpusManifest gen_training_corpus(const AssetPool& pool, std::string_view event_class, Split split_kind, std::size_t n_mixtures,
                                          const CorpusOptions& opt) {
  const auto events = pool.events_of(event_class);
  if (events.empty()) throw ValidationError("no event assets of class '" + std::string(event_class) + "'");
  if (pool.backgrounds.empty()) throw ValidationError("no background assets");
  if (opt.ebr_set.empty()) throw ValidationError("empty EBR set");
  if (!(opt.positive_ratio >= 0.0 && opt.positive_ratio <= 1.0)) throw ValidationError("positive ratio must lie in [0, 1]");

  bool any_feasible = false;
  for (const auto* e : events)
    for (const auto& b : pool.backgrounds) any_feasible = any_feasible || e->wave.size() <= b.wave.size();
  const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n_mixtures) * opt.positive_ratio));
  if (n_pos > 0 && !any_feasible) throw ValidationError("no event fits inside any background");

  CorpusManifest m;
  m.split = split_kind;
  m.seed = opt.seed;
  Rng rng(opt.seed);
  std::vector<int> labels(n_mixtures, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);
  rng.shuffle(labels);

  std::set<std::pair<std::size_t, std::size_t>> warned;
  for (std::size_t k = 0; k < n_mixtures; ++k) {
    MixtureSpec s;
    char id[32];
    std::snprintf(id, sizeof(id), "%s-%06zu", std::string(name(split_kind)).c_str(), k);
    s.id = id;
    s.label = labels[k];
    s.seed = derive_seed(opt.seed, k);
    if (s.label == 1) {
      while (true) {
        const auto ei = rng.below(events.size());
        const auto bi = rng.below(pool.backgrounds.size());
        const auto& ev = events[ei]->wave;
        const auto& bg = pool.backgrounds[bi].wave;
        if (ev.size() > bg.size()) {
          if (warned.insert({ei, bi}).second) warn("event " + events[ei]->id + " does not fit in background " + pool.backgrounds[bi].id + "; skipped");
          continue;
        }
        s.event_id = events[ei]->id;
        s.background_id = pool.backgrounds[bi].id;
        s.ebr_db = opt.ebr_set[rng.below(opt.ebr_set.size())];
        const auto start = rng.below(bg.size() - ev.size() + 1);
        s.onset_s = static_cast<double>(start) / bg.sample_rate;
        break;
      }
    } else {
      s.background_id = pool.backgrounds[rng.below(pool.backgrounds.size())].id;
    }
    m.specs.push_back(std::move(s));
  }
  return m;
}

/// Every (event, background, position, EBR) combination where the event fits; all positives.
inline CorpusManifest gen_position_grid(const AssetPool& pool, std::string_view event_class, std::span<const double> positions_s,
                                        std::span<const double> ebr_set, std::uint64_t seed = 0) {
  CorpusManifest m;
  m.split = Split::Sensitivity;
  m.seed = seed;
  std::size_t k = 0;
  for (const auto* ev : pool.events_of(event_class)) {
    for (const auto& bg : pool.backgrounds) {
      for (double pos : positions_s) {
        if (!fits(ev->wave, bg.wave, pos)) continue;
        for (double ebr : ebr_set) {
          MixtureSpec s;
          char id[32];
          std::snprintf(id, sizeof(id), "sens-%07zu", k);
          s.id = id;
          s.event_id = ev->id;
          s.background_id = bg.id;
          s.ebr_db = ebr;
          s.onset_s = pos;
          s.label = 1;
          s.seed = derive_seed(seed, k);
          m.specs.push_back(std::move(s));
          ++k;
        }
      }
    }
  }
  return m;
}

/// Grid of n whole-step onsets spanning a clip, mirroring 0, 1, ..., 29 s on 30 s clips.
inline std::vector<double> position_grid(double clip_s, std::size_t n_positions) {
  std::vector<double> p(n_positions);
  for (std::size_t i = 0; i < n_positions; ++i) p[i] = clip_s * static_cast<double>(i) / static_cast<double>(n_positions);
  return p;
}

struct ToyAssetConfig {
  int sample_rate = 8000;
  std::size_t events_per_class = 20;
  std::size_t backgrounds = 20;
  double event_min_s = 0.1;
  double event_max_s = 0.5;
  double background_s = 3.0;
};

inline constexpr std::array<std::string_view, 3> kToyEventClasses = {"tone", "chirp", "burst"};

namespace detail {

inline double raised_cosine_fade(std::size_t i, std::size_t n, std::size_t fade) {
  if (fade == 0) return 1.0;
  auto ramp = [&](std::size_t k) { return k >= fade ? 1.0 : 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(k) / static_cast<double>(fade)); };
  return std::min(ramp(i), ramp(n - 1 - i));
}

inline Waveform toy_event(std::string_view cls, std::size_t n, int sr, Rng& rng) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  const double dt = 1.0 / sr;
  const auto fade = static_cast<std::size_t>(0.01 * sr);
  if (cls == "tone") {
    // Harmonic tone with tremolo, 300-900 Hz fundamental.
    const double f0 = rng.uniform(300.0, 900.0);
    const double am_rate = rng.uniform(4.0, 12.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) * dt;
      const double am = 1.0 - 0.4 * (0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * am_rate * t));
      const double s = std::sin(2.0 * std::numbers::pi * f0 * t + phase) + 0.5 * std::sin(4.0 * std::numbers::pi * f0 * t + phase);
      w.samples[i] = am * s * raised_cosine_fade(i, n, fade);
    }
  } else if (cls == "chirp") {
    // Linear upward sweep inside 1-2.8 kHz.
    const double f_start = rng.uniform(1000.0, 1400.0);
    const double f_end = rng.uniform(2200.0, 2800.0);
    const double dur = static_cast<double>(n) * dt;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) * dt;
      const double ph = 2.0 * std::numbers::pi * (f_start * t + 0.5 * (f_end - f_start) / dur * t * t);
      w.samples[i] = std::sin(ph) * raised_cosine_fade(i, n, fade);
    }
  } else if (cls == "burst") {
    // High-passed noise with a sharp attack and exponential decay.
    const double tau = rng.uniform(0.03, 0.1);
    double prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) * dt;
      const double x = rng.gaussian();
      const double hp = x - prev;
      prev = x;
      const double attack = std::min(1.0, t / 0.002);
      w.samples[i] = hp * attack * std::exp(-t / tau) * raised_cosine_fade(i, n, fade / 4);
    }
  } else {
    throw ValidationError("unknown toy event class '" + std::string(cls) + "'");
  }
  const double p = peak(w.samples);
  for (auto& s : w.samples) s = static_cast<float>(s * 0.5 / p);
  return w;
}

inline Waveform toy_background(std::size_t n, int sr, Rng& rng) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  const double a = rng.uniform(0.6, 0.95);
  const double white_mix = rng.uniform(0.05, 0.3);
  const double mod_rate = rng.uniform(0.1, 0.5);
  const double mod_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.gaussian();
    y = a * y + (1.0 - a) * x;
    const double t = static_cast<double>(i) / sr;
    const double mod = 1.0 + 0.3 * std::sin(2.0 * std::numbers::pi * mod_rate * t + mod_phase);
    w.samples[i] = mod * (y + white_mix * (1.0 - a) * x);
  }
  const double target = rng.uniform(0.02, 0.1);
  const double r = rms(w.samples);
  for (auto& s : w.samples) s = static_cast<float>(s * target / r);
  return w;
}

}  // namespace detail

/// Seeded toy pools: short tone / chirp / noise-burst events and colored-noise backgrounds.
/// Samples are rounded to float precision so a WAV round trip is exact.
inline AssetPool gen_toy_assets(std::uint64_t seed, const ToyAssetConfig& cfg) {
  if (cfg.sample_rate <= 0 || !(cfg.event_min_s > 0.0) || cfg.event_max_s < cfg.event_min_s || !(cfg.background_s > 0.0))
    throw ValidationError("invalid toy asset configuration");
  AssetPool pool;
  for (std::size_t c = 0; c < kToyEventClasses.size(); ++c) {
    const auto cls = kToyEventClasses[c];
    Rng rng(derive_seed(seed, c));
    for (std::size_t k = 0; k < cfg.events_per_class; ++k) {
      const double dur = rng.uniform(cfg.event_min_s, cfg.event_max_s);
      const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(dur * cfg.sample_rate)));
      char id[64];
      std::snprintf(id, sizeof(id), "events/%s_%03zu.wav", std::string(cls).c_str(), k);
      pool.events.push_back({id, std::string(cls), detail::toy_event(cls, n, cfg.sample_rate, rng)});
    }
  }
  Rng rng(derive_seed(seed, 1000));
  const auto n = static_cast<std::size_t>(std::llround(cfg.background_s * cfg.sample_rate));
  for (std::size_t k = 0; k < cfg.backgrounds; ++k) {
    char id[64];
    std::snprintf(id, sizeof(id), "backgrounds/bg_%03zu.wav", k);
    pool.backgrounds.push_back({id, "", detail::toy_background(n, cfg.sample_rate, rng)});
  }
  return pool;
}

inline constexpr std::string_view kAssetIndexName = "assets.tsv";

/// Writes every asset as a float WAV plus an index (path, kind, class).
inline void save_assets(const std::filesystem::path& dir, const AssetPool& pool) {
  std::filesystem::create_directories(dir / "events");
  std::filesystem::create_directories(dir / "backgrounds");
  std::ofstream idx(dir / std::string(kAssetIndexName));
  if (!idx) throw Error("cannot write asset index in " + dir.string());
  idx << "path\tkind\tclass\n";
  for (const auto& a : pool.events) {
    write_wav(dir / a.id, a.wave);
    idx << a.id << "\tevent\t" << a.event_class << '\n';
  }
  for (const auto& a : pool.backgrounds) {
    write_wav(dir / a.id, a.wave);
    idx << a.id << "\tbackground\t-\n";
  }
}

inline AssetPool load_assets(const std::filesystem::path& dir) {
  std::ifstream idx(dir / std::string(kAssetIndexName));
  if (!idx) throw ValidationError("no asset index at " + (dir / std::string(kAssetIndexName)).string());
  AssetPool pool;
  std::string line;
  std::getline(idx, line);
  while (std::getline(idx, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), '\t');
    if (f.size() != 3) throw ValidationError("malformed asset index line: " + line);
    Asset a{std::string(f[0]), f[1] == "event" ? std::string(f[2]) : std::string(), read_wav(dir / std::string(f[0]))};
    (f[1] == "event" ? pool.events : pool.backgrounds).push_back(std::move(a));
  }
  return pool;
}

}  // namespace raec

#endif  // RAEC_SYNTH_HPP_
