#ifndef RAEC_EXPERIMENT_HPP_
#define RAEC_EXPERIMENT_HPP_

// Desk-scale benchmark: toy assets, train/dev/test corpora, a position grid,
// and multi-trial training of several model configurations.

#include <raec/evalkit.hpp>

namespace raec {

struct DeskScaleConfig {
  ToyAssetConfig assets;
  LfbeConfig lfbe;
  std::string event_type = "tone";
  std::size_t n_train = 500;
  std::size_t n_dev = 100;
  std::size_t n_test = 200;
  std::vector<double> ebr_set = {-6.0, 0.0, 6.0};
  std::size_t n_positions = 10;
  std::vector<double> grid_ebr = {0.0};
  std::size_t grid_backgrounds = 10;
  std::uint64_t seed = 2018;
  TrainConfig train;

  DeskScaleConfig() {
    lfbe.n_mels = 40;
    train.model.input_dim = 40;
    train.model.units = 32;
    train.hyper.batch_size = 16;
    train.n_epochs = 30;
    train.n_trials = 5;
  }
};

inline DeskScaleConfig desk_scale_from(const KeyValueConfig& kv) {
  DeskScaleConfig c;
  c.assets.sample_rate = static_cast<int>(kv.get("sample_rate", static_cast<long long>(c.assets.sample_rate)));
  c.assets.events_per_class = static_cast<std::size_t>(kv.get("events_per_class", static_cast<long long>(c.assets.events_per_class)));
  c.assets.backgrounds = static_cast<std::size_t>(kv.get("backgrounds", static_cast<long long>(c.assets.backgrounds)));
  c.assets.event_min_s = kv.get("event_min_s", c.assets.event_min_s);
  c.assets.event_max_s = kv.get("event_max_s", c.assets.event_max_s);
  c.assets.background_s = kv.get("clip_s", c.assets.background_s);
  c.lfbe.frame_ms = kv.get("frame_ms", c.lfbe.frame_ms);
  c.lfbe.hop_ms = kv.get("hop_ms", c.lfbe.hop_ms);
  c.lfbe.n_mels = static_cast<int>(kv.get("n_mels", static_cast<long long>(c.lfbe.n_mels)));
  c.lfbe.energy_floor = kv.get("energy_floor", c.lfbe.energy_floor);
  c.event_type = kv.get("event_type", c.event_type);
  c.n_train = static_cast<std::size_t>(kv.get("n_train", static_cast<long long>(c.n_train)));
  c.n_dev = static_cast<std::size_t>(kv.get("n_dev", static_cast<long long>(c.n_dev)));
  c.n_test = static_cast<std::size_t>(kv.get("n_test", static_cast<long long>(c.n_test)));
  c.ebr_set = kv.get_list("ebr_set", c.ebr_set);
  c.n_positions = static_cast<std::size_t>(kv.get("n_positions", static_cast<long long>(c.n_positions)));
  c.grid_ebr = kv.get_list("grid_ebr", c.grid_ebr);
  c.grid_backgrounds = static_cast<std::size_t>(kv.get("grid_backgrounds", static_cast<long long>(c.grid_backgrounds)));
  c.seed = kv.get("seed", c.seed);
  KeyValueConfig tkv;
  write_train_config(tkv, c.train);
  tkv.merge(kv);
  tkv.set("n_mels", std::to_string(c.lfbe.n_mels));
  c.train = train_config_from(tkv);
  return c;
}

inline void write_desk_scale(KeyValueConfig& kv, const DeskScaleConfig& c) {
  write_train_config(kv, c.train);
  kv.set("sample_rate", std::to_string(c.assets.sample_rate));
  kv.set("events_per_class", std::to_string(c.assets.events_per_class));
  kv.set("backgrounds", std::to_string(c.assets.backgrounds));
  kv.set("event_min_s", format_double(c.assets.event_min_s));
  kv.set("event_max_s", format_double(c.assets.event_max_s));
  kv.set("clip_s", format_double(c.assets.background_s));
  kv.set("frame_ms", format_double(c.lfbe.frame_ms));
  kv.set("hop_ms", format_double(c.lfbe.hop_ms));
  kv.set("n_mels", std::to_string(c.lfbe.n_mels));
  kv.set("energy_floor", format_double(c.lfbe.energy_floor));
  kv.set("event_type", c.event_type);
  kv.set("n_train", std::to_string(c.n_train));
  kv.set("n_dev", std::to_string(c.n_dev));
  kv.set("n_test", std::to_string(c.n_test));
  kv.set("ebr_set", join_doubles(c.ebr_set));
  kv.set("n_positions", std::to_string(c.n_positions));
  kv.set("grid_ebr", join_doubles(c.grid_ebr));
  kv.set("grid_backgrounds", std::to_string(c.grid_backgrounds));
  kv.set("seed", std::to_string(c.seed));
}

/// Everything a desk-scale run trains and evaluates on.
struct DeskScaleData {
  AssetPool pool;
  CorpusManifest train_manifest, dev_manifest, test_manifest, grid_manifest;
  Corpus train, dev, test, grid;
};

inline DeskScaleData prepare_desk_scale(const DeskScaleConfig& c, std::size_t jobs = 1) {
  DeskScaleData d;
  d.pool = gen_toy_assets(derive_seed(c.seed, 10), c.assets);
  auto opts = [&](std::uint64_t k) {
    CorpusOptions o;
    o.ebr_set = c.ebr_set;
    o.seed = derive_seed(c.seed, k);
    return o;
  };
  d.train_manifest = gen_training_corpus(d.pool, c.event_type, Split::Train, c.n_train, opts(11));
  d.dev_manifest = gen_training_corpus(d.pool, c.event_type, Split::Dev, c.n_dev, opts(12));
  d.test_manifest = gen_training_corpus(d.pool, c.event_type, Split::Test, c.n_test, opts(13));
  AssetPool grid_pool = d.pool;
  grid_pool.backgrounds.resize(std::min(c.grid_backgrounds, grid_pool.backgrounds.size()));
  const auto positions = position_grid(c.assets.background_s, c.n_positions);
  d.grid_manifest = gen_position_grid(grid_pool, c.event_type, positions, c.grid_ebr, derive_seed(c.seed, 14));
  d.train = build_corpus(d.train_manifest, d.pool, c.lfbe, true, jobs);
  d.dev = build_corpus(d.dev_manifest, d.pool, c.lfbe, true, jobs);
  d.test = build_corpus(d.test_manifest, d.pool, c.lfbe, true, jobs);
  d.grid = build_corpus(d.grid_manifest, d.pool, c.lfbe, true, jobs);
  return d;
}

/// Per-trial outcome of one model configuration.
struct TrialOutcome {
  double test_accuracy = 0.0;
  std::vector<PositionCurve> curves;  // one per grid EBR
  TrainHistory history;
};

struct ConfigOutcome {
  ModelConfig model;
  std::string label;  // pooling name, suffixed for non-default architectures
  std::vector<TrialOutcome> trials;
};

inline std::string config_label(const ModelConfig& m) {
  std::string s(name(m.pooling));
  if (m.direction == Direction::Bi) s += "@bi";
  return s;
}

/// Trains cfg.train.n_trials models of `model` and scores each on test and grid data.
inline ConfigOutcome run_config(const DeskScaleConfig& c, const DeskScaleData& d, const ModelConfig& model, std::size_t jobs = 1) {
  TrainConfig tc = c.train;
  tc.model = model;
  ConfigOutcome out{model, config_label(model), std::vector<TrialOutcome>(tc.n_trials)};
  parallel_for(tc.n_trials, jobs, [&](std::size_t k) {
    TrainConfig trial = tc;
    trial.seed = tc.seed + k;
    TrainResult r;
    try {
      r = train(trial, d.train, d.dev);
    } catch (const ValidationError& e) {
      throw ValidationError("trial " + std::to_string(k) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error("trial " + std::to_string(k) + ": " + e.what());
    }
    auto& t = out.trials[k];
    const auto recs = classify_corpus(r.model, d.test);
    t.test_accuracy = accuracy(recs);
    t.curves = recall_by_position(score_corpus(r.model, d.grid), d.grid_manifest, d.pool, out.label);
    t.history = std::move(r.history);
  });
  return out;
}

/// Curve for `ebr_db` in one trial.
inline const PositionCurve& curve_at(const TrialOutcome& t, double ebr_db) {
  for (const auto& c : t.curves)
    if (c.ebr_db == ebr_db) return c;
  throw ValidationError("no position curve at " + format_double(ebr_db) + " dB");
}

inline void append_report(Report& report, const DeskScaleConfig& c, const ConfigOutcome& o) {
  for (std::size_t k = 0; k < o.trials.size(); ++k)
    report.accuracy.push_back({c.event_type, o.label, o.model.n_layers, c.n_train, k, o.trials[k].test_accuracy});
  for (double ebr : c.grid_ebr) {
    std::vector<PositionCurve> per_trial;
    for (const auto& t : o.trials) per_trial.push_back(curve_at(t, ebr));
    report.curves.push_back(mean_curve(per_trial));
  }
}

}  // namespace raec

#endif  // RAEC_EXPERIMENT_HPP_
