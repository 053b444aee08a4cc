#ifndef RAEC_CLI_HPP_
#define RAEC_CLI_HPP_

// Command-line frontend. Settings resolve as flags > config file > defaults and
// the merged result is written to <out>/resolved.cfg on every run.

#include <raec/checkpoint.hpp>
#include <raec/experiment.hpp>
#include <raec/selftest.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <iomanip>

namespace raec::cli {

inline constexpr std::string_view kSnapshotName = "resolved.cfg";

struct RunOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "raec-out";
  std::size_t jobs = 1;
  std::optional<std::string> event_type;
  std::vector<std::string> pooling;
  std::vector<double> ebr;
  std::optional<std::size_t> trials;
  // subcommand-specific
  std::string assets_dir;
  std::string corpus_dir;
  std::string model_path;
  std::string input_dir;
  bool render = false;
  bool with_bi = false;
};

/// Defaults, then the config file, then flags.
inline KeyValueConfig resolve(const RunOptions& o) {
  KeyValueConfig kv;
  write_desk_scale(kv, DeskScaleConfig{});
  if (!o.config_path.empty()) kv.merge(KeyValueConfig::load(o.config_path));
  if (o.seed) kv.set("seed", std::to_string(*o.seed));
  if (o.event_type) kv.set("event_type", *o.event_type);
  if (o.pooling.size() == 1) kv.set("pooling", o.pooling.front());
  if (!o.ebr.empty()) kv.set("ebr_set", join_doubles(o.ebr));
  if (o.trials) kv.set("trials", std::to_string(*o.trials));
  return kv;
}

class Runner {
 public:
  Runner(std::string command, const RunOptions& o, std::ostream& out)
      : command_(std::move(command)), opt_(o), out_(out), kv_(resolve(o)), cfg_(desk_scale_from(kv_)), dir_(o.out) {
    if (o.jobs < 1) throw ValidationError("--jobs must be at least 1");
    for (const auto& p : o.pooling) parse_pooling_kind(p);
    kv_.set("command", command_);
    // Normalise through the typed config so the snapshot shows effective values.
    write_desk_scale(kv_, cfg_);
    std::filesystem::create_directories(dir_);
    detail::write_file(dir_ / std::string(kSnapshotName), [&](std::ostream& os) { kv_.write(os); });
  }

  void run() {
    if (command_ == "assets") return assets();
    if (command_ == "synth") return synth();
    if (command_ == "train") return train_cmd();
    if (command_ == "eval") return eval();
    if (command_ == "sweep") return sweep();
    if (command_ == "report") return report();
    if (command_ == "selftest") return selftest();
    throw ValidationError("unknown subcommand " + command_);
  }

  bool failed() const { return failed_; }

 private:
  void log(const std::string& s) { out_ << s << '\n' << std::flush; }

  AssetPool toy_pool() const { return gen_toy_assets(derive_seed(cfg_.seed, 10), cfg_.assets); }

  static std::filesystem::path existing_dir(const std::string& p, std::string_view what) {
    if (p.empty()) throw ValidationError(std::string(what) + " path is required");
    if (!std::filesystem::is_directory(p)) throw ValidationError(std::string(what) + " not found: " + p);
    return p;
  }

  void assets() {
    const auto pool = toy_pool();
    save_assets(dir_ / "assets", pool);
    log("wrote " + std::to_string(pool.events.size()) + " events and " + std::to_string(pool.backgrounds.size()) + " backgrounds to " +
        (dir_ / "assets").string());
  }

  void synth() {
    AssetPool pool;
    std::string asset_ref;
    if (opt_.assets_dir.empty()) {
      pool = toy_pool();
      save_assets(dir_ / "assets", pool);
      asset_ref = "assets";
    } else {
      pool = load_assets(existing_dir(opt_.assets_dir, "asset directory"));
      asset_ref = std::filesystem::absolute(opt_.assets_dir).lexically_normal().string();
    }
    DeskScaleConfig c = cfg_;
    auto opts = [&](std::uint64_t k) {
      CorpusOptions o;
      o.ebr_set = c.ebr_set;
      o.seed = derive_seed(c.seed, k);
      return o;
    };
    std::vector<std::pair<std::string, CorpusManifest>> ms;
    ms.emplace_back("train", gen_training_corpus(pool, c.event_type, Split::Train, c.n_train, opts(11)));
    ms.emplace_back("dev", gen_training_corpus(pool, c.event_type, Split::Dev, c.n_dev, opts(12)));
    ms.emplace_back("test", gen_training_corpus(pool, c.event_type, Split::Test, c.n_test, opts(13)));
    AssetPool grid_pool = pool;
    grid_pool.backgrounds.resize(std::min(c.grid_backgrounds, grid_pool.backgrounds.size()));
    const auto positions = position_grid(c.assets.background_s, c.n_positions);
    ms.emplace_back("grid", gen_position_grid(grid_pool, c.event_type, positions, c.grid_ebr, derive_seed(c.seed, 14)));
    for (auto& [split, m] : ms) {
      m.asset_dir = asset_ref;
      save_manifest(dir_ / (split + ".tsv"), m);
      log(split + ": " + std::to_string(m.specs.size()) + " mixtures");
      if (opt_.render && split != "grid") {
        const auto audio = dir_ / "audio" / split;
        std::filesystem::create_directories(audio);
        parallel_for(m.specs.size(), opt_.jobs, [&](std::size_t i) { write_wav(audio / (m.specs[i].id + ".wav"), render(m.specs[i], pool)); });
      }
    }
  }

  struct LoadedCorpus {
    AssetPool pool;
    std::map<std::string, CorpusManifest> manifests;
  };

  LoadedCorpus load_corpus(std::initializer_list<std::string_view> required, std::initializer_list<std::string_view> optional = {}) const {
    const auto dir = existing_dir(opt_.corpus_dir, "corpus directory");
    LoadedCorpus lc;
    auto load = [&](std::string_view split, bool must) {
      const auto p = dir / (std::string(split) + ".tsv");
      if (!std::filesystem::exists(p)) {
        if (must) throw ValidationError("corpus manifest not found: " + p.string());
        return;
      }
      lc.manifests[std::string(split)] = load_manifest(p);
    };
    for (auto s : required) load(s, true);
    for (auto s : optional) load(s, false);
    std::filesystem::path assets = opt_.assets_dir;
    if (assets.empty()) {
      const auto& ref = lc.manifests.begin()->second.asset_dir;
      if (ref.empty()) throw ValidationError("manifest names no asset directory; pass --assets");
      assets = std::filesystem::path(ref).is_absolute() ? std::filesystem::path(ref) : dir / ref;
    }
    lc.pool = load_assets(existing_dir(assets.string(), "asset directory"));
    return lc;
  }

  void train_cmd() {
    const auto lc = load_corpus({"train", "dev"});
    const auto tr = build_corpus(lc.manifests.at("train"), lc.pool, cfg_.lfbe, true, opt_.jobs);
    const auto dev = build_corpus(lc.manifests.at("dev"), lc.pool, cfg_.lfbe, true, opt_.jobs);
    const auto results = run_trials(cfg_.train, tr, dev, opt_.jobs);
    for (std::size_t k = 0; k < results.size(); ++k) {
      const auto& r = results[k];
      save_checkpoint(dir_ / ("model-" + std::to_string(k) + ".raec"), r.model);
      detail::write_file(dir_ / ("history-" + std::to_string(k) + ".csv"), [&](std::ostream& os) { write_history_csv(os, r.history); });
      const auto& sel = r.history.epochs[r.history.selected];
      log("trial " + std::to_string(k) + ": selected epoch " + std::to_string(sel.epoch) + ", dev loss " + format_double(sel.dev_loss) +
          ", dev accuracy " + format_double(sel.dev_acc));
    }
  }

  void eval() {
    if (opt_.model_path.empty()) throw ValidationError("--model is required");
    if (!std::filesystem::exists(opt_.model_path)) throw ValidationError("model checkpoint not found: " + opt_.model_path);
    const auto model = load_checkpoint(opt_.model_path);
    const auto lc = load_corpus({"test"}, {"grid"});
    const auto test = build_corpus(lc.manifests.at("test"), lc.pool, cfg_.lfbe, true, opt_.jobs);
    const auto recs = classify_corpus(model, test);
    detail::write_file(dir_ / "predictions.csv", [&](std::ostream& os) {
      os << "id,score,label,decision\n";
      for (const auto& r : recs) os << r.id << ',' << format_double(r.score) << ',' << r.label << ',' << (r.decision ? 1 : 0) << '\n';
    });
    Report rep;
    const std::string label = config_label(model.config);
    rep.accuracy.push_back({cfg_.event_type, label, model.config.n_layers, cfg_.n_train, 0, accuracy(recs)});
    if (lc.manifests.count("grid")) {
      const auto& gm = lc.manifests.at("grid");
      const auto grid = build_corpus(gm, lc.pool, cfg_.lfbe, true, opt_.jobs);
      rep.curves = recall_by_position(score_corpus(model, grid), gm, lc.pool, label);
    }
    export_report(dir_, rep);
    log("test accuracy " + format_double(rep.accuracy.front().accuracy) + " over " + std::to_string(recs.size()) + " clips");
  }

  std::vector<ModelConfig> sweep_models() const {
    std::vector<PoolingKind> kinds;
    if (opt_.pooling.empty()) {
      kinds.assign(kAllPoolingKinds.begin(), kAllPoolingKinds.end());
    } else {
      for (const auto& p : opt_.pooling) kinds.push_back(parse_pooling_kind(p));
    }
    std::vector<ModelConfig> out;
    for (auto k : kinds) {
      auto m = cfg_.train.model;
      m.pooling = k;
      m.direction = Direction::Uni;
      out.push_back(m);
    }
    if (opt_.with_bi) {
      for (auto k : kinds) {
        auto m = cfg_.train.model;
        m.pooling = k;
        m.direction = Direction::Bi;
        out.push_back(m);
      }
    }
    return out;
  }

  void sweep() {
    const auto models = sweep_models();
    for (const auto& m : models) m.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = prepare_desk_scale(cfg_, opt_.jobs);
    log("prepared " + std::to_string(data.train.size()) + "/" + std::to_string(data.dev.size()) + "/" + std::to_string(data.test.size()) +
        " clips and " + std::to_string(data.grid.size()) + " grid mixtures");
    Report rep;
    std::filesystem::create_directories(dir_ / "history");
    for (const auto& m : models) {
      const auto o = run_config(cfg_, data, m, opt_.jobs);
      append_report(rep, cfg_, o);
      std::vector<double> acc;
      for (std::size_t k = 0; k < o.trials.size(); ++k) {
        acc.push_back(o.trials[k].test_accuracy);
        detail::write_file(dir_ / "history" / (o.label + "-trial" + std::to_string(k) + ".csv"),
                           [&](std::ostream& os) { write_history_csv(os, o.trials[k].history); });
      }
      const auto a = aggregate_trials(acc);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::ostringstream line;
      line << std::left << std::setw(18) << o.label << " accuracy " << format_double(a.mean);
      if (a.stddev) line << " +/- " << format_double(*a.stddev);
      line << "  [" << std::fixed << std::setprecision(0) << secs << " s]";
      log(line.str());
    }
    export_report(dir_, rep);
  }

  void report() {
    const auto in = existing_dir(opt_.input_dir, "report input directory");
    const auto rep = import_report(in);
    export_report(dir_, rep);
    detail::write_file(dir_ / "summary.csv", [&](std::ostream& os) { write_summary(os, rep); });
    detail::write_file(dir_ / "position.svg", [&](std::ostream& os) { write_position_svg(os, rep.curves); });
    log("report with " + std::to_string(rep.accuracy.size()) + " accuracy rows and " + std::to_string(rep.curves.size()) + " curves");
  }

  static void write_summary(std::ostream& os, const Report& rep) {
    os << "event,pooling,layers,train_size,n,mean,std\n";
    std::map<std::tuple<std::string, std::string, int, std::size_t>, std::vector<double>> groups;
    std::vector<std::tuple<std::string, std::string, int, std::size_t>> order;
    for (const auto& r : rep.accuracy) {
      auto key = std::make_tuple(r.event, r.pooling, r.layers, r.train_size);
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(r.accuracy);
    }
    for (const auto& key : order) {
      const auto a = aggregate_trials(groups[key]);
      os << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << std::get<3>(key) << ',' << a.n << ','
         << format_double(a.mean) << ',' << (a.stddev ? format_double(*a.stddev) : std::string("nan")) << '\n';
    }
  }

  // Recall against position, one polyline per curve.
  static void write_position_svg(std::ostream& os, const std::vector<PositionCurve>& curves) {
    constexpr double W = 640, H = 400, L = 50, R = 170, T = 20, B = 40;
    double max_pos = 0.0;
    for (const auto& c : curves)
      if (!c.recall.empty()) max_pos = std::max(max_pos, c.recall.rbegin()->first);
    if (max_pos <= 0.0) max_pos = 1.0;
    auto px = [&](double p) { return L + (W - L - R) * p / max_pos; };
    auto py = [&](double r) { return T + (H - T - B) * (1.0 - r); };
    static constexpr std::array<std::string_view, 10> palette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << px(max_pos) << "\" y2=\"" << py(0) << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << L << "\" y2=\"" << py(1) << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double r = k / 4.0;
      os << "<text x=\"" << L - 6 << "\" y=\"" << py(r) + 4 << "\" text-anchor=\"end\">" << format_double(r) << "</text>\n";
    }
    os << "<text x=\"" << px(max_pos / 2) << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">event onset (s)</text>\n";
    os << "<text x=\"" << px(0) << "\" y=\"" << py(0) + 16 << "\" text-anchor=\"middle\">0</text>\n";
    os << "<text x=\"" << px(max_pos) << "\" y=\"" << py(0) + 16 << "\" text-anchor=\"middle\">" << format_double(max_pos) << "</text>\n";
    for (std::size_t i = 0; i < curves.size(); ++i) {
      const auto& c = curves[i];
      const auto colour = palette[i % palette.size()];
      os << "<polyline fill=\"none\" stroke=\"" << colour << "\" points=\"";
      for (const auto& [p, r] : c.recall) os << px(p) << ',' << py(r) << ' ';
      os << "\"/>\n";
      os << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 14 * (static_cast<double>(i) + 1) << "\" fill=\"" << colour << "\">" << c.event << ' '
         << c.pooling << ' ' << format_double(c.ebr_db) << " dB</text>\n";
    }
    os << "</svg>\n";
  }

  void selftest() {
    const auto results = run_selftest();
    std::ostringstream text;
    for (const auto& r : results) {
      text << std::left << std::setw(16) << r.name << ' ' << r.passed << '/' << (r.passed + r.failed) << " passed";
      text << "  worst " << format_double(r.worst) << '\n';
      for (const auto& f : r.failures) text << "  " << f << '\n';
      failed_ = failed_ || !r.ok();
    }
    out_ << text.str() << std::flush;
    detail::write_file(dir_ / "selftest.txt", [&](std::ostream& os) { os << text.str(); });
  }

  std::string command_;
  RunOptions opt_;
  std::ostream& out_;
  KeyValueConfig kv_;
  DeskScaleConfig cfg_;
  std::filesystem::path dir_;
  bool failed_ = false;
};

/// Runs one subcommand. Returns 0 on success, 1 on bad usage or invalid input, 2 on runtime failure.
inline int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Acoustic event classification with LSTM pooling functions", "raec"};
  app.require_subcommand(1, 1);
  RunOptions o;
  std::string seed_text, trials_text, event_text;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed_text, "base seed");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--jobs", o.jobs, "worker threads")->capture_default_str();
    sub->add_option("--event-type", event_text, "event class");
    sub->add_option("--pooling", o.pooling, "pooling kind (repeatable for sweep)");
    sub->add_option("--ebr", o.ebr, "training EBR set in dB")->delimiter(',');
    sub->add_option("--trials", trials_text, "number of trials");
  };

  auto* assets = app.add_subcommand("assets", "generate toy event and background assets");
  auto* synth = app.add_subcommand("synth", "write corpus manifests, optionally rendering audio");
  auto* train = app.add_subcommand("train", "train models on a synthesized corpus");
  auto* eval = app.add_subcommand("eval", "score a checkpoint on test and grid manifests");
  auto* sweep = app.add_subcommand("sweep", "train and evaluate every pooling kind over several trials");
  auto* report = app.add_subcommand("report", "re-export CSVs with a summary and a recall plot");
  auto* selftest = app.add_subcommand("selftest", "run gradient and property suites");
  for (auto* s : {assets, synth, train, eval, sweep, report, selftest}) common(s);
  synth->add_option("--assets", o.assets_dir, "existing asset directory");
  synth->add_flag("--render", o.render, "also write mixture WAVs");
  for (auto* s : {train, eval}) {
    s->add_option("--corpus", o.corpus_dir, "directory written by synth")->required();
    s->add_option("--assets", o.assets_dir, "asset directory override");
  }
  eval->add_option("--model", o.model_path, "checkpoint file")->required();
  sweep->add_flag("--bi", o.with_bi, "also sweep bidirectional models");
  report->add_option("--in", o.input_dir, "directory with accuracy.csv and position.csv")->required();

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    if (!seed_text.empty()) o.seed = parse_integer<std::uint64_t>(seed_text, "--seed");
    if (!trials_text.empty()) o.trials = parse_integer<std::size_t>(trials_text, "--trials");
    if (!event_text.empty()) o.event_type = event_text;
    Runner runner(app.get_subcommands().front()->get_name(), o, out);
    runner.run();
    return runner.failed() ? 2 : 0;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace raec::cli

#endif  // RAEC_CLI_HPP_
