#ifndef RAEC_EVALKIT_HPP_
#define RAEC_EVALKIT_HPP_

// Utterance-level metrics, recall-vs-position curves, trial aggregation and CSV reports.

#include <raec/trainer.hpp>

#include <optional>

namespace raec {

struct PredictionRecord {
  std::string id;
  double score = 0.0;
  int label = 0;
  bool decision = false;
};

/// Positive when score >= threshold.
inline PredictionRecord make_record(std::string id, double score, int label, double threshold = 0.5) {
  return {std::move(id), score, label, score >= threshold};
}

inline PredictionRecord classify(const Model& model, const FeatureMatrix& features, double threshold = 0.5, std::string id = {},
                                 int label = 0) {
  return make_record(std::move(id), predict(model, features), label, threshold);
}

inline std::vector<PredictionRecord> classify_corpus(const Model& model, const Corpus& corpus, double threshold = 0.5) {
  const auto scores = score_corpus(model, corpus);
  std::vector<PredictionRecord> out;
  out.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back(make_record(corpus.id(i), scores[i], corpus.label(i), threshold));
  return out;
}

inline double accuracy(std::span<const PredictionRecord> records) {
  if (records.empty()) throw ValidationError("accuracy of an empty record set");
  std::size_t correct = 0;
  for (const auto& r : records) correct += static_cast<std::size_t>(r.decision == (r.label == 1));
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

struct PositionCurve {
  std::string event;
  std::string pooling;
  double ebr_db = 0.0;
  std::map<double, double> recall;     // position_s -> recall
  std::map<double, std::size_t> count;  // position_s -> mixtures

  friend bool operator==(const PositionCurve&, const PositionCurve&) = default;
};

/// One curve per (event type, EBR) from per-spec scores of a positives-only manifest.
inline std::vector<PositionCurve> recall_by_position(std::span<const double> scores, const CorpusManifest& manifest, const AssetPool& pool,
                                                     std::string_view pooling, double threshold = 0.5) {
  if (manifest.specs.empty()) throw ValidationError("empty sensitivity manifest");
  if (scores.size() != manifest.specs.size())
    throw ValidationError("score count " + std::to_string(scores.size()) + " does not match manifest size " + std::to_string(manifest.specs.size()));
  std::map<std::pair<std::string, double>, std::map<double, std::pair<std::size_t, std::size_t>>> cells;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = manifest.specs[i];
    if (s.label != 1 || !s.event_id) throw ValidationError("sensitivity manifest entry " + s.id + " is not a positive");
    auto& cell = cells[{pool.find(*s.event_id).event_class, s.ebr_db}][s.onset_s];
    cell.first += static_cast<std::size_t>(scores[i] >= threshold);
    cell.second += 1;
  }
  std::vector<PositionCurve> out;
  for (const auto& [key, positions] : cells) {
    PositionCurve c{key.first, std::string(pooling), key.second, {}, {}};
    for (const auto& [pos, hits] : positions) {
      c.recall[pos] = static_cast<double>(hits.first) / static_cast<double>(hits.second);
      c.count[pos] = hits.second;
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<PositionCurve> recall_by_position(const Model& model, const Corpus& grid, const CorpusManifest& manifest, const AssetPool& pool,
                                                     double threshold = 0.5) {
  const auto scores = score_corpus(model, grid);
  return recall_by_position(scores, manifest, pool, name(model.config.pooling), threshold);
}

/// Cell-wise mean recall over curves of identical layout (e.g. one per trial); counts are summed.
inline PositionCurve mean_curve(std::span<const PositionCurve> curves) {
  if (curves.empty()) throw ValidationError("no curves to average");
  PositionCurve out = curves.front();
  for (auto& [pos, r] : out.recall) r = 0.0;
  for (auto& [pos, n] : out.count) n = 0;
  for (const auto& c : curves) {
    if (c.recall.size() != out.recall.size()) throw ValidationError("curves differ in layout");
    for (const auto& [pos, r] : c.recall) {
      if (!out.recall.count(pos)) throw ValidationError("curves differ in layout");
      out.recall[pos] += r;
      out.count[pos] += c.count.at(pos);
    }
  }
  for (auto& [pos, r] : out.recall) r /= static_cast<double>(curves.size());
  return out;
}

struct TrialAggregate {
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<double> stddev;  // sample standard deviation, present when n >= 2
};

inline TrialAggregate aggregate_trials(std::span<const double> values) {
  if (values.empty()) throw ValidationError("no trials to aggregate");
  // Sorted summation makes the result independent of trial order.
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  TrialAggregate a;
  a.n = v.size();
  for (double x : v) a.mean += x;
  a.mean /= static_cast<double>(a.n);
  if (a.n >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

inline double median(std::span<const double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct Spread {
  double min = 0.0;
  double max = 0.0;
  double range = 0.0;
};

inline Spread sensitivity_spread(const PositionCurve& curve) {
  if (curve.recall.empty()) throw ValidationError("empty position curve");
  Spread s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0.0};
  for (const auto& [pos, r] : curve.recall) {
    s.min = std::min(s.min, r);
    s.max = std::max(s.max, r);
  }
  s.range = s.max - s.min;
  return s;
}

struct AccuracyRow {
  std::string event;
  std::string pooling;
  int layers = 1;
  std::size_t train_size = 0;
  std::size_t trial = 0;
  double accuracy = 0.0;

  friend bool operator==(const AccuracyRow&, const AccuracyRow&) = default;
};

struct SpreadRow {
  std::string event;
  std::string pooling;
  double ebr_db = 0.0;
  Spread spread;

  friend bool operator==(const SpreadRow& a, const SpreadRow& b) {
    return a.event == b.event && a.pooling == b.pooling && a.ebr_db == b.ebr_db && a.spread.min == b.spread.min && a.spread.max == b.spread.max &&
           a.spread.range == b.spread.range;
  }
};

struct Report {
  std::vector<AccuracyRow> accuracy;
  std::vector<PositionCurve> curves;
};

inline constexpr std::string_view kAccuracyHeader = "event,pooling,layers,train_size,trial,accuracy";
inline constexpr std::string_view kPositionHeader = "event,pooling,ebr_db,position_s,recall,n";
inline constexpr std::string_view kSpreadHeader = "event,pooling,ebr_db,min,max,range";

namespace detail {

inline void check_csv_field(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos) throw ValidationError("CSV field contains a separator: " + s);
}

inline std::vector<std::vector<std::string_view>> csv_rows(std::string_view text, std::string_view header, std::size_t columns) {
  std::vector<std::vector<std::string_view>> rows;
  bool first = true;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (first) {
      if (line != header) throw ValidationError("unexpected CSV header '" + std::string(line) + "'");
      first = false;
      continue;
    }
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != columns) throw ValidationError("CSV row has " + std::to_string(f.size()) + " fields, expected " + std::to_string(columns));
    rows.push_back(std::move(f));
  }
  if (first) throw ValidationError("missing CSV header");
  return rows;
}

}  // namespace detail

inline void write_accuracy_csv(std::ostream& os, std::span<const AccuracyRow> rows) {
  os << kAccuracyHeader << '\n';
  for (const auto& r : rows) {
    detail::check_csv_field(r.event);
    detail::check_csv_field(r.pooling);
    os << r.event << ',' << r.pooling << ',' << r.layers << ',' << r.train_size << ',' << r.trial << ',' << format_double(r.accuracy) << '\n';
  }
}

inline void write_position_csv(std::ostream& os, std::span<const PositionCurve> curves) {
  os << kPositionHeader << '\n';
  for (const auto& c : curves) {
    detail::check_csv_field(c.event);
    detail::check_csv_field(c.pooling);
    for (const auto& [pos, r] : c.recall)
      os << c.event << ',' << c.pooling << ',' << format_double(c.ebr_db) << ',' << format_double(pos) << ',' << format_double(r) << ','
         << c.count.at(pos) << '\n';
  }
}

inline std::vector<SpreadRow> spreads(std::span<const PositionCurve> curves) {
  std::vector<SpreadRow> out;
  for (const auto& c : curves) out.push_back({c.event, c.pooling, c.ebr_db, sensitivity_spread(c)});
  return out;
}

inline void write_spread_csv(std::ostream& os, std::span<const SpreadRow> rows) {
  os << kSpreadHeader << '\n';
  for (const auto& r : rows)
    os << r.event << ',' << r.pooling << ',' << format_double(r.ebr_db) << ',' << format_double(r.spread.min) << ',' << format_double(r.spread.max)
       << ',' << format_double(r.spread.range) << '\n';
}

inline std::vector<AccuracyRow> parse_accuracy_csv(std::string_view text) {
  std::vector<AccuracyRow> out;
  for (const auto& f : detail::csv_rows(text, kAccuracyHeader, 6))
    out.push_back({std::string(f[0]), std::string(f[1]), parse_integer<int>(f[2], "layers"), parse_integer<std::size_t>(f[3], "train_size"),
                   parse_integer<std::size_t>(f[4], "trial"), parse_double(f[5], "accuracy")});
  return out;
}

/// Rebuilds curves in file order; consecutive rows sharing (event, pooling, ebr) form one curve.
inline std::vector<PositionCurve> parse_position_csv(std::string_view text) {
  std::vector<PositionCurve> out;
  for (const auto& f : detail::csv_rows(text, kPositionHeader, 6)) {
    const double ebr = parse_double(f[2], "ebr_db");
    if (out.empty() || out.back().event != f[0] || out.back().pooling != f[1] || out.back().ebr_db != ebr)
      out.push_back({std::string(f[0]), std::string(f[1]), ebr, {}, {}});
    const double pos = parse_double(f[3], "position_s");
    out.back().recall[pos] = parse_double(f[4], "recall");
    out.back().count[pos] = parse_integer<std::size_t>(f[5], "n");
  }
  return out;
}

inline std::vector<SpreadRow> parse_spread_csv(std::string_view text) {
  std::vector<SpreadRow> out;
  for (const auto& f : detail::csv_rows(text, kSpreadHeader, 6))
    out.push_back({std::string(f[0]), std::string(f[1]), parse_double(f[2], "ebr_db"),
                   {parse_double(f[3], "min"), parse_double(f[4], "max"), parse_double(f[5], "range")}});
  return out;
}

namespace detail {

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  writer(os);
  if (!os) throw Error("failed writing " + path.string());
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Writes accuracy.csv, position.csv and spread.csv into `dir`.
inline void export_report(const std::filesystem::path& dir, const Report& report) {
  std::filesystem::create_directories(dir);
  detail::write_file(dir / "accuracy.csv", [&](std::ostream& os) { write_accuracy_csv(os, report.accuracy); });
  detail::write_file(dir / "position.csv", [&](std::ostream& os) { write_position_csv(os, report.curves); });
  const auto rows = spreads(report.curves);
  detail::write_file(dir / "spread.csv", [&](std::ostream& os) { write_spread_csv(os, rows); });
}

inline Report import_report(const std::filesystem::path& dir) {
  return {parse_accuracy_csv(detail::slurp(dir / "accuracy.csv")), parse_position_csv(detail::slurp(dir / "position.csv"))};
}

}  // namespace raec

#endif  // RAEC_EVALKIT_HPP_
