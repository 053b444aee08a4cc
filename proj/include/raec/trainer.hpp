#ifndef RAEC_TRAINER_HPP_
#define RAEC_TRAINER_HPP_

// Mini-batch ADAM training with dev-loss model selection and seeded trials.

#include <raec/checkpoint.hpp>
#include <raec/config.hpp>
#include <raec/parallel.hpp>
#include <raec/synth.hpp>

#include <memory>

namespace raec {

struct Utterance {
  std::string id;
  FeatureMatrix features;
  int label = 0;
};

/// Labelled utterances, either held in memory or re-computed on every access.
class Corpus {
 public:
  using Loader = std::function<FeatureMatrix(std::size_t)>;

  Corpus() = default;

  static Corpus cached(std::vector<Utterance> utterances) {
    Corpus c;
    for (const auto& u : utterances) {
      check_label(u.label);
      c.ids_.push_back(u.id);
      c.labels_.push_back(u.label);
    }
    c.cache_ = std::move(utterances);
    return c;
  }

  static Corpus streaming(std::vector<std::string> ids, std::vector<int> labels, Loader loader) {
    if (ids.size() != labels.size()) throw ValidationError("streaming corpus: ids and labels differ in length");
    for (int l : labels) check_label(l);
    Corpus c;
    c.ids_ = std::move(ids);
    c.labels_ = std::move(labels);
    c.loader_ = std::move(loader);
    return c;
  }

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  bool is_cached() const { return !loader_; }
  int label(std::size_t i) const { return labels_.at(i); }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  const std::vector<int>& labels() const { return labels_; }

  /// Cached features, or nullptr for a streaming corpus.
  const FeatureMatrix* cached_features(std::size_t i) const { return is_cached() ? &cache_.at(i).features : nullptr; }

  FeatureMatrix features(std::size_t i) const { return is_cached() ? cache_.at(i).features : loader_(i); }

 private:
  std::vector<std::string> ids_;
  std::vector<int> labels_;
  std::vector<Utterance> cache_;
  Loader loader_;
};

/// Renders each manifest entry and computes its features.
inline Corpus build_corpus(const CorpusManifest& manifest, const AssetPool& pool, const LfbeConfig& lfbe, bool cache = true,
                           std::size_t jobs = 1) {
  if (cache) {
    std::vector<Utterance> utts(manifest.specs.size());
    parallel_for(utts.size(), jobs, [&](std::size_t i) {
      const auto& s = manifest.specs[i];
      utts[i] = {s.id, compute_lfbe(render(s, pool), lfbe), s.label};
    });
    return Corpus::cached(std::move(utts));
  }
  std::vector<std::string> ids;
  std::vector<int> labels;
  for (const auto& s : manifest.specs) {
    ids.push_back(s.id);
    labels.push_back(s.label);
  }
  auto specs = std::make_shared<std::vector<MixtureSpec>>(manifest.specs);
  return Corpus::streaming(std::move(ids), std::move(labels),
                           [specs, &pool, lfbe](std::size_t i) { return compute_lfbe(render((*specs)[i], pool), lfbe); });
}

/// Per-dimension mean and inverse standard deviation over every frame of the corpus.
inline FeatureNormalizer fit_normalizer(const Corpus& corpus) {
  if (corpus.empty()) throw ValidationError("cannot fit normaliser on an empty corpus");
  Eigen::VectorXd sum, sq;
  double frames = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const FeatureMatrix local = corpus.is_cached() ? FeatureMatrix{} : corpus.features(i);
    const FeatureMatrix& fm = corpus.is_cached() ? *corpus.cached_features(i) : local;
    if (sum.size() == 0) {
      sum = Eigen::VectorXd::Zero(fm.dims());
      sq = Eigen::VectorXd::Zero(fm.dims());
    }
    if (fm.dims() != sum.size()) throw ValidationError("corpus mixes feature dimensions");
    sum += fm.values.colwise().sum().transpose();
    sq += fm.values.array().square().colwise().sum().matrix().transpose();
    frames += static_cast<double>(fm.frames());
  }
  FeatureNormalizer n;
  n.mean = sum / frames;
  const Eigen::VectorXd var = (sq / frames - n.mean.cwiseProduct(n.mean)).cwiseMax(0.0);
  n.scale = var.cwiseSqrt().cwiseMax(1e-8).cwiseInverse();
  return n;
}

namespace detail {

/// Runs fn(pointers, indices) over equal-length groups of `indices`, in order of first appearance.
template <typename Fn>
void for_each_length_group(const Corpus& corpus, std::span<const std::size_t> indices, Fn&& fn) {
  std::vector<FeatureMatrix> owned;
  std::vector<const FeatureMatrix*> ptrs(indices.size());
  if (!corpus.is_cached()) {
    owned.reserve(indices.size());
    for (auto i : indices) owned.push_back(corpus.features(i));
  }
  for (std::size_t k = 0; k < indices.size(); ++k) ptrs[k] = corpus.is_cached() ? corpus.cached_features(indices[k]) : &owned[k];

  std::vector<bool> done(indices.size(), false);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (done[k]) continue;
    std::vector<const FeatureMatrix*> group;
    std::vector<std::size_t> group_idx;
    for (std::size_t j = k; j < indices.size(); ++j) {
      if (!done[j] && ptrs[j]->frames() == ptrs[k]->frames()) {
        done[j] = true;
        group.push_back(ptrs[j]);
        group_idx.push_back(indices[j]);
      }
    }
    fn(std::span<const FeatureMatrix* const>(group), std::span<const std::size_t>(group_idx));
  }
}

}  // namespace detail

/// Utterance-level scores for every corpus entry, in corpus order.
inline std::vector<double> score_corpus(const Model& model, const Corpus& corpus, std::size_t batch_size = 64) {
  std::vector<double> scores(corpus.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < corpus.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(corpus.size(), start + batch_size); ++i) idx.push_back(i);
    detail::for_each_length_group(corpus, idx, [&](std::span<const FeatureMatrix* const> group, std::span<const std::size_t> gi) {
      const auto y = forward(model, group);
      for (std::size_t k = 0; k < gi.size(); ++k) scores[gi[k]] = y[k];
    });
  }
  return scores;
}

struct TrainConfig {
  ModelConfig model;
  Hyper hyper;
  std::size_t n_epochs = 30;
  std::uint64_t seed = 1;
  std::size_t n_trials = 5;
  std::size_t dev_eval_every = 1;

  void validate() const {
    model.validate();
    hyper.validate();
    if (n_epochs < 1) throw ValidationError("n_epochs must be >= 1");
    if (n_trials < 1) throw ValidationError("n_trials must be >= 1");
    if (dev_eval_every < 1) throw ValidationError("dev_eval_every must be >= 1");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_loss = std::numeric_limits<double>::quiet_NaN();
  double dev_acc = std::numeric_limits<double>::quiet_NaN();

  friend bool operator==(const EpochRecord& a, const EpochRecord& b) {
    auto same = [](double x, double y) { return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y); };
    return a.epoch == b.epoch && same(a.train_loss, b.train_loss) && same(a.dev_loss, b.dev_loss) && same(a.dev_acc, b.dev_acc);
  }
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t selected = 0;  // index into epochs of the checkpoint kept

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  Model model;
  TrainHistory history;
};

inline double accuracy_at(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) correct += static_cast<std::size_t>((scores[i] >= threshold ? 1 : 0) == labels[i]);
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

/// Trains one model; keeps the parameters of the epoch with the lowest dev
/// loss (earliest on ties). Fully determined by (config, corpora).
inline TrainResult train(const TrainConfig& cfg, const Corpus& train_set, const Corpus& dev_set) {
  cfg.validate();
  if (train_set.empty() || dev_set.empty()) throw ValidationError("training and dev corpora must be non-empty");
  if (cfg.hyper.batch_size > train_set.size())
    throw ValidationError("batch size " + std::to_string(cfg.hyper.batch_size) + " exceeds the training corpus size " + std::to_string(train_set.size()));

  Model model = Model::initialize(cfg.model, derive_seed(cfg.seed, 0));
  model.norm = fit_normalizer(train_set);
  if (model.norm.mean.size() != cfg.model.input_dim)
    throw ValidationError("corpus feature dimension " + std::to_string(model.norm.mean.size()) + " does not match model input_dim " +
                          std::to_string(cfg.model.input_dim));
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  AdamState adam;
  TrainResult result{model, {}};
  double best_dev = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  GradientMap grads(model.params);
  for (std::size_t epoch = 1; epoch <= cfg.n_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.hyper.batch_size, ++batch_index) {
      const std::span<const std::size_t> chunk(order.data() + start, std::min(cfg.hyper.batch_size, order.size() - start));
      if (chunk.empty()) throw ValidationError("empty batch");
      grads.set_zero();
      double batch_loss = 0.0;
      detail::for_each_length_group(train_set, chunk, [&](std::span<const FeatureMatrix* const> group, std::span<const std::size_t> gi) {
        std::vector<int> labels;
        for (auto i : gi) labels.push_back(train_set.label(i));
        const double w = static_cast<double>(group.size()) / static_cast<double>(chunk.size());
        batch_loss += w * loss_and_gradient(model, group, labels, &grads, w).loss;
      });
      if (!std::isfinite(batch_loss))
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      try {
        adam_step(model.params, grads, adam, cfg.hyper);
      } catch (const Error& e) {
        throw Error(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      loss_sum += batch_loss * static_cast<double>(chunk.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (epoch % cfg.dev_eval_every == 0 || epoch == cfg.n_epochs) {
      const auto scores = score_corpus(model, dev_set);
      rec.dev_loss = bce_loss(scores, dev_set.labels());
      rec.dev_acc = accuracy_at(scores, dev_set.labels());
      if (!std::isfinite(rec.dev_loss)) throw Error("non-finite dev loss at epoch " + std::to_string(epoch));
      if (rec.dev_loss < best_dev) {
        best_dev = rec.dev_loss;
        result.model = model;
        result.history.selected = result.history.epochs.size();
      }
    }
    result.history.epochs.push_back(rec);
  }
  return result;
}

/// n_trials independent runs; trial k uses seed + k.
inline std::vector<TrainResult> run_trials(const TrainConfig& cfg, const Corpus& train_set, const Corpus& dev_set, std::size_t jobs = 1) {
  cfg.validate();
  std::vector<TrainResult> results(cfg.n_trials);
  parallel_for(cfg.n_trials, jobs, [&](std::size_t k) {
    TrainConfig trial = cfg;
    trial.seed = cfg.seed + k;
    try {
      results[k] = train(trial, train_set, dev_set);
    } catch (const ValidationError& e) {
      throw ValidationError("trial " + std::to_string(k) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error("trial " + std::to_string(k) + ": " + e.what());
    }
  });
  return results;
}

inline constexpr std::string_view kHistoryHeader = "epoch,train_loss,dev_loss,dev_acc";

inline void write_history_csv(std::ostream& os, const TrainHistory& h) {
  os << kHistoryHeader << '\n';
  for (const auto& e : h.epochs)
    os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.dev_loss) << ',' << format_double(e.dev_acc) << '\n';
}

inline TrainConfig train_config_from(const KeyValueConfig& kv) {
  TrainConfig c;
  c.model.n_layers = static_cast<int>(kv.get("layers", 1LL));
  c.model.units = static_cast<int>(kv.get("units", 32LL));
  c.model.direction = parse_direction(kv.get("direction", std::string("uni")));
  c.model.pooling = parse_pooling_kind(kv.get("pooling", std::string("Y.MaxPooling")));
  c.model.input_dim = static_cast<int>(kv.get("n_mels", 40LL));
  c.hyper.learning_rate = kv.get("learning_rate", 0.001);
  c.hyper.beta1 = kv.get("beta1", 0.9);
  c.hyper.beta2 = kv.get("beta2", 0.999);
  c.hyper.epsilon = kv.get("epsilon", 1e-8);
  c.hyper.batch_size = static_cast<std::size_t>(kv.get("batch_size", 16LL));
  c.n_epochs = static_cast<std::size_t>(kv.get("epochs", 30LL));
  c.hyper.max_epochs = c.n_epochs;
  c.seed = kv.get("seed", std::uint64_t{1});
  c.n_trials = static_cast<std::size_t>(kv.get("trials", 5LL));
  c.dev_eval_every = static_cast<std::size_t>(kv.get("dev_eval_every", 1LL));
  c.validate();
  return c;
}

inline void write_train_config(KeyValueConfig& kv, const TrainConfig& c) {
  kv.set("layers", std::to_string(c.model.n_layers));
  kv.set("units", std::to_string(c.model.units));
  kv.set("direction", std::string(name(c.model.direction)));
  kv.set("pooling", std::string(name(c.model.pooling)));
  kv.set("n_mels", std::to_string(c.model.input_dim));
  kv.set("learning_rate", format_double(c.hyper.learning_rate));
  kv.set("beta1", format_double(c.hyper.beta1));
  kv.set("beta2", format_double(c.hyper.beta2));
  kv.set("epsilon", format_double(c.hyper.epsilon));
  kv.set("batch_size", std::to_string(c.hyper.batch_size));
  kv.set("epochs", std::to_string(c.n_epochs));
  kv.set("seed", std::to_string(c.seed));
  kv.set("trials", std::to_string(c.n_trials));
  kv.set("dev_eval_every", std::to_string(c.dev_eval_every));
}

}  // namespace raec

#endif  // RAEC_TRAINER_HPP_
