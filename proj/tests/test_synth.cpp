#include <raec/synth.hpp>

#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"

using namespace raec;

namespace {

Waveform noise(std::size_t n, int sr, Rng& rng, double amp) {
  Waveform w{std::vector<double>(n), sr};
  for (auto& v : w.samples) v = amp * rng.gaussian();
  return w;
}

double energy_profile_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

// Normalised energy in 8 equal spectral bands, from the direct DFT oracle on the first 256 samples.
std::vector<double> band_profile(const Waveform& w) {
  oracle::Vec frame(w.samples.begin(), w.samples.begin() + std::min<std::size_t>(256, w.size()));
  frame.resize(256, 0.0);
  const auto p = oracle::power_spectrum(frame);
  std::vector<double> bands(8, 0.0);
  for (std::size_t k = 0; k < 128; ++k) bands[k / 16] += p[k];
  const double total = std::accumulate(bands.begin(), bands.end(), 0.0);
  for (auto& v : bands) v /= total;
  return bands;
}

}  // namespace

TEST(EbrGain, EqualRms) {
  const std::vector<double> a = {1.0, -1.0, 1.0, -1.0}, b = {-1.0, 1.0, 1.0, -1.0};
  EXPECT_DOUBLE_EQ(ebr_gain(a, b, 0.0), 1.0);
  EXPECT_NEAR(ebr_gain(a, b, 6.0), std::pow(10.0, 0.3), 1e-12);
  EXPECT_NEAR(ebr_gain(a, b, 6.0), 1.995262, 1e-6);
}

TEST(EbrGain, SilentEventIsUnusable) {
  const std::vector<double> silent(10, 0.0), bg(10, 0.5);
  try {
    ebr_gain(silent, bg, 0.0);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("unusable event asset"), std::string::npos);
  }
}

TEST(EbrGain, PeakMode) {
  const std::vector<double> ev = {0.1, -0.4, 0.2}, bg = {0.8, 0.1, -0.2};
  EXPECT_DOUBLE_EQ(ebr_gain(ev, bg, 0.0, EbrMode::Peak), 2.0);
}

TEST(Mix, MatchesSliceAddOracleExactly) {
  Rng rng(1);
  const auto bg = noise(8000, 8000, rng, 0.05), ev = noise(1234, 8000, rng, 0.3);
  const auto out = mix(ev, bg, 3.0, 0.4);
  const std::size_t start = 3200;
  const double gain = std::pow(10.0, 3.0 / 20.0) * rms(std::span(bg.samples).subspan(start, ev.size())) / rms(ev.samples);
  EXPECT_EQ(out.samples, oracle::mix(ev.samples, bg.samples, start, gain));
}

TEST(Mix, BackgroundPreservedOutsideWindowAndEbrMeasured) {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto bg = noise(8000, 8000, rng, rng.uniform(0.01, 0.2)), ev = noise(100 + rng.below(3000), 8000, rng, 0.3);
    const double onset = static_cast<double>(rng.below(bg.size() - ev.size() + 1)) / 8000.0;
    const double ebr = rng.uniform(-10.0, 10.0);
    const auto out = mix(ev, bg, ebr, onset);
    const auto start = onset_sample(onset, 8000);
    ASSERT_EQ(out.size(), bg.size());
    for (std::size_t k = 0; k < bg.size(); ++k)
      if (k < start || k >= start + ev.size()) {
        ASSERT_EQ(out.samples[k], bg.samples[k]);
      }
    EXPECT_NEAR(measured_ebr_db(out, bg, start, ev.size()), ebr, 0.1);
  }
}

TEST(Mix, SilentEventLeavesBackground) {
  Rng rng(3);
  const auto bg = noise(1000, 8000, rng, 0.1);
  const Waveform ev{std::vector<double>(100, 0.0), 8000};
  EXPECT_EQ(mix(ev, bg, 0.0, 0.01).samples, bg.samples);
}

TEST(Mix, SilentBackgroundIsAnError) {
  Rng rng(4);
  const Waveform bg{std::vector<double>(1000, 0.0), 8000};
  EXPECT_THROW(mix(noise(100, 8000, rng, 0.1), bg, 0.0, 0.0), ValidationError);
}

TEST(Mix, PlacementOutOfRange) {
  Rng rng(5);
  const auto bg = noise(1000, 8000, rng, 0.1), ev = noise(200, 8000, rng, 0.1);
  try {
    mix(ev, bg, 0.0, 0.11);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("placement out of range"), std::string::npos);
  }
  EXPECT_THROW(mix(ev, Waveform{bg.samples, 16000}, 0.0, 0.0), ValidationError);
}

class Toy : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { pool = new AssetPool(gen_toy_assets(17, ToyAssetConfig{})); }
  static void TearDownTestSuite() { delete pool; }
  static AssetPool* pool;
};
AssetPool* Toy::pool = nullptr;

TEST_F(Toy, DeterministicPools) {
  const auto again = gen_toy_assets(17, ToyAssetConfig{});
  ASSERT_EQ(again.events.size(), pool->events.size());
  for (std::size_t i = 0; i < again.events.size(); ++i) EXPECT_EQ(again.events[i].wave.samples, pool->events[i].wave.samples);
  for (std::size_t i = 0; i < again.backgrounds.size(); ++i) EXPECT_EQ(again.backgrounds[i].wave.samples, pool->backgrounds[i].wave.samples);
  EXPECT_NE(gen_toy_assets(18, ToyAssetConfig{}).events[0].wave.samples, pool->events[0].wave.samples);
}

TEST_F(Toy, DurationsAndCounts) {
  const ToyAssetConfig cfg;
  EXPECT_EQ(pool->events.size(), 3 * cfg.events_per_class);
  EXPECT_EQ(pool->backgrounds.size(), cfg.backgrounds);
  EXPECT_EQ(pool->event_classes(), (std::vector<std::string>{"tone", "chirp", "burst"}));
  for (const auto& e : pool->events) {
    EXPECT_GE(e.wave.duration_s(), cfg.event_min_s - 1.0 / cfg.sample_rate);
    EXPECT_LE(e.wave.duration_s(), cfg.event_max_s + 1.0 / cfg.sample_rate);
    EXPECT_GT(rms(e.wave.samples), 0.0);
  }
  for (const auto& b : pool->backgrounds) EXPECT_EQ(b.wave.size(), 24000u);
}

TEST_F(Toy, ClassesSeparableByEnergyProfile) {
  // Nearest centroid on spectral band energies: train on even indices, test on odd.
  std::map<std::string, std::vector<double>> centroid;
  std::map<std::string, int> count;
  for (std::size_t i = 0; i < pool->events.size(); i += 2) {
    const auto& e = pool->events[i];
    const auto p = band_profile(e.wave);
    auto& c = centroid[e.event_class];
    c.resize(p.size(), 0.0);
    for (std::size_t k = 0; k < p.size(); ++k) c[k] += p[k];
    ++count[e.event_class];
  }
  for (auto& [cls, c] : centroid)
    for (auto& v : c) v /= count[cls];
  int correct = 0, total = 0;
  for (std::size_t i = 1; i < pool->events.size(); i += 2) {
    const auto p = band_profile(pool->events[i].wave);
    std::string best;
    double best_d = 1e300;
    for (const auto& [cls, c] : centroid) {
      const double d = energy_profile_distance(p, c);
      if (d < best_d) {
        best_d = d;
        best = cls;
      }
    }
    correct += best == pool->events[i].event_class;
    ++total;
  }
  EXPECT_GT(static_cast<double>(correct) / total, 0.9);
}

TEST_F(Toy, TrainingCorpusBalancedAndDeterministic) {
  CorpusOptions opt;
  opt.seed = 5;
  const auto a = gen_training_corpus(*pool, "tone", Split::Train, 4, opt);
  int pos = 0;
  for (const auto& s : a.specs) pos += s.label;
  EXPECT_EQ(pos, 2);
  const auto m = gen_training_corpus(*pool, "chirp", Split::Dev, 101, opt);
  EXPECT_EQ(manifest_text(m), manifest_text(gen_training_corpus(*pool, "chirp", Split::Dev, 101, opt)));
  int p2 = 0;
  for (const auto& s : m.specs) {
    p2 += s.label;
    EXPECT_EQ(s.label == 1, s.event_id.has_value());
    if (s.event_id) {
      const auto& ev = pool->find(*s.event_id);
      EXPECT_EQ(ev.event_class, "chirp");
      EXPECT_TRUE(fits(ev.wave, pool->find(s.background_id).wave, s.onset_s));
      EXPECT_TRUE(s.ebr_db == -6.0 || s.ebr_db == 0.0 || s.ebr_db == 6.0);
    }
  }
  EXPECT_EQ(p2, 51);
}

TEST_F(Toy, EbrHistogramUniform) {
  CorpusOptions opt;
  opt.seed = 6;
  opt.positive_ratio = 1.0;
  const auto m = gen_training_corpus(*pool, "burst", Split::Train, 5000, opt);
  std::map<double, int> hist;
  for (const auto& s : m.specs) ++hist[s.ebr_db];
  ASSERT_EQ(hist.size(), 3u);
  const double expect = 5000.0 / 3.0, sigma = std::sqrt(5000.0 * (1.0 / 3.0) * (2.0 / 3.0));
  for (const auto& [ebr, n] : hist) EXPECT_LT(std::abs(n - expect), 3.0 * sigma) << ebr;
}

TEST_F(Toy, RenderedPositivesHitRequestedEbr) {
  CorpusOptions opt;
  opt.seed = 7;
  const auto m = gen_training_corpus(*pool, "tone", Split::Test, 60, opt);
  for (const auto& s : m.specs) {
    const auto out = render(s, *pool);
    const auto& bg = pool->find(s.background_id).wave;
    if (!s.event_id) {
      EXPECT_EQ(out.samples, bg.samples);
      continue;
    }
    const auto start = onset_sample(s.onset_s, bg.sample_rate);
    const auto len = pool->find(*s.event_id).wave.size();
    EXPECT_NEAR(measured_ebr_db(out, bg, start, len), s.ebr_db, 0.1);
    EXPECT_EQ(render(s, *pool).samples, out.samples);
  }
}

TEST_F(Toy, InfeasiblePairsSkippedWithWarning) {
  AssetPool small;
  small.events.push_back(pool->events[0]);
  small.backgrounds.push_back({"short.wav", "", Waveform{std::vector<double>(10, 0.1), 8000}});
  small.backgrounds.push_back(pool->backgrounds[0]);
  std::vector<std::string> warnings;
  auto old = set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
  CorpusOptions opt;
  opt.positive_ratio = 1.0;
  const auto m = gen_training_corpus(small, "tone", Split::Train, 20, opt);
  set_warning_sink(old);
  EXPECT_FALSE(warnings.empty());
  for (const auto& s : m.specs) EXPECT_EQ(s.background_id, pool->backgrounds[0].id);
}

TEST_F(Toy, UnknownClassOrEmptyPool) {
  EXPECT_THROW(gen_training_corpus(*pool, "siren", Split::Train, 4, {}), ValidationError);
  EXPECT_THROW(gen_training_corpus(AssetPool{pool->events, {}}, "tone", Split::Train, 4, {}), ValidationError);
}

TEST(PositionGrid, FitRuleSkipsLatePositions) {
  AssetPool p;
  p.events.push_back({"ev.wav", "gun", Waveform{std::vector<double>(2 * 100, 0.5), 100}});
  p.backgrounds.push_back({"bg.wav", "", Waveform{std::vector<double>(30 * 100, 0.1), 100}});
  const std::vector<double> positions = {28.0, 29.0}, ebrs = {0.0};
  const auto m = gen_position_grid(p, "gun", positions, ebrs);
  ASSERT_EQ(m.specs.size(), 1u);
  EXPECT_EQ(m.specs[0].onset_s, 28.0);
  EXPECT_EQ(m.split, Split::Sensitivity);
}

TEST(PositionGrid, DeskScaleCount) {
  AssetPool p;
  Rng rng(8);
  for (int e = 0; e < 5; ++e) p.events.push_back({"e" + std::to_string(e), "tone", noise(40, 100, rng, 0.3)});
  for (int b = 0; b < 10; ++b) p.backgrounds.push_back({"b" + std::to_string(b), "", noise(300, 100, rng, 0.1)});
  const auto positions = position_grid(2.5, 10);
  const std::vector<double> ebrs = {-6, 0, 6};
  const auto m = gen_position_grid(p, "tone", positions, ebrs);
  EXPECT_EQ(m.specs.size(), 1500u);
  for (const auto& s : m.specs) EXPECT_EQ(s.label, 1);
}

TEST(PositionGrid, PaperScaleUpperBound) {
  EXPECT_EQ((61 + 58 + 76) * 100 * 30 * 3, 1755000);
  const auto g = position_grid(30.0, 30);
  for (int t = 0; t < 30; ++t) EXPECT_DOUBLE_EQ(g[t], t);
}

TEST(Manifest, RoundTripAndHeader) {
  CorpusManifest m;
  m.split = Split::Dev;
  m.seed = 99;
  m.asset_dir = "assets";
  m.specs.push_back({"dev-000000", std::string("events/tone_001.wav"), "backgrounds/bg_002.wav", -6.0, 1.2345, 1, 77});
  m.specs.push_back({"dev-000001", std::nullopt, "backgrounds/bg_003.wav", 0.0, 0.0, 0, 78});
  const auto text = manifest_text(m);
  EXPECT_EQ(text.substr(0, 14), "#raec-manifest");
  EXPECT_NE(text.find("\tversion=1"), std::string::npos);
  EXPECT_NE(text.find("\tseed=99"), std::string::npos);
  EXPECT_NE(text.find("\n" + std::string(kManifestColumns) + "\n"), std::string::npos);
  EXPECT_NE(text.find("dev-000001\tdev\t-\t"), std::string::npos);
  std::istringstream is(text);
  const auto back = read_manifest(is);
  EXPECT_EQ(manifest_text(back), text);
  EXPECT_EQ(back.specs[0].onset_s, 1.2345);
  EXPECT_FALSE(back.specs[1].event_id.has_value());
}

TEST(Manifest, MalformedInputs) {
  std::istringstream empty("");
  EXPECT_THROW(read_manifest(empty), ValidationError);
  std::istringstream bad("#raec-manifest\tversion=1\tsplit=train\tseed=1\tassets=a\n" + std::string(kManifestColumns) + "\nx\ttrain\t-\n");
  EXPECT_THROW(read_manifest(bad), ValidationError);
  EXPECT_THROW(parse_split("holdout"), ValidationError);
}

TEST(Assets, SaveAndLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "raec_assets_roundtrip";
  std::filesystem::remove_all(dir);
  ToyAssetConfig cfg;
  cfg.events_per_class = 2;
  cfg.backgrounds = 2;
  const auto pool = gen_toy_assets(3, cfg);
  save_assets(dir, pool);
  const auto back = load_assets(dir);
  ASSERT_EQ(back.events.size(), pool.events.size());
  for (std::size_t i = 0; i < pool.events.size(); ++i) {
    EXPECT_EQ(back.events[i].id, pool.events[i].id);
    EXPECT_EQ(back.events[i].event_class, pool.events[i].event_class);
    EXPECT_EQ(back.events[i].wave.samples, pool.events[i].wave.samples);
  }
  EXPECT_EQ(back.backgrounds[1].wave.samples, pool.backgrounds[1].wave.samples);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_assets(dir), ValidationError);
}
