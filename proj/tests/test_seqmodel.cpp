#include <raec/checkpoint.hpp>
#include <raec/selftest.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace raec;

namespace {

LstmParams random_lstm(Eigen::Index n, Eigen::Index d, Rng& rng, double scale = 0.7) {
  auto p = LstmParams::zeros(n, d);
  for (Eigen::Index k = 0; k < p.W.size(); ++k) p.W(k) = scale * rng.gaussian();
  for (Eigen::Index k = 0; k < p.U.size(); ++k) p.U(k) = scale * rng.gaussian();
  for (Eigen::Index k = 0; k < p.b.size(); ++k) p.b(k) = scale * rng.gaussian();
  return p;
}

oracle::Mat to_rows(const RowMatrix& m) {
  oracle::Mat r(m.rows(), oracle::Vec(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

oracle::Vec to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

oracle::Mat columns(const Eigen::MatrixXd& X) {
  oracle::Mat xs;
  for (Eigen::Index t = 0; t < X.cols(); ++t) xs.push_back(to_vec(X.col(t)));
  return xs;
}

oracle::Mat oracle_run(const LstmParams& p, const Eigen::MatrixXd& X) { return oracle::lstm_run(to_rows(p.W), to_rows(p.U), to_vec(p.b), columns(X)); }

}  // namespace

TEST(LstmCell, ZeroEverythingGivesZero) {
  const auto p = LstmParams::zeros(4, 3);
  const auto s = lstm_cell(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4), p.view());
  EXPECT_TRUE(s.h.isZero(0.0));
  EXPECT_TRUE(s.c.isZero(0.0));
}

TEST(LstmCell, SaturatedForgetGateKeepsMemory) {
  auto p = LstmParams::zeros(3, 2);
  p.b.segment(3, 3).setConstant(20.0);
  const Eigen::VectorXd c_prev = Eigen::Vector3d(0.4, -1.2, 2.0);
  const auto s = lstm_cell(Eigen::VectorXd::Zero(2), Eigen::Vector3d(0.1, 0.2, -0.3), c_prev, p.view());
  EXPECT_TRUE(s.c.isApprox(c_prev, 1e-8));
  EXPECT_LT((s.c - c_prev).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LstmCell, MatchesScalarOracle) {
  Rng rng(1);
  const auto p = random_lstm(4, 3, rng);
  const Eigen::VectorXd x = Eigen::Vector3d(0.5, -1.0, 2.0);
  const Eigen::VectorXd h = Eigen::Vector4d(0.1, -0.2, 0.3, 0.0), c = Eigen::Vector4d(1.0, -0.5, 0.2, 0.7);
  const auto s = lstm_cell(x, h, c, p.view());
  oracle::Vec oh = to_vec(h), oc = to_vec(c);
  oracle::lstm_cell(to_rows(p.W), to_rows(p.U), to_vec(p.b), to_vec(x), oh, oc);
  for (int n = 0; n < 4; ++n) {
    EXPECT_NEAR(s.h(n), oh[n], 1e-12);
    EXPECT_NEAR(s.c(n), oc[n], 1e-12);
  }
}

TEST(LstmCell, ShapeMismatch) {
  const auto p = LstmParams::zeros(4, 3);
  EXPECT_THROW(lstm_cell(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4), p.view()), ValidationError);
  RowMatrix badU = RowMatrix::Zero(16, 3);
  LstmWeights w{Eigen::Map<const RowMatrix>(p.W.data(), 16, 3), Eigen::Map<const RowMatrix>(badU.data(), 16, 3),
                Eigen::Map<const Eigen::VectorXd>(p.b.data(), 16)};
  EXPECT_THROW(w.validate(), ValidationError);
}

TEST(LstmForward, SingleFrameIsOneCell) {
  Rng rng(2);
  const auto p = random_lstm(5, 3, rng);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(3, 1);
  const auto H = lstm_forward(X, p.view());
  const auto s = lstm_cell(X.col(0), Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(5), p.view());
  EXPECT_TRUE(H.col(0).isApprox(s.h, 1e-14));
}

TEST(LstmForward, ZeroModelGivesZeroHidden) {
  const auto p = LstmParams::zeros(4, 3);
  EXPECT_TRUE(lstm_forward(Eigen::MatrixXd::Random(3, 9), p.view()).isZero(0.0));
}

TEST(LstmForward, ZeroInputWeightsIgnoreRecurrence) {
  Rng rng(3);
  auto p = random_lstm(4, 3, rng);
  p.W.setZero();
  p.b.setZero();
  EXPECT_TRUE(lstm_forward(Eigen::MatrixXd::Random(3, 9), p.view()).isZero(0.0));
}

TEST(LstmForward, ChainedOracleOverSevenFrames) {
  Rng rng(4);
  const auto p = random_lstm(6, 4, rng);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(4, 7) * 2.0;
  const auto H = lstm_forward(X, p.view());
  const auto ref = oracle_run(p, X);
  for (int t = 0; t < 7; ++t)
    for (int n = 0; n < 6; ++n) EXPECT_NEAR(H(n, t), ref[t][n], 1e-12);
  EXPECT_LT(H.cwiseAbs().maxCoeff(), 1.0);
}

TEST(LstmForward, FeatureMatrixInput) {
  Rng rng(5);
  const auto p = random_lstm(3, 2, rng);
  FeatureMatrix fm;
  fm.values = RowMatrix::Random(5, 2);
  EXPECT_TRUE(lstm_forward(fm, p.view()).isApprox(lstm_forward(Eigen::MatrixXd(fm.values.transpose()), p.view()), 0.0));
  fm.values = RowMatrix::Random(5, 3);
  EXPECT_THROW(lstm_forward(fm, p.view()), ValidationError);
}

TEST(BiLstm, BackwardHalfIsReversedRun) {
  Rng rng(6);
  const auto f = random_lstm(3, 4, rng), b = random_lstm(2, 4, rng);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(4, 8);
  const auto H = bilstm_forward(X, f.view(), b.view());
  ASSERT_EQ(H.rows(), 5);
  const Eigen::MatrixXd rev = lstm_forward(Eigen::MatrixXd(X.rowwise().reverse()), b.view());
  const Eigen::Index T = X.cols();
  for (Eigen::Index t = 0; t < T; ++t) EXPECT_EQ(H.col(t).tail(2), rev.col(T - 1 - t));
  EXPECT_EQ(H.topRows(3), lstm_forward(X, f.view()));
}

TEST(BiLstm, PalindromeGivesMirroredHalves) {
  Rng rng(7);
  const auto p = random_lstm(3, 2, rng);
  Eigen::MatrixXd X(2, 7);
  for (int t = 0; t < 4; ++t) X.col(t) = X.col(6 - t) = Eigen::Vector2d(rng.gaussian(), rng.gaussian());
  const auto H = bilstm_forward(X, p.view(), p.view());
  for (int t = 0; t < 7; ++t) EXPECT_EQ(H.col(t).head(3), H.col(6 - t).tail(3));
}

TEST(BiLstm, MatchesTwoOracleRuns) {
  Rng rng(8);
  const auto f = random_lstm(3, 4, rng), b = random_lstm(3, 4, rng);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(4, 6);
  const auto H = bilstm_forward(X, f.view(), b.view());
  const auto fwd = oracle_run(f, X);
  auto xs = columns(X);
  std::reverse(xs.begin(), xs.end());
  const auto bwd = oracle::lstm_run(to_rows(b.W), to_rows(b.U), to_vec(b.b), xs);
  for (int t = 0; t < 6; ++t)
    for (int n = 0; n < 3; ++n) {
      EXPECT_NEAR(H(n, t), fwd[t][n], 1e-12);
      EXPECT_NEAR(H(3 + n, t), bwd[5 - t][n], 1e-12);
    }
}

TEST(Heads, ZeroHeadGivesHalf) {
  const Eigen::VectorXd w = Eigen::VectorXd::Zero(3);
  const DenseHead head{Eigen::Map<const Eigen::VectorXd>(w.data(), 3), 0.0};
  const Eigen::MatrixXd H = Eigen::MatrixXd::Random(3, 4);
  for (double y : frame_predictions(H, head)) EXPECT_EQ(y, 0.5);
  EXPECT_EQ(utterance_from_feature(Eigen::Vector3d(1, 2, 3), head), 0.5);
}

TEST(Heads, FramePredictionsPermuteWithFrames) {
  Rng rng(9);
  const Eigen::VectorXd w = Eigen::VectorXd::Random(3);
  const DenseHead head{Eigen::Map<const Eigen::VectorXd>(w.data(), 3), 0.3};
  const Eigen::MatrixXd H = Eigen::MatrixXd::Random(3, 5);
  const std::vector<int> perm = {3, 0, 4, 1, 2};
  Eigen::MatrixXd P(3, 5);
  for (int t = 0; t < 5; ++t) P.col(t) = H.col(perm[t]);
  const auto y = frame_predictions(H, head), yp = frame_predictions(P, head);
  for (int t = 0; t < 5; ++t) EXPECT_EQ(yp[t], y[perm[t]]);
}

TEST(Heads, MatchDenseOracle) {
  Rng rng(10);
  const Eigen::VectorXd w = Eigen::VectorXd::Random(4);
  const DenseHead head{Eigen::Map<const Eigen::VectorXd>(w.data(), 4), -0.2};
  const Eigen::MatrixXd H = Eigen::MatrixXd::Random(4, 3);
  const auto y = frame_predictions(H, head);
  for (int t = 0; t < 3; ++t) EXPECT_NEAR(y[t], oracle::dense({to_vec(w)}, to_vec(H.col(t)), {-0.2}, 1)[0], 1e-12);
  EXPECT_NEAR(utterance_from_feature(H.col(1), head), y[1], 1e-15);
}

TEST(Heads, MonotoneAlongWeights) {
  const Eigen::VectorXd w = Eigen::Vector3d(0.5, -1.0, 2.0);
  const DenseHead head{Eigen::Map<const Eigen::VectorXd>(w.data(), 3), 0.1};
  Eigen::VectorXd h = Eigen::Vector3d(0.1, 0.1, 0.1);
  double prev = utterance_from_feature(h, head);
  for (int k = 0; k < 10; ++k) {
    h += 0.1 * w;
    const double y = utterance_from_feature(h, head);
    EXPECT_GT(y, prev);
    prev = y;
  }
}

TEST(Heads, SizeMismatch) {
  const Eigen::VectorXd w = Eigen::VectorXd::Zero(3);
  const DenseHead head{Eigen::Map<const Eigen::VectorXd>(w.data(), 3), 0.0};
  EXPECT_THROW(frame_predictions(Eigen::MatrixXd::Zero(4, 2), head), ValidationError);
  EXPECT_THROW(utterance_from_feature(Eigen::VectorXd::Zero(2), head), ValidationError);
}

TEST(ModelInit, ShapesAndInitialisation) {
  ModelConfig cfg{2, 8, Direction::Bi, PoolingKind::PredAttention, 5};
  const auto m = Model::initialize(cfg, 3);
  EXPECT_EQ(m.params.at("lstm.0.fwd.W").shape, (std::vector<std::size_t>{16, 5}));
  EXPECT_EQ(m.params.at("lstm.1.bwd.W").shape, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(m.params.at("lstm.1.bwd.U").shape, (std::vector<std::size_t>{16, 4}));
  EXPECT_EQ(m.params.at("head.w").shape, (std::vector<std::size_t>{8}));
  EXPECT_EQ(m.params.at("attention.w").shape, (std::vector<std::size_t>{8}));
  const auto b = m.params.at("lstm.0.fwd.b").vector();
  EXPECT_TRUE(b.segment(0, 4).isZero(0.0));
  EXPECT_TRUE(b.segment(4, 4).isOnes(0.0));
  EXPECT_TRUE(b.segment(8, 8).isZero(0.0));
  const auto U = m.params.at("lstm.0.fwd.U").matrix();
  for (int g = 0; g < 4; ++g) {
    const Eigen::MatrixXd blk = U.middleRows(4 * g, 4);
    EXPECT_TRUE((blk.transpose() * blk).isApprox(Eigen::MatrixXd::Identity(4, 4), 1e-12));
  }
  const double lim = std::sqrt(6.0 / (5 + 16));
  EXPECT_LE(m.params.at("lstm.0.fwd.W").matrix().cwiseAbs().maxCoeff(), lim);
  EXPECT_FALSE(Model::initialize({1, 8, Direction::Uni, PoolingKind::PredMax, 5}, 3).params.contains("attention.w"));
}

TEST(ModelInit, SeedDeterminesParameters) {
  ModelConfig cfg{1, 6, Direction::Uni, PoolingKind::PredMax, 4};
  EXPECT_EQ(Model::initialize(cfg, 9).params, Model::initialize(cfg, 9).params);
  EXPECT_FALSE(Model::initialize(cfg, 9).params == Model::initialize(cfg, 10).params);
}

TEST(ModelConfigTest, Validation) {
  EXPECT_THROW((ModelConfig{3, 8, Direction::Uni, PoolingKind::PredMax, 4}.validate()), ValidationError);
  EXPECT_THROW((ModelConfig{1, 7, Direction::Bi, PoolingKind::PredMax, 4}.validate()), ValidationError);
  EXPECT_EQ((ModelConfig{1, 32, Direction::Bi, PoolingKind::PredMax, 4}.units_per_direction()), 16);
  EXPECT_EQ(parse_direction("bi"), Direction::Bi);
  EXPECT_THROW(parse_direction("both"), ValidationError);
}

TEST(ModelForward, BatchMatchesSingleUtterances) {
  Rng rng(11);
  for (auto kind : kAllPoolingKinds) {
    for (auto dir : {Direction::Uni, Direction::Bi}) {
      const auto m = Model::initialize({2, 6, dir, kind, 3}, 12);
      std::vector<FeatureMatrix> data;
      for (int b = 0; b < 3; ++b) data.push_back(random_features(7, 3, rng));
      std::vector<const FeatureMatrix*> batch;
      for (const auto& d : data) batch.push_back(&d);
      const auto y = forward(m, batch);
      for (int b = 0; b < 3; ++b) EXPECT_NEAR(y[b], predict(m, data[b]), 1e-13) << name(kind);
    }
  }
}

TEST(ModelForward, UniLastFrameMatchesComposedOracle) {
  Rng rng(13);
  const auto m = Model::initialize({1, 4, Direction::Uni, PoolingKind::FeatLastFrame, 3}, 14);
  const auto fm = random_features(6, 3, rng);
  const auto& W = m.params.at("lstm.0.fwd.W");
  const auto& U = m.params.at("lstm.0.fwd.U");
  oracle::Mat Wr(16, oracle::Vec(3)), Ur(16, oracle::Vec(4));
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 3; ++j) Wr[i][j] = W.values[i * 3 + j];
    for (int j = 0; j < 4; ++j) Ur[i][j] = U.values[i * 4 + j];
  }
  oracle::Mat xs;
  for (int t = 0; t < 6; ++t) xs.push_back({fm.values(t, 0), fm.values(t, 1), fm.values(t, 2)});
  const auto hs = oracle::lstm_run(Wr, Ur, m.params.at("lstm.0.fwd.b").values, xs);
  const double ref = oracle::dense({m.params.at("head.w").values}, hs.back(), m.params.at("head.b").values, 1)[0];
  EXPECT_NEAR(predict(m, fm), ref, 1e-12);
}

TEST(ModelForward, NormalisationApplied) {
  Rng rng(15);
  auto m = Model::initialize({1, 4, Direction::Uni, PoolingKind::PredAvg, 3}, 16);
  auto fm = random_features(5, 3, rng);
  const double y = predict(m, fm);
  m.norm.mean = Eigen::Vector3d(1.0, 2.0, 3.0);
  m.norm.scale = Eigen::Vector3d(0.5, 2.0, 1.0);
  FeatureMatrix shifted = fm;
  for (Eigen::Index t = 0; t < 5; ++t)
    for (Eigen::Index f = 0; f < 3; ++f) shifted.values(t, f) = fm.values(t, f) / m.norm.scale(f) + m.norm.mean(f);
  EXPECT_NEAR(predict(m, shifted), y, 1e-12);
}

TEST(ModelForward, MixedLengthsAndDimensionsRejected) {
  Rng rng(17);
  const auto m = Model::initialize({1, 4, Direction::Uni, PoolingKind::PredAvg, 3}, 18);
  const auto a = random_features(5, 3, rng), b = random_features(6, 3, rng), c = random_features(5, 2, rng);
  std::vector<const FeatureMatrix*> mixed = {&a, &b};
  EXPECT_THROW(forward(m, mixed), ValidationError);
  EXPECT_THROW(predict(m, c), ValidationError);
}

TEST(ModelGradient, TwoLayerStacksPassGradCheck) {
  const auto r = deep_gradient_suite(2);
  EXPECT_TRUE(r.ok()) << (r.failures.empty() ? "" : r.failures.front());
  EXPECT_LT(r.worst, 1e-4);
}

TEST(ModelGradient, BatchGradientIsMeanOfSingles) {
  Rng rng(19);
  const auto m = Model::initialize({1, 6, Direction::Bi, PoolingKind::FeatAttention, 3}, 20);
  const auto a = random_features(4, 3, rng), b = random_features(4, 3, rng);
  std::vector<const FeatureMatrix*> both = {&a, &b}, only_a = {&a}, only_b = {&b};
  const std::vector<int> labels = {1, 0};
  GradientMap g(m.params), ga(m.params), gb(m.params);
  loss_and_gradient(m, both, labels, &g);
  loss_and_gradient(m, only_a, std::span(labels).first(1), &ga, 0.5);
  loss_and_gradient(m, only_b, std::span(labels).last(1), &gb, 0.5);
  ga.add(gb);
  for (const auto& [name, v] : g)
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], ga.at(name)[i], 1e-14) << name;
}

TEST(Checkpoint, BitExactRoundTrip) {
  for (auto kind : {PoolingKind::PredAttention, PoolingKind::FeatMax}) {
    auto m = Model::initialize({2, 6, Direction::Bi, kind, 4}, 21);
    m.norm.mean = Eigen::Vector4d(0.1, -0.2, 1.0 / 3.0, 5.0);
    m.norm.scale = Eigen::Vector4d(1.0, 2.0, 0.3, 1e-3);
    const auto bytes = checkpoint_bytes(m);
    EXPECT_EQ(bytes.substr(0, 4), "RAEC");
    std::istringstream is(bytes);
    const auto back = read_checkpoint(is);
    EXPECT_EQ(back.config, m.config);
    EXPECT_EQ(back.params, m.params);
    EXPECT_EQ(back.norm.mean, m.norm.mean);
    EXPECT_EQ(checkpoint_bytes(back), bytes);
  }
}

TEST(Checkpoint, LayoutOfHeader) {
  const auto m = Model::initialize({1, 2, Direction::Uni, PoolingKind::PredMax, 1}, 0);
  const auto bytes = checkpoint_bytes(m);
  // magic, version 1, layers 1, units 2, dir 0, pooling 4, input 1, tensor count 3 + 2 + 2 norm
  const std::string header("RAEC\x01\x00\x01\x02\x00\x00\x00\x00\x04\x01\x00\x00\x00\x07\x00\x00\x00", 21);
  EXPECT_EQ(bytes.substr(0, 21), header);
  // First tensor: name "lstm.0.fwd.W", rank 2, dims 8 x 1.
  EXPECT_EQ(bytes.substr(21, 2), std::string("\x0c\x00", 2));
  EXPECT_EQ(bytes.substr(23, 12), "lstm.0.fwd.W");
  EXPECT_EQ(bytes.substr(35, 9), std::string("\x02\x08\x00\x00\x00\x01\x00\x00\x00", 9));
}

TEST(Checkpoint, CorruptInputsRejected) {
  const auto bytes = checkpoint_bytes(Model::initialize({1, 2, Direction::Uni, PoolingKind::PredMax, 1}, 0));
  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(truncated), ValidationError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream badmagic(bad);
  EXPECT_THROW(read_checkpoint(badmagic), ValidationError);
  std::string badver = bytes;
  badver[4] = 9;
  std::istringstream v(badver);
  EXPECT_THROW(read_checkpoint(v), ValidationError);
}
