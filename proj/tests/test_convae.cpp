#include <gtest/gtest.h>

#include <cmath>

#include "fcprint/connectome.hpp"
#include "fcprint/convae.hpp"
#include "fcprint/error.hpp"
#include "fcprint/rng.hpp"
#include "fcprint/synth.hpp"
#include "oracles.hpp"

using namespace fcprint;
using convae::Activation;
using convae::Architecture;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Architecture pointwise(int p, Activation act) {
  Architecture a;
  a.input_size = p;
  a.encoder = {{1, 1, 1}};
  a.latent_dim = 0;
  a.activation = act;
  return a;
}

// Encoder and decoder 1x1 weights set to 1, biases 0.
convae::AutoencoderParams unit_pointwise(int p, Activation act) {
  auto params = convae::zero_params(pointwise(p, act));
  for (const auto& l : params.layers) params.values(Eigen::Index(l.weight_offset)) = 1.0;
  return params;
}

Architecture small(int p, Activation act = Activation::tanh) {
  Architecture a;
  a.input_size = p;
  a.encoder = {{2, 3, 2}, {3, 3, 2}};
  a.latent_dim = 4;
  a.activation = act;
  return a;
}

MatrixXd symmetric(int p, Rng& rng) {
  MatrixXd m = oracle::gaussian(p, p, rng);
  return 0.5 * (m + m.transpose());
}

std::vector<MatrixXd> batch(int n, int p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MatrixXd> out;
  for (int i = 0; i < n; ++i) out.push_back(symmetric(p, rng));
  return out;
}

double max_relative_error(const VectorXd& a, const VectorXd& n) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a(i)), std::abs(n(i)), 1e-6});
    worst = std::max(worst, std::abs(a(i) - n(i)) / denom);
  }
  return worst;
}

std::vector<connectome::Connectome> default_cohort_rest() {
  const auto set = synth::generate_cohort({});
  return connectome::session_connectomes(set, 0, {});
}

}  // namespace

TEST(ConvaeShapes, DefaultArchitectureComposes) {
  const auto layers = convae::layer_shapes(Architecture{});
  ASSERT_EQ(layers.size(), 6u);
  EXPECT_EQ(layers[0].out_height, 16);
  EXPECT_EQ(layers[1].out_height, 8);
  EXPECT_EQ(layers[2].kind, convae::LayerKind::dense);
  EXPECT_EQ(layers[2].out_size(), 64u);
  EXPECT_EQ(layers.back().out_height, 32);
  EXPECT_EQ(layers.back().out_channels, 1);
  EXPECT_FALSE(layers.back().activated);
  EXPECT_FALSE(layers[2].activated);
}

TEST(ConvaeShapes, OddSizesRestoreInputShape) {
  for (int p : {5, 7, 10, 13, 30}) {
    const auto params = convae::init_params(small(p), 1.0, 3);
    Rng rng(1);
    EXPECT_EQ(convae::forward(params, symmetric(p, rng)).reconstruction.rows(), p) << "p=" << p;
  }
}

TEST(ConvaeForward, ZeroNetworkGivesZeros) {
  const auto params = convae::zero_params(Architecture{});
  Rng rng(1);
  const auto out = convae::forward(params, symmetric(32, rng));
  EXPECT_EQ(out.reconstruction, MatrixXd::Zero(32, 32));
  EXPECT_EQ(out.latent.size(), 64);
}

TEST(ConvaeForward, DeterministicForSeed) {
  const auto a = convae::init_params(Architecture{}, 1.0, 5);
  const auto b = convae::init_params(Architecture{}, 1.0, 5);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, convae::init_params(Architecture{}, 1.0, 6).values);
  Rng rng(2);
  const MatrixXd x = symmetric(32, rng);
  EXPECT_EQ(convae::forward(a, x).reconstruction, convae::forward(b, x).reconstruction);
}

TEST(ConvaeForward, PointwiseIdentityMatchesElementwiseOracle) {
  Rng rng(3);
  const MatrixXd x = symmetric(6, rng);
  const MatrixXd got = convae::forward(unit_pointwise(6, Activation::tanh), x).reconstruction;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(got(i, j), std::tanh(x(i, j)));
}

TEST(ConvaeForward, RejectsWrongShape) {
  const auto params = convae::zero_params(Architecture{});
  EXPECT_THROW(convae::forward(params, MatrixXd::Zero(16, 16)), DimensionError);
}

TEST(ConvaeLoss, PerfectReconstructionHasZeroLossAndGradient) {
  const auto params = unit_pointwise(5, Activation::identity);
  const auto data = batch(3, 5, 4);
  const auto lg = convae::loss_and_grad(params, data);
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_EQ(lg.grad, VectorXd::Zero(Eigen::Index(params.size())));
  EXPECT_THROW(convae::loss_and_grad(params, std::vector<MatrixXd>{}), ArgumentError);
}

TEST(ConvaeLoss, LinearNetworkScalesQuadratically) {
  const auto params = convae::init_params(small(8, Activation::identity), 1.0, 9);
  auto data = batch(3, 8, 5);
  const double base = convae::loss(params, data);
  for (auto& m : data) m *= 2.0;
  EXPECT_NEAR(convae::loss(params, data), 4.0 * base, 1e-12 * base);
}

TEST(ConvaeLoss, MatchesDefinition) {
  const auto params = convae::init_params(small(8), 1.0, 2);
  const auto data = batch(2, 8, 6);
  double want = 0.0;
  for (const auto& m : data) want += (m - convae::forward(params, m).reconstruction).squaredNorm() / 64.0;
  EXPECT_NEAR(convae::loss(params, data), want / 2.0, 1e-14);
  EXPECT_DOUBLE_EQ(convae::loss_and_grad(params, data).loss, convae::loss(params, data));
}

TEST(ConvaeGradient, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (Activation act : {Activation::tanh, Activation::identity}) {
      const auto params = convae::init_params(small(8, act), 1.0, seed);
      const auto data = batch(2, 8, 100 + seed);
      const VectorXd analytic = convae::loss_and_grad(params, data).grad;
      auto probe = params;
      const VectorXd numeric = oracle::central_difference(
          [&](const VectorXd& v) {
            probe.values = v;
            return convae::loss(probe, data);
          },
          params.values, 1e-5);
      EXPECT_LT(max_relative_error(analytic, numeric), 1e-4) << "seed " << seed;
    }
  }
}

TEST(ConvaeGradient, NoBottleneckAndStrideOne) {
  Architecture a;
  a.input_size = 7;
  a.encoder = {{2, 3, 1}, {2, 5, 2}};
  a.latent_dim = 0;
  const auto params = convae::init_params(a, 1.0, 4);
  const auto data = batch(3, 7, 8);
  auto probe = params;
  const VectorXd numeric = oracle::central_difference(
      [&](const VectorXd& v) {
        probe.values = v;
        return convae::loss(probe, data);
      },
      params.values, 1e-5);
  EXPECT_LT(max_relative_error(convae::loss_and_grad(params, data).grad, numeric), 1e-4);
}

TEST(ConvaeTrain, ZeroLearningRateKeepsLossConstant) {
  const auto data = batch(10, 8, 1);
  convae::TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 3;
  cfg.learning_rate = 0.0;
  const auto result = convae::train(data, small(8), cfg);
  ASSERT_EQ(result.loss_history.size(), 6u);
  for (double l : result.loss_history) EXPECT_EQ(l, result.loss_history[0]);
  EXPECT_EQ(result.params.values, convae::init_params(small(8), 1.0, derive_seed(0, {stream::kAutoencoderInit})).values);
}

TEST(ConvaeTrain, MemorizesIdenticalMatrices) {
  Rng rng(12);
  const MatrixXd pattern = connectome::pearson_fc(oracle::gaussian(16, 40, rng)).matrix;
  const std::vector<MatrixXd> data(8, pattern);
  Architecture arch;
  arch.input_size = 16;
  convae::TrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 4;
  const auto result = convae::train(data, arch, cfg);
  EXPECT_LT(result.loss_history.back(), 0.1 * result.loss_history.front());
}

TEST(ConvaeTrain, DeterministicAndSeedSensitive) {
  const auto data = batch(12, 8, 2);
  convae::TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 5;
  cfg.learning_rate = 1e-2;
  const auto a = convae::train(data, small(8), cfg);
  const auto b = convae::train(data, small(8), cfg);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.params.values, b.params.values);
  cfg.seed = 99;
  const auto c = convae::train(data, small(8), cfg);
  EXPECT_NE(a.params.values, c.params.values);
  for (const auto* r : {&a, &c}) EXPECT_LT(r->loss_history.back(), r->loss_history.front());
}

TEST(ConvaeTrain, DivergenceReportsEpoch) {
  const auto data = batch(4, 8, 3);
  convae::TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e300;
  try {
    convae::train(data, small(8, Activation::identity), cfg);
    FAIL() << "expected TrainingFailure";
  } catch (const TrainingFailure& e) {
    EXPECT_GE(e.epoch(), 0);
    EXPECT_LT(e.epoch(), 50);
  }
}

TEST(ConvaeTrain, ConfigValidation) {
  const auto data = batch(2, 8, 3);
  convae::TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(convae::train(data, small(8), cfg), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(convae::train(data, small(8), cfg), ConfigError);
  EXPECT_THROW(convae::train(std::vector<MatrixXd>{}, small(8), {}), ArgumentError);
}

TEST(ConvaeTrain, DefaultCohortSmoothedLossNonincreasing) {
  const auto conns = default_cohort_rest();
  const auto result = convae::train(conns, Architecture{}, {});
  const auto& h = result.loss_history;
  ASSERT_EQ(h.size(), 200u);
  std::vector<double> smooth;
  for (std::size_t e = 2; e < h.size(); ++e) smooth.push_back((h[e - 2] + h[e - 1] + h[e]) / 3.0);
  for (std::size_t e = 1; e < smooth.size(); ++e) EXPECT_LE(smooth[e], smooth[e - 1]) << "window ending " << e + 2;

  // Trained residuals are smaller than the off-diagonal connectome.
  for (const auto& c : conns) {
    MatrixXd off = c.matrix;
    off.diagonal().setZero();
    EXPECT_LT(convae::residual(c, result.params).matrix.norm(), off.norm());
  }
}

TEST(ConvaeResidual, NullNetworkReturnsConnectome) {
  Rng rng(1);
  const auto c = connectome::pearson_fc(oracle::gaussian(8, 30, rng), "s", "rest");
  const auto r = convae::residual(c, convae::zero_params(small(8)));
  MatrixXd want = c.matrix;
  want.diagonal().setZero();
  EXPECT_EQ(r.matrix, want);
  EXPECT_EQ(r.subject_id, "s");
  EXPECT_EQ(r.session_label, "rest");
}

TEST(ConvaeResidual, ComplementsReconstruction) {
  Rng rng(2);
  const auto c = connectome::pearson_fc(oracle::gaussian(8, 30, rng));
  const auto params = convae::init_params(small(8), 1.0, 3);
  const MatrixXd rec = convae::forward(params, c.matrix).reconstruction;
  const MatrixXd r = convae::residual_matrix(c.matrix, params);
  EXPECT_LT((r - r.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  const MatrixXd sum = r + 0.5 * (rec + rec.transpose());
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      if (i != j) EXPECT_NEAR(sum(i, j), c.matrix(i, j), 1e-9);
}
