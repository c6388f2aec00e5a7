#include <gtest/gtest.h>

#include <cmath>

#include "fcprint/connectome.hpp"
#include "fcprint/error.hpp"
#include "fcprint/fingerprint.hpp"
#include "fcprint/rng.hpp"
#include "fcprint/synth.hpp"
#include "oracles.hpp"

using namespace fcprint;
using fingerprint::Method;
using fingerprint::SimilarityMatrix;
using Eigen::MatrixXd;

namespace {

std::vector<MatrixXd> random_connectomes(int n, int p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MatrixXd> out;
  for (int i = 0; i < n; ++i) out.push_back(connectome::pearson_fc(oracle::gaussian(p, 2 * p, rng)).matrix);
  return out;
}

synth::CohortConfig small_cohort(std::uint64_t seed) {
  synth::CohortConfig c;
  c.n_subjects = 8;
  c.p_rois = 12;
  c.n_timepoints = 100;
  c.sessions = {"rest", "motor"};
  c.seed = seed;
  return c;
}

fingerprint::PipelineConfig quick(Method m) {
  fingerprint::PipelineConfig pc;
  pc.method = m;
  pc.K = 4;
  pc.L = 2;
  pc.ksvd_iterations = 5;
  pc.ae.arch.encoder = {{4, 3, 2}, {8, 3, 2}};
  pc.ae.arch.latent_dim = 8;
  pc.ae.train.epochs = 10;
  pc.ae.train.batch_size = 4;
  pc.seed = 3;
  return pc;
}

}  // namespace

TEST(Similarity, SelfAndNegation) {
  const auto set = random_connectomes(4, 6, 1);
  const SimilarityMatrix s = fingerprint::similarity_matrix(set, set);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(s.values(i, i), 1.0, 1e-12);
  std::vector<MatrixXd> neg;
  for (const auto& m : set) {
    MatrixXd n = -m;
    n.diagonal().setOnes();
    neg.push_back(n);
  }
  const SimilarityMatrix sn = fingerprint::similarity_matrix(set, neg);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(sn.values(i, i), -1.0, 1e-12);
  EXPECT_LE(sn.values.maxCoeff(), 1.0);
  EXPECT_GE(sn.values.minCoeff(), -1.0);
}

TEST(Similarity, MatchesPearsonOracle) {
  const auto a = random_connectomes(3, 5, 2);
  const auto b = random_connectomes(3, 5, 3);
  const SimilarityMatrix s = fingerprint::similarity_matrix(a, b);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      std::vector<double> x, y;
      for (int r = 0; r < 5; ++r)
        for (int c = r + 1; c < 5; ++c) {
          x.push_back(a[std::size_t(i)](r, c));
          y.push_back(b[std::size_t(j)](r, c));
        }
      EXPECT_NEAR(s.values(i, j), oracle::pearson(x, y), 1e-13);
    }
  }
}

TEST(Similarity, Errors) {
  const auto a = random_connectomes(3, 5, 2);
  EXPECT_THROW(fingerprint::similarity_matrix(a, random_connectomes(2, 5, 1)), DimensionError);
  EXPECT_THROW(fingerprint::similarity_matrix(a, random_connectomes(3, 6, 1)), DimensionError);
  std::vector<MatrixXd> flat = a;
  flat[1] = MatrixXd::Identity(5, 5);
  EXPECT_THROW(fingerprint::similarity_matrix(a, flat), DegenerateInputError);
}

TEST(Identify, IdentityAndShifted) {
  EXPECT_EQ(fingerprint::identify({MatrixXd::Identity(5, 5)}).accuracy, 1.0);
  MatrixXd shifted = MatrixXd::Zero(5, 5);
  for (int i = 0; i < 5; ++i) shifted(i, (i + 1) % 5) = 1.0;
  const auto r = fingerprint::identify({shifted});
  EXPECT_EQ(r.accuracy, 0.0);
  EXPECT_EQ(r.predictions[4], 0);
  EXPECT_EQ(fingerprint::identify_reverse({shifted}).predictions[0], 4);
}

TEST(Identify, TiesGoToLowestColumn) {
  const auto r = fingerprint::identify({MatrixXd::Constant(3, 3, 0.5)});
  EXPECT_EQ(r.predictions, (std::vector<Eigen::Index>{0, 0, 0}));
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0 / 3.0);
}

TEST(Identify, ArgmaxInvariantUnderIncreasingMaps) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    MatrixXd v(9, 9);
    for (int i = 0; i < 81; ++i) v(i) = rng.uniform(-1.0, 1.0);
    const auto base = fingerprint::identify({v});
    EXPECT_EQ(fingerprint::identify({(2.0 * v.array() + 1.0).matrix()}).predictions, base.predictions);
    EXPECT_EQ(fingerprint::identify({v.array().cube().matrix()}).predictions, base.predictions);
  }
}

TEST(Identify, RandomMatricesAtChance) {
  Rng rng(5);
  const int n = 20, reps = 500;
  double sum = 0.0;
  for (int t = 0; t < reps; ++t) {
    MatrixXd v(n, n);
    for (int i = 0; i < n * n; ++i) v(i) = rng.uniform(-1.0, 1.0);
    const auto r = fingerprint::identify({v});
    EXPECT_EQ(r.accuracy * n, double(r.hits()));
    sum += r.accuracy;
  }
  const double p0 = 1.0 / n;
  const double se = std::sqrt(p0 * (1 - p0) / (double(n) * reps));
  EXPECT_NEAR(sum / reps, p0, 3 * se);
}

TEST(Permutation, PerfectSimmatIsSignificant) {
  const auto report = fingerprint::permutation_test(SimilarityMatrix{MatrixXd::Identity(20, 20)}, 1000, 1);
  EXPECT_EQ(report.observed_accuracy, 1.0);
  EXPECT_EQ(report.null_accuracies.size(), 1000u);
  EXPECT_LE(report.p_value, 0.002);
}

TEST(Permutation, BoundsAndAddOneFormula) {
  MatrixXd shifted = MatrixXd::Zero(6, 6);
  for (int i = 0; i < 6; ++i) shifted(i, (i + 1) % 6) = 1.0;
  const auto r = fingerprint::permutation_test(SimilarityMatrix{shifted}, 200, 2);
  EXPECT_EQ(r.observed_accuracy, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
  Rng rng(3);
  MatrixXd v(6, 6);
  for (int i = 0; i < 36; ++i) v(i) = rng.uniform();
  const auto q = fingerprint::permutation_test(SimilarityMatrix{v}, 300, 4);
  std::size_t ge = 0;
  for (double a : q.null_accuracies) ge += a >= q.observed_accuracy;
  EXPECT_DOUBLE_EQ(q.p_value, double(1 + ge) / 301.0);
  EXPECT_GE(q.p_value, 1.0 / 301.0);
  EXPECT_LE(q.p_value, 1.0);
  EXPECT_THROW(fingerprint::permutation_test(SimilarityMatrix{v}, 0, 1), ArgumentError);
}

TEST(Permutation, DeterministicAndNullAtChance) {
  const int n = 15;
  const auto a = fingerprint::permutation_test(SimilarityMatrix{MatrixXd::Identity(n, n)}, 2000, 9);
  const auto b = fingerprint::permutation_test(SimilarityMatrix{MatrixXd::Identity(n, n)}, 2000, 9);
  EXPECT_EQ(a.null_accuracies, b.null_accuracies);
  double mean = 0.0;
  for (double x : a.null_accuracies) mean += x;
  mean /= 2000.0;
  // Hits of a random permutation against a fixed assignment: mean 1, variance 1.
  const double se = 1.0 / n / std::sqrt(2000.0);
  EXPECT_NEAR(mean, 1.0 / n, 3 * se);
}

TEST(MethodNames, RoundTripAndErrors) {
  for (Method m : {Method::finn_raw, Method::baseline_groupavg, Method::convae_sdl})
    EXPECT_EQ(fingerprint::method_from_string(fingerprint::to_string(m)), m);
  EXPECT_THROW(fingerprint::method_from_string("nope"), ConfigError);
  EXPECT_THROW(fingerprint::refine_target_from_string("nope"), ConfigError);
  EXPECT_EQ(fingerprint::refine_target_from_string("original"), fingerprint::RefineTarget::original);
}

TEST(Pipeline, FinnRawMatchesDirectComputation) {
  const auto cohort = synth::generate_cohort(small_cohort(1));
  const auto out = fingerprint::run_pipeline(cohort, "rest", "motor", quick(Method::finn_raw));
  std::vector<MatrixXd> a, b;
  for (const auto& c : connectome::session_connectomes(cohort, 0, {})) a.push_back(c.matrix);
  for (const auto& c : connectome::session_connectomes(cohort, 1, {})) b.push_back(c.matrix);
  EXPECT_EQ(out.result.simmat.values, fingerprint::similarity_matrix(a, b).values);
  EXPECT_THROW(fingerprint::run_pipeline(cohort, "rest", "wm", quick(Method::finn_raw)), ConfigError);
}

TEST(Pipeline, BaselineResidualsSubtractTrainMean) {
  const auto cohort = synth::generate_cohort(small_cohort(2));
  const auto pair = fingerprint::make_session_pair(connectome::session_connectomes(cohort, 0, {}),
                                                   connectome::session_connectomes(cohort, 1, {}), false);
  const auto res = fingerprint::compute_residuals(pair, quick(Method::baseline_groupavg));
  MatrixXd mean = MatrixXd::Zero(12, 12);
  for (const auto& m : pair.train) mean += m;
  mean /= 8.0;
  MatrixXd want = pair.test[3] - mean;
  want.diagonal().setZero();
  EXPECT_LT((res.test[3] - want).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Pipeline, DeterministicForEveryMethod) {
  const auto cohort = synth::generate_cohort(small_cohort(3));
  for (Method m : {Method::finn_raw, Method::baseline_groupavg, Method::convae_sdl}) {
    const auto a = fingerprint::run_pipeline(cohort, "rest", "motor", quick(m));
    const auto b = fingerprint::run_pipeline(cohort, "rest", "motor", quick(m));
    EXPECT_EQ(a.result.predictions, b.result.predictions);
    EXPECT_EQ(a.result.simmat.values, b.result.simmat.values);
    EXPECT_GE(a.result.accuracy, 0.0);
    EXPECT_LE(a.result.accuracy, 1.0);
    EXPECT_DOUBLE_EQ(a.result.accuracy * 8, double(a.result.hits()));
  }
}

TEST(Pipeline, PretrainedAutoencoderIsEquivalent) {
  const auto cohort = synth::generate_cohort(small_cohort(4));
  const auto pc = quick(Method::convae_sdl);
  const auto pair = fingerprint::make_session_pair(connectome::session_connectomes(cohort, 0, {}),
                                                   connectome::session_connectomes(cohort, 1, {}), false);
  const auto ae = fingerprint::train_autoencoder(pair.train, pc);
  EXPECT_EQ(fingerprint::run_on_pair(pair, pc, &ae).result.simmat.values,
            fingerprint::run_on_pair(pair, pc).result.simmat.values);
}

TEST(Pipeline, RefineTargetOriginalDiffers) {
  const auto cohort = synth::generate_cohort(small_cohort(5));
  auto pc = quick(Method::baseline_groupavg);
  const auto a = fingerprint::run_pipeline(cohort, "rest", "motor", pc);
  pc.refine_target = fingerprint::RefineTarget::original;
  const auto b = fingerprint::run_pipeline(cohort, "rest", "motor", pc);
  EXPECT_NE(a.result.simmat.values, b.result.simmat.values);
}

TEST(GridSearch, SingleCellMatchesPipelineAndSkipsInfeasible) {
  const auto cohort = synth::generate_cohort(small_cohort(6));
  const auto pc = quick(Method::baseline_groupavg);
  const auto one = fingerprint::grid_search(cohort, "rest", "motor", pc, {4}, {2});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(*one[0].accuracy, fingerprint::run_pipeline(cohort, "rest", "motor", pc).result.accuracy);

  const auto cells = fingerprint::grid_search(cohort, "rest", "motor", pc, {2, 3}, {2, 3});
  ASSERT_EQ(cells.size(), 4u);
  int feasible = 0;
  for (const auto& c : cells) {
    EXPECT_EQ(c.accuracy.has_value(), c.L <= c.K);
    if (c.accuracy) {
      ++feasible;
      EXPECT_GE(*c.accuracy, 0.0);
      EXPECT_LE(*c.accuracy, 1.0);
    }
  }
  EXPECT_EQ(feasible, 3);
}

TEST(GridSearch, FullRangeOnSmallCohort) {
  const auto cohort = synth::generate_cohort(small_cohort(7));
  std::vector<int> range;
  for (int v = 2; v <= 15; ++v) range.push_back(v);
  auto pc = quick(Method::baseline_groupavg);
  pc.ksvd_iterations = 3;
  const auto cells = fingerprint::grid_search(cohort, "rest", "motor", pc, range, range);
  int feasible = 0;
  for (const auto& c : cells) {
    if (!c.accuracy) continue;
    ++feasible;
    EXPECT_GE(*c.accuracy, 0.0);
    EXPECT_LE(*c.accuracy, 1.0);
  }
  EXPECT_EQ(feasible, 14 * 15 / 2);
}

TEST(Ablation, OneRowPerNetworkAndSkipsTinyLegs) {
  const auto cohort = synth::generate_cohort(small_cohort(8));
  const auto part = synth::default_partition(12, 4);
  const auto report = fingerprint::ablation(cohort, part, "rest", "motor", quick(Method::finn_raw));
  ASSERT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(report.baseline_accuracy,
            fingerprint::run_pipeline(cohort, "rest", "motor", quick(Method::finn_raw)).result.accuracy);
  for (std::size_t g = 0; g < 4; ++g) {
    EXPECT_EQ(report.rows[g].network, g);
    ASSERT_TRUE(report.rows[g].accuracy);
    EXPECT_DOUBLE_EQ(*report.rows[g].delta, *report.rows[g].accuracy - report.baseline_accuracy);
  }

  // Two networks of 11 and 1 ROIs: dropping the big one leaves a single ROI.
  synth::NetworkPartition lopsided;
  lopsided.assignment.assign(12, 0);
  lopsided.assignment[11] = 1;
  lopsided.names = {"big", "small"};
  const auto skipped = fingerprint::ablation(cohort, lopsided, "rest", "motor", quick(Method::finn_raw));
  EXPECT_FALSE(skipped.rows[0].accuracy);
  EXPECT_FALSE(skipped.rows[0].warning.empty());
  EXPECT_TRUE(skipped.rows[1].accuracy);
}
