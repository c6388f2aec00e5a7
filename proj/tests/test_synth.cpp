#include <gtest/gtest.h>

#include <cmath>

#include "fcprint/connectome.hpp"
#include "fcprint/error.hpp"
#include "fcprint/fingerprint.hpp"
#include "fcprint/rng.hpp"
#include "fcprint/synth.hpp"

using namespace fcprint;

namespace {

synth::CohortConfig tiny(std::uint64_t seed) {
  synth::CohortConfig c;
  c.n_subjects = 4;
  c.p_rois = 8;
  c.n_timepoints = 40;
  c.sessions = {"a", "b"};
  c.seed = seed;
  return c;
}

std::vector<std::size_t> sizes(const synth::NetworkPartition& part) {
  std::vector<std::size_t> out;
  for (std::size_t g = 0; g < part.n_networks(); ++g) out.push_back(part.members(g).size());
  return out;
}

double raw_accuracy(const synth::CohortConfig& cfg) {
  fingerprint::PipelineConfig pc;
  pc.method = fingerprint::Method::finn_raw;
  return fingerprint::run_pipeline(synth::generate_cohort(cfg), cfg.sessions[0], cfg.sessions[1], pc)
      .result.accuracy;
}

}  // namespace

TEST(Rng, SplitmixKnownValues) {
  // First output of the reference splitmix64 generator started from state 0.
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
  EXPECT_NE(derive_seed(1, {2}), derive_seed(1, {3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_EQ(derive_seed(5, {}), 5u);
}

TEST(Rng, DrawsAreReproducibleAndInRange) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const std::size_t k = a.below(7);
    EXPECT_EQ(k, b.below(7));
    EXPECT_LT(k, 7u);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(3);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Synth, DefaultPartitionSizes) {
  EXPECT_EQ(sizes(synth::default_partition(12, 12)), std::vector<std::size_t>(12, 1));
  EXPECT_EQ(sizes(synth::default_partition(16, 4)), (std::vector<std::size_t>{4, 4, 4, 4}));
  EXPECT_EQ(sizes(synth::default_partition(10, 3)), (std::vector<std::size_t>{4, 3, 3}));
  const auto part = synth::default_partition(10, 3);
  EXPECT_EQ(part.members(1), (std::vector<std::size_t>{4, 5, 6}));
  EXPECT_NO_THROW(part.validate());
}

TEST(Synth, PartitionRejectsTooManyNetworks) {
  EXPECT_THROW(synth::default_partition(4, 5), ConfigError);
  EXPECT_THROW(synth::default_partition(4, 0), ConfigError);
}

TEST(Synth, ConfigValidationNamesField) {
  auto c = tiny(1);
  c.n_timepoints = 3;
  try {
    synth::generate_cohort(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "n_timepoints");
  }
  c = tiny(1);
  c.noise_std = -1.0;
  EXPECT_THROW(synth::generate_cohort(c), ConfigError);
  c = tiny(1);
  c.n_subjects = 1;
  EXPECT_THROW(synth::generate_cohort(c), ConfigError);
}

TEST(Synth, ShapeAndFiniteness) {
  const auto set = synth::generate_cohort(tiny(9));
  ASSERT_EQ(set.n_subjects(), 4u);
  ASSERT_EQ(set.n_sessions(), 2u);
  EXPECT_EQ(set.subject_ids[3], "sub003");
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t s = 0; s < 2; ++s) {
      EXPECT_EQ(set.at(i, s).rows(), 8);
      EXPECT_EQ(set.at(i, s).cols(), 40);
      EXPECT_TRUE(set.at(i, s).allFinite());
    }
  }
  EXPECT_EQ(set.session_index("b"), 1u);
  EXPECT_THROW(set.session_index("zzz"), ConfigError);
}

TEST(Synth, DeterministicForSeed) {
  const auto a = synth::generate_cohort(tiny(11));
  const auto b = synth::generate_cohort(tiny(11));
  const auto c = synth::generate_cohort(tiny(12));
  bool differs = false;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t s = 0; s < 2; ++s) {
      EXPECT_TRUE((a.at(i, s).array() == b.at(i, s).array()).all());
      differs = differs || (a.at(i, s).array() != c.at(i, s).array()).any();
    }
  }
  EXPECT_TRUE(differs);
}

TEST(Synth, ZeroStrengthIsPureNoise) {
  synth::CohortConfig c;
  c.n_subjects = 2;
  c.p_rois = 4;
  c.n_timepoints = 8;
  c.subject_strength = c.group_strength = c.task_strength = 0.0;
  c.noise_std = 1.0;
  c.seed = 7;
  const auto set = synth::generate_cohort(c);
  EXPECT_TRUE(set.at(0, 0).allFinite());

  // Same-subject FC across sessions is uncorrelated in expectation.
  c.p_rois = 8;
  c.n_timepoints = 64;
  double sum = 0.0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    c.seed = static_cast<std::uint64_t>(r);
    const auto s = synth::generate_cohort(c);
    const auto e1 = connectome::vectorize_upper(connectome::pearson_fc(s.at(0, 0))).values;
    const auto e2 = connectome::vectorize_upper(connectome::pearson_fc(s.at(0, 1))).values;
    const double m1 = e1.mean(), m2 = e2.mean();
    const double r12 = (e1.array() - m1).matrix().dot((e2.array() - m2).matrix()) /
                       std::sqrt((e1.array() - m1).square().sum() * (e2.array() - m2).square().sum());
    sum += r12;
  }
  // 28 edges: per-replicate SD of r is about 0.19, so the mean's SE is about 0.014.
  EXPECT_NEAR(sum / reps, 0.0, 0.05);
}

TEST(Synth, SubjectSignalRestrictedToNetworks) {
  synth::CohortConfig c = tiny(5);
  c.group_strength = c.task_strength = c.noise_std = 0.0;
  c.subject_strength = 1.0;
  c.n_networks = 4;
  c.subject_networks = {1};
  const auto set = synth::generate_cohort(c);
  const auto members = synth::default_partition(8, 4).members(1);
  for (Eigen::Index r = 0; r < 8; ++r) {
    const bool inside = std::find(members.begin(), members.end(), std::size_t(r)) != members.end();
    EXPECT_EQ(set.at(0, 0).row(r).squaredNorm() > 0.0, inside) << "ROI " << r;
  }
}

TEST(Synth, HighSubjectSignalGivesPerfectRawIdentification) {
  synth::CohortConfig c;
  c.n_subjects = 10;
  c.p_rois = 16;
  c.n_timepoints = 200;
  c.subject_strength = 5.0;
  c.task_strength = c.group_strength = 0.0;
  c.noise_std = 0.1;
  c.seed = 21;
  EXPECT_EQ(raw_accuracy(c), 1.0);
}

TEST(Synth, AccuracyNondecreasingInSubjectStrength) {
  std::vector<double> means;
  for (double strength : {0.0, 0.5, 1.5}) {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      synth::CohortConfig c;
      c.n_subjects = 12;
      c.p_rois = 16;
      c.n_timepoints = 150;
      c.subject_strength = strength;
      c.seed = seed;
      sum += raw_accuracy(c);
    }
    means.push_back(sum / 10.0);
  }
  EXPECT_LE(means[0], means[1]);
  EXPECT_LE(means[1], means[2]);
}
