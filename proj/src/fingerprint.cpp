#include "fcprint/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fcprint/error.hpp"
#include "fcprint/rng.hpp"

namespace fcprint::fingerprint {

namespace {

// Centered, unit-norm copy of a matrix's strict upper triangle.
Eigen::VectorXd standardized_edges(const Eigen::MatrixXd& m, const char* which, std::size_t index) {
  Eigen::VectorXd e = connectome::vectorize_upper(m).values;
  e.array() -= e.mean();
  const double len = e.norm();
  if (!(len > 0.0) || !std::isfinite(len)) {
    throw DegenerateInputError(std::string("edge vector of ") + which + " matrix " + std::to_string(index) +
                               " has zero variance");
  }
  return e / len;
}

std::size_t count_hits(const std::vector<Eigen::Index>& predictions) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == static_cast<Eigen::Index>(i)) ++hits;
  }
  return hits;
}

}  // namespace

std::size_t IdentificationResult::hits() const { return count_hits(predictions); }

SimilarityMatrix similarity_matrix(std::span<const Eigen::MatrixXd> set1, std::span<const Eigen::MatrixXd> set2) {
  if (set1.size() != set2.size()) throw DimensionError("similarity_matrix: sets differ in length");
  if (set1.size() < 2) throw DimensionError("similarity_matrix: need at least 2 subjects");
  const Eigen::Index p = set1.front().rows();
  const auto n = static_cast<Eigen::Index>(set1.size());
  Eigen::MatrixXd a(connectome::edge_count(p), n);
  Eigen::MatrixXd b(connectome::edge_count(p), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& m1 = set1[std::size_t(i)];
    const auto& m2 = set2[std::size_t(i)];
    if (m1.rows() != p || m1.cols() != p || m2.rows() != p || m2.cols() != p) {
      throw DimensionError("similarity_matrix: matrices differ in size");
    }
    a.col(i) = standardized_edges(m1, "session-1", std::size_t(i));
    b.col(i) = standardized_edges(m2, "session-2", std::size_t(i));
  }
  SimilarityMatrix s;
  s.values = (a.transpose() * b).cwiseMax(-1.0).cwiseMin(1.0);
  return s;
}

IdentificationResult identify(const SimilarityMatrix& simmat) {
  IdentificationResult r;
  r.simmat = simmat;
  const Eigen::Index n = simmat.values.rows();
  r.predictions.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < simmat.values.cols(); ++j) {
      if (simmat.values(i, j) > simmat.values(i, best)) best = j;
    }
    r.predictions[std::size_t(i)] = best;
  }
  r.accuracy = n > 0 ? double(count_hits(r.predictions)) / double(n) : 0.0;
  return r;
}

IdentificationResult identify_reverse(const SimilarityMatrix& simmat) {
  return identify(SimilarityMatrix{simmat.values.transpose()});
}

PermutationReport permutation_test(const IdentificationResult& result, int n_perm, std::uint64_t seed) {
  if (n_perm < 1) throw ArgumentError("permutation_test: n_perm must be >= 1");
  const std::size_t n = result.predictions.size();
  if (n == 0) throw ArgumentError("permutation_test: empty identification result");
  const std::size_t observed_hits = count_hits(result.predictions);

  PermutationReport report;
  report.observed_accuracy = double(observed_hits) / double(n);
  report.null_accuracies.reserve(static_cast<std::size_t>(n_perm));
  std::vector<Eigen::Index> perm(n);
  std::size_t at_least = 0;
  for (int k = 0; k < n_perm; ++k) {
    Rng rng(derive_seed(seed, {stream::kPermutation, static_cast<std::uint64_t>(k)}));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (result.predictions[i] == perm[i]) ++hits;
    }
    if (hits >= observed_hits) ++at_least;
    report.null_accuracies.push_back(double(hits) / double(n));
  }
  report.p_value = double(1 + at_least) / double(1 + n_perm);
  return report;
}

PermutationReport permutation_test(const SimilarityMatrix& simmat, int n_perm, std::uint64_t seed) {
  return permutation_test(identify(simmat), n_perm, seed);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::finn_raw: return "finn_raw";
    case Method::baseline_groupavg: return "baseline_groupavg";
    case Method::convae_sdl: return "convae_sdl";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "finn_raw") return Method::finn_raw;
  if (name == "baseline_groupavg") return Method::baseline_groupavg;
  if (name == "convae_sdl") return Method::convae_sdl;
  throw ConfigError("unknown method '" + name + "'", "method");
}

std::string to_string(RefineTarget t) { return t == RefineTarget::residual ? "residual" : "original"; }

RefineTarget refine_target_from_string(const std::string& name) {
  if (name == "residual") return RefineTarget::residual;
  if (name == "original") return RefineTarget::original;
  throw ConfigError("unknown refine target '" + name + "'", "refine_target");
}

SessionPair make_session_pair(const std::vector<connectome::Connectome>& train,
                              const std::vector<connectome::Connectome>& test, bool fisher_z) {
  if (train.size() != test.size()) throw DimensionError("sessions differ in subject count");
  if (train.empty()) throw ArgumentError("sessions contain no subjects");
  SessionPair pair;
  pair.train_label = train.front().session_label;
  pair.test_label = test.front().session_label;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].subject_id != test[i].subject_id) throw ArgumentError("sessions list subjects in different orders");
    pair.subject_ids.push_back(train[i].subject_id);
    pair.train.push_back(fisher_z ? connectome::fisher_z(train[i].matrix) : train[i].matrix);
    pair.test.push_back(fisher_z ? connectome::fisher_z(test[i].matrix) : test[i].matrix);
  }
  return pair;
}

convae::TrainResult train_autoencoder(const std::vector<Eigen::MatrixXd>& train, const PipelineConfig& cfg) {
  if (train.empty()) throw ArgumentError("no training connectomes");
  convae::Architecture arch = cfg.ae.arch;
  arch.input_size = static_cast<int>(train.front().rows());
  convae::TrainConfig tc = cfg.ae.train;
  tc.seed = derive_seed(cfg.seed, {stream::kAutoencoder});
  return convae::train(std::span<const Eigen::MatrixXd>(train), arch, tc);
}

Residuals compute_residuals(const SessionPair& pair, const PipelineConfig& cfg, const convae::TrainResult* pretrained) {
  Residuals out;
  switch (cfg.method) {
    case Method::finn_raw:
      out.train = pair.train;
      out.test = pair.test;
      break;
    case Method::baseline_groupavg: {
      Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(pair.train.front().rows(), pair.train.front().cols());
      for (const auto& m : pair.train) mean += m;
      mean /= double(pair.train.size());
      auto subtract = [&](const Eigen::MatrixXd& m) {
        Eigen::MatrixXd r = m - mean;
        r.diagonal().setZero();
        return r;
      };
      for (const auto& m : pair.train) out.train.push_back(subtract(m));
      for (const auto& m : pair.test) out.test.push_back(subtract(m));
      break;
    }
    case Method::convae_sdl: {
      if (pretrained) {
        if (pretrained->params.arch.input_size != pair.train.front().rows()) {
          throw DimensionError("pretrained autoencoder does not match the connectome size");
        }
        out.autoencoder = *pretrained;
      } else {
        out.autoencoder = train_autoencoder(pair.train, cfg);
      }
      for (const auto& m : pair.train) out.train.push_back(convae::residual_matrix(m, out.autoencoder->params));
      for (const auto& m : pair.test) out.test.push_back(convae::residual_matrix(m, out.autoencoder->params));
      break;
    }
  }
  return out;
}

namespace {

std::vector<Eigen::MatrixXd> sparse_refine(const std::vector<Eigen::MatrixXd>& residuals,
                                           const std::vector<Eigen::MatrixXd>& originals, const PipelineConfig& cfg,
                                           std::uint64_t session_key, sparse::KsvdResult& fit) {
  const Eigen::Index p = residuals.front().rows();
  Eigen::MatrixXd Y(connectome::edge_count(p), static_cast<Eigen::Index>(residuals.size()));
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    Y.col(static_cast<Eigen::Index>(i)) = connectome::vectorize_upper(residuals[i]).values;
  }
  fit = sparse::ksvd(Y, cfg.K, cfg.L, cfg.ksvd_iterations, derive_seed(cfg.seed, {stream::kDictionary, session_key}));
  std::vector<Eigen::MatrixXd> refined;
  refined.reserve(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const Eigen::MatrixXd& target = cfg.refine_target == RefineTarget::residual ? residuals[i] : originals[i];
    refined.push_back(sparse::refine(target, fit.dictionary, fit.codes.codes.col(static_cast<Eigen::Index>(i))));
  }
  return refined;
}

}  // namespace

PipelineOutput finish_pipeline(const SessionPair& pair, const Residuals& residuals, const PipelineConfig& cfg) {
  PipelineOutput out;
  out.autoencoder = residuals.autoencoder;
  if (cfg.method == Method::finn_raw) {
    out.result = identify(similarity_matrix(residuals.train, residuals.test));
    return out;
  }
  SessionDictionary dicts;
  const auto train_refined = sparse_refine(residuals.train, pair.train, cfg, 0, dicts.train);
  const auto test_refined = sparse_refine(residuals.test, pair.test, cfg, 1, dicts.test);
  out.dictionaries = std::move(dicts);
  out.result = identify(similarity_matrix(train_refined, test_refined));
  return out;
}

PipelineOutput run_on_pair(const SessionPair& pair, const PipelineConfig& cfg,
                           const convae::TrainResult* pretrained) {
  return finish_pipeline(pair, compute_residuals(pair, cfg, pretrained), cfg);
}

namespace {

SessionPair pair_from_cohort(const synth::TimeSeriesSet& cohort, const std::string& train_session,
                             const std::string& test_session, const PipelineConfig& cfg) {
  const std::size_t s1 = cohort.session_index(train_session);
  const std::size_t s2 = cohort.session_index(test_session);
  return make_session_pair(connectome::session_connectomes(cohort, s1, cfg.preprocessing),
                           connectome::session_connectomes(cohort, s2, cfg.preprocessing), cfg.fisher_z);
}

}  // namespace

PipelineOutput run_pipeline(const synth::TimeSeriesSet& cohort, const std::string& train_session,
                            const std::string& test_session, const PipelineConfig& cfg) {
  return run_on_pair(pair_from_cohort(cohort, train_session, test_session, cfg), cfg);
}

std::vector<GridCell> grid_search(const SessionPair& pair, const PipelineConfig& cfg, const std::vector<int>& K_range,
                                  const std::vector<int>& L_range) {
  if (K_range.empty() || L_range.empty()) throw ConfigError("grid ranges must be nonempty", "grid");
  const Residuals residuals = compute_residuals(pair, cfg);
  std::vector<GridCell> cells;
  for (int K : K_range) {
    for (int L : L_range) {
      GridCell cell{K, L, std::nullopt};
      if (L <= K) {
        PipelineConfig cell_cfg = cfg;
        cell_cfg.K = K;
        cell_cfg.L = L;
        cell.accuracy = finish_pipeline(pair, residuals, cell_cfg).result.accuracy;
      }
      cells.push_back(cell);
    }
  }
  return cells;
}

std::vector<GridCell> grid_search(const synth::TimeSeriesSet& cohort, const std::string& train_session,
                                  const std::string& test_session, const PipelineConfig& cfg,
                                  const std::vector<int>& K_range, const std::vector<int>& L_range) {
  return grid_search(pair_from_cohort(cohort, train_session, test_session, cfg), cfg, K_range, L_range);
}

AblationReport ablation(const synth::TimeSeriesSet& cohort, const synth::NetworkPartition& partition,
                        const std::string& train_session, const std::string& test_session,
                        const PipelineConfig& cfg) {
  partition.validate();
  const std::size_t s1 = cohort.session_index(train_session);
  const std::size_t s2 = cohort.session_index(test_session);
  const auto train = connectome::session_connectomes(cohort, s1, cfg.preprocessing);
  const auto test = connectome::session_connectomes(cohort, s2, cfg.preprocessing);
  if (static_cast<Eigen::Index>(partition.n_rois()) != train.front().p()) {
    throw ConfigError("partition covers " + std::to_string(partition.n_rois()) + " ROIs but the cohort has " +
                          std::to_string(train.front().p()),
                      "partition");
  }

  AblationReport report;
  report.baseline_accuracy = run_on_pair(make_session_pair(train, test, cfg.fisher_z), cfg).result.accuracy;

  for (std::size_t g = 0; g < partition.n_networks(); ++g) {
    AblationRow row;
    row.network = g;
    row.name = partition.names[g];
    const std::set<std::size_t> excluded{g};
    if (connectome::retained_rois(partition, excluded).size() < 2) {
      row.warning = "excluding network " + row.name + " leaves fewer than 2 ROIs; skipped";
      report.rows.push_back(row);
      continue;
    }
    std::vector<connectome::Connectome> train_g;
    std::vector<connectome::Connectome> test_g;
    for (const auto& c : train) train_g.push_back(connectome::exclude_networks(c, partition, excluded));
    for (const auto& c : test) test_g.push_back(connectome::exclude_networks(c, partition, excluded));
    row.accuracy = run_on_pair(make_session_pair(train_g, test_g, cfg.fisher_z), cfg).result.accuracy;
    row.delta = *row.accuracy - report.baseline_accuracy;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace fcprint::fingerprint
