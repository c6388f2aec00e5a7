#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fcprint/connectome.hpp"
#include "fcprint/convae.hpp"
#include "fcprint/sparse.hpp"
#include "fcprint/synth.hpp"

namespace fcprint::fingerprint {

// Rows index session-1 subjects, columns session-2 subjects, same order.
struct SimilarityMatrix {
  Eigen::MatrixXd values;

  Eigen::Index n() const { return values.rows(); }
};

struct IdentificationResult {
  std::vector<Eigen::Index> predictions;
  double accuracy = 0.0;
  SimilarityMatrix simmat;

  std::size_t hits() const;
};

struct PermutationReport {
  double observed_accuracy = 0.0;
  std::vector<double> null_accuracies;
  double p_value = 1.0;
};

// Pearson correlation of the strict upper triangles of set1[i] and set2[j].
SimilarityMatrix similarity_matrix(std::span<const Eigen::MatrixXd> set1, std::span<const Eigen::MatrixXd> set2);

// Row-wise argmax with ties to the lowest column.
IdentificationResult identify(const SimilarityMatrix& simmat);
// Session-2 rows against session-1 columns.
IdentificationResult identify_reverse(const SimilarityMatrix& simmat);

// Null: relabel session-2 identities by a uniform random permutation pi; a
// row is a hit when its prediction equals pi(row). Permutation k draws from
// its own substream of `seed`.
PermutationReport permutation_test(const IdentificationResult& result, int n_perm, std::uint64_t seed);
PermutationReport permutation_test(const SimilarityMatrix& simmat, int n_perm, std::uint64_t seed);

enum class Method { finn_raw, baseline_groupavg, convae_sdl };
std::string to_string(Method m);
Method method_from_string(const std::string& name);

enum class RefineTarget { residual, original };
std::string to_string(RefineTarget t);
RefineTarget refine_target_from_string(const std::string& name);

struct AutoencoderSettings {
  // input_size is overwritten by the connectome size at run time.
  convae::Architecture arch;
  convae::TrainConfig train;
};

struct PipelineConfig {
  Method method = Method::convae_sdl;
  int K = 10;
  int L = 3;
  int ksvd_iterations = 30;
  AutoencoderSettings ae;
  RefineTarget refine_target = RefineTarget::residual;
  bool fisher_z = false;
  connectome::Preprocessing preprocessing;
  std::uint64_t seed = 0;
};

// Matrices fed to the method: connectomes, Fisher-z transformed when asked.
struct SessionPair {
  std::vector<Eigen::MatrixXd> train;
  std::vector<Eigen::MatrixXd> test;
  std::vector<std::string> subject_ids;
  std::string train_label;
  std::string test_label;
};

SessionPair make_session_pair(const std::vector<connectome::Connectome>& train,
                              const std::vector<connectome::Connectome>& test, bool fisher_z);

// Residual matrices of both sessions for a method; finn_raw returns the inputs.
struct Residuals {
  std::vector<Eigen::MatrixXd> train;
  std::vector<Eigen::MatrixXd> test;
  std::optional<convae::TrainResult> autoencoder;
};

// A supplied autoencoder (trained on the same train session with the same
// config) is reused instead of retraining.
Residuals compute_residuals(const SessionPair& pair, const PipelineConfig& cfg,
                            const convae::TrainResult* pretrained = nullptr);

struct SessionDictionary {
  sparse::KsvdResult train;
  sparse::KsvdResult test;
};

struct PipelineOutput {
  IdentificationResult result;
  std::optional<convae::TrainResult> autoencoder;
  std::optional<SessionDictionary> dictionaries;
};

// Sparse refinement and identification on precomputed residuals; separated
// out so (K, L) sweeps can share the residual stage.
PipelineOutput finish_pipeline(const SessionPair& pair, const Residuals& residuals, const PipelineConfig& cfg);

PipelineOutput run_on_pair(const SessionPair& pair, const PipelineConfig& cfg,
                           const convae::TrainResult* pretrained = nullptr);

// The autoencoder convae_sdl would train for this train session.
convae::TrainResult train_autoencoder(const std::vector<Eigen::MatrixXd>& train, const PipelineConfig& cfg);

PipelineOutput run_pipeline(const synth::TimeSeriesSet& cohort, const std::string& train_session,
                            const std::string& test_session, const PipelineConfig& cfg);

struct GridCell {
  int K = 0;
  int L = 0;
  std::optional<double> accuracy;  // empty when L > K
};

std::vector<GridCell> grid_search(const synth::TimeSeriesSet& cohort, const std::string& train_session,
                                  const std::string& test_session, const PipelineConfig& cfg,
                                  const std::vector<int>& K_range, const std::vector<int>& L_range);
std::vector<GridCell> grid_search(const SessionPair& pair, const PipelineConfig& cfg,
                                  const std::vector<int>& K_range, const std::vector<int>& L_range);

struct AblationRow {
  std::size_t network = 0;
  std::string name;
  std::optional<double> accuracy;  // empty when the leg was skipped
  std::optional<double> delta;
  std::string warning;
};

struct AblationReport {
  double baseline_accuracy = 0.0;
  std::vector<AblationRow> rows;
};

AblationReport ablation(const synth::TimeSeriesSet& cohort, const synth::NetworkPartition& partition,
                        const std::string& train_session, const std::string& test_session,
                        const PipelineConfig& cfg);

}  // namespace fcprint::fingerprint
