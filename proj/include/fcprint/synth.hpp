#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fcprint::synth {

// Parameters of the additive latent-factor cohort model. For subject i and
// session s the ROI series is
//
//   X(i,s) = subject_strength * A_i u + task_strength * B_s v
//          + group_strength * G w + noise_std * e
//
// with A_i fixed per subject across sessions, B_s shared by all subjects in a
// session, G shared by everyone, and u, v, w, e fresh white processes for
// every (i, s). Loading entries are N(0, 1/rank), so each term contributes
// strength^2 to the expected per-ROI variance.
struct CohortConfig {
  std::size_t n_subjects = 30;
  std::size_t p_rois = 32;
  std::size_t n_timepoints = 300;
  std::vector<std::string> sessions{"rest", "motor", "wm", "emotion"};
  double subject_strength = 1.0;
  double group_strength = 2.0;
  double task_strength = 3.0;
  double noise_std = 1.0;
  std::size_t rank_subject = 4;
  std::size_t rank_group = 4;
  std::size_t rank_task = 4;
  std::uint64_t seed = 0;
  // When non-empty, subject loadings are zero outside the ROIs of these
  // networks of default_partition(p_rois, n_networks).
  std::vector<std::size_t> subject_networks;
  std::size_t n_networks = 12;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
};

struct TimeSeriesSet {
  std::vector<std::string> subject_ids;
  std::vector<std::string> session_labels;
  // data[subject][session], each p_rois x n_timepoints.
  std::vector<std::vector<Eigen::MatrixXd>> data;

  std::size_t n_subjects() const { return subject_ids.size(); }
  std::size_t n_sessions() const { return session_labels.size(); }
  const Eigen::MatrixXd& at(std::size_t subject, std::size_t session) const {
    return data.at(subject).at(session);
  }
  // Index of a session label; throws ConfigError when absent.
  std::size_t session_index(const std::string& label) const;
  // Checks presence, uniform shape and finiteness of every entry.
  void validate() const;
};

struct NetworkPartition {
  std::vector<std::size_t> assignment;
  std::vector<std::string> names;

  std::size_t n_networks() const { return names.size(); }
  std::size_t n_rois() const { return assignment.size(); }
  std::vector<std::size_t> members(std::size_t network) const;
  void validate() const;
};

TimeSeriesSet generate_cohort(const CohortConfig& config);

// Contiguous near-equal blocks; the first (p mod n) networks get one extra ROI.
NetworkPartition default_partition(std::size_t p_rois, std::size_t n_networks);

std::string subject_id(std::size_t index);

}  // namespace fcprint::synth
