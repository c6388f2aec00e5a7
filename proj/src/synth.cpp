#include "fcprint/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "fcprint/error.hpp"
#include "fcprint/rng.hpp"

namespace fcprint::synth {

namespace {

// The twelve functional networks used for the default partition labels when
// exactly twelve networks are requested.
const std::vector<std::string> kNetworkNames = {
    "somatomotor",    "cingulo_opercular", "orbito_affective", "visual1",
    "auditory",       "dorsal_attention",  "ventral_multimodal", "default",
    "language",       "frontoparietal",    "posterior_multimodal", "visual2"};

Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Eigen::MatrixXd m(rows, cols);
  // Row-major draw order so the stream layout does not depend on storage order.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  }
  return m;
}

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace

void CohortConfig::validate() const {
  if (n_subjects < 2) throw ConfigError("n_subjects must be >= 2", "n_subjects");
  if (p_rois < 4) throw ConfigError("p_rois must be >= 4", "p_rois");
  if (n_timepoints < p_rois) throw ConfigError("n_timepoints must be >= p_rois", "n_timepoints");
  if (sessions.empty()) throw ConfigError("at least one session label is required", "sessions");
  std::set<std::string> unique(sessions.begin(), sessions.end());
  if (unique.size() != sessions.size()) throw ConfigError("session labels must be unique", "sessions");
  if (!finite_nonneg(subject_strength)) throw ConfigError("subject_strength must be finite and >= 0", "subject_strength");
  if (!finite_nonneg(group_strength)) throw ConfigError("group_strength must be finite and >= 0", "group_strength");
  if (!finite_nonneg(task_strength)) throw ConfigError("task_strength must be finite and >= 0", "task_strength");
  if (!finite_nonneg(noise_std)) throw ConfigError("noise_std must be finite and >= 0", "noise_std");
  if (rank_subject < 1) throw ConfigError("rank_subject must be >= 1", "rank_subject");
  if (rank_group < 1) throw ConfigError("rank_group must be >= 1", "rank_group");
  if (rank_task < 1) throw ConfigError("rank_task must be >= 1", "rank_task");
  if (!subject_networks.empty()) {
    if (n_networks < 1 || n_networks > p_rois) throw ConfigError("n_networks must be in [1, p_rois]", "n_networks");
    for (std::size_t g : subject_networks) {
      if (g >= n_networks) throw ConfigError("subject_networks entry out of range", "subject_networks");
    }
  }
}

std::size_t TimeSeriesSet::session_index(const std::string& label) const {
  auto it = std::find(session_labels.begin(), session_labels.end(), label);
  if (it == session_labels.end()) throw ConfigError("unknown session '" + label + "'", "session");
  return static_cast<std::size_t>(it - session_labels.begin());
}

void TimeSeriesSet::validate() const {
  if (subject_ids.empty() || session_labels.empty()) throw ArgumentError("time-series set is empty");
  if (data.size() != subject_ids.size()) throw ArgumentError("time-series set is missing subjects");
  const Eigen::Index rows = data.front().empty() ? 0 : data.front().front().rows();
  const Eigen::Index cols = data.front().empty() ? 0 : data.front().front().cols();
  for (const auto& per_subject : data) {
    if (per_subject.size() != session_labels.size()) throw ArgumentError("time-series set is missing sessions");
    for (const auto& m : per_subject) {
      if (m.rows() != rows || m.cols() != cols) throw DimensionError("time-series matrices differ in shape");
      if (!m.allFinite()) throw ArgumentError("time-series set contains non-finite samples");
    }
  }
}

std::vector<std::size_t> NetworkPartition::members(std::size_t network) const {
  std::vector<std::size_t> rois;
  for (std::size_t r = 0; r < assignment.size(); ++r) {
    if (assignment[r] == network) rois.push_back(r);
  }
  return rois;
}

void NetworkPartition::validate() const {
  std::vector<std::size_t> counts(names.size(), 0);
  for (std::size_t a : assignment) {
    if (a >= names.size()) throw ConfigError("partition assigns an ROI to an unknown network", "partition");
    ++counts[a];
  }
  for (std::size_t c : counts) {
    if (c == 0) throw ConfigError("partition contains an empty network", "partition");
  }
}

std::string subject_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub%03zu", index);
  return buf;
}

NetworkPartition default_partition(std::size_t p_rois, std::size_t n_networks) {
  if (n_networks == 0) throw ConfigError("n_networks must be >= 1", "n_networks");
  if (n_networks > p_rois) throw ConfigError("n_networks exceeds p_rois", "n_networks");
  NetworkPartition part;
  part.assignment.reserve(p_rois);
  const std::size_t base = p_rois / n_networks;
  const std::size_t extra = p_rois % n_networks;
  for (std::size_t g = 0; g < n_networks; ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    part.assignment.insert(part.assignment.end(), size, g);
    part.names.push_back(n_networks == kNetworkNames.size() ? kNetworkNames[g]
                                                            : "net" + std::to_string(g));
  }
  return part;
}

TimeSeriesSet generate_cohort(const CohortConfig& config) {
  config.validate();
  const auto p = static_cast<Eigen::Index>(config.p_rois);
  const auto t = static_cast<Eigen::Index>(config.n_timepoints);
  const auto rs = static_cast<Eigen::Index>(config.rank_subject);
  const auto rt = static_cast<Eigen::Index>(config.rank_task);
  const auto rg = static_cast<Eigen::Index>(config.rank_group);

  Eigen::VectorXd subject_mask = Eigen::VectorXd::Ones(p);
  if (!config.subject_networks.empty()) {
    subject_mask.setZero();
    const NetworkPartition part = default_partition(config.p_rois, config.n_networks);
    for (std::size_t g : config.subject_networks) {
      for (std::size_t r : part.members(g)) subject_mask(static_cast<Eigen::Index>(r)) = 1.0;
    }
  }

  Rng group_rng(derive_seed(config.seed, {stream::kGroupLoading}));
  const Eigen::MatrixXd group_loading = gaussian_matrix(group_rng, p, rg, 1.0 / std::sqrt(double(rg)));

  std::vector<Eigen::MatrixXd> session_loadings;
  for (std::size_t s = 0; s < config.sessions.size(); ++s) {
    Rng rng(derive_seed(config.seed, {stream::kSessionLoading, s}));
    session_loadings.push_back(gaussian_matrix(rng, p, rt, 1.0 / std::sqrt(double(rt))));
  }

  TimeSeriesSet set;
  set.session_labels = config.sessions;
  set.data.resize(config.n_subjects);
  for (std::size_t i = 0; i < config.n_subjects; ++i) {
    set.subject_ids.push_back(subject_id(i));
    Rng loading_rng(derive_seed(config.seed, {stream::kSubjectLoading, i}));
    const Eigen::MatrixXd subject_loading =
        subject_mask.asDiagonal() * gaussian_matrix(loading_rng, p, rs, 1.0 / std::sqrt(double(rs)));

    for (std::size_t s = 0; s < config.sessions.size(); ++s) {
      Rng rng(derive_seed(config.seed, {stream::kSeries, i, s}));
      const Eigen::MatrixXd u = gaussian_matrix(rng, rs, t, 1.0);
      const Eigen::MatrixXd v = gaussian_matrix(rng, rt, t, 1.0);
      const Eigen::MatrixXd w = gaussian_matrix(rng, rg, t, 1.0);
      const Eigen::MatrixXd noise = gaussian_matrix(rng, p, t, 1.0);
      Eigen::MatrixXd series = config.subject_strength * (subject_loading * u) +
                               config.task_strength * (session_loadings[s] * v) +
                               config.group_strength * (group_loading * w) +
                               config.noise_std * noise;
      set.data[i].push_back(std::move(series));
    }
  }
  return set;
}

}  // namespace fcprint::synth
