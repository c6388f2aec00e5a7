#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fcprint/synth.hpp"

namespace fcprint::connectome {

// p x p Pearson correlation matrix for one subject and session. Symmetric,
// unit diagonal, entries in [-1, 1].
struct Connectome {
  Eigen::MatrixXd matrix;
  std::string subject_id;
  std::string session_label;

  Eigen::Index p() const { return matrix.rows(); }
  void validate() const;
};

// Strict upper triangle in row-major order: (0,1), (0,2), ..., (0,p-1), (1,2), ...
struct EdgeVector {
  Eigen::VectorXd values;
  Eigen::Index p = 0;
};

constexpr Eigen::Index edge_count(Eigen::Index p) { return p * (p - 1) / 2; }
// Position of edge (row, col), row < col, in the vectorized layout.
constexpr Eigen::Index edge_index(Eigen::Index p, Eigen::Index row, Eigen::Index col) {
  return row * p - row * (row + 1) / 2 + (col - row - 1);
}
// Inverse of edge_count; throws DimensionError when m is not triangular.
Eigen::Index dimension_for_edges(Eigen::Index m);

Eigen::MatrixXd detrend(const Eigen::MatrixXd& series);
Eigen::MatrixXd bandpass(const Eigen::MatrixXd& series, double low_hz, double high_hz, double sample_rate_hz);
Connectome pearson_fc(const Eigen::MatrixXd& series, std::string subject_id = {}, std::string session_label = {});

EdgeVector vectorize_upper(const Eigen::MatrixXd& matrix);
inline EdgeVector vectorize_upper(const Connectome& c) { return vectorize_upper(c.matrix); }
// Symmetric p x p matrix with zero diagonal.
Eigen::MatrixXd mat(const EdgeVector& edges);

Connectome group_average(std::span<const Connectome> connectomes);

Connectome exclude_networks(const Connectome& c, const synth::NetworkPartition& part,
                            const std::set<std::size_t>& excluded);
// ROIs that survive the exclusion, ascending.
std::vector<std::size_t> retained_rois(const synth::NetworkPartition& part,
                                       const std::set<std::size_t>& excluded);

// Off-diagonal arctanh; the diagonal is set to zero since arctanh(1) diverges.
Eigen::MatrixXd fisher_z(const Eigen::MatrixXd& matrix);

struct Preprocessing {
  bool detrend = true;
  bool bandpass = false;
  double low_hz = 0.01;
  double high_hz = 0.25;
  double sample_rate_hz = 1.0;
};

// Connectomes of every subject for one session, in subject order.
std::vector<Connectome> session_connectomes(const synth::TimeSeriesSet& set, std::size_t session,
                                            const Preprocessing& prep);

}  // namespace fcprint::connectome
