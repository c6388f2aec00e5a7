#include "fcprint/connectome.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

#include <fftw3.h>

#include "fcprint/error.hpp"

namespace fcprint::connectome {

namespace {

// FFTW's planner is not re-entrant.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void Connectome::validate() const {
  if (matrix.rows() != matrix.cols()) throw DimensionError("connectome must be square");
  if (!matrix.allFinite()) throw ArgumentError("connectome has non-finite entries");
  const Eigen::Index p = matrix.rows();
  for (Eigen::Index i = 0; i < p; ++i) {
    if (matrix(i, i) != 1.0) throw ArgumentError("connectome diagonal must be exactly 1");
    for (Eigen::Index j = i + 1; j < p; ++j) {
      if (std::abs(matrix(i, j) - matrix(j, i)) > 1e-12) throw ArgumentError("connectome is not symmetric");
      if (std::abs(matrix(i, j)) > 1.0) throw ArgumentError("connectome entry outside [-1, 1]");
    }
  }
}

Eigen::Index dimension_for_edges(Eigen::Index m) {
  const auto p = static_cast<Eigen::Index>(std::llround((1.0 + std::sqrt(1.0 + 8.0 * double(m))) / 2.0));
  if (m < 1 || edge_count(p) != m) {
    throw DimensionError("edge vector length " + std::to_string(m) + " is not p(p-1)/2 for any p");
  }
  return p;
}

Eigen::MatrixXd detrend(const Eigen::MatrixXd& series) {
  const Eigen::Index t = series.cols();
  if (t < 2) throw DimensionError("detrend needs at least 2 time points");
  // Centered time index makes the intercept and slope decouple.
  const double t_mean = 0.5 * double(t - 1);
  Eigen::RowVectorXd centered_time(t);
  for (Eigen::Index k = 0; k < t; ++k) centered_time(k) = double(k) - t_mean;
  const double sxx = centered_time.squaredNorm();

  Eigen::MatrixXd out(series.rows(), t);
  for (Eigen::Index r = 0; r < series.rows(); ++r) {
    const double mean = series.row(r).mean();
    const double slope = series.row(r).dot(centered_time) / sxx;
    out.row(r) = series.row(r).array() - mean - slope * centered_time.array();
  }
  return out;
}

Eigen::MatrixXd bandpass(const Eigen::MatrixXd& series, double low_hz, double high_hz, double sample_rate_hz) {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw ConfigError("sample_rate_hz must be positive", "sample_rate_hz");
  }
  if (!(low_hz >= 0.0) || !(low_hz < high_hz) || !(high_hz <= sample_rate_hz / 2.0)) {
    throw ConfigError("band must satisfy 0 <= low_hz < high_hz <= sample_rate_hz/2", "bandpass");
  }
  const int t = static_cast<int>(series.cols());
  Eigen::MatrixXd out(series.rows(), series.cols());
  if (t == 0) return out;
  const int bins = t / 2 + 1;

  std::vector<double> buffer(static_cast<std::size_t>(t));
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(bins));
  auto* spec_ptr = reinterpret_cast<fftw_complex*>(spectrum.data());
  fftw_plan forward;
  fftw_plan inverse;
  {
    std::lock_guard lock(fftw_planner_mutex());
    forward = fftw_plan_dft_r2c_1d(t, buffer.data(), spec_ptr, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(t, spec_ptr, buffer.data(), FFTW_ESTIMATE);
  }

  std::vector<char> keep(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) {
    const double freq = double(k) * sample_rate_hz / double(t);
    keep[static_cast<std::size_t>(k)] = (freq >= low_hz && freq <= high_hz) ? 1 : 0;
  }

  for (Eigen::Index r = 0; r < series.rows(); ++r) {
    for (int k = 0; k < t; ++k) buffer[static_cast<std::size_t>(k)] = series(r, k);
    fftw_execute(forward);
    for (int k = 0; k < bins; ++k) {
      if (!keep[static_cast<std::size_t>(k)]) spectrum[static_cast<std::size_t>(k)] = 0.0;
    }
    // c2r reconstructs the Hermitian-symmetric spectrum, i.e. the real part of
    // the masked inverse transform.
    fftw_execute(inverse);
    for (int k = 0; k < t; ++k) out(r, k) = buffer[static_cast<std::size_t>(k)] / double(t);
  }

  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
  }
  return out;
}

Connectome pearson_fc(const Eigen::MatrixXd& series, std::string subject_id, std::string session_label) {
  const Eigen::Index p = series.rows();
  const Eigen::Index t = series.cols();
  if (t < 3) throw DimensionError("pearson_fc needs at least 3 time points");
  if (!series.allFinite()) throw ArgumentError("time series contains non-finite samples");

  Eigen::MatrixXd centered = series.colwise() - series.rowwise().mean();
  Eigen::VectorXd norms = centered.rowwise().norm();
  for (Eigen::Index r = 0; r < p; ++r) {
    const double scale = series.row(r).cwiseAbs().maxCoeff();
    if (!(norms(r) > 1e-13 * std::max(scale, 1e-300) * std::sqrt(double(t)))) {
      throw DegenerateInputError("ROI " + std::to_string(r) + " has zero variance");
    }
    centered.row(r) /= norms(r);
  }

  Connectome c;
  c.matrix = centered * centered.transpose();
  for (Eigen::Index i = 0; i < p; ++i) {
    c.matrix(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < p; ++j) {
      const double v = std::clamp(0.5 * (c.matrix(i, j) + c.matrix(j, i)), -1.0, 1.0);
      c.matrix(i, j) = v;
      c.matrix(j, i) = v;
    }
  }
  c.subject_id = std::move(subject_id);
  c.session_label = std::move(session_label);
  return c;
}

EdgeVector vectorize_upper(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols()) throw DimensionError("vectorize_upper needs a square matrix");
  const Eigen::Index p = matrix.rows();
  EdgeVector e;
  e.p = p;
  e.values.resize(edge_count(p));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i + 1; j < p; ++j) e.values(k++) = matrix(i, j);
  }
  return e;
}

Eigen::MatrixXd mat(const EdgeVector& edges) {
  const Eigen::Index p = edges.p;
  if (p < 0 || edges.values.size() != edge_count(p)) {
    throw DimensionError("edge vector length " + std::to_string(edges.values.size()) +
                         " does not match p=" + std::to_string(p));
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i + 1; j < p; ++j) {
      m(i, j) = edges.values(k);
      m(j, i) = edges.values(k);
      ++k;
    }
  }
  return m;
}

Connectome group_average(std::span<const Connectome> connectomes) {
  if (connectomes.empty()) throw ArgumentError("group_average of an empty list");
  const Eigen::Index p = connectomes.front().p();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(p, p);
  for (const auto& c : connectomes) {
    if (c.p() != p || c.matrix.cols() != p) throw DimensionError("group_average: connectomes differ in size");
    sum += c.matrix;
  }
  Connectome avg;
  avg.matrix = sum / double(connectomes.size());
  avg.matrix.diagonal().setOnes();
  avg.subject_id = "group";
  avg.session_label = connectomes.front().session_label;
  return avg;
}

std::vector<std::size_t> retained_rois(const synth::NetworkPartition& part, const std::set<std::size_t>& excluded) {
  for (std::size_t g : excluded) {
    if (g >= part.n_networks()) throw ConfigError("excluded network " + std::to_string(g) + " does not exist", "exclude");
  }
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < part.n_rois(); ++r) {
    if (!excluded.contains(part.assignment[r])) keep.push_back(r);
  }
  return keep;
}

Connectome exclude_networks(const Connectome& c, const synth::NetworkPartition& part,
                            const std::set<std::size_t>& excluded) {
  if (static_cast<Eigen::Index>(part.n_rois()) != c.p()) {
    throw DimensionError("partition covers " + std::to_string(part.n_rois()) + " ROIs, connectome has " +
                         std::to_string(c.p()));
  }
  const std::vector<std::size_t> keep = retained_rois(part, excluded);
  if (keep.size() < 2) throw DegenerateInputError("network exclusion leaves fewer than 2 ROIs");
  const auto q = static_cast<Eigen::Index>(keep.size());
  Connectome out;
  out.matrix.resize(q, q);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      out.matrix(i, j) = c.matrix(static_cast<Eigen::Index>(keep[std::size_t(i)]),
                                  static_cast<Eigen::Index>(keep[std::size_t(j)]));
    }
  }
  out.subject_id = c.subject_id;
  out.session_label = c.session_label;
  return out;
}

Eigen::MatrixXd fisher_z(const Eigen::MatrixXd& matrix) {
  static constexpr double kLimit = 1.0 - 1e-15;
  Eigen::MatrixXd z = matrix.unaryExpr([](double r) { return std::atanh(std::clamp(r, -kLimit, kLimit)); });
  z.diagonal().setZero();
  return z;
}

std::vector<Connectome> session_connectomes(const synth::TimeSeriesSet& set, std::size_t session,
                                            const Preprocessing& prep) {
  std::vector<Connectome> out;
  out.reserve(set.n_subjects());
  for (std::size_t i = 0; i < set.n_subjects(); ++i) {
    Eigen::MatrixXd series = set.at(i, session);
    if (prep.detrend) series = detrend(series);
    if (prep.bandpass) series = bandpass(series, prep.low_hz, prep.high_hz, prep.sample_rate_hz);
    out.push_back(pearson_fc(series, set.subject_ids[i], set.session_labels[session]));
  }
  return out;
}

}  // namespace fcprint::connectome
