#include "fcprint/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "fcprint/connectome.hpp"
#include "fcprint/error.hpp"
#include "fcprint/rng.hpp"

namespace fcprint::sparse {

void Dictionary::validate(double tol) const {
  if (!atoms.allFinite()) throw ArgumentError("dictionary has non-finite entries");
  for (Eigen::Index k = 0; k < atoms.cols(); ++k) {
    if (std::abs(atoms.col(k).norm() - 1.0) > tol) {
      throw ArgumentError("dictionary atom " + std::to_string(k) + " is not unit norm");
    }
  }
}

void SparseCodes::validate() const {
  for (Eigen::Index i = 0; i < codes.cols(); ++i) {
    if ((codes.col(i).array() != 0.0).count() > L) {
      throw ArgumentError("code column " + std::to_string(i) + " exceeds the sparsity bound");
    }
  }
}

void fix_sign(Eigen::VectorXd& v) {
  Eigen::Index idx = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > best) {
      best = std::abs(v(i));
      idx = i;
    }
  }
  if (v.size() > 0 && v(idx) < 0.0) v = -v;
}

OmpResult omp_detail(const Dictionary& dict, const Eigen::VectorXd& y, int L) {
  const Eigen::Index K = dict.K();
  if (y.size() != dict.m()) throw DimensionError("omp: signal length does not match dictionary rows");
  if (L < 1 || L > std::min<Eigen::Index>(K, dict.m())) {
    throw ArgumentError("omp: L=" + std::to_string(L) + " outside [1, min(K, m)]");
  }

  OmpResult result;
  result.code = Eigen::VectorXd::Zero(K);
  result.residual = y;
  std::vector<char> selected(static_cast<std::size_t>(K), 0);
  Eigen::VectorXd coef;

  for (int step = 0; step < L; ++step) {
    if (result.residual.norm() < 1e-12) break;
    const Eigen::VectorXd corr = dict.atoms.transpose() * result.residual;
    Eigen::Index best = -1;
    double best_val = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      if (selected[static_cast<std::size_t>(k)]) continue;
      if (std::abs(corr(k)) > best_val) {
        best_val = std::abs(corr(k));
        best = k;
      }
    }
    if (best < 0) break;
    selected[static_cast<std::size_t>(best)] = 1;
    result.support.push_back(best);

    Eigen::MatrixXd sub(dict.m(), static_cast<Eigen::Index>(result.support.size()));
    for (std::size_t j = 0; j < result.support.size(); ++j) {
      sub.col(static_cast<Eigen::Index>(j)) = dict.atoms.col(result.support[j]);
    }
    coef = sub.completeOrthogonalDecomposition().solve(y);
    result.residual = y - sub * coef;
  }
  for (std::size_t j = 0; j < result.support.size(); ++j) {
    result.code(result.support[j]) = coef(static_cast<Eigen::Index>(j));
  }
  return result;
}

Eigen::VectorXd omp(const Dictionary& dict, const Eigen::VectorXd& y, int L) {
  return omp_detail(dict, y, L).code;
}

SparseCodes encode_all(const Dictionary& dict, const Eigen::MatrixXd& Y, int L, Execution exec) {
  if (Y.rows() != dict.m()) throw DimensionError("encode_all: data rows do not match dictionary rows");
  SparseCodes out;
  out.L = L;
  out.codes = Eigen::MatrixXd::Zero(dict.K(), Y.cols());
  // Validate L up front so worker threads never throw.
  if (L < 1 || L > std::min<Eigen::Index>(dict.K(), dict.m())) {
    throw ArgumentError("encode_all: L=" + std::to_string(L) + " outside [1, min(K, m)]");
  }

  auto encode_range = [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index i = begin; i < end; ++i) {
      out.codes.col(i) = omp(dict, Y.col(i), L);
    }
  };

  const Eigen::Index n = Y.cols();
  const unsigned workers = exec == Execution::parallel ? std::max(2u, std::thread::hardware_concurrency()) : 1u;
  if (workers == 1 || n < 2) {
    encode_range(0, n);
    return out;
  }
  std::vector<std::thread> pool;
  const Eigen::Index chunk = (n + workers - 1) / workers;
  for (Eigen::Index begin = 0; begin < n; begin += chunk) {
    pool.emplace_back(encode_range, begin, std::min(n, begin + chunk));
  }
  for (auto& t : pool) t.join();
  return out;
}

RankOne leading_singular_pair(const Eigen::MatrixXd& E, const Eigen::VectorXd& start, int max_iterations,
                              double tolerance) {
  RankOne r;
  r.u = start;
  double norm = r.u.norm();
  if (!(norm > 0.0)) {
    r.u = Eigen::VectorXd::Ones(E.rows());
    norm = r.u.norm();
  }
  r.u /= norm;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::VectorXd next = E * (E.transpose() * r.u);
    const double len = next.norm();
    r.iterations = it + 1;
    if (!(len > 0.0)) break;
    next /= len;
    const double change = (next - r.u).norm();
    r.u = std::move(next);
    if (change < tolerance) break;
  }
  fix_sign(r.u);
  r.sigma = (E.transpose() * r.u).norm();
  return r;
}

namespace {

double column_error(const Eigen::MatrixXd& Y, const Dictionary& dict, const Eigen::VectorXd& code, Eigen::Index i) {
  return (Y.col(i) - dict.atoms * code).squaredNorm();
}

// Index of the worst-represented column whose direction is not already an
// atom, or -1 when every candidate is zero.
Eigen::Index worst_column(const Eigen::MatrixXd& Y, const Dictionary& dict, const Eigen::MatrixXd& X) {
  const Eigen::VectorXd errors = (Y - dict.atoms * X).colwise().squaredNorm().transpose();
  Eigen::Index best = -1;
  double best_err = -1.0;
  for (Eigen::Index i = 0; i < Y.cols(); ++i) {
    const double len = Y.col(i).norm();
    if (!(len > 0.0)) continue;
    const double overlap = (dict.atoms.transpose() * Y.col(i)).cwiseAbs().maxCoeff() / len;
    if (overlap > 1.0 - 1e-12) continue;
    if (errors(i) > best_err) {
      best_err = errors(i);
      best = i;
    }
  }
  return best;
}

}  // namespace

KsvdResult ksvd(const Eigen::MatrixXd& Y, int K, int L, int iterations, std::uint64_t seed,
                const KsvdOptions& options) {
  if (!Y.allFinite()) throw ArgumentError("ksvd: data contains non-finite values");
  if (Y.rows() < 2) throw ArgumentError("ksvd: signals need at least 2 dimensions");
  if (Y.cols() < 1) throw ArgumentError("ksvd: no signals");
  if (K < 1) throw ArgumentError("ksvd: K must be >= 1");
  if (iterations < 1) throw ArgumentError("ksvd: iterations must be >= 1");
  if (L < 1 || L > std::min<Eigen::Index>(K, Y.rows())) {
    throw ArgumentError("ksvd: L=" + std::to_string(L) + " outside [1, min(K, m)]");
  }

  const Eigen::Index m = Y.rows();
  const Eigen::Index n = Y.cols();
  KsvdResult result;
  if (n < K) {
    result.report.warnings.push_back("ksvd: fewer signals (" + std::to_string(n) + ") than atoms (" +
                                     std::to_string(K) + ")");
  }

  Dictionary& dict = result.dictionary;
  dict.atoms.resize(m, K);
  Rng rng(derive_seed(seed, {stream::kDictionary}));
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::VectorXd atom;
    if (k < n) {
      // Partial Fisher-Yates: position k receives a uniform pick of the rest.
      const std::size_t pick = static_cast<std::size_t>(k) + rng.below(static_cast<std::size_t>(n - k));
      std::swap(pool[static_cast<std::size_t>(k)], pool[pick]);
      atom = Y.col(pool[static_cast<std::size_t>(k)]);
    }
    if (atom.size() == 0 || !(atom.norm() > 0.0)) {
      atom.resize(m);
      for (Eigen::Index r = 0; r < m; ++r) atom(r) = rng.normal();
    }
    atom.normalize();
    fix_sign(atom);
    dict.atoms.col(k) = atom;
  }

  Eigen::MatrixXd& X = result.codes.codes;
  X = Eigen::MatrixXd::Zero(K, n);
  result.codes.L = L;

  for (int iter = 0; iter < iterations; ++iter) {
    // Sparse coding.
    const SparseCodes fresh = encode_all(dict, Y, L);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (iter == 0 || column_error(Y, dict, fresh.codes.col(i), i) <= column_error(Y, dict, X.col(i), i)) {
        X.col(i) = fresh.codes.col(i);
      }
    }

    // Sequential atom sweep.
    int replaced = 0;
    for (Eigen::Index k = 0; k < K; ++k) {
      std::vector<Eigen::Index> omega;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (X(k, i) != 0.0) omega.push_back(i);
      }
      if (omega.empty()) {
        const Eigen::Index worst = worst_column(Y, dict, X);
        if (worst >= 0) {
          Eigen::VectorXd atom = Y.col(worst).normalized();
          fix_sign(atom);
          dict.atoms.col(k) = atom;
          ++replaced;
        }
        continue;
      }
      const auto w = static_cast<Eigen::Index>(omega.size());
      Eigen::MatrixXd E(m, w);
      Eigen::MatrixXd Xw(K, w);
      for (Eigen::Index j = 0; j < w; ++j) {
        E.col(j) = Y.col(omega[std::size_t(j)]);
        Xw.col(j) = X.col(omega[std::size_t(j)]);
      }
      E.noalias() -= dict.atoms * Xw;
      E.noalias() += dict.atoms.col(k) * Xw.row(k);

      const RankOne r1 = leading_singular_pair(E, dict.atoms.col(k), options.power_max_iterations,
                                               options.power_tolerance);
      dict.atoms.col(k) = r1.u;
      const Eigen::RowVectorXd coeffs = r1.u.transpose() * E;
      for (Eigen::Index j = 0; j < w; ++j) X(k, omega[std::size_t(j)]) = coeffs(j);
    }

    result.report.objective_history.push_back((Y - dict.atoms * X).squaredNorm());
    result.report.replaced_atoms.push_back(replaced);
    result.report.iterations_run = iter + 1;
  }
  return result;
}

Eigen::MatrixXd refine(const Eigen::MatrixXd& residual, const Dictionary& dict, const Eigen::VectorXd& code) {
  if (residual.rows() != residual.cols()) throw DimensionError("refine: residual must be square");
  const Eigen::Index p = residual.rows();
  if (dict.m() != connectome::edge_count(p)) {
    throw DimensionError("refine: dictionary rows " + std::to_string(dict.m()) + " != p(p-1)/2 for p=" +
                         std::to_string(p));
  }
  if (code.size() != dict.K()) throw DimensionError("refine: code length does not match atom count");
  connectome::EdgeVector approx;
  approx.p = p;
  approx.values = dict.atoms * code;
  return residual - connectome::mat(approx);
}

}  // namespace fcprint::sparse
