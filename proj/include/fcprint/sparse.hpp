#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fcprint::sparse {

// m x K matrix whose columns (atoms) have unit Euclidean norm.
struct Dictionary {
  Eigen::MatrixXd atoms;

  Eigen::Index m() const { return atoms.rows(); }
  Eigen::Index K() const { return atoms.cols(); }
  // Throws ArgumentError unless every atom is finite and unit norm within tol.
  void validate(double tol = 1e-10) const;
};

// K x n codes with at most L nonzeros per column.
struct SparseCodes {
  Eigen::MatrixXd codes;
  int L = 0;

  void validate() const;
};

struct KsvdReport {
  std::vector<double> objective_history;  // ||Y - DX||_F^2 after each iteration
  std::vector<int> replaced_atoms;
  int iterations_run = 0;
  std::vector<std::string> warnings;
};

struct OmpResult {
  Eigen::VectorXd code;
  std::vector<Eigen::Index> support;  // in selection order
  Eigen::VectorXd residual;
};

// Orthogonal matching pursuit: pick the atom most correlated with the
// residual (lowest index on ties), re-solve least squares over the support
// (minimum-norm when rank deficient), stop after L atoms or once the residual
// norm drops below 1e-12.
OmpResult omp_detail(const Dictionary& dict, const Eigen::VectorXd& y, int L);
Eigen::VectorXd omp(const Dictionary& dict, const Eigen::VectorXd& y, int L);

enum class Execution { sequential, parallel };

SparseCodes encode_all(const Dictionary& dict, const Eigen::MatrixXd& Y, int L,
                       Execution exec = Execution::sequential);

struct KsvdOptions {
  int power_max_iterations = 1000;
  double power_tolerance = 1e-10;
};

struct KsvdResult {
  Dictionary dictionary;
  SparseCodes codes;
  KsvdReport report;
};

// K-SVD over the columns of Y. Initial atoms are K distinct data columns drawn
// without replacement from the seeded stream. Each iteration codes every
// column with OMP (a column keeps its previous code if OMP does worse), then
// sweeps the atoms in order, replacing each used atom and its coefficients by
// the leading singular pair of its restricted error matrix, and replacing
// unused atoms by the worst-represented data column.
KsvdResult ksvd(const Eigen::MatrixXd& Y, int K, int L, int iterations, std::uint64_t seed,
                const KsvdOptions& options = {});

// Leading left singular vector and value of E by power iteration on E E^T,
// started from `start`. Sign: largest-magnitude entry positive.
struct RankOne {
  Eigen::VectorXd u;
  double sigma = 0.0;
  int iterations = 0;
};
RankOne leading_singular_pair(const Eigen::MatrixXd& E, const Eigen::VectorXd& start, int max_iterations,
                              double tolerance);

// Flip v so that its largest-magnitude entry (lowest index on ties) is positive.
void fix_sign(Eigen::VectorXd& v);

// residual - mat(D x), with p inferred from the residual.
Eigen::MatrixXd refine(const Eigen::MatrixXd& residual, const Dictionary& dict, const Eigen::VectorXd& code);

}  // namespace fcprint::sparse
