#ifndef ROMD_LINALG_HPP
#define ROMD_LINALG_HPP

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace romd {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical breakdown (non-finite values, solver failure) at a known
/// iteration of an iterative method.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, long iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

/// Relative threshold below which a singular value counts as zero.
inline constexpr double kRankTolerance = 1e-12;

/// Thin SVD, A = U * diag(singulars) * Vt.
struct SvdFactors {
  Matrix U;
  Vector singulars;
  Matrix Vt;

  Matrix reconstruct() const { return U * singulars.asDiagonal() * Vt; }

  Index rank() const {
    if (singulars.size() == 0 || singulars(0) == 0.0) return 0;
    const double cutoff = kRankTolerance * singulars(0);
    Index r = 0;
    while (r < singulars.size() && singulars(r) >= cutoff) ++r;
    return r;
  }
};

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

/// Flips singular-vector pairs so the largest-magnitude entry of each left
/// singular vector is positive (first such entry on ties).
inline void normalize_svd_signs(Matrix& U, Matrix& V) {
  for (Index j = 0; j < U.cols(); ++j) {
    Index arg = 0;
    double best = -1.0;
    for (Index i = 0; i < U.rows(); ++i) {
      const double m = std::abs(U(i, j));
      if (m > best) {
        best = m;
        arg = i;
      }
    }
    if (U(arg, j) < 0.0) {
      U.col(j) = -U.col(j);
      V.col(j) = -V.col(j);
    }
  }
}

/// Thin SVD via one-sided Jacobi rotations. Deterministic; signs follow
/// normalize_svd_signs.
inline SvdFactors svd(const Matrix& a) {
  if (a.rows() < 1 || a.cols() < 1) {
    throw Error("svd: matrix must have at least one row and one column, got " +
                std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  if (!a.allFinite()) throw Error("svd: input has non-finite entries");

  Eigen::JacobiSVD<Matrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("svd: Jacobi sweeps did not converge", 0);
  }
  Matrix U = solver.matrixU();
  Matrix V = solver.matrixV();
  normalize_svd_signs(U, V);
  SvdFactors f{std::move(U), solver.singularValues(), V.transpose()};
  if (!f.U.allFinite() || !f.Vt.allFinite() || !f.singulars.allFinite()) {
    throw NumericalError("svd: non-finite factors", 0);
  }
  return f;
}

struct NormalizedColumns {
  Matrix matrix;
  Vector scales;
};

/// Scales every column to unit l2 norm. scales holds the original norms.
inline NormalizedColumns normalize_columns(const Matrix& a) {
  NormalizedColumns out{a, Vector(a.cols())};
  for (Index j = 0; j < a.cols(); ++j) {
    const double n = a.col(j).norm();
    if (n == 0.0) {
      throw Error("normalize_columns: column " + std::to_string(j) +
                  " is all zero");
    }
    out.scales(j) = n;
    out.matrix.col(j) /= n;
  }
  return out;
}

/// Minimum-norm minimizer of ||A X - B||_F.
inline Matrix lstsq(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw Error("lstsq: row mismatch (" + std::to_string(a.rows()) + " vs " +
                std::to_string(b.rows()) + ")");
  }
  if (a.cols() == 0) return Matrix::Zero(0, b.cols());
  // The rank decision happens inside compute(), so the threshold goes first.
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a.rows(), a.cols());
  cod.setThreshold(kRankTolerance);
  cod.compute(a);
  Matrix x = cod.solve(b);
  if (!x.allFinite()) throw Error("lstsq: non-finite solution");
  return x;
}

/// Frobenius inner product.
inline double frob_dot(const Matrix& a, const Matrix& b) {
  return (a.array() * b.array()).sum();
}

}  // namespace romd

#endif  // ROMD_LINALG_HPP
