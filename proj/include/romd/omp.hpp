#ifndef ROMD_OMP_HPP
#define ROMD_OMP_HPP

#include "romd/linalg.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace romd {

struct OmpConfig {
  Index sparsity = 1;  ///< S, maximum atoms per column
  double residual_tol = 1e-9;  ///< stop once ||r|| <= residual_tol * ||y||
};

struct OmpResult {
  Matrix X;
  std::vector<Index> flagged_columns;  ///< columns where a dependent atom was dropped
};

namespace detail {

struct ColumnCode {
  std::vector<Index> support;
  Vector values;
  bool flagged = false;
};

// Greedy selection with a least-squares refit after every pick. Ties go to
// the lowest atom index.
inline ColumnCode omp_column(const Eigen::Ref<const Vector>& y, const Matrix& D,
                             const OmpConfig& cfg) {
  ColumnCode out;
  const double y_norm = y.norm();
  if (y_norm == 0.0) return out;

  const Index K = D.cols();
  std::vector<char> excluded(static_cast<std::size_t>(K), 0);
  Vector residual = y;
  Matrix sub(D.rows(), 0);

  while (static_cast<Index>(out.support.size()) < cfg.sparsity) {
    if (residual.norm() <= cfg.residual_tol * y_norm) break;
    const Vector corr = D.transpose() * residual;
    Index best = -1;
    double best_val = -1.0;
    for (Index k = 0; k < K; ++k) {
      if (excluded[static_cast<std::size_t>(k)]) continue;
      const double c = std::abs(corr(k));
      if (c > best_val) {
        best_val = c;
        best = k;
      }
    }
    if (best < 0 || best_val == 0.0) break;
    excluded[static_cast<std::size_t>(best)] = 1;

    Matrix trial(D.rows(), sub.cols() + 1);
    trial << sub, D.col(best);
    Eigen::ColPivHouseholderQR<Matrix> qr(trial);
    qr.setThreshold(1e-10);
    if (qr.rank() < trial.cols()) {
      out.flagged = true;
      continue;
    }
    sub = std::move(trial);
    out.support.push_back(best);
    out.values = qr.solve(y);
    residual = y - sub * out.values;
  }
  return out;
}

}  // namespace detail

/// Orthogonal matching pursuit, column by column. D should have unit columns.
inline OmpResult omp_encode_report(const Matrix& Y, const Matrix& D, const OmpConfig& cfg) {
  if (Y.rows() != D.rows()) {
    throw Error("omp_encode: Y has " + std::to_string(Y.rows()) + " rows, D has " +
                std::to_string(D.rows()));
  }
  if (cfg.sparsity < 1 || cfg.sparsity > D.rows()) {
    throw Error("omp_encode: sparsity must be in [1, M], got " + std::to_string(cfg.sparsity));
  }
  OmpResult out{Matrix::Zero(D.cols(), Y.cols()), {}};
  for (Index n = 0; n < Y.cols(); ++n) {
    const detail::ColumnCode code = detail::omp_column(Y.col(n), D, cfg);
    for (std::size_t j = 0; j < code.support.size(); ++j)
      out.X(code.support[j], n) = code.values(static_cast<Index>(j));
    if (code.flagged) out.flagged_columns.push_back(n);
  }
  return out;
}

inline Matrix omp_encode(const Matrix& Y, const Matrix& D, const OmpConfig& cfg) {
  return omp_encode_report(Y, D, cfg).X;
}

}  // namespace romd

#endif  // ROMD_OMP_HPP
