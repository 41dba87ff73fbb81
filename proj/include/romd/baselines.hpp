#ifndef ROMD_BASELINES_HPP
#define ROMD_BASELINES_HPP

#include "romd/linalg.hpp"
#include "romd/rng.hpp"
#include "romd/support.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace romd {

enum class BaselineKind { MOD, KSVD };

inline std::string_view to_string(BaselineKind k) { return k == BaselineKind::MOD ? "MOD" : "KSVD"; }

struct ModResult {
  Matrix D;  ///< unit columns
  Matrix X;  ///< rows rescaled so D * X is unchanged by normalization
  std::vector<Index> reinitialized_atoms;
};

/// MOD: D = argmin ||Y - D X||_F (minimum-norm), then unit columns. Atoms
/// whose coefficient row is all zero are redrawn as random unit vectors.
inline ModResult mod_update(const Matrix& Y, const Matrix& X, std::uint64_t seed = 0) {
  if (Y.cols() != X.cols()) {
    throw Error("mod_update: Y has " + std::to_string(Y.cols()) + " columns, X has " +
                std::to_string(X.cols()));
  }
  ModResult out{lstsq(X.transpose(), Y.transpose()).transpose(), X, {}};
  CounterRng rng(seed);
  for (Index k = 0; k < out.D.cols(); ++k) {
    const double n = out.D.col(k).norm();
    if (X.row(k).isZero(0.0) || n == 0.0) {
      CounterRng atom_rng = rng.split(static_cast<std::uint64_t>(k));
      Vector v(out.D.rows());
      do {
        for (Index i = 0; i < v.size(); ++i) v(i) = atom_rng.normal();
      } while (v.norm() == 0.0);
      out.D.col(k) = v.normalized();
      out.X.row(k).setZero();
      out.reinitialized_atoms.push_back(k);
      continue;
    }
    out.D.col(k) /= n;
    out.X.row(k) *= n;
  }
  return out;
}

/// One K-SVD atom step on the running residual E = Y - D X.
///
/// For a non-empty support the atom and its coefficients on that support
/// become the leading singular pair of the restricted residual. An empty
/// support replaces the atom by the worst-represented column of E that is not
/// in used_columns; the coefficient row stays zero. Returns true when an atom
/// was replaced.
inline bool ksvd_update_atom(Index k, const SupportPattern& pattern, Matrix& D, Matrix& X,
                             Matrix& E, std::vector<char>& used_columns) {
  const auto& idx = pattern.row(k);
  if (idx.empty()) {
    Index worst = -1;
    double worst_norm = 0.0;
    for (Index n = 0; n < E.cols(); ++n) {
      if (used_columns[static_cast<std::size_t>(n)]) continue;
      const double c = E.col(n).squaredNorm();
      if (c > worst_norm) {
        worst_norm = c;
        worst = n;
      }
    }
    if (worst < 0) return false;
    used_columns[static_cast<std::size_t>(worst)] = 1;
    D.col(k) = E.col(worst).normalized();
    X.row(k).setZero();
    return true;
  }

  Matrix restricted(E.rows(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    restricted.col(static_cast<Index>(j)) = E.col(idx[j]) + D.col(k) * X(k, idx[j]);

  const SvdFactors f = svd(restricted);
  if (f.singulars(0) > 0.0) {
    D.col(k) = f.U.col(0);
  }
  // Coefficients off the support stay zero.
  X.row(k).setZero();
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const double x = f.singulars(0) * f.Vt(0, static_cast<Index>(j));
    X(k, idx[j]) = x;
    E.col(idx[j]) = restricted.col(static_cast<Index>(j)) - D.col(k) * x;
  }
  return false;
}

struct KsvdResult {
  Matrix D;
  Matrix X;
  std::vector<Index> replaced_atoms;
};

/// K-SVD dictionary update on a fixed support, atoms in ascending order.
inline KsvdResult ksvd_update(const Matrix& Y, const Matrix& D, const Matrix& X,
                              const SupportPattern& pattern) {
  if (D.rows() != Y.rows() || D.cols() != X.rows() || X.cols() != Y.cols() ||
      pattern.num_atoms() != D.cols() || pattern.num_samples() != Y.cols()) {
    throw Error("ksvd_update: dimension mismatch");
  }
  KsvdResult out{D, X, {}};
  Matrix E = Y - out.D * out.X;
  std::vector<char> used(static_cast<std::size_t>(Y.cols()), 0);
  for (Index k = 0; k < D.cols(); ++k) {
    if (ksvd_update_atom(k, pattern, out.D, out.X, E, used)) out.replaced_atoms.push_back(k);
  }
  return out;
}

/// K-SVD over the nonzero pattern of X.
inline KsvdResult ksvd_update(const Matrix& Y, const Matrix& D, const Matrix& X) {
  return ksvd_update(Y, D, X, supports_from_coeffs(X));
}

/// Least-squares coefficients of each column of Y on a fixed support.
inline Matrix refit_on_support(const Matrix& Y, const Matrix& D, const SupportPattern& pattern) {
  if (D.cols() != pattern.num_atoms() || Y.cols() != pattern.num_samples() || D.rows() != Y.rows()) {
    throw Error("refit_on_support: dimension mismatch");
  }
  std::vector<std::vector<Index>> by_column(static_cast<std::size_t>(Y.cols()));
  for (Index k = 0; k < pattern.num_atoms(); ++k)
    for (Index n : pattern.row(k)) by_column[static_cast<std::size_t>(n)].push_back(k);

  Matrix X = Matrix::Zero(D.cols(), Y.cols());
  for (Index n = 0; n < Y.cols(); ++n) {
    const auto& atoms = by_column[static_cast<std::size_t>(n)];
    if (atoms.empty()) continue;
    Matrix sub(D.rows(), static_cast<Index>(atoms.size()));
    for (std::size_t j = 0; j < atoms.size(); ++j) sub.col(static_cast<Index>(j)) = D.col(atoms[j]);
    const Vector c = lstsq(sub, Y.col(n));
    for (std::size_t j = 0; j < atoms.size(); ++j) X(atoms[j], n) = c(static_cast<Index>(j));
  }
  return X;
}

}  // namespace romd

#endif  // ROMD_BASELINES_HPP
