#ifndef ROMD_METRICS_HPP
#define ROMD_METRICS_HPP

#include "romd/linalg.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace romd {

struct MatchReport {
  double error = 0.0;  ///< (1/K) sum_k (1 - similarity_k), in [0, 2]
  std::vector<Index> assignment;  ///< estimated atom k -> true atom
  std::vector<double> per_atom_similarity;
  std::vector<std::string> warnings;
};

namespace detail {

inline Matrix unit_columns_or_warn(const Matrix& d, const char* name,
                                   std::vector<std::string>& warnings) {
  Matrix out = d;
  for (Index k = 0; k < d.cols(); ++k) {
    const double n = d.col(k).norm();
    if (std::abs(n - 1.0) > 1e-8) {
      warnings.push_back(std::string(name) + " column " + std::to_string(k) +
                         " has norm " + std::to_string(n) + "; normalized");
      if (n > 0.0) out.col(k) /= n;
    }
  }
  return out;
}

inline Matrix similarity_matrix(const Matrix& d_hat, const Matrix& d_true, bool sign_invariant,
                                std::vector<std::string>& warnings) {
  if (d_hat.cols() != d_true.cols() || d_hat.rows() != d_true.rows()) {
    throw Error("recovery_error: dictionaries have shapes " + std::to_string(d_hat.rows()) + "x" +
                std::to_string(d_hat.cols()) + " and " + std::to_string(d_true.rows()) + "x" +
                std::to_string(d_true.cols()));
  }
  const Matrix a = unit_columns_or_warn(d_hat, "estimated", warnings);
  const Matrix b = unit_columns_or_warn(d_true, "reference", warnings);
  Matrix g = a.transpose() * b;
  if (sign_invariant) g = g.cwiseAbs();
  // Rounding can push |<a, b>| of unit vectors a hair past 1.
  return g.cwiseMin(1.0).cwiseMax(-1.0);
}

}  // namespace detail

/// Dictionary recovery error with greedy matching: estimated atoms are
/// visited in ascending order and each takes the most similar reference atom
/// not yet taken. With sign_invariant the similarity is |<d_hat, d_true>|.
inline MatchReport recovery_error(const Matrix& d_hat, const Matrix& d_true,
                                  bool sign_invariant = true) {
  MatchReport rep;
  const Matrix g = detail::similarity_matrix(d_hat, d_true, sign_invariant, rep.warnings);
  const Index K = g.rows();
  std::vector<char> taken(static_cast<std::size_t>(K), 0);
  double total = 0.0;
  for (Index k = 0; k < K; ++k) {
    Index best = -1;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < K; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      if (g(k, i) > best_sim) {
        best_sim = g(k, i);
        best = i;
      }
    }
    taken[static_cast<std::size_t>(best)] = 1;
    rep.assignment.push_back(best);
    rep.per_atom_similarity.push_back(best_sim);
    total += 1.0 - best_sim;
  }
  rep.error = K > 0 ? total / static_cast<double>(K) : 0.0;
  return rep;
}

/// Same error under the optimal one-to-one matching (Hungarian algorithm).
/// Diagnostic only; reported numbers use recovery_error.
inline MatchReport optimal_recovery_error(const Matrix& d_hat, const Matrix& d_true,
                                          bool sign_invariant = true) {
  MatchReport rep;
  const Matrix g = detail::similarity_matrix(d_hat, d_true, sign_invariant, rep.warnings);
  const Index K = g.rows();
  const std::size_t n = static_cast<std::size_t>(K);
  // Minimize sum (1 - g); potentials formulation, 1-based rows/cols.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cost = 1.0 - g(static_cast<Index>(i0 - 1), static_cast<Index>(j - 1));
        const double cur = cost - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  rep.assignment.assign(n, -1);
  for (std::size_t j = 1; j <= n; ++j) rep.assignment[p[j] - 1] = static_cast<Index>(j - 1);
  double total = 0.0;
  for (Index k = 0; k < K; ++k) {
    const double s = g(k, rep.assignment[static_cast<std::size_t>(k)]);
    rep.per_atom_similarity.push_back(s);
    total += 1.0 - s;
  }
  rep.error = K > 0 ? total / static_cast<double>(K) : 0.0;
  return rep;
}

/// ||Y - D X||_F / ||Y||_F
inline double relative_fit(const Matrix& Y, const Matrix& D, const Matrix& X) {
  const double yn = Y.norm();
  return (Y - D * X).norm() / (yn > 0.0 ? yn : 1.0);
}

}  // namespace romd

#endif  // ROMD_METRICS_HPP
