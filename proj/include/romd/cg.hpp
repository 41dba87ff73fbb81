#ifndef ROMD_CG_HPP
#define ROMD_CG_HPP

#include "romd/support.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace romd {

// The Q-subproblem is min_q ||A q - b||^2 with
//
//   A = [ P_1^* ... P_K^* ]      b = [ B_0 ]
//       [        I        ]          [ B_k ]
//
// A is never formed; the products below work on the blocks directly.

/// A p, split into the identity part (one block per atom) and the stacked
/// scatter part (an M x N matrix).
struct ForwardProduct {
  BlockSet top;
  Matrix bottom;
};

inline ForwardProduct apply_forward(const BlockSet& p) {
  return ForwardProduct{p, sum_scatter(p)};
}

/// A^T b for a right-hand side given as (blocks, full matrix).
inline BlockSet apply_adjoint(const BlockSet& blocks, const Matrix& full) {
  BlockSet out = blocks;
  const auto& pattern = blocks.pattern();
  for (Index k = 0; k < out.size(); ++k) {
    const auto& idx = pattern.row(k);
    for (std::size_t j = 0; j < idx.size(); ++j) out[k].col(static_cast<Index>(j)) += full.col(idx[j]);
  }
  return out;
}

/// A^T (A p): out_k = p_k + (sum_j P_j^*(p_j))(:, Omega_k).
inline BlockSet apply_normal(const BlockSet& p) {
  return apply_adjoint(p, sum_scatter(p));
}

struct CgReport {
  long iterations = 0;
  double final_residual = 0.0;  ///< ||A^T(b - A q)|| / ||A^T b||
  bool converged = false;
  std::vector<double> residual_history;  ///< relative residual before each step
};

struct CgResult {
  BlockSet q;
  CgReport report;
};

/// Solves min sum_k ||Q_k - B_k||^2 + ||sum_k P_k^*(Q_k) - B_0||^2 by CG on
/// the normal equations (CGNR). max_iter <= 0 means 2 * (number of unknowns).
inline CgResult solve_q_update(const BlockSet& rhs_blocks, const Matrix& rhs_full,
                               double tol, long max_iter,
                               const std::optional<BlockSet>& warm_start = std::nullopt) {
  const auto& pattern = rhs_blocks.pattern();
  if (rhs_full.rows() != rhs_blocks.rows() || rhs_full.cols() != pattern.num_samples()) {
    throw Error("solve_q_update: rhs shapes disagree");
  }
  if (max_iter <= 0) max_iter = 2 * rhs_blocks.rows() * pattern.total_count();

  const BlockSet atb = apply_adjoint(rhs_blocks, rhs_full);
  const double atb_norm = atb.norm();

  CgResult out{BlockSet::zeros(rhs_blocks.pattern_ptr(), rhs_blocks.rows()), {}};
  if (atb_norm == 0.0) {
    out.report.converged = true;
    return out;
  }

  BlockSet r = atb;
  if (warm_start) {
    out.q = *warm_start;
    r -= apply_normal(out.q);
  }
  BlockSet p = r;
  double rr = r.squared_norm();
  auto& rep = out.report;

  for (long it = 0;; ++it) {
    const double rel = std::sqrt(rr) / atb_norm;
    rep.residual_history.push_back(rel);
    rep.final_residual = rel;
    if (!std::isfinite(rel)) throw NumericalError("solve_q_update: non-finite residual", it);
    if (rel <= tol) {
      rep.converged = true;
      break;
    }
    if (it >= max_iter) break;

    const ForwardProduct ap = apply_forward(p);
    const double ap_sq = ap.top.squared_norm() + ap.bottom.squaredNorm();
    if (!(ap_sq > 0.0)) throw NumericalError("solve_q_update: zero curvature direction", it);
    const double alpha = rr / ap_sq;

    out.q.axpy(alpha, p);
    r.axpy(-alpha, apply_adjoint(ap.top, ap.bottom));
    const double rr_new = r.squared_norm();
    p.xpby(r, rr_new / rr);
    rr = rr_new;
    rep.iterations = it + 1;
  }
  if (!out.q.all_finite()) throw NumericalError("solve_q_update: non-finite iterate", rep.iterations);
  return out;
}

}  // namespace romd

#endif  // ROMD_CG_HPP
