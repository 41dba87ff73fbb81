#ifndef ROMD_DICT_UPDATE_HPP
#define ROMD_DICT_UPDATE_HPP

#include "romd/cg.hpp"
#include "romd/linalg.hpp"
#include "romd/rng.hpp"
#include "romd/support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace romd {

struct AdmmConfig {
  double rho = 0.8;
  double stop_tol = 1e-5;
  long max_admm_iter = 300;
  double cg_tol = 1e-10;
  long cg_max_iter = 0;  ///< <= 0: twice the number of unknowns
  double noise_radius = 0.0;  ///< epsilon; 0 selects the noise-free formulation

  void validate() const {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw Error("AdmmConfig: rho must be positive");
    if (!(stop_tol > 0.0)) throw Error("AdmmConfig: stop_tol must be positive");
    if (!(noise_radius >= 0.0) || !std::isfinite(noise_radius))
      throw Error("AdmmConfig: noise_radius must be finite and >= 0");
    if (max_admm_iter < 1) throw Error("AdmmConfig: max_admm_iter must be >= 1");
  }
  bool noisy() const { return noise_radius > 0.0; }
};

/// ADMM iterates for min sum_k ||Z_k||_* s.t. sum_k P_k^*(Q_k) = Y (or W in
/// the noisy form, with ||W - Y||_F <= eps) and Z_k = Q_k.
struct AdmmState {
  BlockSet Q;
  BlockSet Z;
  BlockSet Lambda_k;
  Matrix Lambda0;
  Matrix W;  ///< equals Y in the noise-free form
  long iter = 0;
  double fit_residual = 0.0;         ///< ||sum P^*(Q) - Y||_F / ||Y||_F
  double constraint_residual = 0.0;  ///< ||sum P^*(Q) - W||_F / ||Y||_F
  double consensus_residual = 0.0;   ///< sqrt(sum ||Q_k - Z_k||^2) / ||Y||_F
  double dual_residual = 0.0;        ///< rho * ||Z^{l+1} - Z^l|| / ||Y||_F
};

/// Singular-value soft-thresholding: sum_m max(0, sigma_m - threshold) u_m v_m^T.
///
/// Works on the eigenpairs of the smaller Gram matrix. Only singular values
/// above the threshold survive, and on that subspace
///   Z = U_r diag(1 - t / sigma_r) U_r^T Zhat,
/// so the small singular values, where the Gram route loses accuracy, never
/// enter the result.
inline Matrix shrink_singular_values(const Matrix& zhat, double threshold) {
  if (zhat.cols() == 0 || zhat.rows() == 0) return zhat;
  if (!zhat.allFinite()) throw Error("shrink_singular_values: non-finite input");
  const bool left = zhat.cols() >= zhat.rows();
  const Matrix gram = left ? Matrix(zhat * zhat.transpose()) : Matrix(zhat.transpose() * zhat);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericalError("shrink_singular_values: eigensolver failed", 0);

  // Eigenvalues come in increasing order.
  const Vector& lambda = eig.eigenvalues();
  const double t2 = threshold * threshold;
  Index first = lambda.size();
  while (first > 0 && lambda(first - 1) > t2) --first;
  const Index r = lambda.size() - first;
  if (r == 0) return Matrix::Zero(zhat.rows(), zhat.cols());

  const Matrix basis = eig.eigenvectors().rightCols(r);
  Vector weight(r);
  for (Index i = 0; i < r; ++i) weight(i) = 1.0 - threshold / std::sqrt(lambda(first + i));
  const Matrix proj = basis * weight.asDiagonal() * basis.transpose();
  return left ? Matrix(proj * zhat) : Matrix(zhat * proj);
}

inline BlockSet z_update(const BlockSet& Q, const BlockSet& Lambda_k, double rho) {
  if (!(rho > 0.0)) throw Error("z_update: rho must be positive");
  BlockSet Z = Q;
  Z += Lambda_k;
  for (Index k = 0; k < Z.size(); ++k) {
    try {
      Z[k] = shrink_singular_values(Z[k], 1.0 / rho);
    } catch (const Error& e) {
      throw Error("z_update: atom " + std::to_string(k) + ": " + e.what());
    }
  }
  return Z;
}

/// Lambda_k += Q_k - Z_k; Lambda0 += sum P^*(Q) - target.
inline void dual_update(AdmmState& state, const Matrix& target) {
  state.Lambda_k += state.Q;
  state.Lambda_k -= state.Z;
  state.Lambda0 += sum_scatter(state.Q) - target;
}

/// Projection of sum P^*(Q) + Lambda0 onto the ball ||W - Y||_F <= eps.
inline Matrix w_update(const BlockSet& Q, const Matrix& Lambda0, const Matrix& Y, double eps) {
  if (!(eps >= 0.0)) throw Error("w_update: eps must be >= 0");
  Matrix w_hat = sum_scatter(Q) + Lambda0;
  const double dist = (w_hat - Y).norm();
  if (dist <= eps) return w_hat;
  return Y + (eps / dist) * (w_hat - Y);
}

struct RankOneFactor {
  Vector atom;    ///< unit length M
  Vector coeffs;  ///< length n_k
  double sigma = 0.0;
};

/// Leading singular triple of a block: atom = u1, coeffs = sigma1 * v1.
/// Empty for an empty or all-zero block.
inline std::optional<RankOneFactor> extract_rank_one(const Matrix& qk) {
  if (qk.cols() == 0 || qk.rows() == 0) return std::nullopt;
  const SvdFactors f = svd(qk);
  if (!(f.singulars(0) > 0.0)) return std::nullopt;
  return RankOneFactor{f.U.col(0), f.singulars(0) * f.Vt.row(0).transpose(), f.singulars(0)};
}

struct DictUpdateResult {
  Matrix D;  ///< M x K, unit columns
  Matrix X;  ///< K x N, zero outside the pattern
  BlockSet Q;
  long admm_iters = 0;
  bool converged = false;
  double fit_residual = 0.0;
  double consensus_residual = 0.0;
  double dual_residual = 0.0;
  std::vector<Index> unused_atoms;  ///< atoms with no extracted component
  std::vector<double> fit_history;  ///< fit_residual after each iteration
};

struct DictUpdateOptions {
  std::optional<BlockSet> warm_start;  ///< initial Z, e.g. previous D and X on the new supports
  const Matrix* previous_dict = nullptr;  ///< source for atoms with nothing to extract
  std::uint64_t seed = 0;  ///< fallback random atoms when previous_dict is null
};

namespace detail {

inline BlockSet default_z_init(const Matrix& Y, const PatternPtr& pattern) {
  const auto mult = pattern->column_multiplicity();
  Matrix scaled = Y;
  for (Index n = 0; n < Y.cols(); ++n) {
    const Index m = mult[static_cast<std::size_t>(n)];
    if (m > 1) scaled.col(n) /= static_cast<double>(m);
  }
  return BlockSet::from_full(pattern, scaled);
}

inline Vector random_unit(Index m, CounterRng& rng) {
  Vector v(m);
  for (;;) {
    for (Index i = 0; i < m; ++i) v(i) = rng.normal();
    const double n = v.norm();
    if (n > 0.0) return v / n;
  }
}

}  // namespace detail

/// Convex whole-dictionary update for a fixed support pattern, followed by
/// per-atom rank-one extraction.
///
/// Each ADMM iteration runs the CG Q-step with B_0 = Y - Lambda0 (W - Lambda0
/// when noisy) and B_k = Z_k - Lambda_k, the singular-value shrinkage Z-step,
/// the W projection when noisy, then the dual ascent. Stops once both the
/// data constraint and the Q = Z consensus hold to stop_tol relative to
/// ||Y||_F.
inline DictUpdateResult romd_dict_update(const Matrix& Y, PatternPtr pattern,
                                         const AdmmConfig& cfg,
                                         const DictUpdateOptions& opts = {}) {
  cfg.validate();
  if (!pattern) throw Error("romd_dict_update: null pattern");
  if (Y.cols() != pattern->num_samples()) {
    throw Error("romd_dict_update: Y has " + std::to_string(Y.cols()) +
                " columns, pattern expects " + std::to_string(pattern->num_samples()));
  }
  if (!Y.allFinite()) throw Error("romd_dict_update: Y has non-finite entries");
  const Index M = Y.rows();
  const Index K = pattern->num_atoms();
  const double y_norm = Y.norm();
  const double scale = y_norm > 0.0 ? y_norm : 1.0;

  AdmmState st{BlockSet::zeros(pattern, M), BlockSet::zeros(pattern, M),
               BlockSet::zeros(pattern, M), Matrix::Zero(M, Y.cols()), Y};
  if (opts.warm_start) {
    if (!opts.warm_start->same_layout(st.Z)) throw Error("romd_dict_update: warm start layout mismatch");
    st.Z = *opts.warm_start;
  } else {
    st.Z = detail::default_z_init(Y, pattern);
  }

  DictUpdateResult res{Matrix::Zero(M, K), Matrix::Zero(K, Y.cols()), st.Q, 0, false, 0.0, 0.0, 0.0, {}, {}};
  double best_metric = std::numeric_limits<double>::infinity();

  for (long l = 1; l <= cfg.max_admm_iter; ++l) {
    BlockSet b_blocks = st.Z;
    b_blocks -= st.Lambda_k;
    const Matrix b_full = st.W - st.Lambda0;
    CgResult cg = solve_q_update(b_blocks, b_full, cfg.cg_tol, cfg.cg_max_iter, st.Q);
    st.Q = std::move(cg.q);

    BlockSet z_prev = std::move(st.Z);
    st.Z = z_update(st.Q, st.Lambda_k, cfg.rho);
    if (cfg.noisy()) st.W = w_update(st.Q, st.Lambda0, Y, cfg.noise_radius);
    dual_update(st, st.W);
    st.iter = l;

    const Matrix fit = sum_scatter(st.Q);
    st.fit_residual = (fit - Y).norm() / scale;
    st.constraint_residual = cfg.noisy() ? (fit - st.W).norm() / scale : st.fit_residual;
    st.consensus_residual = (st.Q - st.Z).norm() / scale;
    z_prev -= st.Z;
    st.dual_residual = cfg.rho * z_prev.norm() / scale;

    if (!std::isfinite(st.fit_residual) || !std::isfinite(st.consensus_residual) ||
        !st.Lambda0.allFinite() || !st.Lambda_k.all_finite()) {
      throw NumericalError("romd_dict_update: non-finite ADMM state", l);
    }
    res.fit_history.push_back(st.fit_residual);

    const double metric = std::max(st.constraint_residual, st.consensus_residual);
    if (metric < best_metric) {
      best_metric = metric;
      res.Q = st.Q;
      res.admm_iters = l;
      res.fit_residual = st.fit_residual;
      res.consensus_residual = st.consensus_residual;
      res.dual_residual = st.dual_residual;
    }
    if (metric <= cfg.stop_tol) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged) res.admm_iters = st.iter;

  CounterRng rng(opts.seed);
  for (Index k = 0; k < K; ++k) {
    const auto factor = extract_rank_one(res.Q[k]);
    if (!factor) {
      res.unused_atoms.push_back(k);
      if (opts.previous_dict && opts.previous_dict->rows() == M && opts.previous_dict->cols() == K &&
          opts.previous_dict->col(k).norm() > 0.0) {
        res.D.col(k) = opts.previous_dict->col(k).normalized();
      } else {
        CounterRng atom_rng = rng.split(static_cast<std::uint64_t>(k));
        res.D.col(k) = detail::random_unit(M, atom_rng);
      }
      continue;
    }
    res.D.col(k) = factor->atom;
    const auto& idx = pattern->row(k);
    for (std::size_t j = 0; j < idx.size(); ++j) res.X(k, idx[j]) = factor->coeffs(static_cast<Index>(j));
  }
  return res;
}

}  // namespace romd

#endif  // ROMD_DICT_UPDATE_HPP
