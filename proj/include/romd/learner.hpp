#ifndef ROMD_LEARNER_HPP
#define ROMD_LEARNER_HPP

#include "romd/baselines.hpp"
#include "romd/dict_update.hpp"
#include "romd/metrics.hpp"
#include "romd/omp.hpp"
#include "romd/rng.hpp"
#include "romd/support.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace romd {

enum class Engine { ROMD, MOD, KSVD };

inline std::string_view to_string(Engine e) {
  switch (e) {
    case Engine::ROMD: return "ROMD";
    case Engine::MOD: return "MOD";
    case Engine::KSVD: return "KSVD";
  }
  return "?";
}

inline Engine parse_engine(std::string_view s) {
  if (s == "ROMD" || s == "romd") return Engine::ROMD;
  if (s == "MOD" || s == "mod") return Engine::MOD;
  if (s == "KSVD" || s == "ksvd" || s == "K-SVD") return Engine::KSVD;
  throw Error("unknown engine '" + std::string(s) + "'");
}

enum class InitPolicy { DataColumns, RandomUnit };

struct LearnConfig {
  Engine engine = Engine::ROMD;
  long max_outer_iter = 150;
  OmpConfig omp{};
  AdmmConfig admm{};
  InitPolicy init_policy = InitPolicy::DataColumns;
  long eval_every = 1;
  double plateau_tol = 0.0;  ///< > 0 enables: stop when the tracked metric moves < tol over 10 iterations
  std::uint64_t seed = 0;

  void validate() const {
    if (max_outer_iter < 1) throw Error("LearnConfig: max_outer_iter must be >= 1");
    if (eval_every < 1) throw Error("LearnConfig: eval_every must be >= 1");
    if (engine == Engine::ROMD) admm.validate();
  }
};

struct IterationRecord {
  long iteration = 0;  ///< 1-based
  double recovery_error = std::numeric_limits<double>::quiet_NaN();  ///< NaN when not evaluated
  double fit_residual = 0.0;  ///< ||Y - D X||_F / ||Y||_F after the update
  long admm_iters = 0;
  bool admm_converged = true;
  Index unused_atoms = 0;
  double wall_seconds = 0.0;
};

struct LearnTrace {
  std::vector<IterationRecord> records;
  Matrix D;
  Matrix X;
  double initial_fit = 0.0;
  double initial_error = std::numeric_limits<double>::quiet_NaN();
  std::optional<std::string> failure;  ///< set when an engine step threw
  long failed_iteration = 0;
};

/// Initial dictionary: K distinct data columns of Y in random order
/// (normalized), or K random unit vectors. Zero data columns are skipped and
/// any shortfall is filled with random unit vectors.
inline Matrix init_dictionary(const Matrix& Y, Index K, InitPolicy policy, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix D(Y.rows(), K);
  Index filled = 0;
  if (policy == InitPolicy::DataColumns) {
    std::vector<Index> order(static_cast<std::size_t>(Y.cols()));
    for (Index n = 0; n < Y.cols(); ++n) order[static_cast<std::size_t>(n)] = n;
    for (Index i = 0; i < Y.cols() && filled < K; ++i) {
      const auto j = i + static_cast<Index>(rng.index(static_cast<std::uint64_t>(Y.cols() - i)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
      const auto col = Y.col(order[static_cast<std::size_t>(i)]);
      const double n = col.norm();
      if (n > 0.0) D.col(filled++) = col / n;
    }
  }
  for (; filled < K; ++filled) D.col(filled) = detail::random_unit(Y.rows(), rng);
  return D;
}

/// Alternating sparse coding and dictionary update.
inline LearnTrace learn(const Matrix& Y, const Matrix& D0, const LearnConfig& cfg,
                        const Matrix* truth = nullptr) {
  cfg.validate();
  if (D0.rows() != Y.rows()) throw Error("learn: D0 and Y row counts differ");
  if (truth && (truth->rows() != D0.rows() || truth->cols() != D0.cols()))
    throw Error("learn: reference dictionary shape differs from D0");

  using Clock = std::chrono::steady_clock;
  LearnTrace trace;
  trace.D = D0;
  trace.X = Matrix::Zero(D0.cols(), Y.cols());
  trace.initial_fit = relative_fit(Y, trace.D, trace.X);
  if (truth) trace.initial_error = recovery_error(D0, *truth).error;
  const CounterRng root(cfg.seed);

  for (long t = 1; t <= cfg.max_outer_iter; ++t) {
    const auto start = Clock::now();
    IterationRecord rec;
    rec.iteration = t;
    try {
      const Matrix X = omp_encode(Y, trace.D, cfg.omp);
      auto pattern = std::make_shared<const SupportPattern>(supports_from_coeffs(X));
      const std::uint64_t step_seed = root.split(static_cast<std::uint64_t>(t)).key();

      switch (cfg.engine) {
        case Engine::ROMD: {
          DictUpdateOptions opts;
          opts.warm_start = BlockSet::from_factors(pattern, trace.D, X);
          opts.previous_dict = &trace.D;
          opts.seed = step_seed;
          DictUpdateResult r = romd_dict_update(Y, pattern, cfg.admm, opts);
          rec.admm_iters = r.admm_iters;
          rec.admm_converged = r.converged;
          rec.unused_atoms = static_cast<Index>(r.unused_atoms.size());
          trace.D = std::move(r.D);
          trace.X = std::move(r.X);
          break;
        }
        case Engine::MOD: {
          ModResult r = mod_update(Y, X, step_seed);
          rec.unused_atoms = static_cast<Index>(r.reinitialized_atoms.size());
          trace.D = std::move(r.D);
          trace.X = std::move(r.X);
          break;
        }
        case Engine::KSVD: {
          KsvdResult r = ksvd_update(Y, trace.D, X, *pattern);
          rec.unused_atoms = static_cast<Index>(r.replaced_atoms.size());
          trace.D = std::move(r.D);
          trace.X = std::move(r.X);
          break;
        }
      }
    } catch (const Error& e) {
      trace.failure = e.what();
      trace.failed_iteration = t;
      break;
    }
    rec.fit_residual = relative_fit(Y, trace.D, trace.X);
    if (truth && (t % cfg.eval_every == 0 || t == cfg.max_outer_iter))
      rec.recovery_error = recovery_error(trace.D, *truth).error;
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    trace.records.push_back(rec);

    if (cfg.plateau_tol > 0.0 && trace.records.size() > 10) {
      auto metric = [&](const IterationRecord& r) {
        return truth && !std::isnan(r.recovery_error) ? r.recovery_error : r.fit_residual;
      };
      const auto& now = trace.records.back();
      const auto& then = trace.records[trace.records.size() - 11];
      if (std::abs(metric(now) - metric(then)) < cfg.plateau_tol) break;
    }
  }
  return trace;
}

}  // namespace romd

#endif  // ROMD_LEARNER_HPP
