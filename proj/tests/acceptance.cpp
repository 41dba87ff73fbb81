// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance            run everything
//   acceptance 3 5 7      run a subset

#include "romd/harness.hpp"
#include "test_util.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace romd;
using namespace romd_test;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Right inverse of a full-row-rank X via the normal equations.
Matrix pinv_rows(const Matrix& x) { return x.transpose() * (x * x.transpose()).inverse(); }

PatternPtr share(SupportPattern p) { return std::make_shared<const SupportPattern>(std::move(p)); }

const ResultRow* find_mean(const ResultTable& t, Index s, Index n, const std::string& engine, long iteration = -1) {
  for (const auto& r : t.rows)
    if (r.mean && r.s == s && r.n == n && r.engine == engine && (iteration < 0 || r.iteration == iteration)) return &r;
  return nullptr;
}

std::string engine_failures(const ResultTable& t) {
  return t.failed_trials ? " (" + std::to_string(t.failed_trials) + " failed trials)" : "";
}

// 1. Dictionary update on true supports, M=16, K=32, 10 trials.
Outcome phase_spots() {
  ExperimentSpec easy;
  easy.family = Family::Phase;
  easy.m = {16};
  easy.k = {32};
  easy.s = {2};
  easy.n = {8 * 16};
  easy.trials = 10;
  easy.engines = {Engine::ROMD};
  easy.out = "unused.csv";
  const ResultTable a = run_experiment(resolve(easy));

  ExperimentSpec dense = easy;
  dense.s = {8};
  dense.n = {20 * 16};
  dense.engines = {Engine::ROMD, Engine::KSVD, Engine::MOD};
  const ResultTable b = run_experiment(resolve(dense));

  const ResultRow* ra = find_mean(a, 2, 128, "ROMD");
  const ResultRow* rb = find_mean(b, 8, 320, "ROMD");
  const ResultRow* kb = find_mean(b, 8, 320, "KSVD");
  const ResultRow* mb = find_mean(b, 8, 320, "MOD");
  if (!ra || !rb || !kb || !mb) return {false, "missing mean rows"};
  const bool ok_a = ra->error < 1e-2;
  const bool ok_b = rb->error < 5e-2;
  const bool ok_c = rb->error < kb->error && rb->error < mb->error;
  std::ostringstream os;
  os << "(a) S=2 N/M=8 ROMD " << fmt("%.3g", ra->error) << (ok_a ? " < " : " >= ") << "1e-2; "
     << "(b) S=8 N/M=20 ROMD " << fmt("%.3g", rb->error) << (ok_b ? " < " : " >= ") << "5e-2; "
     << "(c) KSVD " << fmt("%.3g", kb->error) << " MOD " << fmt("%.3g", mb->error)
     << engine_failures(a) << engine_failures(b);
  return {ok_a && ok_b && ok_c && a.failed_trials == 0 && b.failed_trials == 0, os.str()};
}

// 2. Learning curve, M=16, K=32, N=200, S=3, rho=0.8, 10 trials; look at iteration 20.
Outcome learning_curve() {
  ExperimentSpec s;
  s.family = Family::Curve;
  s.m = {16};
  s.k = {32};
  s.s = {3};
  s.n = {200};
  s.trials = 10;
  s.rho = 0.8;
  s.romd_iters = 20;
  s.baseline_iters = 20;
  s.engines = {Engine::ROMD, Engine::KSVD};
  s.out = "unused.csv";
  const ResultTable t = run_experiment(resolve(s));
  const ResultRow* r = find_mean(t, 3, 200, "ROMD", 20);
  const ResultRow* k = find_mean(t, 3, 200, "KSVD", 20);
  if (!r || !k) return {false, "missing iteration-20 mean rows" + engine_failures(t)};
  const bool ok_abs = r->error <= 0.05;
  const bool ok_rel = r->error <= k->error;
  std::ostringstream os;
  os << "ROMD@20 " << fmt("%.4f", r->error) << (ok_abs ? " <= " : " > ") << "0.05; KSVD@20 "
     << fmt("%.4f", k->error) << (ok_rel ? " (ROMD <= KSVD)" : " (ROMD > KSVD)") << engine_failures(t);
  return {ok_abs && ok_rel && t.failed_trials == 0, os.str()};
}

// 3. CG against the dense least-squares oracle.
Outcome cg_oracle() {
  CounterRng rng(3003);
  double worst = 0.0;
  int done = 0;
  while (done < 200) {
    const Index M = 1 + static_cast<Index>(rng.index(6));
    const Index N = 1 + static_cast<Index>(rng.index(8));
    const Index K = 1 + static_cast<Index>(rng.index(4));
    auto p = share(random_pattern(K, N, rng));
    if (p->total_count() == 0) continue;
    const BlockSet blocks = BlockSet::from_full(p, random_matrix(M, N, rng));
    const Matrix full = random_matrix(M, N, rng);
    const CgResult r = solve_q_update(blocks, full, 1e-14, 0);
    const Vector oracle = dense_q_oracle(blocks, full);
    worst = std::max(worst, (vectorize(r.q) - oracle).norm() / std::max(oracle.norm(), 1e-300));
    ++done;
  }
  long max_disjoint_iters = 0;
  for (int t = 0; t < 50; ++t) {
    const Index M = 1 + static_cast<Index>(rng.index(6));
    const Index K = 1 + static_cast<Index>(rng.index(4));
    const Index N = K + static_cast<Index>(rng.index(8));
    auto p = share(disjoint_pattern(K, N));
    const CgResult r = solve_q_update(BlockSet::from_full(p, random_matrix(M, N, rng)), random_matrix(M, N, rng),
                                      1e-12, 0);
    max_disjoint_iters = std::max(max_disjoint_iters, r.report.iterations);
  }
  const bool ok = worst <= 1e-8 && max_disjoint_iters == 1;
  return {ok, "200 instances, worst relative error " + fmt("%.2e", worst) +
                  "; disjoint supports converge in at most " + std::to_string(max_disjoint_iters) + " iteration(s)"};
}

// 4. Shrinkage against analytic SVT and against random perturbations.
Outcome prox() {
  CounterRng rng(4004);
  double worst = 0.0;
  int beaten = 0;
  for (int b = 0; b < 50; ++b) {
    const Index r = 1 + static_cast<Index>(rng.index(8));
    const Index c = 1 + static_cast<Index>(rng.index(8));
    const Matrix q = random_matrix(r, c, rng);
    const Matrix lam = random_matrix(r, c, rng);
    const double rho = 0.2 + 2.0 * rng.uniform();
    auto pat = share(SupportPattern(c, {std::vector<Index>([&] {
                                       std::vector<Index> v;
                                       for (Index i = 0; i < c; ++i) v.push_back(i);
                                       return v;
                                     }())}));
    BlockSet Q(pat, r), L(pat, r);
    Q[0] = q;
    L[0] = lam;
    const Matrix z = z_update(Q, L, rho)[0];
    const Matrix zhat = q + lam;
    worst = std::max(worst, (z - svt_oracle(zhat, 1.0 / rho)).norm());
    auto objective = [&](const Matrix& x) { return nuclear_norm(x) / rho + 0.5 * (x - zhat).squaredNorm(); };
    const double best = objective(z);
    for (int i = 0; i < 100; ++i) {
      const double scale = std::pow(10.0, -1.0 - 3.0 * rng.uniform());
      if (objective(z + scale * random_matrix(r, c, rng)) < best) ++beaten;
    }
  }
  const bool ok = worst <= 1e-10 && beaten == 0;
  return {ok, "50 blocks, max deviation from analytic SVT " + fmt("%.2e", worst) + ", " + std::to_string(beaten) +
                  "/5000 perturbations did better"};
}

// 5. Gather/scatter adjointness and the factor identity.
Outcome adjoint() {
  CounterRng rng(5005);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index M = 1 + static_cast<Index>(rng.index(8));
    const Index N = 1 + static_cast<Index>(rng.index(12));
    const Index K = 1 + static_cast<Index>(rng.index(6));
    const SupportPattern p = random_pattern(K, N, rng);
    const Index k = static_cast<Index>(rng.index(static_cast<std::uint64_t>(K)));
    const Matrix a = random_matrix(M, N, rng);
    const Matrix b = random_matrix(M, p.count(k), rng);
    Matrix sb = Matrix::Zero(M, N);
    scatter_add(sb, b, k, p);
    // Oracle for <A, scatter(B)>: sum over the support written out directly.
    double direct = 0.0;
    for (std::size_t j = 0; j < p.row(k).size(); ++j)
      for (Index i = 0; i < M; ++i) direct += a(i, p.row(k)[j]) * b(i, static_cast<Index>(j));
    worst = std::max({worst, std::abs(frob_dot(gather(a, k, p), b) - frob_dot(a, sb)),
                      std::abs(frob_dot(a, sb) - direct)});
  }
  double worst_factor = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index M = 2 + static_cast<Index>(rng.index(10));
    const Index K = 2 + static_cast<Index>(rng.index(10));
    const Index N = 1 + static_cast<Index>(rng.index(30));
    const Index S = 1 + static_cast<Index>(rng.index(static_cast<std::uint64_t>(std::min(M, K))));
    const ProblemInstance inst = gen_instance(M, K, N, S, rng());
    auto p = share(supports_from_coeffs(inst.X_true));
    worst_factor = std::max(worst_factor, (sum_scatter(BlockSet::from_factors(p, inst.D_true, inst.X_true)) -
                                           inst.D_true * inst.X_true).cwiseAbs().maxCoeff());
  }
  const bool ok = worst <= 1e-12 && worst_factor <= 1e-12;
  return {ok, "adjoint gap " + fmt("%.2e", worst) + " over 100 draws; sum_scatter vs D*X " + fmt("%.2e", worst_factor)};
}

// 6. Noisy mode at 20 dB.
Outcome noisy() {
  ExperimentSpec s;
  s.family = Family::Noisy;
  s.m = {16};
  s.k = {32};
  s.s = {3};
  s.n = {200};
  s.snr_db = {20.0};
  s.trials = 10;
  s.romd_iters = 50;
  s.baseline_iters = 50;
  s.engines = {Engine::ROMD, Engine::MOD};
  s.out = "unused.csv";
  const ExperimentSpec r = resolve(s);
  const double rho = cell_rho(r, Cell{16, 32, 3, 200, 20.0});
  const ResultTable t = run_experiment(r);
  const ResultRow* romd = find_mean(t, 3, 200, "ROMD");
  const ResultRow* mod = find_mean(t, 3, 200, "MOD");
  if (!romd || !mod) return {false, "missing mean rows" + engine_failures(t)};
  const bool ok_err = romd->error <= mod->error;

  // Feasibility of converged updates: ||sum P*(Q) - Y|| <= eps (1 + 1e-3).
  int converged = 0, inside = 0;
  double worst_ratio = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const ProblemInstance inst = add_noise(gen_instance(16, 32, 200, 3, 6000 + trial), 20.0, 7000 + trial);
    AdmmConfig cfg;
    cfg.rho = rho;
    cfg.noise_radius = inst.noise_norm;
    // The ball bound eps + stop_tol ||Y|| equals eps (1 + 1e-3) at 20 dB when stop_tol = 1e-4.
    cfg.stop_tol = 1e-4;
    cfg.max_admm_iter = 10000;
    const DictUpdateResult u = romd_dict_update(inst.Y, share(supports_from_coeffs(inst.X_true)), cfg);
    if (!u.converged) continue;
    ++converged;
    const double ratio = (sum_scatter(u.Q) - inst.Y).norm() / inst.noise_norm;
    worst_ratio = std::max(worst_ratio, ratio);
    if (ratio <= 1.0 + 1e-3) ++inside;
  }
  const bool ok_ball = converged > 0 && inside == converged;
  std::ostringstream os;
  os << "rho " << rho << "; ROMD " << fmt("%.4f", romd->error) << (ok_err ? " <= " : " > ") << "MOD "
     << fmt("%.4f", mod->error) << " at 50 iterations; " << converged << "/10 updates converged, worst ||fit||/eps "
     << fmt("%.6f", worst_ratio) << engine_failures(t);
  return {ok_err && ok_ball && t.failed_trials == 0, os.str()};
}

// 7. Metric identities.
Outcome metric() {
  bool ok = true;
  std::ostringstream os;
  for (int t = 0; t < 10; ++t) {
    const ProblemInstance inst = gen_instance(16, 32, 1, 1, 8000 + t);
    const Matrix& D = inst.D_true;
    CounterRng rng(9000 + t);
    Matrix P = D;
    for (Index i = 31; i > 0; --i) P.col(i).swap(P.col(static_cast<Index>(rng.index(static_cast<std::uint64_t>(i + 1)))));
    Matrix S = P;
    for (Index i = 0; i < 32; ++i)
      if (rng.index(2)) S.col(i) *= -1.0;
    Matrix F = D;
    F.col(31) *= -1.0;
    const double e_id = recovery_error(D, D).error;
    const double e_perm = recovery_error(P, D).error;
    const double e_sign = recovery_error(S, D, true).error;
    const double e_flip_inv = recovery_error(F, D, true).error;
    const double e_flip_lit = recovery_error(F, D, false).error;
    ok = ok && e_id < 1e-12 && e_perm < 1e-12 && e_sign < 1e-12 && e_flip_inv < 1e-12 &&
         std::abs(e_flip_lit - 2.0 / 32.0) < 1e-12;
    if (t == 0)
      os << "identical " << fmt("%.1e", e_id) << ", permuted " << fmt("%.1e", e_perm) << ", sign-flipped "
         << fmt("%.1e", e_sign) << ", one flip literal " << fmt("%.6f", e_flip_lit) << " vs 2/K "
         << fmt("%.6f", 2.0 / 32.0);
  }
  return {ok, os.str() + " (10 dictionaries)"};
}

// 8. K-SVD per-atom monotonicity and MOD optimality.
Outcome baselines() {
  CounterRng rng(8008);
  int violations = 0;
  double worst_increase = 0.0;
  for (int t = 0; t < 50; ++t) {
    const ProblemInstance inst = gen_instance(16, 32, 200, 3, 10000 + t);
    Matrix D = normalize_columns(random_matrix(16, 32, rng)).matrix;
    const Matrix X0 = omp_encode(inst.Y, D, OmpConfig{3});
    const SupportPattern p = supports_from_coeffs(X0);
    Matrix X = X0;
    Matrix E = inst.Y - D * X;
    std::vector<char> used(200, 0);
    double prev = E.norm();
    for (Index k = 0; k < 32; ++k) {
      ksvd_update_atom(k, p, D, X, E, used);
      const double now = (inst.Y - D * X).norm();  // recomputed, not the running E
      if (now > prev * (1.0 + 1e-12)) {
        ++violations;
        worst_increase = std::max(worst_increase, now / prev - 1.0);
      }
      prev = now;
    }
  }
  int mod_beaten = 0;
  for (int t = 0; t < 20; ++t) {
    const ProblemInstance inst = add_noise(gen_instance(16, 32, 200, 3, 20000 + t), 20.0, t);
    const ModResult r = mod_update(inst.Y, inst.X_true);
    const Matrix D_ls = r.D * r.X * pinv_rows(inst.X_true);
    const double best = (inst.Y - r.D * r.X).norm();
    for (int i = 0; i < 50; ++i) {
      const Matrix Dp = D_ls + 1e-4 * random_matrix(16, 32, rng);
      if ((inst.Y - Dp * inst.X_true).norm() < best * (1.0 - 1e-12)) ++mod_beaten;
    }
  }
  const bool ok = violations == 0 && mod_beaten == 0;
  return {ok, "K-SVD: " + std::to_string(violations) + " increases over 50x32 atom steps (worst " +
                  fmt("%.1e", worst_increase) + "); MOD: " + std::to_string(mod_beaten) +
                  "/1000 perturbations beat it"};
}

// 9. Byte-identical tables across repeated runs and thread counts.
Outcome determinism() {
  int mismatches = 0;
  std::string families;
  for (Family f : {Family::Phase, Family::Curve, Family::SweepN, Family::Noisy}) {
    ExperimentSpec s;
    s.family = f;
    s.m = {8};
    s.k = {12};
    s.s = {2};
    s.n = {40, 60};
    s.snr_db = f == Family::Noisy ? std::vector<double>{20.0, kNoiseFree} : std::vector<double>{};
    s.trials = 3;
    s.romd_iters = 3;
    s.baseline_iters = 5;
    s.admm_iters = 50;
    s.base_seed = 424242;
    s.out = "unused.csv";
    const ExperimentSpec r = resolve(s);
    const std::string once = to_csv(run_experiment(r));
    const std::string twice = to_csv(run_experiment(r));
    ExperimentSpec threaded = r;
    threaded.threads = 4;
    const std::string pooled = to_csv(run_experiment(threaded));
    if (once != twice || once != pooled) ++mismatches;
    families += std::string(families.empty() ? "" : ", ") + std::string(to_string(f));
  }
  return {mismatches == 0,
          families + ": " + std::to_string(mismatches) + " mismatching tables (2 runs + 4 threads each)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"phase-transition spot checks", phase_spots},
      {"learning curve at iteration 20", learning_curve},
      {"CG matches dense least squares", cg_oracle},
      {"singular-value shrinkage is the prox", prox},
      {"gather/scatter adjoint and factor identity", adjoint},
      {"noisy mode at 20 dB", noisy},
      {"recovery-error identities", metric},
      {"K-SVD and MOD optimality properties", baselines},
      {"deterministic tables", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
