#ifndef ROMD_SELFTEST_HPP
#define ROMD_SELFTEST_HPP

#include "romd/baselines.hpp"
#include "romd/cg.hpp"
#include "romd/dict_update.hpp"
#include "romd/metrics.hpp"
#include "romd/rng.hpp"
#include "romd/support.hpp"
#include "romd/synth.hpp"

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace romd {

/// Quick in-process sanity checks of an installed build. Prints one line per
/// check and returns the number of failures.
inline int run_selftest(std::ostream& os) {
  int failures = 0;
  auto check = [&](const std::string& name, const std::function<std::string()>& body) {
    std::string why;
    try {
      why = body();
    } catch (const std::exception& e) {
      why = std::string("threw: ") + e.what();
    }
    if (why.empty()) {
      os << "ok    " << name << "\n";
    } else {
      os << "FAIL  " << name << ": " << why << "\n";
      ++failures;
    }
  };

  check("rng matches reference splitmix64", [] {
    CounterRng rng(0);
    return rng() == 0xE220A8397B1DCDAFULL ? std::string() : std::string("first output differs");
  });

  check("gather/scatter adjoint", [] {
    const ProblemInstance inst = gen_instance(5, 4, 9, 2, 11);
    const SupportPattern pat = supports_from_coeffs(inst.X_true);
    CounterRng rng(3);
    Matrix a(5, 9);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    for (Index k = 0; k < 4; ++k) {
      Matrix b(5, pat.count(k));
      for (Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
      Matrix sb = Matrix::Zero(5, 9);
      scatter_add(sb, b, k, pat);
      if (std::abs(frob_dot(gather(a, k, pat), b) - frob_dot(a, sb)) > 1e-12)
        return std::string("inner products differ for atom ") + std::to_string(k);
    }
    return std::string();
  });

  check("cg solves the q-subproblem", [] {
    const ProblemInstance inst = gen_instance(4, 3, 6, 2, 5);
    auto pat = std::make_shared<const SupportPattern>(supports_from_coeffs(inst.X_true));
    const BlockSet rhs = BlockSet::from_full(pat, inst.Y);
    const CgResult r = solve_q_update(rhs, inst.Y, 1e-13, 0);
    // Optimality: the normal-equation residual vanishes.
    BlockSet g = apply_adjoint(rhs, inst.Y);
    g -= apply_normal(r.q);
    return g.norm() <= 1e-10 * apply_adjoint(rhs, inst.Y).norm() ? std::string()
                                                                 : std::string("normal residual too large");
  });

  check("shrinkage matches svd thresholding", [] {
    CounterRng rng(8);
    Matrix z(4, 7);
    for (Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
    const SvdFactors f = svd(z);
    Vector s = (f.singulars.array() - 1.0).max(0.0);
    const Matrix ref = f.U * s.asDiagonal() * f.Vt;
    return (shrink_singular_values(z, 1.0) - ref).norm() <= 1e-10 ? std::string()
                                                                   : std::string("mismatch");
  });

  check("romd recovers a small dictionary", [] {
    const ProblemInstance inst = gen_instance(8, 8, 80, 2, 21);
    auto pat = std::make_shared<const SupportPattern>(supports_from_coeffs(inst.X_true));
    const DictUpdateResult r = romd_dict_update(inst.Y, pat, AdmmConfig{});
    const double err = recovery_error(r.D, inst.D_true).error;
    return err < 1e-2 ? std::string() : "recovery error " + std::to_string(err);
  });

  check("metric is zero on a permuted copy", [] {
    const ProblemInstance inst = gen_instance(6, 5, 10, 2, 4);
    Matrix p = inst.D_true;
    p.col(0).swap(p.col(3));
    p.col(1) *= -1.0;
    return recovery_error(p, inst.D_true).error <= 1e-12 ? std::string() : std::string("nonzero");
  });

  check("mod residual is orthogonal to the codes", [] {
    const ProblemInstance inst = gen_instance(6, 5, 30, 2, 9);
    const ModResult r = mod_update(inst.Y, inst.X_true);
    const Matrix g = (inst.Y - r.D * r.X) * r.X.transpose();
    return g.norm() <= 1e-9 * inst.Y.norm() * r.X.norm() ? std::string() : std::string("gradient nonzero");
  });

  return failures;
}

}  // namespace romd

#endif  // ROMD_SELFTEST_HPP
