// romd: experiment runner for the dictionary-learning toolkit.
//
//   romd phase   [--m 16 --k 32 --s 1,3,5 --n 64,128 ...]
//   romd curve   [--n 200 --s 3 ...]
//   romd sweep-n [--m 16,24 --k 32,48 --s 3,6 --n 50,100 ...]
//   romd noisy   [--snr 30,20 ...]
//   romd selftest
//
// Exit status: 0 success, 1 invalid arguments, 2 some trials failed.

#include "romd/harness.hpp"
#include "romd/selftest.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Args {
  std::vector<romd::Index> m, k, n, s;
  std::vector<std::string> snr;
  std::optional<long> trials;
  std::uint64_t seed = 1;
  double rho = 0.0;
  std::vector<std::string> engines;
  std::string out;
  bool full_scale = false;
  unsigned threads = 1;
  long romd_iters = 0;
  long baseline_iters = 0;
  long admm_iters = 300;
  std::string dump_dir;
};

void add_experiment_flags(CLI::App* app, Args& a) {
  app->add_option("--m", a.m, "dictionary rows (one per configuration)")->delimiter(',');
  app->add_option("--k", a.k, "number of atoms (one per configuration)")->delimiter(',');
  app->add_option("--n", a.n, "sample counts")->delimiter(',');
  app->add_option("--s", a.s, "sparsity levels (phase: grid; otherwise one per configuration)")->delimiter(',');
  app->add_option("--snr", a.snr, "SNR values in dB, 'inf' for noise-free (noisy only)")->delimiter(',');
  app->add_option("--trials", a.trials, "trials per cell (default 10, or 100 with --full-scale)");
  app->add_option("--seed", a.seed, "base seed");
  app->add_option("--rho", a.rho, "ADMM penalty (default 0.8; 0.02 for noisy cells)");
  app->add_option("--engines", a.engines, "subset of ROMD,KSVD,MOD")->delimiter(',');
  app->add_option("--out", a.out, "output CSV path (default <family>.csv)");
  app->add_flag("--full-scale", a.full_scale, "large grids and 100 trials per cell");
  app->add_option("--threads", a.threads, "worker threads");
  app->add_option("--romd-iters", a.romd_iters, "outer iterations for the ROMD engine");
  app->add_option("--baseline-iters", a.baseline_iters, "outer iterations for MOD and K-SVD");
  app->add_option("--admm-iters", a.admm_iters, "ADMM iteration cap per dictionary update");
  app->add_option("--dump-instances", a.dump_dir, "write every generated instance to this directory");
}

romd::ExperimentSpec to_spec(const Args& a, romd::Family family) {
  romd::ExperimentSpec spec;
  spec.family = family;
  spec.m = a.m;
  spec.k = a.k;
  spec.n = a.n;
  spec.s = a.s;
  for (const auto& v : a.snr) {
    if (v == "inf" || v == "Inf" || v == "INF") {
      spec.snr_db.push_back(romd::kNoiseFree);
      continue;
    }
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size()) throw romd::ValidationError("bad --snr value '" + v + "'");
    spec.snr_db.push_back(x);
  }
  spec.trials = a.trials;
  spec.base_seed = a.seed;
  spec.rho = a.rho;
  for (const auto& e : a.engines) {
    try {
      spec.engines.push_back(romd::parse_engine(e));
    } catch (const romd::Error& err) {
      throw romd::ValidationError(err.what());
    }
  }
  spec.out = a.out.empty() ? std::string(romd::to_string(family)) + ".csv" : a.out;
  spec.full_scale = a.full_scale;
  spec.threads = a.threads;
  spec.romd_iters = a.romd_iters;
  spec.baseline_iters = a.baseline_iters;
  spec.admm_iters = a.admm_iters;
  spec.dump_dir = a.dump_dir;
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ROMD dictionary-learning experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(romd::kVersion));

  Args args;
  struct Sub {
    const char* name;
    romd::Family family;
    const char* help;
  };
  const Sub subs[] = {
      {"phase", romd::Family::Phase, "dictionary update on true supports over an (S, N) grid"},
      {"curve", romd::Family::Curve, "error per outer iteration of full learning"},
      {"sweep-n", romd::Family::SweepN, "final error versus number of samples"},
      {"noisy", romd::Family::Noisy, "final error versus N at fixed SNR"},
  };
  std::vector<std::pair<CLI::App*, romd::Family>> runners;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_experiment_flags(sub, args);
    runners.emplace_back(sub, s.family);
  }
  CLI::App* selftest = app.add_subcommand("selftest", "quick numerical self checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (*selftest) return romd::run_selftest(std::cout) == 0 ? 0 : 2;

  for (const auto& [sub, family] : runners) {
    if (!*sub) continue;
    try {
      const romd::ResultTable table = romd::run_family(to_spec(args, family), &std::cerr);
      return table.failed_trials > 0 ? 2 : 0;
    } catch (const romd::ValidationError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }
  return 1;
}
