#ifndef ROMD_HARNESS_HPP
#define ROMD_HARNESS_HPP

#include "romd/baselines.hpp"
#include "romd/dict_update.hpp"
#include "romd/learner.hpp"
#include "romd/metrics.hpp"
#include "romd/rng.hpp"
#include "romd/synth.hpp"
#include "romd/version.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace romd {

/// Bad experiment description; nothing is written.
class ValidationError : public Error {
 public:
  using Error::Error;
};

enum class Family { Phase, Curve, SweepN, Noisy };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::Phase: return "phase";
    case Family::Curve: return "curve";
    case Family::SweepN: return "sweep_n";
    case Family::Noisy: return "noisy";
  }
  return "?";
}

inline constexpr double kNoiseFree = std::numeric_limits<double>::infinity();

/// One experiment family run. Zero-valued or empty fields take the family
/// defaults in resolve().
struct ExperimentSpec {
  Family family = Family::Phase;
  std::vector<Index> m;    ///< dictionary rows, one per configuration
  std::vector<Index> k;    ///< atoms, one per configuration
  std::vector<Index> s;    ///< phase: sparsity grid; otherwise one per configuration
  std::vector<Index> n;    ///< sample-count grid
  std::vector<double> snr_db;  ///< noisy family only; kNoiseFree allowed
  std::optional<long> trials;  ///< unset: 10, or 100 at full scale
  std::uint64_t base_seed = 1;
  std::vector<Engine> engines;
  double rho = 0.0;
  long romd_iters = 0;      ///< outer iterations with the ROMD engine
  long baseline_iters = 0;  ///< outer iterations with MOD / K-SVD
  long admm_iters = 300;
  bool full_scale = false;
  unsigned threads = 1;
  std::string out;
  std::string dump_dir;  ///< optional instance dumps
};

struct Cell {
  Index m = 0, k = 0, s = 0, n = 0;
  double snr_db = kNoiseFree;
};

struct ResultRow {
  bool mean = false;
  Family family = Family::Phase;
  Index m = 0, k = 0, s = 0, n = 0;
  double snr_db = kNoiseFree;
  std::string engine;
  long trial = -1;
  std::uint64_t seed = 0;
  long iteration = 0;
  double error = std::numeric_limits<double>::quiet_NaN();
  double fit_residual = std::numeric_limits<double>::quiet_NaN();
  double inner_iters = 0.0;
  std::string status = "ok";
  std::string message;
  double wall_seconds = 0.0;  ///< kept out of the main table
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<std::string> warnings;
  long failed_trials = 0;
  long reused_trials = 0;
  long computed_trials = 0;
};

namespace harness_detail {

inline std::vector<Index> lattice(double lo, double hi, int count) {
  std::vector<Index> out;
  for (int i = 0; i < count; ++i) {
    const double v = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
    out.push_back(static_cast<Index>(std::lround(v)));
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<Index> range(Index lo, Index hi, Index step) {
  std::vector<Index> out;
  for (Index v = lo; v <= hi; v += step) out.push_back(v);
  return out;
}

}  // namespace harness_detail

/// Fills family defaults and checks the spec. Throws ValidationError.
inline ExperimentSpec resolve(ExperimentSpec spec, std::vector<std::string>* warnings = nullptr) {
  using harness_detail::lattice;
  using harness_detail::range;
  const bool full = spec.full_scale;
  if (spec.m.empty()) spec.m = {16};
  if (spec.k.empty()) spec.k = {32};
  if (spec.engines.empty()) spec.engines = {Engine::ROMD, Engine::KSVD, Engine::MOD};
  if (!spec.trials) spec.trials = full ? 100 : 10;
  if (spec.threads == 0) spec.threads = 1;

  switch (spec.family) {
    case Family::Phase: {
      const double M = static_cast<double>(spec.m.front());
      // S/M from 1/16 to 3/4 and N/M from 4 to 20.
      if (spec.s.empty()) spec.s = full ? range(1, static_cast<Index>(std::lround(0.75 * M)), 1)
                                        : lattice(M / 16.0, 0.75 * M, 6);
      if (spec.n.empty()) spec.n = full ? range(4 * spec.m.front(), 20 * spec.m.front(), spec.m.front())
                                        : lattice(4 * M, 20 * M, 5);
      if (spec.rho == 0.0) spec.rho = 0.8;
      if (spec.baseline_iters == 0) spec.baseline_iters = 100;
      if (spec.romd_iters == 0) spec.romd_iters = 1;
      break;
    }
    case Family::Curve:
      if (spec.s.empty()) spec.s = {3};
      if (spec.n.empty()) spec.n = {200};
      if (spec.rho == 0.0) spec.rho = 0.8;
      if (spec.romd_iters == 0) spec.romd_iters = 150;
      if (spec.baseline_iters == 0) spec.baseline_iters = 150;
      break;
    case Family::SweepN:
    case Family::Noisy:
      if (spec.family == Family::SweepN && spec.m.size() == 1 && spec.k.size() == 1 && spec.s.empty() && full) {
        spec.m = {16, 24};
        spec.k = {32, 48};
        spec.s = {3, 6};
      }
      if (spec.s.empty()) spec.s = {3};
      if (spec.n.empty()) spec.n = full ? range(25, 400, 25) : std::vector<Index>{50, 100, 150, 200, 250, 300};
      if (spec.family == Family::Noisy && spec.snr_db.empty()) spec.snr_db = {30.0, 20.0};
      // rho == 0 here means "family default", applied per cell (see cell_rho).
      if (spec.romd_iters == 0) spec.romd_iters = 50;
      if (spec.baseline_iters == 0) spec.baseline_iters = 500;
      break;
  }

  if (*spec.trials < 1) throw ValidationError("trials must be >= 1");
  if (spec.romd_iters < 1 || spec.baseline_iters < 1 || spec.admm_iters < 1)
    throw ValidationError("iteration budgets must be >= 1");
  if (spec.rho < 0.0 || !std::isfinite(spec.rho)) throw ValidationError("rho must be positive");
  if (spec.out.empty()) throw ValidationError("an output path is required");

  std::vector<Index> dedup;
  for (Index v : spec.n) {
    if (std::find(dedup.begin(), dedup.end(), v) != dedup.end()) {
      if (warnings) warnings->push_back("duplicate N=" + std::to_string(v) + " removed from grid");
      continue;
    }
    dedup.push_back(v);
  }
  spec.n = std::move(dedup);
  if (spec.n.empty()) throw ValidationError("N grid is empty");
  for (Index v : spec.n)
    if (v < 1) throw ValidationError("N must be >= 1");

  if (spec.family == Family::Phase) {
    if (spec.s.empty()) throw ValidationError("S grid is empty");
    spec.m.resize(1);
    spec.k.resize(1);
  } else {
    const std::size_t configs = std::max({spec.m.size(), spec.k.size(), spec.s.size()});
    auto broadcast = [&](std::vector<Index>& v, const char* name) {
      if (v.size() == 1) v.resize(configs, v.front());
      if (v.size() != configs)
        throw ValidationError(std::string("--") + name + " must have 1 or " + std::to_string(configs) + " entries");
    };
    broadcast(spec.m, "m");
    broadcast(spec.k, "k");
    broadcast(spec.s, "s");
  }
  for (std::size_t c = 0; c < spec.m.size(); ++c) {
    if (spec.m[c] < 1 || spec.k[c] < 1) throw ValidationError("M and K must be >= 1");
  }
  for (std::size_t c = 0; c < spec.s.size(); ++c) {
    const Index mm = spec.family == Family::Phase ? spec.m.front() : spec.m[c];
    const Index kk = spec.family == Family::Phase ? spec.k.front() : spec.k[c];
    if (spec.s[c] < 1 || spec.s[c] > std::min(mm, kk))
      throw ValidationError("S=" + std::to_string(spec.s[c]) + " outside [1, min(M, K)]");
  }
  if (spec.family == Family::Noisy) {
    if (spec.snr_db.empty()) throw ValidationError("SNR list is empty");
    for (double v : spec.snr_db)
      if (std::isnan(v) || v == -kNoiseFree) throw ValidationError("SNR must be a number or inf");
  } else {
    spec.snr_db = {kNoiseFree};
  }
  return spec;
}

/// Penalty parameter for one cell: an explicit rho wins; otherwise 0.02 for
/// noisy cells and 0.8 for noise-free ones.
inline double cell_rho(const ExperimentSpec& spec, const Cell& cell) {
  if (spec.rho > 0.0) return spec.rho;
  return std::isinf(cell.snr_db) ? 0.8 : 0.02;
}

inline std::vector<Cell> enumerate_cells(const ExperimentSpec& spec) {
  std::vector<Cell> cells;
  if (spec.family == Family::Phase) {
    for (Index s : spec.s)
      for (Index n : spec.n) cells.push_back({spec.m.front(), spec.k.front(), s, n, kNoiseFree});
    return cells;
  }
  for (std::size_t c = 0; c < spec.m.size(); ++c)
    for (double snr : spec.snr_db)
      for (Index n : spec.n) cells.push_back({spec.m[c], spec.k[c], spec.s[c], n, snr});
  return cells;
}

/// Seed of trial t in a cell. Sweep and noisy runs share one stream so the
/// same (M, K, S, N, trial) sees the same ground truth in both; the SNR only
/// enters the noise draw.
inline std::uint64_t trial_seed(const ExperimentSpec& spec, const Cell& cell, long trial) {
  const std::string_view group = spec.family == Family::Phase   ? "phase"
                                 : spec.family == Family::Curve ? "curve"
                                                                : "learning";
  return CounterRng(spec.base_seed)
      .split(tag_of(group), static_cast<std::uint64_t>(cell.m), static_cast<std::uint64_t>(cell.k),
             static_cast<std::uint64_t>(cell.s), static_cast<std::uint64_t>(cell.n),
             static_cast<std::uint64_t>(trial))
      .key();
}

// ---------------------------------------------------------------- CSV

namespace harness_detail {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return kNoiseFree;
  if (s == "-inf") return -kNoiseFree;
  return std::stod(s);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Splits one RFC-4180 record (no embedded line breaks).
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline Family parse_family(const std::string& s) {
  if (s == "phase") return Family::Phase;
  if (s == "curve") return Family::Curve;
  if (s == "sweep_n") return Family::SweepN;
  if (s == "noisy") return Family::Noisy;
  throw Error("unknown family '" + s + "'");
}

}  // namespace harness_detail

inline constexpr const char* kCsvHeader =
    "row_type,family,m,k,s,n,snr_db,engine,trial,seed,iteration,error,fit_residual,inner_iters,status,message";

inline std::string to_csv(const ResultTable& table) {
  using namespace harness_detail;
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (const auto& r : table.rows) {
    os << (r.mean ? "mean" : "trial") << ',' << to_string(r.family) << ',' << r.m << ',' << r.k << ','
       << r.s << ',' << r.n << ',' << fmt_double(r.snr_db) << ',' << csv_field(r.engine) << ','
       << (r.mean ? "" : std::to_string(r.trial)) << ',' << (r.mean ? "" : std::to_string(r.seed)) << ','
       << r.iteration << ',' << fmt_double(r.error) << ',' << fmt_double(r.fit_residual) << ','
       << fmt_double(r.inner_iters) << ',' << csv_field(r.status) << ',' << csv_field(r.message) << "\n";
  }
  return os.str();
}

inline std::vector<ResultRow> parse_csv(std::istream& is) {
  using namespace harness_detail;
  std::vector<ResultRow> rows;
  std::string line;
  if (!std::getline(is, line)) return rows;
  if (line != kCsvHeader) throw Error("result table: unexpected header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 16) throw Error("result table: malformed row");
    ResultRow r;
    r.mean = f[0] == "mean";
    r.family = parse_family(f[1]);
    r.m = std::stol(f[2]);
    r.k = std::stol(f[3]);
    r.s = std::stol(f[4]);
    r.n = std::stol(f[5]);
    r.snr_db = parse_double(f[6]);
    r.engine = f[7];
    r.trial = f[8].empty() ? -1 : std::stol(f[8]);
    r.seed = f[9].empty() ? 0 : std::stoull(f[9]);
    r.iteration = std::stol(f[10]);
    r.error = parse_double(f[11]);
    r.fit_residual = parse_double(f[12]);
    r.inner_iters = parse_double(f[13]);
    r.status = f[14];
    r.message = f[15];
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string spec_json(const ExperimentSpec& spec) {
  nlohmann::ordered_json j;
  j["family"] = std::string(to_string(spec.family));
  j["m"] = spec.m;
  j["k"] = spec.k;
  j["s"] = spec.s;
  j["n"] = spec.n;
  std::vector<std::string> snr;
  for (double v : spec.snr_db) snr.push_back(harness_detail::fmt_double(v));
  j["snr_db"] = snr;
  j["trials"] = *spec.trials;
  j["base_seed"] = spec.base_seed;
  std::vector<std::string> engines;
  for (Engine e : spec.engines) engines.emplace_back(to_string(e));
  j["engines"] = engines;
  j["rho"] = spec.rho > 0.0 ? nlohmann::ordered_json(spec.rho) : nlohmann::ordered_json("family-default");
  j["romd_iters"] = spec.romd_iters;
  j["baseline_iters"] = spec.baseline_iters;
  j["admm_iters"] = spec.admm_iters;
  j["full_scale"] = spec.full_scale;
  j["rng"] = std::string(CounterRng::kName);
  j["library_version"] = kVersion;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- trials

namespace harness_detail {

struct Unit {
  std::size_t cell = 0;
  Engine engine = Engine::ROMD;
  long trial = 0;
  std::uint64_t seed = 0;
};

inline ResultRow base_row(const ExperimentSpec& spec, const Cell& c, const Unit& u) {
  ResultRow r;
  r.family = spec.family;
  r.m = c.m;
  r.k = c.k;
  r.s = c.s;
  r.n = c.n;
  r.snr_db = c.snr_db;
  r.engine = std::string(to_string(u.engine));
  r.trial = u.trial;
  r.seed = u.seed;
  return r;
}

inline ProblemInstance make_instance(const Cell& c, std::uint64_t seed) {
  ProblemInstance inst = gen_instance(c.m, c.k, c.n, c.s, seed);
  if (!std::isinf(c.snr_db)) {
    const std::uint64_t noise_seed =
        CounterRng(seed).split(tag_of("noise"), static_cast<std::uint64_t>(std::llround(c.snr_db * 1000.0))).key();
    inst = add_noise(inst, c.snr_db, noise_seed);
  }
  return inst;
}

/// Dictionary update only, on the ground-truth supports.
inline ResultRow run_phase_unit(const ExperimentSpec& spec, const Cell& c, const Unit& u) {
  ResultRow row = base_row(spec, c, u);
  const ProblemInstance inst = make_instance(c, u.seed);
  auto pattern = std::make_shared<const SupportPattern>(supports_from_coeffs(inst.X_true));
  if (u.engine == Engine::ROMD) {
    AdmmConfig cfg;
    cfg.rho = cell_rho(spec, c);
    cfg.max_admm_iter = spec.admm_iters;
    DictUpdateOptions opts;
    opts.seed = CounterRng(u.seed).split(tag_of("engine")).key();
    const DictUpdateResult r = romd_dict_update(inst.Y, pattern, cfg, opts);
    row.iteration = 1;
    row.inner_iters = static_cast<double>(r.admm_iters);
    row.error = recovery_error(r.D, inst.D_true).error;
    row.fit_residual = relative_fit(inst.Y, r.D, r.X);
    return row;
  }
  Matrix D = init_dictionary(inst.Y, c.k, InitPolicy::DataColumns, CounterRng(u.seed).split(tag_of("init")).key());
  Matrix X;
  const CounterRng engine_rng = CounterRng(u.seed).split(tag_of("engine"));
  for (long it = 1; it <= spec.baseline_iters; ++it) {
    X = refit_on_support(inst.Y, D, *pattern);
    if (u.engine == Engine::MOD) {
      ModResult r = mod_update(inst.Y, X, engine_rng.split(static_cast<std::uint64_t>(it)).key());
      D = std::move(r.D);
      X = std::move(r.X);
    } else {
      KsvdResult r = ksvd_update(inst.Y, D, X, *pattern);
      D = std::move(r.D);
      X = std::move(r.X);
    }
  }
  row.iteration = spec.baseline_iters;
  row.error = recovery_error(D, inst.D_true).error;
  row.fit_residual = relative_fit(inst.Y, D, X);
  return row;
}

/// Whole learning loop; curve runs keep one row per outer iteration.
inline std::vector<ResultRow> run_learning_unit(const ExperimentSpec& spec, const Cell& c, const Unit& u) {
  const ProblemInstance inst = make_instance(c, u.seed);
  if (!spec.dump_dir.empty()) {
    std::filesystem::create_directories(spec.dump_dir);
    write_instance(inst, spec.dump_dir + "/" + std::string(to_string(spec.family)) + "_" + std::to_string(u.seed));
  }
  const Matrix D0 = init_dictionary(inst.Y, c.k, InitPolicy::DataColumns, CounterRng(u.seed).split(tag_of("init")).key());
  LearnConfig cfg;
  cfg.engine = u.engine;
  cfg.max_outer_iter = u.engine == Engine::ROMD ? spec.romd_iters : spec.baseline_iters;
  cfg.omp.sparsity = c.s;
  cfg.admm.rho = cell_rho(spec, c);
  cfg.admm.max_admm_iter = spec.admm_iters;
  cfg.admm.noise_radius = inst.noise_norm;
  cfg.seed = CounterRng(u.seed).split(tag_of("engine")).key();
  const LearnTrace trace = learn(inst.Y, D0, cfg, &inst.D_true);

  std::vector<ResultRow> rows;
  if (spec.family == Family::Curve) {
    for (const auto& rec : trace.records) {
      ResultRow r = base_row(spec, c, u);
      r.iteration = rec.iteration;
      r.error = rec.recovery_error;
      r.fit_residual = rec.fit_residual;
      r.inner_iters = static_cast<double>(rec.admm_iters);
      r.wall_seconds = rec.wall_seconds;
      rows.push_back(std::move(r));
    }
  } else {
    ResultRow r = base_row(spec, c, u);
    r.iteration = static_cast<long>(trace.records.size());
    if (!trace.records.empty()) {
      r.error = trace.records.back().recovery_error;
      r.fit_residual = trace.records.back().fit_residual;
    }
    for (const auto& rec : trace.records) {
      r.inner_iters += static_cast<double>(rec.admm_iters);
      r.wall_seconds += rec.wall_seconds;
    }
    rows.push_back(std::move(r));
  }
  if (trace.failure) {
    // Curve traces gain a marker row; final-only families keep one row per trial.
    if (spec.family == Family::Curve || rows.empty()) rows.push_back(base_row(spec, c, u));
    ResultRow& r = rows.back();
    r.iteration = trace.failed_iteration;
    r.status = "failed";
    r.message = *trace.failure;
  }
  return rows;
}

inline std::vector<ResultRow> run_unit(const ExperimentSpec& spec, const Cell& c, const Unit& u) {
  const auto start = std::chrono::steady_clock::now();
  try {
    std::vector<ResultRow> rows;
    if (spec.family == Family::Phase) {
      rows.push_back(run_phase_unit(spec, c, u));
      rows.back().wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    } else {
      rows = run_learning_unit(spec, c, u);
    }
    return rows;
  } catch (const std::exception& e) {
    ResultRow r = base_row(spec, c, u);
    r.status = "failed";
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    r.message = msg;
    return {r};
  }
}

using GroupKey = std::tuple<Index, Index, Index, Index, std::string, std::string>;

inline GroupKey group_key(const ResultRow& r) {
  return {r.m, r.k, r.s, r.n, fmt_double(r.snr_db), r.engine};
}

inline ResultRow mean_row(const std::vector<const ResultRow*>& members) {
  ResultRow m = *members.front();
  m.mean = true;
  m.trial = -1;
  m.seed = 0;
  m.message.clear();
  double err = 0.0, fit = 0.0, inner = 0.0;
  long ok = 0;
  for (const ResultRow* r : members) {
    if (r->status != "ok" || std::isnan(r->error)) continue;
    err += r->error;
    fit += r->fit_residual;
    inner += r->inner_iters;
    ++ok;
  }
  const long total = static_cast<long>(members.size());
  m.error = ok ? err / static_cast<double>(ok) : std::numeric_limits<double>::quiet_NaN();
  m.fit_residual = ok ? fit / static_cast<double>(ok) : std::numeric_limits<double>::quiet_NaN();
  m.inner_iters = ok ? inner / static_cast<double>(ok) : 0.0;
  m.status = ok == total ? "ok" : "partial " + std::to_string(ok) + "/" + std::to_string(total);
  return m;
}

}  // namespace harness_detail

/// Runs every (cell, engine, trial) of a resolved spec. Trials already present
/// in `previous` with the expected seed are reused instead of recomputed.
/// Output order is fixed by the spec, independent of the thread count.
inline ResultTable run_experiment(const ExperimentSpec& spec, const std::vector<ResultRow>& previous = {}) {
  using namespace harness_detail;
  const std::vector<Cell> cells = enumerate_cells(spec);

  std::vector<Unit> units;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (Engine e : spec.engines)
      for (long t = 0; t < *spec.trials; ++t) units.push_back({c, e, t, trial_seed(spec, cells[c], t)});

  // Previous trial rows by (cell, engine, trial, seed).
  std::map<std::tuple<GroupKey, long, std::uint64_t>, std::vector<ResultRow>> cached;
  for (const auto& r : previous)
    if (!r.mean && r.family == spec.family) cached[{group_key(r), r.trial, r.seed}].push_back(r);

  auto expected_rows = [&](const Unit& u) -> std::size_t {
    return spec.family == Family::Curve
               ? static_cast<std::size_t>(u.engine == Engine::ROMD ? spec.romd_iters : spec.baseline_iters)
               : 1;
  };

  ResultTable table;
  std::vector<std::vector<ResultRow>> results(units.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < units.size(); ++i) {
    ResultRow probe = base_row(spec, cells[units[i].cell], units[i]);
    auto it = cached.find({group_key(probe), units[i].trial, units[i].seed});
    if (it != cached.end()) {
      const auto& rows = it->second;
      const bool failed = std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.status != "ok"; });
      if (failed || rows.size() == expected_rows(units[i])) {
        results[i] = rows;
        ++table.reused_trials;
        continue;
      }
    }
    todo.push_back(i);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= todo.size()) return;
      const Unit& u = units[todo[j]];
      results[todo[j]] = run_unit(spec, cells[u.cell], u);
    }
  };
  const unsigned nthreads = std::max(1u, std::min<unsigned>(spec.threads, static_cast<unsigned>(todo.size())));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  table.computed_trials = static_cast<long>(todo.size());

  // Trial rows in unit order, each (cell, engine) group followed by its means.
  std::size_t i = 0;
  while (i < units.size()) {
    std::size_t j = i;
    while (j < units.size() && units[j].cell == units[i].cell && units[j].engine == units[i].engine) ++j;
    std::map<long, std::vector<const ResultRow*>> by_iteration;
    std::vector<const ResultRow*> finals;
    for (std::size_t u = i; u < j; ++u) {
      bool failed = false;
      for (const auto& r : results[u]) {
        table.rows.push_back(r);
        if (r.status != "ok") failed = true;
      }
      if (failed) ++table.failed_trials;
    }
    for (std::size_t u = i; u < j; ++u) {
      for (const auto& r : results[u]) {
        if (spec.family == Family::Curve) {
          if (r.status == "ok") by_iteration[r.iteration].push_back(&r);
        } else {
          finals.push_back(&r);
        }
      }
    }
    if (spec.family == Family::Curve) {
      for (const auto& [iter, members] : by_iteration) table.rows.push_back(mean_row(members));
    } else if (!finals.empty()) {
      table.rows.push_back(mean_row(finals));
    }
    i = j;
  }
  return table;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("cannot write " + tmp);
    os << text;
  }
  std::filesystem::rename(tmp, path);
}

/// Resolves the spec, resumes from an existing table at spec.out, runs the
/// remaining trials, and writes <out>, <out>.json and <out>.timing.csv.
inline ResultTable run_family(ExperimentSpec spec, std::ostream* log = nullptr) {
  std::vector<std::string> warnings;
  spec = resolve(std::move(spec), &warnings);
  for (const auto& w : warnings)
    if (log) *log << "warning: " << w << "\n";

  std::vector<ResultRow> previous;
  if (std::filesystem::exists(spec.out)) {
    std::ifstream is(spec.out);
    try {
      previous = parse_csv(is);
    } catch (const Error& e) {
      if (log) *log << "warning: ignoring existing table: " << e.what() << "\n";
      previous.clear();
    }
  }
  ResultTable table = run_experiment(spec, previous);
  table.warnings.insert(table.warnings.begin(), warnings.begin(), warnings.end());

  write_text_file(spec.out, to_csv(table));
  write_text_file(spec.out + ".json", spec_json(spec));
  std::ostringstream timing;
  timing << "family,m,k,s,n,snr_db,engine,trial,iteration,wall_seconds\n";
  for (const auto& r : table.rows) {
    if (r.mean) continue;
    timing << to_string(r.family) << ',' << r.m << ',' << r.k << ',' << r.s << ',' << r.n << ','
           << harness_detail::fmt_double(r.snr_db) << ',' << r.engine << ',' << r.trial << ',' << r.iteration
           << ',' << harness_detail::fmt_double(r.wall_seconds) << "\n";
  }
  write_text_file(spec.out + ".timing.csv", timing.str());
  if (log) {
    *log << to_string(spec.family) << ": " << table.computed_trials << " trials run, " << table.reused_trials
         << " reused, " << table.failed_trials << " failed -> " << spec.out << "\n";
  }
  return table;
}

inline ResultTable run_phase(ExperimentSpec spec, std::ostream* log = nullptr) {
  spec.family = Family::Phase;
  return run_family(std::move(spec), log);
}
inline ResultTable run_curve(ExperimentSpec spec, std::ostream* log = nullptr) {
  spec.family = Family::Curve;
  return run_family(std::move(spec), log);
}
inline ResultTable run_sweep_n(ExperimentSpec spec, std::ostream* log = nullptr) {
  spec.family = Family::SweepN;
  return run_family(std::move(spec), log);
}
inline ResultTable run_noisy(ExperimentSpec spec, std::ostream* log = nullptr) {
  spec.family = Family::Noisy;
  return run_family(std::move(spec), log);
}

}  // namespace romd

#endif  // ROMD_HARNESS_HPP
