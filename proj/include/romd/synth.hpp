#ifndef ROMD_SYNTH_HPP
#define ROMD_SYNTH_HPP

#include "romd/linalg.hpp"
#include "romd/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace romd {

struct ProblemInstance {
  Matrix D_true;   ///< M x K, unit columns
  Matrix X_true;   ///< K x N, exactly S nonzeros per column
  Matrix Y_clean;  ///< D_true * X_true
  Matrix Y;        ///< observations (Y_clean plus noise)
  double noise_norm = 0.0;
  std::uint64_t seed = 0;
  Index sparsity = 0;
};

/// Ground truth for one trial. Draw order from CounterRng(seed):
///   stream split(1): D entries, column-major, standard normal; columns then
///                    scaled to unit norm (redrawn if all zero)
///   stream split(2): per column n, a uniform S-subset of [K] by partial
///                    Fisher-Yates (swap position i with i + index(K - i)),
///                    then S standard normal values in subset order
inline ProblemInstance gen_instance(Index M, Index K, Index N, Index S, std::uint64_t seed) {
  if (M < 1 || K < 1 || N < 1 || S < 1 || S > std::min(M, K)) {
    throw Error("gen_instance: need M, K, N >= 1 and 1 <= S <= min(M, K); got M=" +
                std::to_string(M) + " K=" + std::to_string(K) + " N=" + std::to_string(N) +
                " S=" + std::to_string(S));
  }
  const CounterRng root(seed);
  ProblemInstance inst;
  inst.seed = seed;
  inst.sparsity = S;

  CounterRng dict_rng = root.split(1);
  inst.D_true.resize(M, K);
  for (Index k = 0; k < K; ++k) {
    double n = 0.0;
    while (n == 0.0) {
      for (Index i = 0; i < M; ++i) inst.D_true(i, k) = dict_rng.normal();
      n = inst.D_true.col(k).norm();
    }
    inst.D_true.col(k) /= n;
  }

  CounterRng coef_rng = root.split(2);
  inst.X_true = Matrix::Zero(K, N);
  std::vector<Index> perm(static_cast<std::size_t>(K));
  for (Index n = 0; n < N; ++n) {
    for (Index k = 0; k < K; ++k) perm[static_cast<std::size_t>(k)] = k;
    for (Index i = 0; i < S; ++i) {
      const auto j = i + static_cast<Index>(coef_rng.index(static_cast<std::uint64_t>(K - i)));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    for (Index i = 0; i < S; ++i) {
      double v = 0.0;
      while (v == 0.0) v = coef_rng.normal();
      inst.X_true(perm[static_cast<std::size_t>(i)], n) = v;
    }
  }
  inst.Y_clean = inst.D_true * inst.X_true;
  inst.Y = inst.Y_clean;
  return inst;
}

/// Adds i.i.d. Gaussian noise rescaled so that
/// 10 log10(||Y_clean||^2 / ||E||^2) equals snr_db exactly. An infinite
/// snr_db leaves the instance noise-free.
inline ProblemInstance add_noise(const ProblemInstance& inst, double snr_db, std::uint64_t seed) {
  if (std::isnan(snr_db)) throw Error("add_noise: snr_db is NaN");
  ProblemInstance out = inst;
  if (std::isinf(snr_db)) {
    if (snr_db < 0) throw Error("add_noise: snr_db must not be -inf");
    out.Y = out.Y_clean;
    out.noise_norm = 0.0;
    return out;
  }
  CounterRng rng(seed);
  Matrix e(inst.Y_clean.rows(), inst.Y_clean.cols());
  double en = 0.0;
  while (en == 0.0) {
    for (Index j = 0; j < e.cols(); ++j)
      for (Index i = 0; i < e.rows(); ++i) e(i, j) = rng.normal();
    en = e.norm();
  }
  const double target = inst.Y_clean.norm() * std::pow(10.0, -snr_db / 20.0);
  e *= target / en;
  out.Y = inst.Y_clean + e;
  out.noise_norm = e.norm();
  return out;
}

/// Realized SNR of an instance in dB.
inline double realized_snr_db(const ProblemInstance& inst) {
  const double en = (inst.Y - inst.Y_clean).norm();
  if (en == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(inst.Y_clean.norm() / en);
}

// Instance dump format, "<stem>.bin" plus "<stem>.csv".
//
// .bin: magic "ROMDINST", uint32 version (1), uint32 reserved (0), then four
//       matrices D_true, X_true, Y_clean, Y, each as int64 rows, int64 cols and
//       rows*cols float64 in column-major order. All little-endian.
// .csv: header "key,value" then rows m, k, n, s, seed, noise_norm, rng.

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("instance dump: truncated file");
  return v;
}

inline void write_matrix(std::ostream& os, const Matrix& m) {
  write_le<std::int64_t>(os, m.rows());
  write_le<std::int64_t>(os, m.cols());
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

inline Matrix read_matrix(std::istream& is) {
  const auto rows = read_le<std::int64_t>(is);
  const auto cols = read_le<std::int64_t>(is);
  if (rows < 0 || cols < 0 || rows > (1 << 24) || cols > (1 << 24)) throw Error("instance dump: bad shape");
  Matrix m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  if (!is) throw Error("instance dump: truncated matrix");
  return m;
}

}  // namespace detail

inline void write_instance(const ProblemInstance& inst, const std::string& stem) {
  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw Error("write_instance: cannot open " + stem + ".bin");
  bin.write("ROMDINST", 8);
  detail::write_le<std::uint32_t>(bin, 1);
  detail::write_le<std::uint32_t>(bin, 0);
  for (const Matrix* m : {&inst.D_true, &inst.X_true, &inst.Y_clean, &inst.Y}) detail::write_matrix(bin, *m);

  std::ofstream csv(stem + ".csv");
  if (!csv) throw Error("write_instance: cannot open " + stem + ".csv");
  csv << "key,value\n"
      << "m," << inst.D_true.rows() << "\n"
      << "k," << inst.D_true.cols() << "\n"
      << "n," << inst.X_true.cols() << "\n"
      << "s," << inst.sparsity << "\n"
      << "seed," << inst.seed << "\n"
      << "noise_norm," << std::setprecision(17) << inst.noise_norm << "\n"
      << "rng," << CounterRng::kName << "\n";
}

inline ProblemInstance read_instance(const std::string& stem) {
  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw Error("read_instance: cannot open " + stem + ".bin");
  char magic[8];
  bin.read(magic, 8);
  if (!bin || std::memcmp(magic, "ROMDINST", 8) != 0) throw Error("read_instance: bad magic");
  if (detail::read_le<std::uint32_t>(bin) != 1) throw Error("read_instance: unsupported version");
  detail::read_le<std::uint32_t>(bin);
  ProblemInstance inst;
  inst.D_true = detail::read_matrix(bin);
  inst.X_true = detail::read_matrix(bin);
  inst.Y_clean = detail::read_matrix(bin);
  inst.Y = detail::read_matrix(bin);

  std::ifstream csv(stem + ".csv");
  if (!csv) throw Error("read_instance: cannot open " + stem + ".csv");
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    const std::string key = line.substr(0, comma);
    const std::string value = line.substr(comma + 1);
    if (key == "s") inst.sparsity = std::stol(value);
    else if (key == "seed") inst.seed = std::stoull(value);
    else if (key == "noise_norm") inst.noise_norm = std::stod(value);
  }
  return inst;
}

}  // namespace romd

#endif  // ROMD_SYNTH_HPP
