#ifndef ROMD_SUPPORT_HPP
#define ROMD_SUPPORT_HPP

#include "romd/linalg.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace romd {

/// Sparsity pattern of a K x N coefficient matrix, stored as the sorted list
/// of sample indices used by each atom.
class SupportPattern {
 public:
  SupportPattern(Index num_samples, std::vector<std::vector<Index>> rows)
      : num_samples_(num_samples), rows_(std::move(rows)) {
    if (num_samples_ < 0) throw Error("SupportPattern: negative sample count");
    for (std::size_t k = 0; k < rows_.size(); ++k) {
      const auto& r = rows_[k];
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (r[j] < 0 || r[j] >= num_samples_) {
          throw Error("SupportPattern: index " + std::to_string(r[j]) +
                      " out of range in row " + std::to_string(k));
        }
        if (j > 0 && r[j] <= r[j - 1]) {
          throw Error("SupportPattern: row " + std::to_string(k) +
                      " is not strictly increasing");
        }
      }
    }
  }

  Index num_atoms() const { return static_cast<Index>(rows_.size()); }
  Index num_samples() const { return num_samples_; }

  const std::vector<Index>& row(Index k) const {
    check_atom(k);
    return rows_[static_cast<std::size_t>(k)];
  }
  Index count(Index k) const { return static_cast<Index>(row(k).size()); }

  Index total_count() const {
    Index s = 0;
    for (const auto& r : rows_) s += static_cast<Index>(r.size());
    return s;
  }

  /// Number of atoms whose support contains each sample.
  std::vector<Index> column_multiplicity() const {
    std::vector<Index> m(static_cast<std::size_t>(num_samples_), 0);
    for (const auto& r : rows_)
      for (Index n : r) ++m[static_cast<std::size_t>(n)];
    return m;
  }

  bool disjoint() const {
    for (Index c : column_multiplicity())
      if (c > 1) return false;
    return true;
  }

  void check_atom(Index k) const {
    if (k < 0 || k >= num_atoms()) {
      throw Error("atom index " + std::to_string(k) + " out of range [0, " +
                  std::to_string(num_atoms()) + ")");
    }
  }

  friend bool operator==(const SupportPattern&, const SupportPattern&) = default;

 private:
  Index num_samples_;
  std::vector<std::vector<Index>> rows_;
};

using PatternPtr = std::shared_ptr<const SupportPattern>;

/// Row k of the result lists the columns n with |X(k, n)| > zero_tol.
inline SupportPattern supports_from_coeffs(const Matrix& x, double zero_tol = 0.0) {
  std::vector<std::vector<Index>> rows(static_cast<std::size_t>(x.rows()));
  for (Index k = 0; k < x.rows(); ++k)
    for (Index n = 0; n < x.cols(); ++n)
      if (std::abs(x(k, n)) > zero_tol) rows[static_cast<std::size_t>(k)].push_back(n);
  return SupportPattern(x.cols(), std::move(rows));
}

/// P_k: the columns of an M x N matrix indexed by the support of atom k.
inline Matrix gather(const Matrix& a, Index k, const SupportPattern& pattern) {
  const auto& idx = pattern.row(k);
  if (a.cols() != pattern.num_samples()) {
    throw Error("gather: matrix has " + std::to_string(a.cols()) +
                " columns, pattern expects " +
                std::to_string(pattern.num_samples()));
  }
  Matrix out(a.rows(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Index>(j)) = a.col(idx[j]);
  return out;
}

/// target(:, Omega_k) += block. Adjoint of gather.
inline void scatter_add(Matrix& target, const Matrix& block, Index k,
                        const SupportPattern& pattern) {
  const auto& idx = pattern.row(k);
  if (target.cols() != pattern.num_samples() || block.rows() != target.rows() ||
      block.cols() != static_cast<Index>(idx.size())) {
    throw Error("scatter_add: shape mismatch for atom " + std::to_string(k));
  }
  for (std::size_t j = 0; j < idx.size(); ++j) target.col(idx[j]) += block.col(static_cast<Index>(j));
}

/// K blocks, block k of size M x n_k, aligned with one support pattern.
/// Doubles as a vector space for the CG and ADMM iterates.
class BlockSet {
 public:
  BlockSet(PatternPtr pattern, Index rows) : pattern_(std::move(pattern)), rows_(rows) {
    if (!pattern_) throw Error("BlockSet: null pattern");
    blocks_.reserve(static_cast<std::size_t>(pattern_->num_atoms()));
    for (Index k = 0; k < pattern_->num_atoms(); ++k)
      blocks_.emplace_back(Matrix::Zero(rows_, pattern_->count(k)));
  }

  static BlockSet zeros(PatternPtr pattern, Index rows) {
    return BlockSet(std::move(pattern), rows);
  }

  /// Blocks gathered from a full M x N matrix.
  static BlockSet from_full(PatternPtr pattern, const Matrix& a) {
    BlockSet out(pattern, a.rows());
    for (Index k = 0; k < pattern->num_atoms(); ++k) out[k] = gather(a, k, *pattern);
    return out;
  }

  /// Q_k = D(:, k) * X(k, Omega_k).
  static BlockSet from_factors(PatternPtr pattern, const Matrix& d, const Matrix& x) {
    if (d.cols() != pattern->num_atoms() || x.rows() != pattern->num_atoms() ||
        x.cols() != pattern->num_samples()) {
      throw Error("BlockSet::from_factors: dimension mismatch");
    }
    BlockSet out(pattern, d.rows());
    for (Index k = 0; k < pattern->num_atoms(); ++k) {
      const auto& idx = pattern->row(k);
      for (std::size_t j = 0; j < idx.size(); ++j)
        out[k].col(static_cast<Index>(j)) = d.col(k) * x(k, idx[j]);
    }
    return out;
  }

  const SupportPattern& pattern() const { return *pattern_; }
  const PatternPtr& pattern_ptr() const { return pattern_; }
  Index rows() const { return rows_; }
  Index size() const { return static_cast<Index>(blocks_.size()); }

  Matrix& operator[](Index k) { return blocks_[static_cast<std::size_t>(k)]; }
  const Matrix& operator[](Index k) const { return blocks_[static_cast<std::size_t>(k)]; }

  bool same_layout(const BlockSet& other) const {
    return rows_ == other.rows_ &&
           (pattern_ == other.pattern_ || *pattern_ == *other.pattern_);
  }

  double dot(const BlockSet& other) const {
    check_layout(other);
    double s = 0.0;
    for (std::size_t k = 0; k < blocks_.size(); ++k) s += frob_dot(blocks_[k], other.blocks_[k]);
    return s;
  }
  double squared_norm() const {
    double s = 0.0;
    for (const auto& b : blocks_) s += b.squaredNorm();
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  bool all_finite() const {
    for (const auto& b : blocks_)
      if (!b.allFinite()) return false;
    return true;
  }

  /// this += alpha * other
  BlockSet& axpy(double alpha, const BlockSet& other) {
    check_layout(other);
    for (std::size_t k = 0; k < blocks_.size(); ++k) blocks_[k] += alpha * other.blocks_[k];
    return *this;
  }
  /// this = other + beta * this
  BlockSet& xpby(const BlockSet& other, double beta) {
    check_layout(other);
    for (std::size_t k = 0; k < blocks_.size(); ++k)
      blocks_[k] = other.blocks_[k] + beta * blocks_[k];
    return *this;
  }
  BlockSet& operator+=(const BlockSet& other) { return axpy(1.0, other); }
  BlockSet& operator-=(const BlockSet& other) { return axpy(-1.0, other); }
  BlockSet& operator*=(double alpha) {
    for (auto& b : blocks_) b *= alpha;
    return *this;
  }

  friend BlockSet operator+(BlockSet a, const BlockSet& b) { return a += b; }
  friend BlockSet operator-(BlockSet a, const BlockSet& b) { return a -= b; }
  friend BlockSet operator*(double alpha, BlockSet a) { return a *= alpha; }

 private:
  void check_layout(const BlockSet& other) const {
    if (!same_layout(other)) throw Error("BlockSet: layout mismatch");
  }

  PatternPtr pattern_;
  Index rows_;
  std::vector<Matrix> blocks_;
};

/// sum_k P_k^*(Q_k), an M x N matrix.
inline Matrix sum_scatter(const BlockSet& q) {
  const auto& pattern = q.pattern();
  Matrix out = Matrix::Zero(q.rows(), pattern.num_samples());
  for (Index k = 0; k < q.size(); ++k) scatter_add(out, q[k], k, pattern);
  return out;
}

}  // namespace romd

#endif  // ROMD_SUPPORT_HPP
