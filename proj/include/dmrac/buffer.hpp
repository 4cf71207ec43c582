#pragma once

#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <vector>

#include "dmrac/core_math.hpp"

namespace dmrac::buffer {

struct Entry {
  Vector x;
  Vector y;
  Vector phi;
  std::uint64_t tick = 0;
};

/// Qualified training data: kernel-independence admission on the feature
/// vectors and eviction that keeps the stored feature matrix well conditioned.
class ReplayBuffer {
 public:
  static constexpr double kDenominatorFloor = 1e-9;

  ReplayBuffer(std::size_t capacity, double zeta_tol);

  /// min_i ||phi - phi_i|| / max(||phi||, 1e-9); +inf when empty.
  double gamma(const Vector& phi) const;

  /// Admits when gamma(phi) >= zeta_tol, evicting first when full.
  bool insert_if_novel(const Vector& x, const Vector& y, const Vector& phi, std::uint64_t tick);

  /// Removes the entry whose deletion maximizes sigma_min of the remaining
  /// feature matrix (ties: oldest tick). Requires a full buffer.
  std::size_t evict_svd_max();

  struct Sample {
    Matrix inputs;   // n x M
    Matrix targets;  // m x M
    std::vector<std::size_t> indices;
  };

  /// M distinct entries drawn uniformly; throws InsufficientData when M > size.
  Sample sample_minibatch(std::size_t m, std::mt19937_64& rng) const;

  /// Columns tick, x[0..n), y[0..m), phi[0..k).
  void write_csv(std::ostream& out) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  double zeta_tol() const { return zeta_tol_; }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }
  /// Stored feature matrix, one row per entry.
  const Matrix& feature_matrix() const { return features_; }

 private:
  void rebuild_features();

  std::size_t capacity_;
  double zeta_tol_;
  std::vector<Entry> entries_;
  Matrix features_;
};

/// sigma_min of `features` with row `skip` removed; uses the k x k Gram
/// downdate when enough rows remain.
double sigma_min_without(const Matrix& features, const Matrix& gram, Eigen::Index skip);

}  // namespace dmrac::buffer
