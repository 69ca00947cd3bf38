#pragma once

// Local characteristic statistics: moments, feature/label cross-covariance
// and principal-component loadings.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedstat/tensor.hpp"

namespace fedstat {

struct ClientShard;

enum class StatsKind { CrossCovariance, PrincipalComponents, Moments, DummyZeros, DummyGlobalPC };

/// How a client turns its training rows into a statistics vector. All
/// clients of one experiment share a recipe.
struct StatsRecipe {
  StatsKind kind = StatsKind::CrossCovariance;
  std::size_t components = 1;  // PrincipalComponents / DummyGlobalPC
  std::size_t length = 0;      // DummyZeros
  /// Precomputed pooled loadings for DummyGlobalPC.
  std::vector<double> global_mu;

  static StatsRecipe cross_covariance() { return {}; }
  static StatsRecipe principal_components(std::size_t k) {
    return {StatsKind::PrincipalComponents, k, 0, {}};
  }
  static StatsRecipe moments() { return {StatsKind::Moments, 0, 0, {}}; }
  static StatsRecipe dummy_zeros(std::size_t length) {
    return {StatsKind::DummyZeros, 0, length, {}};
  }
  static StatsRecipe dummy_global_pc(std::vector<double> pooled) {
    return {StatsKind::DummyGlobalPC, 0, pooled.size(), std::move(pooled)};
  }
};

std::string to_string(StatsKind kind);

struct LocalStats {
  std::vector<double> mu;
  StatsKind descriptor = StatsKind::CrossCovariance;
  std::size_t components = 0;

  bool operator==(const LocalStats& other) const = default;
};

std::vector<double> mean_vector(const Tensor2& x);

/// Sample covariance with denominator n - 1.
Tensor2 covariance_matrix(const Tensor2& x);

struct HigherMoments {
  std::vector<double> skewness;
  std::vector<double> kurtosis;
  /// True for zero-variance columns, which report skew 0 and kurtosis 3.
  std::vector<bool> degenerate;
};

/// Standardized third and fourth central moments per column.
HigherMoments higher_moments(const Tensor2& x);

/// cov(x[:, j], y) for every column j, denominator n - 1.
std::vector<double> cross_covariance(const Tensor2& x, std::span<const double> y);

struct SymmetricEigen {
  std::vector<double> values;  // descending
  Tensor2 vectors;             // row i is the unit eigenvector for values[i]
  std::size_t sweeps = 0;
  double off_norm = 0.0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls to
/// `tol` times the Frobenius norm of the input, or `max_sweeps` elapse
/// (NumericError). Eigenvectors are not sign-normalized.
SymmetricEigen jacobi_eigen(const Tensor2& symmetric, double tol = 1e-12,
                            std::size_t max_sweeps = 100);

/// Flip `v` so its largest-magnitude entry (lowest index on ties) is positive.
void canonical_sign(std::span<double> v);

struct PrincipalComponents {
  Tensor2 loadings;  // k x d, unit rows, canonical sign
  std::vector<double> eigenvalues;
};

/// Top-k eigenvectors of covariance_matrix(d), largest eigenvalue first.
PrincipalComponents principal_components(const Tensor2& d, std::size_t k);

/// Rows used for PCA statistics: features (bias column dropped) followed by
/// a one-hot label block, or by the raw label when the shard is scalar.
Tensor2 joint_design(const ClientShard& shard);

/// Statistics of one client from its own training rows.
LocalStats client_stats(const ClientShard& shard, const StatsRecipe& recipe);

/// First `k` loadings of the pooled joint design of every shard,
/// concatenated. Used only for the DummyGlobalPC control.
std::vector<double> pooled_pc_stats(std::span<const ClientShard> shards, std::size_t k);

}  // namespace fedstat
