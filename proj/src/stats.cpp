#include "fedstat/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedstat/errors.hpp"
#include "fedstat/numerics.hpp"
#include "fedstat/shard.hpp"

namespace fedstat {

std::string to_string(StatsKind kind) {
  switch (kind) {
    case StatsKind::CrossCovariance: return "cross_covariance";
    case StatsKind::PrincipalComponents: return "principal_components";
    case StatsKind::Moments: return "moments";
    case StatsKind::DummyZeros: return "dummy_zeros";
    case StatsKind::DummyGlobalPC: return "dummy_global_pc";
  }
  return "unknown";
}

std::vector<double> mean_vector(const Tensor2& x) {
  if (x.rows() == 0 || x.cols() == 0) throw ArgumentError("mean_vector: empty matrix");
  std::vector<double> mean(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += row[c];
  }
  for (double& m : mean) m /= static_cast<double>(x.rows());
  return mean;
}

Tensor2 covariance_matrix(const Tensor2& x) {
  if (x.rows() < 2) {
    throw ArgumentError("covariance_matrix: need at least 2 rows, got " +
                        std::to_string(x.rows()));
  }
  const auto mean = mean_vector(x);
  const std::size_t d = x.cols();
  Tensor2 cov(d, d);
  std::vector<double> centered(d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < d; ++c) centered[c] = row[c] - mean[c];
    for (std::size_t i = 0; i < d; ++i) {
      const double ci = centered[i];
      if (ci == 0.0) continue;
      auto out = cov.row(i);
      for (std::size_t j = i; j < d; ++j) out[j] += ci * centered[j];
    }
  }
  const double denom = static_cast<double>(x.rows() - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      cov(i, j) /= denom;
      cov(j, i) = cov(i, j);
    }
  }
  return cov;
}

HigherMoments higher_moments(const Tensor2& x) {
  if (x.rows() < 2) throw ArgumentError("higher_moments: need at least 2 rows");
  const auto mean = mean_vector(x);
  const double n = static_cast<double>(x.rows());
  HigherMoments out;
  out.skewness.assign(x.cols(), 0.0);
  out.kurtosis.assign(x.cols(), 3.0);
  out.degenerate.assign(x.cols(), false);
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double d = x(r, c) - mean[c];
      const double d2 = d * d;
      m2 += d2;
      m3 += d2 * d;
      m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const double scale = 1e-14 * std::max(1.0, std::abs(mean[c]));
    if (m2 <= scale * scale) {
      out.degenerate[c] = true;
      continue;
    }
    out.skewness[c] = m3 / std::pow(m2, 1.5);
    out.kurtosis[c] = m4 / (m2 * m2);
  }
  return out;
}

std::vector<double> cross_covariance(const Tensor2& x, std::span<const double> y) {
  if (x.rows() != y.size()) {
    throw ArgumentError("cross_covariance: " + std::to_string(x.rows()) + " rows but " +
                        std::to_string(y.size()) + " targets");
  }
  if (y.size() < 2) throw ArgumentError("cross_covariance: need at least 2 rows");
  const auto mean = mean_vector(x);
  const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  std::vector<double> out(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double dy = y[r] - y_mean;
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) out[c] += (row[c] - mean[c]) * dy;
  }
  for (double& v : out) v /= static_cast<double>(y.size() - 1);
  return out;
}

namespace {

double frobenius(const Tensor2& a) {
  double s = 0.0;
  for (double v : a.flat()) s += v * v;
  return std::sqrt(s);
}

double off_diagonal_norm(const Tensor2& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

void rotate(Tensor2& a, Tensor2& v, std::size_t p, std::size_t q) {
  const double apq = a(p, q);
  if (apq == 0.0) return;
  const std::size_t n = a.rows();
  const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
  const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  const double s = t * c;
  for (std::size_t k = 0; k < n; ++k) {
    const double akp = a(k, p);
    const double akq = a(k, q);
    a(k, p) = c * akp - s * akq;
    a(k, q) = s * akp + c * akq;
  }
  auto row_p = a.row(p);
  auto row_q = a.row(q);
  for (std::size_t k = 0; k < n; ++k) {
    const double apk = row_p[k];
    const double aqk = row_q[k];
    row_p[k] = c * apk - s * aqk;
    row_q[k] = s * apk + c * aqk;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double vkp = v(k, p);
    const double vkq = v(k, q);
    v(k, p) = c * vkp - s * vkq;
    v(k, q) = s * vkp + c * vkq;
  }
}

}  // namespace

SymmetricEigen jacobi_eigen(const Tensor2& symmetric, double tol, std::size_t max_sweeps) {
  if (symmetric.rows() != symmetric.cols()) {
    throw DimensionError("jacobi_eigen: matrix " + symmetric.shape_str() + " is not square");
  }
  require_finite(symmetric, "jacobi_eigen input");
  const std::size_t n = symmetric.rows();
  Tensor2 a = symmetric;
  Tensor2 v = Tensor2::identity(n);
  const double target = tol * frobenius(symmetric);

  SymmetricEigen out;
  out.off_norm = off_diagonal_norm(a);
  while (out.off_norm > target) {
    if (out.sweeps == max_sweeps) {
      throw NumericError("jacobi_eigen: no convergence after " + std::to_string(max_sweeps) +
                         " sweeps (off-diagonal norm " + std::to_string(out.off_norm) + ")");
    }
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) rotate(a, v, p, q);
    ++out.sweeps;
    out.off_norm = off_diagonal_norm(a);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  out.values.resize(n);
  out.vectors = Tensor2(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    out.values[r] = a(order[r], order[r]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(r, k) = v(k, order[r]);
  }
  return out;
}

void canonical_sign(std::span<double> v) {
  if (v.empty()) return;
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  if (v[best] < 0.0)
    for (double& x : v) x = -x;
}

PrincipalComponents principal_components(const Tensor2& d, std::size_t k) {
  if (k < 1 || k > d.cols()) {
    throw ArgumentError("principal_components: k = " + std::to_string(k) +
                        " outside [1, " + std::to_string(d.cols()) + "]");
  }
  if (d.rows() < 2) throw ArgumentError("principal_components: need at least 2 rows");
  const auto eig = jacobi_eigen(covariance_matrix(d));
  PrincipalComponents out;
  out.loadings = Tensor2(k, d.cols());
  out.eigenvalues.assign(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t i = 0; i < k; ++i) {
    auto src = eig.vectors.row(i);
    auto dst = out.loadings.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
    canonical_sign(dst);
  }
  return out;
}

Tensor2 joint_design(const ClientShard& shard) {
  const std::size_t f = shard.feature_cols();
  const std::size_t label_cols = shard.num_classes > 0 ? shard.num_classes : 1;
  const std::size_t n = shard.x_train.rows();
  if (shard.y_train.size() != n) {
    throw DimensionError("joint_design: " + std::to_string(n) + " rows but " +
                         std::to_string(shard.y_train.size()) + " labels");
  }
  Tensor2 out(n, f + label_cols);
  for (std::size_t r = 0; r < n; ++r) {
    auto src = shard.x_train.row(r);
    auto dst = out.row(r);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(f), dst.begin());
    if (shard.num_classes == 0) {
      dst[f] = shard.y_train[r];
    } else {
      const double label = shard.y_train[r];
      if (label < 0 || label >= static_cast<double>(shard.num_classes) ||
          label != std::floor(label)) {
        throw ArgumentError("joint_design: label " + std::to_string(label) +
                            " is not a class index below " + std::to_string(shard.num_classes));
      }
      dst[f + static_cast<std::size_t>(label)] = 1.0;
    }
  }
  return out;
}

namespace {

Tensor2 feature_block(const ClientShard& shard) {
  const std::size_t f = shard.feature_cols();
  Tensor2 out(shard.x_train.rows(), f);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto src = shard.x_train.row(r);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(f), out.row(r).begin());
  }
  return out;
}

std::vector<double> moment_stats(const ClientShard& shard) {
  const std::size_t f = shard.feature_cols();
  Tensor2 joint(shard.x_train.rows(), f + 1);
  for (std::size_t r = 0; r < joint.rows(); ++r) {
    auto src = shard.x_train.row(r);
    auto dst = joint.row(r);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(f), dst.begin());
    dst[f] = shard.y_train[r];
  }
  const auto mean = mean_vector(joint);
  const auto cov = covariance_matrix(joint);
  const auto hm = higher_moments(joint);
  std::vector<double> mu;
  mu.reserve(4 * joint.cols());
  mu.insert(mu.end(), mean.begin(), mean.end());
  for (std::size_t c = 0; c < joint.cols(); ++c) mu.push_back(cov(c, c));
  mu.insert(mu.end(), hm.skewness.begin(), hm.skewness.end());
  mu.insert(mu.end(), hm.kurtosis.begin(), hm.kurtosis.end());
  return mu;
}

}  // namespace

LocalStats client_stats(const ClientShard& shard, const StatsRecipe& recipe) {
  if (shard.x_train.rows() < 2) {
    throw ArgumentError("client_stats: client " + std::to_string(shard.client_id) +
                        " has fewer than 2 training rows");
  }
  LocalStats out;
  out.descriptor = recipe.kind;
  switch (recipe.kind) {
    case StatsKind::CrossCovariance:
      out.mu = cross_covariance(feature_block(shard), shard.y_train);
      out.mu.push_back(1.0);
      break;
    case StatsKind::PrincipalComponents: {
      const auto pcs = principal_components(joint_design(shard), recipe.components);
      out.mu = pcs.loadings.data();
      out.components = recipe.components;
      break;
    }
    case StatsKind::Moments:
      out.mu = moment_stats(shard);
      break;
    case StatsKind::DummyZeros:
      out.mu.assign(recipe.length, 0.0);
      break;
    case StatsKind::DummyGlobalPC:
      if (recipe.global_mu.empty()) {
        throw ArgumentError("client_stats: DummyGlobalPC recipe carries no pooled loadings");
      }
      out.mu = recipe.global_mu;
      out.components = recipe.components;
      break;
  }
  require_finite(out.mu, "client_stats mu");
  return out;
}

std::vector<double> pooled_pc_stats(std::span<const ClientShard> shards, std::size_t k) {
  if (shards.empty()) throw ArgumentError("pooled_pc_stats: no shards");
  std::vector<Tensor2> parts;
  std::size_t rows = 0;
  for (const auto& s : shards) {
    parts.push_back(joint_design(s));
    rows += parts.back().rows();
    if (parts.back().cols() != parts.front().cols()) {
      throw DimensionError("pooled_pc_stats: shards disagree on joint width");
    }
  }
  Tensor2 pooled(rows, parts.front().cols());
  std::size_t r = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.rows(); ++i, ++r) {
      auto src = p.row(i);
      std::copy(src.begin(), src.end(), pooled.row(r).begin());
    }
  }
  return principal_components(pooled, k).loadings.data();
}

}  // namespace fedstat
