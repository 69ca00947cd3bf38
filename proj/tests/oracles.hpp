#pragma once

// Independent reference implementations used only by the tests. Each one
// is written the slow, obvious way and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fedstat/rng.hpp"
#include "fedstat/tensor.hpp"

namespace oracle {

using fedstat::Tensor2;

inline Tensor2 triple_loop_matmul(const Tensor2& a, const Tensor2& b) {
  Tensor2 c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Tensor2 random_matrix(fedstat::SeededRng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor2 t(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t(i, j) = scale * rng.normal();
  return t;
}

inline std::vector<double> random_vector(fedstat::SeededRng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Mean by summing deviations from a first-pass estimate.
inline std::vector<double> two_pass_mean(const Tensor2& x) {
  std::vector<double> m(x.cols(), 0.0);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) s += x(i, j);
    const double first = s / static_cast<double>(x.rows());
    double dev = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) dev += x(i, j) - first;
    m[j] = first + dev / static_cast<double>(x.rows());
  }
  return m;
}

// sum_i (x_i - mean)(x_i - mean)^T / (n - 1), one outer product at a time.
inline Tensor2 direct_covariance(const Tensor2& x) {
  const auto m = two_pass_mean(x);
  Tensor2 c(x.cols(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t a = 0; a < x.cols(); ++a)
      for (std::size_t b = 0; b < x.cols(); ++b) c(a, b) += (x(i, a) - m[a]) * (x(i, b) - m[b]);
  for (double& v : c.flat()) v /= static_cast<double>(x.rows() - 1);
  return c;
}

struct Eigen {
  std::vector<double> values;              // descending
  std::vector<std::vector<double>> vectors;  // unit, matching values
};

// Classical Jacobi: always annihilate the largest off-diagonal entry.
inline Eigen classical_jacobi(Tensor2 a, double tol = 1e-14) {
  const std::size_t n = a.rows();
  Tensor2 v = Tensor2::identity(n);
  double fro = 0.0;
  for (double x : a.flat()) fro += x * x;
  fro = std::sqrt(fro);
  for (std::size_t iter = 0; iter < 100000; ++iter) {
    std::size_t p = 0, q = 1;
    double big = -1.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (std::abs(a(i, j)) > big) {
          big = std::abs(a(i, j));
          p = i;
          q = j;
        }
    if (n < 2 || big <= tol * std::max(fro, 1e-300)) break;
    const double theta = 0.5 * std::atan2(2.0 * a(p, q), a(q, q) - a(p, p));
    const double c = std::cos(theta), s = std::sin(theta);
    for (std::size_t k = 0; k < n; ++k) {
      const double akp = a(k, p), akq = a(k, q);
      a(k, p) = c * akp - s * akq;
      a(k, q) = s * akp + c * akq;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double apk = a(p, k), aqk = a(q, k);
      a(p, k) = c * apk - s * aqk;
      a(q, k) = s * apk + c * aqk;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double vkp = v(k, p), vkq = v(k, q);
      v(k, p) = c * vkp - s * vkq;
      v(k, q) = s * vkp + c * vkq;
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  Eigen e;
  for (std::size_t i : order) {
    e.values.push_back(a(i, i));
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v(k, i);
    e.vectors.push_back(std::move(col));
  }
  return e;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oracle
