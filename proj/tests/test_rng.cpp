#include <doctest.h>

#include <cmath>
#include <vector>

#include "fedstat/rng.hpp"
#include "oracles.hpp"

using namespace fedstat;

TEST_CASE("same seed and labels give the same stream") {
  auto a = derive_stream(42, {3, 7});
  auto b = derive_stream(42, {3, 7});
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds give different streams") {
  auto a = derive_stream(0, {1});
  auto b = derive_stream(1, {1});
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}

TEST_CASE("sibling label streams are uncorrelated") {
  auto a = derive_stream(42, {0});
  auto b = derive_stream(42, {1});
  std::vector<double> ua(1000), ub(1000);
  for (int i = 0; i < 1000; ++i) {
    ua[i] = a.uniform();
    ub[i] = b.uniform();
  }
  CHECK(std::abs(oracle::pearson(ua, ub)) < 0.1);
}

TEST_CASE("label order matters") {
  auto a = derive_stream(9, {1, 2});
  auto b = derive_stream(9, {2, 1});
  CHECK(a.next_u64() != b.next_u64());
}

TEST_CASE("uniform stays in range") {
  SeededRng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double w = rng.uniform(-10.0, 10.0);
    CHECK(w >= -10.0);
    CHECK(w <= 10.0);
  }
  for (int i = 0; i < 1000; ++i) CHECK(rng.uniform_index(7) < 7);
}

TEST_CASE("normal draws match the standard normal cdf") {
  SeededRng rng(2024);
  std::vector<double> v(10000);
  for (double& x : v) x = rng.normal();
  std::sort(v.begin(), v.end());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = oracle::normal_cdf(v[i]);
    d = std::max({d, std::abs(f - double(i) / v.size()), std::abs(f - double(i + 1) / v.size())});
  }
  // 1% critical value of the one-sample KS test at n = 10000.
  CHECK(d < 1.63 / 100.0);
}

TEST_CASE("shuffle is a seeded permutation") {
  std::vector<int> a(50), b;
  for (int i = 0; i < 50; ++i) a[i] = i;
  b = a;
  SeededRng r1(5), r2(5);
  r1.shuffle(a);
  r2.shuffle(b);
  CHECK(a == b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}
