#include <doctest.h>

#include <cmath>
#include <set>

#include "fedstat/models.hpp"
#include "fedstat/synthdata.hpp"
#include "oracles.hpp"

using namespace fedstat;

TEST_CASE("standard normal sampler") {
  auto rng = derive_stream(42, {1});
  const auto x = sample_standard_normal(rng, 10000, 1);
  CHECK(x.rows() == 10000);
  CHECK(x.cols() == 1);
  double mean = 0.0, var = 0.0;
  for (double v : x.flat()) mean += v;
  mean /= 10000.0;
  for (double v : x.flat()) var += (v - mean) * (v - mean);
  var /= 9999.0;
  CHECK(std::abs(mean) < 0.05);
  CHECK(var > 0.9);
  CHECK(var < 1.1);

  auto other = derive_stream(42, {2});
  const auto y = sample_standard_normal(other, 10000, 1);
  CHECK(oracle::ks_statistic(x.data(), y.data()) < 0.05);
  CHECK(sample_standard_normal(rng, 3, 7).cols() == 7);
}

TEST_CASE("cluster thetas") {
  SeededRng rng(42);
  const auto specs = gen_cluster_thetas(rng, 3, 10);
  REQUIRE(specs.size() == 3);
  std::set<std::vector<double>> distinct;
  for (const auto& s : specs) {
    CHECK(s.theta.size() == 11);
    for (double t : s.theta) {
      CHECK(t >= -10.0);
      CHECK(t <= 10.0);
    }
    distinct.insert(s.theta);
  }
  CHECK(distinct.size() == 3);

  const auto many = gen_cluster_thetas(rng, 1000, 4);
  for (std::size_t j = 0; j < 5; ++j) {
    double m = 0.0;
    for (const auto& s : many) m += s.theta[j];
    CHECK(std::abs(m / 1000.0) < 1.0);
  }
}

TEST_CASE("client shard layout and noise") {
  SeededRng rng(7);
  ClusterSpec zero{0, std::vector<double>(6, 0.0)};
  const auto s = gen_client_shard(rng, zero, 1000, 50, SynthTask::Regression);
  CHECK(s.x_train.rows() == 1000);
  CHECK(s.x_test.rows() == 50);
  for (std::size_t r = 0; r < 1000; ++r) CHECK(s.x_train(r, 5) == 1.0);
  for (std::size_t r = 0; r < 50; ++r) CHECK(s.x_test(r, 5) == 1.0);
  double m = 0.0, v = 0.0;
  for (double y : s.y_train) m += y;
  m /= 1000.0;
  for (double y : s.y_train) v += (y - m) * (y - m);
  const double sd = std::sqrt(v / 999.0);
  CHECK(sd > 0.08);
  CHECK(sd < 0.12);
}

TEST_CASE("intercept-only classification labels everything positive") {
  SeededRng rng(8);
  std::vector<double> theta(5, 0.0);
  theta.back() = 10.0;
  const auto s = gen_client_shard(rng, ClusterSpec{0, theta}, 200, 20, SynthTask::Classification);
  for (double y : s.y_train) CHECK(y == 1.0);
  for (double y : s.y_test) CHECK(y == 1.0);
}

TEST_CASE("OLS on a generated shard recovers theta") {
  SeededRng rng(9);
  const std::vector<double> theta{3.0, -7.5, 0.25, 9.0, -1.0};
  const auto s = gen_client_shard(rng, ClusterSpec{0, theta}, 1000, 10, SynthTask::Regression);
  const auto beta = fit_ols(s.x_train, s.y_train);
  for (std::size_t j = 0; j < theta.size(); ++j) CHECK(std::abs(beta[j] - theta[j]) < 0.05);
}

TEST_CASE("federation bookkeeping") {
  SynthFederationSpec spec;
  spec.clusters = 3;
  spec.peers_per_cluster = 100;
  spec.features = 4;
  spec.n_train = 10;
  spec.n_test = 10;
  const auto shards = build_federation(spec);
  REQUIRE(shards.size() == 300);
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < shards.size(); ++i) {
    CHECK(shards[i].client_id == i);
    ++counts[shards[i].cluster_id];
  }
  CHECK(counts[0] == 100);
  CHECK(counts[1] == 100);
  CHECK(counts[2] == 100);
  CHECK(build_federation(spec) == shards);

  spec.seed = 43;
  CHECK_FALSE(build_federation(spec) == shards);
}

TEST_CASE("thetas shared within a cluster and distinct across") {
  SynthFederationSpec spec;
  spec.peers_per_cluster = 4;
  spec.features = 3;
  spec.n_train = 50;
  spec.n_test = 5;
  spec.task = SynthTask::Regression;
  const auto thetas = federation_thetas(spec);
  CHECK(thetas[0].theta != thetas[1].theta);
  CHECK(thetas[1].theta != thetas[2].theta);
  const auto shards = build_federation(spec);
  for (const auto& s : shards) {
    const auto& theta = thetas[s.cluster_id].theta;
    // Residuals of the planted theta are pure noise.
    double ss = 0.0;
    for (std::size_t r = 0; r < s.x_train.rows(); ++r) {
      const double e = s.y_train[r] - predict_linear(theta, s.x_train.row(r));
      ss += e * e;
    }
    CHECK(std::sqrt(ss / 50.0) < 0.2);
  }
}

TEST_CASE("single shard federation matches a direct draw") {
  SynthFederationSpec spec;
  spec.clusters = 1;
  spec.peers_per_cluster = 1;
  spec.features = 3;
  spec.n_train = 20;
  spec.n_test = 20;
  const auto shards = build_federation(spec);
  REQUIRE(shards.size() == 1);
  auto rng = derive_stream(spec.seed, {0, 0});
  const auto direct = gen_client_shard(rng, federation_thetas(spec)[0], 20, 20, SynthTask::Regression);
  CHECK(direct.x_train == shards[0].x_train);
  CHECK(direct.y_train == shards[0].y_train);
}

TEST_CASE("noise level over a large federation") {
  SynthFederationSpec spec;
  spec.clusters = 3;
  spec.peers_per_cluster = 400;
  spec.features = 10;
  spec.n_train = 100;
  spec.n_test = 1;
  const auto thetas = federation_thetas(spec);
  const auto shards = build_federation(spec);
  double ss = 0.0;
  std::size_t n = 0;
  for (const auto& s : shards)
    for (std::size_t r = 0; r < s.x_train.rows(); ++r) {
      const double e = s.y_train[r] - predict_linear(thetas[s.cluster_id].theta, s.x_train.row(r));
      ss += e * e;
      ++n;
    }
  CHECK(n >= 100000);
  const double sd = std::sqrt(ss / double(n));
  CHECK(sd > 0.095);
  CHECK(sd < 0.105);
}

TEST_CASE("classification label balance per cluster") {
  SynthFederationSpec spec;
  spec.task = SynthTask::Classification;
  spec.peers_per_cluster = 20;
  const auto shards = build_federation(spec);
  double ones[3] = {0, 0, 0}, total[3] = {0, 0, 0};
  for (const auto& s : shards)
    for (double y : s.y_train) {
      CHECK((y == 0.0 || y == 1.0));
      ones[s.cluster_id] += y;
      total[s.cluster_id] += 1;
    }
  for (int c = 0; c < 3; ++c) {
    CHECK(ones[c] / total[c] > 0.2);
    CHECK(ones[c] / total[c] < 0.8);
  }
}
