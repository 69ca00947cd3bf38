#include "fedstat/synthdata.hpp"

#include "fedstat/errors.hpp"
#include "fedstat/numerics.hpp"

namespace fedstat {

const std::vector<double>& ClientShard::mu() const {
  if (!stats) {
    throw ArgumentError("client " + std::to_string(client_id) + " has no local statistics");
  }
  return stats->mu;
}

bool ClientShard::operator==(const ClientShard& other) const {
  return client_id == other.client_id && cluster_id == other.cluster_id &&
         x_train == other.x_train && y_train == other.y_train && x_test == other.x_test &&
         y_test == other.y_test && has_bias_column == other.has_bias_column &&
         num_classes == other.num_classes && stats == other.stats;
}

Tensor2 sample_standard_normal(SeededRng& rng, std::size_t n, std::size_t k) {
  if (n == 0 || k == 0) throw ArgumentError("sample_standard_normal: n and k must be >= 1");
  Tensor2 out(n, k);
  for (double& v : out.flat()) v = rng.normal();
  return out;
}

std::vector<ClusterSpec> gen_cluster_thetas(SeededRng& rng, std::size_t num_clusters,
                                            std::size_t k) {
  if (num_clusters == 0) throw ArgumentError("gen_cluster_thetas: need at least one cluster");
  std::vector<ClusterSpec> out(num_clusters);
  for (std::size_t c = 0; c < num_clusters; ++c) {
    out[c].cluster_id = c;
    out[c].theta.resize(k + 1);
    for (double& t : out[c].theta) t = rng.uniform(-kThetaBound, kThetaBound);
  }
  return out;
}

namespace {

void fill_split(SeededRng& rng, const ClusterSpec& spec, std::size_t n, SynthTask task,
                Tensor2& x, std::vector<double>& y) {
  const std::size_t cols = spec.theta.size();
  x = Tensor2(n, cols);
  y.assign(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c + 1 < cols; ++c) row[c] = rng.normal();
    row[cols - 1] = 1.0;
    const double signal = dot(row, spec.theta);
    if (task == SynthTask::Regression) {
      y[r] = signal + kRegressionNoiseSigma * rng.normal();
    } else {
      y[r] = signal > 0.0 ? 1.0 : 0.0;
    }
  }
}

}  // namespace

ClientShard gen_client_shard(SeededRng& rng, const ClusterSpec& spec, std::size_t n_train,
                             std::size_t n_test, SynthTask task) {
  if (n_train < 2) throw ArgumentError("gen_client_shard: n_train must be >= 2");
  if (spec.theta.size() < 2) throw ArgumentError("gen_client_shard: theta needs k >= 1");
  ClientShard shard;
  shard.cluster_id = spec.cluster_id;
  shard.has_bias_column = true;
  shard.num_classes = task == SynthTask::Classification ? 2 : 0;
  fill_split(rng, spec, n_train, task, shard.x_train, shard.y_train);
  if (n_test > 0) fill_split(rng, spec, n_test, task, shard.x_test, shard.y_test);
  return shard;
}

std::vector<ClusterSpec> federation_thetas(const SynthFederationSpec& spec) {
  auto rng = derive_stream(spec.seed, {kThetaStreamLabel});
  return gen_cluster_thetas(rng, spec.clusters, spec.features);
}

std::vector<ClientShard> build_federation(const SynthFederationSpec& spec) {
  if (spec.clusters == 0 || spec.peers_per_cluster == 0 || spec.n_train < 2 ||
      spec.features == 0) {
    throw ArgumentError("build_federation: clusters, peers and features must be >= 1, n >= 2");
  }
  const auto thetas = federation_thetas(spec);
  std::vector<ClientShard> shards;
  shards.reserve(spec.clusters * spec.peers_per_cluster);
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    for (std::size_t p = 0; p < spec.peers_per_cluster; ++p) {
      const std::size_t id = shards.size();
      auto rng = derive_stream(spec.seed, {c, id});
      auto shard = gen_client_shard(rng, thetas[c], spec.n_train, spec.n_test, spec.task);
      shard.client_id = id;
      shards.push_back(std::move(shard));
    }
  }
  return shards;
}

}  // namespace fedstat
