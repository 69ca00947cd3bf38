#pragma once

// Synthetic clustered federations: every client in a cluster shares one
// parameter vector theta; features are standard normal with a bias column.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedstat/rng.hpp"
#include "fedstat/shard.hpp"
#include "fedstat/tensor.hpp"

namespace fedstat {

enum class SynthTask { Regression, Classification };

struct ClusterSpec {
  std::size_t cluster_id = 0;
  /// k feature weights followed by the intercept weight.
  std::vector<double> theta;
};

inline constexpr double kRegressionNoiseSigma = 0.1;
inline constexpr double kThetaBound = 10.0;

/// n x k matrix of i.i.d. standard normals.
Tensor2 sample_standard_normal(SeededRng& rng, std::size_t n, std::size_t k);

/// One theta per cluster, uniform on [-10, 10]^(k+1).
std::vector<ClusterSpec> gen_cluster_thetas(SeededRng& rng, std::size_t num_clusters,
                                            std::size_t k);

/// Training rows are drawn first, then test rows, from the same stream.
ClientShard gen_client_shard(SeededRng& rng, const ClusterSpec& spec, std::size_t n_train,
                             std::size_t n_test, SynthTask task);

struct SynthFederationSpec {
  SynthTask task = SynthTask::Regression;
  std::size_t clusters = 3;
  std::size_t peers_per_cluster = 100;
  std::size_t n_train = 100;
  std::size_t n_test = 100;
  std::size_t features = 10;
  std::uint64_t seed = 42;
};

/// Stream label used for the cluster thetas.
inline constexpr std::uint64_t kThetaStreamLabel = 0x7468657461ULL;

/// clusters x peers shards. Client i of cluster c draws from
/// derive_stream(seed, {c, i}); thetas come from derive_stream(seed, {label}).
std::vector<ClientShard> build_federation(const SynthFederationSpec& spec);
std::vector<ClusterSpec> federation_thetas(const SynthFederationSpec& spec);

}  // namespace fedstat
