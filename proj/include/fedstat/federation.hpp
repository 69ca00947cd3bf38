#pragma once

// In-process federated training: clients prepare private statistics, train
// a shared model on their own rows, and a server aggregates parameter
// proposals (FedAvg) or gradients (FedSGD).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fedstat/models.hpp"
#include "fedstat/numerics.hpp"
#include "fedstat/rng.hpp"
#include "fedstat/shard.hpp"
#include "fedstat/stats.hpp"
#include "fedstat/synthdata.hpp"

namespace fedstat {

enum class Aggregation { FedAvg, FedSgd };
enum class OptimizerKind { AdamW, Sgd };
enum class TaskKind { Regression, Classification, Emnist };
enum class SetupKind { CondLinear, Ensemble, Mlp, Cnn, BaselineGlobal, BaselineCluster, BaselineClient };

std::string to_string(Aggregation a);
std::string to_string(OptimizerKind o);
std::string to_string(TaskKind t);
std::string to_string(SetupKind s);
bool is_baseline(SetupKind s);

struct FederationConfig {
  TaskKind task = TaskKind::Regression;
  SetupKind model = SetupKind::Ensemble;
  std::size_t clusters = 3;
  std::size_t peers_per_cluster = 100;
  std::size_t n_per_client = 100;
  std::size_t n_test = 100;
  std::size_t features = 10;
  StatsKind stats = StatsKind::CrossCovariance;
  std::size_t stats_components = 1;
  std::size_t rounds = 100;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 100;
  double lr = 0.001;
  double wd = 0.001;
  Aggregation aggregation = Aggregation::FedAvg;
  OptimizerKind optimizer = OptimizerKind::AdamW;
  std::uint64_t seed = 42;
  std::size_t ensemble_width = 16;
  std::vector<std::size_t> mlp_hidden{64, 64};
  std::size_t baseline_epochs = 100;
  std::size_t baseline_batch = 100;
  unsigned threads = 0;

  /// ConfigError naming the first invalid field.
  void validate() const;
};

/// Metrics of one evaluation pass. The metric is test rmse for regression
/// and test accuracy for classification.
struct RoundReport {
  std::size_t round = 0;
  std::string metric;
  std::vector<double> per_client_metric;
  std::vector<double> per_cluster_mean;
  double global_mean = 0.0;

  bool operator==(const RoundReport& other) const = default;
};

// ------------------------------------------------------------- preparation

/// Statistics for one client from its own training rows.
void prepare_client(ClientShard& shard, const StatsRecipe& recipe);

/// prepare_client on every shard, one shard per call.
void prepare(std::span<ClientShard> shards, const StatsRecipe& recipe);

// ----------------------------------------------------------------- training

/// A client's view of the training problem: the model plus that client's
/// rows. Nothing here can reach another client's data.
class LocalObjective {
 public:
  virtual ~LocalObjective() = default;
  virtual std::size_t train_size() const = 0;
  /// Mean loss over the selected training rows; overwrites p's gradients.
  virtual double loss_grad(ParamSet& p, std::span<const std::size_t> rows) const = 0;
};

class ShardObjective final : public LocalObjective {
 public:
  ShardObjective(const ConditionalModel& model, const ClientShard& shard, Head head);
  std::size_t train_size() const override { return shard_.x_train.rows(); }
  double loss_grad(ParamSet& p, std::span<const std::size_t> rows) const override;

 private:
  const ConditionalModel& model_;
  const ClientShard& shard_;
  Head head_;
};

struct LocalOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 100;
  OptimizerKind optimizer = OptimizerKind::AdamW;
  AdamWOptions adam{};
};

/// Optimizer moments and the shuffle stream a client keeps between rounds.
struct ClientState {
  ParamSet params;
  SeededRng rng;
  bool initialized = false;
};

/// `epochs` passes of mini-batch optimization starting from the global
/// parameters. A batch covering every row is taken in natural order.
/// Returns the client's proposal; NumericError on a non-finite loss.
ParamSet local_update(const LocalObjective& client, const ParamSet& global,
                      const LocalOptions& opts, ClientState& state);

/// Full-batch gradient at p (stored in the returned set's grad buffers).
ParamSet client_gradient(const LocalObjective& client, const ParamSet& p);

/// Weighted mean of parameter values, weights normalized to sum 1,
/// accumulated as p_0 + sum_i w_i (p_i - p_0) in ascending index.
ParamSet aggregate_fedavg(std::span<const ParamSet> proposals, std::span<const double> weights);

/// Weighted mean of the client gradients written into server's gradient
/// buffers, followed by one server optimizer step.
void aggregate_fedsgd(ParamSet& server, std::span<const ParamSet> gradients,
                      std::span<const double> weights, const LocalOptions& opts);

struct TrainOptions {
  std::size_t rounds = 100;
  LocalOptions local{};
  Aggregation aggregation = Aggregation::FedAvg;
  std::uint64_t seed = 42;
  unsigned threads = 0;
};

using Evaluator = std::function<RoundReport(const ParamSet&, std::size_t round)>;

struct TrainResult {
  ParamSet params;
  std::vector<RoundReport> reports;  // round 0 is the initial evaluation
};

/// Runs `rounds` federated rounds over every client. The evaluator is
/// called before the first round and after each round.
TrainResult train_federated(std::span<const LocalObjective* const> clients, ParamSet init,
                            const TrainOptions& opts, const Evaluator& evaluate);

// --------------------------------------------------------------- evaluation

/// Per-client test metric from per-client outputs; clusters use the hidden
/// ids for reporting only.
RoundReport summarize(std::span<const ClientShard> shards, Head head,
                      const std::function<std::vector<double>(const ClientShard&)>& outputs,
                      std::size_t round);

RoundReport evaluate(const ConditionalModel& model, const ParamSet& params,
                     std::span<const ClientShard> shards, Head head, std::size_t round = 0);

double rmse(std::span<const double> pred, std::span<const double> target);
/// Fraction of logits on the correct side of zero.
double binary_accuracy(std::span<const double> logit, std::span<const double> target);

// ---------------------------------------------------------------- running

struct RunResult {
  ParamSet params;
  std::vector<RoundReport> reports;
};

Head head_for(TaskKind task);
SynthFederationSpec synth_spec(const FederationConfig& config);
StatsRecipe recipe_for(const FederationConfig& config);
ModelShape model_shape(const FederationConfig& config, std::size_t mu_dim);

/// Preparation, training and evaluation for a synthetic task. Baseline
/// set-ups are fitted directly and report a single evaluation.
RunResult run(const FederationConfig& config);

/// Same, on shards built by the caller (stats are computed here).
RunResult run_on(const FederationConfig& config, std::vector<ClientShard> shards);

/// Worker count from FEDSTAT_THREADS (0 or unset = hardware concurrency).
unsigned threads_from_env();

/// Calls fn(i) for i in [0, n) on up to `threads` workers. The first
/// exception by index is rethrown after all workers finish.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace fedstat
