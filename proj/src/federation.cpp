#include "fedstat/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <thread>

#include "fedstat/errors.hpp"

namespace fedstat {

std::string to_string(Aggregation a) { return a == Aggregation::FedAvg ? "fedavg" : "fedsgd"; }
std::string to_string(OptimizerKind o) { return o == OptimizerKind::AdamW ? "adamw" : "sgd"; }

std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::Regression: return "regression";
    case TaskKind::Classification: return "classification";
    case TaskKind::Emnist: return "emnist";
  }
  return "unknown";
}

std::string to_string(SetupKind s) {
  switch (s) {
    case SetupKind::CondLinear: return "cond_linear";
    case SetupKind::Ensemble: return "ensemble";
    case SetupKind::Mlp: return "mlp";
    case SetupKind::Cnn: return "cnn";
    case SetupKind::BaselineGlobal: return "global";
    case SetupKind::BaselineCluster: return "cluster";
    case SetupKind::BaselineClient: return "client";
  }
  return "unknown";
}

bool is_baseline(SetupKind s) {
  return s == SetupKind::BaselineGlobal || s == SetupKind::BaselineCluster ||
         s == SetupKind::BaselineClient;
}

void FederationConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config field '" + field + "': " + why);
  };
  if (clusters == 0) fail("clusters", "must be >= 1");
  if (peers_per_cluster == 0) fail("peers_per_cluster", "must be >= 1");
  if (n_per_client < 2) fail("n_per_client", "must be >= 2");
  if (features == 0) fail("features", "must be >= 1");
  if (n_test == 0) fail("n_test", "must be >= 1");
  if (batch_size == 0) fail("batch_size", "must be >= 1");
  if (batch_size > n_per_client) fail("batch_size", "must not exceed n_per_client");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr", "must be a positive finite number");
  if (!(wd >= 0.0) || !std::isfinite(wd)) fail("wd", "must be a non-negative finite number");
  if (ensemble_width < 2) fail("ensemble_width", "must be >= 2");
  for (std::size_t h : mlp_hidden)
    if (h == 0) fail("mlp_hidden", "layer widths must be >= 1");
  if (baseline_batch == 0) fail("baseline_batch", "must be >= 1");
  if (stats == StatsKind::PrincipalComponents && stats_components == 0) {
    fail("stats_components", "must be >= 1 for principal components");
  }
  if (model == SetupKind::Cnn && task != TaskKind::Emnist) fail("model", "cnn requires the emnist task");
}

// ------------------------------------------------------------- preparation

void prepare_client(ClientShard& shard, const StatsRecipe& recipe) {
  shard.stats = client_stats(shard, recipe);
}

void prepare(std::span<ClientShard> shards, const StatsRecipe& recipe) {
  std::size_t length = 0;
  for (auto& shard : shards) {
    if (shard.stats) {
      throw ArgumentError("prepare: client " + std::to_string(shard.client_id) +
                          " already has statistics");
    }
    prepare_client(shard, recipe);
    if (length == 0) length = shard.stats->mu.size();
    if (shard.stats->mu.size() != length) {
      throw DimensionError("prepare: statistics length differs between clients");
    }
  }
}

// ----------------------------------------------------------------- training

ShardObjective::ShardObjective(const ConditionalModel& model, const ClientShard& shard, Head head)
    : model_(model), shard_(shard), head_(head) {
  if (!shard.stats) {
    throw ArgumentError("ShardObjective: client " + std::to_string(shard.client_id) +
                        " has no statistics");
  }
}

double ShardObjective::loss_grad(ParamSet& p, std::span<const std::size_t> rows) const {
  Tensor2 xb(rows.size(), shard_.x_train.cols());
  std::vector<double> yb(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = shard_.x_train.row(rows[i]);
    std::copy(src.begin(), src.end(), xb.row(i).begin());
    yb[i] = shard_.y_train[rows[i]];
  }
  return model_.loss_grad(p, xb, yb, shard_.stats->mu, head_);
}

namespace {

void optimizer_step(ParamSet& p, const LocalOptions& opts) {
  if (opts.optimizer == OptimizerKind::AdamW) {
    adamw_step(p, opts.adam);
  } else {
    sgd_step(p, opts.adam.lr, opts.adam.weight_decay);
  }
}

void check_loss(double loss) {
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
}

}  // namespace

ParamSet local_update(const LocalObjective& client, const ParamSet& global,
                      const LocalOptions& opts, ClientState& state) {
  if (opts.batch_size == 0) throw ArgumentError("local_update: batch size must be positive");
  if (!state.initialized) {
    state.params = global;
    state.initialized = true;
  } else {
    state.params.assign_values(global);
  }
  const std::size_t n = client.train_size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const bool full_batch = opts.batch_size >= n;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    if (!full_batch) state.rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += opts.batch_size) {
      const std::size_t len = std::min(opts.batch_size, n - start);
      const double loss =
          client.loss_grad(state.params, std::span<const std::size_t>(order).subspan(start, len));
      check_loss(loss);
      optimizer_step(state.params, opts);
    }
  }
  for (const auto& [name, e] : state.params) require_finite(e.value, "local_update '" + name + "'");
  return state.params;
}

ParamSet client_gradient(const LocalObjective& client, const ParamSet& p) {
  ParamSet out = p;
  std::vector<std::size_t> rows(client.train_size());
  std::iota(rows.begin(), rows.end(), 0);
  check_loss(client.loss_grad(out, rows));
  return out;
}

namespace {

std::vector<double> normalized(std::span<const double> weights, std::size_t n, const char* what) {
  if (weights.size() != n) {
    throw DimensionError(std::string(what) + ": " + std::to_string(n) + " inputs but " +
                         std::to_string(weights.size()) + " weights");
  }
  if (n == 0) throw ArgumentError(std::string(what) + ": nothing to aggregate");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw ArgumentError(std::string(what) + ": weights must be positive");
    total += w;
  }
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= total;
  return out;
}

// first + sum_i w_i (x_i - first) over one tensor per input
template <typename Get>
Tensor2 anchored_mean(std::size_t n, const std::vector<double>& w, Get get) {
  const Tensor2& first = get(0);
  Tensor2 out = first;
  auto acc = out.flat();
  for (std::size_t i = 1; i < n; ++i) {
    const Tensor2& t = get(i);
    auto src = t.flat();
    auto base = first.flat();
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += w[i] * (src[j] - base[j]);
  }
  return out;
}

}  // namespace

ParamSet aggregate_fedavg(std::span<const ParamSet> proposals, std::span<const double> weights) {
  const auto w = normalized(weights, proposals.size(), "aggregate_fedavg");
  for (std::size_t i = 1; i < proposals.size(); ++i) {
    if (!proposals[i].same_layout(proposals[0])) {
      throw DimensionError("aggregate_fedavg: proposal " + std::to_string(i) +
                           " has a different parameter layout");
    }
  }
  ParamSet out = proposals[0];
  for (auto& [name, e] : out) {
    e.value = anchored_mean(proposals.size(), w, [&](std::size_t i) -> const Tensor2& {
      return proposals[i].value(name);
    });
  }
  return out;
}

void aggregate_fedsgd(ParamSet& server, std::span<const ParamSet> gradients,
                      std::span<const double> weights, const LocalOptions& opts) {
  const auto w = normalized(weights, gradients.size(), "aggregate_fedsgd");
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    if (!gradients[i].same_layout(server)) {
      throw DimensionError("aggregate_fedsgd: gradient " + std::to_string(i) +
                           " has a different parameter layout");
    }
  }
  for (auto& [name, e] : server) {
    e.grad = anchored_mean(gradients.size(), w, [&](std::size_t i) -> const Tensor2& {
      return gradients[i].grad(name);
    });
  }
  optimizer_step(server, opts);
}

namespace {

constexpr std::uint64_t kShuffleStreamLabel = 0x73687566ULL;

}  // namespace

TrainResult train_federated(std::span<const LocalObjective* const> clients, ParamSet init,
                            const TrainOptions& opts, const Evaluator& evaluate) {
  if (clients.empty()) throw ArgumentError("train_federated: no clients");
  std::vector<double> weights;
  for (const auto* c : clients) weights.push_back(static_cast<double>(c->train_size()));

  std::vector<ClientState> states(clients.size());
  for (std::size_t i = 0; i < clients.size(); ++i) {
    states[i].rng = derive_stream(opts.seed, {kShuffleStreamLabel, i});
  }

  TrainResult result;
  result.params = std::move(init);
  if (evaluate) result.reports.push_back(evaluate(result.params, 0));

  std::vector<ParamSet> outputs(clients.size());
  for (std::size_t round = 1; round <= opts.rounds; ++round) {
    parallel_for(clients.size(), opts.threads, [&](std::size_t i) {
      try {
        if (opts.aggregation == Aggregation::FedAvg) {
          outputs[i] = local_update(*clients[i], result.params, opts.local, states[i]);
        } else {
          outputs[i] = client_gradient(*clients[i], result.params);
        }
      } catch (const NumericError& e) {
        throw NumericError("round " + std::to_string(round) + ", client " + std::to_string(i) +
                           ": " + e.what());
      }
    });
    if (opts.aggregation == Aggregation::FedAvg) {
      ParamSet next = aggregate_fedavg(outputs, weights);
      result.params.assign_values(next);
    } else {
      aggregate_fedsgd(result.params, outputs, weights, opts.local);
    }
    if (evaluate) result.reports.push_back(evaluate(result.params, round));
  }
  return result;
}

// --------------------------------------------------------------- evaluation

double rmse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw ArgumentError("rmse: mismatched or empty inputs");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double binary_accuracy(std::span<const double> logit, std::span<const double> target) {
  if (logit.size() != target.size() || logit.empty()) {
    throw ArgumentError("binary_accuracy: mismatched or empty inputs");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logit.size(); ++i) {
    const double label = logit[i] > 0.0 ? 1.0 : 0.0;
    if (label == target[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logit.size());
}

RoundReport summarize(std::span<const ClientShard> shards, Head head,
                      const std::function<std::vector<double>(const ClientShard&)>& outputs,
                      std::size_t round) {
  RoundReport report;
  report.round = round;
  report.metric = head == Head::Regression ? "rmse" : "accuracy";
  std::size_t clusters = 0;
  for (const auto& s : shards) clusters = std::max(clusters, s.cluster_id + 1);
  std::vector<double> sums(clusters, 0.0);
  std::vector<std::size_t> counts(clusters, 0);
  for (const auto& s : shards) {
    const auto out = outputs(s);
    const double m = head == Head::Regression ? rmse(out, s.y_test) : binary_accuracy(out, s.y_test);
    report.per_client_metric.push_back(m);
    sums[s.cluster_id] += m;
    ++counts[s.cluster_id];
  }
  for (std::size_t c = 0; c < clusters; ++c) {
    report.per_cluster_mean.push_back(counts[c] ? sums[c] / static_cast<double>(counts[c]) : 0.0);
  }
  report.global_mean = shards.empty() ? 0.0
                                      : std::accumulate(report.per_client_metric.begin(),
                                                        report.per_client_metric.end(), 0.0) /
                                            static_cast<double>(shards.size());
  return report;
}

RoundReport evaluate(const ConditionalModel& model, const ParamSet& params,
                     std::span<const ClientShard> shards, Head head, std::size_t round) {
  return summarize(
      shards, head,
      [&](const ClientShard& s) { return model.forward(params, s.x_test, s.mu()); }, round);
}

// ---------------------------------------------------------------- running

Head head_for(TaskKind task) {
  return task == TaskKind::Regression ? Head::Regression : Head::Binary;
}

SynthFederationSpec synth_spec(const FederationConfig& config) {
  if (config.task == TaskKind::Emnist) {
    throw ConfigError("config field 'task': emnist runs through the emnist driver");
  }
  SynthFederationSpec spec;
  spec.task = config.task == TaskKind::Regression ? SynthTask::Regression : SynthTask::Classification;
  spec.clusters = config.clusters;
  spec.peers_per_cluster = config.peers_per_cluster;
  spec.n_train = config.n_per_client;
  spec.n_test = config.n_test;
  spec.features = config.features;
  spec.seed = config.seed;
  return spec;
}

StatsRecipe recipe_for(const FederationConfig& config) {
  switch (config.stats) {
    case StatsKind::CrossCovariance: return StatsRecipe::cross_covariance();
    case StatsKind::PrincipalComponents:
      return StatsRecipe::principal_components(config.stats_components);
    case StatsKind::Moments: return StatsRecipe::moments();
    case StatsKind::DummyZeros: return StatsRecipe::dummy_zeros(config.features + 1);
    case StatsKind::DummyGlobalPC: break;
  }
  throw ConfigError("config field 'stats': dummy_global_pc needs pooled data, unsupported here");
}

ModelShape model_shape(const FederationConfig& config, std::size_t mu_dim) {
  ModelShape shape;
  shape.x_dim = config.features + 1;
  shape.mu_dim = mu_dim;
  shape.ensemble_width = config.ensemble_width;
  shape.hidden = config.mlp_hidden;
  return shape;
}

namespace {

constexpr std::uint64_t kInitStreamLabel = 0x696e6974ULL;
constexpr std::uint64_t kBaselineStreamLabel = 0x62617365ULL;

ModelKind model_kind(SetupKind s) {
  switch (s) {
    case SetupKind::CondLinear: return ModelKind::CondLinear;
    case SetupKind::Ensemble: return ModelKind::Ensemble;
    case SetupKind::Mlp: return ModelKind::Mlp;
    default: break;
  }
  throw ConfigError("config field 'model': " + to_string(s) + " is not a conditional model");
}

RunResult run_baseline(const FederationConfig& config, const std::vector<ClientShard>& shards) {
  const Head head = head_for(config.task);
  LogisticFitOptions lopts;
  lopts.epochs = config.baseline_epochs;
  lopts.batch_size = config.baseline_batch;
  lopts.adam.lr = config.lr;
  lopts.adam.weight_decay = config.wd;

  BaselineScope scope = BaselineScope::Global;
  if (config.model == SetupKind::BaselineCluster) scope = BaselineScope::Cluster;
  if (config.model == SetupKind::BaselineClient) scope = BaselineScope::Client;

  std::vector<std::size_t> ids;
  if (scope == BaselineScope::Global) {
    ids.push_back(0);
  } else {
    for (const auto& s : shards) ids.push_back(scope == BaselineScope::Cluster ? s.cluster_id : s.client_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  }
  std::vector<BaselineParams> fits(ids.size());
  parallel_for(ids.size(), config.threads, [&](std::size_t i) {
    LogisticFitOptions o = lopts;
    o.seed = derive_stream(config.seed, {kBaselineStreamLabel, static_cast<std::uint64_t>(scope), ids[i]})
                 .next_u64();
    fits[i] = fit_baseline(shards, scope, ids[i], head, o);
  });

  RunResult result;
  for (const auto& f : fits) {
    const std::string name =
        scope == BaselineScope::Global ? "beta" : "beta." + to_string(scope) + std::to_string(f.id);
    result.params.add(name, Tensor2::column(f.beta));
  }
  auto beta_for = [&](const ClientShard& s) -> const std::vector<double>& {
    if (scope == BaselineScope::Global) return fits.front().beta;
    const std::size_t key = scope == BaselineScope::Cluster ? s.cluster_id : s.client_id;
    const auto it = std::lower_bound(ids.begin(), ids.end(), key);
    return fits[static_cast<std::size_t>(it - ids.begin())].beta;
  };
  result.reports.push_back(summarize(
      shards, head,
      [&](const ClientShard& s) { return matvec(s.x_test, beta_for(s)); }, config.rounds));
  return result;
}

}  // namespace

RunResult run_on(const FederationConfig& config, std::vector<ClientShard> shards) {
  config.validate();
  if (shards.empty()) throw ArgumentError("run: no clients");
  if (is_baseline(config.model)) return run_baseline(config, shards);

  prepare(shards, recipe_for(config));
  const Head head = head_for(config.task);
  auto model = make_model(model_kind(config.model), model_shape(config, shards.front().mu().size()));
  auto init_rng = derive_stream(config.seed, {kInitStreamLabel});
  ParamSet init = model->init(init_rng);

  std::vector<std::unique_ptr<LocalObjective>> owned;
  std::vector<const LocalObjective*> clients;
  for (const auto& s : shards) {
    owned.push_back(std::make_unique<ShardObjective>(*model, s, head));
    clients.push_back(owned.back().get());
  }
  TrainOptions topts;
  topts.rounds = config.rounds;
  topts.aggregation = config.aggregation;
  topts.seed = config.seed;
  topts.threads = config.threads;
  topts.local.epochs = config.local_epochs;
  topts.local.batch_size = config.batch_size;
  topts.local.optimizer = config.optimizer;
  topts.local.adam.lr = config.lr;
  topts.local.adam.weight_decay = config.wd;

  auto trained = train_federated(
      clients, std::move(init), topts,
      [&](const ParamSet& p, std::size_t round) { return evaluate(*model, p, shards, head, round); });
  return {std::move(trained.params), std::move(trained.reports)};
}

RunResult run(const FederationConfig& config) {
  config.validate();
  return run_on(config, build_federation(synth_spec(config)));
}

// ------------------------------------------------------------- parallelism

unsigned threads_from_env() {
  const char* env = std::getenv("FEDSTAT_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 0) {
    throw ConfigError("FEDSTAT_THREADS must be a non-negative integer, got '" + std::string(env) + "'");
  }
  return static_cast<unsigned>(v);
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace fedstat
