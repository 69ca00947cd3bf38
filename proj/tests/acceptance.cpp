// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "fedstat/config.hpp"
#include "fedstat/driver.hpp"
#include "fedstat/emnist/cnn.hpp"
#include "fedstat/emnist/experiment.hpp"
#include "fedstat/emnist/idx.hpp"
#include "fedstat/errors.hpp"
#include "fedstat/federation.hpp"
#include "fedstat/models.hpp"
#include "fedstat/stats.hpp"
#include "fedstat/synthdata.hpp"
#include "cnn_instances.hpp"
#include "oracles.hpp"

using namespace fedstat;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ------------------------------------------------------------- gradients

double model_gradient_error(ModelKind kind, Head head, SeededRng& rng) {
  ModelShape shape;
  shape.x_dim = 4;
  shape.mu_dim = 3;
  shape.ensemble_width = 3;
  shape.hidden = {5, 4};
  auto model = make_model(kind, shape);
  ParamSet p = model->init(rng);
  for (auto& [name, e] : p)
    for (double& v : e.value.flat()) v = 0.5 * rng.normal();
  const auto x = oracle::random_matrix(rng, 6, shape.x_dim);
  const auto mu = oracle::random_vector(rng, shape.mu_dim);
  std::vector<double> y(6);
  for (double& t : y) t = head == Head::Binary ? double(rng.uniform() < 0.5) : rng.normal();
  model->loss_grad(p, x, y, mu, head);
  const auto numeric = finite_diff_grad(
      [&](const ParamSet& q) { return head_loss(model->forward(q, x, mu), y, head).loss; }, p, 1e-5);
  double worst = 0.0;
  for (const auto& [name, g] : numeric) worst = std::max(worst, max_relative_error(p.grad(name), g));
  return worst;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

template <class F>
double central(F f, double& slot, double h = 1e-5) {
  const double keep = slot;
  slot = keep + h;
  const double up = f();
  slot = keep - h;
  const double down = f();
  slot = keep;
  return (up - down) / (2 * h);
}

emnist::FeatureMap random_map(SeededRng& rng, std::size_t c, std::size_t h, std::size_t w) {
  emnist::FeatureMap m(c, h, w);
  for (double& v : m.data) v = rng.normal();
  return m;
}

double conv_gradient_error(SeededRng& rng) {
  using namespace emnist;
  auto in = random_map(rng, 2, 8, 8);
  ConvLayer layer{3, 2, 3, std::vector<double>(3 * 2 * 9), std::vector<double>(3)};
  for (double& v : layer.weight) v = 0.5 * rng.normal();
  for (double& v : layer.bias) v = 0.1 * rng.normal();
  const auto upstream = random_map(rng, 3, 6, 6);
  auto loss = [&] {
    const auto out = conv2d_forward(in, layer);
    double s = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * upstream.data[i];
    return s;
  };
  const auto g = conv2d_backward(in, layer, upstream);
  double worst = 0.0;
  for (std::size_t i = 0; i < in.data.size(); ++i) worst = std::max(worst, rel(g.input.data[i], central(loss, in.data[i])));
  for (std::size_t i = 0; i < layer.weight.size(); ++i)
    worst = std::max(worst, rel(g.weight[i], central(loss, layer.weight[i])));
  for (std::size_t i = 0; i < layer.bias.size(); ++i) worst = std::max(worst, rel(g.bias[i], central(loss, layer.bias[i])));
  return worst;
}

double pool_gradient_error(SeededRng& rng) {
  using namespace emnist;
  auto in = random_map(rng, 2, 6, 6);
  const auto upstream = random_map(rng, 2, 3, 3);
  auto loss = [&] {
    const auto out = maxpool2(in).out;
    double s = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * upstream.data[i];
    return s;
  };
  const auto back = maxpool2_backward(upstream, maxpool2(in).argmax, in);
  double worst = 0.0;
  for (std::size_t i = 0; i < in.data.size(); ++i) worst = std::max(worst, rel(back.data[i], central(loss, in.data[i])));
  return worst;
}

double softmax_gradient_error(SeededRng& rng) {
  auto logits = oracle::random_vector(rng, 9, 2.0);
  const std::size_t label = rng.uniform_index(9);
  const auto g = emnist::softmax_cross_entropy(logits, label).grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    worst = std::max(worst, rel(g[i], central([&] { return emnist::softmax_cross_entropy(logits, label).loss; }, logits[i])));
  return worst;
}

Outcome criterion1() {
  SeededRng rng(2718);
  double models = 0.0;
  for (auto kind : {ModelKind::CondLinear, ModelKind::Ensemble, ModelKind::Mlp, ModelKind::Linear})
    for (auto head : {Head::Regression, Head::Binary})
      for (int t = 0; t < 20; ++t) models = std::max(models, model_gradient_error(kind, head, rng));
  double layers = 0.0;
  for (int t = 0; t < 20; ++t)
    layers = std::max({layers, conv_gradient_error(rng), pool_gradient_error(rng), softmax_gradient_error(rng)});
  double composed = 0.0;
  for (bool big : {false, true}) {
    emnist::CnnArch arch;
    arch.conv1 = 2;
    arch.conv2 = 3;
    arch.conv3 = 4;
    arch.mu_dim = 3;
    arch.classes = 7;
    if (big) arch.height = arch.width = 28;
    for (int t = 0; t < 20; ++t)
      composed = std::max(composed, oracle::cnn_gradient_error(arch, oracle::cnn_instance(arch, rng)));
  }
  return {models <= 1e-5 && layers <= 1e-5 && composed <= 1e-4,
          "models " + fmt("%.2e", models) + ", cnn layers " + fmt("%.2e", layers) + ", composed cnn " +
              fmt("%.2e", composed)};
}

// ----------------------------------------------------------- stationarity

Outcome criterion2() {
  SynthFederationSpec spec;
  spec.clusters = 5;
  spec.peers_per_cluster = 1;
  spec.features = 4;
  spec.n_train = 50;
  spec.n_test = 1;
  const auto shards = build_federation(spec);
  const double at = stationarity_residual(shards);
  Tensor2 w = Tensor2::identity(5);
  for (double& v : w.flat()) v += 0.1;
  const double off = stationarity_residual(shards, w);
  return {at <= 1e-8 && off > 1e-3, "residual " + fmt("%.2e", at) + ", perturbed " + fmt("%.2e", off)};
}

// -------------------------------------------------------------- synthetic

SynthConfig desk_synth(TaskKind task) {
  auto c = parse_synth_config(read_json_file(std::string(FEDSTAT_CONFIG_DIR) + "/synth_desk.json"));
  c.tasks = {task};
  return c;
}

double final_metric(const std::vector<SynthCell>& cells, SetupKind s) {
  for (const auto& c : cells)
    if (c.setup == s) return c.result.reports.back().global_mean;
  throw ArgumentError("set-up missing from the run: " + to_string(s));
}

std::string summary(const std::vector<SynthCell>& cells) {
  std::string out;
  for (const auto& c : cells) {
    if (!out.empty()) out += ", ";
    out += to_string(c.setup) + " " + format_metric(c.result.reports.back().global_mean);
  }
  return out;
}

Outcome criterion3() {
  const auto cells = run_synth(desk_synth(TaskKind::Regression));
  const double cluster = final_metric(cells, SetupKind::BaselineCluster);
  const double global = final_metric(cells, SetupKind::BaselineGlobal);
  const double ens = final_metric(cells, SetupKind::Ensemble);
  const double lin = final_metric(cells, SetupKind::CondLinear);
  const double mlp = final_metric(cells, SetupKind::Mlp);
  const bool ok = cluster >= 0.09 && cluster <= 0.15 && global >= 5 * cluster && ens <= 2 * cluster && ens < global &&
                  lin < global && mlp < global;
  return {ok, "rmse " + summary(cells)};
}

Outcome criterion4() {
  const auto cells = run_synth(desk_synth(TaskKind::Classification));
  const double cluster = final_metric(cells, SetupKind::BaselineCluster);
  const double global = final_metric(cells, SetupKind::BaselineGlobal);
  const double client = final_metric(cells, SetupKind::BaselineClient);
  bool ok = cluster >= 0.9 && client < cluster;
  for (auto s : {SetupKind::CondLinear, SetupKind::Ensemble, SetupKind::Mlp})
    ok = ok && final_metric(cells, s) >= global + 0.05;
  return {ok, "accuracy " + summary(cells)};
}

// ------------------------------------------------------------- federation

Outcome criterion5() {
  // Small-integer data keeps every sum exact, so only the algebra is tested.
  SeededRng rng(13);
  std::vector<ClientShard> shards;
  for (std::size_t c = 0; c < 4; ++c) {
    ClientShard s;
    s.client_id = c;
    s.x_train = Tensor2(4, 3);
    s.y_train.resize(4);
    for (std::size_t r = 0; r < 4; ++r) {
      s.x_train(r, 0) = double(rng.uniform_index(5)) - 2.0;
      s.x_train(r, 1) = double(rng.uniform_index(5)) - 2.0;
      s.x_train(r, 2) = 1.0;
      s.y_train[r] = double(rng.uniform_index(9)) - 4.0;
    }
    s.x_test = s.x_train;
    s.y_test = s.y_train;
    s.stats = LocalStats{{double(rng.uniform_index(3)), double(rng.uniform_index(3)) - 1.0}, StatsKind::CrossCovariance, 0};
    shards.push_back(std::move(s));
  }
  auto model = make_model(ModelKind::CondLinear, ModelShape{3, 2, 2, {}});
  ParamSet init = model->init(rng);
  for (double& v : init.value("W").flat()) v = double(rng.uniform_index(17)) / 8.0 - 1.0;
  std::vector<std::unique_ptr<LocalObjective>> owned;
  std::vector<const LocalObjective*> obj;
  for (const auto& s : shards) {
    owned.push_back(std::make_unique<ShardObjective>(*model, s, Head::Regression));
    obj.push_back(owned.back().get());
  }
  TrainOptions o;
  o.rounds = 1;
  o.local.epochs = 1;
  o.local.batch_size = 4;
  o.local.optimizer = OptimizerKind::Sgd;
  o.local.adam.lr = 1.0 / 16.0;
  o.local.adam.weight_decay = 0.0;
  const auto avg = train_federated(obj, init, o, nullptr);
  o.aggregation = Aggregation::FedSgd;
  const auto sgd = train_federated(obj, init, o, nullptr);
  const bool bitwise = avg.params.value("W") == sgd.params.value("W") && !(avg.params.value("W") == init.value("W"));

  double identity = 0.0;
  for (int t = 0; t < 20; ++t) {
    ParamSet p;
    p.add("a", oracle::random_matrix(rng, 3, 4, 10.0));
    p.add("b", oracle::random_matrix(rng, 1, 7, 1e-3));
    std::vector<ParamSet> copies(7, p);
    std::vector<double> w(7);
    for (double& x : w) x = 1.0 + double(rng.uniform_index(100));
    const auto out = aggregate_fedavg(copies, w);
    for (const auto& [name, e] : out)
      identity = std::max(identity, oracle::max_abs_diff(e.value.flat(), p.value(name).flat()));
  }

  SynthConfig small;
  small.base.clusters = 2;
  small.base.peers_per_cluster = 3;
  small.base.features = 4;
  small.base.n_per_client = 30;
  small.base.n_test = 20;
  small.base.batch_size = 10;
  small.base.rounds = 3;
  small.base.baseline_epochs = 3;
  small.base.mlp_hidden = {6};
  small.base.threads = 1;
  const auto a = run_synth(small);
  small.base.threads = 4;
  const auto b = run_synth(small);
  const bool deterministic = synth_comparison_table(a).str() == synth_comparison_table(b).str() &&
                             synth_rounds_table(a).str() == synth_rounds_table(b).str();

  return {bitwise && identity <= 1e-15 && deterministic,
          std::string("fedsgd/fedavg bitwise ") + (bitwise ? "yes" : "no") + ", identity " + fmt("%.1e", identity) +
              ", byte-deterministic " + (deterministic ? "yes" : "no")};
}

// ---------------------------------------------------------------- pca/ols

Outcome criterion6() {
  SeededRng rng(6);
  double eig = 0.0, agree = 0.0;
  for (int t = 0; t < 10; ++t) {
    Tensor2 d = oracle::random_matrix(rng, 300, 6);
    for (std::size_t i = 0; i < 300; ++i)
      for (std::size_t j = 0; j < 6; ++j) d(i, j) *= 1.0 + double(j);
    const auto c = covariance_matrix(d);
    const auto pc = principal_components(d, 6);
    const auto want = oracle::classical_jacobi(c);
    for (std::size_t r = 0; r < 6; ++r) {
      const auto v = pc.loadings.row(r);
      const auto cv = matvec(c, v);
      for (std::size_t j = 0; j < 6; ++j) eig = std::max(eig, std::abs(cv[j] - pc.eigenvalues[r] * v[j]));
      const double s = dot(v, want.vectors[r]) < 0 ? -1.0 : 1.0;
      agree = std::max(agree, std::abs(pc.eigenvalues[r] - want.values[r]));
      for (std::size_t j = 0; j < 6; ++j) agree = std::max(agree, std::abs(v[j] - s * want.vectors[r][j]));
    }
  }
  double ols = 0.0;
  for (int t = 0; t < 10; ++t) {
    const auto x = oracle::random_matrix(rng, 30, 5);
    const auto theta = oracle::random_vector(rng, 5, 5.0);
    ols = std::max(ols, oracle::max_abs_diff(fit_ols(x, matvec(x, theta)), theta));
  }
  return {eig <= 1e-8 && agree <= 1e-8 && ols <= 1e-9,
          "eigen residual " + fmt("%.1e", eig) + ", oracle gap " + fmt("%.1e", agree) + ", ols error " + fmt("%.1e", ols)};
}

// ------------------------------------------------------------------ emnist

const emnist::SetupResult& setup_of(const emnist::EmnistResult& r, emnist::EmnistSetup s) {
  for (const auto& x : r.setups)
    if (x.setup == s) return x;
  throw ArgumentError("set-up missing from the run: " + emnist::to_string(s));
}

struct EmnistRun {
  emnist::EmnistResult result;
  double seconds = 0.0;
};

const EmnistRun& emnist_run() {
  static const EmnistRun run = [] {
    auto c = parse_emnist_config(read_json_file(std::string(FEDSTAT_CONFIG_DIR) + "/emnist_desk.json"));
    c.nc_sweep = {1, 4};
    c.compare_dummies = true;
    const auto t0 = std::chrono::steady_clock::now();
    EmnistRun r;
    r.result = emnist::run_emnist(emnist::obtain_data(c, true), c);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }();
  return run;
}

Outcome criterion7() {
  using emnist::EmnistSetup;
  const auto& r = emnist_run().result;
  const auto& cond = setup_of(r, EmnistSetup::Conditional);
  const auto& global = setup_of(r, EmnistSetup::Global);
  const auto& client = setup_of(r, EmnistSetup::Client);
  bool ok = cond.accuracy > global.accuracy && cond.accuracy > client.accuracy;
  std::string detail = std::string(r.synthetic ? "synthetic glyphs" : "EMNIST") + ": conditional " +
                       format_metric(cond.accuracy) + ", global " + format_metric(global.accuracy) + ", client " +
                       format_metric(client.accuracy);
  if (r.synthetic) {
    detail += "; triplets N/A without real EMNIST";
  } else {
    const std::vector<emnist::SetupResult> pair{cond, global};
    for (const char* triplet : {"zZ2", "iI1"}) {
      bool any = false;
      for (const auto& row : emnist::confusion_report(pair, triplet))
        any = any || row.accuracy[0] >= row.accuracy[1] + 0.10;
      ok = ok && any;
      detail += std::string("; ") + triplet + (any ? " ok" : " below 10 points");
    }
  }
  return {ok, detail};
}

Outcome criterion8() {
  const auto& r = emnist_run().result;
  double nc1 = NAN, nc4 = NAN;
  for (const auto& s : r.sweep) {
    if (s.nc == 1) nc1 = s.accuracy;
    if (s.nc == 4) nc4 = s.accuracy;
  }
  if (r.dummies.size() != 2) return {false, "dummy comparison missing"};
  const double zeros = r.dummies[0].accuracy, pc = r.dummies[1].accuracy;
  const bool ok = std::abs(nc1 - nc4) <= 0.02 && std::abs(zeros - pc) <= 0.02;
  return {ok, "nc1 " + format_metric(nc1) + ", nc4 " + format_metric(nc4) + ", dummy " +
                  emnist::to_string(r.dummies[0].dummy) + " " + format_metric(zeros) + ", dummy " +
                  emnist::to_string(r.dummies[1].dummy) + " " + format_metric(pc)};
}

// --------------------------------------------------------------------- idx

std::vector<std::uint8_t> idx_bytes(const std::vector<std::uint32_t>& dims, const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> b{0, 0, 8, std::uint8_t(dims.size())};
  for (std::uint32_t d : dims)
    for (int s = 24; s >= 0; s -= 8) b.push_back(std::uint8_t(d >> s));
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

Outcome criterion9() {
  using namespace emnist;
  SeededRng rng(99);
  int round_trips = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<std::uint32_t> dims;
    if (rng.uniform() < 0.5)
      dims = {std::uint32_t(rng.uniform_index(5)), std::uint32_t(1 + rng.uniform_index(9)),
              std::uint32_t(1 + rng.uniform_index(9))};
    else
      dims = {std::uint32_t(rng.uniform_index(50))};
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    std::vector<std::uint8_t> payload(n);
    for (auto& b : payload) b = std::uint8_t(rng.uniform_index(256));
    const auto bytes = idx_bytes(dims, payload);
    const auto parsed = parse_idx(bytes);
    round_trips += parsed.dims == dims && parsed.data == payload && serialize_idx(parsed) == bytes;
  }
  bool magic = false;
  auto bad = idx_bytes({1, 1, 1}, {0});
  bad[2] = 9;
  try {
    parse_idx(bad);
  } catch (const FormatError& e) {
    magic = std::string(e.what()).find("00000903") != std::string::npos;
  }
  int truncated = 0;
  const auto good = idx_bytes({2, 3, 3}, std::vector<std::uint8_t>(18, 1));
  for (std::size_t cut : {std::size_t(2), std::size_t(10), good.size() - 1}) {
    try {
      parse_idx(std::vector<std::uint8_t>(good.begin(), good.begin() + long(cut)));
    } catch (const LengthError&) {
      ++truncated;
    }
  }
  return {round_trips == 100 && magic && truncated == 3,
          std::to_string(round_trips) + "/100 round trips, bad magic " + (magic ? "rejected" : "accepted") + ", " +
              std::to_string(truncated) + "/3 truncations rejected"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> check;
};

}  // namespace

int main() {
  const std::vector<Criterion> all{
      {1, "gradient suite", 60, criterion1},
      {2, "stationarity", 5, criterion2},
      {3, "synthetic regression", 300, criterion3},
      {4, "synthetic classification", 300, criterion4},
      {5, "federation algebra", 60, criterion5},
      {6, "pca and ols oracles", 5, criterion6},
      {7, "emnist comparison", 900, criterion7},
      {8, "component sweep", 1800, criterion8},
      {9, "idx parser", 5, criterion9},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // The shared EMNIST run counts toward both of its criteria.
    if (c.id == 8) secs += emnist_run().seconds;
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("criterion %d %s: %s (%s; %.1f s%s)\n", c.id, c.name, pass ? "PASS" : "FAIL", o.detail.c_str(), secs,
                in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
