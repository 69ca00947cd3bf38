#include "fedstat/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedstat/errors.hpp"

namespace fedstat {

namespace {

void require_len(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

void require_batch(const Tensor2& x, std::span<const double> y, std::size_t x_dim,
                   const char* what) {
  require_len(x.cols(), x_dim, what);
  require_len(y.size(), x.rows(), what);
  if (x.rows() == 0) throw ArgumentError(std::string(what) + ": empty batch");
}

Tensor2 as_row(std::span<const double> v) { return Tensor2::row_vector(v); }

std::vector<double> as_vec(const Tensor2& t) { return t.data(); }

}  // namespace

LossGrad head_loss(std::span<const double> output, std::span<const double> target, Head head) {
  return head == Head::Regression ? mse_loss(output, target) : bce_loss(output, target);
}

// ------------------------------------------------------ conditional linear

double predict_cond_linear(const ConditionalLinearParams& p, std::span<const double> x,
                           std::span<const double> mu) {
  require_len(x.size(), p.w.rows(), "predict_cond_linear x");
  require_len(mu.size(), p.w.cols(), "predict_cond_linear mu");
  return dot(x, matvec(p.w, mu));
}

CondLinearGrad grad_cond_linear(const ConditionalLinearParams& p, const Tensor2& x,
                                std::span<const double> y, std::span<const double> mu,
                                Head head) {
  require_batch(x, y, p.w.rows(), "grad_cond_linear");
  require_len(mu.size(), p.w.cols(), "grad_cond_linear mu");
  // X W mu = X c with c = W mu, so dW = X^T g mu^T.
  const auto c = matvec(p.w, mu);
  const auto out = matvec(x, c);
  auto lg = head_loss(out, y, head);
  std::vector<double> xtg(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t i = 0; i < x.cols(); ++i) xtg[i] += row[i] * lg.grad[r];
  }
  CondLinearGrad g;
  g.loss = lg.loss;
  g.dw = Tensor2(p.w.rows(), p.w.cols());
  for (std::size_t i = 0; i < p.w.rows(); ++i)
    for (std::size_t j = 0; j < p.w.cols(); ++j) g.dw(i, j) = xtg[i] * mu[j];
  return g;
}

// ---------------------------------------------------------------- ensemble

namespace {

void check_ensemble(const EnsembleParams& p, std::size_t x_dim, std::size_t mu_dim,
                    const char* what) {
  if (p.w_u.cols() != p.w_v.cols() || p.w_u.cols() < 2) {
    throw DimensionError(std::string(what) + ": W_u " + p.w_u.shape_str() + " and W_v " +
                         p.w_v.shape_str() + " must share an ensemble width >= 2");
  }
  require_len(x_dim, p.w_v.rows(), what);
  require_len(mu_dim, p.w_u.rows(), what);
}

std::vector<double> gate(const EnsembleParams& p, std::span<const double> mu) {
  const auto u = matvec(transpose(p.w_u), mu);
  return softmax(u);
}

}  // namespace

double predict_ensemble(const EnsembleParams& p, std::span<const double> x,
                        std::span<const double> mu) {
  check_ensemble(p, x.size(), mu.size(), "predict_ensemble");
  const auto s = gate(p, mu);
  const auto v = matvec(transpose(p.w_v), x);
  return dot(v, s);
}

EnsembleGrad grad_ensemble(const EnsembleParams& p, const Tensor2& x, std::span<const double> y,
                           std::span<const double> mu, Head head) {
  require_batch(x, y, p.w_v.rows(), "grad_ensemble");
  check_ensemble(p, x.cols(), mu.size(), "grad_ensemble");
  const std::size_t width = p.w_u.cols();
  const auto s = gate(p, mu);
  const Tensor2 v = matmul(x, p.w_v);  // n x E
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = dot(v.row(r), s);
  auto lg = head_loss(out, y, head);

  EnsembleGrad g;
  g.loss = lg.loss;
  g.dw_v = Tensor2(p.w_v.rows(), width);
  // d y_hat / d u_e = s_e (v_e - y_hat), summed over the batch
  std::vector<double> du(width, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double gr = lg.grad[r];
    auto xr = x.row(r);
    auto vr = v.row(r);
    for (std::size_t e = 0; e < width; ++e) {
      du[e] += gr * s[e] * (vr[e] - out[r]);
      const double coef = gr * s[e];
      for (std::size_t i = 0; i < xr.size(); ++i) g.dw_v(i, e) += coef * xr[i];
    }
  }
  g.dw_u = Tensor2(p.w_u.rows(), width);
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t e = 0; e < width; ++e) g.dw_u(i, e) = mu[i] * du[e];
  return g;
}

// --------------------------------------------------------------------- MLP

namespace {

void check_mlp(const MlpParams& p, std::size_t in_dim, const char* what) {
  if (p.layers.empty()) throw DimensionError(std::string(what) + ": no layers");
  std::size_t width = in_dim;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    if (layer.weight.cols() != width || layer.bias.size() != layer.weight.rows()) {
      throw DimensionError(std::string(what) + ": layer " + std::to_string(l) + " weight " +
                           layer.weight.shape_str() + " does not accept width " +
                           std::to_string(width));
    }
    width = layer.weight.rows();
  }
  if (width != 1) throw DimensionError(std::string(what) + ": output width must be 1");
}

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Activations per layer: acts[0] is the input, acts[l+1] the output of
// layer l (post-relu for hidden layers).
std::vector<std::vector<double>> mlp_forward(const MlpParams& p, std::vector<double> input) {
  std::vector<std::vector<double>> acts;
  acts.push_back(std::move(input));
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    auto z = matvec(layer.weight, acts.back());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];
    if (l + 1 < p.layers.size())
      for (double& a : z) a = relu(a);
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace

double predict_mlp(const MlpParams& p, std::span<const double> x, std::span<const double> mu) {
  check_mlp(p, x.size() + mu.size(), "predict_mlp");
  return mlp_forward(p, concat(x, mu)).back()[0];
}

MlpGrad grad_mlp(const MlpParams& p, const Tensor2& x, std::span<const double> y,
                 std::span<const double> mu, Head head) {
  if (p.layers.empty()) throw DimensionError("grad_mlp: no layers");
  require_batch(x, y, p.layers.front().weight.cols() - mu.size(), "grad_mlp");
  check_mlp(p, x.cols() + mu.size(), "grad_mlp");

  std::vector<std::vector<std::vector<double>>> cache(x.rows());
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    cache[r] = mlp_forward(p, concat(x.row(r), mu));
    out[r] = cache[r].back()[0];
  }
  auto lg = head_loss(out, y, head);

  MlpGrad g;
  g.loss = lg.loss;
  for (const auto& layer : p.layers) {
    g.layers.push_back({Tensor2(layer.weight.rows(), layer.weight.cols()),
                        std::vector<double>(layer.bias.size(), 0.0)});
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto& acts = cache[r];
    std::vector<double> delta{lg.grad[r]};
    for (std::size_t l = p.layers.size(); l-- > 0;) {
      const auto& layer = p.layers[l];
      auto& gl = g.layers[l];
      const auto& in = acts[l];
      for (std::size_t o = 0; o < delta.size(); ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gl.bias[o] += d;
        auto grow = gl.weight.row(o);
        for (std::size_t i = 0; i < in.size(); ++i) grow[i] += d * in[i];
      }
      if (l == 0) break;
      std::vector<double> prev(in.size(), 0.0);
      for (std::size_t o = 0; o < delta.size(); ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        auto wrow = layer.weight.row(o);
        for (std::size_t i = 0; i < in.size(); ++i) prev[i] += d * wrow[i];
      }
      // relu derivative; the stored activation is post-relu
      for (std::size_t i = 0; i < prev.size(); ++i)
        if (in[i] <= 0.0) prev[i] = 0.0;
      delta = std::move(prev);
    }
  }
  return g;
}

// ---------------------------------------------------- federated model zoo

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::CondLinear: return "cond_linear";
    case ModelKind::Ensemble: return "ensemble";
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Linear: return "linear";
  }
  return "unknown";
}

ConditionalLinearParams cond_linear_params(const ParamSet& p) { return {p.value("W")}; }

EnsembleParams ensemble_params(const ParamSet& p) { return {p.value("W_u"), p.value("W_v")}; }

namespace {

std::string layer_name(std::size_t l, const char* part) {
  return "layer" + std::to_string(l) + "." + part;
}

}  // namespace

MlpParams mlp_params(const ParamSet& p) {
  MlpParams out;
  for (std::size_t l = 0; p.contains(layer_name(l, "weight")); ++l) {
    out.layers.push_back({p.value(layer_name(l, "weight")), as_vec(p.value(layer_name(l, "bias")))});
  }
  return out;
}

namespace {

Tensor2 gaussian(SeededRng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Tensor2 t(rows, cols);
  for (double& v : t.flat()) v = stddev * rng.normal();
  return t;
}

std::vector<double> forward_rows(const Tensor2& x,
                                 const std::function<double(std::span<const double>)>& f) {
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = f(x.row(r));
  return out;
}

class CondLinearModel final : public ConditionalModel {
 public:
  explicit CondLinearModel(ModelShape shape) : shape_(std::move(shape)) {}
  ModelKind kind() const override { return ModelKind::CondLinear; }
  ParamSet init(SeededRng& rng) const override {
    ParamSet p;
    p.add("W", gaussian(rng, shape_.x_dim, shape_.mu_dim, 0.01));
    return p;
  }
  std::vector<double> forward(const ParamSet& p, const Tensor2& x,
                              std::span<const double> mu) const override {
    const auto params = cond_linear_params(p);
    const auto c = matvec(params.w, mu);
    return matvec(x, c);
  }
  double loss_grad(ParamSet& p, const Tensor2& x, std::span<const double> y,
                   std::span<const double> mu, Head head) const override {
    auto g = grad_cond_linear(cond_linear_params(p), x, y, mu, head);
    p.grad("W") = std::move(g.dw);
    return g.loss;
  }

 private:
  ModelShape shape_;
};

class EnsembleModel final : public ConditionalModel {
 public:
  explicit EnsembleModel(ModelShape shape) : shape_(std::move(shape)) {}
  ModelKind kind() const override { return ModelKind::Ensemble; }
  ParamSet init(SeededRng& rng) const override {
    ParamSet p;
    // Neutral gate; experts start spread out so the gate has something to
    // choose between before it saturates.
    p.add("W_u", Tensor2(shape_.mu_dim, shape_.ensemble_width));
    p.add("W_v", gaussian(rng, shape_.x_dim, shape_.ensemble_width, 1.0));
    return p;
  }
  std::vector<double> forward(const ParamSet& p, const Tensor2& x,
                              std::span<const double> mu) const override {
    const auto params = ensemble_params(p);
    const auto s = gate(params, mu);
    return matvec(x, matvec(params.w_v, s));
  }
  double loss_grad(ParamSet& p, const Tensor2& x, std::span<const double> y,
                   std::span<const double> mu, Head head) const override {
    auto g = grad_ensemble(ensemble_params(p), x, y, mu, head);
    p.grad("W_u") = std::move(g.dw_u);
    p.grad("W_v") = std::move(g.dw_v);
    return g.loss;
  }

 private:
  ModelShape shape_;
};

class MlpModel final : public ConditionalModel {
 public:
  explicit MlpModel(ModelShape shape) : shape_(std::move(shape)) {}
  ModelKind kind() const override { return ModelKind::Mlp; }
  ParamSet init(SeededRng& rng) const override {
    ParamSet p;
    std::size_t fan_in = shape_.x_dim + shape_.mu_dim;
    std::vector<std::size_t> widths = shape_.hidden;
    widths.push_back(1);
    for (std::size_t l = 0; l < widths.size(); ++l) {
      const bool last = l + 1 == widths.size();
      const double stddev = std::sqrt((last ? 1.0 : 2.0) / static_cast<double>(fan_in));
      p.add(layer_name(l, "weight"), gaussian(rng, widths[l], fan_in, stddev));
      p.add(layer_name(l, "bias"), Tensor2(1, widths[l]));
      fan_in = widths[l];
    }
    return p;
  }
  std::vector<double> forward(const ParamSet& p, const Tensor2& x,
                              std::span<const double> mu) const override {
    const auto params = mlp_params(p);
    return forward_rows(x, [&](std::span<const double> row) { return predict_mlp(params, row, mu); });
  }
  double loss_grad(ParamSet& p, const Tensor2& x, std::span<const double> y,
                   std::span<const double> mu, Head head) const override {
    auto g = grad_mlp(mlp_params(p), x, y, mu, head);
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
      p.grad(layer_name(l, "weight")) = std::move(g.layers[l].weight);
      p.grad(layer_name(l, "bias")) = as_row(g.layers[l].bias);
    }
    return g.loss;
  }

 private:
  ModelShape shape_;
};

// x^T beta; ignores mu. Used to train the logistic reference models.
class LinearModel final : public ConditionalModel {
 public:
  explicit LinearModel(ModelShape shape) : shape_(std::move(shape)) {}
  ModelKind kind() const override { return ModelKind::Linear; }
  ParamSet init(SeededRng&) const override {
    ParamSet p;
    p.add("beta", Tensor2(shape_.x_dim, 1));
    return p;
  }
  std::vector<double> forward(const ParamSet& p, const Tensor2& x,
                              std::span<const double>) const override {
    return matvec(x, p.value("beta").flat());
  }
  double loss_grad(ParamSet& p, const Tensor2& x, std::span<const double> y,
                   std::span<const double>, Head head) const override {
    require_batch(x, y, shape_.x_dim, "linear loss_grad");
    const auto out = matvec(x, p.value("beta").flat());
    auto lg = head_loss(out, y, head);
    Tensor2& g = p.grad("beta");
    g.fill(0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto row = x.row(r);
      for (std::size_t i = 0; i < row.size(); ++i) g(i, 0) += lg.grad[r] * row[i];
    }
    return lg.loss;
  }

 private:
  ModelShape shape_;
};

}  // namespace

std::unique_ptr<ConditionalModel> make_model(ModelKind kind, const ModelShape& shape) {
  if (shape.x_dim == 0) throw ArgumentError("make_model: x_dim must be positive");
  switch (kind) {
    case ModelKind::CondLinear:
      return std::make_unique<CondLinearModel>(shape);
    case ModelKind::Ensemble:
      if (shape.ensemble_width < 2) throw ArgumentError("make_model: ensemble width must be >= 2");
      return std::make_unique<EnsembleModel>(shape);
    case ModelKind::Mlp:
      return std::make_unique<MlpModel>(shape);
    case ModelKind::Linear:
      return std::make_unique<LinearModel>(shape);
  }
  throw ArgumentError("make_model: unknown model kind");
}

// ------------------------------------------------------- least squares

std::vector<double> solve_linear(Tensor2 a, std::vector<double> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) {
    throw DimensionError("solve_linear: system " + a.shape_str() + " with rhs of length " +
                         std::to_string(b.size()));
  }
  double scale = 0.0;
  for (double v : a.flat()) scale = std::max(scale, std::abs(v));
  const double tiny = scale * 1e-13 * static_cast<double>(std::max<std::size_t>(n, 1));

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    if (!(std::abs(a(pivot, col)) > tiny)) {
      throw NumericError("solve_linear: singular system, pivot column " + std::to_string(col) +
                         " has magnitude " + std::to_string(std::abs(a(pivot, col))));
    }
    if (pivot != col) {
      auto rp = a.row(pivot);
      auto rc = a.row(col);
      std::swap_ranges(rp.begin(), rp.end(), rc.begin());
      std::swap(b[pivot], b[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a(i, c) * x[c];
    x[i] = s / a(i, i);
  }
  require_finite(x, "solve_linear solution");
  return x;
}

std::vector<double> fit_ols(const Tensor2& x, std::span<const double> y, double ridge) {
  if (x.rows() != y.size()) {
    throw DimensionError("fit_ols: " + std::to_string(x.rows()) + " rows but " +
                         std::to_string(y.size()) + " targets");
  }
  if (ridge < 0.0) throw ArgumentError("fit_ols: ridge must be non-negative");
  if (x.rows() < x.cols() && ridge == 0.0) {
    throw ArgumentError("fit_ols: " + std::to_string(x.rows()) + " rows < " +
                        std::to_string(x.cols()) + " columns requires ridge > 0");
  }
  Tensor2 xtx = matmul_tn(x, x);
  for (std::size_t i = 0; i < xtx.rows(); ++i) xtx(i, i) += ridge;
  std::vector<double> xty(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) xty[c] += row[c] * y[r];
  }
  return solve_linear(std::move(xtx), std::move(xty));
}

std::vector<double> fit_ols_or_ridge(const Tensor2& x, std::span<const double> y) {
  try {
    if (x.rows() >= x.cols()) return fit_ols(x, y, 0.0);
  } catch (const NumericError&) {
  }
  return fit_ols(x, y, kRidgeFallback);
}

// ------------------------------------------------------------ baselines

std::string to_string(BaselineScope scope) {
  switch (scope) {
    case BaselineScope::Global: return "global";
    case BaselineScope::Cluster: return "cluster";
    case BaselineScope::Client: return "client";
  }
  return "unknown";
}

double predict_linear(std::span<const double> beta, std::span<const double> x) {
  return dot(beta, x);
}

namespace {

bool in_scope(const ClientShard& s, BaselineScope scope, std::size_t id) {
  switch (scope) {
    case BaselineScope::Global: return true;
    case BaselineScope::Cluster: return s.cluster_id == id;
    case BaselineScope::Client: return s.client_id == id;
  }
  return false;
}

std::vector<double> train_logistic(const Tensor2& x, std::span<const double> y,
                                   const LogisticFitOptions& opts) {
  if (opts.batch_size == 0) throw ArgumentError("fit_baseline: batch size must be positive");
  ModelShape shape;
  shape.x_dim = x.cols();
  auto model = make_model(ModelKind::Linear, shape);
  SeededRng rng(opts.seed);
  ParamSet params = model->init(rng);
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  Tensor2 xb;
  std::vector<double> yb;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t len = std::min(opts.batch_size, order.size() - start);
      xb = Tensor2(len, x.cols());
      yb.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        auto src = x.row(order[start + i]);
        std::copy(src.begin(), src.end(), xb.row(i).begin());
        yb[i] = y[order[start + i]];
      }
      model->loss_grad(params, xb, yb, {}, Head::Binary);
      adamw_step(params, opts.adam);
    }
  }
  return params.value("beta").data();
}

}  // namespace

BaselineParams fit_baseline(std::span<const ClientShard> shards, BaselineScope scope,
                            std::size_t id, Head head, const LogisticFitOptions& opts) {
  std::size_t rows = 0;
  std::size_t cols = 0;
  for (const auto& s : shards) {
    if (!in_scope(s, scope, id)) continue;
    if (cols != 0 && s.x_train.cols() != cols) {
      throw DimensionError("fit_baseline: shards disagree on feature width");
    }
    cols = s.x_train.cols();
    rows += s.x_train.rows();
  }
  if (rows == 0) {
    throw ArgumentError("fit_baseline: no shards match scope " + to_string(scope) + " " +
                        std::to_string(id));
  }
  Tensor2 x(rows, cols);
  std::vector<double> y;
  y.reserve(rows);
  std::size_t r = 0;
  for (const auto& s : shards) {
    if (!in_scope(s, scope, id)) continue;
    for (std::size_t i = 0; i < s.x_train.rows(); ++i, ++r) {
      auto src = s.x_train.row(i);
      std::copy(src.begin(), src.end(), x.row(r).begin());
    }
    y.insert(y.end(), s.y_train.begin(), s.y_train.end());
  }
  BaselineParams out;
  out.scope = scope;
  out.id = id;
  out.beta = head == Head::Regression ? fit_ols_or_ridge(x, y) : train_logistic(x, y, opts);
  return out;
}

// ---------------------------------------------------------- stationarity

double stationarity_residual(std::span<const ClientShard> shards, const Tensor2& w) {
  if (shards.empty()) throw ArgumentError("stationarity_residual: no shards");
  const std::size_t d = shards.front().x_train.cols();
  if (w.rows() != d || w.cols() != d) {
    throw DimensionError("stationarity_residual: W " + w.shape_str() + " for " +
                         std::to_string(d) + " features");
  }
  Tensor2 grad(d, d);
  for (const auto& s : shards) {
    if (s.x_train.cols() != d) throw DimensionError("stationarity_residual: ragged shards");
    const auto mu = fit_ols(s.x_train, s.y_train, 0.0);
    const auto wmu = matvec(w, mu);
    const auto pred = matvec(s.x_train, wmu);
    std::vector<double> xtr(d, 0.0);
    for (std::size_t r = 0; r < s.x_train.rows(); ++r) {
      const double res = pred[r] - s.y_train[r];
      auto row = s.x_train.row(r);
      for (std::size_t i = 0; i < d; ++i) xtr[i] += row[i] * res;
    }
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) grad(i, j) += xtr[i] * mu[j];
  }
  double worst = 0.0;
  for (double v : grad.flat()) worst = std::max(worst, std::abs(v));
  return worst;
}

double stationarity_residual(std::span<const ClientShard> shards) {
  if (shards.empty()) throw ArgumentError("stationarity_residual: no shards");
  return stationarity_residual(shards, Tensor2::identity(shards.front().x_train.cols()));
}

}  // namespace fedstat
