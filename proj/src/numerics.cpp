#include "fedstat/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fedstat/errors.hpp"

namespace fedstat {

// ---------------------------------------------------------------- Tensor2

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    std::ostringstream msg;
    msg << "Tensor2: " << data_.size() << " values do not fill a (" << rows << " x " << cols
        << ") matrix";
    throw DimensionError(msg.str());
  }
}

Tensor2::Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Tensor2: ragged initializer rows");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Tensor2 Tensor2::column(std::span<const double> values) {
  return Tensor2(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Tensor2 Tensor2::row_vector(std::span<const double> values) {
  return Tensor2(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Tensor2::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor2::shape_str() const {
  std::ostringstream s;
  s << "(" << rows_ << " x " << cols_ << ")";
  return s.str();
}

// ---------------------------------------------------------- linear algebra

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.shape_str() + " by " + b.shape_str());
  }
  Tensor2 out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  require_finite(out, "matmul result");
  return out;
}

Tensor2 transpose(const Tensor2& a) {
  Tensor2 out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: cannot multiply transpose of " + a.shape_str() + " by " +
                         b.shape_str());
  }
  Tensor2 out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto a_row = a.row(r);
    auto b_row = b.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ai = a_row[i];
      if (ai == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += ai * b_row[j];
    }
  }
  require_finite(out, "matmul_tn result");
  return out;
}

std::vector<double> matvec(const Tensor2& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw DimensionError("matvec: " + a.shape_str() + " times vector of length " +
                         std::to_string(x.size()));
  }
  std::vector<double> out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_finite(const Tensor2& t, const std::string& what) {
  require_finite(t.flat(), what);
}

void require_finite(std::span<const double> v, const std::string& what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError(what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

// ----------------------------------------------------- activations, losses

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("softmax: empty input");
  const double peak = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

LossGrad mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw ArgumentError("mse_loss: prediction length " + std::to_string(pred.size()) +
                        " != target length " + std::to_string(target.size()));
  }
  if (pred.empty()) throw ArgumentError("mse_loss: empty input");
  const double n = static_cast<double>(pred.size());
  LossGrad out;
  out.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - target[i];
    out.loss += r * r;
    out.grad[i] = 2.0 * r / n;
  }
  out.loss /= n;
  return out;
}

LossGrad bce_loss(std::span<const double> logit, std::span<const double> target) {
  if (logit.size() != target.size()) {
    throw ArgumentError("bce_loss: logit length " + std::to_string(logit.size()) +
                        " != target length " + std::to_string(target.size()));
  }
  if (logit.empty()) throw ArgumentError("bce_loss: empty input");
  const double n = static_cast<double>(logit.size());
  LossGrad out;
  out.grad.resize(logit.size());
  for (std::size_t i = 0; i < logit.size(); ++i) {
    const double t = target[i];
    if (t != 0.0 && t != 1.0) {
      throw ArgumentError("bce_loss: target " + std::to_string(t) + " at index " +
                          std::to_string(i) + " is not 0 or 1");
    }
    const double z = logit[i];
    // max(z,0) - z*t + log(1 + exp(-|z|))
    out.loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    out.grad[i] = (sigmoid(z) - t) / n;
  }
  out.loss /= n;
  return out;
}

// ---------------------------------------------------------------- ParamSet

void ParamSet::add(const std::string& name, Tensor2 value) {
  if (contains(name)) throw ArgumentError("ParamSet: duplicate entry '" + name + "'");
  ParamEntry e;
  e.grad = Tensor2(value.rows(), value.cols());
  e.adam_m = Tensor2(value.rows(), value.cols());
  e.adam_v = Tensor2(value.rows(), value.cols());
  e.value = std::move(value);
  entries_.emplace(name, std::move(e));
}

ParamEntry& ParamSet::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ArgumentError("ParamSet: no entry '" + name + "'");
  return it->second;
}

const ParamEntry& ParamSet::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ArgumentError("ParamSet: no entry '" + name + "'");
  return it->second;
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

void ParamSet::assign_values(const ParamSet& other) {
  if (!same_layout(other)) throw DimensionError("ParamSet::assign_values: layout mismatch");
  auto src = other.entries_.begin();
  for (auto& [name, e] : entries_) {
    e.value = src->second.value;
    ++src;
  }
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto b = other.entries_.begin();
  for (const auto& [name, e] : entries_) {
    if (name != b->first || !e.value.same_shape(b->second.value)) return false;
    ++b;
  }
  return true;
}

// --------------------------------------------------------------- optimizers

void adamw_step(ParamSet& params, const AdamWOptions& opts) {
  for (const auto& [name, e] : params) require_finite(e.grad, "adamw_step: gradient '" + name + "'");
  params.advance_step();
  const double t = static_cast<double>(params.step());
  const double bc1 = 1.0 - std::pow(opts.beta1, t);
  const double bc2 = 1.0 - std::pow(opts.beta2, t);
  const double decay = 1.0 - opts.lr * opts.weight_decay;
  for (auto& [name, e] : params) {
    auto theta = e.value.flat();
    auto g = e.grad.flat();
    auto m = e.adam_m.flat();
    auto v = e.adam_v.flat();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] *= decay;
      theta[i] -= opts.lr * m_hat / (std::sqrt(v_hat) + opts.eps);
    }
  }
}

void sgd_step(ParamSet& params, double lr, double weight_decay) {
  for (const auto& [name, e] : params) require_finite(e.grad, "sgd_step: gradient '" + name + "'");
  params.advance_step();
  for (auto& [name, e] : params) {
    auto theta = e.value.flat();
    auto g = e.grad.flat();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (weight_decay != 0.0) theta[i] -= lr * weight_decay * theta[i];
      theta[i] -= lr * g[i];
    }
  }
}

// ------------------------------------------------------- gradient oracle

std::map<std::string, Tensor2> finite_diff_grad(const ScalarObjective& f, ParamSet params,
                                                double h) {
  if (!(h > 0.0)) throw ArgumentError("finite_diff_grad: step h must be positive");
  std::map<std::string, Tensor2> out;
  for (auto& [name, e] : params) {
    Tensor2 g(e.value.rows(), e.value.cols());
    auto theta = e.value.flat();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double orig = theta[i];
      theta[i] = orig + h;
      const double up = f(params);
      theta[i] = orig - h;
      const double down = f(params);
      theta[i] = orig;
      g.flat()[i] = (up - down) / (2.0 * h);
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

double max_relative_error(const Tensor2& a, const Tensor2& b, double floor) {
  if (!a.same_shape(b)) {
    throw DimensionError("max_relative_error: " + a.shape_str() + " vs " + b.shape_str());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.flat()[i];
    const double y = b.flat()[i];
    const double denom = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

}  // namespace fedstat
