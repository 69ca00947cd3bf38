#pragma once

// Dense linear algebra, activations and losses, the AdamW optimizer, and a
// central finite-difference gradient oracle.

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedstat/tensor.hpp"

namespace fedstat {

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 transpose(const Tensor2& a);
/// a^T * b without materializing the transpose.
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);
/// Matrix-vector product a * x.
std::vector<double> matvec(const Tensor2& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);

/// Throws NumericError naming `what` when any entry is NaN or infinite.
void require_finite(const Tensor2& t, const std::string& what);
void require_finite(std::span<const double> v, const std::string& what);

std::vector<double> softmax(std::span<const double> v);
double sigmoid(double x);
double relu(double x);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d prediction, per element
};

/// Mean squared error and its gradient 2(pred - target)/n.
LossGrad mse_loss(std::span<const double> pred, std::span<const double> target);

/// Mean binary cross-entropy evaluated on logits; targets must be 0 or 1.
LossGrad bce_loss(std::span<const double> logit, std::span<const double> target);

struct ParamEntry {
  Tensor2 value;
  Tensor2 grad;
  Tensor2 adam_m;
  Tensor2 adam_v;
};

/// Named trainable tensors with gradient and Adam moment buffers. The step
/// counter is shared by every entry.
class ParamSet {
 public:
  using Map = std::map<std::string, ParamEntry>;

  void add(const std::string& name, Tensor2 value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  ParamEntry& entry(const std::string& name);
  const ParamEntry& entry(const std::string& name) const;
  Tensor2& value(const std::string& name) { return entry(name).value; }
  const Tensor2& value(const std::string& name) const { return entry(name).value; }
  Tensor2& grad(const std::string& name) { return entry(name).grad; }
  const Tensor2& grad(const std::string& name) const { return entry(name).grad; }

  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }
  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }
  std::size_t num_entries() const { return entries_.size(); }
  std::size_t num_scalars() const;

  std::size_t step() const { return step_; }
  void advance_step() { ++step_; }

  void zero_grad();
  /// Copy parameter values from `other`, leaving gradients, moments and
  /// the step counter untouched.
  void assign_values(const ParamSet& other);
  bool same_layout(const ParamSet& other) const;

 private:
  Map entries_;
  std::size_t step_ = 0;
};

struct AdamWOptions {
  double lr = 0.001;
  double weight_decay = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One AdamW step over every entry using the stored gradients. Weight decay
/// is decoupled: theta <- theta - lr*wd*theta, separate from the Adam term.
void adamw_step(ParamSet& params, const AdamWOptions& opts);

/// Plain gradient descent, theta <- theta - lr*g - lr*wd*theta.
void sgd_step(ParamSet& params, double lr, double weight_decay);

using ScalarObjective = std::function<double(const ParamSet&)>;

/// Central differences (f(theta+h) - f(theta-h)) / 2h for every coordinate
/// of every entry. Returned map is keyed like the ParamSet.
std::map<std::string, Tensor2> finite_diff_grad(const ScalarObjective& f, ParamSet params,
                                                double h = 1e-5);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
double max_relative_error(const Tensor2& a, const Tensor2& b, double floor = 1e-3);

}  // namespace fedstat
