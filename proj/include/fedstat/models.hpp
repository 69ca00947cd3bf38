#pragma once

// Statistics-conditioned global models, their classifier variants, the
// closed-form OLS solver, the unconditional reference regressions, and the
// stationarity check for the conditional linear model.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedstat/numerics.hpp"
#include "fedstat/rng.hpp"
#include "fedstat/shard.hpp"
#include "fedstat/tensor.hpp"

namespace fedstat {

/// Regression models are trained with MSE on the raw output; binary
/// classifiers treat the output as a logit and use cross-entropy.
enum class Head { Regression, Binary };

LossGrad head_loss(std::span<const double> output, std::span<const double> target, Head head);

/// sigmoid of a model's scalar output.
inline double classifier_probability(double logit) { return sigmoid(logit); }

// ------------------------------------------------------ conditional linear

/// y_hat = x^T W mu, W is (k+1) x m.
struct ConditionalLinearParams {
  Tensor2 w;
};

double predict_cond_linear(const ConditionalLinearParams& p, std::span<const double> x,
                           std::span<const double> mu);

struct CondLinearGrad {
  double loss = 0.0;
  Tensor2 dw;
};

/// Mean loss over the batch rows of x and its gradient with respect to W.
/// mu is an input, not a parameter.
CondLinearGrad grad_cond_linear(const ConditionalLinearParams& p, const Tensor2& x,
                                std::span<const double> y, std::span<const double> mu,
                                Head head = Head::Regression);

// ---------------------------------------------------------------- ensemble

/// Gate u = mu^T W_u (m x E), experts v = x^T W_v ((k+1) x E),
/// y_hat = v^T softmax(u).
struct EnsembleParams {
  Tensor2 w_u;
  Tensor2 w_v;
};

double predict_ensemble(const EnsembleParams& p, std::span<const double> x,
                        std::span<const double> mu);

struct EnsembleGrad {
  double loss = 0.0;
  Tensor2 dw_u;
  Tensor2 dw_v;
};

EnsembleGrad grad_ensemble(const EnsembleParams& p, const Tensor2& x, std::span<const double> y,
                           std::span<const double> mu, Head head = Head::Regression);

// --------------------------------------------------------------------- MLP

struct DenseLayer {
  Tensor2 weight;  // out x in
  std::vector<double> bias;
};

/// Feed-forward network on [x || mu]; relu after every layer but the last,
/// which has a single linear output.
struct MlpParams {
  std::vector<DenseLayer> layers;
};

double predict_mlp(const MlpParams& p, std::span<const double> x, std::span<const double> mu);

struct MlpGrad {
  double loss = 0.0;
  std::vector<DenseLayer> layers;
};

MlpGrad grad_mlp(const MlpParams& p, const Tensor2& x, std::span<const double> y,
                 std::span<const double> mu, Head head = Head::Regression);

// ---------------------------------------------------- federated model zoo

enum class ModelKind { CondLinear, Ensemble, Mlp, Linear };

std::string to_string(ModelKind kind);

struct ModelShape {
  std::size_t x_dim = 0;   // k + 1, bias included
  std::size_t mu_dim = 0;  // m
  std::size_t ensemble_width = 16;
  std::vector<std::size_t> hidden{64, 64};
};

/// A global model y_hat = f(x, mu; params) whose parameters live in a
/// ParamSet, so the federation can average and optimize them uniformly.
class ConditionalModel {
 public:
  virtual ~ConditionalModel() = default;
  virtual ModelKind kind() const = 0;
  virtual ParamSet init(SeededRng& rng) const = 0;
  /// Scalar output (prediction or logit) for every row of x.
  virtual std::vector<double> forward(const ParamSet& p, const Tensor2& x,
                                      std::span<const double> mu) const = 0;
  /// Mean loss over the rows of x; overwrites the gradients in p.
  virtual double loss_grad(ParamSet& p, const Tensor2& x, std::span<const double> y,
                           std::span<const double> mu, Head head) const = 0;
};

std::unique_ptr<ConditionalModel> make_model(ModelKind kind, const ModelShape& shape);

ConditionalLinearParams cond_linear_params(const ParamSet& p);
EnsembleParams ensemble_params(const ParamSet& p);
MlpParams mlp_params(const ParamSet& p);

// ------------------------------------------------------- least squares

/// Solves a x = b by Gaussian elimination with partial pivoting. Throws
/// NumericError naming the pivot column when the system is singular.
std::vector<double> solve_linear(Tensor2 a, std::vector<double> b);

/// Solves (X^T X + ridge I) beta = X^T y.
std::vector<double> fit_ols(const Tensor2& x, std::span<const double> y, double ridge = 0.0);

inline constexpr double kRidgeFallback = 1e-8;

/// fit_ols with ridge 0, retried with kRidgeFallback if singular.
std::vector<double> fit_ols_or_ridge(const Tensor2& x, std::span<const double> y);

// ------------------------------------------------------------ baselines

enum class BaselineScope { Global, Cluster, Client };

std::string to_string(BaselineScope scope);

/// y_hat = x^T beta fitted to the rows the scope selects.
struct BaselineParams {
  std::vector<double> beta;
  BaselineScope scope = BaselineScope::Global;
  std::size_t id = 0;  // cluster or client id
};

struct LogisticFitOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 100;
  AdamWOptions adam{};
  std::uint64_t seed = 0;
};

/// Global pools every shard, Cluster(id) pools shards whose cluster_id is
/// id, Client(id) uses the shard with that client_id. Regression is solved
/// in closed form; classification trains logistic regression with
/// mini-batch AdamW.
BaselineParams fit_baseline(std::span<const ClientShard> shards, BaselineScope scope,
                            std::size_t id, Head head, const LogisticFitOptions& opts = {});

double predict_linear(std::span<const double> beta, std::span<const double> x);

// ---------------------------------------------------------- stationarity

/// Max-norm of dS/dW for S = 1/2 sum_i |X_i W mu_i - Y_i|^2 with
/// mu_i = (X_i^T X_i)^-1 X_i^T Y_i. NumericError on rank-deficient shards.
double stationarity_residual(std::span<const ClientShard> shards, const Tensor2& w);

/// Same, at W = I.
double stationarity_residual(std::span<const ClientShard> shards);

}  // namespace fedstat
