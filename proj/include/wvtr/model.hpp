#pragma once

#include <atomic>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wvtr/env.hpp"

namespace wvtr {

/// A value function V : S -> [0, 1].
class ValueVector {
 public:
  ValueVector() = default;
  /// Throws NumericInputError on entries outside [0, 1] or non-finite.
  explicit ValueVector(Eigen::VectorXd values);

  static ValueVector zeros(std::size_t n) { return ValueVector(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))); }
  static ValueVector ones(std::size_t n) { return ValueVector(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n))); }

  /// Elementwise V^exponent; stays inside [0, 1].
  ValueVector power(unsigned exponent) const;

  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  double operator()(std::size_t s) const { return values_(static_cast<Eigen::Index>(s)); }
  const Eigen::VectorXd& values() const { return values_; }

 private:
  Eigen::VectorXd values_;
};

/// Regression input z = (s, a, V^{2^m}); the caller raises V before building it.
struct Query {
  std::size_t state = 0;
  std::size_t action = 0;
  ValueVector value;
};

/// One weighted regression sample. `weight` is 1/sigma_bar, so the squared
/// residual is multiplied by weight^2.
struct WeightedSample {
  Query query;
  double weight = 1.0;
  double target = 0.0;
};

/// Feature vector that is nonzero on a single block of the parameter
/// vector. Dense models use one block spanning all coordinates.
struct BlockFeature {
  std::size_t block = 0;
  Eigen::VectorXd values;

  Eigen::VectorXd to_dense(std::size_t n_blocks) const;
};

/// Linear mixture class P(s'|s,a) = <phi(s'|s,a), theta>. Implementations
/// expose phi_V(s,a) = sum_{s'} phi(s'|s,a) V(s') in block form.
class LinearMixture {
 public:
  virtual ~LinearMixture() = default;

  virtual std::size_t n_states() const = 0;
  virtual std::size_t n_actions() const = 0;
  virtual std::size_t n_blocks() const = 0;
  virtual std::size_t block_dim() const = 0;
  std::size_t dim() const { return n_blocks() * block_dim(); }

  virtual BlockFeature phi_v(std::size_t s, std::size_t a, const ValueVector& v) const = 0;
  BlockFeature phi_v(const Query& z) const { return phi_v(z.state, z.action, z.value); }
  Eigen::VectorXd phi_v_dense(std::size_t s, std::size_t a, const ValueVector& v) const;
};

/// Indicator features for a tabular MDP: d = |S|^2 |A|, one block of |S|
/// coordinates per (s, a). Features are scaled by 1/sqrt(|S|) so that
/// ||phi_V(s,a)|| <= 1 for every V in [0,1]^S; the matching parameter is
/// sqrt(|S|) times the transition table.
class TabularMixture final : public LinearMixture {
 public:
  TabularMixture(std::size_t n_states, std::size_t n_actions);

  std::size_t n_states() const override { return n_states_; }
  std::size_t n_actions() const override { return n_actions_; }
  std::size_t n_blocks() const override { return n_states_ * n_actions_; }
  std::size_t block_dim() const override { return n_states_; }

  using LinearMixture::phi_v;
  BlockFeature phi_v(std::size_t s, std::size_t a, const ValueVector& v) const override;

  double feature_scale() const { return scale_; }
  /// theta* reproducing the transition table of `mdp` exactly.
  Eigen::VectorXd true_parameters(const EpisodicMdp& mdp) const;
  /// Upper bound B on ||theta*||_2 under the feature scaling.
  double parameter_bound() const;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  double scale_;
};

/// Linear mixture given by an explicit feature table phi(s'|s,a) in R^d.
class FeatureMixture final : public LinearMixture {
 public:
  /// `features[s * n_actions + a]` is an |S| x d matrix whose row s' is phi(s'|s,a).
  FeatureMixture(std::size_t n_states, std::size_t n_actions, std::vector<Eigen::MatrixXd> features);

  std::size_t n_states() const override { return n_states_; }
  std::size_t n_actions() const override { return n_actions_; }
  std::size_t n_blocks() const override { return 1; }
  std::size_t block_dim() const override { return dim_; }

  using LinearMixture::phi_v;
  BlockFeature phi_v(std::size_t s, std::size_t a, const ValueVector& v) const override;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::size_t dim_;
  std::vector<Eigen::MatrixXd> features_;
};

/// Running summary of a weighted ridge problem in block-diagonal form:
///   Sigma = sum_i w_i^2 x_i x_i^T + lambda I,   b = sum_i w_i^2 y_i x_i.
/// Each block keeps a Cholesky factor updated by rank-1 updates.
class RidgeSummary {
 public:
  RidgeSummary() = default;
  RidgeSummary(std::size_t n_blocks, std::size_t block_dim, double lambda);
  /// Dense single-block summary.
  RidgeSummary(std::size_t dim, double lambda) : RidgeSummary(1, dim, lambda) {}

  /// Adds one sample with weight w (contributes w^2). Throws
  /// NumericInputError on non-finite or non-positive input.
  void add(const BlockFeature& x, double weight, double target);
  void add(const Eigen::VectorXd& x, double weight, double target) { add(BlockFeature{0, x}, weight, target); }

  /// Recomputes every Cholesky factor from the accumulated Gram blocks.
  void refactor();

  std::size_t n_blocks() const { return blocks_.size(); }
  std::size_t block_dim() const { return block_dim_; }
  std::size_t dim() const { return blocks_.size() * block_dim_; }
  double lambda() const { return lambda_; }
  std::size_t count() const { return count_; }

  const Eigen::MatrixXd& block_gram(std::size_t b) const { return blocks_[b].gram; }
  Eigen::MatrixXd gram() const;
  Eigen::VectorXd moment() const;

  /// x^T Sigma^{-1} x.
  double inverse_norm_squared(const BlockFeature& x) const;
  /// theta = Sigma^{-1} b.
  Eigen::VectorXd solve() const;

 private:
  struct Block {
    Eigen::MatrixXd gram;
    Eigen::VectorXd moment;
    Eigen::LLT<Eigen::MatrixXd> chol;
  };
  std::vector<Block> blocks_;
  std::size_t block_dim_ = 0;
  double lambda_ = 0.0;
  std::size_t count_ = 0;
};

/// Fitted linear model f(z) = <theta, phi_V(s,a)>.
class LinearPredictor {
 public:
  LinearPredictor() = default;
  LinearPredictor(Eigen::VectorXd theta, std::size_t block_dim)
      : theta_(std::move(theta)), block_dim_(block_dim) {}

  static LinearPredictor zero(std::size_t n_blocks, std::size_t block_dim) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_blocks * block_dim)), block_dim};
  }

  /// Unclamped inner product.
  double raw(const BlockFeature& x) const;
  /// Inner product clamped to [0, 1].
  double predict(const BlockFeature& x) const;

  const Eigen::VectorXd& theta() const { return theta_; }

 private:
  Eigen::VectorXd theta_;
  std::size_t block_dim_ = 0;
};

/// Closed-form weighted ridge solution theta = Sigma^{-1} b.
LinearPredictor oracle_fit(const RidgeSummary& summary);
LinearPredictor oracle_fit(std::span<const WeightedSample> samples, const LinearMixture& model,
                           double lambda);

/// Clamped prediction of a fitted model at a query.
double oracle_predict(const LinearPredictor& f, const LinearMixture& model, const Query& z);

// ---------------------------------------------------------------------------
// General regression oracle

/// Oracle sample: the squared residual is multiplied by `v`.
struct OracleSample {
  Eigen::VectorXd x;
  double v = 1.0;
  double y = 0.0;
};

/// A differentiable parametric class g_theta(x) with an optional convex
/// constraint set expressed through `project`.
class ParametricClass {
 public:
  virtual ~ParametricClass() = default;
  virtual std::size_t num_params() const = 0;
  virtual double predict(const Eigen::VectorXd& params, const Eigen::VectorXd& x) const = 0;
  /// d g_theta(x) / d theta.
  virtual Eigen::VectorXd gradient(const Eigen::VectorXd& params, const Eigen::VectorXd& x) const = 0;
  virtual void project(Eigen::VectorXd& /*params*/) const {}
};

/// g_theta(x) = <theta, x> with ||theta||_2 <= radius.
class LinearClass final : public ParametricClass {
 public:
  explicit LinearClass(std::size_t dim, double radius = std::numeric_limits<double>::infinity())
      : dim_(dim), radius_(radius) {}

  std::size_t num_params() const override { return dim_; }
  double predict(const Eigen::VectorXd& params, const Eigen::VectorXd& x) const override { return params.dot(x); }
  Eigen::VectorXd gradient(const Eigen::VectorXd&, const Eigen::VectorXd& x) const override { return x; }
  void project(Eigen::VectorXd& params) const override;
  double radius() const { return radius_; }

 private:
  std::size_t dim_;
  double radius_;
};

struct FittedFunction {
  std::shared_ptr<const ParametricClass> cls;
  Eigen::VectorXd params;
  bool converged = true;
  std::size_t iterations = 0;
  double stationarity = 0.0;  // gradient-mapping norm at exit
  std::vector<double> objective_trace;

  double operator()(const Eigen::VectorXd& x) const { return cls->predict(params, x); }
};

struct GradientOptions {
  std::size_t max_iterations = 20000;
  /// Stop once the gradient-mapping norm drops below
  /// tolerance * max(1, ||grad at the start||).
  double tolerance = 1e-10;
  bool record_objective = false;
};

/// Minimizes sum_s v_s (g(x_s) - y_s)^2 + lambda ||theta||^2 over the class
/// with monotone accelerated projected gradient steps and backtracking.
/// Non-convergence is reported through `converged`, not thrown.
FittedFunction general_oracle_fit(std::shared_ptr<const ParametricClass> cls,
                                  std::span<const OracleSample> samples, double lambda,
                                  const GradientOptions& options = {});

/// Regression oracle: returns argmin_g sum_s v_s (g(x_s) - y_s)^2.
class RegressionOracle {
 public:
  virtual ~RegressionOracle() = default;
  FittedFunction fit(std::span<const OracleSample> samples) const {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_fit(samples);
  }
  std::size_t calls() const { return calls_.load(std::memory_order_relaxed); }
  void reset_calls() { calls_.store(0); }

 protected:
  virtual FittedFunction do_fit(std::span<const OracleSample> samples) const = 0;

 private:
  mutable std::atomic<std::size_t> calls_{0};
};

/// Gradient-based oracle over any parametric class.
class GradientOracle final : public RegressionOracle {
 public:
  GradientOracle(std::shared_ptr<const ParametricClass> cls, GradientOptions options = {})
      : cls_(std::move(cls)), options_(options) {}

 protected:
  FittedFunction do_fit(std::span<const OracleSample> samples) const override;

 private:
  std::shared_ptr<const ParametricClass> cls_;
  GradientOptions options_;
};

/// Exact oracle for the norm-ball linear class: solves the constrained
/// least-squares problem through an eigendecomposition and a secular
/// equation for the ball multiplier.
class BallLinearOracle final : public RegressionOracle {
 public:
  BallLinearOracle(std::size_t dim, double radius);

 protected:
  FittedFunction do_fit(std::span<const OracleSample> samples) const override;

 private:
  std::shared_ptr<const LinearClass> cls_;
};

}  // namespace wvtr
