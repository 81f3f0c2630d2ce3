#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wvtr/model.hpp"

namespace wvtr {

/// ||phi||_{Sigma^{-1}} for a ridge summary (block-sparse feature).
double uncertainty_linear(const RidgeSummary& ctx, const BlockFeature& phi);

/// ||phi||_{Sigma^{-1}} for an explicit positive definite matrix; uses a
/// Cholesky solve, never an explicit inverse.
double uncertainty_linear(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& phi);

/// History and tuning for the oracle-driven uncertainty estimate.
struct UncertaintyContext {
  std::vector<Eigen::VectorXd> inputs;  // X_1..X_{t-1}
  std::vector<double> sigmas;           // sigma_1..sigma_{t-1}
  double lambda = 1.0;
  /// Upper bound on sum_s g*(X_s)^2 / sigma_s^2 + lambda.
  double bound = 1.0;
  double epsilon = 1e-4;
};

struct UncertaintyEstimate {
  double value = 0.0;
  std::size_t oracle_calls = 0;
};

/// Default doubling cap KH / sigma_min^2 + lambda.
double default_bound_cap(std::size_t episodes, std::size_t horizon, double sigma_min, double lambda);

/// Estimates D_F(query; history) for the difference class served by
/// `oracle`, via a doubling search over the constraint level and a binary
/// search over the weight of the query point. The result D~ satisfies
///   D~ - eps/sqrt(lambda) <= D_F <= sqrt(2) D~ + eps/sqrt(lambda)
/// for convex classes. With an empty history it returns sup g(query)/sqrt(lambda).
UncertaintyEstimate uncertainty_general(const UncertaintyContext& ctx, const Eigen::VectorXd& query,
                                        const RegressionOracle& oracle);

/// sum_t min{1, D_t^2 / sigma_t^2}.
double realized_potential(std::span<const double> uncertainties, std::span<const double> sigmas);

/// 2 d log(1 + T / (d lambda sigma_min^2)): the elliptical-potential cap for
/// unit-norm features weighted by 1/sigma with sigma >= sigma_min.
double elliptical_potential_bound(std::size_t dim, std::size_t steps, double lambda, double sigma_min);

/// Incremental tracker of the realized potential along a stream, with its
/// own Gram matrix Sigma_t = sum x x^T / sigma^2 + lambda I.
class PotentialTracker {
 public:
  PotentialTracker(std::size_t dim, double lambda);

  /// Returns min{1, D^2/sigma^2} for this step, then absorbs (phi, sigma).
  double push(const Eigen::VectorXd& phi, double sigma);

  double potential() const { return potential_; }
  std::size_t steps() const { return steps_; }

 private:
  RidgeSummary summary_;
  double potential_ = 0.0;
  std::size_t steps_ = 0;
};

}  // namespace wvtr
