#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wvtr/common.hpp"

namespace wvtr {

enum class NoiseLaw {
  none,       // Y = f*(X)
  bernoulli,  // Y ~ Bernoulli(f*(X))
  symmetric,  // Y = f*(X) +/- a with a = scale * min(f*, 1 - f*)
};

NoiseLaw parse_noise_law(const std::string& text);
std::string to_string(NoiseLaw law);

/// Synthetic weighted regression stream with targets in [0, 1] (L = 1).
/// Covariates and the true parameter are nonnegative with ||theta*||_1 = 1,
/// so f*(x) = <theta*, x> lies in [0, 1]. Weights are w = 1/max(sd, sigma_min)
/// with sd the true conditional standard deviation, which gives
/// w^2 Var <= 1 (sigma = 1) and |w| <= 1/sigma_min (W).
struct ConcentrationTrial {
  std::size_t dim = 5;
  std::size_t steps = 200;
  double delta = 0.1;
  double lambda = 1.0;        // regularizer inside D_F and the sqrt(lambda) term
  double fit_lambda = 0.0;    // ridge used for f_hat; 0 is plain weighted least squares
  double epsilon = 1e-3;      // covering resolution
  double sigma_min = 0.05;
  double weight_scale = 1.0;  // multiplies every weight
  double noise_scale = 1.0;   // symmetric law only
  NoiseLaw noise = NoiseLaw::bernoulli;
  double log_covering = 0.0;  // <= 0 selects dim * log(B / epsilon) with B = 1
  /// Fixed theta*; empty draws a fresh one per trial.
  Eigen::VectorXd theta;

  void validate() const;
};

struct TrialOutcome {
  double lhs = 0.0;      // sum_s w_s^2 (f_hat(X_s) - f*(X_s))^2
  double beta_sq = 0.0;  // beta_{t+1}^2
  bool violated = false;
};

/// iota_t = 16 log(2 N t^2 (log(sigma^2 W^2 L^2 t) + 2)(log(W^2 L^2) + 2) / delta).
double concentration_iota(double log_covering, std::size_t t, double sigma, double weight_bound, double range,
                           double delta);

TrialOutcome run_concentration_trial(const ConcentrationTrial& trial, Rng& rng);

struct BatteryResult {
  std::size_t trials = 0;
  std::size_t violations = 0;
  double rate = 0.0;
  double delta = 0.0;
  std::size_t allowed = 0;  // 99% quantile of Binomial(trials, delta)
  double max_ratio = 0.0;   // max lhs / beta^2
  bool pass = false;
};

/// Upper q-quantile of Binomial(n, p): the smallest k with P(X <= k) >= q.
std::size_t binomial_quantile(std::size_t n, double p, double q);

/// Runs `trials` independent trials; trial i draws from Rng(seed + i).
BatteryResult run_concentration_battery(const ConcentrationTrial& trial, std::size_t trials, std::uint64_t seed,
                                        double confidence = 0.99);

struct StreamStep {
  Eigen::VectorXd phi;
  double sigma = 1.0;
};

struct EllipticalCheck {
  double potential = 0.0;
  double bound = 0.0;
  bool pass = false;
};

/// Realized potential sum_t min{1, ||x_t||^2_{Sigma_{t-1}^{-1}}} of x_t = phi_t / sigma_t
/// against 2 d log(1 + T L^2 / (d lambda)), where L bounds ||x_t||.
/// A non-positive `feature_bound` uses the largest ||x_t|| in the stream.
EllipticalCheck elliptical_bound_check(std::span<const StreamStep> stream, double lambda, double feature_bound = 0.0);

/// Random stream with ||phi|| <= 1 and sigma in [sigma_min, 1]; a mix of
/// isotropic, low-rank and repeated directions.
std::vector<StreamStep> random_stream(std::size_t dim, std::size_t steps, double sigma_min, Rng& rng);

struct StatcheckRow {
  std::string battery;
  std::string noise;
  std::size_t dim = 0;
  std::size_t steps = 0;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double rate = 0.0;
  double delta = 0.0;
  std::size_t allowed = 0;
  double max_ratio = 0.0;
  bool pass = false;
};

/// Default batteries behind the `statcheck` subcommand: concentration
/// coverage under each noise law and elliptical streams.
std::vector<StatcheckRow> run_statcheck_suite(std::size_t trials, std::uint64_t seed);

void write_statcheck_csv(std::span<const StatcheckRow> rows, std::ostream& out);

}  // namespace wvtr
