#include "wvtr/uncertainty.hpp"

#include <algorithm>
#include <cmath>

namespace wvtr {

double uncertainty_linear(const RidgeSummary& ctx, const BlockFeature& phi) {
  return std::sqrt(std::max(0.0, ctx.inverse_norm_squared(phi)));
}

double uncertainty_linear(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& phi) {
  Eigen::LLT<Eigen::MatrixXd> chol(sigma);
  if (chol.info() != Eigen::Success) throw NumericInputError("uncertainty matrix is not positive definite");
  return chol.matrixL().solve(phi).norm();
}

double default_bound_cap(std::size_t episodes, std::size_t horizon, double sigma_min, double lambda) {
  return static_cast<double>(episodes * horizon) / (sigma_min * sigma_min) + lambda;
}

UncertaintyEstimate uncertainty_general(const UncertaintyContext& ctx, const Eigen::VectorXd& query,
                                        const RegressionOracle& oracle) {
  if (ctx.inputs.size() != ctx.sigmas.size()) throw NumericInputError("inputs and sigmas differ in length");
  if (!(ctx.lambda > 0.0) || !(ctx.epsilon > 0.0)) throw NumericInputError("lambda and epsilon must be positive");

  UncertaintyEstimate out;
  const std::size_t n = ctx.inputs.size();
  std::vector<OracleSample> samples;
  samples.reserve(n + 1);
  for (std::size_t s = 0; s < n; ++s) {
    samples.push_back({ctx.inputs[s], 1.0 / (ctx.sigmas[s] * ctx.sigmas[s]), 0.0});
  }
  samples.push_back({query, 1.0, 1.0});

  if (n == 0) {
    const FittedFunction g = oracle.fit(samples);
    out.oracle_calls = 1;
    out.value = std::abs(g(query)) / std::sqrt(ctx.lambda);
    return out;
  }

  auto fit_with_weight = [&](double v) {
    samples.back().v = v;
    ++out.oracle_calls;
    return oracle.fit(samples);
  };
  auto history_norm = [&](const FittedFunction& g) {
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double gx = g(ctx.inputs[s]);
      sum += samples[s].v * gx * gx;
    }
    return sum;
  };
  double best = 0.0;
  auto consider = [&](const FittedFunction& g, double constraint) {
    best = std::max(best, g(query) / std::sqrt(constraint + ctx.lambda));
  };

  const double eps = ctx.epsilon;
  for (double beta_bar = 2.0 * ctx.lambda; beta_bar < 2.0 * ctx.bound; beta_bar *= 2.0) {
    const double beta = beta_bar - ctx.lambda;
    double v_lo = 0.0;
    double v_hi = 2.0 * beta / eps;
    const FittedFunction g_hi = fit_with_weight(v_hi);
    double z_lo = 0.0;
    double z_hi = g_hi(query);
    consider(g_hi, history_norm(g_hi));
    const double delta = eps * beta / 4.0;
    while (std::abs(z_hi - z_lo) > eps && std::abs(v_hi - v_lo) > delta) {
      const double v_mid = 0.5 * (v_hi + v_lo);
      const FittedFunction g = fit_with_weight(v_mid);
      const double constraint = history_norm(g);
      consider(g, constraint);
      if (constraint > beta) {
        v_hi = v_mid;
        z_hi = g(query);
      } else {
        v_lo = v_mid;
        z_lo = g(query);
      }
    }
  }
  out.value = best;
  return out;
}

double realized_potential(std::span<const double> uncertainties, std::span<const double> sigmas) {
  if (uncertainties.size() != sigmas.size()) throw NumericInputError("potential trace lengths differ");
  double sum = 0.0;
  for (std::size_t t = 0; t < uncertainties.size(); ++t) {
    const double ratio = uncertainties[t] / sigmas[t];
    sum += std::min(1.0, ratio * ratio);
  }
  return sum;
}

double elliptical_potential_bound(std::size_t dim, std::size_t steps, double lambda, double sigma_min) {
  const double d = static_cast<double>(dim);
  return 2.0 * d * std::log1p(static_cast<double>(steps) / (d * lambda * sigma_min * sigma_min));
}

PotentialTracker::PotentialTracker(std::size_t dim, double lambda) : summary_(dim, lambda) {}

double PotentialTracker::push(const Eigen::VectorXd& phi, double sigma) {
  const BlockFeature x{0, phi};
  const double term = std::min(1.0, summary_.inverse_norm_squared(x) / (sigma * sigma));
  summary_.add(x, 1.0 / sigma, 0.0);
  potential_ += term;
  ++steps_;
  return term;
}

}  // namespace wvtr
