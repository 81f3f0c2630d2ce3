#include "wvtr/statcheck.hpp"

#include <algorithm>
#include <cmath>

namespace wvtr {

NoiseLaw parse_noise_law(const std::string& text) {
  if (text == "none") return NoiseLaw::none;
  if (text == "bernoulli") return NoiseLaw::bernoulli;
  if (text == "symmetric") return NoiseLaw::symmetric;
  throw ConfigError("unknown noise law '" + text + "' (expected none|bernoulli|symmetric)");
}

std::string to_string(NoiseLaw law) {
  switch (law) {
    case NoiseLaw::none: return "none";
    case NoiseLaw::bernoulli: return "bernoulli";
    case NoiseLaw::symmetric: return "symmetric";
  }
  return "?";
}

void ConcentrationTrial::validate() const {
  if (dim == 0 || steps == 0) throw ConfigError("trial needs dim >= 1 and steps >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!(fit_lambda >= 0.0)) throw ConfigError("fit_lambda must be nonnegative");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(sigma_min > 0.0 && sigma_min <= 1.0)) throw ConfigError("sigma_min must lie in (0, 1]");
  if (!(weight_scale > 0.0)) throw ConfigError("weight_scale must be positive");
  if (!(noise_scale >= 0.0 && noise_scale <= 1.0)) throw ConfigError("noise_scale must lie in [0, 1]");
  if (theta.size() != 0) {
    if (theta.size() != static_cast<Eigen::Index>(dim)) throw ConfigError("theta has the wrong dimension");
    if ((theta.array() < 0.0).any() || theta.sum() > 1.0 + 1e-12) {
      throw ConfigError("theta must be nonnegative with l1 norm at most 1");
    }
  }
}

double concentration_iota(double log_covering, std::size_t t, double sigma, double weight_bound, double range,
                          double delta) {
  const double td = static_cast<double>(t);
  const double wl2 = weight_bound * weight_bound * range * range;
  const double inner = std::max(std::log(sigma * sigma * wl2 * td) + 2.0, 1.0);
  const double outer = std::max(std::log(wl2) + 2.0, 1.0);
  return 16.0 * (std::log(2.0) + log_covering + 2.0 * std::log(td) + std::log(inner) + std::log(outer) -
                 std::log(delta));
}

TrialOutcome run_concentration_trial(const ConcentrationTrial& trial, Rng& rng) {
  trial.validate();
  const auto d = static_cast<Eigen::Index>(trial.dim);
  const std::size_t t = trial.steps;

  Eigen::VectorXd theta = trial.theta;
  if (theta.size() == 0) {
    theta.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) theta(i) = -std::log(1.0 - uniform01(rng));
    theta /= theta.sum();
  }

  Eigen::MatrixXd xs(d, static_cast<Eigen::Index>(t));
  Eigen::VectorXd fstar(static_cast<Eigen::Index>(t));
  Eigen::VectorXd w(static_cast<Eigen::Index>(t));
  Eigen::VectorXd y(static_cast<Eigen::Index>(t));

  Eigen::LLT<Eigen::MatrixXd> design(trial.lambda * Eigen::MatrixXd::Identity(d, d));
  double max_wd = 0.0;
  for (std::size_t s = 0; s < t; ++s) {
    const auto si = static_cast<Eigen::Index>(s);
    for (Eigen::Index i = 0; i < d; ++i) xs(i, si) = uniform01(rng);
    const double f = std::clamp(theta.dot(xs.col(si)), 0.0, 1.0);
    fstar(si) = f;

    double sd = 0.0;
    double a = 0.0;
    switch (trial.noise) {
      case NoiseLaw::none: break;
      case NoiseLaw::bernoulli: sd = std::sqrt(f * (1.0 - f)); break;
      case NoiseLaw::symmetric:
        a = trial.noise_scale * std::min(f, 1.0 - f);
        sd = a;
        break;
    }
    w(si) = trial.weight_scale / std::max(sd, trial.sigma_min);

    const double dfs = std::sqrt(design.matrixL().solve(xs.col(si)).squaredNorm());
    max_wd = std::max(max_wd, w(si) * w(si) * dfs);
    design.rankUpdate(w(si) * xs.col(si), 1.0);

    switch (trial.noise) {
      case NoiseLaw::none: y(si) = f; break;
      case NoiseLaw::bernoulli: y(si) = uniform01(rng) < f ? 1.0 : 0.0; break;
      case NoiseLaw::symmetric: y(si) = uniform01(rng) < 0.5 ? f - a : f + a; break;
    }
  }

  Eigen::MatrixXd gram = trial.fit_lambda * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd moment = Eigen::VectorXd::Zero(d);
  const Eigen::VectorXd w2 = w.array().square().matrix();
  gram.noalias() += xs * w2.asDiagonal() * xs.transpose();
  moment.noalias() += xs * w2.cwiseProduct(y);
  const Eigen::VectorXd fit = gram.ldlt().solve(moment);

  const Eigen::VectorXd resid = xs.transpose() * fit - fstar;
  TrialOutcome out;
  out.lhs = w2.dot(resid.cwiseProduct(resid));

  const double range = 1.0;
  const double sigma = trial.weight_scale;
  const double weight_bound = trial.weight_scale / trial.sigma_min;
  const double log_cov = trial.log_covering > 0.0
                             ? trial.log_covering
                             : static_cast<double>(trial.dim) * std::log(1.0 / trial.epsilon);
  const double iota = concentration_iota(log_cov, t, sigma, weight_bound, range, trial.delta);
  const double beta = 3.0 * std::sqrt(iota) * sigma + 2.0 * iota * range * max_wd + std::sqrt(trial.lambda) +
                      std::sqrt(6.0 * range * static_cast<double>(t) * trial.epsilon /
                                (trial.sigma_min * trial.sigma_min));
  out.beta_sq = beta * beta;
  out.violated = !(out.lhs <= out.beta_sq);
  return out;
}

std::size_t binomial_quantile(std::size_t n, double p, double q) {
  if (p <= 0.0) return 0;
  if (p >= 1.0) return n;
  const double nd = static_cast<double>(n);
  double cdf = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double kd = static_cast<double>(k);
    const double log_pmf = std::lgamma(nd + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(nd - kd + 1.0) +
                           kd * std::log(p) + (nd - kd) * std::log1p(-p);
    cdf += std::exp(log_pmf);
    if (cdf >= q) return k;
  }
  return n;
}

BatteryResult run_concentration_battery(const ConcentrationTrial& trial, std::size_t trials, std::uint64_t seed,
                                        double confidence) {
  BatteryResult r;
  r.trials = trials;
  r.delta = trial.delta;
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng(seed + i);
    const TrialOutcome o = run_concentration_trial(trial, rng);
    if (o.violated) ++r.violations;
    r.max_ratio = std::max(r.max_ratio, o.lhs / o.beta_sq);
  }
  r.rate = trials == 0 ? 0.0 : static_cast<double>(r.violations) / static_cast<double>(trials);
  r.allowed = binomial_quantile(trials, trial.delta, confidence);
  r.pass = r.violations <= r.allowed;
  return r;
}

EllipticalCheck elliptical_bound_check(std::span<const StreamStep> stream, double lambda, double feature_bound) {
  if (!(lambda > 0.0)) throw NumericInputError("lambda must be positive");
  EllipticalCheck out;
  if (stream.empty()) {
    out.pass = true;
    return out;
  }
  const auto d = stream.front().phi.size();
  double bound_l = feature_bound;
  if (!(bound_l > 0.0)) {
    for (const auto& st : stream) bound_l = std::max(bound_l, st.phi.norm() / st.sigma);
  }
  Eigen::LLT<Eigen::MatrixXd> design(lambda * Eigen::MatrixXd::Identity(d, d));
  for (const auto& st : stream) {
    if (st.phi.size() != d || !(st.sigma > 0.0)) throw NumericInputError("stream step has a bad shape or sigma");
    const Eigen::VectorXd x = st.phi / st.sigma;
    out.potential += std::min(1.0, design.matrixL().solve(x).squaredNorm());
    design.rankUpdate(x, 1.0);
  }
  const double dd = static_cast<double>(d);
  out.bound = 2.0 * dd * std::log1p(static_cast<double>(stream.size()) * bound_l * bound_l / (dd * lambda));
  out.pass = out.potential <= out.bound;
  return out;
}

std::vector<StreamStep> random_stream(std::size_t dim, std::size_t steps, double sigma_min, Rng& rng) {
  const auto d = static_cast<Eigen::Index>(dim);
  const std::size_t rank = 1 + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(dim));
  std::vector<Eigen::VectorXd> basis;
  for (std::size_t i = 0; i < rank; ++i) {
    Eigen::VectorXd v(d);
    for (Eigen::Index j = 0; j < d; ++j) v(j) = standard_normal(rng);
    basis.push_back(v.normalized());
  }

  std::vector<StreamStep> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const double mode = uniform01(rng);
    Eigen::VectorXd phi(d);
    if (mode < 0.4 || out.empty()) {
      for (Eigen::Index j = 0; j < d; ++j) phi(j) = standard_normal(rng);
      phi.normalize();
    } else if (mode < 0.8) {
      phi = basis[std::min(rank - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(rank)))];
    } else {
      phi = out.back().phi;
    }
    phi *= uniform01(rng) < 0.5 ? 1.0 : uniform01(rng);
    const double sigma = uniform01(rng) < 0.3 ? sigma_min : sigma_min + (1.0 - sigma_min) * uniform01(rng);
    out.push_back({std::move(phi), sigma});
  }
  return out;
}

std::vector<StatcheckRow> run_statcheck_suite(std::size_t trials, std::uint64_t seed) {
  std::vector<StatcheckRow> rows;
  for (NoiseLaw law : {NoiseLaw::bernoulli, NoiseLaw::symmetric, NoiseLaw::none}) {
    ConcentrationTrial trial;
    trial.noise = law;
    const BatteryResult b = run_concentration_battery(trial, trials, seed);
    rows.push_back({"concentration", to_string(law), trial.dim, trial.steps, b.trials, b.violations, b.rate,
                    b.delta, b.allowed, b.max_ratio, b.pass});
  }

  StatcheckRow ell;
  ell.battery = "elliptical";
  ell.noise = "none";
  ell.trials = trials;
  Rng rng(seed);
  for (std::size_t i = 0; i < trials; ++i) {
    const std::size_t dim = 1 + static_cast<std::size_t>(uniform01(rng) * 20.0);
    const std::size_t steps = static_cast<std::size_t>(uniform01(rng) * 1001.0);
    const double sigma_min = 0.01 + 0.99 * uniform01(rng);
    const double lambda = std::pow(10.0, -3.0 + 3.0 * uniform01(rng));
    const auto stream = random_stream(dim, steps, sigma_min, rng);
    const EllipticalCheck c = elliptical_bound_check(stream, lambda, 1.0 / sigma_min);
    ell.dim = std::max(ell.dim, dim);
    ell.steps = std::max(ell.steps, steps);
    if (!c.pass) ++ell.violations;
    if (c.bound > 0.0) ell.max_ratio = std::max(ell.max_ratio, c.potential / c.bound);
  }
  ell.rate = trials == 0 ? 0.0 : static_cast<double>(ell.violations) / static_cast<double>(trials);
  ell.pass = ell.violations == 0;
  rows.push_back(ell);
  return rows;
}

void write_statcheck_csv(std::span<const StatcheckRow> rows, std::ostream& out) {
  out << "battery,noise,dim,steps,trials,violations,rate,delta,allowed,max_ratio,pass\n";
  for (const auto& r : rows) {
    out << r.battery << ',' << r.noise << ',' << r.dim << ',' << r.steps << ',' << r.trials << ','
        << r.violations << ',' << format_number(r.rate) << ',' << format_number(r.delta) << ',' << r.allowed << ','
        << format_number(r.max_ratio) << ',' << (r.pass ? "true" : "false") << '\n';
  }
}

}  // namespace wvtr
