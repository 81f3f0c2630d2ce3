#include "wvtr/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace wvtr {

ValueVector::ValueVector(Eigen::VectorXd values) : values_(std::move(values)) {
  if (!values_.allFinite() || (values_.array() < 0.0).any() || (values_.array() > 1.0).any()) {
    throw NumericInputError("value vector entries must lie in [0, 1]");
  }
}

ValueVector ValueVector::power(unsigned exponent) const {
  ValueVector out;
  out.values_ = values_.array().pow(static_cast<double>(exponent)).matrix();
  return out;
}

Eigen::VectorXd BlockFeature::to_dense(std::size_t n_blocks) const {
  const auto bd = values.size();
  Eigen::VectorXd dense = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_blocks) * bd);
  dense.segment(static_cast<Eigen::Index>(block) * bd, bd) = values;
  return dense;
}

Eigen::VectorXd LinearMixture::phi_v_dense(std::size_t s, std::size_t a, const ValueVector& v) const {
  return phi_v(s, a, v).to_dense(n_blocks());
}

TabularMixture::TabularMixture(std::size_t n_states, std::size_t n_actions)
    : n_states_(n_states), n_actions_(n_actions), scale_(1.0 / std::sqrt(static_cast<double>(n_states))) {
  if (n_states == 0 || n_actions == 0) throw InvalidEnvironment("tabular mixture needs states and actions");
}

BlockFeature TabularMixture::phi_v(std::size_t s, std::size_t a, const ValueVector& v) const {
  return {s * n_actions_ + a, scale_ * v.values()};
}

Eigen::VectorXd TabularMixture::true_parameters(const EpisodicMdp& mdp) const {
  if (mdp.n_states != n_states_ || mdp.n_actions != n_actions_) {
    throw InvalidEnvironment("mdp shape does not match the tabular mixture");
  }
  const auto S = static_cast<Eigen::Index>(n_states_);
  Eigen::VectorXd theta(static_cast<Eigen::Index>(dim()));
  for (std::size_t r = 0; r < n_blocks(); ++r) {
    theta.segment(static_cast<Eigen::Index>(r) * S, S) = mdp.transition.row(static_cast<Eigen::Index>(r)).transpose() / scale_;
  }
  return theta;
}

double TabularMixture::parameter_bound() const {
  return std::sqrt(static_cast<double>(n_states_)) * std::sqrt(static_cast<double>(n_blocks()));
}

FeatureMixture::FeatureMixture(std::size_t n_states, std::size_t n_actions, std::vector<Eigen::MatrixXd> features)
    : n_states_(n_states), n_actions_(n_actions), dim_(0), features_(std::move(features)) {
  if (features_.size() != n_states * n_actions || features_.empty()) {
    throw InvalidEnvironment("feature table needs one matrix per (s, a)");
  }
  dim_ = static_cast<std::size_t>(features_.front().cols());
  for (const auto& f : features_) {
    if (f.rows() != static_cast<Eigen::Index>(n_states) || f.cols() != static_cast<Eigen::Index>(dim_)) {
      throw InvalidEnvironment("feature matrices must be |S| x d");
    }
  }
}

BlockFeature FeatureMixture::phi_v(std::size_t s, std::size_t a, const ValueVector& v) const {
  return {0, features_[s * n_actions_ + a].transpose() * v.values()};
}

// ---------------------------------------------------------------------------

RidgeSummary::RidgeSummary(std::size_t n_blocks, std::size_t block_dim, double lambda)
    : blocks_(n_blocks), block_dim_(block_dim), lambda_(lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw NumericInputError("lambda must be finite and >= 0");
  const auto bd = static_cast<Eigen::Index>(block_dim);
  for (auto& b : blocks_) {
    b.gram = lambda * Eigen::MatrixXd::Identity(bd, bd);
    b.moment = Eigen::VectorXd::Zero(bd);
    b.chol.compute(b.gram);
  }
}

void RidgeSummary::add(const BlockFeature& x, double weight, double target) {
  if (x.block >= blocks_.size() || x.values.size() != static_cast<Eigen::Index>(block_dim_)) {
    throw NumericInputError("feature does not match the summary layout");
  }
  if (!std::isfinite(weight) || weight <= 0.0 || !std::isfinite(target) || !x.values.allFinite()) {
    throw NumericInputError("regression sample must have finite input, target and positive weight");
  }
  auto& b = blocks_[x.block];
  const double w2 = weight * weight;
  b.gram.noalias() += w2 * x.values * x.values.transpose();
  b.moment += w2 * target * x.values;
  if (lambda_ > 0.0) {
    b.chol.rankUpdate(weight * x.values, 1.0);
  } else {
    b.chol.compute(b.gram);
  }
  ++count_;
}

void RidgeSummary::refactor() {
  for (auto& b : blocks_) b.chol.compute(b.gram);
}

Eigen::MatrixXd RidgeSummary::gram() const {
  const auto bd = static_cast<Eigen::Index>(block_dim_);
  const auto d = static_cast<Eigen::Index>(dim());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    g.block(static_cast<Eigen::Index>(i) * bd, static_cast<Eigen::Index>(i) * bd, bd, bd) = blocks_[i].gram;
  }
  return g;
}

Eigen::VectorXd RidgeSummary::moment() const {
  const auto bd = static_cast<Eigen::Index>(block_dim_);
  Eigen::VectorXd m(static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < blocks_.size(); ++i) m.segment(static_cast<Eigen::Index>(i) * bd, bd) = blocks_[i].moment;
  return m;
}

double RidgeSummary::inverse_norm_squared(const BlockFeature& x) const {
  const auto& b = blocks_.at(x.block);
  if (b.chol.info() != Eigen::Success) throw NumericInputError("gram block is not positive definite");
  // ||L^{-1} x||^2 with Sigma = L L^T.
  const Eigen::VectorXd half = b.chol.matrixL().solve(x.values);
  return half.squaredNorm();
}

Eigen::VectorXd RidgeSummary::solve() const {
  const auto bd = static_cast<Eigen::Index>(block_dim_);
  Eigen::VectorXd theta(static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    if (b.chol.info() != Eigen::Success) throw NumericInputError("gram block is singular");
    theta.segment(static_cast<Eigen::Index>(i) * bd, bd) = b.chol.solve(b.moment);
  }
  return theta;
}

double LinearPredictor::raw(const BlockFeature& x) const {
  const auto bd = static_cast<Eigen::Index>(block_dim_);
  return theta_.segment(static_cast<Eigen::Index>(x.block) * bd, bd).dot(x.values);
}

double LinearPredictor::predict(const BlockFeature& x) const {
  return std::clamp(raw(x), 0.0, 1.0);
}

LinearPredictor oracle_fit(const RidgeSummary& summary) {
  return {summary.solve(), summary.block_dim()};
}

LinearPredictor oracle_fit(std::span<const WeightedSample> samples, const LinearMixture& model, double lambda) {
  RidgeSummary summary(model.n_blocks(), model.block_dim(), lambda);
  for (const auto& s : samples) summary.add(model.phi_v(s.query), s.weight, s.target);
  if (lambda == 0.0) summary.refactor();
  return oracle_fit(summary);
}

double oracle_predict(const LinearPredictor& f, const LinearMixture& model, const Query& z) {
  return f.predict(model.phi_v(z));
}

// ---------------------------------------------------------------------------

void LinearClass::project(Eigen::VectorXd& params) const {
  if (!std::isfinite(radius_)) return;
  const double n = params.norm();
  if (n > radius_) params *= radius_ / n;
}

namespace {

struct Objective {
  const ParametricClass& cls;
  std::span<const OracleSample> samples;
  double lambda;

  double value(const Eigen::VectorXd& p) const {
    double f = lambda * p.squaredNorm();
    for (const auto& s : samples) {
      const double r = cls.predict(p, s.x) - s.y;
      f += s.v * r * r;
    }
    return f;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& p) const {
    Eigen::VectorXd g = 2.0 * lambda * p;
    for (const auto& s : samples) {
      const double r = cls.predict(p, s.x) - s.y;
      g += 2.0 * s.v * r * cls.gradient(p, s.x);
    }
    return g;
  }
};

}  // namespace

FittedFunction general_oracle_fit(std::shared_ptr<const ParametricClass> cls, std::span<const OracleSample> samples,
                                  double lambda, const GradientOptions& options) {
  for (const auto& s : samples) {
    if (!std::isfinite(s.v) || s.v <= 0.0 || !std::isfinite(s.y) || !s.x.allFinite()) {
      throw NumericInputError("oracle samples must be finite with positive weight");
    }
  }
  const Objective obj{*cls, samples, lambda};
  const auto n = static_cast<Eigen::Index>(cls->num_params());

  FittedFunction out;
  out.cls = cls;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  cls->project(x);
  out.params = x;
  out.converged = true;
  if (samples.empty() && lambda == 0.0) return out;

  double fx = obj.value(x);
  if (options.record_objective) out.objective_trace.push_back(fx);
  const double scale = std::max(1.0, obj.gradient(x).norm());
  const double threshold = options.tolerance * scale;

  Eigen::VectorXd y = x;
  double t = 1.0;
  double lipschitz = 1.0;
  bool from_incumbent = true;  // y == x
  out.converged = false;
  out.stationarity = std::numeric_limits<double>::infinity();

  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    out.iterations = it;
    const double fy = obj.value(y);
    const Eigen::VectorXd gy = obj.gradient(y);
    Eigen::VectorXd z;
    double fz = 0.0;
    for (;;) {
      z = y - gy / lipschitz;
      cls->project(z);
      fz = obj.value(z);
      const Eigen::VectorXd step = z - y;
      if (fz <= fy + gy.dot(step) + 0.5 * lipschitz * step.squaredNorm() + 1e-14 * std::abs(fy)) break;
      lipschitz *= 2.0;
      if (!std::isfinite(lipschitz)) throw NumericInputError("gradient oracle diverged");
    }
    out.stationarity = lipschitz * (y - z).norm();
    // A backtracked step from the incumbent must decrease f; if it does not,
    // the remaining decrease is below floating-point resolution.
    if (from_incumbent && fz >= fx) {
      out.converged = true;
      break;
    }

    // Monotone variant: keep the better of the candidate and the incumbent.
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    Eigen::VectorXd x_next = fz <= fx ? z : x;
    const double f_next = std::min(fz, fx);
    if (fz > fx) {
      // Restart the momentum when the extrapolation overshoots.
      y = x_next;
      t = 1.0;
      from_incumbent = true;
    } else {
      y = x_next + (t / t_next) * (z - x_next) + ((t - 1.0) / t_next) * (x_next - x);
      t = t_next;
      from_incumbent = false;
    }
    x = std::move(x_next);
    fx = f_next;
    if (options.record_objective) out.objective_trace.push_back(fx);
    lipschitz *= 0.9;

    if (out.stationarity <= threshold) {
      out.converged = true;
      break;
    }
  }
  out.params = x;
  return out;
}

FittedFunction GradientOracle::do_fit(std::span<const OracleSample> samples) const {
  return general_oracle_fit(cls_, samples, 0.0, options_);
}

BallLinearOracle::BallLinearOracle(std::size_t dim, double radius)
    : cls_(std::make_shared<LinearClass>(dim, radius)) {
  if (!(radius > 0.0)) throw NumericInputError("ball radius must be positive");
}

FittedFunction BallLinearOracle::do_fit(std::span<const OracleSample> samples) const {
  const auto d = static_cast<Eigen::Index>(cls_->num_params());
  const double radius = cls_->radius();
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(d);
  for (const auto& s : samples) {
    if (!std::isfinite(s.v) || s.v < 0.0 || !std::isfinite(s.y) || !s.x.allFinite()) {
      throw NumericInputError("oracle samples must be finite with nonnegative weight");
    }
    hess.noalias() += s.v * s.x * s.x.transpose();
    lin += s.v * s.y * s.x;
  }

  // minimize theta^T H theta - 2 b^T theta subject to ||theta|| <= R.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
  const Eigen::VectorXd evals = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::VectorXd c = eig.eigenvectors().transpose() * lin;
  const double top = std::max(evals.maxCoeff(), 0.0);
  const double zero_tol = 1e-13 * std::max(top, 1.0);
  const double c_tol = 1e-13 * std::max(c.norm(), 1e-300);

  bool interior = true;
  double min_norm_sq = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (evals(i) <= zero_tol) {
      if (std::abs(c(i)) > c_tol) interior = false;
    } else {
      min_norm_sq += c(i) * c(i) / (evals(i) * evals(i));
    }
  }
  if (interior && min_norm_sq > radius * radius) interior = false;

  Eigen::VectorXd coef = Eigen::VectorXd::Zero(d);
  if (interior) {
    for (Eigen::Index i = 0; i < d; ++i) {
      if (evals(i) > zero_tol) coef(i) = c(i) / evals(i);
    }
  } else {
    // Solve ||(H + mu I)^{-1} b|| = R for mu > 0 (Newton on 1/||.|| with a
    // bisection safeguard).
    auto norm_sq = [&](double mu) {
      double n = 0.0;
      for (Eigen::Index i = 0; i < d; ++i) {
        const double den = evals(i) + mu;
        n += c(i) * c(i) / (den * den);
      }
      return n;
    };
    double lo = 0.0;
    double hi = c.norm() / radius;
    double mu = hi;
    for (int iter = 0; iter < 200; ++iter) {
      const double n2 = norm_sq(mu);
      const double n1 = std::sqrt(n2);
      if (n1 > radius) lo = mu; else hi = mu;
      double deriv = 0.0;  // d/dmu of ||.||^2
      for (Eigen::Index i = 0; i < d; ++i) {
        const double den = evals(i) + mu;
        deriv -= 2.0 * c(i) * c(i) / (den * den * den);
      }
      // phi(mu) = 1/n1 - 1/R, phi'(mu) = -deriv / (2 n1^3)
      const double phi = 1.0 / n1 - 1.0 / radius;
      const double dphi = -deriv / (2.0 * n2 * n1);
      double next = mu - phi / dphi;
      if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
      if (std::abs(next - mu) <= 1e-16 * std::max(mu, 1e-300) || hi - lo <= 1e-16 * hi) {
        mu = next;
        break;
      }
      mu = next;
    }
    for (Eigen::Index i = 0; i < d; ++i) coef(i) = c(i) / (evals(i) + mu);
  }

  FittedFunction out;
  out.cls = cls_;
  out.params = eig.eigenvectors() * coef;
  cls_->project(out.params);  // trims rounding past the boundary
  return out;
}

}  // namespace wvtr
