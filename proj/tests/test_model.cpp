#include <cmath>
#include <memory>

#include "doctest.h"
#include "helpers.hpp"
#include "wvtr/env.hpp"
#include "wvtr/model.hpp"

using namespace wvtr;

namespace {

ValueVector random_value(std::size_t n, Rng& rng) {
  return ValueVector(testing::random_vector(static_cast<Eigen::Index>(n), rng, 0.0, 1.0));
}

// Plain normal-equation ridge solve, written independently of RidgeSummary.
Eigen::VectorXd batch_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, const Eigen::VectorXd& y,
                            double lambda) {
  const Eigen::VectorXd w2 = w.array().square().matrix();
  Eigen::MatrixXd a = x.transpose() * w2.asDiagonal() * x;
  a.diagonal().array() += lambda;
  return a.fullPivLu().solve(x.transpose() * w2.cwiseProduct(y));
}

}  // namespace

TEST_CASE("tabular features") {
  const TabularMixture model(5, 2);
  CHECK(model.dim() == 50);
  CHECK(model.block_dim() == 5);

  SUBCASE("zero value gives zero feature") {
    CHECK(model.phi_v(2, 1, ValueVector::zeros(5)).values.isZero());
  }
  SUBCASE("indicator value lands in the (s1, a1) block") {
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(5);
    e1(0) = 1.0;
    const BlockFeature f = model.phi_v(0, 0, ValueVector(e1));
    CHECK(f.block == 0);
    CHECK(f.values(0) == doctest::Approx(1.0 / std::sqrt(5.0)));
    CHECK(f.values.tail(4).isZero());
    const Eigen::VectorXd dense = f.to_dense(model.n_blocks());
    CHECK(dense.size() == 50);
    CHECK(dense(0) == f.values(0));
    CHECK(dense.tail(49).isZero());
  }
  SUBCASE("feature norm never exceeds one") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
      CHECK(model.phi_v(i % 5, i % 2, random_value(5, rng)).values.norm() <= 1.0 + 1e-15);
    }
    CHECK(model.phi_v(0, 0, ValueVector::ones(5)).values.norm() == doctest::Approx(1.0));
  }
}

TEST_CASE("value vectors reject entries outside the unit interval") {
  Eigen::VectorXd v(3);
  v << 0.0, 0.5, 1.2;
  CHECK_THROWS_AS(ValueVector{v}, NumericInputError);
  v << 0.0, -0.1, 1.0;
  CHECK_THROWS_AS(ValueVector{v}, NumericInputError);
  v << 0.0, std::nan(""), 1.0;
  CHECK_THROWS_AS(ValueVector{v}, NumericInputError);
  v << 0.5, 0.25, 1.0;
  const ValueVector p = ValueVector(v).power(2);
  CHECK(p(0) == 0.25);
  CHECK(p(1) == 0.0625);
}

TEST_CASE("true parameters reproduce expectations") {
  const EpisodicMdp mdp = make_riverswim(6, 10, RewardMode::raw);
  const TabularMixture model(6, 2);
  const LinearPredictor exact(model.true_parameters(mdp), model.block_dim());
  CHECK(model.true_parameters(mdp).norm() <= model.parameter_bound() + 1e-12);
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const std::size_t s = i % 6;
    const std::size_t a = (i / 6) % 2;
    const ValueVector v = random_value(6, rng);
    const double truth = mdp.next_state_probs(s, a).dot(v.values());
    CHECK(std::abs(oracle_predict(exact, model, {s, a, v}) - truth) < 1e-12);
  }
  CHECK(oracle_predict(exact, model, {3, 0, ValueVector::ones(6)}) == doctest::Approx(1.0).epsilon(1e-12));
  const LinearPredictor zero = LinearPredictor::zero(model.n_blocks(), model.block_dim());
  CHECK(oracle_predict(zero, model, {3, 0, ValueVector::ones(6)}) == 0.0);
}

TEST_CASE("closed-form ridge") {
  SUBCASE("empty data gives zero") {
    RidgeSummary r(4, 0.1);
    CHECK(oracle_fit(r).theta().isZero());
  }
  SUBCASE("one sample shrinks by 1/(1+lambda)") {
    RidgeSummary r(3, 1.0);
    r.add(Eigen::Vector3d(1, 0, 0), 1.0, 1.0);
    const Eigen::VectorXd theta = oracle_fit(r).theta();
    CHECK(theta(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(theta.tail(2).isZero());
  }
  SUBCASE("noiseless data is recovered") {
    Rng rng(3);
    const Eigen::Index d = 6;
    const Eigen::VectorXd truth = testing::random_vector(d, rng);
    RidgeSummary r(static_cast<std::size_t>(d), 1e-10);
    for (int i = 0; i < 40; ++i) {
      const Eigen::VectorXd x = testing::random_vector(d, rng);
      r.add(x, 0.5 + uniform01(rng), truth.dot(x));
    }
    CHECK((oracle_fit(r).theta() - truth).norm() < 1e-6);
  }
}

TEST_CASE("ridge solution is stationary") {
  Rng rng(8);
  const Eigen::Index d = 5;
  const int n = 30;
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd w(n), y(n);
  RidgeSummary r(static_cast<std::size_t>(d), 0.3);
  for (int i = 0; i < n; ++i) {
    x.row(i) = testing::random_vector(d, rng).transpose();
    w(i) = 0.2 + uniform01(rng);
    y(i) = uniform01(rng);
    r.add(Eigen::VectorXd(x.row(i).transpose()), w(i), y(i));
  }
  const Eigen::VectorXd theta = oracle_fit(r).theta();
  // gradient of sum w^2 (x theta - y)^2 + lambda |theta|^2
  const Eigen::VectorXd resid = x * theta - y;
  const Eigen::VectorXd grad =
      2.0 * x.transpose() * (w.array().square() * resid.array()).matrix() + 2.0 * 0.3 * theta;
  CHECK(grad.norm() < 1e-8);
  CHECK((theta - batch_ridge(x, w, y, 0.3)).norm() < 1e-10);
}

TEST_CASE("incremental Cholesky matches a batch factorization after many updates") {
  Rng rng(21);
  const Eigen::Index d = 8;
  RidgeSummary r(static_cast<std::size_t>(d), 0.01);
  Eigen::MatrixXd gram = 0.01 * Eigen::MatrixXd::Identity(d, d);
  for (int i = 0; i < 10000; ++i) {
    const Eigen::VectorXd x = testing::random_unit_ball(d, rng);
    const double w = 0.1 + 2.0 * uniform01(rng);
    r.add(x, w, uniform01(rng));
    gram += w * w * x * x.transpose();
  }
  CHECK((r.gram() - gram).norm() / gram.norm() < 1e-10);
  RidgeSummary fresh = r;
  fresh.refactor();
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd q = testing::random_vector(d, rng);
    const double inc = r.inverse_norm_squared({0, q});
    const double batch = q.dot(gram.ldlt().solve(q));
    CHECK(std::abs(inc - batch) <= 1e-10 * std::max(1.0, batch));
    CHECK(std::abs(fresh.inverse_norm_squared({0, q}) - batch) <= 1e-10 * std::max(1.0, batch));
  }
  CHECK((r.solve() - fresh.solve()).norm() <= 1e-10 * std::max(1.0, fresh.solve().norm()));
}

TEST_CASE("integer squared weight equals duplicated samples") {
  Rng rng(4);
  const Eigen::Index d = 4;
  RidgeSummary weighted(static_cast<std::size_t>(d), 0.5);
  RidgeSummary replicated(static_cast<std::size_t>(d), 0.5);
  for (int i = 0; i < 25; ++i) {
    const Eigen::VectorXd x = testing::random_vector(d, rng);
    const double y = uniform01(rng);
    const int c = 1 + i % 4;
    weighted.add(x, std::sqrt(static_cast<double>(c)), y);
    for (int j = 0; j < c; ++j) replicated.add(x, 1.0, y);
  }
  CHECK((oracle_fit(weighted).theta() - oracle_fit(replicated).theta()).norm() < 1e-10);
}

TEST_CASE("ridge inputs are validated") {
  RidgeSummary r(3, 0.1);
  CHECK_THROWS_AS(r.add(Eigen::Vector3d(1, 0, 0), 0.0, 1.0), NumericInputError);
  CHECK_THROWS_AS(r.add(Eigen::Vector3d(1, 0, 0), std::nan(""), 1.0), NumericInputError);
  CHECK_THROWS_AS(r.add(Eigen::Vector3d(1, 0, 0), 1.0, INFINITY), NumericInputError);
  CHECK_THROWS_AS(r.add(Eigen::Vector2d(1, 0), 1.0, 1.0), NumericInputError);
  CHECK_THROWS_AS(RidgeSummary(3, -1.0), NumericInputError);
}

TEST_CASE("sample-list fit matches the summary fit") {
  const EpisodicMdp mdp = make_riverswim(4, 6, RewardMode::raw);
  const TabularMixture model(4, 2);
  Rng rng(9);
  std::vector<WeightedSample> samples;
  RidgeSummary r(model.n_blocks(), model.block_dim(), 0.01);
  for (int i = 0; i < 60; ++i) {
    const Query z{static_cast<std::size_t>(i % 4), static_cast<std::size_t>(i % 3 == 0), random_value(4, rng)};
    const double w = 1.0 / (0.1 + uniform01(rng));
    const double y = z.value(sample_next_state(mdp, z.state, z.action, rng));
    samples.push_back({z, w, y});
    r.add(model.phi_v(z), w, y);
  }
  const auto a = oracle_fit(samples, model, 0.01).theta();
  const auto b = oracle_fit(r).theta();
  CHECK((a - b).norm() < 1e-12);
}

TEST_CASE("feature mixture") {
  std::vector<Eigen::MatrixXd> feats(2 * 1, Eigen::MatrixXd::Zero(2, 3));
  feats[0] << 1, 0, 0, 0, 1, 0;
  feats[1] << 0, 0, 1, 0, 0, 1;
  const FeatureMixture model(2, 1, feats);
  CHECK(model.dim() == 3);
  Eigen::Vector2d v(0.5, 1.0);
  const BlockFeature f = model.phi_v(0, 0, ValueVector(v));
  CHECK(f.values.isApprox(Eigen::Vector3d(0.5, 1.0, 0.0)));
  CHECK_THROWS_AS(FeatureMixture(2, 1, {feats[0]}), InvalidEnvironment);
}

// ---------------------------------------------------------------------------

TEST_CASE("gradient oracle agrees with the closed form on linear data") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + trial % 10);
    const int n = 5 + 20 * trial;
    const double lambda = 0.05 + uniform01(rng);
    std::vector<OracleSample> samples;
    RidgeSummary r(static_cast<std::size_t>(d), lambda);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd x = testing::random_vector(d, rng);
      const double v = 0.1 + uniform01(rng);
      const double y = uniform01(rng);
      samples.push_back({x, v, y});
      r.add(x, std::sqrt(v), y);
    }
    const FittedFunction g = general_oracle_fit(std::make_shared<LinearClass>(d), samples, lambda);
    CHECK(g.converged);
    CHECK((g.params - oracle_fit(r).theta()).norm() < 1e-6);
  }
}

TEST_CASE("gradient oracle with no samples returns the initial parameters") {
  const FittedFunction g = general_oracle_fit(std::make_shared<LinearClass>(4), {}, 0.0);
  CHECK(g.params.isZero());
  CHECK(g.converged);
}

TEST_CASE("gradient oracle objective never increases") {
  Rng rng(2);
  std::vector<OracleSample> samples;
  for (int i = 0; i < 30; ++i) samples.push_back({testing::random_vector(3, rng), 1.0, uniform01(rng)});
  GradientOptions opt;
  opt.max_iterations = 100;
  opt.record_objective = true;
  const FittedFunction g = general_oracle_fit(std::make_shared<LinearClass>(3), samples, 0.1, opt);
  REQUIRE(g.objective_trace.size() >= 2);
  for (std::size_t i = 1; i < g.objective_trace.size(); ++i) {
    CHECK(g.objective_trace[i] <= g.objective_trace[i - 1]);
  }
}

TEST_CASE("gradient oracle reports non-convergence instead of throwing") {
  Rng rng(6);
  std::vector<OracleSample> samples;
  for (int i = 0; i < 30; ++i) samples.push_back({testing::random_vector(6, rng), 1.0, uniform01(rng)});
  GradientOptions opt;
  opt.max_iterations = 2;
  const FittedFunction g = general_oracle_fit(std::make_shared<LinearClass>(6), samples, 0.0, opt);
  CHECK_FALSE(g.converged);
  CHECK(g.iterations == 2);
  CHECK(g.stationarity > 0.0);
}

namespace {

// Projected gradient with a tiny fixed step, as an independent check on the
// ball-constrained solver.
Eigen::VectorXd slow_projected_fit(const std::vector<OracleSample>& samples, Eigen::Index d, double radius) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
  for (const auto& s : samples) {
    h += s.v * s.x * s.x.transpose();
    b += s.v * s.y * s.x;
  }
  const double step = 0.5 / std::max(1e-12, h.eigenvalues().real().maxCoeff());
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  for (int it = 0; it < 200000; ++it) {
    theta -= step * 2.0 * (h * theta - b);
    if (theta.norm() > radius) theta *= radius / theta.norm();
  }
  return theta;
}

}  // namespace

TEST_CASE("ball oracle solves the constrained least-squares problem") {
  Rng rng(13);
  for (int trial = 0; trial < 12; ++trial) {
    const Eigen::Index d = 2 + trial % 4;
    const double radius = trial % 3 == 0 ? 10.0 : 0.3;
    std::vector<OracleSample> samples;
    for (int i = 0; i < 15; ++i) {
      samples.push_back({testing::random_vector(d, rng), 0.5 + uniform01(rng), 2.0 * uniform01(rng)});
    }
    const BallLinearOracle oracle(static_cast<std::size_t>(d), radius);
    const FittedFunction g = oracle.fit(samples);
    CHECK(g.params.norm() <= radius * (1 + 1e-12));
    CHECK((g.params - slow_projected_fit(samples, d, radius)).norm() < 1e-6);
  }
}

TEST_CASE("ball oracle counts calls") {
  const BallLinearOracle oracle(2, 1.0);
  std::vector<OracleSample> samples{{Eigen::Vector2d(1, 0), 1.0, 0.5}};
  oracle.fit(samples);
  oracle.fit(samples);
  CHECK(oracle.calls() == 2);
}
