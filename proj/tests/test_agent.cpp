#include <cmath>
#include <memory>

#include "doctest.h"
#include "helpers.hpp"
#include "wvtr/agent.hpp"
#include "wvtr/uncertainty.hpp"

using namespace wvtr;

namespace {

struct Rig {
  EpisodicMdp mdp;
  TaskShape task;
  std::shared_ptr<TabularMixture> model;

  Rig(std::size_t n, std::size_t h, RewardMode mode)
      : mdp(make_riverswim(n, h, mode)), task(TaskShape::from(mdp)),
        model(std::make_shared<TabularMixture>(n, 2)) {}

  LinearPredictor exact() const { return {model->true_parameters(mdp), model->block_dim()}; }
};

// Expected HOME inputs for one transition, computed from the agent's public
// state before the transition is absorbed.
std::vector<HomeLevelInput> expected_inputs(const WvtrAgent& agent, const LinearMixture& model,
                                            const Eigen::VectorXd& next_value, const Transition& step) {
  std::vector<HomeLevelInput> out;
  const double cap = 1.0 / std::sqrt(agent.config().lambda);
  Eigen::VectorXd power = next_value;
  for (std::size_t m = 0; m < agent.level_count(); ++m) {
    if (m > 0) power = power.cwiseProduct(power);
    const BlockFeature phi = model.phi_v(step.state, step.action, ValueVector(power));
    const auto& lv = agent.level(m);
    out.push_back({lv.model.predict(phi), std::min(cap, uncertainty_linear(lv.snapshot, phi)),
                   std::min(cap, uncertainty_linear(lv.live, phi))});
  }
  return out;
}

}  // namespace

TEST_CASE("baseline hyperparameters") {
  const AgentConfig w = default_config(AgentKind::wvtr);
  CHECK(w.lambda == 0.001);
  CHECK(w.sigma_min == 0.01);
  CHECK(w.gamma == 0.5);
  CHECK(w.beta == 1.0);
  CHECK(w.levels == 3);
  const AgentConfig nh = default_config(AgentKind::no_home);
  CHECK(nh.levels == 1);
  CHECK(nh.sigma_min == 0.01);
  const AgentConfig v = default_config(AgentKind::vtr);
  CHECK(v.levels == 0);
  CHECK(v.sigma_min == 1.0);
  CHECK(v.gamma == 0.0);
  CHECK(v.lambda == 0.001);
}

TEST_CASE("config validation") {
  AgentConfig c;
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.levels = 0;
  CHECK_NOTHROW(c.validate());
  c.sigma_min = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AgentConfig{};
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AgentConfig{};
  c.beta_mode = BetaMode::schedule;
  c.delta = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_agent_kind("no_home") == AgentKind::no_home);
  CHECK_THROWS_AS(parse_agent_kind("dqn"), ConfigError);
}

TEST_CASE("level count and radius schedule") {
  CHECK(theoretical_levels(5000, 20) == 19);
  CHECK(theoretical_levels(1, 1) == 2);
  AgentConfig c;
  c.beta_mode = BetaMode::schedule;
  const double b1 = scheduled_beta(c, 1, 20, 10.0);
  const double b2 = scheduled_beta(c, 100, 20, 10.0);
  CHECK(b1 > 0.0);
  CHECK(b2 > b1);
  CHECK(scheduled_beta(c, 1, 20, 20.0) > b1);
}

TEST_CASE("reward scale") {
  CHECK(TaskShape::from(make_riverswim(5, 20, RewardMode::raw)).unit_scale == doctest::Approx(1.0 / 20.0));
  CHECK(TaskShape::from(make_riverswim(5, 20, RewardMode::normalized)).unit_scale == 1.0);
}

TEST_CASE("planning with the true model reproduces optimal Q values") {
  for (std::size_t h : {20, 100}) {
    Rig rig(5, h, RewardMode::normalized);
    const RidgeSummary empty(rig.model->n_blocks(), rig.model->block_dim(), 0.001);
    const PlanResult p = plan(*rig.model, rig.exact(), empty, 0.0, rig.task);
    const auto qstar = optimal_q_values(rig.mdp);
    for (std::size_t step = 0; step < h; ++step) CHECK((p.q[step] - qstar[step]).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("planning edge cases") {
  Rig rig(4, 6, RewardMode::normalized);
  const RidgeSummary empty(rig.model->n_blocks(), rig.model->block_dim(), 0.001);
  const LinearPredictor zero = LinearPredictor::zero(rig.model->n_blocks(), rig.model->block_dim());

  SUBCASE("zero model, zero reward, no bonus") {
    TaskShape t = rig.task;
    t.reward.setZero();
    const PlanResult p = plan(*rig.model, zero, empty, 0.0, t);
    for (const auto& q : p.q) CHECK(q.isZero());
    for (const auto& v : p.v) CHECK(v.isZero());
  }
  SUBCASE("huge bonus saturates every entry") {
    const PlanResult p = plan(*rig.model, zero, empty, 1e6, rig.task);
    for (std::size_t h = 0; h + 1 < p.q.size(); ++h) CHECK((p.q[h].array() == 1.0).all());
  }
  SUBCASE("values are clipped and greedy") {
    const PlanResult p = plan(*rig.model, rig.exact(), empty, 0.3, rig.task);
    for (std::size_t h = 0; h < p.q.size(); ++h) {
      CHECK(p.q[h].minCoeff() >= 0.0);
      CHECK(p.q[h].maxCoeff() <= 1.0);
      for (Eigen::Index s = 0; s < p.q[h].rows(); ++s) {
        CHECK(p.v[h](s) == p.q[h].row(s).maxCoeff());
        Eigen::Index first = 0;
        p.q[h].row(s).maxCoeff(&first);
        CHECK(p.policy.prob(h, s, first) == 1.0);
      }
    }
    CHECK(p.v.back().isZero());
  }
}

TEST_CASE("moment estimator examples") {
  SUBCASE("top level with no history and gamma = 0") {
    const std::vector<HomeLevelInput> in{{0.0, 0.0, 0.0}};
    CHECK(home(in, 1.0, 0.01, 0.0).sigma_bar[0] == 1.0);
  }
  SUBCASE("all zero gives the floor below the top level") {
    const std::vector<HomeLevelInput> in(4);
    const HomeOutput out = home(in, 1.0, 0.01, 0.5);
    for (int m = 0; m < 3; ++m) CHECK(out.sigma_bar[m] == doctest::Approx(0.01));
    CHECK(out.sigma_bar[3] == 1.0);
  }
  SUBCASE("variance estimate and error width") {
    const std::vector<HomeLevelInput> in{{0.6, 0.1, 0.2}, {0.5, 0.05, 0.1}};
    const HomeOutput up = home(in, 2.0, 0.01, 0.5, ErrorWidthVariant::upper_level_doubled);
    CHECK(up.variance_estimate[0] == doctest::Approx(0.5 - 0.36));
    CHECK(up.error_width[0] == doctest::Approx(std::min(1.0, 2 * 2 * 0.05) + std::min(1.0, 2 * 0.1)));
    CHECK(up.sigma_bar[0] == doctest::Approx(std::sqrt(0.14 + 0.4)));
    const HomeOutput lo = home(in, 2.0, 0.01, 0.5, ErrorWidthVariant::lower_level_doubled);
    CHECK(lo.error_width[0] == doctest::Approx(std::min(1.0, 2 * 0.05) + std::min(1.0, 2 * 2 * 0.1)));
  }
  SUBCASE("negative variance estimates are not floored before the max") {
    const std::vector<HomeLevelInput> in{{0.9, 0.0, 0.0}, {0.1, 0.0, 0.0}};
    const HomeOutput out = home(in, 1.0, 0.1, 0.5);
    CHECK(out.variance_estimate[0] < 0.0);
    CHECK(out.sigma_bar[0] == doctest::Approx(0.1));
  }
  SUBCASE("live uncertainty term") {
    const std::vector<HomeLevelInput> in{{0.0, 0.0, 8.0}};
    CHECK(home(in, 1.0, 0.01, 0.5).sigma_bar[0] == doctest::Approx(std::sqrt(0.25 * 8.0)));
  }
}

TEST_CASE("exact models give the true conditional variance") {
  Rig rig(5, 20, RewardMode::normalized);
  AgentConfig c;
  c.beta = 0.0;
  c.gamma = 0.5;
  c.sigma_min = 1e-6;
  WvtrAgent agent(rig.model, rig.task, c);
  for (std::size_t m = 0; m < agent.level_count(); ++m) agent.set_level_model(m, rig.exact());
  const Policy pi = agent.begin_episode(1);
  Rng rng(3);
  const Trajectory traj = sample_episode(rig.mdp, pi, rng, 1);
  const ValueTable vstar = optimal_values(rig.mdp);
  for (std::size_t h = 0; h < traj.steps.size(); ++h) {
    const auto& st = traj.steps[h];
    const Eigen::RowVectorXd row = rig.mdp.next_state_probs(st.state, st.action);
    const Eigen::VectorXd& v = vstar[h + 1];
    const double truth = row.dot(v.cwiseProduct(v)) - std::pow(row.dot(v), 2);
    agent.observe(h, st);
    CHECK(std::abs(agent.last_home().variance_estimate[0] - truth) < 1e-10);
  }
}

TEST_CASE("weights respect both floors on every step") {
  Rig rig(5, 20, RewardMode::raw);
  const AgentConfig c = default_config(AgentKind::wvtr);
  WvtrAgent agent(rig.model, rig.task, c);
  Rng rng(1);
  for (std::size_t k = 1; k <= 40; ++k) {
    const Policy pi = agent.begin_episode(k);
    const ValueTable v = agent.last_plan().v;
    const Trajectory traj = sample_episode(rig.mdp, pi, rng, k);
    for (std::size_t h = 0; h < traj.steps.size(); ++h) {
      const auto in = expected_inputs(agent, *rig.model, v[h + 1], traj.steps[h]);
      agent.observe(h, traj.steps[h]);
      const HomeOutput& out = agent.last_home();
      const HomeOutput ref = home(in, agent.current_beta(), c.sigma_min, c.gamma);
      for (std::size_t m = 0; m < in.size(); ++m) {
        const double s2 = out.sigma_bar[m] * out.sigma_bar[m];
        CHECK(s2 >= c.sigma_min * c.sigma_min * (1 - 1e-12));
        CHECK(s2 >= c.gamma * c.gamma * in[m].d_live * (1 - 1e-12));
        CHECK(out.sigma_bar[m] == ref.sigma_bar[m]);
      }
    }
    agent.end_episode();
  }
}

TEST_CASE("unweighted baseline uses unit weights") {
  Rig rig(5, 20, RewardMode::raw);
  auto agent = std::make_unique<WvtrAgent>(rig.model, rig.task, default_config(AgentKind::vtr), "vtr");
  Rng rng(2);
  for (std::size_t k = 1; k <= 10; ++k) {
    const Trajectory traj = sample_episode(rig.mdp, agent->begin_episode(k), rng, k);
    for (std::size_t h = 0; h < traj.steps.size(); ++h) {
      agent->observe(h, traj.steps[h]);
      REQUIRE(agent->last_home().sigma_bar.size() == 1);
      CHECK(agent->last_home().sigma_bar[0] == 1.0);
    }
    agent->end_episode();
  }
}

TEST_CASE("two-level variant uses the top-level rule at level one") {
  Rig rig(5, 20, RewardMode::raw);
  const AgentConfig c = default_config(AgentKind::no_home);
  WvtrAgent agent(rig.model, rig.task, c, "no_home");
  Rng rng(4);
  for (std::size_t k = 1; k <= 5; ++k) {
    const Policy pi = agent.begin_episode(k);
    const ValueTable v = agent.last_plan().v;
    const Trajectory traj = sample_episode(rig.mdp, pi, rng, k);
    for (std::size_t h = 0; h < traj.steps.size(); ++h) {
      const auto in = expected_inputs(agent, *rig.model, v[h + 1], traj.steps[h]);
      agent.observe(h, traj.steps[h]);
      const double expect = std::max({1.0, c.sigma_min * c.sigma_min, c.gamma * c.gamma * in[1].d_live});
      CHECK(agent.last_home().sigma_bar[1] == doctest::Approx(std::sqrt(expect)));
    }
    agent.end_episode();
  }
}

TEST_CASE("observations feed the live data and the refit") {
  Rig rig(4, 8, RewardMode::raw);
  AgentConfig c;
  c.levels = 1;
  WvtrAgent agent(rig.model, rig.task, c);
  Rng rng(5);

  // Independent record of every sample the agent should have absorbed.
  std::vector<std::vector<std::tuple<BlockFeature, double, double>>> log(2);
  for (std::size_t k = 1; k <= 3; ++k) {
    const Policy pi = agent.begin_episode(k);
    const ValueTable v = agent.last_plan().v;
    const Trajectory traj = sample_episode(rig.mdp, pi, rng, k);
    const std::size_t snap_count = agent.level(0).snapshot.count();
    for (std::size_t h = 0; h < traj.steps.size(); ++h) {
      const auto& st = traj.steps[h];
      const double before = uncertainty_linear(agent.level(0).live,
                                               rig.model->phi_v(st.state, st.action, ValueVector(v[h + 1])));
      agent.observe(h, st);
      CHECK(agent.level(0).snapshot.count() == snap_count);
      Eigen::VectorXd power = v[h + 1];
      for (std::size_t m = 0; m < 2; ++m) {
        if (m > 0) power = power.cwiseProduct(power);
        log[m].emplace_back(rig.model->phi_v(st.state, st.action, ValueVector(power)),
                            1.0 / agent.last_home().sigma_bar[m], power(st.next_state));
      }
      const double after = uncertainty_linear(agent.level(0).live,
                                              rig.model->phi_v(st.state, st.action, ValueVector(v[h + 1])));
      CHECK(after <= before);
    }
    agent.end_episode();
    CHECK(agent.level(0).snapshot.count() == agent.level(0).live.count());
  }

  for (std::size_t m = 0; m < 2; ++m) {
    const auto d = static_cast<Eigen::Index>(rig.model->dim());
    Eigen::MatrixXd a = c.lambda * Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
    for (const auto& [phi, w, y] : log[m]) {
      const Eigen::VectorXd x = phi.to_dense(rig.model->n_blocks());
      a += w * w * x * x.transpose();
      b += w * w * y * x;
    }
    const Eigen::VectorXd theta = a.ldlt().solve(b);
    CHECK((agent.level(m).model.theta() - theta).norm() <= 1e-8 * std::max(1.0, theta.norm()));
  }
}

TEST_CASE("weight of sigma_min enters squared") {
  RidgeSummary r(2, 1.0);
  r.add(Eigen::Vector2d(1, 0), 1.0 / 0.01, 0.0);
  CHECK(r.block_gram(0)(0, 0) == doctest::Approx(1.0 + 1.0 / (0.01 * 0.01)));
}

TEST_CASE("level-zero model learns frequently visited pairs") {
  Rig rig(5, 20, RewardMode::raw);
  auto agent = std::make_unique<WvtrAgent>(rig.model, rig.task, default_config(AgentKind::wvtr));
  Rng rng(6);
  std::vector<std::size_t> visits(10, 0);
  for (std::size_t k = 1; k <= 300; ++k) {
    const Trajectory traj = sample_episode(rig.mdp, agent->begin_episode(k), rng, k);
    for (std::size_t h = 0; h < traj.steps.size(); ++h) {
      agent->observe(h, traj.steps[h]);
      ++visits[traj.steps[h].state * 2 + traj.steps[h].action];
    }
    agent->end_episode();
  }
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t a = 0; a < 2; ++a) {
      if (visits[s * 2 + a] < 200) continue;
      const double pred = oracle_predict(agent->level(0).model, *rig.model, {s, a, ValueVector::ones(5)});
      CHECK(std::abs(pred - 1.0) < 0.05);
    }
  }
}

TEST_CASE("random agent and factories") {
  Rig rig(5, 20, RewardMode::raw);
  auto r = make_baseline(AgentKind::random, rig.task);
  const Policy p = r->begin_episode(1);
  CHECK(p.prob(3, 2, 0) == 0.5);
  CHECK(r->name() == "random");
  CHECK(std::isnan(r->diagnostics().optimistic_value));
  CHECK(make_baseline(AgentKind::vtr, rig.task)->name() == "vtr");
  CHECK(make_baseline(AgentKind::no_home, rig.task)->name() == "no_home");
}
