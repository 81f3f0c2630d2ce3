#include "wvtr/env.hpp"

#include <algorithm>
#include <cmath>

namespace wvtr {

RewardMode parse_reward_mode(const std::string& text) {
  if (text == "raw") return RewardMode::raw;
  if (text == "normalized") return RewardMode::normalized;
  throw ConfigError("unknown reward_mode '" + text + "' (expected raw|normalized)");
}

std::string to_string(RewardMode mode) {
  return mode == RewardMode::raw ? "raw" : "normalized";
}

void EpisodicMdp::validate() const {
  if (n_states == 0 || n_actions == 0 || horizon == 0) {
    throw InvalidEnvironment("mdp needs positive state, action and horizon counts");
  }
  if (transition.rows() != static_cast<Eigen::Index>(n_states * n_actions) ||
      transition.cols() != static_cast<Eigen::Index>(n_states)) {
    throw InvalidEnvironment("transition table has the wrong shape");
  }
  if (reward.rows() != static_cast<Eigen::Index>(n_states) ||
      reward.cols() != static_cast<Eigen::Index>(n_actions)) {
    throw InvalidEnvironment("reward table has the wrong shape");
  }
  if (initial_state >= n_states) throw InvalidEnvironment("initial state out of range");
  if ((transition.array() < 0.0).any() || !transition.allFinite()) {
    throw InvalidEnvironment("transition probabilities must be finite and nonnegative");
  }
  for (Eigen::Index r = 0; r < transition.rows(); ++r) {
    if (std::abs(transition.row(r).sum() - 1.0) > 1e-12) {
      throw InvalidEnvironment("transition row " + std::to_string(r) + " does not sum to 1");
    }
  }
  if ((reward.array() < 0.0).any() || !reward.allFinite()) {
    throw InvalidEnvironment("rewards must be finite and nonnegative");
  }
  if (reward_mode == RewardMode::normalized &&
      static_cast<double>(horizon) * reward.maxCoeff() > 1.0 + 1e-12) {
    throw InvalidEnvironment("normalized mdp can return more than 1 per episode");
  }
}

Policy::Policy(std::size_t n_states, std::size_t n_actions, std::size_t horizon)
    : probs_(horizon, Eigen::MatrixXd::Zero(n_states, n_actions)) {}

Policy Policy::deterministic(const std::vector<std::vector<std::size_t>>& actions,
                             std::size_t n_actions) {
  const std::size_t n_states = actions.empty() ? 0 : actions.front().size();
  Policy p(n_states, n_actions, actions.size());
  for (std::size_t h = 0; h < actions.size(); ++h) {
    for (std::size_t s = 0; s < n_states; ++s) p.probs_[h](s, actions[h][s]) = 1.0;
  }
  return p;
}

Policy Policy::uniform(std::size_t n_states, std::size_t n_actions, std::size_t horizon) {
  Policy p(n_states, n_actions, horizon);
  for (auto& m : p.probs_) m.setConstant(1.0 / static_cast<double>(n_actions));
  return p;
}

std::size_t Policy::sample(std::size_t h, std::size_t s, Rng& rng) const {
  const Eigen::RowVectorXd row = probs_[h].row(s);
  // A deterministic row consumes no randomness.
  Eigen::Index best = 0;
  if (row.maxCoeff(&best) == 1.0) return static_cast<std::size_t>(best);
  return sample_categorical(std::span<const double>(row.data(), row.size()), rng);
}

double Trajectory::total_reward() const {
  double sum = 0.0;
  for (const auto& t : steps) sum += t.reward;
  return sum;
}

EpisodicMdp make_riverswim(std::size_t n_states, std::size_t horizon, RewardMode mode) {
  if (n_states < 2) throw InvalidEnvironment("riverswim needs at least 2 states");
  if (horizon == 0) throw InvalidEnvironment("horizon must be positive");

  constexpr std::size_t kRight = 0;
  constexpr std::size_t kLeft = 1;
  const std::size_t last = n_states - 1;

  EpisodicMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = 2;
  mdp.horizon = horizon;
  mdp.transition = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_states * 2),
                                         static_cast<Eigen::Index>(n_states));
  mdp.reward = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_states), 2);
  mdp.initial_state = 0;
  mdp.reward_mode = mode;

  auto& P = mdp.transition;
  for (std::size_t s = 0; s < n_states; ++s) {
    const auto right = static_cast<Eigen::Index>(mdp.row(s, kRight));
    const auto left = static_cast<Eigen::Index>(mdp.row(s, kLeft));
    const auto i = static_cast<Eigen::Index>(s);
    if (s == 0) {
      P(right, 0) = 0.1;
      P(right, 1) = 0.9;
    } else if (s == last) {
      P(right, i) = 0.9;
      P(right, i - 1) = 0.1;
    } else {
      P(right, i - 1) = 0.05;
      P(right, i) = 0.05;
      P(right, i + 1) = 0.9;
    }
    P(left, s == 0 ? 0 : i - 1) = 1.0;
  }
  mdp.reward(0, kLeft) = 0.005;
  mdp.reward(static_cast<Eigen::Index>(last), kRight) = 1.0;

  if (mode == RewardMode::normalized) mdp.reward /= static_cast<double>(horizon);
  mdp.validate();
  return mdp;
}

namespace {

Eigen::MatrixXd backup(const EpisodicMdp& mdp, const Eigen::VectorXd& next) {
  const Eigen::VectorXd expected = mdp.transition * next;
  Eigen::MatrixXd q = mdp.reward;
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) +=
          expected(static_cast<Eigen::Index>(mdp.row(s, a)));
    }
  }
  return q;
}

}  // namespace

std::vector<Eigen::MatrixXd> optimal_q_values(const EpisodicMdp& mdp) {
  std::vector<Eigen::MatrixXd> q(mdp.horizon);
  Eigen::VectorXd next = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mdp.n_states));
  for (std::size_t h = mdp.horizon; h-- > 0;) {
    q[h] = backup(mdp, next);
    next = q[h].rowwise().maxCoeff();
  }
  return q;
}

ValueTable optimal_values(const EpisodicMdp& mdp) {
  ValueTable v(mdp.horizon + 1, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mdp.n_states)));
  for (std::size_t h = mdp.horizon; h-- > 0;) {
    v[h] = backup(mdp, v[h + 1]).rowwise().maxCoeff();
  }
  return v;
}

Policy greedy_policy(const EpisodicMdp& mdp, const ValueTable& values) {
  std::vector<std::vector<std::size_t>> actions(mdp.horizon,
                                                std::vector<std::size_t>(mdp.n_states, 0));
  for (std::size_t h = 0; h < mdp.horizon; ++h) {
    const Eigen::MatrixXd q = backup(mdp, values[h + 1]);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      Eigen::Index best = 0;
      q.row(static_cast<Eigen::Index>(s)).maxCoeff(&best);  // first maximum
      actions[h][s] = static_cast<std::size_t>(best);
    }
  }
  return Policy::deterministic(actions, mdp.n_actions);
}

ValueTable policy_value(const EpisodicMdp& mdp, const Policy& policy) {
  ValueTable v(mdp.horizon + 1, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mdp.n_states)));
  for (std::size_t h = mdp.horizon; h-- > 0;) {
    const Eigen::MatrixXd q = backup(mdp, v[h + 1]);
    v[h] = q.cwiseProduct(policy.step(h)).rowwise().sum();
  }
  return v;
}

std::size_t sample_next_state(const EpisodicMdp& mdp, std::size_t s, std::size_t a, Rng& rng) {
  const Eigen::RowVectorXd row = mdp.next_state_probs(s, a);
  return sample_categorical(std::span<const double>(row.data(), row.size()), rng);
}

Trajectory sample_episode(const EpisodicMdp& mdp, const Policy& policy, Rng& rng,
                          std::size_t episode) {
  Trajectory traj;
  traj.episode = episode;
  traj.steps.reserve(mdp.horizon);
  std::size_t s = mdp.initial_state;
  for (std::size_t h = 0; h < mdp.horizon; ++h) {
    const std::size_t a = policy.sample(h, s, rng);
    const std::size_t next = sample_next_state(mdp, s, a, rng);
    traj.steps.push_back({s, a, mdp.reward(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)), next});
    s = next;
  }
  return traj;
}

}  // namespace wvtr
