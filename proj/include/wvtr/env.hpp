#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wvtr/common.hpp"

namespace wvtr {

enum class RewardMode { raw, normalized };

RewardMode parse_reward_mode(const std::string& text);
std::string to_string(RewardMode mode);

/// Finite-horizon MDP with time-homogeneous transitions and rewards.
///
/// Transitions are stored as one row per (s, a) pair, row index
/// `s * n_actions + a`, columns indexed by the next state.
struct EpisodicMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::size_t horizon = 0;
  Eigen::MatrixXd transition;  // (S*A) x S
  Eigen::MatrixXd reward;      // S x A
  std::size_t initial_state = 0;
  RewardMode reward_mode = RewardMode::raw;

  std::size_t row(std::size_t s, std::size_t a) const { return s * n_actions + a; }
  auto next_state_probs(std::size_t s, std::size_t a) const { return transition.row(row(s, a)); }

  /// Throws InvalidEnvironment when any structural invariant fails.
  void validate() const;
};

/// Values indexed by step: entry h (0-based) is V_{h+1}; entry `horizon` is
/// the terminal all-zero vector.
using ValueTable = std::vector<Eigen::VectorXd>;

/// Per-step action distributions, entry h is an S x A row-stochastic matrix.
class Policy {
 public:
  Policy() = default;
  Policy(std::size_t n_states, std::size_t n_actions, std::size_t horizon);

  static Policy deterministic(const std::vector<std::vector<std::size_t>>& actions,
                              std::size_t n_actions);
  static Policy uniform(std::size_t n_states, std::size_t n_actions, std::size_t horizon);

  std::size_t horizon() const { return probs_.size(); }
  double prob(std::size_t h, std::size_t s, std::size_t a) const { return probs_[h](s, a); }
  const Eigen::MatrixXd& step(std::size_t h) const { return probs_[h]; }
  Eigen::MatrixXd& step(std::size_t h) { return probs_[h]; }

  std::size_t sample(std::size_t h, std::size_t s, Rng& rng) const;

 private:
  std::vector<Eigen::MatrixXd> probs_;
};

struct Transition {
  std::size_t state = 0;
  std::size_t action = 0;
  double reward = 0.0;
  std::size_t next_state = 0;
};

struct Trajectory {
  std::size_t episode = 0;
  std::vector<Transition> steps;

  double total_reward() const;
};

/// n-state RiverSwim: action 0 swims right against the current, action 1
/// drifts left deterministically.
EpisodicMdp make_riverswim(std::size_t n_states, std::size_t horizon, RewardMode mode);

/// Backward induction for V*; returns H+1 vectors with the terminal one zero.
ValueTable optimal_values(const EpisodicMdp& mdp);

/// Q*_h(s, a) for h = 1..H as S x A matrices.
std::vector<Eigen::MatrixXd> optimal_q_values(const EpisodicMdp& mdp);

/// Greedy deterministic policy with respect to a value table (lowest index
/// wins ties).
Policy greedy_policy(const EpisodicMdp& mdp, const ValueTable& values);

/// Exact evaluation of a (possibly stochastic) policy.
ValueTable policy_value(const EpisodicMdp& mdp, const Policy& policy);

Trajectory sample_episode(const EpisodicMdp& mdp, const Policy& policy, Rng& rng,
                          std::size_t episode = 0);

std::size_t sample_next_state(const EpisodicMdp& mdp, std::size_t s, std::size_t a, Rng& rng);

}  // namespace wvtr
