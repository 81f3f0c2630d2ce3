#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wvtr/env.hpp"
#include "wvtr/model.hpp"

namespace wvtr {

enum class AgentKind { wvtr, vtr, no_home, random };

AgentKind parse_agent_kind(const std::string& text);
std::string to_string(AgentKind kind);

enum class BetaMode { constant, schedule };

/// Where the factor 2 sits in the HOME error width.
enum class ErrorWidthVariant {
  upper_level_doubled,  // min{1, 2 b D(z_{m+1})} + min{1, b D(z_m)}
  lower_level_doubled,  // min{1, b D(z_{m+1})} + min{1, 2 b D(z_m)}
};

struct AgentConfig {
  double lambda = 0.001;
  double sigma_min = 0.01;
  double gamma = 0.5;
  double beta = 1.0;
  unsigned levels = 3;  // highest moment level M
  BetaMode beta_mode = BetaMode::constant;
  // Confidence-radius schedule inputs (BetaMode::schedule only).
  double cover_epsilon = 1e-3;
  double log_covering = 0.0;  // <= 0 selects d log(B / cover_epsilon)
  double delta = 0.1;
  ErrorWidthVariant error_width = ErrorWidthVariant::upper_level_doubled;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Hyperparameters used for the RiverSwim comparison.
AgentConfig default_config(AgentKind kind);

/// ceil(log2(3 K H)), the level count that makes the moment recursion exact
/// up to the final level's trivial variance bound.
unsigned theoretical_levels(std::size_t episodes, std::size_t horizon);

/// beta_k = 3 sqrt(iota_k) + 2 iota_k / gamma^2 + sqrt(lambda) + sqrt(6 k H eps / sigma_min^2).
double scheduled_beta(const AgentConfig& cfg, std::size_t episode, std::size_t horizon, double log_covering);

/// What an agent may know about the task: shape, horizon and the reward
/// table. Transitions are withheld.
struct TaskShape {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::size_t horizon = 0;
  std::size_t initial_state = 0;
  Eigen::MatrixXd reward;
  /// Factor mapping rewards onto a scale where an episode returns at most 1.
  double unit_scale = 1.0;

  static TaskShape from(const EpisodicMdp& mdp);
};

struct PlanResult {
  std::vector<Eigen::MatrixXd> q;  // h = 1..H, S x A
  ValueTable v;                    // h = 1..H+1
  Policy policy;
};

/// Optimistic backward induction:
///   Q_h(s,a) = min{ r(s,a) + f0(s,a,V_{h+1}) + beta D(s,a,V_{h+1}; snapshot), 1 }
/// on the unit reward scale; greedy actions break ties toward the lowest index.
PlanResult plan(const LinearMixture& model, const LinearPredictor& f0, const RidgeSummary& snapshot, double beta,
                const TaskShape& task);

struct HomeLevelInput {
  double prediction = 0.0;  // f_m(z_m), clamped to [0, 1]
  double d_snapshot = 0.0;  // D(z_m; episode-start dataset)
  double d_live = 0.0;      // D(z_m; within-episode dataset)
};

struct HomeOutput {
  std::vector<double> sigma_bar;          // one per level, sigma_bar >= sigma_min
  std::vector<double> variance_estimate;  // f_{m+1}(z_{m+1}) - f_m(z_m)^2, m < M
  std::vector<double> error_width;        // E_m, m < M
};

/// High-order moment estimator producing the regression weights 1/sigma_bar
/// for levels 0..M from per-level predictions and uncertainties.
HomeOutput home(std::span<const HomeLevelInput> levels, double beta, double sigma_min, double gamma,
                ErrorWidthVariant variant = ErrorWidthVariant::upper_level_doubled);

struct EpisodeDiagnostics {
  double mean_sigma_bar = std::numeric_limits<double>::quiet_NaN();  // level 0
  double realized_potential = std::numeric_limits<double>::quiet_NaN();  // level 0, cumulative
  double optimistic_value = std::numeric_limits<double>::quiet_NaN();  // V_{k,1}(s_1)
  std::vector<double> level_potentials;  // cumulative, one per level
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  /// Plans for episode k (1-based) and returns the policy to deploy.
  virtual Policy begin_episode(std::size_t episode) = 0;
  /// Step h is 0-based.
  virtual void observe(std::size_t h, const Transition& step) = 0;
  virtual void end_episode() = 0;
  virtual EpisodeDiagnostics diagnostics() const { return {}; }
};

/// Per-level regression state.
struct LevelState {
  unsigned level = 0;
  RidgeSummary live;      // grows within the episode
  RidgeSummary snapshot;  // frozen at episode start
  LinearPredictor model;
  double potential = 0.0;  // sum of min{1, D_live^2 / sigma_bar^2}
};

/// UCRL with weighted value-targeted regression and HOME weights. With
/// levels = 0, sigma_min = 1 and gamma = 0 it reduces to unweighted VTR.
class WvtrAgent final : public Agent {
 public:
  WvtrAgent(std::shared_ptr<const LinearMixture> model, TaskShape task, AgentConfig config,
            std::string name = "wvtr");

  std::string name() const override { return name_; }
  Policy begin_episode(std::size_t episode) override;
  void observe(std::size_t h, const Transition& step) override;
  void end_episode() override;
  EpisodeDiagnostics diagnostics() const override;

  const AgentConfig& config() const { return config_; }
  const PlanResult& last_plan() const { return plan_; }
  const HomeOutput& last_home() const { return last_home_; }
  const LevelState& level(std::size_t m) const { return levels_.at(m); }
  std::size_t level_count() const { return levels_.size(); }
  double current_beta() const { return beta_; }
  std::size_t total_steps() const { return total_steps_; }

  /// Replaces the fitted model of one level (used to plant exact models).
  void set_level_model(std::size_t m, LinearPredictor model);

 private:
  double capped_uncertainty(const RidgeSummary& data, const BlockFeature& phi) const;

  std::shared_ptr<const LinearMixture> model_;
  TaskShape task_;
  AgentConfig config_;
  std::string name_;
  double log_covering_;
  double uncertainty_cap_;
  std::vector<LevelState> levels_;
  PlanResult plan_;
  HomeOutput last_home_;
  double beta_ = 0.0;
  std::size_t episode_ = 0;
  std::size_t total_steps_ = 0;
  double sigma_sum_ = 0.0;
  std::size_t sigma_count_ = 0;
};

/// Acts uniformly at random and never learns.
class RandomAgent final : public Agent {
 public:
  explicit RandomAgent(TaskShape task) : task_(std::move(task)) {}
  std::string name() const override { return "random"; }
  Policy begin_episode(std::size_t) override;
  void observe(std::size_t, const Transition&) override {}
  void end_episode() override {}

 private:
  TaskShape task_;
};

/// Deploys a fixed policy every episode.
class FixedPolicyAgent final : public Agent {
 public:
  FixedPolicyAgent(Policy policy, std::string name) : policy_(std::move(policy)), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  Policy begin_episode(std::size_t) override { return policy_; }
  void observe(std::size_t, const Transition&) override {}
  void end_episode() override {}

 private:
  Policy policy_;
  std::string name_;
};

/// Builds an agent of the given kind for a tabular task.
std::unique_ptr<Agent> make_agent(AgentKind kind, const TaskShape& task, const AgentConfig& config,
                                  const std::string& name);

/// Baseline with its default hyperparameters.
std::unique_ptr<Agent> make_baseline(AgentKind kind, const TaskShape& task);

}  // namespace wvtr
