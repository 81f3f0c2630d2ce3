#include "wvtr/agent.hpp"

#include <algorithm>
#include <cmath>

#include "wvtr/uncertainty.hpp"

namespace wvtr {

AgentKind parse_agent_kind(const std::string& text) {
  if (text == "wvtr") return AgentKind::wvtr;
  if (text == "vtr") return AgentKind::vtr;
  if (text == "no_home") return AgentKind::no_home;
  if (text == "random") return AgentKind::random;
  throw ConfigError("unknown agent '" + text + "' (expected wvtr|vtr|no_home|random)");
}

std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::wvtr: return "wvtr";
    case AgentKind::vtr: return "vtr";
    case AgentKind::no_home: return "no_home";
    case AgentKind::random: return "random";
  }
  return "?";
}

void AgentConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
  if (!(sigma_min > 0.0) || !std::isfinite(sigma_min)) throw ConfigError("sigma_min must be positive");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be nonnegative");
  if (gamma == 0.0 && levels != 0) throw ConfigError("gamma = 0 is only allowed with M = 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be nonnegative");
  if (beta_mode == BetaMode::schedule) {
    if (gamma == 0.0) throw ConfigError("the beta schedule needs gamma > 0");
    if (!(cover_epsilon > 0.0)) throw ConfigError("cover_epsilon must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  }
}

AgentConfig default_config(AgentKind kind) {
  AgentConfig cfg;
  switch (kind) {
    case AgentKind::wvtr:
      break;
    case AgentKind::no_home:
      cfg.levels = 1;
      break;
    case AgentKind::vtr:
      cfg.sigma_min = 1.0;
      cfg.gamma = 0.0;
      cfg.levels = 0;
      break;
    case AgentKind::random:
      break;
  }
  return cfg;
}

unsigned theoretical_levels(std::size_t episodes, std::size_t horizon) {
  return static_cast<unsigned>(std::ceil(std::log2(3.0 * static_cast<double>(episodes * horizon))));
}

double scheduled_beta(const AgentConfig& cfg, std::size_t episode, std::size_t horizon, double log_covering) {
  const double kh = static_cast<double>(episode * horizon);
  const double inv_var = 1.0 / (cfg.sigma_min * cfg.sigma_min);
  const double iota = 16.0 * (std::log(2.0) + log_covering + 2.0 * std::log(kh) +
                              std::log(std::log(kh * inv_var) + 2.0) + std::log(std::log(inv_var) + 2.0) -
                              std::log(cfg.delta));
  return 3.0 * std::sqrt(iota) + 2.0 * iota / (cfg.gamma * cfg.gamma) + std::sqrt(cfg.lambda) +
         std::sqrt(6.0 * kh * cfg.cover_epsilon * inv_var);
}

TaskShape TaskShape::from(const EpisodicMdp& mdp) {
  TaskShape t;
  t.n_states = mdp.n_states;
  t.n_actions = mdp.n_actions;
  t.horizon = mdp.horizon;
  t.initial_state = mdp.initial_state;
  t.reward = mdp.reward;
  const double max_return = static_cast<double>(mdp.horizon) * mdp.reward.maxCoeff();
  t.unit_scale = 1.0 / std::max(1.0, max_return);
  return t;
}

PlanResult plan(const LinearMixture& model, const LinearPredictor& f0, const RidgeSummary& snapshot, double beta,
                const TaskShape& task) {
  const auto S = static_cast<Eigen::Index>(task.n_states);
  const auto A = static_cast<Eigen::Index>(task.n_actions);
  const double cap = 1.0 / std::sqrt(snapshot.lambda());

  PlanResult out;
  out.q.assign(task.horizon, Eigen::MatrixXd::Zero(S, A));
  out.v.assign(task.horizon + 1, Eigen::VectorXd::Zero(S));
  std::vector<std::vector<std::size_t>> actions(task.horizon, std::vector<std::size_t>(task.n_states, 0));

  for (std::size_t h = task.horizon; h-- > 0;) {
    const ValueVector next(out.v[h + 1]);
    auto& q = out.q[h];
    for (Eigen::Index s = 0; s < S; ++s) {
      for (Eigen::Index a = 0; a < A; ++a) {
        const BlockFeature phi = model.phi_v(static_cast<std::size_t>(s), static_cast<std::size_t>(a), next);
        double value = task.unit_scale * task.reward(s, a) + f0.predict(phi);
        if (beta > 0.0) value += beta * std::min(cap, uncertainty_linear(snapshot, phi));
        q(s, a) = std::min(value, 1.0);
      }
      Eigen::Index best = 0;
      out.v[h](s) = q.row(s).maxCoeff(&best);
      actions[h][static_cast<std::size_t>(s)] = static_cast<std::size_t>(best);
    }
  }
  out.policy = Policy::deterministic(actions, task.n_actions);
  return out;
}

HomeOutput home(std::span<const HomeLevelInput> levels, double beta, double sigma_min, double gamma,
                ErrorWidthVariant variant) {
  if (levels.empty()) throw ConfigError("HOME needs at least one level");
  const std::size_t top = levels.size() - 1;
  const double floor = sigma_min * sigma_min;
  const double g2 = gamma * gamma;

  HomeOutput out;
  out.sigma_bar.resize(levels.size());
  out.variance_estimate.resize(top);
  out.error_width.resize(top);
  for (std::size_t m = 0; m < top; ++m) {
    const auto& lo = levels[m];
    const auto& hi = levels[m + 1];
    const double variance = hi.prediction - lo.prediction * lo.prediction;
    const double upper_factor = variant == ErrorWidthVariant::upper_level_doubled ? 2.0 : 1.0;
    const double lower_factor = variant == ErrorWidthVariant::upper_level_doubled ? 1.0 : 2.0;
    const double width = std::min(1.0, upper_factor * beta * hi.d_snapshot) +
                         std::min(1.0, lower_factor * beta * lo.d_snapshot);
    out.variance_estimate[m] = variance;
    out.error_width[m] = width;
    out.sigma_bar[m] = std::sqrt(std::max({variance + width, floor, g2 * lo.d_live}));
  }
  out.sigma_bar[top] = std::sqrt(std::max({1.0, floor, g2 * levels[top].d_live}));
  return out;
}

// ---------------------------------------------------------------------------

WvtrAgent::WvtrAgent(std::shared_ptr<const LinearMixture> model, TaskShape task, AgentConfig config,
                     std::string name)
    : model_(std::move(model)), task_(std::move(task)), config_(config), name_(std::move(name)) {
  config_.validate();
  if (model_->n_states() != task_.n_states || model_->n_actions() != task_.n_actions) {
    throw ConfigError("model shape does not match the task");
  }
  log_covering_ = config_.log_covering;
  if (!(log_covering_ > 0.0)) {
    // Linear classes: log N(eps) ~ d log(B / eps).
    const double bound = std::sqrt(static_cast<double>(model_->dim()));
    log_covering_ = static_cast<double>(model_->dim()) * std::log(std::max(bound / config_.cover_epsilon, 2.0));
  }
  uncertainty_cap_ = 1.0 / std::sqrt(config_.lambda);
  levels_.reserve(config_.levels + 1);
  for (unsigned m = 0; m <= config_.levels; ++m) {
    LevelState st;
    st.level = m;
    st.live = RidgeSummary(model_->n_blocks(), model_->block_dim(), config_.lambda);
    st.snapshot = st.live;
    st.model = LinearPredictor::zero(model_->n_blocks(), model_->block_dim());
    levels_.push_back(std::move(st));
  }
}

double WvtrAgent::capped_uncertainty(const RidgeSummary& data, const BlockFeature& phi) const {
  return std::min(uncertainty_cap_, uncertainty_linear(data, phi));
}

void WvtrAgent::set_level_model(std::size_t m, LinearPredictor model) { levels_.at(m).model = std::move(model); }

Policy WvtrAgent::begin_episode(std::size_t episode) {
  episode_ = episode;
  beta_ = config_.beta_mode == BetaMode::constant
              ? config_.beta
              : scheduled_beta(config_, std::max<std::size_t>(episode, 1), task_.horizon, log_covering_);
  sigma_sum_ = 0.0;
  sigma_count_ = 0;
  plan_ = plan(*model_, levels_[0].model, levels_[0].snapshot, beta_, task_);
  return plan_.policy;
}

void WvtrAgent::observe(std::size_t h, const Transition& step) {
  const std::size_t n_levels = levels_.size();
  std::vector<BlockFeature> features;
  std::vector<double> targets;
  std::vector<HomeLevelInput> inputs(n_levels);
  features.reserve(n_levels);
  targets.reserve(n_levels);

  ValueVector power(plan_.v[h + 1]);
  for (std::size_t m = 0; m < n_levels; ++m) {
    if (m > 0) power = power.power(2);
    const BlockFeature phi = model_->phi_v(step.state, step.action, power);
    auto& lv = levels_[m];
    inputs[m].prediction = lv.model.predict(phi);
    inputs[m].d_snapshot = capped_uncertainty(lv.snapshot, phi);
    inputs[m].d_live = capped_uncertainty(lv.live, phi);
    targets.push_back(power(step.next_state));
    features.push_back(phi);
  }

  last_home_ = home(inputs, beta_, config_.sigma_min, config_.gamma, config_.error_width);

  for (std::size_t m = 0; m < n_levels; ++m) {
    auto& lv = levels_[m];
    const double sigma = last_home_.sigma_bar[m];
    const double ratio = inputs[m].d_live / sigma;
    lv.potential += std::min(1.0, ratio * ratio);
    lv.live.add(features[m], 1.0 / sigma, targets[m]);
  }
  sigma_sum_ += last_home_.sigma_bar[0];
  ++sigma_count_;
  ++total_steps_;
}

void WvtrAgent::end_episode() {
  for (auto& lv : levels_) {
    lv.live.refactor();
    if (lv.live.count() != lv.snapshot.count()) lv.model = oracle_fit(lv.live);
    lv.snapshot = lv.live;
  }
}

EpisodeDiagnostics WvtrAgent::diagnostics() const {
  EpisodeDiagnostics d;
  if (sigma_count_ > 0) d.mean_sigma_bar = sigma_sum_ / static_cast<double>(sigma_count_);
  d.realized_potential = levels_[0].potential;
  for (const auto& lv : levels_) d.level_potentials.push_back(lv.potential);
  if (!plan_.v.empty()) d.optimistic_value = plan_.v[0](static_cast<Eigen::Index>(task_.initial_state));
  return d;
}

Policy RandomAgent::begin_episode(std::size_t) {
  return Policy::uniform(task_.n_states, task_.n_actions, task_.horizon);
}

std::unique_ptr<Agent> make_agent(AgentKind kind, const TaskShape& task, const AgentConfig& config,
                                  const std::string& name) {
  if (kind == AgentKind::random) return std::make_unique<RandomAgent>(task);
  auto model = std::make_shared<TabularMixture>(task.n_states, task.n_actions);
  return std::make_unique<WvtrAgent>(std::move(model), task, config, name);
}

std::unique_ptr<Agent> make_baseline(AgentKind kind, const TaskShape& task) {
  return make_agent(kind, task, default_config(kind), to_string(kind));
}

}  // namespace wvtr
