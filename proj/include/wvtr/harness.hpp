#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wvtr/agent.hpp"
#include "wvtr/env.hpp"

namespace wvtr {

struct EnvSpec {
  std::string env = "riverswim";
  std::size_t n_states = 5;
  std::size_t horizon = 20;
  RewardMode reward_mode = RewardMode::raw;

  EpisodicMdp build() const;
};

struct AgentSpec {
  std::string name;  // CSV label; defaults to the kind
  AgentKind kind = AgentKind::wvtr;
  AgentConfig config;
};

struct ExperimentConfig {
  EnvSpec env;
  std::vector<AgentSpec> agents;
  std::size_t episodes = 5000;
  std::size_t seeds = 10;
  std::uint64_t base_seed = 0;
  std::string out;       // per-episode CSV; empty skips writing
  std::size_t threads = 0;  // 0 = hardware concurrency
  bool record_sigma = true;
  bool record_potential = true;

  /// Throws ConfigError.
  void validate() const;
};

/// Parses the JSON experiment file. Unknown keys are rejected.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);

/// Agent entry with Table 1 defaults for its kind.
AgentSpec default_agent_spec(AgentKind kind);

struct RegretTrace {
  std::string agent;
  std::uint64_t seed = 0;
  std::vector<double> cum_regret;          // length K
  std::vector<double> avg_reward;          // sampled return / H
  std::vector<double> realized_potential;  // NaN when not recorded
  std::vector<double> mean_sigma_bar;      // NaN when not recorded
  std::vector<std::uint8_t> optimistic;    // V_{k,1}(s1) >= V*_1(s1) - 1e-9 (learning agents)
  std::vector<double> final_level_potentials;
  std::size_t steps = 0;  // transitions observed
  bool failed = false;
  std::string error;
};

/// Optional hook building the agent for a run; lets tests plug in any Agent.
using AgentFactory = std::function<std::unique_ptr<Agent>(const TaskShape&)>;

/// Runs one agent for `episodes` episodes on `mdp` with an Rng seeded by `seed`.
RegretTrace run_single(const EpisodicMdp& mdp, const std::string& label, const AgentFactory& factory,
                       std::size_t episodes, std::uint64_t seed, bool record_sigma = true,
                       bool record_potential = true);

struct AggregateRow {
  std::string agent;
  std::size_t k = 0;
  std::size_t runs = 0;
  double mean = 0.0;
  double std = 0.0;     // sample standard deviation across seeds
  double stderr_ = 0.0;  // std / sqrt(runs)
};

struct ExperimentResult {
  std::vector<RegretTrace> traces;  // sorted by (agent order in config, seed)
  std::vector<AggregateRow> aggregate;

  /// Mean cumulative regret at episode k (1-based) for an agent.
  double mean_regret(const std::string& agent, std::size_t k) const;
};

/// Seed-mean statistics of the cumulative regret, failed runs excluded.
std::vector<AggregateRow> aggregate_traces(const std::vector<RegretTrace>& traces);

/// Runs every (agent, seed) pair on a bounded worker pool. Run i of every
/// agent uses seed base_seed + i.
ExperimentResult run_experiment(const ExperimentConfig& config);

inline constexpr const char* kRegretCsvHeader =
    "agent,seed,k,cum_regret,avg_reward,realized_potential,mean_sigma_bar";

void write_csv(const ExperimentResult& result, std::ostream& out);
/// Throws std::runtime_error on I/O failure.
void emit_csv(const ExperimentResult& result, const std::string& path);
void write_summary_csv(const ExperimentResult& result, std::ostream& out);
void write_failures_csv(const ExperimentResult& result, std::ostream& out);

struct CsvRow {
  std::string agent;
  std::uint64_t seed = 0;
  std::size_t k = 0;
  double cum_regret = 0.0;
  double avg_reward = 0.0;
  double realized_potential = 0.0;
  double mean_sigma_bar = 0.0;
};

/// Reads a file produced by emit_csv.
std::vector<CsvRow> read_regret_csv(const std::string& path);
std::vector<CsvRow> parse_regret_csv(std::istream& in);

}  // namespace wvtr
