// Command-line front end: run experiments, statcheck batteries, and print
// optimal value tables.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "wvtr/harness.hpp"
#include "wvtr/statcheck.hpp"

namespace {

std::string sibling(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

int cmd_run(const std::string& config_path, const std::optional<std::string>& out,
            const std::optional<std::size_t>& seeds, const std::optional<std::size_t>& episodes,
            const std::optional<std::size_t>& threads) {
  wvtr::ExperimentConfig cfg = config_path.empty() ? wvtr::parse_config("{}") : wvtr::load_config(config_path);
  if (out) cfg.out = *out;
  if (seeds) cfg.seeds = *seeds;
  if (episodes) cfg.episodes = *episodes;
  if (threads) cfg.threads = *threads;
  cfg.validate();
  if (cfg.out.empty()) cfg.out = "regret.csv";

  const auto start = std::chrono::steady_clock::now();
  const wvtr::ExperimentResult result = wvtr::run_experiment(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  wvtr::emit_csv(result, cfg.out);
  {
    std::ofstream summary(sibling(cfg.out, "_summary.csv"), std::ios::binary);
    wvtr::write_summary_csv(result, summary);
  }
  std::size_t failures = 0;
  for (const auto& t : result.traces) {
    if (t.failed) {
      ++failures;
      std::cerr << "run failed: agent=" << t.agent << " seed=" << t.seed << ": " << t.error << '\n';
    }
  }
  if (failures > 0) {
    std::ofstream f(sibling(cfg.out, "_failures.csv"), std::ios::binary);
    wvtr::write_failures_csv(result, f);
  }

  std::cout << "episodes=" << cfg.episodes << " seeds=" << cfg.seeds << " elapsed=" << secs << "s\n";
  for (const auto& a : cfg.agents) {
    try {
      std::cout << a.name << ": mean final regret " << result.mean_regret(a.name, cfg.episodes) << '\n';
    } catch (const std::out_of_range&) {
      std::cout << a.name << ": no successful runs\n";
    }
  }
  std::cout << "wrote " << cfg.out << '\n';
  return failures == 0 ? 0 : 3;
}

int cmd_statcheck(std::size_t trials, std::uint64_t seed, const std::optional<std::string>& out) {
  const auto rows = wvtr::run_statcheck_suite(trials, seed);
  if (out) {
    std::ofstream f(*out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + *out + "' for writing");
    wvtr::write_statcheck_csv(rows, f);
  } else {
    wvtr::write_statcheck_csv(rows, std::cout);
  }
  bool ok = true;
  for (const auto& r : rows) ok = ok && r.pass;
  return ok ? 0 : 4;
}

int cmd_dp(const std::string& config_path, const std::optional<std::size_t>& n_states,
           const std::optional<std::size_t>& horizon, const std::optional<std::string>& reward_mode) {
  wvtr::EnvSpec env = config_path.empty() ? wvtr::EnvSpec{} : wvtr::load_config(config_path).env;
  if (n_states) env.n_states = *n_states;
  if (horizon) env.horizon = *horizon;
  if (reward_mode) env.reward_mode = wvtr::parse_reward_mode(*reward_mode);
  const wvtr::EpisodicMdp mdp = env.build();
  const auto v = wvtr::optimal_values(mdp);
  const auto q = wvtr::optimal_q_values(mdp);
  std::cout << "h,state,v_star,q_right,q_left\n";
  for (std::size_t h = 0; h < mdp.horizon; ++h) {
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      std::cout << (h + 1) << ',' << (s + 1) << ',' << wvtr::format_number(v[h](si)) << ','
                << wvtr::format_number(q[h](si, 0)) << ',' << wvtr::format_number(q[h](si, 1)) << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weighted value-targeted regression lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::size_t> seeds;
  std::optional<std::size_t> episodes;
  std::optional<std::size_t> threads;

  auto* run = app.add_subcommand("run", "run a regret experiment and write CSV");
  run->add_option("--config", config_path, "JSON experiment file")->check(CLI::ExistingFile);
  run->add_option("--out", out, "per-episode CSV path");
  run->add_option("--seeds", seeds, "number of seeds")->check(CLI::PositiveNumber);
  run->add_option("--episodes", episodes, "episodes K")->check(CLI::PositiveNumber);
  run->add_option("--threads", threads, "worker threads (0 = all cores)");

  std::size_t trials = 1000;
  std::uint64_t stat_seed = 1;
  auto* stat = app.add_subcommand("statcheck", "run concentration and potential batteries");
  stat->add_option("--trials", trials, "trials per battery")->check(CLI::PositiveNumber);
  stat->add_option("--seed", stat_seed, "base seed");
  stat->add_option("--out", out, "CSV path (default stdout)");

  std::optional<std::size_t> n_states;
  std::optional<std::size_t> horizon;
  std::optional<std::string> reward_mode;
  auto* dp = app.add_subcommand("dp", "print optimal value tables");
  dp->add_option("--config", config_path, "JSON experiment file (env section)")->check(CLI::ExistingFile);
  dp->add_option("--states", n_states, "number of states");
  dp->add_option("--horizon", horizon, "horizon H");
  dp->add_option("--reward-mode", reward_mode, "raw|normalized");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, out, seeds, episodes, threads);
    if (*stat) return cmd_statcheck(trials, stat_seed, out);
    if (*dp) return cmd_dp(config_path, n_states, horizon, reward_mode);
  } catch (const wvtr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
