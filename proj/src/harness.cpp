#include "wvtr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace wvtr {

using nlohmann::json;

EpisodicMdp EnvSpec::build() const {
  if (env != "riverswim") throw ConfigError("unknown env '" + env + "' (expected riverswim)");
  return make_riverswim(n_states, horizon, reward_mode);
}

void ExperimentConfig::validate() const {
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (seeds < 1) throw ConfigError("at least one seed is required");
  if (agents.empty()) throw ConfigError("at least one agent is required");
  if (env.env != "riverswim") throw ConfigError("unknown env '" + env.env + "' (expected riverswim)");
  if (env.n_states < 2) throw ConfigError("riverswim needs n_states >= 2");
  if (env.horizon < 1) throw ConfigError("horizon must be >= 1");
  std::set<std::string> names;
  for (const auto& a : agents) {
    if (a.name.empty()) throw ConfigError("agent name must not be empty");
    if (!names.insert(a.name).second) throw ConfigError("duplicate agent name '" + a.name + "'");
    if (a.kind != AgentKind::random) a.config.validate();
  }
}

AgentSpec default_agent_spec(AgentKind kind) {
  return {to_string(kind), kind, default_config(kind)};
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_key(const json& obj, const char* key, T& dst) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

AgentSpec parse_agent(const json& obj) {
  if (!obj.is_object()) throw ConfigError("agent entries must be objects");
  reject_unknown(obj,
                 {"agent", "name", "lambda", "sigma_min", "gamma", "beta", "M", "beta_mode", "error_width",
                  "cover_epsilon", "log_covering", "delta"},
                 "agent");
  if (!obj.contains("agent")) throw ConfigError("agent entry needs an 'agent' key");
  AgentSpec spec = default_agent_spec(parse_agent_kind(obj.at("agent").get<std::string>()));
  read_key(obj, "name", spec.name);
  auto& c = spec.config;
  read_key(obj, "lambda", c.lambda);
  read_key(obj, "sigma_min", c.sigma_min);
  read_key(obj, "gamma", c.gamma);
  read_key(obj, "beta", c.beta);
  read_key(obj, "M", c.levels);
  read_key(obj, "cover_epsilon", c.cover_epsilon);
  read_key(obj, "log_covering", c.log_covering);
  read_key(obj, "delta", c.delta);
  if (obj.contains("beta_mode")) {
    const auto mode = obj.at("beta_mode").get<std::string>();
    if (mode == "constant") c.beta_mode = BetaMode::constant;
    else if (mode == "schedule") c.beta_mode = BetaMode::schedule;
    else throw ConfigError("beta_mode must be constant|schedule");
  }
  if (obj.contains("error_width")) {
    const auto v = obj.at("error_width").get<std::string>();
    if (v == "upper") c.error_width = ErrorWidthVariant::upper_level_doubled;
    else if (v == "lower") c.error_width = ErrorWidthVariant::lower_level_doubled;
    else throw ConfigError("error_width must be upper|lower");
  }
  return spec;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  reject_unknown(root,
                 {"env", "agents", "episodes", "seeds", "base_seed", "out", "threads", "record_sigma",
                  "record_potential"},
                 "config");

  ExperimentConfig cfg;
  if (root.contains("env")) {
    const auto& e = root.at("env");
    if (!e.is_object()) throw ConfigError("'env' must be an object");
    reject_unknown(e, {"env", "n_states", "horizon", "reward_mode"}, "env");
    read_key(e, "env", cfg.env.env);
    read_key(e, "n_states", cfg.env.n_states);
    read_key(e, "horizon", cfg.env.horizon);
    if (e.contains("reward_mode")) cfg.env.reward_mode = parse_reward_mode(e.at("reward_mode").get<std::string>());
  }
  if (root.contains("agents")) {
    if (!root.at("agents").is_array()) throw ConfigError("'agents' must be an array");
    for (const auto& a : root.at("agents")) cfg.agents.push_back(parse_agent(a));
  } else {
    for (AgentKind k : {AgentKind::wvtr, AgentKind::vtr, AgentKind::random}) cfg.agents.push_back(default_agent_spec(k));
  }
  read_key(root, "episodes", cfg.episodes);
  read_key(root, "seeds", cfg.seeds);
  read_key(root, "base_seed", cfg.base_seed);
  read_key(root, "out", cfg.out);
  read_key(root, "threads", cfg.threads);
  read_key(root, "record_sigma", cfg.record_sigma);
  read_key(root, "record_potential", cfg.record_potential);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// ---------------------------------------------------------------------------

RegretTrace run_single(const EpisodicMdp& mdp, const std::string& label, const AgentFactory& factory,
                       std::size_t episodes, std::uint64_t seed, bool record_sigma, bool record_potential) {
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  RegretTrace trace;
  trace.agent = label;
  trace.seed = seed;
  try {
    const TaskShape task = TaskShape::from(mdp);
    auto agent = factory(task);
    const auto s1 = static_cast<Eigen::Index>(mdp.initial_state);
    const double v_star = optimal_values(mdp)[0](s1);
    const double h = static_cast<double>(mdp.horizon);
    Rng rng(seed);

    trace.cum_regret.reserve(episodes);
    double cum = 0.0;
    for (std::size_t k = 1; k <= episodes; ++k) {
      const Policy policy = agent->begin_episode(k);
      const double value = policy_value(mdp, policy)[0](s1);
      cum += std::max(0.0, v_star - value);

      const Trajectory traj = sample_episode(mdp, policy, rng, k);
      for (std::size_t step = 0; step < traj.steps.size(); ++step) agent->observe(step, traj.steps[step]);
      agent->end_episode();

      const EpisodeDiagnostics diag = agent->diagnostics();
      trace.cum_regret.push_back(cum);
      trace.avg_reward.push_back(traj.total_reward() / h);
      trace.realized_potential.push_back(record_potential ? diag.realized_potential : kNaN);
      trace.mean_sigma_bar.push_back(record_sigma ? diag.mean_sigma_bar : kNaN);
      trace.optimistic.push_back(diag.optimistic_value >= task.unit_scale * v_star - 1e-9 ? 1 : 0);
      trace.final_level_potentials = diag.level_potentials;
      trace.steps += traj.steps.size();
    }
  } catch (const std::exception& e) {
    trace.failed = true;
    trace.error = e.what();
  }
  return trace;
}

double ExperimentResult::mean_regret(const std::string& agent, std::size_t k) const {
  for (const auto& row : aggregate) {
    if (row.agent == agent && row.k == k) return row.mean;
  }
  throw std::out_of_range("no aggregate for agent '" + agent + "' at episode " + std::to_string(k));
}

std::vector<AggregateRow> aggregate_traces(const std::vector<RegretTrace>& traces) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RegretTrace*>> by_agent;
  for (const auto& t : traces) {
    if (!by_agent.count(t.agent)) order.push_back(t.agent);
    auto& runs = by_agent[t.agent];
    if (!t.failed) runs.push_back(&t);
  }

  std::vector<AggregateRow> rows;
  for (const auto& name : order) {
    const auto& runs = by_agent[name];
    if (runs.empty()) continue;
    std::size_t length = runs.front()->cum_regret.size();
    for (const auto* r : runs) length = std::min(length, r->cum_regret.size());
    const double n = static_cast<double>(runs.size());
    for (std::size_t k = 0; k < length; ++k) {
      double sum = 0.0;
      for (const auto* r : runs) sum += r->cum_regret[k];
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto* r : runs) ss += (r->cum_regret[k] - mean) * (r->cum_regret[k] - mean);
      const double sd = runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      rows.push_back({name, k + 1, runs.size(), mean, sd, sd / std::sqrt(n)});
    }
  }
  return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const EpisodicMdp mdp = config.env.build();

  struct Task {
    const AgentSpec* spec;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& spec : config.agents) {
    for (std::size_t i = 0; i < config.seeds; ++i) tasks.push_back({&spec, config.base_seed + i});
  }

  ExperimentResult result;
  result.traces.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
      const AgentSpec& spec = *tasks[i].spec;
      AgentFactory factory = [&spec](const TaskShape& task) {
        return make_agent(spec.kind, task, spec.config, spec.name);
      };
      result.traces[i] = run_single(mdp, spec.name, factory, config.episodes, tasks[i].seed, config.record_sigma,
                                    config.record_potential);
    }
  };

  std::size_t threads = config.threads;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, tasks.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  result.aggregate = aggregate_traces(result.traces);
  return result;
}

// ---------------------------------------------------------------------------

void write_csv(const ExperimentResult& result, std::ostream& out) {
  out << kRegretCsvHeader << '\n';
  for (const auto& t : result.traces) {
    if (t.failed) continue;
    for (std::size_t k = 0; k < t.cum_regret.size(); ++k) {
      out << t.agent << ',' << t.seed << ',' << (k + 1) << ',' << format_number(t.cum_regret[k]) << ','
          << format_number(t.avg_reward[k]) << ',' << format_number(t.realized_potential[k]) << ','
          << format_number(t.mean_sigma_bar[k]) << '\n';
    }
  }
}

void emit_csv(const ExperimentResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_csv(result, out);
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

void write_summary_csv(const ExperimentResult& result, std::ostream& out) {
  out << "agent,k,runs,mean_cum_regret,std_cum_regret,stderr_cum_regret\n";
  for (const auto& r : result.aggregate) {
    out << r.agent << ',' << r.k << ',' << r.runs << ',' << format_number(r.mean) << ',' << format_number(r.std)
        << ',' << format_number(r.stderr_) << '\n';
  }
}

void write_failures_csv(const ExperimentResult& result, std::ostream& out) {
  out << "agent,seed,error\n";
  for (const auto& t : result.traces) {
    if (!t.failed) continue;
    std::string msg = t.error;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << t.agent << ',' << t.seed << ',' << msg << '\n';
  }
}

namespace {

double parse_number(const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::runtime_error("bad number in CSV: '" + text + "'");
  }
  return v;
}

}  // namespace

std::vector<CsvRow> parse_regret_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kRegretCsvHeader) throw std::runtime_error("unexpected CSV header");
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 7) throw std::runtime_error("malformed CSV row: " + line);
    CsvRow r;
    r.agent = f[0];
    r.seed = std::stoull(f[1]);
    r.k = std::stoull(f[2]);
    r.cum_regret = parse_number(f[3]);
    r.avg_reward = parse_number(f[4]);
    r.realized_potential = parse_number(f[5]);
    r.mean_sigma_bar = parse_number(f[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CsvRow> read_regret_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return parse_regret_csv(in);
}

}  // namespace wvtr
