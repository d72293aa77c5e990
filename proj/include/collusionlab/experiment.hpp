#pragma once

// Experiment orchestration behind the command-line tool: per-seed jobs on a
// bounded worker pool, CSV exports and run manifests.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "collusionlab/a2c.hpp"
#include "collusionlab/baseline.hpp"
#include "collusionlab/config.hpp"
#include "collusionlab/market.hpp"
#include "collusionlab/simulation.hpp"
#include "collusionlab/stats.hpp"

#ifndef COLLUSIONLAB_VERSION
#define COLLUSIONLAB_VERSION "0.1.0"
#endif

namespace collusionlab {

// CSV schema versions, recorded in every manifest.
inline constexpr int kMetricsSchema = 1;
inline constexpr int kHeatmapSchema = 1;
inline constexpr int kBaselineSchema = 1;
inline constexpr int kRobustnessSchema = 1;
inline constexpr int kSweepSchema = 1;

inline const char* kMetricsHeader =
    "run_id,seed,episode,env_steps,mean_reward_phase_cs,eval_cs,entropy,actor_loss,critic_loss,greedy_prices,"
    "displayed_count_mean";

// ---- worker pool ------------------------------------------------------------

// COLLUSIONLAB_THREADS if set and positive, else the hardware concurrency.
inline unsigned worker_limit() {
  if (const char* env = std::getenv("COLLUSIONLAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(0..n-1) on at most worker_limit() threads. Results must be written
// by index; the first exception (lowest index) is rethrown.
template <class F>
void parallel_for(std::size_t n, F&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, worker_limit());
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- references -------------------------------------------------------------

// Lowest grid price at or above seller 0's cost.
inline Money competitive_grid_price(const MarketParams& params, const PriceGrid& grid) {
  for (int k = 0; k < grid.size(); ++k)
    if (grid[k] >= params.cost[0]) return grid[k];
  return grid.max();
}

// U with every seller at the competitive grid price and all displayed.
inline double competitive_reference(const MarketParams& params, const PriceGrid& grid) {
  const PriceProfile p{std::vector<Money>(static_cast<std::size_t>(params.n), competitive_grid_price(params, grid))};
  return consumer_surplus(p, DisplaySet::all(params.n), params);
}

struct NashReport {
  double nash_price = 0.0;
  double monopoly_price = 0.0;
  double competitive_price = 0.0;
  double cs_competitive = 0.0;  // grid reference
  double cs_nash = 0.0;
  double cs_monopoly = 0.0;
};

inline NashReport nash_report(const MarketParams& params, const PriceGrid& grid) {
  NashReport r;
  r.nash_price = solve_nash_price(params);
  r.monopoly_price = solve_monopoly_price(params);
  r.competitive_price = competitive_grid_price(params, grid);
  r.cs_competitive = competitive_reference(params, grid);
  const auto all = DisplaySet::all(params.n);
  const auto n = static_cast<std::size_t>(params.n);
  r.cs_nash = consumer_surplus(PriceProfile{std::vector<Money>(n, r.nash_price)}, all, params);
  r.cs_monopoly = consumer_surplus(PriceProfile{std::vector<Money>(n, r.monopoly_price)}, all, params);
  return r;
}

// ---- formatting -------------------------------------------------------------

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string price_label(const MarketModel& model, StateIndex profile) {
  const PriceProfile p = model.prices(profile);
  std::string s;
  for (int i = 0; i < p.size(); ++i) s += (i ? ";" : "") + cfgtext::fmt(p[i]);
  return s;
}

inline std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

// ---- manifests --------------------------------------------------------------

struct RunManifest {
  std::string command;
  std::vector<std::string> args;  // positional inputs not captured by the config
  std::string config;             // canonical dump
  std::uint64_t config_hash = 0;
  std::string code_version = COLLUSIONLAB_VERSION;
  std::vector<std::uint64_t> seeds;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;  // relative to the output directory

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "collusionlab-manifest";
    j["version"] = 1;
    j["command"] = command;
    j["args"] = args;
    j["config_hash"] = hex64(config_hash);
    j["config"] = config;
    j["code_version"] = code_version;
    j["seeds"] = seeds;
    j["started"] = started;
    j["finished"] = finished;
    j["outputs"] = outputs;
    j["csv_schema"] = {{"metrics", kMetricsSchema},   {"heatmap", kHeatmapSchema}, {"baseline", kBaselineSchema},
                       {"robustness", kRobustnessSchema}, {"sweep_mu", kSweepSchema}};
    return j;
  }

  static RunManifest from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "collusionlab-manifest" || j.value("version", 0) != 1)
      throw ConfigError("not a version-1 run manifest");
    RunManifest m;
    m.command = j.at("command");
    m.args = j.at("args").get<std::vector<std::string>>();
    m.config = j.at("config");
    m.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    m.code_version = j.value("code_version", "");
    m.seeds = j.value("seeds", std::vector<std::uint64_t>{});
    m.started = j.value("started", "");
    m.finished = j.value("finished", "");
    m.outputs = j.value("outputs", std::vector<std::string>{});
    return m;
  }

  static RunManifest load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read manifest " + path.string());
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("manifest " + path.string() + ": " + e.what());
    }
  }

  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "manifest.json");
    if (!out) throw ConfigError("cannot write manifest in " + dir.string());
    out << to_json().dump(2) << '\n';
  }
};

inline RunManifest begin_manifest(const std::string& command, const ExperimentConfig& cfg,
                                  std::vector<std::string> args = {}) {
  RunManifest m;
  m.command = command;
  m.args = std::move(args);
  m.config = cfg.dump();
  m.config_hash = cfg.hash();
  m.seeds = cfg.seed_list();
  m.started = utc_now();
  return m;
}

// ---- baselines --------------------------------------------------------------

struct BaselineRow {
  std::uint64_t seed = 0;
  BaselineResult result;
};

struct BaselineReport {
  std::string rule;
  std::vector<BaselineRow> rows;  // seed order
  double mean_cs = 0.0;           // converged seeds only
  double ci95 = 0.0;
  std::size_t flagged = 0;        // seeds that hit the cap
  std::size_t supra_competitive = 0;  // converged seeds with mean price above the competitive grid price

  std::vector<double> converged_cs() const {
    std::vector<double> v;
    for (const auto& r : rows)
      if (r.result.converged) v.push_back(r.result.mean_cs);
    return v;
  }
};

inline BaselineReport cmd_baseline(const ExperimentConfig& cfg, const RuleKind& rule) {
  if (rule.learned()) throw ConfigError("baseline expects a fixed rule, got " + rule.str());
  const MarketModel model(cfg.market, cfg.grid());
  const auto seeds = cfg.seed_list();
  BaselineReport rep;
  rep.rule = rule.str();
  rep.rows.resize(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t k) {
    rep.rows[k] = {seeds[k], run_baseline(rule, model, cfg.sellers, seeds[k], cfg.baseline)};
  });
  const Money competitive = competitive_grid_price(cfg.market, cfg.grid());
  for (const auto& r : rep.rows) {
    if (!r.result.converged) {
      ++rep.flagged;
      continue;
    }
    if (r.result.mean_price > competitive + 1e-9) ++rep.supra_competitive;
  }
  const auto cs = rep.converged_cs();
  rep.mean_cs = stats::mean(cs);
  rep.ci95 = stats::ci_halfwidth(cs);
  return rep;
}

inline void write_baseline_csv(const BaselineReport& rep, const MarketModel& model, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "rule,seed,converged,steps,mean_cs,mean_price,mean_displayed,final_prices\n";
  for (const auto& r : rep.rows)
    out << rep.rule << ',' << r.seed << ',' << (r.result.converged ? 1 : 0) << ',' << r.result.steps << ','
        << cfgtext::fmt(r.result.mean_cs) << ',' << cfgtext::fmt(r.result.mean_price) << ','
        << cfgtext::fmt(r.result.mean_displayed) << ',' << price_label(model, r.result.final_profile) << '\n';
}

// ---- training ---------------------------------------------------------------

// Mean of the last `k` evaluations.
inline double final_eval_cs(const std::vector<EvalRecord>& evals, std::size_t k = 5) {
  if (evals.empty()) return 0.0;
  const std::size_t from = evals.size() > k ? evals.size() - k : 0;
  double s = 0.0;
  for (std::size_t i = from; i < evals.size(); ++i) s += evals[i].mean_cs;
  return s / static_cast<double>(evals.size() - from);
}

// Mean training reward-phase CS over the last `fraction` of rows.
inline double final_train_cs(const std::vector<MetricsRow>& rows, double fraction = 0.1) {
  if (rows.empty()) return 0.0;
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(rows.size())));
  double s = 0.0;
  for (std::size_t i = rows.size() - k; i < rows.size(); ++i) s += rows[i].mean_reward_phase_cs;
  return s / static_cast<double>(k);
}

inline std::string policy_label(const ExperimentConfig& cfg) {
  return std::string(cfg.train.observation == ObservationMode::NoState ? "rl-nostate" : "rl-state") + "-" +
         (cfg.train.episode.mode == TrainingMode::Wild ? "wild" : "offline") + "-" +
         (cfg.decentralized ? "decentralized" : "stackelberg");
}

inline std::string run_id(const std::string& command, const ExperimentConfig& cfg) {
  std::string id = command;
  if (command == "train") id += "-" + policy_label(cfg);
  return id + "-" + hex64(cfg.hash()).substr(0, 8);
}

inline void write_metrics_rows(std::ostream& out, const std::string& id, std::uint64_t seed,
                               const std::vector<MetricsRow>& rows, const MarketModel& model) {
  for (const auto& r : rows) {
    out << id << ',' << seed << ',' << r.episode << ',' << r.env_steps << ',' << cfgtext::fmt(r.mean_reward_phase_cs) << ',';
    if (r.eval_cs) out << cfgtext::fmt(*r.eval_cs);
    out << ',' << cfgtext::fmt(r.entropy) << ',' << cfgtext::fmt(r.actor_loss) << ',' << cfgtext::fmt(r.critic_loss) << ','
        << price_label(model, r.greedy_profile) << ',' << cfgtext::fmt(r.displayed_count_mean) << '\n';
  }
}

struct SeedRun {
  std::uint64_t seed = 0;
  TrainResult result;
  double final_eval_cs = 0.0;
  double final_train_cs = 0.0;
};

struct TrainReport {
  std::string run_id;
  std::vector<SeedRun> runs;  // seed order

  std::vector<double> final_evals() const {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.final_eval_cs);
    return v;
  }
  std::vector<double> final_trains() const {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.final_train_cs);
    return v;
  }
};

inline std::filesystem::path seed_dir(const std::filesystem::path& out, std::uint64_t seed) {
  return out / ("seed_" + std::to_string(seed));
}

// Trains every seed. With an output directory, writes per-seed metrics and
// checkpoints, the combined metrics.csv and summary.csv.
inline TrainReport cmd_train(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir = {},
                             RunManifest* manifest = nullptr) {
  cfg.validate();
  const MarketModel model(cfg.market, cfg.grid());
  const auto seeds = cfg.seed_list();
  TrainReport rep;
  rep.run_id = run_id("train", cfg);
  rep.runs.resize(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t k) {
    TrainConfig tc = cfg.train;
    tc.seed = seeds[k];
    Trainer trainer(model, cfg.sellers, tc);
    if (out_dir) {
      trainer.set_checkpoint_dir(seed_dir(*out_dir, seeds[k]));
      trainer.set_checkpoint_meta({{"config_hash", hex64(cfg.hash())}, {"run_id", rep.run_id}});
    }
    SeedRun run;
    run.seed = seeds[k];
    run.result = cfg.decentralized ? trainer.train_decentralized() : trainer.train();
    run.final_eval_cs = final_eval_cs(run.result.evals);
    run.final_train_cs = final_train_cs(run.result.rows);
    if (out_dir) {
      auto f = open_csv(seed_dir(*out_dir, seeds[k]) / "metrics.csv");
      f << kMetricsHeader << '\n';
      write_metrics_rows(f, rep.run_id, seeds[k], run.result.rows, model);
    }
    rep.runs[k] = std::move(run);
  });
  if (out_dir) {
    auto all = open_csv(*out_dir / "metrics.csv");
    all << kMetricsHeader << '\n';
    for (const auto& r : rep.runs) write_metrics_rows(all, rep.run_id, r.seed, r.result.rows, model);
    auto sum = open_csv(*out_dir / "summary.csv");
    sum << "run_id,seed,final_eval_cs,final_train_cs,final_prices,final_displayed_mean,checkpoint\n";
    for (const auto& r : rep.runs) {
      const auto& ev = r.result.evals;
      sum << rep.run_id << ',' << r.seed << ',' << cfgtext::fmt(r.final_eval_cs) << ',' << cfgtext::fmt(r.final_train_cs)
          << ',' << (ev.empty() ? std::string() : price_label(model, ev.back().final_profile)) << ','
          << (ev.empty() ? std::string() : cfgtext::fmt(ev.back().displayed_mean)) << ','
          << (r.result.checkpoints.empty()
                  ? std::string()
                  : std::filesystem::relative(r.result.checkpoints.back(), *out_dir).generic_string())
          << '\n';
    }
    if (manifest) {
      manifest->outputs.push_back("metrics.csv");
      manifest->outputs.push_back("summary.csv");
      for (const auto& r : rep.runs) {
        manifest->outputs.push_back(std::filesystem::relative(seed_dir(*out_dir, r.seed) / "metrics.csv", *out_dir).generic_string());
        for (const auto& c : r.result.checkpoints)
          manifest->outputs.push_back(std::filesystem::relative(c, *out_dir).generic_string());
      }
    }
  }
  return rep;
}

// ---- robustness -------------------------------------------------------------

struct RobustnessRow {
  std::string checkpoint;
  double cost = 0.0;
  double mean_cs = 0.0;
  double ceiling = 0.0;  // competitive grid reference at this cost
};

inline std::uint64_t robustness_seed(std::uint64_t episode) { return 1000 + episode; }

// Mean reward-phase CS of a frozen policy facing fresh sellers at `cost`,
// averaged over `episodes` evaluation episodes.
inline double evaluate_at_cost(const LeaderPolicy& policy, const ExperimentConfig& cfg, double cost, std::uint64_t episodes) {
  const MarketModel model(cfg.market.with_cost(cost), cfg.grid());
  double s = 0.0;
  for (std::uint64_t e = 0; e < episodes; ++e)
    s += evaluate(policy, model, cfg.sellers, cfg.train.episode, robustness_seed(e)).mean_cs;
  return s / static_cast<double>(episodes);
}

inline std::vector<RobustnessRow> cmd_robustness(const ExperimentConfig& cfg, const std::vector<std::string>& checkpoints) {
  if (checkpoints.empty()) throw ConfigError("robustness: no checkpoints given");
  std::vector<LeaderPolicy> policies;
  for (const auto& c : checkpoints) policies.push_back(LeaderPolicy::load(c));
  const auto& costs = cfg.robustness_costs;
  std::vector<RobustnessRow> rows(checkpoints.size() * costs.size());
  parallel_for(rows.size(), [&](std::size_t k) {
    const std::size_t i = k / costs.size();
    const double c = costs[k % costs.size()];
    rows[k] = {checkpoints[i], c, evaluate_at_cost(policies[i], cfg, c, cfg.robustness_episodes),
               competitive_reference(cfg.market.with_cost(c), cfg.grid())};
  });
  return rows;
}

inline void write_robustness_csv(const std::vector<RobustnessRow>& rows, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "checkpoint,cost,mean_cs,competitive_ceiling\n";
  for (const auto& r : rows)
    out << r.checkpoint << ',' << cfgtext::fmt(r.cost) << ',' << cfgtext::fmt(r.mean_cs) << ',' << cfgtext::fmt(r.ceiling)
        << '\n';
}

// ---- heatmap ----------------------------------------------------------------

// m x m matrix, row = seller 1 price index, column = seller 2 price index:
// greedy displayed count averaged over policies.
inline std::vector<std::vector<double>> policy_heatmap(const std::vector<LeaderPolicy>& policies, const MarketModel& model) {
  if (model.sellers() != 2) throw ConfigError("heatmap: two sellers only");
  const int m = model.prices_per_seller();
  std::vector<std::vector<double>> h(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(m), 0.0));
  for (const auto& p : policies) {
    const auto counts = displayed_counts(p, model);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) h[a][b] += counts[encode_profile(std::array<int, 2>{a, b}, m)] / static_cast<double>(policies.size());
  }
  return h;
}

inline void write_heatmap_csv(const std::vector<std::vector<double>>& h, const PriceGrid& grid, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "p1\\p2";
  for (int b = 0; b < grid.size(); ++b) out << ',' << cfgtext::fmt(grid[b]);
  out << '\n';
  for (int a = 0; a < grid.size(); ++a) {
    out << cfgtext::fmt(grid[a]);
    for (int b = 0; b < grid.size(); ++b) out << ',' << cfgtext::fmt(h[a][b]);
    out << '\n';
  }
}

// Cells where at least one seller is displayed on average.
inline int open_cells(const std::vector<std::vector<double>>& h) {
  int n = 0;
  for (const auto& row : h)
    for (double v : row) n += v >= 1.0;
  return n;
}

// ---- mu sweep ---------------------------------------------------------------

struct SweepRow {
  double mu = 0.0;
  std::string kind;  // "reference" or a rule / policy label
  double mean_cs = 0.0;
  double ci95 = 0.0;
  std::size_t n = 0;
  double nash_price = 0.0;
  double monopoly_price = 0.0;
};

// Reference rows for every mu, plus baselines for each listed rule and, if
// `train` is set, training under the config's policy settings.
inline std::vector<SweepRow> cmd_sweep_mu(const ExperimentConfig& cfg, const std::vector<std::string>& rules, bool train) {
  std::vector<SweepRow> rows;
  for (double mu : cfg.mu_values) {
    ExperimentConfig c = cfg;
    c.market.mu = mu;
    const NashReport nr = nash_report(c.market, c.grid());
    rows.push_back({mu, "reference", nr.cs_competitive, 0.0, 1, nr.nash_price, nr.monopoly_price});
    for (const auto& r : rules) {
      const auto rep = cmd_baseline(c, RuleKind::parse(r));
      const auto cs = rep.converged_cs();
      rows.push_back({mu, rep.rule, rep.mean_cs, rep.ci95, cs.size(), nr.nash_price, nr.monopoly_price});
    }
    if (train) {
      const auto rep = cmd_train(c);
      const auto v = rep.final_evals();
      rows.push_back({mu, policy_label(c), stats::mean(v), stats::ci_halfwidth(v), v.size(), nr.nash_price, nr.monopoly_price});
    }
  }
  return rows;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "mu,kind,mean_cs,ci95,n,nash_price,monopoly_price\n";
  for (const auto& r : rows)
    out << cfgtext::fmt(r.mu) << ',' << r.kind << ',' << cfgtext::fmt(r.mean_cs) << ',' << cfgtext::fmt(r.ci95) << ','
        << r.n << ',' << cfgtext::fmt(r.nash_price) << ',' << cfgtext::fmt(r.monopoly_price) << '\n';
}

}  // namespace collusionlab
