// collusionlab: command-line driver for baselines, platform training,
// robustness evaluation, policy heatmaps and the mu sweep.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "collusionlab/collusionlab.hpp"

namespace fs = std::filesystem;
using namespace collusionlab;

namespace {

void print_stat(const char* label, const std::vector<double>& xs) {
  std::printf("%-22s mean %.4f  95%% CI +/- %.4f  median %.4f  (n=%zu)\n", label, stats::mean(xs), stats::ci_halfwidth(xs),
              stats::median(xs), xs.size());
}

void run_nash(const ExperimentConfig& cfg, RunManifest& mf) {
  const NashReport r = nash_report(cfg.market, cfg.grid());
  std::printf("nash price            %.6f\n", r.nash_price);
  std::printf("monopoly price        %.6f\n", r.monopoly_price);
  std::printf("competitive grid      %.6f\n", r.competitive_price);
  std::printf("CS at grid reference  %.6f\n", r.cs_competitive);
  std::printf("CS at nash            %.6f\n", r.cs_nash);
  std::printf("CS at monopoly        %.6f\n", r.cs_monopoly);
  auto out = open_csv(fs::path(cfg.out) / "nash.csv");
  out << "nash_price,monopoly_price,competitive_price,cs_competitive,cs_nash,cs_monopoly\n"
      << cfgtext::fmt(r.nash_price) << ',' << cfgtext::fmt(r.monopoly_price) << ',' << cfgtext::fmt(r.competitive_price)
      << ',' << cfgtext::fmt(r.cs_competitive) << ',' << cfgtext::fmt(r.cs_nash) << ',' << cfgtext::fmt(r.cs_monopoly)
      << '\n';
  mf.outputs.push_back("nash.csv");
}

void run_baseline_cmd(const ExperimentConfig& cfg, RunManifest& mf) {
  const auto rep = cmd_baseline(cfg, RuleKind::parse(cfg.rule));
  const MarketModel model(cfg.market, cfg.grid());
  const std::string name = "baseline.csv";
  write_baseline_csv(rep, model, fs::path(cfg.out) / name);
  mf.outputs.push_back(name);
  for (const auto& r : rep.rows)
    std::printf("seed %-4llu %s steps %-9llu CS %.4f  price %.4f  shown %.2f\n", static_cast<unsigned long long>(r.seed),
                r.result.converged ? "converged" : "CAPPED   ", static_cast<unsigned long long>(r.result.steps),
                r.result.mean_cs, r.result.mean_price, r.result.mean_displayed);
  std::printf("rule %s: mean CS %.4f +/- %.4f over %zu converged seeds (%zu capped, %zu supra-competitive)\n",
              rep.rule.c_str(), rep.mean_cs, rep.ci95, rep.rows.size() - rep.flagged, rep.flagged, rep.supra_competitive);
}

void run_train_cmd(const ExperimentConfig& cfg, RunManifest& mf) {
  for (const auto& w : cfg.train.episode.warnings()) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const auto rep = cmd_train(cfg, fs::path(cfg.out), &mf);
  for (const auto& r : rep.runs)
    std::printf("seed %-4llu final eval CS %.4f  final train CS %.4f\n", static_cast<unsigned long long>(r.seed),
                r.final_eval_cs, r.final_train_cs);
  std::printf("run %s\n", rep.run_id.c_str());
  print_stat("final eval CS", rep.final_evals());
  print_stat("final train CS", rep.final_trains());
}

void run_robustness_cmd(const ExperimentConfig& cfg, const std::vector<std::string>& ckpts, RunManifest& mf) {
  const auto rows = cmd_robustness(cfg, ckpts);
  write_robustness_csv(rows, fs::path(cfg.out) / "robustness.csv");
  mf.outputs.push_back("robustness.csv");
  for (double c : cfg.robustness_costs) {
    std::vector<double> xs;
    double ceiling = 0.0;
    for (const auto& r : rows)
      if (r.cost == c) {
        xs.push_back(r.mean_cs);
        ceiling = r.ceiling;
      }
    const std::string label = "cost " + cfgtext::fmt(c);
    print_stat(label.c_str(), xs);
    std::printf("%-22s competitive ceiling %.4f\n", "", ceiling);
  }
}

void run_heatmap_cmd(const ExperimentConfig& cfg, const std::vector<std::string>& ckpts, RunManifest& mf) {
  if (ckpts.empty()) throw ConfigError("heatmap: no checkpoints given");
  std::vector<LeaderPolicy> policies;
  for (const auto& c : ckpts) policies.push_back(LeaderPolicy::load(c));
  const MarketModel model(cfg.market, cfg.grid());
  const auto h = policy_heatmap(policies, model);
  write_heatmap_csv(h, cfg.grid(), fs::path(cfg.out) / "heatmap.csv");
  mf.outputs.push_back("heatmap.csv");
  for (const auto& row : h) {
    for (double v : row) std::printf(" %5.2f", v);
    std::printf("\n");
  }
  std::printf("cells with >= 1 seller displayed: %d\n", open_cells(h));
}

void run_sweep_cmd(const ExperimentConfig& cfg, const std::vector<std::string>& args, RunManifest& mf) {
  // args: rules..., optionally the literal "train".
  std::vector<std::string> rules;
  bool train = false;
  for (const auto& a : args) {
    if (a == "train") train = true;
    else rules.push_back(a);
  }
  const auto rows = cmd_sweep_mu(cfg, rules, train);
  write_sweep_csv(rows, fs::path(cfg.out) / "sweep_mu.csv");
  mf.outputs.push_back("sweep_mu.csv");
  for (const auto& r : rows)
    std::printf("mu %-5s %-32s CS %.4f +/- %.4f (n=%zu)\n", cfgtext::fmt(r.mu).c_str(), r.kind.c_str(), r.mean_cs, r.ci95, r.n);
}

// Executes `command` and writes its manifest. Shared by direct invocation
// and by `rerun`.
void execute(const std::string& command, const ExperimentConfig& cfg, const std::vector<std::string>& args) {
  cfg.validate();
  RunManifest mf = begin_manifest(command, cfg, args);
  if (command == "nash") run_nash(cfg, mf);
  else if (command == "baseline") run_baseline_cmd(cfg, mf);
  else if (command == "train") run_train_cmd(cfg, mf);
  else if (command == "robustness") run_robustness_cmd(cfg, args, mf);
  else if (command == "heatmap") run_heatmap_cmd(cfg, args, mf);
  else if (command == "sweep-mu") run_sweep_cmd(cfg, args, mf);
  else throw ConfigError("unknown command '" + command + "'");
  mf.finished = utc_now();
  mf.write(cfg.out);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Q-learning seller collusion and Stackelberg platform design"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seeds, seed_base;
  app.add_option("--config", config_file, "config file ([section] key = value)")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override, section.key=value (repeatable)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seeds", seeds, "number of seeds");
  app.add_option("--seed-base", seed_base, "first seed");

  auto* nash = app.add_subcommand("nash", "print nash and monopoly prices and CS references");
  auto* dump = app.add_subcommand("config", "print the effective configuration");

  auto* baseline = app.add_subcommand("baseline", "Q-learning sellers under a fixed rule");
  std::string rule;
  baseline->add_option("rule", rule, "none | pdp | dpdp | fixed:<tau>")->required();

  auto* train = app.add_subcommand("train", "train a platform policy");
  std::string policy, mode = "wild", protocol = "stackelberg";
  std::optional<std::string> reward, restart, action_cache;
  std::optional<double> random_price_prob;
  std::optional<std::uint64_t> total_steps, n_e, n_r;
  train->add_option("policy", policy, "rl-nostate | rl-state")->required()->check(CLI::IsMember({"rl-nostate", "rl-state"}));
  train->add_option("mode", mode, "wild | offline")->check(CLI::IsMember({"wild", "offline"}));
  train->add_option("protocol", protocol, "stackelberg | decentralized")
      ->check(CLI::IsMember({"stackelberg", "decentralized"}));
  train->add_option("--reward", reward, "cs | proxy");
  train->add_option("--random-price-prob", random_price_prob, "reward-phase perturbation probability");
  train->add_option("--restart", restart, "sync | async");
  train->add_option("--action-cache", action_cache, "on | off");
  train->add_option("--total-steps", total_steps, "environment steps per seed");
  train->add_option("--n-e", n_e, "equilibrium steps per episode");
  train->add_option("--n-r", n_r, "reward steps per episode");

  auto* robust = app.add_subcommand("robustness", "evaluate checkpoints at shifted seller costs");
  std::vector<std::string> checkpoints;
  std::optional<std::string> costs;
  std::optional<std::uint64_t> episodes;
  robust->add_option("checkpoints", checkpoints, "policy checkpoints")->required()->check(CLI::ExistingFile);
  robust->add_option("--costs", costs, "comma-separated costs");
  robust->add_option("--episodes", episodes, "evaluation episodes per checkpoint and cost");

  auto* heat = app.add_subcommand("heatmap", "mean displayed sellers per price profile");
  std::vector<std::string> heat_ckpts;
  heat->add_option("checkpoints", heat_ckpts, "policy checkpoints")->required()->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep-mu", "references, baselines and training across mu");
  std::optional<std::string> mu_values, sweep_rules, sweep_train;
  sweep->add_option("--values", mu_values, "comma-separated mu values");
  sweep->add_option("--rules", sweep_rules, "comma-separated fixed rules to rerun per mu");
  sweep->add_option("--train", sweep_train, "also train this policy per mu (rl-nostate | rl-state)")
      ->check(CLI::IsMember({"rl-nostate", "rl-state"}));

  auto* rerun = app.add_subcommand("rerun", "re-execute a run from its manifest");
  std::string manifest_path;
  rerun->add_option("manifest", manifest_path, "manifest.json")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*rerun) {
      const RunManifest mf = RunManifest::load(manifest_path);
      ExperimentConfig cfg;
      cfg.apply_text(mf.config, manifest_path);
      if (cfg.hash() != mf.config_hash) throw ConfigError("manifest config does not match its hash");
      if (out_dir) cfg.out = *out_dir;
      execute(mf.command, cfg, mf.args);
      return 0;
    }

    ExperimentConfig cfg;
    if (!config_file.empty()) cfg.apply_file(config_file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (out_dir) cfg.out = *out_dir;
    if (seeds) cfg.set("run.seeds", std::to_string(*seeds));
    if (seed_base) cfg.seed_base = *seed_base;

    std::vector<std::string> args;
    std::string command;
    if (*nash) command = "nash";
    if (*dump) {
      cfg.validate();
      std::cout << cfg.dump();
      return 0;
    }
    if (*baseline) {
      command = "baseline";
      cfg.set("run.rule", rule);
    }
    if (*train) {
      command = "train";
      cfg.set("train.observation", policy == "rl-nostate" ? "nostate" : "state");
      cfg.set("episode.mode", mode);
      cfg.set("train.protocol", protocol);
      if (reward) cfg.set("episode.reward", *reward);
      if (random_price_prob) cfg.set("episode.random_price_prob", cfgtext::fmt(*random_price_prob));
      if (restart) cfg.set("episode.restart", *restart);
      if (action_cache) cfg.set("episode.action_cache", *action_cache);
      if (total_steps) cfg.set("train.total_steps", std::to_string(*total_steps));
      if (n_e) cfg.set("episode.n_e", std::to_string(*n_e));
      if (n_r) cfg.set("episode.n_r", std::to_string(*n_r));
    }
    if (*robust) {
      command = "robustness";
      if (costs) cfg.set("robustness.costs", *costs);
      if (episodes) cfg.set("robustness.episodes", std::to_string(*episodes));
      for (const auto& c : checkpoints) args.push_back(fs::absolute(c).string());
    }
    if (*heat) {
      command = "heatmap";
      for (const auto& c : heat_ckpts) args.push_back(fs::absolute(c).string());
    }
    if (*sweep) {
      command = "sweep-mu";
      if (mu_values) cfg.set("sweep.mu_values", *mu_values);
      if (sweep_rules)
        for (const auto& r : split_list(*sweep_rules)) args.push_back(RuleKind::parse(r).str());
      if (sweep_train) {
        cfg.set("train.observation", *sweep_train == "rl-nostate" ? "nostate" : "state");
        args.push_back("train");
      }
    }
    execute(command, cfg, args);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
