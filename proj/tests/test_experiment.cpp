#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "collusionlab/collusionlab.hpp"

using namespace collusionlab;
namespace fs = std::filesystem;

namespace {

// Independent logit inclusive value with every seller at price p, all shown.
double cs_oracle(double p, double mu, int n = 2, double a = 2.0, double a0 = 0.0) {
  double s = std::exp(a0 / mu);
  for (int i = 0; i < n; ++i) s += std::exp((a - p) / mu);
  return mu * std::log(s);
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("collusionlab_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + COLLUSIONLAB_CLI + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

// ---- config -----------------------------------------------------------------

TEST(Config, DefaultsMatchReferenceConstants) {
  const ExperimentConfig c;
  EXPECT_EQ(c.market.n, 2);
  EXPECT_DOUBLE_EQ(c.market.mu, 0.25);
  EXPECT_DOUBLE_EQ(c.market.cost[0], 1.0);
  EXPECT_DOUBLE_EQ(c.market.quality[0], 2.0);
  EXPECT_DOUBLE_EQ(c.market.outside_quality, 0.0);
  EXPECT_EQ(c.grid().size(), 5);
  EXPECT_DOUBLE_EQ(c.grid()[1], 1.2375);
  EXPECT_DOUBLE_EQ(c.sellers.alpha, 0.15);
  EXPECT_DOUBLE_EQ(c.sellers.delta, 0.95);
  EXPECT_DOUBLE_EQ(c.sellers.beta, 1e-5);
  EXPECT_EQ(c.train.episode.n_e, 50000u);
  EXPECT_EQ(c.train.episode.n_r, 30u);
  EXPECT_EQ(c.train.total_steps, 50'000'000u);
  EXPECT_EQ(c.baseline.window, 100'000u);
  EXPECT_EQ(c.seeds, 10u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, DumpParseRoundTrip) {
  ExperimentConfig a;
  a.set("market.mu", "0.4");
  a.set("episode.restart", "async");
  a.set("train.observation", "nostate");
  a.set("run.rule", "fixed:1.38125");
  a.set("robustness.costs", "1.0, 1.5");
  ExperimentConfig b;
  b.apply_text(a.dump());
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_DOUBLE_EQ(b.market.mu, 0.4);
  EXPECT_EQ(b.rule, "fixed:1.38125");
  ASSERT_EQ(b.robustness_costs.size(), 2u);
  EXPECT_DOUBLE_EQ(b.robustness_costs[1], 1.5);
}

TEST(Config, HashIgnoresOutputDirOnly) {
  ExperimentConfig a, b;
  b.out = "/elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.set("sellers.alpha", "0.2");
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Config, UnknownKeyAndBadValues) {
  ExperimentConfig c;
  EXPECT_THROW(c.set("market.nope", "1"), ConfigError);
  EXPECT_THROW(c.apply_text("[market]\nbogus = 3\n"), ConfigError);
  EXPECT_THROW(c.set("market.mu", "abc"), ConfigError);
  ExperimentConfig bad;
  bad.set("market.mu", "-1");
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Config, IntegerForms) {
  ExperimentConfig c;
  c.set("train.total_steps", "50_000_000");
  EXPECT_EQ(c.train.total_steps, 50'000'000u);
  c.set("train.total_steps", "5e7");
  EXPECT_EQ(c.train.total_steps, 50'000'000u);
  c.set("train.total_steps", "1000");
  EXPECT_EQ(c.train.total_steps, 1000u);
}

TEST(Config, SeedList) {
  ExperimentConfig c;
  c.set("run.seeds", "3");
  c.set("run.seed_base", "7");
  EXPECT_EQ(c.seed_list(), (std::vector<std::uint64_t>{7, 8, 9}));
}

// ---- references ---------------------------------------------------------------

TEST(References, CompetitiveAnchorsAcrossMu) {
  for (double mu : {0.05, 0.25, 0.40}) {
    ExperimentConfig c;
    c.market.mu = mu;
    EXPECT_NEAR(competitive_reference(c.market, c.grid()), cs_oracle(1.2375, mu), 1e-12);
  }
  ExperimentConfig c;
  c.market.mu = 0.05;
  EXPECT_NEAR(competitive_reference(c.market, c.grid()), 0.797, 1e-3);
  c.market.mu = 0.25;
  EXPECT_NEAR(competitive_reference(c.market, c.grid()), 0.9416, 1e-4);
  c.market.mu = 0.40;
  EXPECT_NEAR(competitive_reference(c.market, c.grid()), 1.068, 1e-3);
}

TEST(References, SweepRowsKeepGridFixed) {
  ExperimentConfig c;
  const auto rows = cmd_sweep_mu(c, {}, false);
  ASSERT_EQ(rows.size(), 3u);
  const double want[] = {0.797, 0.9416, 1.068};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k].kind, "reference");
    EXPECT_NEAR(rows[k].mean_cs, want[k], 1e-3);
    EXPECT_GT(rows[k].monopoly_price, rows[k].nash_price);
  }
  // The grid does not move with mu.
  EXPECT_DOUBLE_EQ(c.grid().min(), 0.95);
  EXPECT_DOUBLE_EQ(c.grid().max(), 2.1);
  const auto path = scratch("sweep") / "sweep_mu.csv";
  write_sweep_csv(rows, path);
  EXPECT_EQ(slurp(path).substr(0, slurp(path).find('\n')), "mu,kind,mean_cs,ci95,n,nash_price,monopoly_price");
}

TEST(References, NashReport) {
  const ExperimentConfig c;
  const auto r = nash_report(c.market, c.grid());
  EXPECT_NEAR(r.nash_price, 1.4728, 1e-3);
  EXPECT_NEAR(r.cs_competitive, 0.9416, 1e-4);
  EXPECT_NEAR(r.cs_nash, cs_oracle(r.nash_price, 0.25), 1e-9);
  EXPECT_NEAR(r.cs_monopoly, cs_oracle(r.monopoly_price, 0.25), 1e-9);
  EXPECT_DOUBLE_EQ(r.competitive_price, 1.2375);
}

TEST(References, RobustnessCeilings) {
  const ExperimentConfig c;
  // Shifted costs stay strictly between grid points.
  for (double cost : {1.38, 1.67}) {
    const Money p = competitive_grid_price(c.market.with_cost(cost), c.grid());
    EXPECT_GT(p, cost);
    EXPECT_LT(p - cost, 0.2875);
  }
  EXPECT_DOUBLE_EQ(competitive_grid_price(c.market.with_cost(1.38), c.grid()), 1.525);
  EXPECT_DOUBLE_EQ(competitive_grid_price(c.market.with_cost(1.67), c.grid()), 1.8125);
  EXPECT_NEAR(competitive_reference(c.market.with_cost(1.38), c.grid()), 0.666, 1e-3);
  EXPECT_NEAR(competitive_reference(c.market.with_cost(1.67), c.grid()), 0.414, 1e-3);
  EXPECT_NEAR(competitive_reference(c.market.with_cost(1.38), c.grid()), cs_oracle(1.525, 0.25), 1e-12);
}

// ---- summaries ------------------------------------------------------------------

TEST(Summary, FinalEvalIsMeanOfLastFive) {
  std::vector<EvalRecord> ev;
  for (double v : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}) ev.push_back({0, v, 0, 0.0, {}});
  EXPECT_NEAR(final_eval_cs(ev), (0.3 + 0.4 + 0.5 + 0.6 + 0.7) / 5.0, 1e-15);
  ev.resize(2);
  EXPECT_NEAR(final_eval_cs(ev), 0.15, 1e-15);
  EXPECT_EQ(final_eval_cs({}), 0.0);
}

TEST(Summary, FinalTrainIsMeanOfLastTenth) {
  std::vector<MetricsRow> rows(20);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].mean_reward_phase_cs = static_cast<double>(i);
  EXPECT_NEAR(final_train_cs(rows), (18.0 + 19.0) / 2.0, 1e-15);
  rows.resize(3);
  EXPECT_NEAR(final_train_cs(rows), 2.0, 1e-15);
}

TEST(Summary, ManifestJsonRoundTrip) {
  ExperimentConfig c;
  c.set("run.seeds", "2");
  RunManifest m = begin_manifest("baseline", c, {"a", "b"});
  m.outputs = {"baseline.csv"};
  m.finished = utc_now();
  const auto back = RunManifest::from_json(m.to_json());
  EXPECT_EQ(back.command, "baseline");
  EXPECT_EQ(back.args, m.args);
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.config_hash, c.hash());
  EXPECT_EQ(back.seeds, (std::vector<std::uint64_t>{0, 1}));
  EXPECT_EQ(back.outputs, m.outputs);
  EXPECT_THROW(RunManifest::from_json(nlohmann::json{{"format", "x"}}), ConfigError);
}

TEST(Summary, RunIdCarriesLabelAndHash) {
  ExperimentConfig c;
  c.set("train.observation", "nostate");
  const auto id = run_id("train", c);
  EXPECT_EQ(id.rfind("train-rl-nostate-wild-stackelberg-", 0), 0u);
  EXPECT_EQ(id.substr(id.size() - 8), hex64(c.hash()).substr(0, 8));
}

// ---- heatmap --------------------------------------------------------------------

TEST(Heatmap, ConstantPolicies) {
  const ExperimentConfig c;
  const MarketModel model(c.market, c.grid());
  const int acts = model.thresholds().size();
  const auto top = policy_heatmap({LeaderPolicy::constant(acts, acts - 1)}, model);
  const auto bottom = policy_heatmap({LeaderPolicy::constant(acts, 0)}, model);
  const auto mid = policy_heatmap({LeaderPolicy::constant(acts, 2)}, model);  // tau = 1.38125
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      EXPECT_DOUBLE_EQ(top[a][b], 2.0);
      EXPECT_DOUBLE_EQ(bottom[a][b], 0.0);
      EXPECT_DOUBLE_EQ(mid[a][b], (a <= 1) + (b <= 1));
    }
  EXPECT_DOUBLE_EQ(mid[1][2], 1.0);
  EXPECT_EQ(open_cells(top), 25);
  EXPECT_EQ(open_cells(bottom), 0);
  EXPECT_EQ(open_cells(mid), 16);

  // Averaging across policies.
  const auto avg = policy_heatmap({LeaderPolicy::constant(acts, acts - 1), LeaderPolicy::constant(acts, 0)}, model);
  EXPECT_DOUBLE_EQ(avg[4][4], 1.0);

  const auto path = scratch("heatmap") / "heatmap.csv";
  write_heatmap_csv(mid, c.grid(), path);
  const auto text = slurp(path);
  EXPECT_EQ(text.substr(0, text.find('\n')), "p1\\p2,0.95,1.2375,1.525,1.8125,2.1");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
}

// ---- commands ---------------------------------------------------------------------

TEST(Commands, BaselineRejectsLearnedRules) {
  const ExperimentConfig c;
  EXPECT_THROW(cmd_baseline(c, RuleKind::parse("rl-state")), ConfigError);
}

TEST(Commands, FixedThresholdBaselineNearReference) {
  ExperimentConfig c;
  c.set("run.seeds", "3");
  const auto rep = cmd_baseline(c, RuleKind::parse("fixed:1.38125"));
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.flagged, 0u);
  for (const auto& r : rep.rows) EXPECT_NEAR(r.result.mean_cs, 0.9416, 0.01);
  const MarketModel model(c.market, c.grid());
  const auto path = scratch("baseline") / "baseline.csv";
  write_baseline_csv(rep, model, path);
  const auto text = slurp(path);
  EXPECT_EQ(text.substr(0, text.find('\n')), "rule,seed,converged,steps,mean_cs,mean_price,mean_displayed,final_prices");
}

TEST(Commands, RobustnessOfClosedPlatformAtBaseCost) {
  const ExperimentConfig c;
  const MarketModel model(c.market, c.grid());
  const auto dir = scratch("robust");
  const auto ckpt = dir / "closed.json";
  LeaderPolicy::constant(model.thresholds().size(), 0).save(ckpt.string());
  ExperimentConfig r = c;
  r.robustness_costs = {1.0};
  r.robustness_episodes = 1;
  r.set("episode.n_e", "2000");
  const auto rows = cmd_robustness(r, {ckpt.string()});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].mean_cs, 0.0);  // nobody shown: outside option only, which has zero value
  EXPECT_NEAR(rows[0].ceiling, 0.9416, 1e-4);
}

// ---- CLI ---------------------------------------------------------------------------

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli_codes");
  EXPECT_EQ(run_cli("--out " + dir.string() + " nash"), 0);
  EXPECT_TRUE(fs::exists(dir / "nash.csv"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_EQ(run_cli("config"), 0);
  EXPECT_EQ(run_cli("--out " + dir.string() + " baseline not-a-rule"), 2);
  EXPECT_EQ(run_cli("--set market.nope=1 nash"), 2);
  EXPECT_EQ(run_cli("--set market.mu=-1 nash"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("--out " + dir.string() + " baseline rl-state"), 2);
}

TEST(Cli, TrainThenRerunIsBitIdentical) {
  const auto a = scratch("cli_train_a");
  const auto b = scratch("cli_train_b");
  const std::string args = "--out " + a.string() +
                           " --seeds 2 --set train.eval_every=4000 train rl-nostate wild"
                           " --n-e 2000 --total-steps 20000";
  ASSERT_EQ(run_cli(args), 0);
  ASSERT_TRUE(fs::exists(a / "metrics.csv"));
  ASSERT_TRUE(fs::exists(a / "summary.csv"));
  ASSERT_TRUE(fs::exists(a / "seed_1" / "metrics.csv"));
  const auto metrics = slurp(a / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), kMetricsHeader);

  ASSERT_EQ(run_cli("--out " + b.string() + " rerun " + (a / "manifest.json").string()), 0);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));

  // A tampered manifest is rejected.
  auto j = nlohmann::json::parse(slurp(a / "manifest.json"));
  j["config"] = j["config"].get<std::string>() + "\n[market]\nmu = 0.3\n";
  std::ofstream(b / "tampered.json") << j.dump();
  EXPECT_EQ(run_cli("rerun " + (b / "tampered.json").string()), 2);
}
