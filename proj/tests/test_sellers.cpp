#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "collusionlab/baseline.hpp"
#include "collusionlab/simulation.hpp"

using namespace collusionlab;

namespace {

SellerLearner blank(SellerParams p = {}) { return SellerLearner(25, 5, p, make_rng(7)); }

const MarketModel& default_model() {
  static const MarketModel m(MarketParams{}, PriceGrid(0.95, 2.1, 5));
  return m;
}

}  // namespace

TEST(Encoding, Bijective) {
  std::set<StateIndex> seen;
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      const std::array<int, 2> idx{a, b};
      const StateIndex s = encode_profile(idx, 5);
      EXPECT_EQ(s, static_cast<StateIndex>(a + 5 * b));
      EXPECT_EQ(decode_profile(s, 2, 5), (std::vector<int>{a, b}));
      seen.insert(s);
    }
  EXPECT_EQ(seen.size(), 25u);
  EXPECT_EQ(*seen.rbegin(), 24u);
}

TEST(Exploration, Anchors) {
  auto l = blank();
  EXPECT_EQ(l.exploration_rate(), 1.0);
  l.set_t_local(50'000);
  EXPECT_NEAR(l.exploration_rate(), 0.6065306597, 1e-9);
  l.set_t_local(100'000);
  EXPECT_NEAR(l.exploration_rate(), std::exp(-1.0), 1e-12);
  l.restart_exploration();
  EXPECT_EQ(l.t_local(), 0u);
  EXPECT_EQ(l.exploration_rate(), 1.0);
}

TEST(SelectPrice, PausedIsArgmaxLowestTie) {
  auto l = blank();
  l.explore_paused = true;
  const double row[] = {0, 3, 1, 1, 1};
  for (int a = 0; a < 5; ++a) l.q(4, a) = row[a];
  EXPECT_EQ(l.select_price(4), 1);
  for (int a = 0; a < 5; ++a) l.q(5, a) = 2.0;
  EXPECT_EQ(l.select_price(5), 0);
  l.q(5, 3) = 2.0 + 1e-12;
  EXPECT_EQ(l.select_price(5), 3);
}

TEST(SelectPrice, DoesNotTickClock) {
  auto l = blank();
  for (int k = 0; k < 10; ++k) l.select_price(0);
  EXPECT_EQ(l.t_local(), 0u);
}

TEST(SelectPrice, UniformAtStart) {
  auto l = blank();
  std::array<int, 5> counts{};
  const int draws = 50'000;
  for (int k = 0; k < draws; ++k) ++counts[static_cast<std::size_t>(l.select_price(0))];
  for (int c : counts) EXPECT_NEAR(c / static_cast<double>(draws), 0.2, 0.01);
}

TEST(SelectPrice, ExploreFrequencyMatchesEpsilon) {
  // With a single dominant action, non-greedy picks happen at rate eps * 4/5.
  auto l = blank();
  for (int a = 0; a < 5; ++a) l.q(0, a) = a == 2 ? 1.0 : 0.0;
  l.set_t_local(100'000);
  int off = 0;
  const int draws = 100'000;
  for (int k = 0; k < draws; ++k) off += l.select_price(0) != 2;
  EXPECT_NEAR(off / static_cast<double>(draws), std::exp(-1.0) * 0.8, 0.01);
}

TEST(UpdateQ, HandArithmetic) {
  auto l = blank();
  l.q(3, 2) = 1.0;
  for (int a = 0; a < 5; ++a) l.q(7, a) = a == 4 ? 2.0 : -1.0;
  l.update_q(3, 2, 0.5, 7);
  EXPECT_NEAR(l.q(3, 2), 0.85 * 1.0 + 0.15 * (0.5 + 0.95 * 2.0), 1e-15);
  EXPECT_NEAR(l.q(3, 2), 1.21, 1e-12);
}

TEST(UpdateQ, DegenerateRates) {
  auto still = blank(SellerParams{0.0, 0.95, 1e-5});
  still.q(1, 1) = 4.0;
  still.update_q(1, 1, 100.0, 2);
  EXPECT_EQ(still.q(1, 1), 4.0);

  auto myopic = blank(SellerParams{1.0, 0.0, 1e-5});
  myopic.q(1, 1) = 4.0;
  myopic.q(2, 0) = 1e6;
  myopic.update_q(1, 1, 0.375, 2);
  EXPECT_EQ(myopic.q(1, 1), 0.375);
}

TEST(UpdateQ, FrozenIsNoop) {
  auto l = blank();
  l.q(0, 0) = 1.0;
  l.frozen = true;
  l.update_q(0, 0, 5.0, 0);
  l.update_q(0, 0, 5.0, 0);
  EXPECT_EQ(l.q(0, 0), 1.0);
  EXPECT_EQ(l.frozen_update_attempts(), 2u);
}

TEST(Init, UniformRange) {
  const auto& m = default_model();
  const SellerParams params;
  const auto l = init_learner(25, 5, params, m.rho_max(), m.rival_average(), make_rng(1));
  const double hi = 20.0 * m.rho_max();
  double lo_seen = hi, hi_seen = 0.0;
  for (double v : l.q_matrix()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, hi);
    lo_seen = std::min(lo_seen, v);
    hi_seen = std::max(hi_seen, v);
  }
  EXPECT_LT(lo_seen, 0.2 * hi);
  EXPECT_GT(hi_seen, 0.8 * hi);
  EXPECT_EQ(l.t_local(), 0u);
}

TEST(Init, StreamsDifferSeedsRepeat) {
  const auto& m = default_model();
  const auto a = init_learner(25, 5, {}, m.rho_max(), m.rival_average(), make_rng(1, 1000));
  const auto b = init_learner(25, 5, {}, m.rho_max(), m.rival_average(), make_rng(1, 1001));
  const auto c = init_learner(25, 5, {}, m.rho_max(), m.rival_average(), make_rng(1, 1000));
  EXPECT_NE(a.q_hash(), b.q_hash());
  EXPECT_EQ(a.q_hash(), c.q_hash());
}

TEST(Init, RivalAverage) {
  const auto& m = default_model();
  SellerParams params;
  params.init = QInit::RivalAverage;
  const auto l = init_learner(25, 5, params, m.rho_max(), m.rival_average(), make_rng(1));
  // oracle: average profit of seller 0 at price a over the 5 rival prices
  const MarketParams mp;
  for (int a = 0; a < 5; ++a) {
    double avg = 0.0;
    for (int b = 0; b < 5; ++b) {
      const PriceProfile p{{m.grid()[a], m.grid()[b]}};
      avg += (p[0] - 1.0) * demand(p, DisplaySet::all(2), mp)[0] / 5.0;
    }
    for (StateIndex s = 0; s < 25; ++s) EXPECT_NEAR(l.q(s, a), avg / 0.05, 1e-10);
  }
  EXPECT_THROW(init_learner(25, 4, params, m.rho_max(), m.rival_average(), make_rng(1)), DomainError);
}

TEST(Convergence, HistoryWindow) {
  const GreedyTable t0(25, 1);
  GreedyTable t1 = t0;
  t1[13] = 2;
  std::vector<std::vector<GreedyTable>> hist(6, {t0, t0});
  EXPECT_TRUE(has_converged(std::span<const std::vector<GreedyTable>>(hist), 5));
  EXPECT_FALSE(has_converged(std::span<const std::vector<GreedyTable>>(hist), 6));
  hist[2][1] = t1;
  EXPECT_FALSE(has_converged(std::span<const std::vector<GreedyTable>>(hist), 5));
  EXPECT_FALSE(has_converged(std::span<const std::vector<GreedyTable>>(hist), 3));
  EXPECT_TRUE(has_converged(std::span<const std::vector<GreedyTable>>(hist), 2));
}

TEST(Convergence, TrackerMatchesHistory) {
  // Run a pool and check the incremental tracker against full-table snapshots.
  const auto& m = default_model();
  SellerPool pool(m, {}, 11);
  ConvergenceTracker tracker(pool.learners());
  std::vector<std::vector<GreedyTable>> hist;
  auto snap = [&] {
    std::vector<GreedyTable> v;
    for (const auto& l : pool.learners()) v.push_back(greedy_table(l));
    hist.push_back(std::move(v));
  };
  snap();
  for (int k = 0; k < 3000; ++k) {
    const StateIndex prof = pool.choose_prices();
    pool.learn(m, prof, DisplaySet::all(2), &tracker);
    snap();
    std::uint64_t stable = 0;
    for (std::size_t j = hist.size() - 1; j > 0 && hist[j] == hist[j - 1]; --j) ++stable;
    ASSERT_EQ(tracker.stable_steps(), stable) << k;
  }
}

TEST(Pool, DeterministicReplay) {
  const auto& m = default_model();
  auto trace = [&](std::uint64_t seed) {
    SellerPool pool(m, {}, seed);
    std::vector<StateIndex> out;
    for (int k = 0; k < 20'000; ++k) {
      const StateIndex p = pool.choose_prices();
      pool.learn(m, p, m.threshold_display(2, p));
      out.push_back(p);
    }
    return std::make_pair(out, pool.q_hash());
  };
  EXPECT_EQ(trace(5), trace(5));
  EXPECT_NE(trace(5).second, trace(6).second);
}

TEST(Pool, TicksOncePerStepEvenWhenPaused) {
  const auto& m = default_model();
  SellerPool pool(m, {}, 2);
  pool.set_paused(true);
  for (int k = 0; k < 17; ++k) pool.learn(m, pool.choose_prices(), DisplaySet::all(2));
  for (const auto& l : pool.learners()) EXPECT_EQ(l.t_local(), 17u);
  pool.restart_all();
  for (const auto& l : pool.learners()) EXPECT_EQ(l.t_local(), 0u);
}

TEST(Pool, FrozenSegmentKeepsHash) {
  const auto& m = default_model();
  SellerPool pool(m, {}, 3);
  for (int k = 0; k < 5000; ++k) pool.learn(m, pool.choose_prices(), DisplaySet::all(2));
  const auto before = pool.q_hash();
  pool.set_frozen(true);
  for (int k = 0; k < 5000; ++k) pool.learn(m, pool.choose_prices(), DisplaySet::only(k % 2));
  EXPECT_EQ(pool.q_hash(), before);
  pool.set_frozen(false);
  pool.learn(m, pool.choose_prices(), DisplaySet::all(2));
  EXPECT_NE(pool.q_hash(), before);
}

TEST(Pool, ContractionBoundOnFuzzRun) {
  // Random display sets for 1M steps; Q stays inside the contraction bound.
  const auto& m = default_model();
  SellerPool pool(m, {}, 9);
  double init_max = 0.0;
  for (const auto& l : pool.learners())
    for (double v : l.q_matrix()) init_max = std::max(init_max, std::abs(v));
  const double bound = m.rho_max() / (1.0 - 0.95) + init_max;
  Rng rng = make_rng(99);
  for (int k = 0; k < 1'000'000; ++k) {
    const StateIndex p = pool.choose_prices();
    pool.learn(m, p, DisplaySet(static_cast<std::uint32_t>(uniform_index(rng, 4))));
  }
  for (const auto& l : pool.learners())
    for (double v : l.q_matrix()) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_LE(std::abs(v), bound);
    }
}

TEST(Dynamics, LowThresholdConvergesToOracleEquilibrium) {
  // Display only sellers priced <= 1.2375: the unique stage NE is (1.2375, 1.2375).
  const auto& m = default_model();
  const auto eq = find_pure_nash(stage_game_payoffs(m.grid(), threshold_stage_rule(1.2375), m.params()));
  ASSERT_EQ(eq.size(), 1u);
  ASSERT_EQ(eq[0], std::make_pair(1, 1));
  const StateIndex target = static_cast<StateIndex>(eq[0].first + 5 * eq[0].second);

  // On-path play must land on the equilibrium for every seed. Off-path start
  // states are reached only by exploration and can keep stale optimistic
  // values when the stability window closes, so those are checked as a rate.
  int reached = 0;
  const int seeds = 5;
  for (int seed = 0; seed < seeds; ++seed) {
    SellerPool pool(m, {}, static_cast<std::uint64_t>(seed));
    FixedRule rule(RuleKind::parse("fixed:1.2375"), m);
    Rng rng = make_rng(static_cast<std::uint64_t>(seed), 3);
    ConvergenceTracker tracker(pool.learners());
    for (int k = 0; k < 10'000'000 && !tracker.converged(100'000); ++k) {
      const StateIndex p = pool.choose_prices();
      pool.learn(m, p, rule.display(p, rng), &tracker);
    }
    ASSERT_TRUE(tracker.converged(100'000)) << seed;
    auto play = [&](StateIndex s) {
      for (int k = 0; k < 30; ++k) {
        const std::array<int, 2> a{pool[0].greedy_action(s), pool[1].greedy_action(s)};
        s = encode_profile(a, 5);
      }
      return s;
    };
    EXPECT_EQ(play(pool.state()), target) << seed;
    for (StateIndex s0 = 0; s0 < 25; ++s0) reached += play(s0) == target;
  }
  EXPECT_GE(reached, static_cast<int>(0.95 * 25 * seeds));
}

TEST(Baseline, ConvergesUnderNoIntervention) {
  int conv = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed)
    conv += run_baseline(RuleKind::parse("none"), default_model(), {}, seed).converged;
  EXPECT_GE(conv, 2);
}
