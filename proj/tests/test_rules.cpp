#include <gtest/gtest.h>

#include "collusionlab/baseline.hpp"
#include "collusionlab/rules.hpp"

using namespace collusionlab;

namespace {
const PriceGrid kGrid(0.95, 2.1, 5);
PriceProfile pp(double a, double b) { return PriceProfile{{a, b}}; }
}  // namespace

TEST(Thresholds, DefaultValues) {
  const ThresholdSet ts(kGrid);
  const double expect[] = {0.90, 1.09375, 1.38125, 1.66875, 1.95625, 2.20};
  ASSERT_EQ(ts.size(), 6);
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(ts[k], expect[k], 1e-12);
  EXPECT_EQ(ts.index_of(1.38125), 2);
  EXPECT_EQ(ts.index_of(1.5), -1);
}

TEST(Threshold, Examples) {
  EXPECT_EQ(apply_threshold(1.38125, pp(1.2375, 1.525)), DisplaySet::only(0));
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      EXPECT_EQ(apply_threshold(2.2, pp(kGrid[a], kGrid[b])), DisplaySet::all(2));
      EXPECT_EQ(apply_threshold(0.9, pp(kGrid[a], kGrid[b])), DisplaySet::none());
    }
  EXPECT_EQ(apply_threshold(1.2375, pp(1.2375, 1.2375)), DisplaySet::all(2));  // inclusive
}

TEST(Threshold, MonotoneInTau) {
  const ThresholdSet ts(kGrid);
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b)
      for (int k = 0; k + 1 < ts.size(); ++k) {
        const auto p = pp(kGrid[a], kGrid[b]);
        EXPECT_TRUE(apply_threshold(ts[k], p).subset_of(apply_threshold(ts[k + 1], p)));
      }
}

TEST(Threshold, RealizesEveryPriceCutoffSet) {
  // Downward-closed sets in price order: everyone, nobody, and for distinct
  // prices the cheaper seller alone.
  const ThresholdSet ts(kGrid);
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      const auto p = pp(kGrid[a], kGrid[b]);
      std::vector<DisplaySet> want{DisplaySet::all(2), DisplaySet::none()};
      if (a < b) want.push_back(DisplaySet::only(0));
      if (b < a) want.push_back(DisplaySet::only(1));
      for (const auto& w : want) {
        bool found = false;
        for (int k = 0; k < ts.size(); ++k) found |= apply_threshold(ts[k], p) == w;
        EXPECT_TRUE(found) << a << "," << b;
      }
    }
}

TEST(Pdp, Examples) {
  Rng rng = make_rng(1);
  EXPECT_EQ(pdp_display(pp(1.2375, 1.525), rng), DisplaySet::only(0));
  EXPECT_EQ(pdp_display(pp(2.1, 0.95), rng), DisplaySet::only(1));
  int first = 0;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    const auto s = pdp_display(pp(1.525, 1.525), rng);
    EXPECT_EQ(s.size(), 1);
    first += s.contains(0);
  }
  EXPECT_NEAR(first / static_cast<double>(draws), 0.5, 0.02);
}

TEST(Dpdp, Examples) {
  Rng rng = make_rng(2);
  EXPECT_EQ(dpdp_display(pp(1.2375, 1.525), 1, pp(1.8125, 1.8125), rng), DisplaySet::only(0));
  // tie, incumbent 2 (index 1) lowered its price from 1.8125: keeps the slot
  EXPECT_EQ(dpdp_display(pp(1.525, 1.525), 1, pp(1.2375, 1.8125), rng), DisplaySet::only(1));
  // tie, incumbent raised its price: rival gets the slot
  EXPECT_EQ(dpdp_display(pp(1.525, 1.525), 1, pp(1.2375, 1.2375), rng), DisplaySet::only(0));
  // first period: fair coin
  int first = 0;
  for (int k = 0; k < 4000; ++k) first += dpdp_display(pp(1.525, 1.525), std::nullopt, std::nullopt, rng).contains(0);
  EXPECT_NEAR(first / 4000.0, 0.5, 0.03);
  EXPECT_THROW(dpdp_display(pp(1.5, 1.5), 3, pp(1.5, 1.5), rng), DomainError);
}

TEST(Dpdp, AlwaysOneSeller) {
  Rng rng = make_rng(3);
  std::optional<int> prev;
  std::optional<PriceProfile> pprev;
  for (int k = 0; k < 2000; ++k) {
    const auto p = pp(kGrid[uniform_index(rng, 5)], kGrid[uniform_index(rng, 5)]);
    const auto s = dpdp_display(p, prev, pprev, rng);
    ASSERT_EQ(s.size(), 1);
    prev = s.members(2).front();
    pprev = p;
  }
}

TEST(NoIntervention, AllSellers) {
  EXPECT_EQ(no_intervention(2), DisplaySet::all(2));
  EXPECT_EQ(no_intervention(3).members(3), (std::vector<int>{0, 1, 2}));
  const MarketParams m;
  for (int a = 0; a < 5; ++a) {
    const auto p = pp(kGrid[a], kGrid[4 - a]);
    const double all = consumer_surplus(p, no_intervention(2), m);
    EXPECT_GE(all, consumer_surplus(p, DisplaySet::only(0), m));
    EXPECT_GE(all, consumer_surplus(p, DisplaySet::only(1), m));
  }
}

TEST(RuleKind, ParseRoundTrip) {
  for (const char* s : {"none", "pdp", "dpdp", "rl-nostate", "rl-state", "fixed:1.38125"})
    EXPECT_EQ(RuleKind::parse(s).str(), s);
  EXPECT_NEAR(RuleKind::parse("fixed:1.38125").tau, 1.38125, 0);
  EXPECT_THROW(RuleKind::parse("fixed:"), ConfigError);
  EXPECT_THROW(RuleKind::parse("fixed:abc"), ConfigError);
  EXPECT_THROW(RuleKind::parse("bogus"), ConfigError);
}

TEST(FixedRule, RejectsLearnedKinds) {
  const MarketModel model(MarketParams{}, kGrid);
  EXPECT_THROW(FixedRule(RuleKind::parse("rl-state"), model), ConfigError);
}

TEST(FixedRule, DpdpKeepsHistory) {
  const MarketModel model(MarketParams{}, kGrid);
  FixedRule rule(RuleKind::parse("dpdp"), model);
  Rng rng = make_rng(4);
  // step 1: (1.2375, 1.525) shows seller 0
  const auto s1 = std::array<int, 2>{1, 2};
  EXPECT_EQ(rule.display(encode_profile(s1, 5), rng), DisplaySet::only(0));
  // step 2: tie at 1.525; seller 0 raised its price, so seller 1 takes the slot
  const auto s2 = std::array<int, 2>{2, 2};
  EXPECT_EQ(rule.display(encode_profile(s2, 5), rng), DisplaySet::only(1));
  // step 3: tie again; seller 1 held its price and keeps the slot
  EXPECT_EQ(rule.display(encode_profile(s2, 5), rng), DisplaySet::only(1));
}
