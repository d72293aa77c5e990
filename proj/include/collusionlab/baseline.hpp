#pragma once

// Q-learning sellers under a fixed, hand-designed buy-box rule, run to
// convergence and scored over a short greedy rollout.

#include <cstdint>
#include <optional>

#include "collusionlab/core.hpp"
#include "collusionlab/rules.hpp"
#include "collusionlab/simulation.hpp"

namespace collusionlab {

// Stateful wrapper applying one of the fixed rules step by step.
class FixedRule {
 public:
  FixedRule(RuleKind kind, const MarketModel& model) : kind_(kind), model_(&model) {
    if (kind.learned()) throw ConfigError("fixed rule expected, got " + kind.str());
    if ((kind.kind == RuleKind::Kind::PDP || kind.kind == RuleKind::Kind::DPDP) && model.sellers() != 2)
      throw ConfigError(kind.str() + " needs exactly two sellers");
  }

  DisplaySet display(StateIndex profile, Rng& rng) {
    const auto& m = *model_;
    DisplaySet set;
    switch (kind_.kind) {
      case RuleKind::Kind::NoIntervention: set = no_intervention(m.sellers()); break;
      case RuleKind::Kind::FixedThreshold: set = apply_threshold(kind_.tau, m.prices(profile)); break;
      case RuleKind::Kind::PDP: set = pdp_display(m.prices(profile), rng); break;
      case RuleKind::Kind::DPDP: {
        const PriceProfile p = m.prices(profile);
        set = dpdp_display(p, prev_displayed_, prev_prices_, rng);
        prev_displayed_ = set.members(2).front();
        prev_prices_ = p;
        break;
      }
      default: break;
    }
    return set;
  }

 private:
  RuleKind kind_;
  const MarketModel* model_;
  std::optional<int> prev_displayed_;
  std::optional<PriceProfile> prev_prices_;
};

struct BaselineOptions {
  std::uint64_t window = 100'000;     // greedy tables unchanged this long
  std::uint64_t cap = 10'000'000;     // hard step limit
  std::uint64_t rollout = 30;         // greedy scoring steps
};

struct BaselineResult {
  bool converged = false;
  std::uint64_t steps = 0;
  double mean_cs = 0.0;
  double mean_price = 0.0;       // average quoted price over the rollout
  double mean_displayed = 0.0;
  StateIndex final_profile = 0;
};

inline BaselineResult run_baseline(const RuleKind& kind, const MarketModel& model, const SellerParams& params,
                                   std::uint64_t seed, const BaselineOptions& opt = {}) {
  SellerPool sellers(model, params, seed);
  Rng rng = make_rng(seed, 3);
  FixedRule rule(kind, model);
  sellers.set_state(uniform_index(rng, model.profiles()));
  ConvergenceTracker tracker(sellers.learners());
  BaselineResult r;
  while (r.steps < opt.cap) {
    const StateIndex profile = sellers.choose_prices();
    sellers.learn(model, profile, rule.display(profile, rng), &tracker);
    ++r.steps;
    if (tracker.converged(opt.window)) {
      r.converged = true;
      break;
    }
  }
  sellers.set_paused(true);
  sellers.set_frozen(true);
  for (std::uint64_t t = 0; t < opt.rollout; ++t) {
    const StateIndex profile = sellers.choose_prices();
    const DisplaySet set = rule.display(profile, rng);
    r.mean_cs += model.surplus(profile, set);
    r.mean_displayed += set.size();
    const PriceProfile p = model.prices(profile);
    for (int i = 0; i < p.size(); ++i) r.mean_price += p[i] / p.size();
    sellers.learn(model, profile, set);
    r.final_profile = profile;
  }
  const auto k = static_cast<double>(opt.rollout);
  r.mean_cs /= k;
  r.mean_price /= k;
  r.mean_displayed /= k;
  return r;
}

}  // namespace collusionlab
