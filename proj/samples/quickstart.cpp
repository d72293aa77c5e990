// Short end-to-end run: sellers under no intervention, then a small
// Stackelberg training run for the no-state platform policy.
#include <cstdio>

#include "collusionlab/collusionlab.hpp"

using namespace collusionlab;

int main() {
  const MarketModel model(MarketParams{}, PriceGrid(0.95, 2.1, 5));
  const SellerParams sellers;

  const BaselineResult none = run_baseline(RuleKind::parse("none"), model, sellers, 1);
  std::printf("no intervention: %llu steps, mean price %.4f, CS %.4f\n",
              static_cast<unsigned long long>(none.steps), none.mean_price, none.mean_cs);

  TrainConfig tc;
  tc.observation = ObservationMode::NoState;
  tc.episode.n_e = 5'000;
  tc.total_steps = 5'000'000;
  tc.eval_every = 500'000;
  Trainer trainer(model, sellers, tc);
  trainer.set_observer([](const MetricsRow& r) {
    if (r.eval_cs) std::printf("step %9llu  eval CS %.4f\n", static_cast<unsigned long long>(r.env_steps), *r.eval_cs);
  });
  const TrainResult res = trainer.train();

  const int k = res.policy.greedy_action(Observation{0});
  std::printf("learned threshold %.5f\n", model.thresholds()[k]);
  return 0;
}
