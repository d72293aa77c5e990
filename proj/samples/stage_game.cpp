// One-shot pricing game on the default grid: payoff matrices under a fixed
// buy-box threshold, their pure equilibria, and the continuous references.
#include <cstdio>

#include "collusionlab/collusionlab.hpp"

using namespace collusionlab;

int main() {
  const MarketParams params;
  const PriceGrid grid(0.95, 2.1, 5);

  std::printf("nash %.4f  monopoly %.4f\n", solve_nash_price(params), solve_monopoly_price(params));

  for (const Money tau : {2.2, 1.38125}) {
    const PayoffTensor t = stage_game_payoffs(grid, threshold_stage_rule(tau), params);
    std::printf("\ntau = %.5f, seller 1 payoff (rows: own price)\n", tau);
    for (int a = 0; a < grid.size(); ++a) {
      std::printf("%7.4f |", grid[a]);
      for (int b = 0; b < grid.size(); ++b) std::printf(" %7.4f", t.first(a, b));
      std::printf("\n");
    }
    for (const auto& [a, b] : find_pure_nash(t)) std::printf("pure NE: (%.4f, %.4f)\n", grid[a], grid[b]);
  }
  return 0;
}
