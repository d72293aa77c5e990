#pragma once

// Logit-demand market: demand, surplus, profit and the analytic oracles used
// to sanity-check learned behavior (continuous Nash price, joint-profit
// maximizer, pure equilibria of the discretized stage game).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "collusionlab/core.hpp"

namespace collusionlab {

struct MarketParams {
  int n = 2;
  std::vector<Money> cost{1.0, 1.0};
  std::vector<double> quality{2.0, 2.0};
  double outside_quality = 0.0;
  double mu = 0.25;

  static MarketParams symmetric(int n, Money c, double alpha, double alpha0, double mu) {
    MarketParams p;
    p.n = n;
    p.cost.assign(static_cast<std::size_t>(n), c);
    p.quality.assign(static_cast<std::size_t>(n), alpha);
    p.outside_quality = alpha0;
    p.mu = mu;
    return p;
  }

  void validate() const {
    if (n < 1 || n > 16) throw DomainError("market: n must be in [1, 16]");
    if (!(mu > 0.0) || !std::isfinite(mu)) throw DomainError("market: mu must be > 0");
    if (cost.size() != static_cast<std::size_t>(n) || quality.size() != static_cast<std::size_t>(n))
      throw DomainError("market: cost/quality length must equal n");
    for (int i = 0; i < n; ++i) {
      if (!(cost[i] > 0.0)) throw DomainError("market: cost must be > 0");
      if (!(quality[i] > 0.0)) throw DomainError("market: quality must be > 0");
    }
    if (!std::isfinite(outside_quality)) throw DomainError("market: outside quality must be finite");
  }

  bool is_symmetric() const {
    for (int i = 1; i < n; ++i)
      if (cost[i] != cost[0] || quality[i] != quality[0]) return false;
    return true;
  }

  MarketParams with_cost(Money c) const {
    MarketParams p = *this;
    p.cost.assign(static_cast<std::size_t>(n), c);
    return p;
  }
};

// m equally spaced prices on [min, max].
class PriceGrid {
 public:
  PriceGrid(Money min, Money max, int m) : min_(min), max_(max) {
    if (m < 2) throw DomainError("price grid: need at least 2 points");
    if (!(max > min) || !std::isfinite(min) || !std::isfinite(max) || min < 0.0)
      throw DomainError("price grid: need 0 <= min < max");
    points_.resize(static_cast<std::size_t>(m));
    const double step = (max - min) / (m - 1);
    for (int k = 0; k < m; ++k) points_[k] = min + step * k;
    points_.back() = max;
  }

  int size() const { return static_cast<int>(points_.size()); }
  Money operator[](int k) const { return points_[static_cast<std::size_t>(k)]; }
  Money min() const { return min_; }
  Money max() const { return max_; }
  Money step() const { return (max_ - min_) / (size() - 1); }
  std::span<const Money> points() const { return points_; }

  // Index of the grid point equal to `price` (within 1e-9), or -1.
  int index_of(Money price) const {
    for (int k = 0; k < size(); ++k)
      if (std::abs(points_[k] - price) < 1e-9) return k;
    return -1;
  }

 private:
  Money min_;
  Money max_;
  std::vector<Money> points_;
};

struct PriceProfile {
  std::vector<Money> p;

  int size() const { return static_cast<int>(p.size()); }
  Money operator[](int i) const { return p[static_cast<std::size_t>(i)]; }

  void validate(int n) const {
    if (size() != n) throw DomainError("price profile: wrong number of sellers");
    for (Money x : p)
      if (!std::isfinite(x) || x < 0.0) throw DomainError("price profile: prices must be finite and >= 0");
  }
};

// Subset of seller indices (0-based) shown to consumers.
class DisplaySet {
 public:
  constexpr DisplaySet() = default;
  constexpr explicit DisplaySet(std::uint32_t mask) : mask_(mask) {}

  static constexpr DisplaySet all(int n) { return DisplaySet(n >= 32 ? ~0u : (1u << n) - 1u); }
  static constexpr DisplaySet none() { return DisplaySet(0u); }
  static constexpr DisplaySet only(int i) { return DisplaySet(1u << i); }

  constexpr bool contains(int i) const { return (mask_ >> i) & 1u; }
  constexpr void insert(int i) { mask_ |= 1u << i; }
  constexpr bool empty() const { return mask_ == 0u; }
  constexpr int size() const { return std::popcount(mask_); }
  constexpr std::uint32_t mask() const { return mask_; }
  constexpr bool subset_of(DisplaySet other) const { return (mask_ & ~other.mask_) == 0u; }

  std::vector<int> members(int n) const {
    std::vector<int> out;
    for (int i = 0; i < n; ++i)
      if (contains(i)) out.push_back(i);
    return out;
  }

  friend constexpr bool operator==(DisplaySet, DisplaySet) = default;

 private:
  std::uint32_t mask_ = 0u;
};

namespace detail {

// Logit exponents (alpha_j - p_j)/mu for displayed j, the outside option's
// alpha_0/mu, and the max used for the shift.
struct LogitTerms {
  double shift;
  double sum;  // sum of exp(x - shift) over displayed sellers and outside
  double outside;  // exp(x_0 - shift)
};

inline LogitTerms logit_terms(const PriceProfile& p, DisplaySet set, const MarketParams& params) {
  const double x0 = params.outside_quality / params.mu;
  double shift = x0;
  for (int j = 0; j < params.n; ++j)
    if (set.contains(j)) shift = std::max(shift, (params.quality[j] - p[j]) / params.mu);
  LogitTerms t{shift, 0.0, std::exp(x0 - shift)};
  t.sum = t.outside;
  for (int j = 0; j < params.n; ++j)
    if (set.contains(j)) t.sum += std::exp((params.quality[j] - p[j]) / params.mu - shift);
  return t;
}

inline void check_inputs(const PriceProfile& p, const MarketParams& params) {
  p.validate(params.n);
}

}  // namespace detail

// Fractional demand per seller; zero outside the display set.
inline std::vector<double> demand(const PriceProfile& p, DisplaySet set, const MarketParams& params) {
  detail::check_inputs(p, params);
  const auto t = detail::logit_terms(p, set, params);
  std::vector<double> d(static_cast<std::size_t>(params.n), 0.0);
  for (int i = 0; i < params.n; ++i)
    if (set.contains(i)) d[i] = std::exp((params.quality[i] - p[i]) / params.mu - t.shift) / t.sum;
  return d;
}

// Share of consumers choosing the outside option.
inline double outside_share(const PriceProfile& p, DisplaySet set, const MarketParams& params) {
  detail::check_inputs(p, params);
  const auto t = detail::logit_terms(p, set, params);
  return t.outside / t.sum;
}

// U = mu * log(lambda).
inline double consumer_surplus(const PriceProfile& p, DisplaySet set, const MarketParams& params) {
  detail::check_inputs(p, params);
  const auto t = detail::logit_terms(p, set, params);
  return params.mu * (t.shift + std::log(t.sum));
}

// Value of the quality-free surplus when nobody is displayed: strictly below
// any nonempty value on the grid.
inline double proxy_surplus_floor(const PriceGrid& grid) { return -(grid.max() + 1.0); }

// Quality-free surplus mu * log(sum_j exp(-p_j / mu)) over displayed sellers.
inline double proxy_surplus(const PriceProfile& p, DisplaySet set, const MarketParams& params,
                            const PriceGrid& grid) {
  detail::check_inputs(p, params);
  if (set.empty()) return proxy_surplus_floor(grid);
  double shift = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < params.n; ++j)
    if (set.contains(j)) shift = std::max(shift, -p[j] / params.mu);
  double sum = 0.0;
  for (int j = 0; j < params.n; ++j)
    if (set.contains(j)) sum += std::exp(-p[j] / params.mu - shift);
  return params.mu * (shift + std::log(sum));
}

inline double profit(int i, const PriceProfile& p, DisplaySet set, const MarketParams& params) {
  if (!set.contains(i)) {
    detail::check_inputs(p, params);
    return 0.0;
  }
  return (p[i] - params.cost[i]) * demand(p, set, params)[i];
}

// d rho_i / d p_i = -(p_i - c_i) D_i (1 - D_i) / mu + D_i.
inline double profit_derivative(int i, const PriceProfile& p, DisplaySet set, const MarketParams& params) {
  if (i < 0 || i >= params.n || !set.contains(i))
    throw DomainError("profit_derivative: seller is not displayed");
  const double d = demand(p, set, params)[i];
  return -(p[i] - params.cost[i]) * d * (1.0 - d) / params.mu + d;
}

// Unique symmetric price with zero own-price profit derivative, all sellers
// displayed. Damped iteration of p <- c + mu / (1 - D(p)).
inline Money solve_nash_price(const MarketParams& params, double tol = 1e-10, int max_iter = 10000) {
  params.validate();
  if (!params.is_symmetric()) throw DomainError("solve_nash_price: sellers must be symmetric");
  const Money c = params.cost[0];
  const DisplaySet all = DisplaySet::all(params.n);
  Money price = c + params.mu;
  for (int it = 0; it < max_iter; ++it) {
    PriceProfile prof{std::vector<Money>(static_cast<std::size_t>(params.n), price)};
    const double d = demand(prof, all, params)[0];
    const Money target = c + params.mu / (1.0 - d);
    const Money next = 0.5 * price + 0.5 * target;
    if (std::abs(next - price) < tol) return next;
    price = next;
  }
  throw NumericError("solve_nash_price: no convergence");
}

inline double joint_profit(Money price, const MarketParams& params) {
  PriceProfile prof{std::vector<Money>(static_cast<std::size_t>(params.n), price)};
  const auto d = demand(prof, DisplaySet::all(params.n), params);
  double total = 0.0;
  for (int i = 0; i < params.n; ++i) total += (price - params.cost[i]) * d[i];
  return total;
}

// Symmetric joint-profit maximizer with everyone displayed (golden section).
inline Money solve_monopoly_price(const MarketParams& params, double tol = 1e-8) {
  params.validate();
  if (!params.is_symmetric()) throw DomainError("solve_monopoly_price: sellers must be symmetric");
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = params.cost[0];
  double hi = params.cost[0] + 20.0 * params.mu + *std::max_element(params.quality.begin(), params.quality.end());
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = joint_profit(x1, params);
  double f2 = joint_profit(x2, params);
  while (hi - lo > tol) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = joint_profit(x2, params);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = joint_profit(x1, params);
    }
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Two-seller stage game on the grid.

// A display rule as a lottery over display sets (deterministic rules return a
// single entry with probability 1).
using DisplayLottery = std::vector<std::pair<DisplaySet, double>>;
using StageRule = std::function<DisplayLottery(const PriceProfile&)>;

struct PayoffTensor {
  int m = 0;
  std::vector<double> seller1;  // row-major, [a * m + b]
  std::vector<double> seller2;

  double first(int a, int b) const { return seller1[static_cast<std::size_t>(a * m + b)]; }
  double second(int a, int b) const { return seller2[static_cast<std::size_t>(a * m + b)]; }
};

inline PayoffTensor stage_game_payoffs(const PriceGrid& grid, const StageRule& rule, const MarketParams& params) {
  if (params.n != 2) throw DomainError("stage_game_payoffs: two sellers only");
  const int m = grid.size();
  PayoffTensor t{m, std::vector<double>(static_cast<std::size_t>(m * m)),
                 std::vector<double>(static_cast<std::size_t>(m * m))};
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) {
      PriceProfile p{{grid[a], grid[b]}};
      double r1 = 0.0, r2 = 0.0;
      for (const auto& [set, prob] : rule(p)) {
        r1 += prob * profit(0, p, set, params);
        r2 += prob * profit(1, p, set, params);
      }
      t.seller1[static_cast<std::size_t>(a * m + b)] = r1;
      t.seller2[static_cast<std::size_t>(a * m + b)] = r2;
    }
  }
  return t;
}

// All pure profiles where neither seller has a strictly profitable deviation.
inline std::vector<std::pair<int, int>> find_pure_nash(const PayoffTensor& t, double eps = 1e-12) {
  std::vector<std::pair<int, int>> out;
  for (int a = 0; a < t.m; ++a) {
    for (int b = 0; b < t.m; ++b) {
      bool stable = true;
      for (int d = 0; d < t.m && stable; ++d)
        if (t.first(d, b) > t.first(a, b) + eps) stable = false;
      for (int d = 0; d < t.m && stable; ++d)
        if (t.second(a, d) > t.second(a, b) + eps) stable = false;
      if (stable) out.emplace_back(a, b);
    }
  }
  return out;
}

// payoff_seller1.csv / payoff_seller2.csv: header row of column prices, then
// one row per seller-1 price.
inline void write_payoff_csv(const PayoffTensor& t, const PriceGrid& grid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, bool first) {
    std::ofstream out(dir / name);
    if (!out) throw ConfigError("cannot write " + (dir / name).string());
    out.precision(17);
    out << "p1\\p2";
    for (int b = 0; b < t.m; ++b) out << ',' << grid[b];
    out << '\n';
    for (int a = 0; a < t.m; ++a) {
      out << grid[a];
      for (int b = 0; b < t.m; ++b) out << ',' << (first ? t.first(a, b) : t.second(a, b));
      out << '\n';
    }
  };
  write("payoff_seller1.csv", true);
  write("payoff_seller2.csv", false);
}

}  // namespace collusionlab
