#pragma once

// Hand-designed buy-box rules and the threshold primitive shared with the
// learned policies.

#include <cmath>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "collusionlab/core.hpp"
#include "collusionlab/market.hpp"

namespace collusionlab {

// Candidate thresholds interleaving a price grid: one below the grid, the
// midpoints between neighbors, one above. On a fixed grid every threshold is
// equivalent to one of these.
class ThresholdSet {
 public:
  static constexpr double kBelowOffset = 0.05;
  static constexpr double kAboveOffset = 0.10;

  explicit ThresholdSet(const PriceGrid& grid) {
    const int m = grid.size();
    values_.reserve(static_cast<std::size_t>(m + 1));
    values_.push_back(grid.min() - kBelowOffset);
    for (int k = 1; k < m; ++k) values_.push_back(0.5 * (grid[k - 1] + grid[k]));
    values_.push_back(grid.max() + kAboveOffset);
  }

  int size() const { return static_cast<int>(values_.size()); }
  Money operator[](int k) const { return values_[static_cast<std::size_t>(k)]; }
  const std::vector<Money>& values() const { return values_; }

  // Index of the threshold equal to `tau` (within 1e-9), or -1.
  int index_of(Money tau) const {
    for (int k = 0; k < size(); ++k)
      if (std::abs(values_[k] - tau) < 1e-9) return k;
    return -1;
  }

 private:
  std::vector<Money> values_;
};

struct RuleKind {
  enum class Kind { NoIntervention, PDP, DPDP, FixedThreshold, LearnedNoState, LearnedStateBased };

  Kind kind = Kind::NoIntervention;
  Money tau = 0.0;  // FixedThreshold only

  bool learned() const { return kind == Kind::LearnedNoState || kind == Kind::LearnedStateBased; }

  // CLI vocabulary: none, pdp, dpdp, fixed:<tau>, rl-nostate, rl-state.
  static RuleKind parse(const std::string& s) {
    if (s == "none") return {Kind::NoIntervention};
    if (s == "pdp") return {Kind::PDP};
    if (s == "dpdp") return {Kind::DPDP};
    if (s == "rl-nostate") return {Kind::LearnedNoState};
    if (s == "rl-state") return {Kind::LearnedStateBased};
    if (s.rfind("fixed:", 0) == 0) {
      const std::string num = s.substr(6);
      char* end = nullptr;
      const double tau = std::strtod(num.c_str(), &end);
      if (num.empty() || end != num.c_str() + num.size() || !std::isfinite(tau) || tau < 0.0)
        throw ConfigError("bad threshold in rule '" + s + "'");
      return {Kind::FixedThreshold, tau};
    }
    throw ConfigError("unknown rule '" + s + "' (expected none|pdp|dpdp|fixed:<tau>|rl-nostate|rl-state)");
  }

  std::string str() const {
    switch (kind) {
      case Kind::NoIntervention: return "none";
      case Kind::PDP: return "pdp";
      case Kind::DPDP: return "dpdp";
      case Kind::LearnedNoState: return "rl-nostate";
      case Kind::LearnedStateBased: return "rl-state";
      case Kind::FixedThreshold: {
        std::ostringstream os;
        os.precision(10);
        os << "fixed:" << tau;
        return os.str();
      }
    }
    return "?";
  }
};

// Sellers priced at or below tau.
inline DisplaySet apply_threshold(Money tau, const PriceProfile& p) {
  DisplaySet set;
  for (int i = 0; i < p.size(); ++i)
    if (p[i] <= tau) set.insert(i);
  return set;
}

inline DisplaySet no_intervention(int n) { return DisplaySet::all(n); }

namespace detail {

inline DisplaySet lowest_priced(const PriceProfile& p, Rng& rng) {
  if (p.size() != 2) throw DomainError("price-directed prominence: two sellers only");
  if (p[0] < p[1]) return DisplaySet::only(0);
  if (p[1] < p[0]) return DisplaySet::only(1);
  return DisplaySet::only(static_cast<int>(uniform_index(rng, 2)));
}

}  // namespace detail

// Show only the cheaper seller; fair coin on ties.
inline DisplaySet pdp_display(const PriceProfile& p, Rng& rng) { return detail::lowest_priced(p, rng); }

// Show the cheaper seller. On a tie, the previously displayed seller keeps
// the slot if it has not raised its price and loses it to the rival if it
// has. Without history this is PDP.
inline DisplaySet dpdp_display(const PriceProfile& p, std::optional<int> prev_displayed,
                               const std::optional<PriceProfile>& p_prev, Rng& rng) {
  if (p.size() != 2) throw DomainError("dpdp: two sellers only");
  if (p[0] != p[1] || !prev_displayed || !p_prev) return detail::lowest_priced(p, rng);
  const int inc = *prev_displayed;
  if (inc < 0 || inc > 1) throw DomainError("dpdp: previous seller index out of range");
  return DisplaySet::only(p[inc] <= (*p_prev)[inc] ? inc : 1 - inc);
}

// Stage-game views of the stationary rules (randomized ties in expectation).
inline StageRule threshold_stage_rule(Money tau) {
  return [tau](const PriceProfile& p) { return DisplayLottery{{apply_threshold(tau, p), 1.0}}; };
}

inline StageRule no_intervention_stage_rule() {
  return [](const PriceProfile& p) { return DisplayLottery{{DisplaySet::all(p.size()), 1.0}}; };
}

inline StageRule pdp_stage_rule() {
  return [](const PriceProfile& p) {
    if (p[0] < p[1]) return DisplayLottery{{DisplaySet::only(0), 1.0}};
    if (p[1] < p[0]) return DisplayLottery{{DisplaySet::only(1), 1.0}};
    return DisplayLottery{{DisplaySet::only(0), 0.5}, {DisplaySet::only(1), 0.5}};
  };
}

}  // namespace collusionlab
