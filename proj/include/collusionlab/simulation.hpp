#pragma once

// Grid-indexed market tables and the seller population stepper shared by the
// baselines, the Stackelberg episodes and the decentralized baseline.

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "collusionlab/core.hpp"
#include "collusionlab/market.hpp"
#include "collusionlab/rules.hpp"
#include "collusionlab/sellers.hpp"

namespace collusionlab {

// Everything about a (params, grid) pair that the inner loop needs, tabulated
// per joint profile index and display mask.
class MarketModel {
 public:
  MarketModel(MarketParams params, PriceGrid grid)
      : params_(std::move(params)), grid_(std::move(grid)), thresholds_(grid_) {
    params_.validate();
    if (params_.n > 8) throw DomainError("market model: at most 8 sellers are tabulated");
    n_ = params_.n;
    m_ = grid_.size();
    profiles_ = profile_count(n_, m_);
    masks_ = 1u << n_;
    profit_.resize(static_cast<std::size_t>(profiles_) * masks_ * static_cast<std::size_t>(n_));
    surplus_.resize(static_cast<std::size_t>(profiles_) * masks_);
    proxy_.resize(static_cast<std::size_t>(profiles_) * masks_);
    threshold_mask_.resize(static_cast<std::size_t>(thresholds_.size()) * profiles_);
    for (StateIndex s = 0; s < profiles_; ++s) {
      const PriceProfile p = prices(s);
      for (std::uint32_t mask = 0; mask < masks_; ++mask) {
        const DisplaySet set(mask);
        const auto d = demand(p, set, params_);
        for (int i = 0; i < n_; ++i) profit_[(s * masks_ + mask) * n_ + i] = (p[i] - params_.cost[i]) * d[i];
        surplus_[s * masks_ + mask] = consumer_surplus(p, set, params_);
        proxy_[s * masks_ + mask] = proxy_surplus(p, set, params_, grid_);
      }
      for (int k = 0; k < thresholds_.size(); ++k)
        threshold_mask_[static_cast<std::size_t>(k) * profiles_ + s] = apply_threshold(thresholds_[k], p).mask();
    }
    rho_max_ = *std::max_element(profit_.begin(), profit_.end());
    rival_average_.assign(static_cast<std::size_t>(m_), 0.0);
    if (n_ >= 2) {
      // seller 0's profit against uniformly random rivals, everyone displayed
      for (StateIndex s = 0; s < profiles_; ++s)
        rival_average_[s % m_] += profit(s, DisplaySet::all(n_), 0);
      for (double& v : rival_average_) v /= static_cast<double>(profiles_ / m_);
    } else {
      for (int a = 0; a < m_; ++a) rival_average_[a] = profit(static_cast<StateIndex>(a), DisplaySet::all(1), 0);
    }
  }

  const MarketParams& params() const { return params_; }
  const PriceGrid& grid() const { return grid_; }
  const ThresholdSet& thresholds() const { return thresholds_; }
  int sellers() const { return n_; }
  int prices_per_seller() const { return m_; }
  StateIndex profiles() const { return profiles_; }
  double rho_max() const { return rho_max_; }
  std::span<const double> rival_average() const { return rival_average_; }

  PriceProfile prices(StateIndex s) const {
    const auto idx = decode_profile(s, n_, m_);
    PriceProfile p;
    for (int k : idx) p.p.push_back(grid_[k]);
    return p;
  }

  int price_index(StateIndex s, int seller) const {
    for (int i = 0; i < seller; ++i) s /= static_cast<StateIndex>(m_);
    return static_cast<int>(s % static_cast<StateIndex>(m_));
  }

  double profit(StateIndex s, DisplaySet set, int seller) const {
    return profit_[(s * masks_ + set.mask()) * n_ + seller];
  }
  double surplus(StateIndex s, DisplaySet set) const { return surplus_[s * masks_ + set.mask()]; }
  double proxy(StateIndex s, DisplaySet set) const { return proxy_[s * masks_ + set.mask()]; }

  DisplaySet threshold_display(int k, StateIndex s) const {
    return DisplaySet(threshold_mask_[static_cast<std::size_t>(k) * profiles_ + s]);
  }

  // Threshold index that displays exactly the same sellers as `tau` on every
  // grid profile.
  int threshold_class(Money tau) const {
    int k = 0;
    for (int j = 0; j < m_; ++j)
      if (grid_[j] <= tau) k = j + 1;
    return k;
  }

 private:
  MarketParams params_;
  PriceGrid grid_;
  ThresholdSet thresholds_;
  int n_ = 0;
  int m_ = 0;
  StateIndex profiles_ = 0;
  std::uint32_t masks_ = 0;
  std::vector<double> profit_;
  std::vector<double> surplus_;
  std::vector<double> proxy_;
  std::vector<std::uint32_t> threshold_mask_;
  double rho_max_ = 0.0;
  std::vector<double> rival_average_;
};

// The sellers plus the shared state (last joint profile).
class SellerPool {
 public:
  SellerPool(const MarketModel& model, const SellerParams& params, std::uint64_t seed) : m_(model.prices_per_seller()) {
    for (int i = 0; i < model.sellers(); ++i)
      sellers_.push_back(init_learner(static_cast<int>(model.profiles()), m_, params, model.rho_max(),
                                      model.rival_average(), make_rng(seed, 1000 + static_cast<std::uint64_t>(i))));
  }

  int size() const { return static_cast<int>(sellers_.size()); }
  SellerLearner& operator[](int i) { return sellers_[static_cast<std::size_t>(i)]; }
  const SellerLearner& operator[](int i) const { return sellers_[static_cast<std::size_t>(i)]; }
  std::span<const SellerLearner> learners() const { return sellers_; }
  std::span<SellerLearner> learners() { return sellers_; }

  StateIndex state() const { return state_; }
  void set_state(StateIndex s) { state_ = s; }

  // Every seller quotes a price given the current state.
  StateIndex choose_prices() {
    StateIndex profile = 0;
    StateIndex scale = 1;
    for (auto& s : sellers_) {
      profile += static_cast<StateIndex>(s.select_price(state_)) * scale;
      scale *= static_cast<StateIndex>(m_);
    }
    return profile;
  }

  // Profit feedback for the quoted profile, one tick of every exploration
  // clock, and the state moves to the quoted profile.
  void learn(const MarketModel& model, StateIndex profile, DisplaySet set, ConvergenceTracker* tracker = nullptr) {
    StateIndex rest = profile;
    for (int i = 0; i < size(); ++i) {
      const int action = static_cast<int>(rest % static_cast<StateIndex>(m_));
      rest /= static_cast<StateIndex>(m_);
      auto& s = sellers_[static_cast<std::size_t>(i)];
      s.update_q(state_, action, model.profit(profile, set, i), profile);
      if (tracker) tracker->touched(i, state_, s);
      s.tick();
    }
    if (tracker) tracker->step();
    state_ = profile;
  }

  void restart_all() {
    for (auto& s : sellers_) s.restart_exploration();
  }
  void set_paused(bool paused) {
    for (auto& s : sellers_) s.explore_paused = paused;
  }
  void set_frozen(bool frozen) {
    for (auto& s : sellers_) s.frozen = frozen;
  }

  std::uint64_t q_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& s : sellers_) h = fnv1a_pod(s.q_matrix().data(), s.q_matrix().size(), h);
    return h;
  }

 private:
  int m_;
  std::vector<SellerLearner> sellers_;
  StateIndex state_ = 0;
};

}  // namespace collusionlab
