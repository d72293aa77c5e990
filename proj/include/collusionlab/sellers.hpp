#pragma once

// Tabular Q-learning sellers. A seller's state is the previous joint price
// profile (encoded as an integer), its action an index into the price grid.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "collusionlab/core.hpp"

namespace collusionlab {

using StateIndex = std::uint32_t;

// Joint profile index: sum_i idx_i * m^i (seller 0 is the least significant
// digit).
inline StateIndex encode_profile(std::span<const int> idx, int m) {
  StateIndex s = 0;
  StateIndex scale = 1;
  for (int k : idx) {
    s += static_cast<StateIndex>(k) * scale;
    scale *= static_cast<StateIndex>(m);
  }
  return s;
}

inline std::vector<int> decode_profile(StateIndex s, int n, int m) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    idx[i] = static_cast<int>(s % static_cast<StateIndex>(m));
    s /= static_cast<StateIndex>(m);
  }
  return idx;
}

inline StateIndex profile_count(int n, int m) {
  StateIndex c = 1;
  for (int i = 0; i < n; ++i) c *= static_cast<StateIndex>(m);
  return c;
}

enum class QInit {
  Uniform,       // U[0, rho_max / (1 - delta)]
  RivalAverage,  // profit against a uniformly random rival, discounted forever
};

struct SellerParams {
  double alpha = 0.15;
  double delta = 0.95;
  double beta = 1e-5;
  QInit init = QInit::Uniform;
};

class SellerLearner {
 public:
  SellerLearner(int states, int actions, SellerParams params, Rng rng)
      : states_(states), actions_(actions), params_(params), rng_(std::move(rng)),
        q_(static_cast<std::size_t>(states) * static_cast<std::size_t>(actions), 0.0) {}

  int states() const { return states_; }
  int actions() const { return actions_; }
  const SellerParams& params() const { return params_; }

  double q(StateIndex s, int a) const { return q_[index(s, a)]; }
  double& q(StateIndex s, int a) { return q_[index(s, a)]; }
  std::span<const double> q_matrix() const { return q_; }
  std::span<double> q_matrix() { return q_; }

  std::uint64_t t_local() const { return t_local_; }
  void set_t_local(std::uint64_t t) { t_local_ = t; }
  double exploration_rate() const { return std::exp(-params_.beta * static_cast<double>(t_local_)); }

  bool frozen = false;
  bool explore_paused = false;

  // Updates attempted while frozen (ignored).
  std::uint64_t frozen_update_attempts() const { return frozen_updates_; }

  // Lowest index among maximizers.
  int greedy_action(StateIndex s) const {
    const double* row = &q_[index(s, 0)];
    int best = 0;
    for (int a = 1; a < actions_; ++a)
      if (row[a] > row[best]) best = a;
    return best;
  }

  double max_q(StateIndex s) const {
    const double* row = &q_[index(s, 0)];
    double best = row[0];
    for (int a = 1; a < actions_; ++a) best = std::max(best, row[a]);
    return best;
  }

  // Epsilon-greedy choice. Does not advance the exploration clock; the
  // environment calls tick() once per step.
  int select_price(StateIndex s) {
    if (!explore_paused && uniform01(rng_) < exploration_rate())
      return static_cast<int>(uniform_index(rng_, static_cast<std::uint32_t>(actions_)));
    return greedy_action(s);
  }

  void tick() { ++t_local_; }

  // q[s,a] <- (1 - alpha) q[s,a] + alpha (r + delta max_a' q[s',a'])
  void update_q(StateIndex s, int a, double reward, StateIndex s_next) {
    if (frozen) {
      ++frozen_updates_;
      return;
    }
    const double target = reward + params_.delta * max_q(s_next);
    double& entry = q_[index(s, a)];
    entry = (1.0 - params_.alpha) * entry + params_.alpha * target;
  }

  void restart_exploration() { t_local_ = 0; }

  Rng& rng() { return rng_; }

  std::uint64_t q_hash() const { return fnv1a_pod(q_.data(), q_.size()); }

  // state,action,value rows.
  void write_q_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out.precision(17);
    out << "state,action,value\n";
    for (int s = 0; s < states_; ++s)
      for (int a = 0; a < actions_; ++a) out << s << ',' << a << ',' << q(static_cast<StateIndex>(s), a) << '\n';
  }

 private:
  std::size_t index(StateIndex s, int a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(a);
  }

  int states_;
  int actions_;
  SellerParams params_;
  Rng rng_;
  std::vector<double> q_;
  std::uint64_t t_local_ = 0;
  std::uint64_t frozen_updates_ = 0;
};

// Fresh learner. `rho_max` is the largest single-period profit on the grid;
// `rival_average[a]` (RivalAverage mode only) is the expected profit of action
// a against a uniformly random rival.
inline SellerLearner init_learner(int states, int actions, const SellerParams& params, double rho_max,
                                  std::span<const double> rival_average, Rng rng) {
  SellerLearner learner(states, actions, params, std::move(rng));
  auto q = learner.q_matrix();
  switch (params.init) {
    case QInit::Uniform: {
      const double hi = rho_max / (1.0 - params.delta);
      for (double& v : q) v = uniform01(learner.rng()) * hi;
      break;
    }
    case QInit::RivalAverage:
      if (static_cast<int>(rival_average.size()) != actions)
        throw DomainError("init_learner: rival_average must have one entry per action");
      for (int s = 0; s < states; ++s)
        for (int a = 0; a < actions; ++a)
          learner.q(static_cast<StateIndex>(s), a) = rival_average[a] / (1.0 - params.delta);
      break;
  }
  return learner;
}

// Greedy action per state for one seller.
using GreedyTable = std::vector<int>;

inline GreedyTable greedy_table(const SellerLearner& learner) {
  GreedyTable t(static_cast<std::size_t>(learner.states()));
  for (int s = 0; s < learner.states(); ++s) t[s] = learner.greedy_action(static_cast<StateIndex>(s));
  return t;
}

// history[k][i] is seller i's greedy table after step k. True iff the last
// `window` steps left every table unchanged.
inline bool has_converged(std::span<const std::vector<GreedyTable>> history, std::size_t window) {
  if (history.size() < window + 1) return false;
  const auto& ref = history.back();
  for (std::size_t k = history.size() - 1 - window; k < history.size(); ++k)
    if (history[k] != ref) return false;
  return true;
}

// Incremental form of has_converged for long runs: after each Q update the
// caller reports the touched (seller, state) and then calls step().
class ConvergenceTracker {
 public:
  explicit ConvergenceTracker(std::span<const SellerLearner> sellers) {
    for (const auto& s : sellers) tables_.push_back(greedy_table(s));
  }

  void touched(int seller, StateIndex s, const SellerLearner& learner) {
    int& cur = tables_[static_cast<std::size_t>(seller)][s];
    const int now = learner.greedy_action(s);
    if (now != cur) {
      cur = now;
      changed_ = true;
    }
  }

  void step() {
    stable_ = changed_ ? 0 : stable_ + 1;
    changed_ = false;
  }

  std::uint64_t stable_steps() const { return stable_; }
  bool converged(std::uint64_t window) const { return stable_ >= window; }
  const std::vector<GreedyTable>& tables() const { return tables_; }

 private:
  std::vector<GreedyTable> tables_;
  std::uint64_t stable_ = 0;
  bool changed_ = false;
};

}  // namespace collusionlab
