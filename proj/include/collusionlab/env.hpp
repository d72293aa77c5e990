#pragma once

// Stackelberg episodes: an equilibrium phase in which sellers adapt to the
// platform's (episode-fixed) rule with zero platform reward, followed by a
// short reward phase scored by consumer surplus.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "collusionlab/core.hpp"
#include "collusionlab/policy.hpp"
#include "collusionlab/simulation.hpp"

namespace collusionlab {

enum class RestartMode { Sync, Async };
enum class RewardFn { Surplus, Proxy };
enum class ActionSelect { Sample, Greedy };
enum class Phase : std::uint8_t { Equilibrium = 0, Reward = 1 };

struct EpisodeConfig {
  std::uint64_t n_e = 50'000;
  std::uint64_t n_r = 30;
  TrainingMode mode = TrainingMode::Wild;
  RestartMode restart = RestartMode::Sync;
  double random_price_prob = 0.0;
  RewardFn reward = RewardFn::Surplus;
  bool action_cache = true;
  bool perturb_both = true;  // false: one uniformly chosen seller is re-drawn
  std::uint64_t full_state_stride = 100;  // offline critic snapshots

  std::uint64_t length() const { return n_e + n_r; }

  void validate() const {
    if (n_e < 1 || n_r < 1) throw ConfigError("episode: n_e and n_r must be >= 1");
    if (!(random_price_prob >= 0.0 && random_price_prob <= 1.0))
      throw ConfigError("episode: random_price_prob must be in [0, 1]");
    if (full_state_stride < 1) throw ConfigError("episode: full_state_stride must be >= 1");
  }

  // Combinations outside the standard protocol that still run.
  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (mode == TrainingMode::Offline && restart == RestartMode::Async)
      w.emplace_back("offline training with asynchronous restarts is outside the standard protocol");
    return w;
  }
};

struct StepRecord {
  StateIndex obs = 0;
  StateIndex profile = 0;
  double reward = 0.0;
  double surplus = 0.0;  // true U, logged even when the reward is the proxy
  std::uint32_t displayed = 0;
  std::uint8_t action = 0;
  Phase phase = Phase::Equilibrium;
  bool perturbed = false;
};

struct EpisodeTrace {
  std::vector<StepRecord> steps;
  double total_return = 0.0;
  // Offline only: (step, features) snapshots every full_state_stride steps
  // and at every reward step.
  std::vector<std::uint64_t> snapshot_steps;
  std::vector<std::vector<double>> snapshots;

  double mean_reward_phase_surplus() const {
    double s = 0.0;
    std::size_t k = 0;
    for (const auto& r : steps)
      if (r.phase == Phase::Reward) {
        s += r.surplus;
        ++k;
      }
    return k ? s / static_cast<double>(k) : 0.0;
  }

  double mean_reward_phase_displayed() const {
    double s = 0.0;
    std::size_t k = 0;
    for (const auto& r : steps)
      if (r.phase == Phase::Reward) {
        s += std::popcount(r.displayed);
        ++k;
      }
    return k ? s / static_cast<double>(k) : 0.0;
  }

  // Index into `snapshots` governing step t (latest snapshot at or before t).
  std::size_t snapshot_for(std::uint64_t t) const {
    auto it = std::upper_bound(snapshot_steps.begin(), snapshot_steps.end(), t);
    return it == snapshot_steps.begin() ? 0 : static_cast<std::size_t>(it - snapshot_steps.begin() - 1);
  }
};

// Observation-to-action map valid for one episode.
class ActionCache {
 public:
  explicit ActionCache(int categories = 0) : actions_(static_cast<std::size_t>(categories), -1) {}
  void clear() { std::fill(actions_.begin(), actions_.end(), -1); }
  void resize(int categories) { actions_.assign(static_cast<std::size_t>(categories), -1); }
  int lookup(Observation o) const { return actions_[o.category]; }
  void store(Observation o, int a) { actions_[o.category] = a; }

 private:
  std::vector<int> actions_;
};

inline int choose_action(const LeaderPolicy& policy, Observation o, ActionSelect select, Rng& rng) {
  return select == ActionSelect::Greedy ? policy.greedy_action(o) : policy.sample_action(o, rng);
}

// First encounter of `o` decides; later encounters replay the stored action.
inline int cached_action(ActionCache& cache, const LeaderPolicy& policy, Observation o, ActionSelect select, Rng& rng) {
  const int hit = cache.lookup(o);
  if (hit >= 0) return hit;
  const int a = choose_action(policy, o, select, rng);
  cache.store(o, a);
  return a;
}

class StackelbergEnv {
 public:
  StackelbergEnv(const MarketModel& model, const SellerParams& seller_params, EpisodeConfig config, std::uint64_t seed)
      : model_(&model), config_(config), sellers_(model, seller_params, seed), rng_(make_rng(seed, 7)) {
    config_.validate();
  }

  const MarketModel& model() const { return *model_; }
  const EpisodeConfig& config() const { return config_; }
  SellerPool& sellers() { return sellers_; }
  const SellerPool& sellers() const { return sellers_; }
  Rng& rng() { return rng_; }

  // Number of times seller-private state was read (wild-mode firewall).
  std::uint64_t full_state_reads() const { return full_state_reads_; }

  FullState full_state(Observation o, int obs_categories) {
    ++full_state_reads_;
    const auto& m = *model_;
    FullState x{o, {}};
    x.features.reserve(full_state_size(obs_categories, m.sellers(), static_cast<int>(m.profiles()), m.prices_per_seller()));
    for (int c = 0; c < obs_categories; ++c) x.features.push_back(c == static_cast<int>(o.category) ? 1.0 : 0.0);
    const double delta = sellers_.size() ? sellers_[0].params().delta : 0.0;
    const double scale = m.rho_max() > 0.0 ? (1.0 - delta) / m.rho_max() : 1.0;
    for (const auto& s : sellers_.learners())
      for (double v : s.q_matrix()) x.features.push_back(v * scale);
    for (const auto& s : sellers_.learners()) x.features.push_back(s.exploration_rate());
    return x;
  }

  StateIndex random_profile() { return uniform_index(rng_, model_->profiles()); }

  // One Stackelberg episode under `policy`.
  EpisodeTrace run_episode(const LeaderPolicy& policy, ActionSelect select, bool intra_episode_restarts = true) {
    const auto& m = *model_;
    const bool offline = config_.mode == TrainingMode::Offline;
    const bool async = config_.restart == RestartMode::Async;
    EpisodeTrace trace;
    trace.steps.resize(config_.length());
    if (!async) sellers_.restart_all();
    sellers_.set_state(random_profile());
    sellers_.set_paused(false);
    sellers_.set_frozen(false);
    cache_.resize(policy.obs_categories());
    const double restart_prob = 1.0 / static_cast<double>(config_.length());

    for (std::uint64_t t = 0; t < config_.length(); ++t) {
      const bool reward_phase = t >= config_.n_e;
      if (t == config_.n_e) {
        sellers_.set_paused(true);
        if (offline) sellers_.set_frozen(true);
      }
      StepRecord& rec = trace.steps[t];
      StateIndex profile = sellers_.choose_prices();
      if (reward_phase && config_.random_price_prob > 0.0 && uniform01(rng_) < config_.random_price_prob) {
        profile = perturb(profile);
        rec.perturbed = true;
      }
      const Observation o = policy.observe(profile);
      if (offline && (t % config_.full_state_stride == 0 || reward_phase)) {
        trace.snapshot_steps.push_back(t);
        trace.snapshots.push_back(full_state(o, policy.obs_categories()).features);
      }
      const int action = config_.action_cache ? cached_action(cache_, policy, o, select, rng_)
                                              : choose_action(policy, o, select, rng_);
      const DisplaySet set = m.threshold_display(action, profile);
      rec.phase = reward_phase ? Phase::Reward : Phase::Equilibrium;
      rec.obs = o.category;
      rec.action = static_cast<std::uint8_t>(action);
      rec.profile = profile;
      rec.displayed = set.mask();
      rec.surplus = m.surplus(profile, set);
      if (reward_phase) {
        rec.reward = config_.reward == RewardFn::Surplus ? rec.surplus : m.proxy(profile, set);
        trace.total_return += rec.reward;
      }
      sellers_.learn(m, profile, set);
      if (async && !reward_phase && intra_episode_restarts) {
        for (auto& s : sellers_.learners())
          if (uniform01(rng_) < restart_prob) s.restart_exploration();
      }
    }
    sellers_.set_paused(false);
    sellers_.set_frozen(false);
    return trace;
  }

  // One step of the decentralized (no commitment) protocol: the platform
  // picks a fresh action every step and is paid U every step; sellers restart
  // exploration every episode-length steps.
  StepRecord step_decentralized(const LeaderPolicy& policy) {
    const auto& m = *model_;
    if (decentralized_clock_ % config_.length() == 0) {
      sellers_.restart_all();
      if (decentralized_clock_ == 0) sellers_.set_state(random_profile());
    }
    ++decentralized_clock_;
    StepRecord rec;
    const StateIndex profile = sellers_.choose_prices();
    const Observation o = policy.observe(profile);
    const int action = policy.sample_action(o, rng_);
    const DisplaySet set = m.threshold_display(action, profile);
    rec.obs = o.category;
    rec.action = static_cast<std::uint8_t>(action);
    rec.profile = profile;
    rec.displayed = set.mask();
    rec.surplus = m.surplus(profile, set);
    rec.reward = config_.reward == RewardFn::Surplus ? rec.surplus : m.proxy(profile, set);
    sellers_.learn(m, profile, set);
    return rec;
  }

  std::uint64_t decentralized_clock() const { return decentralized_clock_; }

 private:
  StateIndex perturb(StateIndex profile) {
    const auto& m = *model_;
    if (config_.perturb_both) return random_profile();
    auto idx = decode_profile(profile, m.sellers(), m.prices_per_seller());
    const int who = static_cast<int>(uniform_index(rng_, static_cast<std::uint32_t>(m.sellers())));
    idx[static_cast<std::size_t>(who)] = static_cast<int>(uniform_index(rng_, static_cast<std::uint32_t>(m.prices_per_seller())));
    return encode_profile(idx, m.prices_per_seller());
  }

  const MarketModel* model_;
  EpisodeConfig config_;
  SellerPool sellers_;
  Rng rng_;
  ActionCache cache_;
  std::uint64_t full_state_reads_ = 0;
  std::uint64_t decentralized_clock_ = 0;
};

// JSONL: {t, phase, prices, tau, displayed, reward} per step.
inline void write_trace_jsonl(const EpisodeTrace& trace, const MarketModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const auto& r = trace.steps[t];
    nlohmann::json j;
    j["t"] = t;
    j["phase"] = r.phase == Phase::Reward ? "reward" : "equilibrium";
    j["prices"] = model.prices(r.profile).p;
    j["tau"] = model.thresholds()[r.action];
    j["displayed"] = DisplaySet(r.displayed).members(model.sellers());
    j["reward"] = r.reward;
    out << j.dump() << '\n';
  }
}

}  // namespace collusionlab
