#pragma once

// Advantage actor-critic for the platform. In Stackelberg mode there is one
// parameter update per episode, taken after the reward phase, over every step
// of the episode. In decentralized mode the platform is an ordinary n-step
// A2C learner on the per-step surplus stream.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "collusionlab/core.hpp"
#include "collusionlab/env.hpp"
#include "collusionlab/policy.hpp"
#include "collusionlab/simulation.hpp"

namespace collusionlab {

enum class OptimizerKind { Sgd, RmsProp };

struct TrainConfig {
  std::uint64_t total_steps = 50'000'000;
  EpisodeConfig episode;
  ObservationMode observation = ObservationMode::StateBased;
  OptimizerKind optimizer = OptimizerKind::RmsProp;
  double actor_lr = 0.1;
  double critic_lr = 0.5;
  double ent_coef = 0.0;
  bool ent_anneal = true;  // linear decay to 0 over training
  double vf_coef = 0.5;
  double gamma = 1.0;
  double max_grad_norm = 0.5;
  double rms_alpha = 0.99;
  double rms_eps = 1e-5;
  int critic_hidden = 64;
  std::uint64_t eval_every = 100'000;
  std::uint64_t checkpoint_every = 10'000'000;  // 0 disables intermediate checkpoints
  std::uint64_t decentralized_update_every = 30;
  double decentralized_gamma = 0.99;
  std::uint64_t seed = 0;

  void validate() const {
    episode.validate();
    if (total_steps < episode.length()) throw ConfigError("train: total_steps must cover one episode");
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("train: learning rates must be > 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("train: gamma must be in [0, 1]");
    if (!(max_grad_norm > 0.0)) throw ConfigError("train: max_grad_norm must be > 0");
    if (eval_every == 0) throw ConfigError("train: eval_every must be > 0");
    if (decentralized_update_every == 0) throw ConfigError("train: decentralized_update_every must be > 0");
  }
};

// G_t = sum_{t' >= t} gamma^(t'-t) r_t'
inline std::vector<double> compute_returns(const EpisodeTrace& trace, double gamma) {
  std::vector<double> g(trace.steps.size());
  double acc = 0.0;
  for (std::size_t k = trace.steps.size(); k-- > 0;) {
    acc = trace.steps[k].reward + gamma * acc;
    g[k] = acc;
  }
  return g;
}

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, double lr, std::size_t size, double alpha = 0.99, double eps = 1e-5)
      : kind_(kind), lr_(lr), alpha_(alpha), eps_(eps), sq_(kind == OptimizerKind::RmsProp ? size : 0, 0.0) {}

  // Descent step: params -= lr * direction(grad).
  void step(std::span<double> params, std::span<const double> grad) {
    if (kind_ == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
      return;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      sq_[i] = alpha_ * sq_[i] + (1.0 - alpha_) * grad[i] * grad[i];
      params[i] -= lr_ * grad[i] / (std::sqrt(sq_[i]) + eps_);
    }
  }

  double lr() const { return lr_; }

 private:
  OptimizerKind kind_ = OptimizerKind::Sgd;
  double lr_ = 0.0;
  double alpha_ = 0.99;
  double eps_ = 1e-5;
  std::vector<double> sq_;
};

// One episode's worth of (observation, action, return, value) tuples. Offline
// batches also carry the full-state snapshot governing each step.
struct UpdateBatch {
  std::vector<StateIndex> obs;
  std::vector<std::uint8_t> action;
  std::vector<double> returns;
  std::vector<double> values;
  std::vector<std::uint32_t> snapshot;              // offline only
  std::vector<std::vector<double>> snapshots;       // offline only

  std::size_t size() const { return obs.size(); }
};

inline UpdateBatch make_batch(EpisodeTrace trace, const LeaderPolicy& policy, double gamma) {
  UpdateBatch b;
  const std::size_t n = trace.steps.size();
  b.returns = compute_returns(trace, gamma);
  b.obs.resize(n);
  b.action.resize(n);
  b.values.resize(n);
  const bool offline = policy.shape().training == TrainingMode::Offline;
  std::vector<double> snap_values;
  if (offline) {
    if (trace.snapshots.empty()) throw DomainError("make_batch: offline batch without full-state snapshots");
    b.snapshot.resize(n);
    b.snapshots = std::move(trace.snapshots);
    for (const auto& x : b.snapshots) snap_values.push_back(policy.mlp().forward(x));
  }
  for (std::size_t t = 0; t < n; ++t) {
    b.obs[t] = trace.steps[t].obs;
    b.action[t] = trace.steps[t].action;
    if (offline) {
      b.snapshot[t] = static_cast<std::uint32_t>(trace.snapshot_for(t));
      b.values[t] = snap_values[b.snapshot[t]];
    } else {
      b.values[t] = policy.value(Observation{b.obs[t]});
    }
  }
  return b;
}

struct UpdateCoefs {
  double ent_coef = 0.0;
  double vf_coef = 0.5;
  double max_grad_norm = std::numeric_limits<double>::infinity();
};

struct UpdateStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
};

// Gradients of the mean-over-batch losses
//   actor:  -A_t log pi(a_t|o_t) - ent_coef H(pi(.|o_t))
//   critic: vf_coef (V(x_t) - G_t)^2
// with A_t = G_t - V(x_t) from the pre-update critic.
struct A2cGradient {
  std::vector<double> actor;
  std::vector<double> critic;
  UpdateStats stats;
};

inline A2cGradient a2c_gradient(const LeaderPolicy& policy, const UpdateBatch& batch, const UpdateCoefs& coefs) {
  const int k = policy.actions();
  const int cats = policy.obs_categories();
  const auto n = static_cast<double>(batch.size());
  A2cGradient g;
  g.actor.assign(policy.logits().size(), 0.0);
  g.critic.assign(policy.critic_params().size(), 0.0);

  // Sufficient statistics per observation category.
  std::vector<double> count(static_cast<std::size_t>(cats), 0.0);
  std::vector<double> adv_sum(static_cast<std::size_t>(cats), 0.0);
  std::vector<double> adv_by_action(static_cast<std::size_t>(cats) * k, 0.0);
  std::vector<double> value_err(policy.shape().training == TrainingMode::Wild ? cats : batch.snapshots.size(), 0.0);
  std::vector<std::vector<double>> logp(static_cast<std::size_t>(cats));
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const StateIndex o = batch.obs[t];
    const double adv = batch.returns[t] - batch.values[t];
    count[o] += 1.0;
    adv_sum[o] += adv;
    adv_by_action[static_cast<std::size_t>(o) * k + batch.action[t]] += adv;
    if (logp[o].empty()) {
      logp[o] = policy.action_distribution(Observation{o});
      for (double& v : logp[o]) v = std::log(v);
    }
    actor_loss -= adv * logp[o][batch.action[t]];
    critic_loss += adv * adv;
    const std::size_t slot = batch.snapshot.empty() ? o : batch.snapshot[t];
    value_err[slot] += batch.values[t] - batch.returns[t];
  }

  double entropy = 0.0;
  for (int o = 0; o < cats; ++o) {
    if (count[o] == 0.0) continue;
    const auto pi = policy.action_distribution(Observation{static_cast<StateIndex>(o)});
    double h = 0.0;
    for (double p : pi) h -= p * std::log(p);
    entropy += count[o] * h;
    double* row = &g.actor[static_cast<std::size_t>(o) * k];
    for (int j = 0; j < k; ++j) {
      const double pg = adv_by_action[static_cast<std::size_t>(o) * k + j] - pi[j] * adv_sum[o];
      const double dh = -pi[j] * (std::log(pi[j]) + h);
      row[j] = -(pg + coefs.ent_coef * count[o] * dh) / n;
    }
  }

  if (policy.shape().training == TrainingMode::Wild) {
    for (int o = 0; o < cats; ++o) g.critic[o] = coefs.vf_coef * 2.0 * value_err[o] / n;
  } else {
    for (std::size_t s = 0; s < batch.snapshots.size(); ++s)
      if (value_err[s] != 0.0) policy.mlp().backward(batch.snapshots[s], coefs.vf_coef * 2.0 * value_err[s] / n, g.critic);
  }

  double sq = 0.0;
  for (double v : g.actor) sq += v * v;
  for (double v : g.critic) sq += v * v;
  g.stats.grad_norm = std::sqrt(sq);
  g.stats.actor_loss = actor_loss / n - coefs.ent_coef * entropy / n;
  g.stats.critic_loss = critic_loss / n;
  g.stats.entropy = entropy / n;
  return g;
}

inline UpdateStats a2c_update(LeaderPolicy& policy, const UpdateBatch& batch, const UpdateCoefs& coefs,
                              Optimizer& actor_opt, Optimizer& critic_opt) {
  if (batch.size() == 0) throw DomainError("a2c_update: empty batch");
  A2cGradient g = a2c_gradient(policy, batch, coefs);
  if (!std::isfinite(g.stats.actor_loss) || !std::isfinite(g.stats.critic_loss) || !std::isfinite(g.stats.grad_norm)) {
    std::ostringstream os;
    os << "a2c_update: non-finite loss (actor " << g.stats.actor_loss << ", critic " << g.stats.critic_loss
       << ", grad norm " << g.stats.grad_norm << ", batch " << batch.size() << ")";
    throw NumericError(os.str());
  }
  if (g.stats.grad_norm > coefs.max_grad_norm) {
    const double s = coefs.max_grad_norm / g.stats.grad_norm;
    for (double& v : g.actor) v *= s;
    for (double& v : g.critic) v *= s;
  }
  actor_opt.step(policy.logits(), g.actor);
  critic_opt.step(policy.critic_params(), g.critic);
  return g.stats;
}

// ---------------------------------------------------------------------------
// Evaluation and training loops.

struct EvalRecord {
  std::uint64_t env_steps = 0;
  double mean_cs = 0.0;
  StateIndex final_profile = 0;
  double displayed_mean = 0.0;
  std::vector<double> displayed_by_profile;  // greedy display count per joint profile
};

// Number of sellers the greedy policy displays at every grid profile.
inline std::vector<double> displayed_counts(const LeaderPolicy& policy, const MarketModel& model) {
  std::vector<double> out(model.profiles());
  for (StateIndex s = 0; s < model.profiles(); ++s)
    out[s] = model.threshold_display(policy.greedy_action(policy.observe(s)), s).size();
  return out;
}

// One greedy episode with fresh sellers, no intra-episode restarts and no
// price perturbation. Leaves the caller's training state untouched.
inline EvalRecord evaluate(const LeaderPolicy& policy, const MarketModel& model, const SellerParams& sellers,
                           EpisodeConfig config, std::uint64_t seed) {
  config.random_price_prob = 0.0;
  config.restart = RestartMode::Sync;
  config.action_cache = true;
  StackelbergEnv env(model, sellers, config, seed);
  const EpisodeTrace trace = env.run_episode(policy, ActionSelect::Greedy, false);
  EvalRecord r;
  r.mean_cs = trace.mean_reward_phase_surplus();
  r.final_profile = trace.steps.back().profile;
  r.displayed_mean = trace.mean_reward_phase_displayed();
  r.displayed_by_profile = displayed_counts(policy, model);
  return r;
}

struct MetricsRow {
  std::uint64_t episode = 0;
  std::uint64_t env_steps = 0;
  double mean_reward_phase_cs = 0.0;
  std::optional<double> eval_cs;
  double entropy = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  StateIndex greedy_profile = 0;
  double displayed_count_mean = 0.0;
};

struct TrainResult {
  LeaderPolicy policy;
  std::vector<MetricsRow> rows;
  std::vector<EvalRecord> evals;
  std::vector<std::filesystem::path> checkpoints;
  std::uint64_t full_state_reads = 0;
};

inline std::uint64_t eval_seed(std::uint64_t seed, std::uint64_t index) {
  return (seed + 1) * 0x9e3779b97f4a7c15ull ^ (index + 0x51ed27);
}

class Trainer {
 public:
  // Called after every episode (or decentralized block) with the new row.
  using Observer = std::function<void(const MetricsRow&)>;

  Trainer(const MarketModel& model, const SellerParams& sellers, TrainConfig config)
      : model_(&model), sellers_(sellers), cfg_(std::move(config)) {
    cfg_.validate();
    Rng init = make_rng(cfg_.seed, 11);
    PolicyShape shape;
    shape.observation = cfg_.observation;
    shape.training = cfg_.episode.mode;
    shape.obs_categories = cfg_.observation == ObservationMode::NoState ? 1 : static_cast<int>(model.profiles());
    shape.actions = model.thresholds().size();
    shape.critic_hidden = cfg_.critic_hidden;
    shape.full_state_inputs = static_cast<int>(full_state_size(shape.obs_categories, model.sellers(),
                                                               static_cast<int>(model.profiles()),
                                                               model.prices_per_seller()));
    policy_ = LeaderPolicy(shape, init);
    actor_opt_ = Optimizer(cfg_.optimizer, cfg_.actor_lr, policy_.logits().size(), cfg_.rms_alpha, cfg_.rms_eps);
    critic_opt_ = Optimizer(cfg_.optimizer, cfg_.critic_lr, policy_.critic_params().size(), cfg_.rms_alpha, cfg_.rms_eps);
  }

  const LeaderPolicy& policy() const { return policy_; }
  LeaderPolicy& policy() { return policy_; }
  const TrainConfig& config() const { return cfg_; }

  void set_observer(Observer f) { observer_ = std::move(f); }
  void set_checkpoint_dir(std::filesystem::path dir) { ckpt_dir_ = std::move(dir); }
  // Extra fields stored under "meta" in every checkpoint.
  void set_checkpoint_meta(nlohmann::json meta) { ckpt_meta_ = std::move(meta); }

  TrainResult train() {
    StackelbergEnv env(*model_, sellers_, cfg_.episode, cfg_.seed);
    TrainResult out;
    const std::uint64_t len = cfg_.episode.length();
    std::uint64_t steps = 0;
    std::uint64_t episode = 0;
    while (steps + len <= cfg_.total_steps) {
      EpisodeTrace trace = env.run_episode(policy_, ActionSelect::Sample);
      MetricsRow row;
      row.episode = episode;
      row.mean_reward_phase_cs = trace.mean_reward_phase_surplus();
      row.greedy_profile = trace.steps.back().profile;
      row.displayed_count_mean = trace.mean_reward_phase_displayed();
      const UpdateBatch batch = make_batch(std::move(trace), policy_, cfg_.gamma);
      const UpdateStats st = a2c_update(policy_, batch, coefs(steps), actor_opt_, critic_opt_);
      row.entropy = st.entropy;
      row.actor_loss = st.actor_loss;
      row.critic_loss = st.critic_loss;
      const std::uint64_t before = steps;
      steps += len;
      row.env_steps = steps;
      after_block(out, row, before, steps);
      ++episode;
    }
    finish(out, steps);
    out.full_state_reads = env.full_state_reads();
    return out;
  }

  // No-commitment baseline: the platform samples a fresh action every step,
  // is paid U every step and takes an n-step A2C update every
  // decentralized_update_every steps (bootstrapped with its critic).
  TrainResult train_decentralized() {
    if (cfg_.episode.mode != TrainingMode::Wild) throw ConfigError("decentralized training uses the observation critic");
    StackelbergEnv env(*model_, sellers_, cfg_.episode, cfg_.seed);
    TrainResult out;
    const std::uint64_t len = cfg_.episode.length();
    const std::uint64_t blocks = cfg_.total_steps / len;
    const std::uint64_t n = cfg_.decentralized_update_every;
    std::vector<StepRecord> rollout;
    rollout.reserve(n);
    std::uint64_t steps = 0;
    for (std::uint64_t block = 0; block < blocks; ++block) {
      MetricsRow row;
      row.episode = block;
      double ent = 0.0, al = 0.0, cl = 0.0, tail_cs = 0.0, tail_disp = 0.0;
      int updates = 0;
      for (std::uint64_t t = 0; t < len; ++t) {
        rollout.push_back(env.step_decentralized(policy_));
        if (t + cfg_.episode.n_r >= len) {
          tail_cs += rollout.back().surplus;
          tail_disp += std::popcount(rollout.back().displayed);
        }
        if (rollout.size() == n || t + 1 == len) {
          const UpdateStats st = decentralized_update(rollout, steps + t + 1);
          ent += st.entropy;
          al += st.actor_loss;
          cl += st.critic_loss;
          ++updates;
          rollout.clear();
        }
      }
      row.greedy_profile = env.sellers().state();
      row.mean_reward_phase_cs = tail_cs / static_cast<double>(cfg_.episode.n_r);
      row.displayed_count_mean = tail_disp / static_cast<double>(cfg_.episode.n_r);
      row.entropy = ent / updates;
      row.actor_loss = al / updates;
      row.critic_loss = cl / updates;
      const std::uint64_t before = steps;
      steps += len;
      row.env_steps = steps;
      after_block(out, row, before, steps);
    }
    finish(out, steps);
    out.full_state_reads = env.full_state_reads();
    return out;
  }

  EvalRecord evaluate_now(std::uint64_t index) const {
    return evaluate(policy_, *model_, sellers_, cfg_.episode, eval_seed(cfg_.seed, index));
  }

 private:
  UpdateCoefs coefs(std::uint64_t steps) const {
    UpdateCoefs c;
    c.vf_coef = cfg_.vf_coef;
    c.max_grad_norm = cfg_.max_grad_norm;
    const double progress = static_cast<double>(steps) / static_cast<double>(cfg_.total_steps);
    c.ent_coef = cfg_.ent_anneal ? cfg_.ent_coef * std::max(0.0, 1.0 - progress) : cfg_.ent_coef;
    return c;
  }

  UpdateStats decentralized_update(const std::vector<StepRecord>& rollout, std::uint64_t steps) {
    UpdateBatch b;
    const std::size_t n = rollout.size();
    b.obs.resize(n);
    b.action.resize(n);
    b.returns.resize(n);
    b.values.resize(n);
    double acc = policy_.value(Observation{rollout.back().obs});
    for (std::size_t k = n; k-- > 0;) {
      acc = rollout[k].reward + cfg_.decentralized_gamma * acc;
      b.obs[k] = rollout[k].obs;
      b.action[k] = rollout[k].action;
      b.returns[k] = acc;
      b.values[k] = policy_.value(Observation{rollout[k].obs});
    }
    return a2c_update(policy_, b, coefs(steps), actor_opt_, critic_opt_);
  }

  void after_block(TrainResult& out, MetricsRow& row, std::uint64_t before, std::uint64_t after) {
    if (after / cfg_.eval_every > before / cfg_.eval_every) {
      EvalRecord ev = evaluate_now(out.evals.size());
      ev.env_steps = after;
      row.eval_cs = ev.mean_cs;
      out.evals.push_back(std::move(ev));
    }
    if (!ckpt_dir_.empty() && cfg_.checkpoint_every > 0 && after / cfg_.checkpoint_every > before / cfg_.checkpoint_every)
      out.checkpoints.push_back(save_checkpoint(after));
    if (observer_) observer_(row);
    out.rows.push_back(row);
  }

  void finish(TrainResult& out, std::uint64_t steps) {
    if (!ckpt_dir_.empty() && (out.checkpoints.empty() || out.checkpoints.back().filename() != ckpt_name(steps)))
      out.checkpoints.push_back(save_checkpoint(steps));
    out.policy = policy_;
  }

  static std::string ckpt_name(std::uint64_t steps) { return "ckpt_" + std::to_string(steps) + ".json"; }

  std::filesystem::path save_checkpoint(std::uint64_t steps) const {
    std::filesystem::create_directories(ckpt_dir_);
    const auto path = ckpt_dir_ / ckpt_name(steps);
    nlohmann::json meta = ckpt_meta_.is_object() ? ckpt_meta_ : nlohmann::json::object();
    meta["env_steps"] = steps;
    meta["seed"] = cfg_.seed;
    policy_.save(path, meta);
    return path;
  }

  const MarketModel* model_;
  SellerParams sellers_;
  TrainConfig cfg_;
  LeaderPolicy policy_;
  Optimizer actor_opt_;
  Optimizer critic_opt_;
  Observer observer_;
  std::filesystem::path ckpt_dir_;
  nlohmann::json ckpt_meta_;
};

}  // namespace collusionlab
