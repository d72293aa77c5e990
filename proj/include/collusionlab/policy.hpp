#pragma once

// The platform's learnable policy: a softmax table over threshold actions per
// observation category, and a critic that sees either the observation only
// (wild training) or the full simulator state (offline training).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "collusionlab/core.hpp"
#include "collusionlab/sellers.hpp"

namespace collusionlab {

enum class ObservationMode { NoState, StateBased };
enum class TrainingMode { Offline, Wild };

inline const char* to_string(ObservationMode m) { return m == ObservationMode::NoState ? "nostate" : "state"; }
inline const char* to_string(TrainingMode m) { return m == TrainingMode::Offline ? "offline" : "wild"; }

struct Observation {
  StateIndex category = 0;  // profile index (StateBased) or 0 (NoState)
};

// Observation plus everything private to the sellers. `features` is the
// critic input: one-hot observation, rescaled Q-matrices, exploration rates.
struct FullState {
  Observation obs;
  std::vector<double> features;
};

inline std::size_t full_state_size(int obs_categories, int sellers, int profiles, int prices) {
  return static_cast<std::size_t>(obs_categories) +
         static_cast<std::size_t>(sellers) * static_cast<std::size_t>(profiles) * static_cast<std::size_t>(prices) +
         static_cast<std::size_t>(sellers);
}

// One hidden tanh layer, scalar output. Parameters are stored flat:
// W1 (hidden x input, row-major), b1, w2, b2.
class MlpCritic {
 public:
  MlpCritic() = default;
  MlpCritic(int inputs, int hidden, Rng& rng) : inputs_(inputs), hidden_(hidden) {
    params_.resize(size());
    for (double& w : params_) w = -0.1 + 0.2 * uniform01(rng);
  }

  int inputs() const { return inputs_; }
  int hidden() const { return hidden_; }
  std::size_t size() const {
    return static_cast<std::size_t>(hidden_) * static_cast<std::size_t>(inputs_) + 2 * static_cast<std::size_t>(hidden_) + 1;
  }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  double forward(std::span<const double> x) const {
    check(x);
    double out = params_.back();
    const double* b1 = &params_[w1_size()];
    const double* w2 = b1 + hidden_;
    for (int h = 0; h < hidden_; ++h) out += w2[h] * std::tanh(pre(x, h) + b1[h]);
    return out;
  }

  // Accumulates scale * dV/dparams into grad.
  void backward(std::span<const double> x, double scale, std::span<double> grad) const {
    check(x);
    const double* b1 = &params_[w1_size()];
    const double* w2 = b1 + hidden_;
    double* g_w1 = grad.data();
    double* g_b1 = g_w1 + w1_size();
    double* g_w2 = g_b1 + hidden_;
    for (int h = 0; h < hidden_; ++h) {
      const double a = std::tanh(pre(x, h) + b1[h]);
      g_w2[h] += scale * a;
      const double dz = scale * w2[h] * (1.0 - a * a);
      g_b1[h] += dz;
      double* row = g_w1 + static_cast<std::size_t>(h) * inputs_;
      for (int i = 0; i < inputs_; ++i)
        if (x[i] != 0.0) row[i] += dz * x[i];
    }
    grad.back() += scale;
  }

 private:
  std::size_t w1_size() const { return static_cast<std::size_t>(hidden_) * static_cast<std::size_t>(inputs_); }
  double pre(std::span<const double> x, int h) const {
    const double* row = &params_[static_cast<std::size_t>(h) * inputs_];
    double z = 0.0;
    for (int i = 0; i < inputs_; ++i)
      if (x[i] != 0.0) z += row[i] * x[i];
    return z;
  }
  void check(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != inputs_) throw DomainError("critic: full-state length mismatch");
  }

  int inputs_ = 0;
  int hidden_ = 0;
  std::vector<double> params_;
};

struct PolicyShape {
  ObservationMode observation = ObservationMode::StateBased;
  TrainingMode training = TrainingMode::Wild;
  int obs_categories = 25;
  int actions = 6;
  int full_state_inputs = 0;  // offline only
  int critic_hidden = 64;
};

class LeaderPolicy {
 public:
  LeaderPolicy() = default;

  LeaderPolicy(const PolicyShape& shape, Rng& rng) : shape_(shape) {
    if (shape.obs_categories < 1 || shape.actions < 2) throw DomainError("policy: bad shape");
    logits_.assign(static_cast<std::size_t>(shape.obs_categories) * shape.actions, 0.0);
    if (shape.training == TrainingMode::Wild) {
      table_critic_.assign(static_cast<std::size_t>(shape.obs_categories), 0.0);
    } else {
      if (shape.full_state_inputs < shape.obs_categories) throw DomainError("policy: full-state size too small");
      mlp_critic_ = MlpCritic(shape.full_state_inputs, shape.critic_hidden, rng);
    }
  }

  // Deterministic single-threshold rule wrapped as a policy (NoState, wild).
  static LeaderPolicy constant(int actions, int threshold_index, double margin = 50.0) {
    Rng unused = make_rng(0);
    LeaderPolicy p({ObservationMode::NoState, TrainingMode::Wild, 1, actions, 0, 0}, unused);
    p.logits_[static_cast<std::size_t>(threshold_index)] = margin;
    return p;
  }

  const PolicyShape& shape() const { return shape_; }
  int actions() const { return shape_.actions; }
  int obs_categories() const { return shape_.obs_categories; }

  Observation observe(StateIndex profile) const {
    return Observation{shape_.observation == ObservationMode::NoState ? 0u : profile};
  }

  std::span<double> logits() { return logits_; }
  std::span<const double> logits() const { return logits_; }
  std::span<const double> logits(Observation o) const {
    return std::span<const double>(logits_).subspan(row(o), static_cast<std::size_t>(shape_.actions));
  }
  std::span<double> logits(Observation o) {
    return std::span<double>(logits_).subspan(row(o), static_cast<std::size_t>(shape_.actions));
  }

  // Critic parameters as one flat vector (table or MLP).
  std::span<double> critic_params() {
    return shape_.training == TrainingMode::Wild ? std::span<double>(table_critic_) : mlp_critic_.params();
  }
  std::span<const double> critic_params() const {
    return shape_.training == TrainingMode::Wild ? std::span<const double>(table_critic_) : mlp_critic_.params();
  }
  const MlpCritic& mlp() const { return mlp_critic_; }

  std::vector<double> action_distribution(Observation o) const {
    const auto z = logits(o);
    std::vector<double> p(z.size());
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t a = 0; a < z.size(); ++a) sum += (p[a] = std::exp(z[a] - mx));
    for (double& v : p) v /= sum;
    return p;
  }

  // Highest-probability threshold; lowest index on ties.
  int greedy_action(Observation o) const {
    const auto z = logits(o);
    int best = 0;
    for (int a = 1; a < shape_.actions; ++a)
      if (z[a] > z[best]) best = a;
    return best;
  }

  int sample_action(Observation o, Rng& rng) const {
    const auto p = action_distribution(o);
    double u = uniform01(rng);
    for (int a = 0; a < shape_.actions - 1; ++a) {
      if (u < p[a]) return a;
      u -= p[a];
    }
    return shape_.actions - 1;
  }

  // d log pi(action | o) / d logits(o, .) = onehot(action) - pi(. | o); all
  // other rows are zero.
  std::vector<double> grad_log_prob(Observation o, int action) const {
    auto g = action_distribution(o);
    for (double& v : g) v = -v;
    g[static_cast<std::size_t>(action)] += 1.0;
    return g;
  }

  // Same gradient over the full logit table (for finite-difference checks).
  std::vector<double> grad_log_prob_dense(Observation o, int action) const {
    std::vector<double> g(logits_.size(), 0.0);
    const auto row_g = grad_log_prob(o, action);
    std::copy(row_g.begin(), row_g.end(), g.begin() + static_cast<std::ptrdiff_t>(row(o)));
    return g;
  }

  double log_prob(Observation o, int action) const {
    return std::log(action_distribution(o)[static_cast<std::size_t>(action)]);
  }

  double value(Observation o) const {
    if (shape_.training != TrainingMode::Wild) throw DomainError("value: offline critic needs the full state");
    return table_critic_[check_obs(o)];
  }
  double value(const FullState& x) const {
    if (shape_.training != TrainingMode::Offline) throw DomainError("value: wild critic takes observations only");
    return mlp_critic_.forward(x.features);
  }

  // d V / d critic params, dense.
  std::vector<double> value_grad(Observation o) const {
    if (shape_.training != TrainingMode::Wild) throw DomainError("value_grad: offline critic needs the full state");
    std::vector<double> g(table_critic_.size(), 0.0);
    g[check_obs(o)] = 1.0;
    return g;
  }
  std::vector<double> value_grad(const FullState& x) const {
    if (shape_.training != TrainingMode::Offline) throw DomainError("value_grad: wild critic takes observations only");
    std::vector<double> g(mlp_critic_.size(), 0.0);
    mlp_critic_.backward(x.features, 1.0, g);
    return g;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "collusionlab-policy";
    j["version"] = 1;
    j["observation"] = to_string(shape_.observation);
    j["training"] = to_string(shape_.training);
    j["obs_categories"] = shape_.obs_categories;
    j["actions"] = shape_.actions;
    j["full_state_inputs"] = shape_.full_state_inputs;
    j["critic_hidden"] = shape_.critic_hidden;
    j["logits"] = logits_;
    j["critic"] = std::vector<double>(critic_params().begin(), critic_params().end());
    return j;
  }

  static LeaderPolicy from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "collusionlab-policy" || j.value("version", 0) != 1)
      throw ConfigError("not a version-1 policy checkpoint");
    PolicyShape shape;
    shape.observation = j.at("observation") == "nostate" ? ObservationMode::NoState : ObservationMode::StateBased;
    shape.training = j.at("training") == "offline" ? TrainingMode::Offline : TrainingMode::Wild;
    shape.obs_categories = j.at("obs_categories");
    shape.actions = j.at("actions");
    shape.full_state_inputs = j.at("full_state_inputs");
    shape.critic_hidden = j.at("critic_hidden");
    Rng rng = make_rng(0);
    LeaderPolicy p(shape, rng);
    const auto logits = j.at("logits").get<std::vector<double>>();
    const auto critic = j.at("critic").get<std::vector<double>>();
    if (logits.size() != p.logits_.size() || critic.size() != p.critic_params().size())
      throw ConfigError("policy checkpoint: parameter size mismatch");
    p.logits_ = logits;
    std::copy(critic.begin(), critic.end(), p.critic_params().begin());
    return p;
  }

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const {
    nlohmann::json j = to_json();
    if (!extra.is_null()) j["meta"] = extra;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << j.dump(1) << '\n';
  }

  static LeaderPolicy load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read checkpoint " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("checkpoint " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }

 private:
  std::size_t check_obs(Observation o) const {
    if (o.category >= static_cast<StateIndex>(shape_.obs_categories)) throw DomainError("policy: observation out of range");
    return o.category;
  }
  std::size_t row(Observation o) const { return check_obs(o) * static_cast<std::size_t>(shape_.actions); }

  PolicyShape shape_;
  std::vector<double> logits_;
  std::vector<double> table_critic_;
  MlpCritic mlp_critic_;
};

}  // namespace collusionlab
