#pragma once

// Experiment configuration: flat `[section]` / `key = value` text files,
// command-line overrides of the form section.key=value, and a canonical dump
// whose hash identifies a run.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "collusionlab/a2c.hpp"
#include "collusionlab/baseline.hpp"
#include "collusionlab/core.hpp"
#include "collusionlab/market.hpp"
#include "collusionlab/rules.hpp"
#include "collusionlab/sellers.hpp"

namespace collusionlab {

namespace cfgtext {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) return s.substr(1, s.size() - 2);
  return s;
}

// Shortest round-trip representation.
inline std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string fmt(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

inline double to_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& s) {
  // Accept 50000000, 50_000_000 and 5e7.
  std::string t;
  for (char c : s)
    if (c != '_') t += c;
  std::uint64_t v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec == std::errc() && r.ptr == t.data() + t.size()) return v;
  const double d = to_double(key, t);
  if (!(d >= 0.0) || d > 1.8e19 || d != static_cast<double>(static_cast<std::uint64_t>(d)))
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  return static_cast<std::uint64_t>(d);
}

inline bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + s + "'");
}

inline std::vector<double> to_list(const std::string& key, std::string s) {
  s = trim(s);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ConfigError(key + ": unterminated list");
    s = s.substr(1, s.size() - 2);
  }
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_double(key, item));
  }
  return out;
}

}  // namespace cfgtext

struct ExperimentConfig {
  MarketParams market;
  double grid_min = 0.95;
  double grid_max = 2.1;
  int grid_m = 5;
  SellerParams sellers;
  TrainConfig train;
  bool decentralized = false;
  BaselineOptions baseline;
  std::string rule = "none";
  std::string out = "runs";
  std::uint64_t seeds = 10;
  std::uint64_t seed_base = 0;
  std::vector<double> robustness_costs{1.0, 1.38, 1.67};
  std::uint64_t robustness_episodes = 5;
  std::vector<double> mu_values{0.05, 0.25, 0.40};

  PriceGrid grid() const { return PriceGrid(grid_min, grid_max, grid_m); }

  std::vector<std::uint64_t> seed_list() const {
    std::vector<std::uint64_t> s(seeds);
    for (std::uint64_t k = 0; k < seeds; ++k) s[k] = seed_base + k;
    return s;
  }

  void validate() const {
    try {
      market.validate();
      (void)grid();
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
    if (!(sellers.alpha > 0.0 && sellers.alpha <= 1.0)) throw ConfigError("sellers.alpha must be in (0, 1]");
    if (!(sellers.delta >= 0.0 && sellers.delta < 1.0)) throw ConfigError("sellers.delta must be in [0, 1)");
    if (!(sellers.beta >= 0.0)) throw ConfigError("sellers.beta must be >= 0");
    train.validate();
    (void)RuleKind::parse(rule);
    if (seeds == 0) throw ConfigError("run.seeds must be >= 1");
    if (baseline.window == 0 || baseline.rollout == 0) throw ConfigError("baseline.window and baseline.rollout must be >= 1");
    for (double c : robustness_costs)
      if (!(c > 0.0)) throw ConfigError("robustness.costs must be > 0");
    for (double m : mu_values)
      if (!(m > 0.0)) throw ConfigError("sweep.mu_values must be > 0");
  }

  // Canonical text form: every field, fixed order.
  std::string dump(bool with_output_dir = true) const;
  // Identity of the computation; the output directory does not enter it.
  std::uint64_t hash() const { return fnv1a(dump(false)); }

  // section.key = value
  void set(const std::string& key, const std::string& value);
  void apply_text(const std::string& text, const std::string& origin = "<config>");
  void apply_file(const std::string& path);
};

namespace detail {

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline const std::vector<Field>& config_fields() {
  using namespace cfgtext;
  using C = ExperimentConfig;
  static const std::vector<Field> fields = {
      {"market.n", [](const C& c) { return std::to_string(c.market.n); },
       [](C& c, const std::string& v) {
         const auto n = to_u64("market.n", v);
         if (n < 1 || n > 8) throw ConfigError("market.n must be in [1, 8]");
         const int k = static_cast<int>(n);
         if (k != c.market.n) {
           c.market.cost.resize(n, c.market.cost.empty() ? 1.0 : c.market.cost.back());
           c.market.quality.resize(n, c.market.quality.empty() ? 2.0 : c.market.quality.back());
         }
         c.market.n = k;
       }},
      {"market.cost", [](const C& c) { return fmt(c.market.cost); },
       [](C& c, const std::string& v) {
         auto xs = to_list("market.cost", v);
         if (xs.size() == 1) xs.assign(static_cast<std::size_t>(c.market.n), xs[0]);
         c.market.cost = xs;
       }},
      {"market.quality", [](const C& c) { return fmt(c.market.quality); },
       [](C& c, const std::string& v) {
         auto xs = to_list("market.quality", v);
         if (xs.size() == 1) xs.assign(static_cast<std::size_t>(c.market.n), xs[0]);
         c.market.quality = xs;
       }},
      {"market.outside_quality", [](const C& c) { return fmt(c.market.outside_quality); },
       [](C& c, const std::string& v) { c.market.outside_quality = to_double("market.outside_quality", v); }},
      {"market.mu", [](const C& c) { return fmt(c.market.mu); },
       [](C& c, const std::string& v) { c.market.mu = to_double("market.mu", v); }},
      {"grid.min", [](const C& c) { return fmt(c.grid_min); },
       [](C& c, const std::string& v) { c.grid_min = to_double("grid.min", v); }},
      {"grid.max", [](const C& c) { return fmt(c.grid_max); },
       [](C& c, const std::string& v) { c.grid_max = to_double("grid.max", v); }},
      {"grid.m", [](const C& c) { return std::to_string(c.grid_m); },
       [](C& c, const std::string& v) {
         const auto m = to_u64("grid.m", v);
         if (m < 2 || m > 64) throw ConfigError("grid.m must be in [2, 64]");
         c.grid_m = static_cast<int>(m);
       }},
      {"sellers.alpha", [](const C& c) { return fmt(c.sellers.alpha); },
       [](C& c, const std::string& v) { c.sellers.alpha = to_double("sellers.alpha", v); }},
      {"sellers.delta", [](const C& c) { return fmt(c.sellers.delta); },
       [](C& c, const std::string& v) { c.sellers.delta = to_double("sellers.delta", v); }},
      {"sellers.beta", [](const C& c) { return fmt(c.sellers.beta); },
       [](C& c, const std::string& v) { c.sellers.beta = to_double("sellers.beta", v); }},
      {"sellers.init", [](const C& c) { return std::string(c.sellers.init == QInit::Uniform ? "uniform" : "rival-average"); },
       [](C& c, const std::string& v) {
         if (v == "uniform") c.sellers.init = QInit::Uniform;
         else if (v == "rival-average") c.sellers.init = QInit::RivalAverage;
         else throw ConfigError("sellers.init: expected uniform|rival-average");
       }},
      {"episode.n_e", [](const C& c) { return std::to_string(c.train.episode.n_e); },
       [](C& c, const std::string& v) { c.train.episode.n_e = to_u64("episode.n_e", v); }},
      {"episode.n_r", [](const C& c) { return std::to_string(c.train.episode.n_r); },
       [](C& c, const std::string& v) { c.train.episode.n_r = to_u64("episode.n_r", v); }},
      {"episode.mode", [](const C& c) { return std::string(c.train.episode.mode == TrainingMode::Wild ? "wild" : "offline"); },
       [](C& c, const std::string& v) {
         if (v == "wild") c.train.episode.mode = TrainingMode::Wild;
         else if (v == "offline") c.train.episode.mode = TrainingMode::Offline;
         else throw ConfigError("episode.mode: expected wild|offline");
       }},
      {"episode.restart", [](const C& c) { return std::string(c.train.episode.restart == RestartMode::Sync ? "sync" : "async"); },
       [](C& c, const std::string& v) {
         if (v == "sync") c.train.episode.restart = RestartMode::Sync;
         else if (v == "async") c.train.episode.restart = RestartMode::Async;
         else throw ConfigError("episode.restart: expected sync|async");
       }},
      {"episode.random_price_prob", [](const C& c) { return fmt(c.train.episode.random_price_prob); },
       [](C& c, const std::string& v) { c.train.episode.random_price_prob = to_double("episode.random_price_prob", v); }},
      {"episode.reward", [](const C& c) { return std::string(c.train.episode.reward == RewardFn::Surplus ? "cs" : "proxy"); },
       [](C& c, const std::string& v) {
         if (v == "cs" || v == "surplus") c.train.episode.reward = RewardFn::Surplus;
         else if (v == "proxy") c.train.episode.reward = RewardFn::Proxy;
         else throw ConfigError("episode.reward: expected cs|proxy");
       }},
      {"episode.action_cache", [](const C& c) { return std::string(c.train.episode.action_cache ? "true" : "false"); },
       [](C& c, const std::string& v) { c.train.episode.action_cache = to_bool("episode.action_cache", v); }},
      {"episode.perturb_both", [](const C& c) { return std::string(c.train.episode.perturb_both ? "true" : "false"); },
       [](C& c, const std::string& v) { c.train.episode.perturb_both = to_bool("episode.perturb_both", v); }},
      {"episode.full_state_stride", [](const C& c) { return std::to_string(c.train.episode.full_state_stride); },
       [](C& c, const std::string& v) { c.train.episode.full_state_stride = to_u64("episode.full_state_stride", v); }},
      {"train.total_steps", [](const C& c) { return std::to_string(c.train.total_steps); },
       [](C& c, const std::string& v) { c.train.total_steps = to_u64("train.total_steps", v); }},
      {"train.observation", [](const C& c) { return std::string(c.train.observation == ObservationMode::NoState ? "nostate" : "state"); },
       [](C& c, const std::string& v) {
         if (v == "nostate") c.train.observation = ObservationMode::NoState;
         else if (v == "state") c.train.observation = ObservationMode::StateBased;
         else throw ConfigError("train.observation: expected nostate|state");
       }},
      {"train.protocol", [](const C& c) { return std::string(c.decentralized ? "decentralized" : "stackelberg"); },
       [](C& c, const std::string& v) {
         if (v == "stackelberg") c.decentralized = false;
         else if (v == "decentralized") c.decentralized = true;
         else throw ConfigError("train.protocol: expected stackelberg|decentralized");
       }},
      {"train.optimizer", [](const C& c) { return std::string(c.train.optimizer == OptimizerKind::Sgd ? "sgd" : "rmsprop"); },
       [](C& c, const std::string& v) {
         if (v == "sgd") c.train.optimizer = OptimizerKind::Sgd;
         else if (v == "rmsprop") c.train.optimizer = OptimizerKind::RmsProp;
         else throw ConfigError("train.optimizer: expected sgd|rmsprop");
       }},
      {"train.actor_lr", [](const C& c) { return fmt(c.train.actor_lr); },
       [](C& c, const std::string& v) { c.train.actor_lr = to_double("train.actor_lr", v); }},
      {"train.critic_lr", [](const C& c) { return fmt(c.train.critic_lr); },
       [](C& c, const std::string& v) { c.train.critic_lr = to_double("train.critic_lr", v); }},
      {"train.ent_coef", [](const C& c) { return fmt(c.train.ent_coef); },
       [](C& c, const std::string& v) { c.train.ent_coef = to_double("train.ent_coef", v); }},
      {"train.ent_anneal", [](const C& c) { return std::string(c.train.ent_anneal ? "true" : "false"); },
       [](C& c, const std::string& v) { c.train.ent_anneal = to_bool("train.ent_anneal", v); }},
      {"train.vf_coef", [](const C& c) { return fmt(c.train.vf_coef); },
       [](C& c, const std::string& v) { c.train.vf_coef = to_double("train.vf_coef", v); }},
      {"train.gamma", [](const C& c) { return fmt(c.train.gamma); },
       [](C& c, const std::string& v) { c.train.gamma = to_double("train.gamma", v); }},
      {"train.max_grad_norm", [](const C& c) { return fmt(c.train.max_grad_norm); },
       [](C& c, const std::string& v) { c.train.max_grad_norm = to_double("train.max_grad_norm", v); }},
      {"train.rms_alpha", [](const C& c) { return fmt(c.train.rms_alpha); },
       [](C& c, const std::string& v) { c.train.rms_alpha = to_double("train.rms_alpha", v); }},
      {"train.rms_eps", [](const C& c) { return fmt(c.train.rms_eps); },
       [](C& c, const std::string& v) { c.train.rms_eps = to_double("train.rms_eps", v); }},
      {"train.critic_hidden", [](const C& c) { return std::to_string(c.train.critic_hidden); },
       [](C& c, const std::string& v) {
         const auto h = to_u64("train.critic_hidden", v);
         if (h < 1 || h > 4096) throw ConfigError("train.critic_hidden must be in [1, 4096]");
         c.train.critic_hidden = static_cast<int>(h);
       }},
      {"train.eval_every", [](const C& c) { return std::to_string(c.train.eval_every); },
       [](C& c, const std::string& v) { c.train.eval_every = to_u64("train.eval_every", v); }},
      {"train.checkpoint_every", [](const C& c) { return std::to_string(c.train.checkpoint_every); },
       [](C& c, const std::string& v) { c.train.checkpoint_every = to_u64("train.checkpoint_every", v); }},
      {"train.decentralized_update_every", [](const C& c) { return std::to_string(c.train.decentralized_update_every); },
       [](C& c, const std::string& v) { c.train.decentralized_update_every = to_u64("train.decentralized_update_every", v); }},
      {"train.decentralized_gamma", [](const C& c) { return fmt(c.train.decentralized_gamma); },
       [](C& c, const std::string& v) { c.train.decentralized_gamma = to_double("train.decentralized_gamma", v); }},
      {"baseline.window", [](const C& c) { return std::to_string(c.baseline.window); },
       [](C& c, const std::string& v) { c.baseline.window = to_u64("baseline.window", v); }},
      {"baseline.cap", [](const C& c) { return std::to_string(c.baseline.cap); },
       [](C& c, const std::string& v) { c.baseline.cap = to_u64("baseline.cap", v); }},
      {"baseline.rollout", [](const C& c) { return std::to_string(c.baseline.rollout); },
       [](C& c, const std::string& v) { c.baseline.rollout = to_u64("baseline.rollout", v); }},
      {"run.rule", [](const C& c) { return c.rule; }, [](C& c, const std::string& v) { c.rule = RuleKind::parse(v).str(); }},
      {"run.out", [](const C& c) { return c.out; }, [](C& c, const std::string& v) { c.out = v; }},
      {"run.seeds", [](const C& c) { return std::to_string(c.seeds); },
       [](C& c, const std::string& v) { c.seeds = to_u64("run.seeds", v); }},
      {"run.seed_base", [](const C& c) { return std::to_string(c.seed_base); },
       [](C& c, const std::string& v) { c.seed_base = to_u64("run.seed_base", v); }},
      {"robustness.costs", [](const C& c) { return fmt(c.robustness_costs); },
       [](C& c, const std::string& v) { c.robustness_costs = to_list("robustness.costs", v); }},
      {"robustness.episodes", [](const C& c) { return std::to_string(c.robustness_episodes); },
       [](C& c, const std::string& v) {
         c.robustness_episodes = to_u64("robustness.episodes", v);
         if (c.robustness_episodes == 0) throw ConfigError("robustness.episodes must be >= 1");
       }},
      {"sweep.mu_values", [](const C& c) { return fmt(c.mu_values); },
       [](C& c, const std::string& v) { c.mu_values = to_list("sweep.mu_values", v); }},
  };
  return fields;
}

inline bool is_string_field(std::string_view key) { return key == "run.out" || key == "run.rule"; }

}  // namespace detail

inline std::string ExperimentConfig::dump(bool with_output_dir) const {
  std::string out;
  std::string section;
  for (const auto& f : detail::config_fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    if (!with_output_dir && key == "run.out") continue;
    std::string v = f.get(*this);
    if (detail::is_string_field(key)) v = "\"" + v + "\"";
    out += key.substr(dot + 1) + " = " + v + "\n";
  }
  return out;
}

inline void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields())
    if (key == f.key) {
      f.set(*this, cfgtext::unquote(cfgtext::trim(value)));
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

inline void ExperimentConfig::apply_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string t = cfgtext::trim(line);
    if (t.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": malformed section header");
      section = cfgtext::trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = cfgtext::trim(std::string_view(t).substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      set(full, t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

inline void ExperimentConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str(), path);
}

}  // namespace collusionlab
