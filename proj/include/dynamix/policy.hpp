#pragma once

// Centralized batch-size policy: a tanh MLP over the 14-feature state that
// emits logits for the five discrete batch-size adjustments, trained either by
// return-weighted policy gradient or by the clipped PPO surrogate.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "metrics.hpp"
#include "reward.hpp"
#include "rng.hpp"

namespace dynamix {

inline constexpr std::size_t kNumActions = 5;
inline constexpr std::array<int, kNumActions> kActionValues{-100, -25, 0, 25, 100};
inline constexpr int kNoOpIndex = 2;

class ActionDelta {
 public:
  static ActionDelta from_index(int index) {
    if (index < 0 || index >= static_cast<int>(kNumActions))
      throw ContractViolation("ActionDelta: index " + std::to_string(index) + " out of range");
    return ActionDelta(index);
  }

  static ActionDelta from_value(int value) {
    for (std::size_t i = 0; i < kNumActions; ++i)
      if (kActionValues[i] == value) return ActionDelta(static_cast<int>(i));
    throw ContractViolation("ActionDelta: " + std::to_string(value) + " is not an allowed adjustment");
  }

  static ActionDelta noop() { return ActionDelta(kNoOpIndex); }

  int index() const { return index_; }
  int value() const { return kActionValues[static_cast<std::size_t>(index_)]; }

  bool operator==(const ActionDelta&) const = default;

 private:
  explicit ActionDelta(int index) : index_(index) {}
  int index_;
};

using Logits = std::array<double, kNumActions>;
using Probabilities = std::array<double, kNumActions>;

// Dense layer, weights row-major [out][in].
struct Layer {
  int in = 0;
  int out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  bool operator==(const Layer&) const = default;
};

struct PolicyParams {
  std::vector<Layer> layers;
  std::uint64_t version = 0;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      for (double v : l.weight)
        if (!std::isfinite(v)) return false;
      for (double v : l.bias)
        if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers) {
      out.insert(out.end(), l.weight.begin(), l.weight.end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
  }

  void assign(std::span<const double> flat) {
    detail::require(flat.size() == parameter_count(), "PolicyParams::assign: size mismatch");
    std::size_t at = 0;
    for (auto& l : layers) {
      std::copy_n(flat.begin() + at, l.weight.size(), l.weight.begin());
      at += l.weight.size();
      std::copy_n(flat.begin() + at, l.bias.size(), l.bias.begin());
      at += l.bias.size();
    }
  }
};

inline PolicyParams zeros_like(const PolicyParams& p) {
  PolicyParams z;
  for (const auto& l : p.layers)
    z.layers.push_back({l.in, l.out, std::vector<double>(l.weight.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)});
  z.version = p.version;
  return z;
}

// input -> hidden -> hidden -> 5 logits, Glorot-uniform weights, zero biases.
// The output layer is scaled down so the initial policy is close to uniform.
inline PolicyParams make_policy(std::uint64_t seed, int hidden = 64, int input_dim = static_cast<int>(kStateDim),
                                double output_scale = 0.01) {
  if (hidden < 1) throw ConfigError("policy hidden width must be >= 1");
  Rng rng(mix_seed(seed, 0x706f6c696379ULL));
  PolicyParams p;
  const std::array<int, 4> dims{input_dim, hidden, hidden, static_cast<int>(kNumActions)};
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer{dims[l], dims[l + 1], {}, {}};
    const double limit = std::sqrt(6.0 / (layer.in + layer.out)) * (l + 2 == dims.size() ? output_scale : 1.0);
    layer.weight.resize(static_cast<std::size_t>(layer.in) * layer.out);
    for (double& w : layer.weight) w = (2.0 * uniform01(rng) - 1.0) * limit;
    layer.bias.assign(static_cast<std::size_t>(layer.out), 0.0);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

// Zero weights everywhere; the output bias alone sets the (state-independent) action preferences.
inline PolicyParams constant_policy(const Logits& output_bias, int hidden = 64,
                                    int input_dim = static_cast<int>(kStateDim)) {
  PolicyParams p = zeros_like(make_policy(0, hidden, input_dim));
  std::copy(output_bias.begin(), output_bias.end(), p.layers.back().bias.begin());
  return p;
}

namespace detail {

struct ForwardCache {
  // acts[0] is the input; acts[l + 1] the output of layer l (tanh for hidden layers).
  std::vector<std::vector<double>> acts;
};

inline void check_input(const PolicyParams& params, std::span<const double> state) {
  require(!params.layers.empty(), "policy: empty parameter set");
  require(params.output_dim() == static_cast<int>(kNumActions), "policy: output layer must have 5 units");
  if (state.size() != static_cast<std::size_t>(params.input_dim()))
    throw ContractViolation("policy: state dimension " + std::to_string(state.size()) + " != " +
                            std::to_string(params.input_dim()));
  for (double v : state)
    if (!std::isfinite(v)) throw ContractViolation("policy: non-finite state feature");
}

inline Logits forward_cached(const PolicyParams& params, std::span<const double> state, ForwardCache* cache) {
  check_input(params, state);
  std::vector<double> x(state.begin(), state.end());
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(x);
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Layer& layer = params.layers[l];
    std::vector<double> y(static_cast<std::size_t>(layer.out));
    for (int o = 0; o < layer.out; ++o) {
      const double* row = layer.weight.data() + static_cast<std::size_t>(o) * layer.in;
      double acc = layer.bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < layer.in; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(o)] = (l + 1 < params.layers.size()) ? std::tanh(acc) : acc;
    }
    x = std::move(y);
    if (cache) cache->acts.push_back(x);
  }
  Logits out{};
  std::copy(x.begin(), x.end(), out.begin());
  return out;
}

// Accumulates d(objective)/d(params) given d(objective)/d(logits).
inline void backward(const PolicyParams& params, const ForwardCache& cache, const Logits& dlogits,
                     PolicyParams& grad) {
  std::vector<double> delta(dlogits.begin(), dlogits.end());
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Layer& layer = params.layers[l];
    Layer& g = grad.layers[l];
    const std::vector<double>& input = cache.acts[l];
    for (int o = 0; o < layer.out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      g.bias[static_cast<std::size_t>(o)] += d;
      double* grow = g.weight.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) grow[i] += d * input[static_cast<std::size_t>(i)];
    }
    if (l == 0) break;
    std::vector<double> prev(static_cast<std::size_t>(layer.in), 0.0);
    for (int o = 0; o < layer.out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      const double* row = layer.weight.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) prev[static_cast<std::size_t>(i)] += d * row[i];
    }
    // Input of layer l is tanh output of layer l-1.
    for (int i = 0; i < layer.in; ++i) {
      const double a = input[static_cast<std::size_t>(i)];
      prev[static_cast<std::size_t>(i)] *= (1.0 - a * a);
    }
    delta = std::move(prev);
  }
}

}  // namespace detail

inline Logits forward(const PolicyParams& params, std::span<const double> state) {
  return detail::forward_cached(params, state, nullptr);
}

// Softmax with max-subtraction.
inline Probabilities action_distribution(const Logits& logits) {
  for (double z : logits) detail::require(std::isfinite(z), "action_distribution: non-finite logit");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Probabilities p{};
  double total = 0.0;
  for (std::size_t i = 0; i < kNumActions; ++i) {
    p[i] = std::exp(logits[i] - mx);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

inline std::array<double, kNumActions> log_softmax(const Logits& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - mx);
  const double lse = mx + std::log(total);
  std::array<double, kNumActions> out{};
  for (std::size_t i = 0; i < kNumActions; ++i) out[i] = logits[i] - lse;
  return out;
}

struct SampledAction {
  ActionDelta action = ActionDelta::noop();
  double log_prob = 0.0;
};

// Inverse-CDF over the fixed action order; ties go to the lowest index.
inline SampledAction sample_action(const Probabilities& probs, Rng& rng) {
  const double u = uniform01(rng);
  double cum = 0.0;
  std::size_t pick = kNumActions;
  for (std::size_t i = 0; i < kNumActions; ++i) {
    cum += probs[i];
    if (u < cum) {
      pick = i;
      break;
    }
  }
  if (pick == kNumActions) {  // rounding left u above the final cumulative sum
    pick = kNumActions - 1;
    while (pick > 0 && probs[pick] <= 0.0) --pick;
  }
  return {ActionDelta::from_index(static_cast<int>(pick)), std::log(probs[pick])};
}

inline SampledAction greedy_action(const Probabilities& probs) {
  const auto it = std::max_element(probs.begin(), probs.end());
  const auto idx = static_cast<std::size_t>(std::distance(probs.begin(), it));
  return {ActionDelta::from_index(static_cast<int>(idx)), std::log(probs[idx])};
}

inline double log_prob(const PolicyParams& params, std::span<const double> state, int action_index) {
  detail::require(action_index >= 0 && action_index < static_cast<int>(kNumActions), "log_prob: bad action index");
  return log_softmax(forward(params, state))[static_cast<std::size_t>(action_index)];
}

// pi_theta(a|s) / pi_theta_old(a|s)
inline double ppo_ratio(const PolicyParams& params, const PolicyParams& params_old, std::span<const double> state,
                        int action_index) {
  return std::exp(log_prob(params, state, action_index) - log_prob(params_old, state, action_index));
}

inline double clipped_objective(double ratio, double advantage, double epsilon) {
  detail::require(epsilon > 0.0 && epsilon < 1.0, "clipped_objective: epsilon must be in (0, 1)");
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

struct TrajectoryRecord {
  StateVector state{};
  int action_index = kNoOpIndex;
  double log_prob = 0.0;
  double reward = 0.0;
  int worker_id = 0;
  int step = 0;

  bool operator==(const TrajectoryRecord&) const = default;
};

using Trajectory = std::vector<TrajectoryRecord>;

enum class PolicyMode { simplified, clipped };
enum class BaselineKind { none, batch_mean, step_mean };

inline std::string to_string(PolicyMode m) { return m == PolicyMode::simplified ? "simplified" : "clipped"; }
inline std::string to_string(BaselineKind b) {
  switch (b) {
    case BaselineKind::none: return "none";
    case BaselineKind::batch_mean: return "batch_mean";
    case BaselineKind::step_mean: return "step_mean";
  }
  return "none";
}

struct PPOConfig {
  double epsilon = 0.2;
  double learning_rate = 3e-3;
  double entropy_bonus = 0.01;
  PolicyMode mode = PolicyMode::simplified;
  int epochs = 20;
  double max_grad_norm = 5.0;  // <= 0 disables clipping
  BaselineKind baseline = BaselineKind::step_mean;
  bool normalize_advantage = false;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("ppo.epsilon must be in (0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("ppo.learning_rate must be > 0");
    if (entropy_bonus < 0.0) throw ConfigError("ppo.entropy_bonus must be >= 0");
    if (epochs < 1) throw ConfigError("ppo.epochs must be >= 1");
  }
};

// Flattened training batch with per-record advantages.
struct PolicyBatch {
  std::vector<StateVector> states;
  std::vector<int> actions;
  std::vector<double> advantages;
  std::vector<double> old_log_probs;

  std::size_t size() const { return states.size(); }
};

// Discounted reward-to-go per worker sequence, then baseline subtraction.
inline std::vector<double> centered_returns(const Trajectory& trajectory, double gamma, BaselineKind baseline,
                                            bool normalize) {
  std::map<int, std::vector<std::size_t>> by_worker;
  for (std::size_t i = 0; i < trajectory.size(); ++i) by_worker[trajectory[i].worker_id].push_back(i);
  std::vector<double> ret(trajectory.size(), 0.0);
  for (auto& [id, idx] : by_worker) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return trajectory[a].step < trajectory[b].step; });
    double g = 0.0;
    for (std::size_t j = idx.size(); j-- > 0;) {
      g = trajectory[idx[j]].reward + gamma * g;
      ret[idx[j]] = g;
    }
  }
  if (baseline == BaselineKind::batch_mean) {
    const double mean = std::accumulate(ret.begin(), ret.end(), 0.0) / ret.size();
    for (double& r : ret) r -= mean;
  } else if (baseline == BaselineKind::step_mean) {
    std::map<int, std::pair<double, int>> per_step;
    for (std::size_t i = 0; i < ret.size(); ++i) {
      auto& [sum, n] = per_step[trajectory[i].step];
      sum += ret[i];
      ++n;
    }
    for (std::size_t i = 0; i < ret.size(); ++i) {
      const auto& [sum, n] = per_step[trajectory[i].step];
      ret[i] -= sum / n;
    }
  }
  if (normalize && ret.size() > 1) {
    const double mean = std::accumulate(ret.begin(), ret.end(), 0.0) / ret.size();
    double ss = 0.0;
    for (double r : ret) ss += (r - mean) * (r - mean);
    const double sd = std::sqrt(ss / ret.size());
    if (sd > 1e-12)
      for (double& r : ret) r = (r - mean) / sd;
  }
  return ret;
}

inline PolicyBatch prepare_batch(const PolicyParams& params_old, const Trajectory& trajectory, double gamma,
                                 const PPOConfig& config) {
  if (trajectory.empty()) throw ContractViolation("update_policy: empty trajectory set");
  for (const auto& r : trajectory)
    if (!std::isfinite(r.reward)) throw ContractViolation("update_policy: non-finite reward");
  PolicyBatch batch;
  batch.advantages = centered_returns(trajectory, gamma, config.baseline, config.normalize_advantage);
  for (const auto& r : trajectory) {
    batch.states.push_back(r.state);
    batch.actions.push_back(r.action_index);
    batch.old_log_probs.push_back(log_prob(params_old, r.state, r.action_index));
  }
  return batch;
}

struct ObjectiveGradient {
  double objective = 0.0;
  PolicyParams gradient;
};

// Mean over records of the mode's surrogate plus the entropy bonus; gradient by backprop.
inline ObjectiveGradient policy_objective_gradient(const PolicyParams& params, const PolicyBatch& batch,
                                                   const PPOConfig& config, bool with_gradient = true) {
  detail::require(batch.size() > 0, "policy objective: empty batch");
  ObjectiveGradient out;
  if (with_gradient) out.gradient = zeros_like(params);
  const double inv_m = 1.0 / static_cast<double>(batch.size());
  detail::ForwardCache cache;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Logits z = detail::forward_cached(params, batch.states[i], with_gradient ? &cache : nullptr);
    const auto logp = log_softmax(z);
    Probabilities p{};
    for (std::size_t j = 0; j < kNumActions; ++j) p[j] = std::exp(logp[j]);
    const auto a = static_cast<std::size_t>(batch.actions[i]);
    const double adv = batch.advantages[i];

    double weight = 0.0;  // coefficient on d logp(a) / d z
    if (config.mode == PolicyMode::simplified) {
      out.objective += adv * logp[a] * inv_m;
      weight = adv;
    } else {
      const double ratio = std::exp(logp[a] - batch.old_log_probs[i]);
      const double unclipped = ratio * adv;
      const double clipped = std::clamp(ratio, 1.0 - config.epsilon, 1.0 + config.epsilon) * adv;
      out.objective += std::min(unclipped, clipped) * inv_m;
      weight = unclipped <= clipped ? unclipped : 0.0;
    }
    double entropy = 0.0;
    for (std::size_t j = 0; j < kNumActions; ++j) entropy -= p[j] * logp[j];
    out.objective += config.entropy_bonus * entropy * inv_m;

    if (!with_gradient) continue;
    Logits dz{};
    for (std::size_t j = 0; j < kNumActions; ++j) {
      const double onehot = j == a ? 1.0 : 0.0;
      dz[j] = weight * (onehot - p[j]) - config.entropy_bonus * p[j] * (logp[j] + entropy);
      dz[j] *= inv_m;
    }
    detail::backward(params, cache, dz, out.gradient);
  }
  return out;
}

inline double policy_objective(const PolicyParams& params, const PolicyBatch& batch, const PPOConfig& config) {
  return policy_objective_gradient(params, batch, config, false).objective;
}

inline double gradient_norm(const PolicyParams& g) {
  double ss = 0.0;
  for (const auto& l : g.layers) {
    for (double v : l.weight) ss += v * v;
    for (double v : l.bias) ss += v * v;
  }
  return std::sqrt(ss);
}

// One policy update (one or more gradient-ascent epochs on the same batch).
// Throws NumericError, leaving the caller's parameters untouched, if any
// gradient or updated parameter is non-finite.
inline PolicyParams update_policy(const PolicyParams& params, const Trajectory& trajectory,
                                  const RewardCoefficients& coeffs, const PPOConfig& config) {
  config.validate();
  const PolicyBatch batch = prepare_batch(params, trajectory, coeffs.gamma, config);
  PolicyParams current = params;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    ObjectiveGradient og = policy_objective_gradient(current, batch, config);
    const double norm = gradient_norm(og.gradient);
    if (!std::isfinite(norm) || !std::isfinite(og.objective))
      throw NumericError("update_policy: non-finite gradient; update rejected");
    const double scale =
        (config.max_grad_norm > 0.0 && norm > config.max_grad_norm) ? config.max_grad_norm / norm : 1.0;
    for (std::size_t l = 0; l < current.layers.size(); ++l) {
      auto& layer = current.layers[l];
      const auto& g = og.gradient.layers[l];
      for (std::size_t i = 0; i < layer.weight.size(); ++i)
        layer.weight[i] += config.learning_rate * scale * g.weight[i];
      for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] += config.learning_rate * scale * g.bias[i];
    }
  }
  if (!current.all_finite()) throw NumericError("update_policy: non-finite parameters; update rejected");
  current.version = params.version + 1;
  return current;
}

inline void to_json(nlohmann::json& j, const PPOConfig& c) {
  j = {{"epsilon", c.epsilon},
       {"learning_rate", c.learning_rate},
       {"entropy_bonus", c.entropy_bonus},
       {"mode", to_string(c.mode)},
       {"epochs", c.epochs},
       {"max_grad_norm", c.max_grad_norm},
       {"baseline", to_string(c.baseline)},
       {"normalize_advantage", c.normalize_advantage}};
}

inline void from_json(const nlohmann::json& j, PPOConfig& c) {
  c.epsilon = j.value("epsilon", c.epsilon);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.entropy_bonus = j.value("entropy_bonus", c.entropy_bonus);
  if (j.contains("mode")) {
    const auto m = j.at("mode").get<std::string>();
    if (m == "simplified") c.mode = PolicyMode::simplified;
    else if (m == "clipped") c.mode = PolicyMode::clipped;
    else throw ConfigError("ppo.mode must be simplified or clipped");
  }
  c.epochs = j.value("epochs", c.epochs);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  if (j.contains("baseline")) {
    const auto b = j.at("baseline").get<std::string>();
    if (b == "none") c.baseline = BaselineKind::none;
    else if (b == "batch_mean") c.baseline = BaselineKind::batch_mean;
    else if (b == "step_mean") c.baseline = BaselineKind::step_mean;
    else throw ConfigError("ppo.baseline must be none, batch_mean or step_mean");
  }
  c.normalize_advantage = j.value("normalize_advantage", c.normalize_advantage);
  c.validate();
}

}  // namespace dynamix
