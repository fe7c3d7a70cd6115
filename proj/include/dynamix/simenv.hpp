#pragma once

// Deterministic simulation of a heterogeneous bulk-synchronous data-parallel
// cluster. Every iteration each worker processes its own batch; the barrier
// closes when the slowest worker finishes, then a fixed-size gradient exchange
// runs at the speed of the most congested link.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "rng.hpp"

namespace dynamix {

inline constexpr int kMinBatch = 32;
inline constexpr int kMaxBatch = 1024;

struct NetworkProfile {
  double base_throughput = 1.25e9;  // bytes/s
  double initial_multiplier = 0.8;
  double walk_step = 0.05;          // +-step per window; 0 pins the multiplier
  double retx_rate = 40.0;          // retransmissions/s at full congestion

  static constexpr double kMinMultiplier = 0.1;
  static constexpr double kMaxMultiplier = 1.0;
};

struct WorkerProfile {
  int worker_id = 0;
  double compute_rate = 2000.0;  // samples/s
  double fixed_overhead = 0.02;  // s per iteration
  int memory_capacity = 1024;    // largest feasible batch
  double cores = 4.0;
  std::optional<std::uint64_t> seed;            // defaults to a stream of the cluster seed
  std::optional<NetworkProfile> network;        // defaults to the cluster network
};

struct TrainingCurveModel {
  double a0 = 0.82;
  double a1 = 0.03;
  double B_star = 32.0;
  double tau = 5000.0;  // samples
  double noise_scale = 0.5;
  int grad_dim = 64;
  // Generalization slope grows by a1_scale per doubling of the worker count
  // above reference_workers.
  double a1_scale = 0.0;
  int reference_workers = 4;
};

// Gradient exchange cost per iteration; independent of batch size.
struct CommModel {
  double payload_bytes = 5.0e7;
  double latency = 0.002;  // s
};

struct ClusterConfig {
  std::vector<WorkerProfile> workers;
  NetworkProfile network;
  CommModel comm;
  TrainingCurveModel curve;
  std::uint64_t seed = 1;
  bool zero_noise = false;  // disables every stochastic term (oracle mode)
};

struct IterationOutcome {
  int worker_id = 0;
  long long iteration_index = 0;
  int batch_size = 0;
  double compute_time = 0.0;
  double sync_time = 0.0;
  double batch_accuracy = 0.0;
  double grad_norm_std = 0.0;
  double grad_norm_var = 0.0;
  double throughput_bytes = 0.0;
  long long retransmissions = 0;
  double cpu_time_ratio = 0.0;
  double memory_utilization = 0.0;
  // Noise-free model quality at the end of the iteration (ground truth for evaluation).
  double model_accuracy = 0.0;
  long long cumulative_samples = 0;  // this worker, after the iteration
  double sim_time = 0.0;             // cluster clock after the barrier

  double wall_time() const { return compute_time + sync_time; }
};

// a0 - a1 * max(0, log2(B / B_star)), clamped to [0, 1].
inline double accuracy_asymptote(const TrainingCurveModel& model, double batch_size) {
  detail::require(batch_size >= 1.0, "accuracy_asymptote: batch_size must be >= 1");
  const double penalty = model.a1 * std::max(0.0, std::log2(batch_size / model.B_star));
  return std::clamp(model.a0 - penalty, 0.0, 1.0);
}

// Saturating learning curve over this worker's processed samples.
inline double curve_accuracy(const TrainingCurveModel& model, double batch_size, double samples) {
  return accuracy_asymptote(model, batch_size) * (1.0 - std::exp(-samples / model.tau));
}

inline TrainingCurveModel scaled_curve(const TrainingCurveModel& model, std::size_t num_workers) {
  TrainingCurveModel out = model;
  const double ratio = static_cast<double>(num_workers) / std::max(1, model.reference_workers);
  out.a1 = model.a1 * (1.0 + model.a1_scale * std::max(0.0, std::log2(ratio)));
  return out;
}

struct NetworkSample {
  double throughput = 0.0;
  long long retransmissions = 0;
};

// One worker's link: throughput is base * multiplier, where the multiplier is a
// reflecting random walk on [0.1, 1.0].
class NetworkLink {
 public:
  explicit NetworkLink(NetworkProfile profile)
      : profile_(profile),
        multiplier_(std::clamp(profile.initial_multiplier, NetworkProfile::kMinMultiplier,
                               NetworkProfile::kMaxMultiplier)) {}

  double multiplier() const { return multiplier_; }
  double throughput() const { return profile_.base_throughput * multiplier_; }
  double expected_retransmissions(double window_seconds) const {
    return profile_.retx_rate * window_seconds * (1.0 - multiplier_);
  }
  const NetworkProfile& profile() const { return profile_; }

  // Reports the current window, then advances the congestion walk.
  NetworkSample sample(double window_seconds, Rng& rng, bool zero_noise = false) {
    detail::require(window_seconds > 0.0, "sample_network_metrics: window must be > 0");
    NetworkSample out;
    out.throughput = throughput();
    const double mean = expected_retransmissions(window_seconds);
    out.retransmissions = zero_noise ? std::llround(mean) : poisson(rng, mean);
    if (!zero_noise && profile_.walk_step > 0.0) {
      const double step = uniform01(rng) < 0.5 ? -profile_.walk_step : profile_.walk_step;
      double next = multiplier_ + step;
      if (next > NetworkProfile::kMaxMultiplier) next = 2.0 * NetworkProfile::kMaxMultiplier - next;
      if (next < NetworkProfile::kMinMultiplier) next = 2.0 * NetworkProfile::kMinMultiplier - next;
      multiplier_ = std::clamp(next, NetworkProfile::kMinMultiplier, NetworkProfile::kMaxMultiplier);
    }
    return out;
  }

  void reset() {
    multiplier_ = std::clamp(profile_.initial_multiplier, NetworkProfile::kMinMultiplier,
                             NetworkProfile::kMaxMultiplier);
  }

 private:
  NetworkProfile profile_;
  double multiplier_;
};

inline NetworkSample sample_network_metrics(NetworkLink& link, double window_seconds, Rng& rng) {
  return link.sample(window_seconds, rng);
}

struct GradientStats {
  double sigma_norm = 0.0;
  double sigma_norm_sq = 0.0;
};

// sigma_norm = noise_scale / sqrt(B) * sqrt(chi2_d / d); the chi factor has a
// batch-independent distribution so E[sigma_norm] scales exactly as 1/sqrt(B).
inline GradientStats synth_gradient_stats(const TrainingCurveModel& model, double batch_size, Rng& rng,
                                          bool zero_noise = false) {
  detail::require(batch_size >= 1.0, "synth_gradient_stats: batch_size must be >= 1");
  if (model.noise_scale <= 0.0) return {};
  double factor = 1.0;
  if (!zero_noise) {
    const double d = std::max(1, model.grad_dim);
    factor = std::sqrt(gamma(rng, d / 2.0, 2.0 / d));
  }
  const double sigma = model.noise_scale / std::sqrt(batch_size) * factor;
  return {sigma, sigma * sigma};
}

class Cluster {
 public:
  explicit Cluster(ClusterConfig config) : config_(std::move(config)) {
    if (config_.workers.empty()) throw ConfigError("cluster has no workers");
    std::set<int> ids;
    for (const auto& w : config_.workers) {
      if (!ids.insert(w.worker_id).second)
        throw ConfigError("duplicate worker_id " + std::to_string(w.worker_id));
      if (!(w.compute_rate > 0.0)) throw ConfigError("compute_rate must be > 0");
      if (w.fixed_overhead < 0.0) throw ConfigError("fixed_overhead must be >= 0");
      if (w.memory_capacity < 1) throw ConfigError("memory_capacity must be >= 1");
    }
    if (!(config_.curve.tau > 0.0)) throw ConfigError("curve.tau must be > 0");
    curve_ = scaled_curve(config_.curve, config_.workers.size());
    for (std::size_t slot = 0; slot < config_.workers.size(); ++slot)
      slot_of_[config_.workers[slot].worker_id] = slot;
    reset();
  }

  std::size_t size() const { return config_.workers.size(); }
  const ClusterConfig& config() const { return config_; }
  const TrainingCurveModel& curve() const { return curve_; }
  double sim_time() const { return sim_time_; }
  long long global_samples() const { return global_samples_; }
  long long iteration() const { return iteration_; }
  long long worker_samples(std::size_t slot) const { return samples_.at(slot); }
  const NetworkLink& link(std::size_t slot) const { return links_.at(slot); }

  std::size_t slot_of(int worker_id) const {
    auto it = slot_of_.find(worker_id);
    if (it == slot_of_.end()) throw ConfigError("unknown worker id " + std::to_string(worker_id));
    return it->second;
  }

  // Restores initial conditions, including every RNG stream.
  void reset() {
    rngs_.clear();
    links_.clear();
    samples_.assign(size(), 0);
    for (std::size_t slot = 0; slot < size(); ++slot) {
      const auto& w = config_.workers[slot];
      const std::uint64_t seed =
          w.seed ? *w.seed : mix_seed(config_.seed, static_cast<std::uint64_t>(w.worker_id));
      rngs_.emplace_back(seed);
      links_.emplace_back(w.network ? *w.network : config_.network);
    }
    sim_time_ = 0.0;
    global_samples_ = 0;
    iteration_ = 0;
  }

  // batch_sizes in worker (slot) order.
  std::vector<IterationOutcome> step_iteration(std::span<const int> batch_sizes) {
    if (batch_sizes.size() != size())
      throw ConfigError("step_iteration: expected " + std::to_string(size()) + " batch sizes, got " +
                        std::to_string(batch_sizes.size()));
    for (std::size_t slot = 0; slot < size(); ++slot) {
      const int b = batch_sizes[slot];
      if (b < kMinBatch || b > kMaxBatch)
        throw ContractViolation("step_iteration: batch size " + std::to_string(b) + " outside [32, 1024]");
      if (b > config_.workers[slot].memory_capacity)
        throw ContractViolation("step_iteration: batch size exceeds memory capacity of worker " +
                                std::to_string(config_.workers[slot].worker_id));
    }

    std::vector<double> compute(size());
    double slowest = 0.0;
    double min_throughput = links_.front().throughput();
    for (std::size_t slot = 0; slot < size(); ++slot) {
      const auto& w = config_.workers[slot];
      compute[slot] = w.fixed_overhead + batch_sizes[slot] / w.compute_rate;
      slowest = std::max(slowest, compute[slot]);
      min_throughput = std::min(min_throughput, links_[slot].throughput());
    }
    // Ring all-reduce moves 2(N-1)/N of the payload through the slowest link.
    const double n = static_cast<double>(size());
    const double ring = n > 1.0 ? 2.0 * (n - 1.0) / n : 0.0;
    const double comm = ring * config_.comm.payload_bytes / min_throughput + config_.comm.latency;
    const double barrier = slowest + comm;

    sim_time_ += barrier;
    std::vector<IterationOutcome> out(size());
    for (std::size_t slot = 0; slot < size(); ++slot) {
      const auto& w = config_.workers[slot];
      auto& rng = rngs_[slot];
      auto& o = out[slot];
      const int b = batch_sizes[slot];
      o.worker_id = w.worker_id;
      o.iteration_index = iteration_;
      o.batch_size = b;
      o.compute_time = compute[slot];
      o.sync_time = barrier - compute[slot];

      const NetworkSample net = links_[slot].sample(barrier, rng, config_.zero_noise);
      o.throughput_bytes = net.throughput;
      o.retransmissions = net.retransmissions;

      samples_[slot] += b;
      o.cumulative_samples = samples_[slot];
      o.model_accuracy = curve_accuracy(curve_, b, static_cast<double>(samples_[slot]));
      const double acc_sd = config_.zero_noise ? 0.0 : curve_.noise_scale / std::sqrt(static_cast<double>(b));
      o.batch_accuracy = std::clamp(o.model_accuracy + normal(rng, 0.0, acc_sd), 0.0, 1.0);

      const GradientStats g = synth_gradient_stats(curve_, b, rng, config_.zero_noise);
      o.grad_norm_std = g.sigma_norm;
      o.grad_norm_var = g.sigma_norm_sq;

      const double busy = compute[slot] / barrier;
      const double jitter = config_.zero_noise ? 0.0 : normal(rng, 0.0, 0.02);
      o.cpu_time_ratio = std::max(0.01, w.cores * busy + 0.05 + jitter);
      o.memory_utilization = std::min(1.0, static_cast<double>(b) / w.memory_capacity);
      o.sim_time = sim_time_;
      global_samples_ += b;
    }
    ++iteration_;
    return out;
  }

  std::vector<IterationOutcome> step_iteration(const std::map<int, int>& batch_by_worker) {
    std::vector<int> batches(size(), 0);
    std::vector<bool> seen(size(), false);
    for (const auto& [id, b] : batch_by_worker) {
      const std::size_t slot = slot_of(id);
      batches[slot] = b;
      seen[slot] = true;
    }
    for (std::size_t slot = 0; slot < size(); ++slot)
      if (!seen[slot])
        throw ConfigError("step_iteration: missing batch size for worker " +
                          std::to_string(config_.workers[slot].worker_id));
    return step_iteration(std::span<const int>(batches));
  }

 private:
  ClusterConfig config_;
  TrainingCurveModel curve_;
  std::map<int, std::size_t> slot_of_;
  std::vector<Rng> rngs_;
  std::vector<NetworkLink> links_;
  std::vector<long long> samples_;
  double sim_time_ = 0.0;
  long long global_samples_ = 0;
  long long iteration_ = 0;
};

// ---- JSON cluster config -------------------------------------------------

inline void to_json(nlohmann::json& j, const NetworkProfile& p) {
  j = {{"base_throughput", p.base_throughput},
       {"initial_multiplier", p.initial_multiplier},
       {"walk_step", p.walk_step},
       {"retx_rate", p.retx_rate}};
}

inline void from_json(const nlohmann::json& j, NetworkProfile& p) {
  p.base_throughput = j.value("base_throughput", p.base_throughput);
  p.initial_multiplier = j.value("initial_multiplier", p.initial_multiplier);
  p.walk_step = j.value("walk_step", p.walk_step);
  p.retx_rate = j.value("retx_rate", p.retx_rate);
  if (!(p.base_throughput > 0.0)) throw ConfigError("network.base_throughput must be > 0");
  if (p.retx_rate < 0.0) throw ConfigError("network.retx_rate must be >= 0");
}

inline void to_json(nlohmann::json& j, const TrainingCurveModel& c) {
  j = {{"a0", c.a0},       {"a1", c.a1},
       {"B_star", c.B_star}, {"tau", c.tau},
       {"noise_scale", c.noise_scale}, {"grad_dim", c.grad_dim},
       {"a1_scale", c.a1_scale}, {"reference_workers", c.reference_workers}};
}

inline void from_json(const nlohmann::json& j, TrainingCurveModel& c) {
  c.a0 = j.value("a0", c.a0);
  c.a1 = j.value("a1", c.a1);
  c.B_star = j.value("B_star", c.B_star);
  c.tau = j.value("tau", c.tau);
  c.noise_scale = j.value("noise_scale", c.noise_scale);
  c.grad_dim = j.value("grad_dim", c.grad_dim);
  c.a1_scale = j.value("a1_scale", c.a1_scale);
  c.reference_workers = j.value("reference_workers", c.reference_workers);
  if (!(c.a0 > 0.0 && c.a0 <= 1.0)) throw ConfigError("curve.a0 must be in (0, 1]");
  if (c.a1 < 0.0) throw ConfigError("curve.a1 must be >= 0");
  if (c.B_star < 32.0 || c.B_star > 1024.0) throw ConfigError("curve.B_star must be in [32, 1024]");
  if (!(c.tau > 0.0)) throw ConfigError("curve.tau must be > 0");
  if (c.noise_scale < 0.0) throw ConfigError("curve.noise_scale must be >= 0");
}

inline void to_json(nlohmann::json& j, const WorkerProfile& w) {
  j = {{"worker_id", w.worker_id},
       {"compute_rate", w.compute_rate},
       {"fixed_overhead", w.fixed_overhead},
       {"memory_capacity", w.memory_capacity},
       {"cores", w.cores}};
  if (w.seed) j["seed"] = *w.seed;
  if (w.network) j["network"] = *w.network;
}

inline void from_json(const nlohmann::json& j, WorkerProfile& w) {
  w.worker_id = j.at("worker_id").get<int>();
  w.compute_rate = j.value("compute_rate", w.compute_rate);
  w.fixed_overhead = j.value("fixed_overhead", w.fixed_overhead);
  w.memory_capacity = j.value("memory_capacity", w.memory_capacity);
  w.cores = j.value("cores", w.cores);
  if (j.contains("seed")) w.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("network")) w.network = j.at("network").get<NetworkProfile>();
}

// Heterogeneous worker set with compute rates spread evenly over [rate_min, rate_max].
inline std::vector<WorkerProfile> generate_workers(int count, double rate_min, double rate_max,
                                                   double fixed_overhead = 0.02, int memory_capacity = 1024,
                                                   double cores = 4.0) {
  if (count < 1) throw ConfigError("worker count must be >= 1");
  std::vector<WorkerProfile> out;
  for (int i = 0; i < count; ++i) {
    WorkerProfile w;
    w.worker_id = i;
    const double frac = count > 1 ? static_cast<double>(i) / (count - 1) : 0.0;
    w.compute_rate = rate_max - frac * (rate_max - rate_min);
    w.fixed_overhead = fixed_overhead;
    w.memory_capacity = memory_capacity;
    w.cores = cores;
    out.push_back(w);
  }
  return out;
}

inline void to_json(nlohmann::json& j, const ClusterConfig& c) {
  nlohmann::json net = c.network;
  net["payload_bytes"] = c.comm.payload_bytes;
  net["latency"] = c.comm.latency;
  j = {{"workers", c.workers}, {"network", net}, {"curve", c.curve}, {"seed", c.seed}, {"zero_noise", c.zero_noise}};
}

inline void from_json(const nlohmann::json& j, ClusterConfig& c) {
  if (!j.contains("workers")) throw ConfigError("cluster config: missing 'workers'");
  const auto& w = j.at("workers");
  if (w.is_array()) {
    c.workers = w.get<std::vector<WorkerProfile>>();
  } else if (w.is_object()) {
    c.workers = generate_workers(w.at("count").get<int>(), w.value("compute_rate_min", 1500.0),
                                 w.value("compute_rate_max", 4000.0), w.value("fixed_overhead", 0.02),
                                 w.value("memory_capacity", 1024), w.value("cores", 4.0));
  } else {
    throw ConfigError("cluster config: 'workers' must be an array or a generator object");
  }
  if (j.contains("network")) {
    const auto& n = j.at("network");
    c.network = n.get<NetworkProfile>();
    c.comm.payload_bytes = n.value("payload_bytes", c.comm.payload_bytes);
    c.comm.latency = n.value("latency", c.comm.latency);
  }
  if (j.contains("curve")) c.curve = j.at("curve").get<TrainingCurveModel>();
  c.seed = j.value("seed", c.seed);
  c.zero_noise = j.value("zero_noise", c.zero_noise);
}

inline ClusterConfig parse_cluster_config(const nlohmann::json& j) {
  try {
    return j.get<ClusterConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cluster config: ") + e.what());
  }
}

inline ClusterConfig load_cluster_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open cluster config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cluster config " + path + ": " + e.what());
  }
  return parse_cluster_config(j);
}

// Four heterogeneous workers, the reference calibration.
inline ClusterConfig default_cluster_config(int workers = 4, std::uint64_t seed = 1) {
  ClusterConfig c;
  c.workers = generate_workers(workers, 1500.0, 4000.0);
  c.seed = seed;
  return c;
}

}  // namespace dynamix
