#pragma once

// Per-worker state aggregation over a k-iteration decision window, plus the
// global state shared by every worker at a decision step.

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "simenv.hpp"

namespace dynamix {

inline constexpr std::size_t kLocalFeatures = 11;
inline constexpr std::size_t kGlobalFeatures = 3;
inline constexpr std::size_t kStateDim = kLocalFeatures + kGlobalFeatures;

using StateVector = std::array<double, kStateDim>;

struct AggregateWindow {
  int worker_id = 0;
  int k = 0;
  std::vector<IterationOutcome> outcomes;
};

struct LocalState {
  double Tp = 0.0;
  double Rtx = 0.0;
  double cpu_ratio = 0.0;
  double mem_util = 0.0;
  double A_bar = 0.0;
  double sigma_batch = 0.0;
  double delta_A = 0.0;
  double T_iter = 0.0;
  double sigma_norm = 0.0;
  double sigma_norm_sq = 0.0;
  double batch_size_norm = 0.0;

  bool operator==(const LocalState&) const = default;
};

struct GlobalState {
  double loss_trend = 0.0;
  double val_accuracy_proxy = 0.0;
  double progress = 0.0;

  bool operator==(const GlobalState&) const = default;
};

// Divisors applied feature-by-feature, in state-vector order.
struct Normalizers {
  double throughput = 1.0e9;
  double retransmissions = 100.0;
  double cpu_ratio = 4.0;  // num_cores
  double mem_util = 1.0;
  double A_bar = 1.0;
  double sigma_batch = 1.0;
  double delta_A = 1.0;
  double T_iter = 1.0;  // seconds
  double sigma_norm = 1.0;
  double sigma_norm_sq = 1.0;
  double batch_size_norm = 1.0;
  double loss_trend = 0.01;
  double val_accuracy = 1.0;
  double progress = 1.0;

  static Normalizers unit() {
    Normalizers n;
    n.throughput = n.retransmissions = n.cpu_ratio = n.T_iter = n.loss_trend = 1.0;
    return n;
  }

  std::array<double, kStateDim> as_array() const {
    return {throughput, retransmissions, cpu_ratio, mem_util, A_bar,      sigma_batch,  delta_A,
            T_iter,     sigma_norm,      sigma_norm_sq, batch_size_norm, loss_trend, val_accuracy, progress};
  }
};

// log2(B) - 5 scaled so that [32, 1024] maps onto [0, 1].
inline double encode_batch_size(int batch_size) {
  return (std::log2(static_cast<double>(batch_size)) - 5.0) / 5.0;
}

inline int default_gain_window(int k) { return std::max(1, std::min(std::max(2, k / 4), k / 2)); }

// Z-score the series (population std), take sliding means of width w, and
// return last-window mean minus first-window mean. Zero-variance series give 0.
inline double accuracy_gain(std::span<const double> accuracies, int window_w) {
  detail::require(window_w >= 1, "accuracy_gain: window must be >= 1");
  const std::size_t n = accuracies.size();
  const std::size_t w = static_cast<std::size_t>(window_w);
  detail::require(n >= 2 * w, "accuracy_gain: series shorter than two windows");
  const double mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : accuracies) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / n);
  if (sd == 0.0 || !std::isfinite(sd)) return 0.0;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < w; ++i) {
    first += (accuracies[i] - mean) / sd;
    last += (accuracies[n - w + i] - mean) / sd;
  }
  return (last - first) / w;
}

inline void validate_window(const AggregateWindow& window) {
  detail::require(window.k >= 2, "aggregate_window: k must be >= 2");
  detail::require(window.outcomes.size() == static_cast<std::size_t>(window.k),
                  "aggregate_window: window must hold exactly k outcomes");
  for (std::size_t i = 0; i < window.outcomes.size(); ++i) {
    const auto& o = window.outcomes[i];
    detail::require(o.worker_id == window.worker_id, "aggregate_window: outcome from another worker");
    if (i > 0)
      detail::require(o.iteration_index == window.outcomes[i - 1].iteration_index + 1,
                      "aggregate_window: iteration indices must be contiguous");
  }
}

inline LocalState aggregate_window(const AggregateWindow& window, int gain_window = 0) {
  validate_window(window);
  const auto& os = window.outcomes;
  const double k = static_cast<double>(os.size());
  LocalState s;
  double cpu = 0.0, wall = 0.0;
  std::vector<double> acc;
  acc.reserve(os.size());
  for (const auto& o : os) {
    s.Tp += o.throughput_bytes;
    s.Rtx += static_cast<double>(o.retransmissions);
    cpu += o.cpu_time_ratio * o.wall_time();
    wall += o.wall_time();
    s.mem_util += o.memory_utilization;
    s.A_bar += o.batch_accuracy;
    s.sigma_norm += o.grad_norm_std;
    s.sigma_norm_sq += o.grad_norm_var;
    acc.push_back(o.batch_accuracy);
  }
  s.Tp /= k;
  s.cpu_ratio = wall > 0.0 ? cpu / wall : 0.0;
  s.mem_util /= k;
  s.A_bar /= k;
  s.sigma_norm /= k;
  s.sigma_norm_sq /= k;
  s.T_iter = wall / k;
  double ss = 0.0;
  for (double a : acc) ss += (a - s.A_bar) * (a - s.A_bar);
  s.sigma_batch = std::sqrt(ss / k);
  const int w = gain_window > 0 ? gain_window : default_gain_window(window.k);
  s.delta_A = accuracy_gain(acc, w);
  s.batch_size_norm = encode_batch_size(os.back().batch_size);
  return s;
}

inline StateVector build_state_vector(const LocalState& local, const GlobalState& global,
                                      const Normalizers& norm = {}) {
  const std::array<double, kStateDim> raw{local.Tp,         local.Rtx,          local.cpu_ratio,
                                          local.mem_util,   local.A_bar,        local.sigma_batch,
                                          local.delta_A,    local.T_iter,       local.sigma_norm,
                                          local.sigma_norm_sq, local.batch_size_norm, global.loss_trend,
                                          global.val_accuracy_proxy, global.progress};
  const auto div = norm.as_array();
  StateVector out{};
  for (std::size_t i = 0; i < kStateDim; ++i) {
    detail::require(div[i] != 0.0 && std::isfinite(div[i]), "build_state_vector: invalid normalizer");
    out[i] = raw[i] / div[i];
    if (!std::isfinite(out[i]))
      throw ContractViolation("build_state_vector: non-finite feature at index " + std::to_string(i));
  }
  return out;
}

// Tracks the cross-worker accuracy history of one episode.
class GlobalStateTracker {
 public:
  explicit GlobalStateTracker(int total_steps, std::size_t trend_window = 5)
      : total_steps_(std::max(1, total_steps)), trend_window_(std::max<std::size_t>(2, trend_window)) {}

  // Call once per decision step with every worker's A_bar.
  GlobalState observe(int step, std::span<const double> worker_accuracies) {
    detail::require(!worker_accuracies.empty(), "GlobalStateTracker: no accuracies");
    detail::require(step >= last_step_, "GlobalStateTracker: steps must not go backwards");
    last_step_ = step;
    const double mean =
        std::accumulate(worker_accuracies.begin(), worker_accuracies.end(), 0.0) / worker_accuracies.size();
    loss_.push_back(1.0 - mean);
    if (loss_.size() > trend_window_) loss_.pop_front();
    GlobalState g;
    g.val_accuracy_proxy = mean;
    g.progress = std::clamp(static_cast<double>(step) / total_steps_, 0.0, 1.0);
    g.loss_trend = slope();
    return g;
  }

  void reset() {
    loss_.clear();
    last_step_ = 0;
  }

 private:
  // Least-squares slope of loss over the retained points (per step).
  double slope() const {
    const std::size_t n = loss_.size();
    if (n < 2) return 0.0;
    const double xm = (n - 1) / 2.0;
    const double ym = std::accumulate(loss_.begin(), loss_.end(), 0.0) / n;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num += (i - xm) * (loss_[i] - ym);
      den += (i - xm) * (i - xm);
    }
    return num / den;
  }

  int total_steps_;
  std::size_t trend_window_;
  std::deque<double> loss_;
  int last_step_ = 0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LocalState, Tp, Rtx, cpu_ratio, mem_util, A_bar, sigma_batch, delta_A, T_iter,
                                   sigma_norm, sigma_norm_sq, batch_size_norm)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GlobalState, loss_trend, val_accuracy_proxy, progress)

inline void to_json(nlohmann::json& j, const Normalizers& n) {
  j = {{"throughput", n.throughput},       {"retransmissions", n.retransmissions},
       {"cpu_ratio", n.cpu_ratio},         {"mem_util", n.mem_util},
       {"A_bar", n.A_bar},                 {"sigma_batch", n.sigma_batch},
       {"delta_A", n.delta_A},             {"T_iter", n.T_iter},
       {"sigma_norm", n.sigma_norm},       {"sigma_norm_sq", n.sigma_norm_sq},
       {"batch_size_norm", n.batch_size_norm}, {"loss_trend", n.loss_trend},
       {"val_accuracy", n.val_accuracy},   {"progress", n.progress}};
}

inline void from_json(const nlohmann::json& j, Normalizers& n) {
  n.throughput = j.value("throughput", n.throughput);
  n.retransmissions = j.value("retransmissions", n.retransmissions);
  n.cpu_ratio = j.value("cpu_ratio", n.cpu_ratio);
  n.mem_util = j.value("mem_util", n.mem_util);
  n.A_bar = j.value("A_bar", n.A_bar);
  n.sigma_batch = j.value("sigma_batch", n.sigma_batch);
  n.delta_A = j.value("delta_A", n.delta_A);
  n.T_iter = j.value("T_iter", n.T_iter);
  n.sigma_norm = j.value("sigma_norm", n.sigma_norm);
  n.sigma_norm_sq = j.value("sigma_norm_sq", n.sigma_norm_sq);
  n.batch_size_norm = j.value("batch_size_norm", n.batch_size_norm);
  n.loss_trend = j.value("loss_trend", n.loss_trend);
  n.val_accuracy = j.value("val_accuracy", n.val_accuracy);
  n.progress = j.value("progress", n.progress);
}

}  // namespace dynamix
