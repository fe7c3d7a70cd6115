#pragma once

#include <algorithm>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "metrics.hpp"
#include "policy.hpp"
#include "protocol.hpp"
#include "simenv.hpp"
#include "transport.hpp"

namespace dynamix {

struct BatchSizeLimits {
  int x_min = kMinBatch;
  int x_max = kMaxBatch;
  int initial = 256;

  void validate() const {
    if (x_min < kMinBatch || x_max > kMaxBatch || x_min > x_max)
      throw ConfigError("batch limits must satisfy 32 <= x_min <= x_max <= 1024");
    if (initial < x_min || initial > x_max) throw ConfigError("initial batch size outside [x_min, x_max]");
  }

  bool contains(int b) const { return b >= x_min && b <= x_max; }
};

inline int apply_action(int batch_size, ActionDelta action, const BatchSizeLimits& limits = {}) {
  return std::clamp(batch_size + action.value(), limits.x_min, limits.x_max);
}

// Where a worker's per-iteration measurements come from. The simulator is
// one implementation; a real collector could be another.
class MetricSource {
 public:
  virtual ~MetricSource() = default;
  // Runs k iterations at the given batch size and returns this worker's outcomes.
  virtual std::vector<IterationOutcome> collect(int worker_id, int batch_size, int k) = 0;
  // Restores initial conditions for a new episode.
  virtual void begin_episode(int worker_id) = 0;
};

// One simulator shared by several worker threads. Each call blocks until
// every worker of the cluster has arrived, so the simulator advances in
// lock-step regardless of thread scheduling.
class SharedCluster final : public MetricSource {
 public:
  explicit SharedCluster(ClusterConfig config)
      : cluster_(std::move(config)), pending_(cluster_.size(), 0), results_(cluster_.size()) {}

  std::vector<IterationOutcome> collect(int worker_id, int batch_size, int k) override {
    detail::require(k >= 1, "collect: k must be >= 1");
    const std::size_t slot = cluster_.slot_of(worker_id);
    std::unique_lock lock(mu_);
    if (k_ != 0 && k_ != k) throw ContractViolation("collect: workers disagree on k");
    k_ = k;
    pending_[slot] = batch_size;
    arrive(lock, [&] {
      for (auto& r : results_) r.clear();
      for (int i = 0; i < k_; ++i) {
        auto outs = cluster_.step_iteration(std::span<const int>(pending_));
        for (std::size_t s = 0; s < outs.size(); ++s) results_[s].push_back(outs[s]);
      }
      k_ = 0;
    });
    return results_[slot];
  }

  void begin_episode(int worker_id) override {
    (void)cluster_.slot_of(worker_id);
    std::unique_lock lock(mu_);
    arrive(lock, [&] { cluster_.reset(); });
  }

  // Wakes every blocked worker with SessionAborted.
  void abort(const std::string& why) {
    {
      std::lock_guard lock(mu_);
      aborted_ = why.empty() ? "aborted" : why;
    }
    cv_.notify_all();
  }

  const Cluster& cluster() const { return cluster_; }

 private:
  template <typename Fn>
  void arrive(std::unique_lock<std::mutex>& lock, Fn&& last_one) {
    if (!aborted_.empty()) throw SessionAborted("shared cluster: " + aborted_);
    const std::uint64_t gen = generation_;
    if (++arrived_ == cluster_.size()) {
      arrived_ = 0;
      try {
        last_one();
      } catch (...) {
        aborted_ = "simulator step failed";
        cv_.notify_all();
        throw;
      }
      ++generation_;
      cv_.notify_all();
      return;
    }
    cv_.wait(lock, [&] { return generation_ != gen || !aborted_.empty(); });
    if (generation_ == gen) throw SessionAborted("shared cluster: " + aborted_);
  }

  Cluster cluster_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<int> pending_;
  std::vector<std::vector<IterationOutcome>> results_;
  std::size_t arrived_ = 0;
  std::uint64_t generation_ = 0;
  int k_ = 0;
  std::string aborted_;
};

// k iterations at the current batch size, aggregated into a report body.
inline StateReportBody run_cycle(MetricSource& source, int worker_id, int batch_size, int k, int gain_window = 0) {
  detail::require(k >= 2, "run_cycle: k must be >= 2");
  AggregateWindow w{worker_id, k, source.collect(worker_id, batch_size, k)};
  if (w.outcomes.size() != static_cast<std::size_t>(k))
    throw ContractViolation("run_cycle: metric source returned " + std::to_string(w.outcomes.size()) +
                            " outcomes, expected " + std::to_string(k));
  StateReportBody r;
  r.local = aggregate_window(w, gain_window);
  r.batch_size = batch_size;
  r.window.iterations = k;
  r.window.first_iteration = w.outcomes.front().iteration_index;
  for (const auto& o : w.outcomes) {
    r.window.window_wall_time += o.wall_time();
    r.window.retransmissions += o.retransmissions;
  }
  r.window.sim_time = w.outcomes.back().sim_time;
  r.window.model_accuracy = w.outcomes.back().model_accuracy;
  r.window.cumulative_samples = w.outcomes.back().cumulative_samples;
  return r;
}

struct WorkerConfig {
  int worker_id = 0;
  std::string session_id = "dynamix";
  int k = 8;
  int gain_window = 0;  // 0 selects the default for k
  BatchSizeLimits limits;
  Duration timeout{30000};
  int protocol_version = kProtocolVersion;
  // Failure injection: stop responding (close the link) instead of sending this report.
  std::optional<std::pair<int, int>> drop_at;  // (episode, step)
};

struct WorkerSummary {
  int episodes = 0;
  int reports = 0;
  int actions = 0;
  bool dropped = false;
};

class WorkerRuntime {
 public:
  WorkerRuntime(WorkerConfig config, Link& link, MetricSource& source)
      : cfg_(std::move(config)), link_(link), source_(source) {
    cfg_.limits.validate();
  }

  int batch_size() const { return batch_; }

  WorkerSummary run() {
    WorkerSummary sum;
    Message hello = make_message(MessageKind::hello, cfg_.session_id, cfg_.worker_id, 0, 0,
                                 HelloBody{cfg_.protocol_version, cfg_.limits.initial});
    hello.version = cfg_.protocol_version;
    link_.send(hello);
    const Message reply = link_.recv(cfg_.timeout);
    if (reply.kind != MessageKind::ack) throw ProtocolError("worker: expected ACK to HELLO");
    const auto ack = payload_as<AckBody>(reply);
    if (!ack.accepted) throw ProtocolError("worker " + std::to_string(cfg_.worker_id) + " rejected: " + ack.reason);

    for (int episode = 0;; ++episode) {
      source_.begin_episode(cfg_.worker_id);
      batch_ = cfg_.limits.initial;
      link_.send(make_message(MessageKind::ready, cfg_.session_id, cfg_.worker_id, episode, 0));
      const Message go = link_.recv(cfg_.timeout);
      if (go.kind == MessageKind::terminate) break;
      if (go.kind != MessageKind::ack) throw ProtocolError("worker: expected ACK or TERMINATE after READY");

      for (int step = 0;; ++step) {
        if (cfg_.drop_at && cfg_.drop_at->first == episode && cfg_.drop_at->second == step) {
          link_.close();
          sum.dropped = true;
          return sum;
        }
        const StateReportBody report = run_cycle(source_, cfg_.worker_id, batch_, cfg_.k, cfg_.gain_window);
        link_.send(make_message(MessageKind::state_report, cfg_.session_id, cfg_.worker_id, episode, step, report));
        ++sum.reports;
        const Message m = link_.recv(cfg_.timeout);
        if (m.kind == MessageKind::episode_end) break;
        if (m.kind == MessageKind::terminate) return sum;
        if (m.kind != MessageKind::action || m.step != step || m.episode != episode)
          throw ProtocolError("worker " + std::to_string(cfg_.worker_id) + ": unexpected " +
                              std::string(to_string(m.kind)) + " at step " + std::to_string(step));
        const auto body = payload_as<ActionBody>(m);
        const int expected = apply_action(batch_, ActionDelta::from_index(body.action_index), cfg_.limits);
        if (expected != body.batch_size)
          throw ProtocolError("worker: ACTION batch echo " + std::to_string(body.batch_size) +
                              " disagrees with clamped result " + std::to_string(expected));
        batch_ = expected;
        ++sum.actions;
      }
      ++sum.episodes;
    }
    return sum;
  }

 private:
  WorkerConfig cfg_;
  Link& link_;
  MetricSource& source_;
  int batch_ = 256;
};

}  // namespace dynamix
