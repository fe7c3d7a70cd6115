#pragma once

// The coordinator: registers workers, holds the readiness barrier, gathers one
// STATE_REPORT per worker per step, runs the shared policy, dispatches ACTIONs
// and updates the policy once per episode.

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "errors.hpp"
#include "metrics.hpp"
#include "policy.hpp"
#include "protocol.hpp"
#include "reward.hpp"
#include "rng.hpp"
#include "transport.hpp"
#include "worker.hpp"

namespace dynamix {

enum class DecisionMode { sample, greedy, noop };

inline std::string to_string(DecisionMode d) {
  switch (d) {
    case DecisionMode::sample: return "sample";
    case DecisionMode::greedy: return "greedy";
    case DecisionMode::noop: return "noop";
  }
  return "sample";
}

inline DecisionMode parse_decision_mode(const std::string& s) {
  if (s == "sample") return DecisionMode::sample;
  if (s == "greedy") return DecisionMode::greedy;
  if (s == "noop") return DecisionMode::noop;
  throw ConfigError("decision mode must be sample, greedy or noop");
}

struct ArbitratorConfig {
  std::string session_id = "dynamix";
  int episodes = 20;
  int steps = 100;
  Duration timeout{30000};
  RewardRegime regime = RewardRegime::sgd;
  RewardCoefficients coeffs;
  PPOConfig ppo;
  bool train = true;
  DecisionMode decision = DecisionMode::sample;
  std::uint64_t action_seed = 1;
  Normalizers norm;
  BatchSizeLimits limits;
  int trend_window = 5;
  double accuracy_threshold = 0.80;
  int smoothing_window = 5;
  std::size_t expected_workers = 0;  // 0 accepts however many links are handed over

  void validate() const {
    if (episodes < 1) throw ConfigError("episodes must be >= 1");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (timeout.count() <= 0) throw ConfigError("timeout must be > 0");
    if (smoothing_window < 1) throw ConfigError("smoothing window must be >= 1");
    coeffs.validate();
    ppo.validate();
    limits.validate();
  }
};

struct LogEntry {
  std::uint64_t seq = 0;
  bool outbound = false;
  double elapsed = 0.0;  // seconds since the session started (real clock)
  Message message;
};

class MessageLog {
 public:
  void record(bool outbound, const Message& m) {
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    entries_.push_back({entries_.size(), outbound, t, m});
  }
  const std::vector<LogEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
  std::vector<LogEntry> entries_;
};

inline nlohmann::json to_json_line(const LogEntry& e) {
  return {{"seq", e.seq},
          {"dir", e.outbound ? "out" : "in"},
          {"t", e.elapsed},
          {"kind", to_string(e.message.kind)},
          {"worker_id", e.message.worker_id},
          {"episode", e.message.episode},
          {"step", e.message.step},
          {"digest", hex64(fnv1a64(encode_body(e.message)))},
          {"message", to_json_document(e.message)}};
}

struct WorkerStep {
  int worker_id = 0;
  int batch_size = 0;  // batch used during this step's window
  double accuracy = 0.0;
  double model_accuracy = 0.0;
  std::optional<double> reward;  // credited to the previous action
  std::optional<int> action_index;
  int next_batch = 0;
};

struct StepRecord {
  int episode = 0;
  int step = 0;
  double sim_time = 0.0;
  double cycle_wall_time = 0.0;  // simulated seconds spent in this window
  GlobalState global;
  double mean_model_accuracy = 0.0;
  double decision_latency = 0.0;  // real seconds spent deciding
  std::vector<WorkerStep> workers;
};

struct QuartileStats {
  double mean = 0.0;
  double stddev = 0.0;
};

struct EpisodeRecord {
  int episode = 0;
  std::uint64_t policy_version = 0;  // after this episode's update (if any)
  bool updated = false;
  std::map<int, double> cumulative_reward;
  double mean_reward = 0.0;
  double median_reward = 0.0;
  double reward_variance = 0.0;  // population variance across workers
  double final_accuracy = 0.0;
  double sim_time = 0.0;
  std::optional<double> time_to_threshold;
  std::array<QuartileStats, 4> batch_quartiles{};
};

struct SessionSummary {
  int episodes = 0;
  int steps = 0;
  std::uint64_t policy_version = 0;
  std::size_t trajectory_records = 0;
  int policy_updates = 0;
  std::vector<int> worker_ids;
  std::vector<EpisodeRecord> episode_records;
  std::vector<StepRecord> step_records;
  std::vector<Trajectory> trajectories;
  PolicyParams policy;
  MessageLog log;
};

// First simulated time at which the trailing mean of `window` accuracies reaches the threshold.
inline std::optional<double> time_to_threshold(std::span<const double> accuracies, std::span<const double> times,
                                               double threshold, int window) {
  detail::require(accuracies.size() == times.size(), "time_to_threshold: length mismatch");
  const auto w = static_cast<std::size_t>(std::max(1, window));
  double sum = 0.0;
  for (std::size_t i = 0; i < accuracies.size(); ++i) {
    sum += accuracies[i];
    if (i >= w) sum -= accuracies[i - w];
    if (i + 1 >= w && sum / static_cast<double>(w) >= threshold) return times[i];
  }
  return std::nullopt;
}

inline double median_of(std::vector<double> v) {
  detail::require(!v.empty(), "median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Mean/stddev of the per-step cross-worker mean batch size, split into four
// equal runs of decision steps (the terminal report has no decision).
inline std::array<QuartileStats, 4> quartile_batch_stats(std::span<const double> mean_batch_per_step) {
  std::array<QuartileStats, 4> q{};
  const std::size_t n = mean_batch_per_step.size();
  if (n == 0) return q;
  for (std::size_t part = 0; part < 4; ++part) {
    const std::size_t lo = part * n / 4, hi = std::max(lo + 1, (part + 1) * n / 4);
    double s = 0.0, ss = 0.0;
    std::size_t c = 0;
    for (std::size_t i = lo; i < std::min(hi, n); ++i, ++c) s += mean_batch_per_step[i];
    const double m = c ? s / c : 0.0;
    for (std::size_t i = lo; i < std::min(hi, n); ++i) ss += (mean_batch_per_step[i] - m) * (mean_batch_per_step[i] - m);
    q[part] = {m, c ? std::sqrt(ss / c) : 0.0};
  }
  return q;
}

inline RewardSample compute_reward(const StateReportBody& r, RewardRegime regime, const RewardCoefficients& c) {
  const auto& s = r.local;
  return regime == RewardRegime::sgd
             ? reward_sgd(s.A_bar, s.delta_A, s.T_iter, r.batch_size, c)
             : reward_adaptive(s.A_bar, s.delta_A, s.T_iter, s.sigma_norm, s.sigma_norm_sq, r.batch_size, c);
}

struct Decision {
  int worker_id = 0;
  StateVector state{};
  ActionDelta action = ActionDelta::noop();
  double log_prob = 0.0;
};

class Arbitrator {
 public:
  Arbitrator(ArbitratorConfig config, PolicyParams policy)
      : cfg_(std::move(config)), policy_(std::move(policy)), rng_(mix_seed(cfg_.action_seed, 0xac7)) {
    cfg_.validate();
    if (policy_.input_dim() != static_cast<int>(kStateDim) || policy_.output_dim() != static_cast<int>(kNumActions))
      throw ConfigError("policy dims do not match the 14-feature state and 5 actions");
  }

  const ArbitratorConfig& config() const { return cfg_; }
  const PolicyParams& policy() const { return policy_; }

  // Called once when the session aborts (before the exception propagates).
  void on_abort(std::function<void(const std::string&)> hook) { abort_hook_ = std::move(hook); }

  // One report per registered worker, in any order. Global-state fields are shared by every input.
  std::vector<Decision> decide_actions(const std::map<int, StateReportBody>& reports, const GlobalState& global,
                                       const std::vector<int>& registered) {
    if (reports.size() != registered.size())
      throw ContractViolation("decide_actions: expected " + std::to_string(registered.size()) + " reports, got " +
                              std::to_string(reports.size()));
    std::vector<Decision> out;
    out.reserve(registered.size());
    for (int id : registered) {
      auto it = reports.find(id);
      if (it == reports.end()) throw ContractViolation("decide_actions: missing report from worker " + std::to_string(id));
      Decision d;
      d.worker_id = id;
      d.state = build_state_vector(it->second.local, global, cfg_.norm);
      if (cfg_.decision == DecisionMode::noop) {
        d.action = ActionDelta::noop();
        d.log_prob = log_prob(policy_, d.state, kNoOpIndex);
      } else {
        const auto probs = action_distribution(forward(policy_, d.state));
        const SampledAction a =
            cfg_.decision == DecisionMode::greedy ? greedy_action(probs) : sample_action(probs, rng_);
        d.action = a.action;
        d.log_prob = a.log_prob;
      }
      out.push_back(d);
    }
    return out;
  }

  SessionSummary run_session(std::vector<std::unique_ptr<Link>> links) {
    if (links.empty()) throw ConfigError("session needs at least one worker link");
    if (cfg_.expected_workers && links.size() != cfg_.expected_workers)
      throw ConfigError("expected " + std::to_string(cfg_.expected_workers) + " workers, got " +
                        std::to_string(links.size()));
    SessionSummary sum;
    try {
      handshake(links, sum);
      for (int e = 0; e < cfg_.episodes; ++e) {
        gather_ready(e, sum);
        broadcast(MessageKind::ack, e, 0, AckBody{}, sum);
        run_episode(e, sum);
      }
      gather_ready(cfg_.episodes, sum);
      broadcast_plain(MessageKind::terminate, cfg_.episodes, 0, sum);
    } catch (const SessionAborted&) {
      shutdown();
      throw;
    } catch (const ProtocolError& err) {
      abort_session(std::string("protocol error: ") + err.what(), sum);
    }
    shutdown();
    sum.episodes = cfg_.episodes;
    sum.steps = cfg_.steps;
    sum.policy_version = policy_.version;
    sum.policy = policy_;
    return sum;
  }

 private:
  struct Peer {
    std::unique_ptr<Link> link;
    int initial_batch = 256;
    int batch = 256;
  };

  [[noreturn]] void abort_session(const std::string& why, SessionSummary& sum) {
    for (auto& [id, peer] : peers_) {
      try {
        const Message m = make_message(MessageKind::terminate, cfg_.session_id, id, 0, 0);
        peer.link->send(m);
        sum.log.record(true, m);
      } catch (const std::exception&) {
      }
    }
    if (abort_hook_) abort_hook_(why);
    shutdown();
    throw SessionAborted(why);
  }

  void shutdown() {
    for (auto& [id, peer] : peers_)
      if (peer.link) peer.link->close();
    for (auto& l : pending_)
      if (l) l->close();
  }

  void send(int id, const Message& m, SessionSummary& sum) {
    try {
      peers_.at(id).link->send(m);
    } catch (const TransportError& e) {
      abort_session("worker " + std::to_string(id) + " unreachable at episode " + std::to_string(m.episode) +
                        " step " + std::to_string(m.step) + ": " + e.what(),
                    sum);
    }
    sum.log.record(true, m);
  }

  template <typename Body>
  void broadcast(MessageKind kind, int episode, int step, const Body& body, SessionSummary& sum) {
    for (int id : ids_) send(id, make_message(kind, cfg_.session_id, id, episode, step, body), sum);
  }

  void broadcast_plain(MessageKind kind, int episode, int step, SessionSummary& sum) {
    for (int id : ids_) send(id, make_message(kind, cfg_.session_id, id, episode, step), sum);
  }

  Message expect(int id, MessageKind kind, int episode, int step, SessionSummary& sum) {
    Message m;
    const std::string where = "episode " + std::to_string(episode) + " step " + std::to_string(step);
    try {
      if (auto it = inbox_.find(id); it != inbox_.end()) {
        m = std::move(it->second);
        inbox_.erase(it);
      } else {
        m = peers_.at(id).link->recv(cfg_.timeout);
      }
    } catch (const TimeoutError&) {
      // Under a shared barrier a healthy worker stalls behind a dead one, so blame a lost peer first.
      if (const auto lost = find_lost_peer(id))
        abort_session("worker " + std::to_string(*lost) + " stalled: connection lost awaiting " +
                          std::string(to_string(kind)) + " for " + where,
                      sum);
      abort_session("worker " + std::to_string(id) + " stalled: no " + std::string(to_string(kind)) + " for " + where +
                        " within " + std::to_string(cfg_.timeout.count()) + " ms",
                    sum);
    } catch (const TransportError& e) {
      abort_session("worker " + std::to_string(id) + " stalled: connection lost awaiting " +
                        std::string(to_string(kind)) + " for " + where + " (" + e.what() + ")",
                    sum);
    }
    sum.log.record(false, m);
    if (m.kind != kind || m.worker_id != id || m.episode != episode || m.step != step || m.session_id != cfg_.session_id)
      throw ProtocolError("worker " + std::to_string(id) + ": expected " + std::string(to_string(kind)) + " for " +
                          where + ", got " + std::string(to_string(m.kind)) + " (worker " +
                          std::to_string(m.worker_id) + ", episode " + std::to_string(m.episode) + ", step " +
                          std::to_string(m.step) + ")");
    return m;
  }

  // Abort path only. Whatever a probe happens to receive is kept for the next expect().
  std::optional<int> find_lost_peer(int stalled) {
    for (int other : ids_) {
      if (other == stalled || inbox_.count(other)) continue;
      try {
        inbox_.emplace(other, peers_.at(other).link->recv(Duration(1)));
      } catch (const TimeoutError&) {
      } catch (const TransportError&) {
        return other;
      }
    }
    return std::nullopt;
  }

  void handshake(std::vector<std::unique_ptr<Link>>& links, SessionSummary& sum) {
    pending_ = std::move(links);
    for (auto& link : pending_) {
      Message hello;
      try {
        hello = link->recv(cfg_.timeout);
      } catch (const ProtocolError& e) {
        reject(*link, e.what());
        throw ProtocolError(std::string("connection ") + link->describe() + " rejected at HELLO: " + e.what());
      } catch (const TransportError& e) {
        abort_session("no HELLO from " + link->describe() + ": " + e.what(), sum);
      }
      sum.log.record(false, hello);
      std::string why;
      HelloBody body;
      if (hello.kind != MessageKind::hello) {
        why = "first message must be HELLO";
      } else {
        body = payload_as<HelloBody>(hello);
        if (body.protocol_version != kProtocolVersion) why = "protocol version mismatch";
        else if (hello.session_id != cfg_.session_id) why = "unknown session '" + hello.session_id + "'";
        else if (peers_.count(hello.worker_id)) why = "duplicate worker id " + std::to_string(hello.worker_id);
        else if (!cfg_.limits.contains(body.initial_batch)) why = "initial batch outside limits";
      }
      if (!why.empty()) {
        reject(*link, why);
        throw ProtocolError("connection " + link->describe() + " (worker " + std::to_string(hello.worker_id) +
                            ") rejected at HELLO: " + why);
      }
      Peer p;
      p.link = std::move(link);
      p.initial_batch = p.batch = body.initial_batch;
      peers_.emplace(hello.worker_id, std::move(p));
    }
    pending_.clear();
    for (const auto& [id, p] : peers_) ids_.push_back(id);
    sum.worker_ids = ids_;
    for (int id : ids_) send(id, make_message(MessageKind::ack, cfg_.session_id, id, 0, 0, AckBody{}), sum);
  }

  void reject(Link& link, const std::string& why) {
    try {
      link.send(make_message(MessageKind::ack, cfg_.session_id, 0, 0, 0, AckBody{false, why}));
    } catch (const std::exception&) {
    }
    link.close();
  }

  // Readiness barrier: nothing proceeds until every registered worker is READY.
  void gather_ready(int episode, SessionSummary& sum) {
    for (int id : ids_) expect(id, MessageKind::ready, episode, 0, sum);
  }

  void run_episode(int e, SessionSummary& sum) {
    GlobalStateTracker tracker(cfg_.steps, static_cast<std::size_t>(cfg_.trend_window));
    Trajectory traj;
    std::map<int, std::size_t> last_record;
    EpisodeRecord rec;
    rec.episode = e;
    for (int id : ids_) {
      peers_.at(id).batch = peers_.at(id).initial_batch;
      rec.cumulative_reward[id] = 0.0;
    }
    std::vector<double> accs, times, mean_batches;

    for (int t = 0; t <= cfg_.steps; ++t) {
      std::map<int, StateReportBody> reports;
      for (int id : ids_) {
        const Message m = expect(id, MessageKind::state_report, e, t, sum);
        auto body = payload_as<StateReportBody>(m);
        if (body.batch_size != peers_.at(id).batch)
          throw ProtocolError("worker " + std::to_string(id) + " reported batch " + std::to_string(body.batch_size) +
                              ", expected " + std::to_string(peers_.at(id).batch));
        reports.emplace(id, std::move(body));
      }

      const auto t0 = std::chrono::steady_clock::now();
      StepRecord step;
      step.episode = e;
      step.step = t;
      std::vector<double> a_bars;
      for (int id : ids_) {
        const auto& r = reports.at(id);
        a_bars.push_back(r.local.A_bar);
        step.sim_time = std::max(step.sim_time, r.window.sim_time);
        step.cycle_wall_time += r.window.window_wall_time / ids_.size();
        step.mean_model_accuracy += r.window.model_accuracy / ids_.size();
      }
      step.global = tracker.observe(t, a_bars);

      for (int id : ids_) {
        const auto& r = reports.at(id);
        WorkerStep ws;
        ws.worker_id = id;
        ws.batch_size = r.batch_size;
        ws.accuracy = r.local.A_bar;
        ws.model_accuracy = r.window.model_accuracy;
        ws.next_batch = r.batch_size;
        if (t > 0) {
          const double reward = compute_reward(r, cfg_.regime, cfg_.coeffs).value;
          traj[last_record.at(id)].reward = reward;
          rec.cumulative_reward[id] += reward;
          ws.reward = reward;
        }
        step.workers.push_back(ws);
      }

      std::vector<Message> actions;
      if (t < cfg_.steps) {
        const auto decisions = decide_actions(reports, step.global, ids_);
        double mean_batch = 0.0;
        for (std::size_t i = 0; i < decisions.size(); ++i) {
          const auto& d = decisions[i];
          auto& peer = peers_.at(d.worker_id);
          mean_batch += static_cast<double>(peer.batch) / decisions.size();
          const int next = apply_action(peer.batch, d.action, cfg_.limits);
          last_record[d.worker_id] = traj.size();
          traj.push_back({d.state, d.action.index(), d.log_prob, 0.0, d.worker_id, t});
          ActionBody body{d.action.index(), d.action.value(), next, d.log_prob, policy_.version};
          actions.push_back(make_message(MessageKind::action, cfg_.session_id, d.worker_id, e, t, body));
          peer.batch = next;
          step.workers[i].action_index = d.action.index();
          step.workers[i].next_batch = next;
        }
        mean_batches.push_back(mean_batch);
      }
      step.decision_latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      for (const auto& m : actions) send(m.worker_id, m, sum);

      accs.push_back(step.global.val_accuracy_proxy);
      times.push_back(step.sim_time);
      if (t == cfg_.steps) {
        rec.final_accuracy = step.mean_model_accuracy;
        rec.sim_time = step.sim_time;
      }
      sum.step_records.push_back(std::move(step));
    }

    if (cfg_.train) {
      try {
        policy_ = update_policy(policy_, traj, cfg_.coeffs, cfg_.ppo);
      } catch (const NumericError& err) {
        abort_session("policy update failed after episode " + std::to_string(e) + ": " + err.what(), sum);
      }
      rec.updated = true;
      ++sum.policy_updates;
    }
    rec.policy_version = policy_.version;

    std::vector<double> cums;
    for (const auto& [id, c] : rec.cumulative_reward) cums.push_back(c);
    rec.mean_reward = std::accumulate(cums.begin(), cums.end(), 0.0) / cums.size();
    rec.median_reward = median_of(cums);
    for (double c : cums) rec.reward_variance += (c - rec.mean_reward) * (c - rec.mean_reward) / cums.size();
    rec.time_to_threshold = time_to_threshold(accs, times, cfg_.accuracy_threshold, cfg_.smoothing_window);
    rec.batch_quartiles = quartile_batch_stats(mean_batches);
    sum.trajectory_records += traj.size();
    sum.trajectories.push_back(std::move(traj));
    sum.episode_records.push_back(rec);

    broadcast(MessageKind::episode_end, e, cfg_.steps, EpisodeEndBody{e, policy_.version, rec.updated}, sum);
  }

  ArbitratorConfig cfg_;
  PolicyParams policy_;
  Rng rng_;
  std::map<int, Peer> peers_;
  std::vector<int> ids_;
  std::vector<std::unique_ptr<Link>> pending_;
  std::map<int, Message> inbox_;
  std::function<void(const std::string&)> abort_hook_;
};

// Rebuilds every episode's trajectory buffer from the message log alone.
inline std::vector<Trajectory> replay_trajectories(const MessageLog& log, const ArbitratorConfig& cfg) {
  std::map<int, std::map<int, std::map<int, StateReportBody>>> reports;  // episode -> step -> worker
  std::map<int, std::map<int, std::map<int, ActionBody>>> actions;
  for (const auto& e : log.entries()) {
    const auto& m = e.message;
    if (!e.outbound && m.kind == MessageKind::state_report)
      reports[m.episode][m.step].emplace(m.worker_id, payload_as<StateReportBody>(m));
    else if (e.outbound && m.kind == MessageKind::action)
      actions[m.episode][m.step].emplace(m.worker_id, payload_as<ActionBody>(m));
  }
  std::vector<Trajectory> out;
  for (auto& [episode, steps] : reports) {
    GlobalStateTracker tracker(cfg.steps, static_cast<std::size_t>(cfg.trend_window));
    Trajectory traj;
    std::map<int, std::size_t> last;
    for (auto& [t, by_worker] : steps) {
      std::vector<double> a_bars;
      for (const auto& [id, r] : by_worker) a_bars.push_back(r.local.A_bar);
      const GlobalState g = tracker.observe(t, a_bars);
      for (const auto& [id, r] : by_worker)
        if (t > 0) traj[last.at(id)].reward = compute_reward(r, cfg.regime, cfg.coeffs).value;
      auto acts = actions[episode].find(t);
      if (acts == actions[episode].end()) continue;
      for (const auto& [id, a] : acts->second) {
        last[id] = traj.size();
        traj.push_back({build_state_vector(by_worker.at(id).local, g, cfg.norm), a.action_index, a.log_prob, 0.0, id, t});
      }
    }
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace dynamix
