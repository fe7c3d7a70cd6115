#pragma once

// Wires an arbitrator to simulated workers running on their own threads,
// over either the in-process transport or loopback TCP.

#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "arbitrator.hpp"
#include "simenv.hpp"
#include "transport.hpp"
#include "worker.hpp"

namespace dynamix {

enum class TransportKind { inproc, socket };

inline std::string to_string(TransportKind t) { return t == TransportKind::inproc ? "inproc" : "socket"; }

inline TransportKind parse_transport(const std::string& s) {
  if (s == "inproc" || s == "in-process") return TransportKind::inproc;
  if (s == "socket" || s == "tcp") return TransportKind::socket;
  throw ConfigError("transport must be inproc or socket");
}

struct SessionSpec {
  ClusterConfig cluster;
  ArbitratorConfig arbitrator;
  PolicyParams policy;
  int k = 8;
  int gain_window = 0;
  TransportKind transport = TransportKind::inproc;
  std::string listen = "127.0.0.1:0";
  std::map<int, std::pair<int, int>> drop_at;  // worker id -> (episode, step)
  std::map<int, int> protocol_version_override;
};

struct SessionResult {
  SessionSummary summary;
  std::map<int, WorkerSummary> workers;
  std::optional<Endpoint> endpoint;  // set for socket sessions
};

inline SessionResult run_simulated_session(const SessionSpec& spec) {
  if (spec.cluster.workers.empty()) throw ConfigError("cluster has no workers");
  auto shared = std::make_shared<SharedCluster>(spec.cluster);
  ArbitratorConfig acfg = spec.arbitrator;
  acfg.expected_workers = spec.cluster.workers.size();
  Arbitrator arb(acfg, spec.policy);
  arb.on_abort([shared](const std::string& why) { shared->abort(why); });

  SessionResult result;
  std::mutex result_mu;
  std::vector<std::thread> threads;
  std::vector<std::unique_ptr<Link>> arb_links;
  std::vector<std::unique_ptr<Link>> worker_links(spec.cluster.workers.size());
  std::unique_ptr<TcpListener> listener;

  auto worker_config = [&](const WorkerProfile& w) {
    WorkerConfig wc;
    wc.worker_id = w.worker_id;
    wc.session_id = acfg.session_id;
    wc.k = spec.k;
    wc.gain_window = spec.gain_window;
    wc.limits = acfg.limits;
    wc.limits.x_max = std::min(wc.limits.x_max, w.memory_capacity);
    wc.limits.initial = std::min(wc.limits.initial, wc.limits.x_max);
    wc.timeout = acfg.timeout;
    if (auto it = spec.drop_at.find(w.worker_id); it != spec.drop_at.end()) wc.drop_at = it->second;
    if (auto it = spec.protocol_version_override.find(w.worker_id); it != spec.protocol_version_override.end())
      wc.protocol_version = it->second;
    return wc;
  };

  if (spec.transport == TransportKind::inproc) {
    for (std::size_t i = 0; i < spec.cluster.workers.size(); ++i) {
      auto [a, w] = make_inproc_pair("worker" + std::to_string(spec.cluster.workers[i].worker_id));
      arb_links.push_back(std::move(a));
      worker_links[i] = std::move(w);
    }
  } else {
    listener = std::make_unique<TcpListener>(parse_endpoint(spec.listen));
    result.endpoint = listener->endpoint();
  }

  std::vector<std::exception_ptr> worker_errors(spec.cluster.workers.size());
  for (std::size_t i = 0; i < spec.cluster.workers.size(); ++i) {
    const WorkerConfig wc = worker_config(spec.cluster.workers[i]);
    Link* pre = worker_links[i].get();
    const std::optional<Endpoint> ep = result.endpoint;
    threads.emplace_back([&, i, wc, pre, ep] {
      std::unique_ptr<Link> own;
      Link* link = pre;
      try {
        if (!link) {
          own = tcp_connect(*ep, wc.timeout);
          link = own.get();
        }
        WorkerRuntime rt(wc, *link, *shared);
        const WorkerSummary ws = rt.run();
        std::lock_guard lock(result_mu);
        result.workers[wc.worker_id] = ws;
      } catch (...) {
        worker_errors[i] = std::current_exception();
        if (link) link->close();  // lets the arbitrator notice at once instead of timing out
        shared->abort("worker " + std::to_string(wc.worker_id) + " failed");
      }
    });
  }

  std::exception_ptr arb_error;
  try {
    if (listener)
      for (std::size_t i = 0; i < spec.cluster.workers.size(); ++i) arb_links.push_back(listener->accept(acfg.timeout));
    result.summary = arb.run_session(std::move(arb_links));
  } catch (...) {
    arb_error = std::current_exception();
    shared->abort("arbitrator stopped");
    for (auto& l : arb_links)
      if (l) l->close();
    for (auto& l : worker_links)
      if (l) l->close();
  }
  for (auto& t : threads) t.join();
  if (arb_error) std::rethrow_exception(arb_error);
  for (auto& e : worker_errors)
    if (e) std::rethrow_exception(e);
  return result;
}

}  // namespace dynamix
