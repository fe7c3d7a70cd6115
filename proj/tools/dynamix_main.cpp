// dynamix: train / infer / baseline / report over the simulated cluster.
// Exit codes: 0 success, 1 runtime abort, 2 usage or configuration error.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <dynamix/experiment.hpp>

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("dynamix");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");
  const char* env = std::getenv("DYNAMIX_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

struct Flags {
  std::string mode = "train";
  std::string config;
  std::string preset;
  std::vector<std::uint64_t> seeds;
  int episodes = 0;
  int steps = 0;
  int k = 0;
  int workers = 0;
  std::vector<int> batch_sizes;
  std::string checkpoint;
  std::string out = "runs/out";
  std::string transport = "inproc";
  std::string listen = "127.0.0.1:0";
  std::string decision;
  std::string regime;
  long long timeout_ms = 0;
  double threshold = -1.0;
  std::optional<double> alpha, beta, delta, eta, gamma;
  bool compare_static = false;
  bool message_log = false;
};

dynamix::RunConfig resolve(const Flags& f) {
  using namespace dynamix;
  RunConfig c;
  c.mode = parse_run_mode(f.mode);
  if (!f.config.empty()) {
    if (!std::filesystem::exists(f.config)) throw ConfigError("config not found: " + f.config);
    apply_config_document(read_json_file(f.config), c);
  }
  if (!f.preset.empty()) {
    const auto p = schedule_preset(f.preset);
    c.preset = p.name;
    c.session.episodes = p.episodes;
    c.session.steps = p.steps;
    c.session.regime = p.regime;
  }
  // Frozen-policy and static runs default to one episode; each episode restarts from the same seed.
  if (c.mode == RunMode::infer || c.mode == RunMode::baseline) c.session.episodes = 1;
  if (f.episodes > 0) c.session.episodes = f.episodes;
  if (f.steps > 0) c.session.steps = f.steps;
  if (f.k > 0) c.k = f.k;
  if (f.workers > 0) {
    if (!f.config.empty()) throw ConfigError("--workers conflicts with a cluster given by --config");
    c.cluster.workers = generate_workers(f.workers, 1500.0, 4000.0);
  }
  if (!f.seeds.empty()) c.seeds = f.seeds;
  c.batch_sizes = f.batch_sizes;
  if (!f.checkpoint.empty()) c.checkpoint = f.checkpoint;
  c.out_dir = f.out;
  c.transport = parse_transport(f.transport);
  c.listen = f.listen;
  if (c.mode == RunMode::infer) c.session.decision = DecisionMode::greedy;
  if (!f.decision.empty()) c.session.decision = parse_decision_mode(f.decision);
  if (!f.regime.empty()) c.session.regime = parse_regime(f.regime);
  if (f.timeout_ms > 0) c.session.timeout = Duration(f.timeout_ms);
  if (f.threshold >= 0.0) c.session.accuracy_threshold = f.threshold;
  if (f.alpha) c.session.coeffs.alpha = *f.alpha;
  if (f.beta) c.session.coeffs.beta = *f.beta;
  if (f.delta) c.session.coeffs.delta = *f.delta;
  if (f.eta) c.session.coeffs.eta = *f.eta;
  if (f.gamma) c.session.coeffs.gamma = *f.gamma;
  c.compare_static = f.compare_static;
  c.message_log = f.message_log;
  c.validate();
  return c;
}

void log_runs(const std::vector<dynamix::RunArtifacts>& runs) {
  for (const auto& r : runs) {
    const auto& last = r.summary.episode_records.back();
    spdlog::info("{}: {} episodes, policy v{}, final accuracy {:.4f}, last mean reward {:.3f}", r.dir.string(),
                 r.summary.episodes, r.summary.policy_version, last.final_accuracy, last.mean_reward);
  }
}

int run(const dynamix::RunConfig& cfg) {
  using namespace dynamix;
  spdlog::debug("resolved config: {}", to_json(cfg).dump());
  switch (cfg.mode) {
    case RunMode::train: log_runs(cmd_train(cfg)); break;
    case RunMode::infer: log_runs(cmd_infer(cfg)); break;
    case RunMode::baseline: log_runs(cmd_baseline(cfg)); break;
    case RunMode::report: {
      const auto rows = cmd_report(cfg.out_dir);
      std::cout << report_csv(rows);
      spdlog::info("wrote {}/summary.csv ({} runs)", cfg.out_dir, rows.size());
      break;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Batch-size arbitration over a simulated BSP cluster"};
  Flags f;
  app.add_option("--mode", f.mode, "train | infer | baseline | report")
      ->check(CLI::IsMember({"train", "infer", "baseline", "report"}));
  app.add_option("--config", f.config, "cluster/run config JSON");
  app.add_option("--preset", f.preset, "schedule preset")->check(CLI::IsMember({"sgd-100", "adaptive-70", "large-120"}));
  app.add_option("--seed", f.seeds, "seed (repeatable)")->allow_extra_args(false);
  app.add_option("--episodes", f.episodes, "episodes per session");
  app.add_option("--steps", f.steps, "decision steps per episode");
  app.add_option("--k", f.k, "iterations per decision cycle");
  app.add_option("--workers", f.workers, "number of simulated workers (default cluster only)");
  app.add_option("--batch-size", f.batch_sizes, "static batch size (repeatable, baseline mode)")->allow_extra_args(false);
  app.add_option("--checkpoint", f.checkpoint, "policy checkpoint (infer; optional warm start for train)");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--transport", f.transport, "inproc | socket")->check(CLI::IsMember({"inproc", "socket"}));
  app.add_option("--listen", f.listen, "arbitrator listen address for --transport socket");
  app.add_option("--decision", f.decision, "sample | greedy | noop")->check(CLI::IsMember({"sample", "greedy", "noop"}));
  app.add_option("--regime", f.regime, "reward regime")->check(CLI::IsMember({"sgd", "adaptive"}));
  app.add_option("--timeout-ms", f.timeout_ms, "per-message timeout");
  app.add_option("--threshold", f.threshold, "accuracy threshold for time-to-threshold");
  app.add_option("--alpha", f.alpha, "accuracy-gain weight");
  app.add_option("--beta", f.beta, "iteration-time weight");
  app.add_option("--delta", f.delta, "batch-size regularization weight");
  app.add_option("--eta", f.eta, "gradient-noise weight (adaptive regime)");
  app.add_option("--gamma", f.gamma, "discount factor");
  app.add_flag("--compare-static", f.compare_static, "infer: also run static baselines and write comparison.csv");
  app.add_flag("--message-log", f.message_log, "write messages.jsonl with every protocol message");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    return run(resolve(f));
  } catch (const dynamix::ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const dynamix::ContractViolation& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("aborted: {}", e.what());
    return 1;
  }
}
