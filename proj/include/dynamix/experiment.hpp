#pragma once

// Run orchestration and artifacts: train / infer / baseline / report.
// Every run directory holds the resolved config, a manifest with the config
// hash and seeds, and schema-versioned CSV/JSONL outputs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "session.hpp"

namespace dynamix {

inline constexpr int kArtifactSchemaVersion = 1;
inline constexpr const char* kCodeVersion = "dynamix-1.0.0";

enum class RunMode { train, infer, baseline, report };

inline std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::train: return "train";
    case RunMode::infer: return "infer";
    case RunMode::baseline: return "baseline";
    case RunMode::report: return "report";
  }
  return "train";
}

inline RunMode parse_run_mode(const std::string& s) {
  if (s == "train") return RunMode::train;
  if (s == "infer") return RunMode::infer;
  if (s == "baseline") return RunMode::baseline;
  if (s == "report") return RunMode::report;
  throw ConfigError("mode must be train, infer, baseline or report");
}

struct SchedulePreset {
  std::string name;
  int episodes = 20;
  int steps = 100;
  RewardRegime regime = RewardRegime::sgd;
};

inline SchedulePreset schedule_preset(const std::string& name) {
  if (name == "sgd-100") return {name, 20, 100, RewardRegime::sgd};
  if (name == "adaptive-70") return {name, 20, 70, RewardRegime::adaptive};
  if (name == "large-120") return {name, 20, 120, RewardRegime::sgd};
  throw ConfigError("unknown preset '" + name + "' (expected sgd-100, adaptive-70 or large-120)");
}

// Everything a run needs, fully resolved.
struct RunConfig {
  RunMode mode = RunMode::train;
  std::string preset = "sgd-100";
  ClusterConfig cluster = default_cluster_config();
  ArbitratorConfig session;
  int k = 8;
  int gain_window = 0;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "runs/out";
  TransportKind transport = TransportKind::inproc;
  std::string listen = "127.0.0.1:0";
  std::optional<std::string> checkpoint;
  std::vector<int> batch_sizes;  // baseline sweep
  std::vector<int> compare_batches{32, 64, 128, 256};
  bool compare_static = false;   // infer: also run static baselines per seed
  bool message_log = false;
  int hidden = 64;

  void validate() const {
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (k < 2) throw ConfigError("k must be >= 2");
    if (mode == RunMode::report) return;
    session.validate();
    if (mode == RunMode::infer && !checkpoint) throw ConfigError("infer requires --checkpoint");
    if (checkpoint && !std::filesystem::exists(*checkpoint))
      throw ConfigError("checkpoint not found: " + *checkpoint);
    if (mode == RunMode::baseline) {
      if (batch_sizes.empty()) throw ConfigError("baseline requires at least one --batch-size");
      for (int b : batch_sizes)
        if (b < kMinBatch || b > kMaxBatch)
          throw ConfigError("baseline batch size " + std::to_string(b) + " outside [32, 1024]");
    }
    for (int b : compare_batches)
      if (b < kMinBatch || b > kMaxBatch) throw ConfigError("comparison batch size outside [32, 1024]");
  }
};

inline nlohmann::json session_to_json(const ArbitratorConfig& a) {
  return {{"session_id", a.session_id},
          {"episodes", a.episodes},
          {"steps", a.steps},
          {"timeout_ms", a.timeout.count()},
          {"regime", to_string(a.regime)},
          {"decision", to_string(a.decision)},
          {"train", a.train},
          {"initial_batch", a.limits.initial},
          {"x_min", a.limits.x_min},
          {"x_max", a.limits.x_max},
          {"trend_window", a.trend_window},
          {"accuracy_threshold", a.accuracy_threshold},
          {"smoothing_window", a.smoothing_window}};
}

inline void session_from_json(const nlohmann::json& j, ArbitratorConfig& a, int& k, int& gain_window) {
  a.session_id = j.value("session_id", a.session_id);
  a.episodes = j.value("episodes", a.episodes);
  a.steps = j.value("steps", a.steps);
  a.timeout = Duration(j.value("timeout_ms", static_cast<long long>(a.timeout.count())));
  if (j.contains("regime")) a.regime = parse_regime(j.at("regime").get<std::string>());
  if (j.contains("decision")) a.decision = parse_decision_mode(j.at("decision").get<std::string>());
  a.limits.initial = j.value("initial_batch", a.limits.initial);
  a.limits.x_min = j.value("x_min", a.limits.x_min);
  a.limits.x_max = j.value("x_max", a.limits.x_max);
  a.trend_window = j.value("trend_window", a.trend_window);
  a.accuracy_threshold = j.value("accuracy_threshold", a.accuracy_threshold);
  a.smoothing_window = j.value("smoothing_window", a.smoothing_window);
  k = j.value("k", k);
  gain_window = j.value("gain_window", gain_window);
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json s = session_to_json(c.session);
  s["k"] = c.k;
  s["gain_window"] = c.gain_window;
  nlohmann::json j = {{"mode", to_string(c.mode)},
                      {"preset", c.preset},
                      {"cluster", c.cluster},
                      {"session", s},
                      {"reward", c.session.coeffs},
                      {"ppo", c.session.ppo},
                      {"normalizers", c.session.norm},
                      {"seeds", c.seeds},
                      {"transport", to_string(c.transport)},
                      {"batch_sizes", c.batch_sizes},
                      {"hidden", c.hidden}};
  if (c.checkpoint) j["checkpoint"] = *c.checkpoint;
  return j;
}

// Applies a config document on top of `c`. The cluster may be given under
// "cluster" or as the top-level document itself.
inline void apply_config_document(const nlohmann::json& j, RunConfig& c) {
  try {
    if (j.contains("preset")) {
      c.preset = j.at("preset").get<std::string>();
      const auto p = schedule_preset(c.preset);
      c.session.episodes = p.episodes;
      c.session.steps = p.steps;
      c.session.regime = p.regime;
    }
    if (j.contains("cluster")) c.cluster = parse_cluster_config(j.at("cluster"));
    else if (j.contains("workers")) c.cluster = parse_cluster_config(j);
    if (j.contains("session")) session_from_json(j.at("session"), c.session, c.k, c.gain_window);
    if (j.contains("reward")) c.session.coeffs = j.at("reward").get<RewardCoefficients>();
    if (j.contains("ppo")) c.session.ppo = j.at("ppo").get<PPOConfig>();
    if (j.contains("normalizers")) c.session.norm = j.at("normalizers").get<Normalizers>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.hidden = j.value("hidden", c.hidden);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---- CSV / JSONL writers --------------------------------------------------

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }

inline const char* kEpisodeCsvHeader =
    "episode,policy_version,updated,mean_cum_reward,median_cum_reward,reward_var,final_accuracy,"
    "time_to_threshold,sim_time,q1_batch_mean,q1_batch_std,q2_batch_mean,q2_batch_std,q3_batch_mean,"
    "q3_batch_std,q4_batch_mean,q4_batch_std";

inline std::string episode_csv(const std::vector<EpisodeRecord>& records) {
  std::ostringstream os;
  os << kEpisodeCsvHeader << '\n';
  for (const auto& r : records) {
    os << r.episode << ',' << r.policy_version << ',' << (r.updated ? 1 : 0) << ',' << fmt_double(r.mean_reward)
       << ',' << fmt_double(r.median_reward) << ',' << fmt_double(r.reward_variance) << ','
       << fmt_double(r.final_accuracy) << ',' << fmt_opt(r.time_to_threshold) << ',' << fmt_double(r.sim_time);
    for (const auto& q : r.batch_quartiles) os << ',' << fmt_double(q.mean) << ',' << fmt_double(q.stddev);
    os << '\n';
  }
  return os.str();
}

inline std::string worker_reward_csv(const std::vector<EpisodeRecord>& records) {
  std::ostringstream os;
  os << "episode,worker_id,cumulative_reward\n";
  for (const auto& r : records)
    for (const auto& [id, c] : r.cumulative_reward) os << r.episode << ',' << id << ',' << fmt_double(c) << '\n';
  return os.str();
}

inline std::string trajectory_csv(const std::vector<StepRecord>& steps) {
  std::ostringstream os;
  os << "episode,step,worker_id,batch_size,next_batch,action_index,accuracy,model_accuracy,reward,sim_time\n";
  for (const auto& s : steps)
    for (const auto& w : s.workers)
      os << s.episode << ',' << s.step << ',' << w.worker_id << ',' << w.batch_size << ',' << w.next_batch << ','
         << (w.action_index ? std::to_string(*w.action_index) : std::string()) << ',' << fmt_double(w.accuracy) << ','
         << fmt_double(w.model_accuracy) << ',' << fmt_opt(w.reward) << ',' << fmt_double(s.sim_time) << '\n';
  return os.str();
}

inline nlohmann::json step_json(const StepRecord& s) {
  nlohmann::json workers = nlohmann::json::array();
  double mean_batch = 0.0;
  for (const auto& w : s.workers) {
    nlohmann::json o = {{"worker_id", w.worker_id}, {"batch_size", w.batch_size}, {"next_batch", w.next_batch},
                        {"accuracy", w.accuracy},   {"model_accuracy", w.model_accuracy}};
    o["reward"] = w.reward ? nlohmann::json(*w.reward) : nlohmann::json(nullptr);
    o["action_index"] = w.action_index ? nlohmann::json(*w.action_index) : nlohmann::json(nullptr);
    workers.push_back(o);
    mean_batch += static_cast<double>(w.batch_size) / s.workers.size();
  }
  return {{"schema", kArtifactSchemaVersion},
          {"episode", s.episode},
          {"step", s.step},
          {"sim_time", s.sim_time},
          {"cycle_wall_time", s.cycle_wall_time},
          {"global", s.global},
          {"mean_model_accuracy", s.mean_model_accuracy},
          {"mean_batch", mean_batch},
          {"decision_latency_s", s.decision_latency},
          {"workers", workers}};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

struct RunArtifacts {
  std::filesystem::path dir;
  SessionSummary summary;
};

inline std::uint64_t config_hash(const nlohmann::json& resolved) {
  return fnv1a64(std::string(kCodeVersion) + "\n" + resolved.dump());
}

inline void write_run_dir(const std::filesystem::path& dir, const RunConfig& cfg, std::uint64_t seed,
                          const SessionSummary& sum, std::optional<int> batch_size) {
  std::filesystem::create_directories(dir);
  nlohmann::json resolved = to_json(cfg);
  resolved["seeds"] = {seed};
  if (batch_size) resolved["batch_sizes"] = {*batch_size};
  write_text(dir / "config.json", resolved.dump(2) + "\n");
  write_text(dir / "episodes.csv", episode_csv(sum.episode_records));
  write_text(dir / "worker_rewards.csv", worker_reward_csv(sum.episode_records));
  write_text(dir / "trajectory.csv", trajectory_csv(sum.step_records));
  {
    std::ofstream out(dir / "steps.jsonl", std::ios::trunc);
    for (const auto& s : sum.step_records) out << step_json(s).dump() << '\n';
  }
  std::vector<std::string> files{"config.json", "episodes.csv", "worker_rewards.csv", "trajectory.csv", "steps.jsonl"};
  if (cfg.message_log) {
    std::ofstream out(dir / "messages.jsonl", std::ios::trunc);
    for (const auto& e : sum.log.entries()) out << to_json_line(e).dump() << '\n';
    files.push_back("messages.jsonl");
  }
  if (cfg.mode == RunMode::train) {
    save_checkpoint(sum.policy, (dir / "policy.ckpt").string());
    files.push_back("policy.ckpt");
  }
  nlohmann::json manifest = {{"schema", kArtifactSchemaVersion},
                             {"code_version", kCodeVersion},
                             {"mode", to_string(cfg.mode)},
                             {"seed", seed},
                             {"config_hash", hex64(config_hash(resolved))},
                             {"episodes", sum.episodes},
                             {"steps", sum.steps},
                             {"workers", sum.worker_ids},
                             {"policy_version", sum.policy_version},
                             {"policy_updates", sum.policy_updates},
                             {"trajectory_records", sum.trajectory_records},
                             {"transport", to_string(cfg.transport)},
                             {"files", files}};
  if (batch_size) manifest["batch_size"] = *batch_size;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---- sessions per mode ----------------------------------------------------

inline SessionSpec make_spec(const RunConfig& cfg, std::uint64_t seed, const PolicyParams& policy) {
  SessionSpec spec;
  spec.cluster = cfg.cluster;
  spec.cluster.seed = seed;
  spec.arbitrator = cfg.session;
  spec.arbitrator.action_seed = seed;
  spec.policy = policy;
  spec.k = cfg.k;
  spec.gain_window = cfg.gain_window;
  spec.transport = cfg.transport;
  spec.listen = cfg.listen;
  return spec;
}

inline SessionSummary train_session(const RunConfig& cfg, std::uint64_t seed) {
  PolicyParams init = cfg.checkpoint ? load_checkpoint(*cfg.checkpoint) : make_policy(seed, cfg.hidden);
  SessionSpec spec = make_spec(cfg, seed, init);
  spec.arbitrator.train = true;
  return run_simulated_session(spec).summary;
}

inline SessionSummary infer_session(const RunConfig& cfg, std::uint64_t seed, const PolicyParams& policy) {
  SessionSpec spec = make_spec(cfg, seed, policy);
  spec.arbitrator.train = false;
  return run_simulated_session(spec).summary;
}

inline SessionSummary baseline_session(const RunConfig& cfg, std::uint64_t seed, int batch_size) {
  SessionSpec spec = make_spec(cfg, seed, make_policy(seed, cfg.hidden));
  spec.arbitrator.train = false;
  spec.arbitrator.decision = DecisionMode::noop;
  spec.arbitrator.limits.initial = batch_size;
  return run_simulated_session(spec).summary;
}

inline std::filesystem::path seed_dir(const RunConfig& cfg, const std::filesystem::path& base, std::uint64_t seed) {
  return cfg.seeds.size() > 1 ? base / ("seed_" + std::to_string(seed)) : base;
}

struct Comparison {
  std::uint64_t seed = 0;
  double policy_final = 0.0;
  std::optional<double> policy_ttt;
  int best_static_batch = 0;
  double best_static_final = 0.0;
  std::optional<double> fastest_static_ttt;
  bool beats_accuracy = false;
  bool within_time = false;
};

inline std::string comparison_csv(const std::vector<Comparison>& rows) {
  std::ostringstream os;
  os << "seed,policy_final_accuracy,policy_time_to_threshold,best_static_batch,best_static_final_accuracy,"
        "fastest_static_time_to_threshold,beats_accuracy,within_time\n";
  for (const auto& r : rows)
    os << r.seed << ',' << fmt_double(r.policy_final) << ',' << fmt_opt(r.policy_ttt) << ',' << r.best_static_batch
       << ',' << fmt_double(r.best_static_final) << ',' << fmt_opt(r.fastest_static_ttt) << ','
       << (r.beats_accuracy ? 1 : 0) << ',' << (r.within_time ? 1 : 0) << '\n';
  return os.str();
}

// Final-episode comparison of a policy run against static runs on the same seed.
inline Comparison compare_to_static(std::uint64_t seed, const EpisodeRecord& policy,
                                    const std::map<int, EpisodeRecord>& statics, double time_slack = 1.1) {
  Comparison c;
  c.seed = seed;
  c.policy_final = policy.final_accuracy;
  c.policy_ttt = policy.time_to_threshold;
  for (const auto& [b, r] : statics) {
    if (r.final_accuracy > c.best_static_final || c.best_static_batch == 0) {
      c.best_static_final = r.final_accuracy;
      c.best_static_batch = b;
    }
    if (r.time_to_threshold && (!c.fastest_static_ttt || *r.time_to_threshold < *c.fastest_static_ttt))
      c.fastest_static_ttt = r.time_to_threshold;
  }
  c.beats_accuracy = c.policy_final >= c.best_static_final;
  // With no static run at the threshold, reaching it at all is enough.
  c.within_time = c.policy_ttt && (!c.fastest_static_ttt || *c.policy_ttt <= time_slack * *c.fastest_static_ttt);
  return c;
}

inline std::vector<RunArtifacts> cmd_train(const RunConfig& cfg) {
  std::vector<RunArtifacts> out;
  for (std::uint64_t seed : cfg.seeds) {
    auto sum = train_session(cfg, seed);
    const auto dir = seed_dir(cfg, cfg.out_dir, seed);
    write_run_dir(dir, cfg, seed, sum, std::nullopt);
    out.push_back({dir, std::move(sum)});
  }
  return out;
}

inline std::vector<RunArtifacts> cmd_infer(const RunConfig& cfg) {
  const PolicyParams policy = load_checkpoint(*cfg.checkpoint);
  std::vector<RunArtifacts> out;
  std::vector<Comparison> rows;
  for (std::uint64_t seed : cfg.seeds) {
    auto sum = infer_session(cfg, seed, policy);
    const auto dir = seed_dir(cfg, cfg.out_dir, seed);
    write_run_dir(dir, cfg, seed, sum, std::nullopt);
    if (cfg.compare_static) {
      std::map<int, EpisodeRecord> statics;
      for (int b : cfg.compare_batches) statics[b] = baseline_session(cfg, seed, b).episode_records.back();
      rows.push_back(compare_to_static(seed, sum.episode_records.back(), statics));
    }
    out.push_back({dir, std::move(sum)});
  }
  if (cfg.compare_static) {
    std::filesystem::create_directories(cfg.out_dir);
    write_text(std::filesystem::path(cfg.out_dir) / "comparison.csv", comparison_csv(rows));
  }
  return out;
}

inline std::vector<RunArtifacts> cmd_baseline(const RunConfig& cfg) {
  std::vector<RunArtifacts> out;
  for (int b : cfg.batch_sizes)
    for (std::uint64_t seed : cfg.seeds) {
      auto sum = baseline_session(cfg, seed, b);
      const auto dir = seed_dir(cfg, std::filesystem::path(cfg.out_dir) / ("batch_" + std::to_string(b)), seed);
      write_run_dir(dir, cfg, seed, sum, b);
      out.push_back({dir, std::move(sum)});
    }
  return out;
}

// ---- report ---------------------------------------------------------------

class MissingArtifacts : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct RunReport {
  std::string run;
  std::string mode;
  std::uint64_t seed = 0;
  std::optional<int> batch_size;
  int episodes = 0;
  bool versions_monotone = true;
  std::uint64_t last_version = 0;
  double final_accuracy = 0.0;
  std::optional<double> time_to_threshold;
  double reward_first5_median = 0.0;
  double reward_last5_median = 0.0;
  double q1_batch_mean = 0.0;
  double q4_batch_mean = 0.0;
};

inline std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline RunReport report_run(const std::filesystem::path& root, const std::filesystem::path& dir) {
  std::vector<std::string> missing;
  for (const char* f : {"manifest.json", "episodes.csv", "steps.jsonl"})
    if (!std::filesystem::exists(dir / f)) missing.push_back((dir / f).string());
  if (!missing.empty()) {
    std::string msg = "missing artifacts:";
    for (const auto& m : missing) msg += " " + m;
    throw MissingArtifacts(msg);
  }
  const auto manifest = read_json_file((dir / "manifest.json").string());
  RunReport r;
  r.run = std::filesystem::relative(dir, root).string();
  if (r.run.empty()) r.run = ".";
  r.mode = manifest.value("mode", "");
  r.seed = manifest.value("seed", std::uint64_t{0});
  if (manifest.contains("batch_size")) r.batch_size = manifest.at("batch_size").get<int>();

  const auto rows = read_csv_rows(dir / "episodes.csv");
  if (rows.empty() || rows.front().empty() || rows.front().front() != "episode")
    throw MissingArtifacts("malformed episodes.csv in " + dir.string());
  std::vector<double> means;
  std::uint64_t prev = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    if (c.size() < 9) throw MissingArtifacts("malformed row in " + (dir / "episodes.csv").string());
    const auto v = std::stoull(c[1]);
    if (i > 1 && v < prev) r.versions_monotone = false;
    prev = v;
    means.push_back(std::stod(c[3]));
    r.final_accuracy = std::stod(c[6]);
    r.time_to_threshold = c[7].empty() ? std::nullopt : std::optional<double>(std::stod(c[7]));
  }
  r.episodes = static_cast<int>(means.size());
  r.last_version = prev;
  if (!means.empty()) {
    const std::size_t n = std::min<std::size_t>(5, means.size());
    r.reward_first5_median = median_of({means.begin(), means.begin() + n});
    r.reward_last5_median = median_of({means.end() - n, means.end()});
  }

  // Quartile batch means of the last episode, from the step log (decision steps only).
  std::ifstream steps(dir / "steps.jsonl");
  std::string line;
  std::map<int, std::vector<double>> per_episode;
  while (std::getline(steps, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    bool decided = false;
    for (const auto& w : j.at("workers")) decided = decided || !w.at("action_index").is_null();
    if (decided) per_episode[j.at("episode").get<int>()].push_back(j.at("mean_batch").get<double>());
  }
  if (!per_episode.empty()) {
    const auto q = quartile_batch_stats(per_episode.rbegin()->second);
    r.q1_batch_mean = q[0].mean;
    r.q4_batch_mean = q[3].mean;
  }
  return r;
}

inline std::string report_csv(const std::vector<RunReport>& rows) {
  std::ostringstream os;
  os << "run,mode,seed,batch_size,episodes,last_policy_version,versions_monotone,final_accuracy,"
        "time_to_threshold,reward_first5_median,reward_last5_median,q1_batch_mean,q4_batch_mean\n";
  for (const auto& r : rows)
    os << r.run << ',' << r.mode << ',' << r.seed << ',' << (r.batch_size ? std::to_string(*r.batch_size) : "") << ','
       << r.episodes << ',' << r.last_version << ',' << (r.versions_monotone ? 1 : 0) << ','
       << fmt_double(r.final_accuracy) << ',' << fmt_opt(r.time_to_threshold) << ','
       << fmt_double(r.reward_first5_median) << ',' << fmt_double(r.reward_last5_median) << ','
       << fmt_double(r.q1_batch_mean) << ',' << fmt_double(r.q4_batch_mean) << '\n';
  return os.str();
}

// Scans for run directories (those holding manifest.json) and writes summary.csv.
inline std::vector<RunReport> cmd_report(const std::string& out_dir) {
  const std::filesystem::path root(out_dir);
  if (!std::filesystem::is_directory(root)) throw MissingArtifacts("missing artifacts: " + out_dir + " (no such directory)");
  std::vector<std::filesystem::path> dirs;
  if (std::filesystem::exists(root / "manifest.json")) dirs.push_back(root);
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() == "manifest.json" && e.path().parent_path() != root)
      dirs.push_back(e.path().parent_path());
  if (dirs.empty())
    throw MissingArtifacts("missing artifacts in " + out_dir + ": manifest.json episodes.csv steps.jsonl");
  std::sort(dirs.begin(), dirs.end());
  std::vector<RunReport> rows;
  for (const auto& d : dirs) rows.push_back(report_run(root, d));
  write_text(root / "summary.csv", report_csv(rows));
  return rows;
}

}  // namespace dynamix
