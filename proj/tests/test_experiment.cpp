#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <dynamix/experiment.hpp>

using namespace dynamix;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dynamix_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(DYNAMIX_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kConfigs = DYNAMIX_CONFIG_DIR;

}  // namespace

TEST(Cli, TrainWritesEpisodesAndCheckpoint) {
  const auto out = scratch("train");
  ASSERT_EQ(cli("--mode train --preset sgd-100 --steps 10 --seed 3 --out " + out.string()), 0);
  const auto rows = read_csv_rows(out / "episodes.csv");
  EXPECT_EQ(rows.size(), 21u);  // header plus 20 episodes
  const PolicyParams p = load_checkpoint((out / "policy.ckpt").string());
  EXPECT_EQ(p.version, 20u);
  const auto manifest = read_json_file((out / "manifest.json").string());
  EXPECT_EQ(manifest.at("policy_updates").get<int>(), 20);
  fs::remove_all(out);
}

TEST(Cli, SameSeedGivesIdenticalArtifacts) {
  const auto a = scratch("rep_a"), b = scratch("rep_b");
  const std::string args = "--mode train --episodes 2 --steps 12 --seed 5 --out ";
  ASSERT_EQ(cli(args + a.string()), 0);
  ASSERT_EQ(cli(args + b.string()), 0);
  EXPECT_EQ(slurp(a / "episodes.csv"), slurp(b / "episodes.csv"));
  EXPECT_EQ(slurp(a / "trajectory.csv"), slurp(b / "trajectory.csv"));
  EXPECT_EQ(slurp(a / "policy.ckpt"), slurp(b / "policy.ckpt"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto out = scratch("errors");
  fs::create_directories(out);
  const auto ckpt = out / "narrow.ckpt";
  save_checkpoint(make_policy(1, 8, 10), ckpt.string());
  EXPECT_EQ(cli("--mode infer --checkpoint " + ckpt.string() + " --out " + (out / "i").string()), 2);
  EXPECT_EQ(cli("--mode infer --out " + (out / "i").string()), 2);
  EXPECT_EQ(cli("--mode baseline --batch-size 2048 --out " + (out / "b").string()), 2);
  EXPECT_EQ(cli("--mode baseline --batch-size 16 --out " + (out / "b").string()), 2);
  EXPECT_EQ(cli("--mode report --out " + (out / "empty").string()), 2);
  EXPECT_EQ(cli("--mode train --config " + (out / "missing.json").string()), 2);
  EXPECT_EQ(cli("--mode bogus"), 2);
  fs::remove_all(out);
}

TEST(Cli, SocketBindFailureExitsOne) {
  const auto out = scratch("bind");
  EXPECT_EQ(cli("--mode train --episodes 1 --steps 4 --transport socket --listen 256.0.0.1:0 --out " + out.string()),
            1);
  fs::remove_all(out);
}

TEST(Cli, InferBaselineReportPipeline) {
  const auto out = scratch("pipeline");
  ASSERT_EQ(cli("--mode train --episodes 2 --steps 10 --seed 2 --out " + (out / "train").string()), 0);
  ASSERT_EQ(cli("--mode infer --steps 10 --seed 2 --checkpoint " + (out / "train/policy.ckpt").string() + " --out " +
                (out / "infer").string()),
            0);
  const auto manifest = read_json_file((out / "infer/manifest.json").string());
  EXPECT_EQ(manifest.at("policy_updates").get<int>(), 0);
  EXPECT_EQ(manifest.at("mode").get<std::string>(), "infer");
  EXPECT_FALSE(fs::exists(out / "infer/policy.ckpt"));

  ASSERT_EQ(cli("--mode baseline --steps 10 --batch-size 64 --batch-size 256 --seed 2 --out " +
                (out / "static").string()),
            0);
  EXPECT_TRUE(fs::exists(out / "static/batch_64/episodes.csv"));
  EXPECT_TRUE(fs::exists(out / "static/batch_256/episodes.csv"));
  // Static runs never move the batch size.
  const auto traj = read_csv_rows(out / "static/batch_64/trajectory.csv");
  ASSERT_GT(traj.size(), 1u);
  for (std::size_t i = 1; i < traj.size(); ++i) EXPECT_EQ(traj[i][3], "64");

  ASSERT_EQ(cli("--mode report --out " + out.string()), 0);
  const auto summary = read_csv_rows(out / "summary.csv");
  ASSERT_EQ(summary.size(), 5u);  // header plus four runs
  EXPECT_EQ(summary[0][0], "run");
  fs::remove_all(out);
}

TEST(Cli, TransferInferWritesComparison) {
  const auto out = scratch("transfer");
  ASSERT_EQ(cli("--mode train --config " + kConfigs + "/transfer-a.json --episodes 1 --steps 10 --out " +
                (out / "a").string()),
            0);
  ASSERT_EQ(cli("--mode infer --config " + kConfigs + "/transfer-b.json --steps 10 --seed 201 --seed 202 " +
                "--compare-static --checkpoint " + (out / "a/policy.ckpt").string() + " --out " +
                (out / "b").string()),
            0);
  const auto rows = read_csv_rows(out / "b/comparison.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "201");
  EXPECT_EQ(rows[2][0], "202");
  EXPECT_TRUE(fs::exists(out / "b/seed_201/episodes.csv"));
  fs::remove_all(out);
}

TEST(Experiment, RunConfigSurvivesJson) {
  RunConfig c;
  apply_config_document(read_json_file(kConfigs + "/scale-16.json"), c);
  c.validate();
  const nlohmann::json j = to_json(c);
  RunConfig back;
  apply_config_document(j, back);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.cluster.workers.size(), 16u);
  EXPECT_EQ(back.session.coeffs.alpha, 2.0);
}

TEST(Experiment, ConfigDocumentErrorsAreTyped) {
  RunConfig c;
  EXPECT_THROW(apply_config_document(nlohmann::json{{"preset", "nope"}}, c), ConfigError);
  EXPECT_THROW(apply_config_document(nlohmann::json{{"seeds", "x"}}, c), ConfigError);
  EXPECT_THROW(read_json_file("/nonexistent/dynamix.json"), ConfigError);
}

TEST(Experiment, ComparisonRules) {
  EpisodeRecord policy, s64, s256;
  policy.final_accuracy = 0.80;
  policy.time_to_threshold = 10.5;
  s64.final_accuracy = 0.79;
  s64.time_to_threshold = 10.0;
  s256.final_accuracy = 0.81;
  const auto c = compare_to_static(1, policy, {{64, s64}, {256, s256}}, 1.1);
  EXPECT_EQ(c.best_static_batch, 256);
  EXPECT_FALSE(c.beats_accuracy);
  EXPECT_TRUE(c.within_time);
  policy.time_to_threshold = 11.5;
  EXPECT_FALSE(compare_to_static(1, policy, {{64, s64}}, 1.1).within_time);
  policy.time_to_threshold.reset();
  EXPECT_FALSE(compare_to_static(1, policy, {{256, s256}}, 1.1).within_time);
}

TEST(Experiment, TrainedPolicyBeatsUniformRandom) {
  RunConfig cfg;
  apply_config_document(read_json_file(kConfigs + "/default.json"), cfg);
  cfg.validate();
  const PolicyParams trained = train_session(cfg, 1).policy;

  RunConfig eval = cfg;
  eval.mode = RunMode::infer;
  eval.session.episodes = 1;
  eval.session.decision = DecisionMode::greedy;
  const double mine = infer_session(eval, 101, trained).episode_records.back().final_accuracy;
  eval.session.decision = DecisionMode::sample;
  const double random =
      infer_session(eval, 101, constant_policy({0, 0, 0, 0, 0}, cfg.hidden)).episode_records.back().final_accuracy;
  EXPECT_GT(mine, random);
}
