#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <dynamix/simenv.hpp>

using namespace dynamix;

namespace {

ClusterConfig two_worker_barrier_config() {
  ClusterConfig c;
  WorkerProfile a, b;
  a.worker_id = 0;
  a.compute_rate = 1000.0;
  a.fixed_overhead = 0.0;
  b.worker_id = 1;
  b.compute_rate = 500.0;
  b.fixed_overhead = 0.0;
  c.workers = {a, b};
  c.comm.payload_bytes = 0.0;
  c.comm.latency = 0.0;
  return c;
}

}  // namespace

TEST(SimEnv, StragglerSetsTheBarrier) {
  Cluster cluster(two_worker_barrier_config());
  const std::vector<int> batches{100, 100};
  const auto out = cluster.step_iteration(std::span<const int>(batches));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_DOUBLE_EQ(out[0].compute_time, 0.1);
  EXPECT_DOUBLE_EQ(out[1].compute_time, 0.2);
  EXPECT_DOUBLE_EQ(out[0].wall_time(), 0.2);
  EXPECT_DOUBLE_EQ(out[1].wall_time(), 0.2);
  EXPECT_DOUBLE_EQ(out[0].sim_time, 0.2);
  EXPECT_DOUBLE_EQ(out[1].sim_time, 0.2);
  EXPECT_DOUBLE_EQ(out[1].sync_time, 0.0);
}

TEST(SimEnv, ZeroNoiseScaleGivesTheCurveValue) {
  ClusterConfig c = default_cluster_config(1, 7);
  c.curve.noise_scale = 0.0;
  Cluster cluster(c);
  const std::vector<int> b{128};
  for (int i = 0; i < 5; ++i) {
    const auto o = cluster.step_iteration(std::span<const int>(b)).front();
    EXPECT_EQ(o.batch_accuracy, curve_accuracy(cluster.curve(), 128, static_cast<double>(o.cumulative_samples)));
    EXPECT_EQ(o.grad_norm_std, 0.0);
  }
}

TEST(SimEnv, OracleModeIsFullyDeterministic) {
  ClusterConfig c = default_cluster_config(3, 1);
  c.zero_noise = true;
  Cluster cluster(c);
  const std::vector<int> b{64, 256, 1024};
  const auto o = cluster.step_iteration(std::span<const int>(b));
  for (const auto& w : o) EXPECT_EQ(w.batch_accuracy, w.model_accuracy);
}

TEST(SimEnv, AsymptoteAtPivotIsA0) {
  TrainingCurveModel m;
  m.a0 = 0.82;
  m.a1 = 0.03;
  m.B_star = 64;
  EXPECT_DOUBLE_EQ(accuracy_asymptote(m, 64), 0.82);
  EXPECT_NEAR(accuracy_asymptote(m, 256), 0.76, 1e-15);
  EXPECT_DOUBLE_EQ(accuracy_asymptote(m, 32), 0.82);
  m.B_star = 32;
  EXPECT_DOUBLE_EQ(accuracy_asymptote(m, 32), m.a0);
}

TEST(SimEnv, CurveApproachesAsymptote) {
  TrainingCurveModel m;
  EXPECT_DOUBLE_EQ(curve_accuracy(m, 128, 0.0), 0.0);
  EXPECT_NEAR(curve_accuracy(m, 128, 1e9), accuracy_asymptote(m, 128), 1e-12);
  EXPECT_LT(curve_accuracy(m, 128, 1000.0), curve_accuracy(m, 128, 2000.0));
}

TEST(SimEnv, WorkerCountSteepensPenalty) {
  TrainingCurveModel m;
  m.a1_scale = 0.25;
  m.reference_workers = 4;
  EXPECT_DOUBLE_EQ(scaled_curve(m, 4).a1, m.a1);
  EXPECT_DOUBLE_EQ(scaled_curve(m, 2).a1, m.a1);
  EXPECT_DOUBLE_EQ(scaled_curve(m, 16).a1, m.a1 * 1.5);
  m.a1_scale = 0.0;
  EXPECT_DOUBLE_EQ(scaled_curve(m, 32).a1, m.a1);
}

TEST(SimEnv, UncongestedLinkHasNoRetransmissions) {
  NetworkProfile p;
  p.initial_multiplier = 1.0;
  p.walk_step = 0.0;
  NetworkLink link(p);
  EXPECT_EQ(link.expected_retransmissions(2.0), 0.0);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(link.sample(2.0, rng).retransmissions, 0);
}

TEST(SimEnv, RetransmissionMeanMatchesMonteCarlo) {
  NetworkProfile p;
  p.initial_multiplier = 0.5;
  p.walk_step = 0.0;
  p.retx_rate = 10.0;
  NetworkLink link(p);
  EXPECT_DOUBLE_EQ(link.expected_retransmissions(2.0), 10.0);
  Rng rng(11);
  const int draws = 100000;
  double sum = 0.0;
  for (int i = 0; i < draws; ++i) sum += static_cast<double>(sample_network_metrics(link, 2.0, rng).retransmissions);
  // Poisson(10): standard error of the mean is sqrt(10/1e5) = 0.01.
  EXPECT_NEAR(sum / draws, 10.0, 0.05);
}

TEST(SimEnv, ThroughputScalesWithMultiplier) {
  NetworkProfile p;
  p.base_throughput = 1e9;
  p.initial_multiplier = 0.1;
  NetworkLink link(p);
  EXPECT_DOUBLE_EQ(link.throughput(), 1e8);
}

TEST(SimEnv, CongestionWalkStaysInBounds) {
  NetworkProfile p;
  p.walk_step = 0.3;
  NetworkLink link(p);
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    link.sample(1.0, rng);
    ASSERT_GE(link.multiplier(), NetworkProfile::kMinMultiplier);
    ASSERT_LE(link.multiplier(), NetworkProfile::kMaxMultiplier);
  }
}

TEST(SimEnv, GradientStatsDegenerateAndDefinition) {
  TrainingCurveModel m;
  m.noise_scale = 0.0;
  Rng rng(1);
  const auto z = synth_gradient_stats(m, 100, rng);
  EXPECT_EQ(z.sigma_norm, 0.0);
  EXPECT_EQ(z.sigma_norm_sq, 0.0);

  m.noise_scale = 0.3 * std::sqrt(100.0);
  const auto g = synth_gradient_stats(m, 100, rng, true);
  EXPECT_NEAR(g.sigma_norm, 0.3, 1e-15);
  EXPECT_NEAR(g.sigma_norm_sq, 0.09, 1e-15);
  Rng rng2(2);
  for (int i = 0; i < 100; ++i) {
    const auto s = synth_gradient_stats(TrainingCurveModel{}, 64, rng2);
    EXPECT_DOUBLE_EQ(s.sigma_norm_sq, s.sigma_norm * s.sigma_norm);
  }
}

TEST(SimEnv, GradientNoiseFollowsInverseSqrtBatch) {
  TrainingCurveModel m;
  Rng r100(42), r400(42);
  const int draws = 100000;
  double s100 = 0.0, s400 = 0.0;
  for (int i = 0; i < draws; ++i) {
    s100 += synth_gradient_stats(m, 100, r100).sigma_norm;
    s400 += synth_gradient_stats(m, 400, r400).sigma_norm;
  }
  EXPECT_NEAR(s100 / s400, 2.0, 1e-9);  // same stream: the chi factor cancels draw by draw
  Rng a(1), b(2);
  s100 = s400 = 0.0;
  for (int i = 0; i < draws; ++i) {
    s100 += synth_gradient_stats(m, 100, a).sigma_norm;
    s400 += synth_gradient_stats(m, 400, b).sigma_norm;
  }
  EXPECT_NEAR(s100 / s400, 2.0, 0.01);
}

TEST(SimEnv, BarrierInvariantHoldsUnderRandomBatches) {
  Cluster cluster(default_cluster_config(6, 9));
  Rng pick(17);
  for (int it = 0; it < 200; ++it) {
    std::vector<int> b(6);
    for (int& x : b) x = 32 + static_cast<int>(uniform01(pick) * 993);
    const double before = cluster.sim_time();
    const auto out = cluster.step_iteration(std::span<const int>(b));
    const double barrier = out.front().wall_time();
    double slowest = 0.0;
    for (const auto& o : out) {
      EXPECT_NEAR(o.wall_time(), barrier, 1e-12);
      EXPECT_GE(o.sync_time, 0.0);
      EXPECT_EQ(o.sim_time, out.front().sim_time);
      slowest = std::max(slowest, o.compute_time);
    }
    EXPECT_GT(barrier, slowest);
    EXPECT_NEAR(cluster.sim_time() - before, barrier, 1e-9);
  }
  EXPECT_EQ(cluster.iteration(), 200);
}

TEST(SimEnv, ResetReplaysTheSameStream) {
  Cluster a(default_cluster_config(4, 3));
  Cluster b(default_cluster_config(4, 3));
  const std::vector<int> batches{64, 128, 256, 512};
  std::vector<IterationOutcome> first;
  for (int i = 0; i < 20; ++i) {
    const auto x = a.step_iteration(std::span<const int>(batches));
    const auto y = b.step_iteration(std::span<const int>(batches));
    for (std::size_t s = 0; s < x.size(); ++s) {
      EXPECT_EQ(x[s].batch_accuracy, y[s].batch_accuracy);
      EXPECT_EQ(x[s].retransmissions, y[s].retransmissions);
    }
    if (i == 0) first = x;
  }
  a.reset();
  const auto again = a.step_iteration(std::span<const int>(batches));
  for (std::size_t s = 0; s < again.size(); ++s) {
    EXPECT_EQ(again[s].batch_accuracy, first[s].batch_accuracy);
    EXPECT_EQ(again[s].cpu_time_ratio, first[s].cpu_time_ratio);
  }
}

TEST(SimEnv, DifferentSeedsDiverge) {
  Cluster a(default_cluster_config(2, 1));
  Cluster b(default_cluster_config(2, 2));
  const std::vector<int> batches{64, 64};
  // The first iteration sits at zero samples where every curve is 0, so compare later ones.
  bool differs = false;
  for (int i = 0; i < 5; ++i)
    differs = differs || a.step_iteration(std::span<const int>(batches))[0].batch_accuracy !=
                             b.step_iteration(std::span<const int>(batches))[0].batch_accuracy;
  EXPECT_TRUE(differs);
}

TEST(SimEnv, ErrorsAreTyped) {
  Cluster cluster(default_cluster_config(2, 1));
  EXPECT_THROW((cluster.step_iteration(std::map<int, int>{{0, 64}, {7, 64}})), ConfigError);
  const std::vector<int> small{16, 64};
  EXPECT_THROW(cluster.step_iteration(std::span<const int>(small)), ContractViolation);
  const std::vector<int> big{64, 2048};
  EXPECT_THROW(cluster.step_iteration(std::span<const int>(big)), ContractViolation);
  const std::vector<int> one{64};
  EXPECT_THROW(cluster.step_iteration(std::span<const int>(one)), ConfigError);

  ClusterConfig dup = default_cluster_config(2, 1);
  dup.workers[1].worker_id = dup.workers[0].worker_id;
  EXPECT_THROW(Cluster{dup}, ConfigError);
}

TEST(SimEnv, MemoryUtilizationIsBatchOverCapacity) {
  ClusterConfig c = default_cluster_config(1, 1);
  c.workers[0].memory_capacity = 512;
  Cluster cluster(c);
  const std::vector<int> b{128};
  EXPECT_DOUBLE_EQ(cluster.step_iteration(std::span<const int>(b))[0].memory_utilization, 0.25);
  const std::vector<int> over{1024};
  EXPECT_THROW(cluster.step_iteration(std::span<const int>(over)), ContractViolation);
}

TEST(SimEnv, ConfigJsonRoundTrip) {
  ClusterConfig c = default_cluster_config(3, 99);
  c.curve.tau = 12000;
  c.curve.a1_scale = 0.25;
  c.workers[1].network = NetworkProfile{};
  c.workers[1].network->retx_rate = 3.0;
  const nlohmann::json j = c;
  const ClusterConfig back = parse_cluster_config(j);
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.workers.size(), 3u);
  EXPECT_EQ(back.curve.tau, 12000);
  EXPECT_THROW(parse_cluster_config(nlohmann::json::parse(R"({"seed": 1})")), ConfigError);
  EXPECT_THROW(Cluster{parse_cluster_config(nlohmann::json::parse(R"({"workers": []})"))}, ConfigError);
  EXPECT_EQ(parse_cluster_config(nlohmann::json::parse(R"({"workers": {"count": 5}})")).workers.size(), 5u);
}

TEST(SimEnv, GeneratedWorkersAreHeterogeneous) {
  const auto w = generate_workers(8, 1500.0, 4000.0);
  ASSERT_EQ(w.size(), 8u);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(w[static_cast<std::size_t>(i)].worker_id, i);
  EXPECT_DOUBLE_EQ(w.front().compute_rate, 4000.0);
  EXPECT_DOUBLE_EQ(w.back().compute_rate, 1500.0);
}
