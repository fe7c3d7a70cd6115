#pragma once

#include <cmath>
#include <span>
#include <string>

#include <json.hpp>

#include "errors.hpp"
#include "simenv.hpp"

namespace dynamix {

enum class RewardRegime { sgd, adaptive };

inline std::string to_string(RewardRegime r) { return r == RewardRegime::sgd ? "sgd" : "adaptive"; }

inline RewardRegime parse_regime(const std::string& s) {
  if (s == "sgd" || s == "SGD") return RewardRegime::sgd;
  if (s == "adaptive") return RewardRegime::adaptive;
  throw ConfigError("unknown reward regime '" + s + "'");
}

struct RewardCoefficients {
  double alpha = 0.5;
  double beta = 0.5;
  double delta = 0.05;
  double eta = 0.5;
  double gamma = 0.99;

  void validate() const {
    for (double w : {alpha, beta, delta, eta})
      if (!(std::isfinite(w) && w >= 0.0)) throw ConfigError("reward weights must be finite and >= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("reward gamma must be in [0, 1]");
  }
};

struct RewardComponents {
  double accuracy = 0.0;
  double gain = 0.0;
  double time = 0.0;            // signed (<= 0)
  double regularization = 0.0;  // signed (<= 0)
  double normalization = 0.0;   // signed (<= 0)

  double sum() const { return accuracy + gain + time + regularization + normalization; }
};

struct RewardSample {
  int step_index = 0;
  int worker_id = 0;
  RewardRegime regime = RewardRegime::sgd;
  double value = 0.0;
  RewardComponents components;
};

namespace detail {

inline RewardComponents sgd_terms(double A_bar, double delta_A, double T_iter, int batch_size,
                                  const RewardCoefficients& c) {
  require(batch_size >= kMinBatch && batch_size <= kMaxBatch, "reward: batch size outside [32, 1024]");
  require(T_iter > 0.0, "reward: T_iter must be > 0");
  RewardComponents t;
  t.accuracy = A_bar;
  t.gain = c.alpha * std::max(0.0, delta_A);
  t.time = -c.beta * T_iter;
  t.regularization = -c.delta * (std::log2(static_cast<double>(batch_size)) - 5.0);
  return t;
}

}  // namespace detail

// r = A + alpha*max(0, dA) - beta*T - delta*(log2 B - 5)
inline RewardSample reward_sgd(double A_bar, double delta_A, double T_iter, int batch_size,
                               const RewardCoefficients& coeffs) {
  RewardSample r;
  r.regime = RewardRegime::sgd;
  r.components = detail::sgd_terms(A_bar, delta_A, T_iter, batch_size, coeffs);
  r.value = r.components.sum();
  return r;
}

// reward_sgd - eta*(sigma_norm^2 + sigma_norm)
inline RewardSample reward_adaptive(double A_bar, double delta_A, double T_iter, double sigma_norm,
                                    double sigma_norm_sq, int batch_size, const RewardCoefficients& coeffs) {
  detail::require(sigma_norm >= 0.0 && sigma_norm_sq >= 0.0, "reward_adaptive: sigma_norm must be >= 0");
  RewardSample r;
  r.regime = RewardRegime::adaptive;
  r.components = detail::sgd_terms(A_bar, delta_A, T_iter, batch_size, coeffs);
  r.components.normalization = -coeffs.eta * (sigma_norm_sq + sigma_norm);
  r.value = r.components.sum();
  return r;
}

// sum_t gamma^t r_t, t from 0.
inline double discounted_return(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  double weight = 1.0;
  for (double r : rewards) {
    total += weight * r;
    weight *= gamma;
  }
  return total;
}

inline void to_json(nlohmann::json& j, const RewardCoefficients& c) {
  j = {{"alpha", c.alpha}, {"beta", c.beta}, {"delta", c.delta}, {"eta", c.eta}, {"gamma", c.gamma}};
}

inline void from_json(const nlohmann::json& j, RewardCoefficients& c) {
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.delta = j.value("delta", c.delta);
  c.eta = j.value("eta", c.eta);
  c.gamma = j.value("gamma", c.gamma);
  c.validate();
}

inline void to_json(nlohmann::json& j, const RewardComponents& c) {
  j = {{"accuracy", c.accuracy},
       {"gain", c.gain},
       {"time", c.time},
       {"regularization", c.regularization},
       {"normalization", c.normalization}};
}

inline void from_json(const nlohmann::json& j, RewardComponents& c) {
  c.accuracy = j.at("accuracy").get<double>();
  c.gain = j.at("gain").get<double>();
  c.time = j.at("time").get<double>();
  c.regularization = j.at("regularization").get<double>();
  c.normalization = j.at("normalization").get<double>();
}

inline void to_json(nlohmann::json& j, const RewardSample& r) {
  j = {{"step", r.step_index},
       {"worker_id", r.worker_id},
       {"regime", to_string(r.regime)},
       {"value", r.value},
       {"components", r.components}};
}

}  // namespace dynamix
