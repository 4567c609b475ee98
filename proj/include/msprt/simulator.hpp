#pragma once

// Monte Carlo harness: synthetic experiment streams pushed through fresh
// SequentialTest instances, plus formula-level diagnostics.
//
// Replication r draws from std::mt19937_64 seeded with child_seed(seed, r),
// so reports depend only on the scenario and config, never on thread count
// or scheduling.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "msprt/engine.hpp"

namespace msprt {

struct BernoulliArms {
  std::vector<double> p;
};
struct NormalArms {
  std::vector<double> mean;
  std::vector<double> sd;
};
struct LogNormalArms {
  std::vector<double> mu;
  std::vector<double> sigma;
};
struct UniformArms {
  std::vector<double> lo;
  std::vector<double> hi;
};
/// Category k (1-based) drawn with probability probs[arm][k-1]; the
/// observation is the category number.
struct OrdinalArms {
  std::vector<std::vector<double>> probs;
};

using Generator = std::variant<BernoulliArms, NormalArms, LogNormalArms, UniformArms, OrdinalArms>;

std::size_t generator_arms(const Generator& g);
/// True when every arm has identical parameters.
bool is_null_generator(const Generator& g);

struct ScenarioSpec {
  Generator generator;
  /// Probability of assigning each observation to each arm.
  std::vector<double> allocation;
  std::uint64_t max_n = 0;
  std::uint64_t replications = 0;
  std::uint64_t seed = 0;
  /// Sample sizes at which mean Lambda is reported (optional).
  std::vector<std::uint64_t> checkpoints;
};

/// Throws std::invalid_argument describing the first problem.
void validate_scenario(const ScenarioSpec& spec);

/// splitmix64 finalizer applied to seed + (replication + 1) * golden gamma.
std::uint64_t child_seed(std::uint64_t seed, std::uint64_t replication);

/// Per-replication stream of (arm, value) observations.
class ObservationSource {
 public:
  ObservationSource(const ScenarioSpec& spec, std::uint64_t replication);

  std::pair<std::size_t, double> next();
  double draw(std::size_t arm);

 private:
  const ScenarioSpec& spec_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::vector<double> cumulative_allocation_;
};

struct MeanWithError {
  std::uint64_t n = 0;
  double mean = 0.0;
  double se = 0.0;
};

struct StoppingTimeSummary {
  std::uint64_t count = 0;
  double mean = 0.0;
  double q05 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q95 = 0.0;
};

struct ReplicationRecord {
  bool rejected = false;
  std::uint64_t stopping_n = 0;
  double log_lambda_at_stop = 0.0;
  /// Lambda of the latest evaluation at or before each checkpoint.
  std::vector<double> lambda_at_checkpoints;
};

struct SimulationReport {
  std::uint64_t replications = 0;
  std::uint64_t max_n = 0;
  std::uint64_t rejections = 0;
  /// Rejections by max_n over replications: the truncated P(tau <= max_n).
  double rejection_rate = 0.0;
  double rejection_se = 0.0;
  std::optional<StoppingTimeSummary> stopping_time;
  /// Overshoot diagnostic: mean log Lambda at the rejecting evaluation.
  std::optional<double> mean_log_lambda_at_rejection;
  std::vector<MeanWithError> lambda_mean_at;
  std::vector<ReplicationRecord> records;
};

struct SimulationOptions {
  /// 0 picks std::thread::hardware_concurrency().
  unsigned threads = 0;
  bool keep_records = false;
};

/// Throws std::invalid_argument on spec/config mismatch or invalid spec.
SimulationReport run_scenario(const ScenarioSpec& spec, const TestConfig& config,
                              SimulationOptions options = {});

/// Known-variance one-sample harness: X_i ~ N(mean[0], sd[0]^2) from arm 0 of
/// a normal generator, theta0 = mean[0], estimate covariance sd^2 / n. Under
/// this setup E[Lambda_n] = 1 exactly. `prior` must be one-dimensional.
std::vector<MeanWithError> martingale_diagnostic(const ScenarioSpec& spec,
                                                 const MixtureNormalPrior& prior,
                                                 const std::vector<std::uint64_t>& checkpoints,
                                                 SimulationOptions options = {});

struct CovarianceComparison {
  Eigen::MatrixXd empirical;
  Eigen::MatrixXd plugin;
  Eigen::MatrixXd relative_error;
  double max_relative_error = 0.0;
  std::uint64_t used = 0;
  std::uint64_t skipped = 0;
};

/// Monte Carlo covariance of beta_hat against the mean plug-in covariance,
/// with exactly n_per_arm[j] draws in arm j per replication. Requires a null
/// generator.
CovarianceComparison covariance_diagnostic(const ScenarioSpec& spec, Metric metric,
                                           const std::vector<std::uint64_t>& n_per_arm,
                                           SimulationOptions options = {});

// Serialization (scenario_io.cpp)
ScenarioSpec scenario_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const ScenarioSpec& spec);
nlohmann::json report_to_json(const SimulationReport& report);
std::string report_table(const SimulationReport& report);

}  // namespace msprt
