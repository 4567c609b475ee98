#pragma once

// Sequential test lifecycle: batched ingestion, evaluation every k
// observations, running maximum of log Lambda, always-valid p-value and the
// absorbing reject decision.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "msprt/metrics.hpp"
#include "msprt/prior.hpp"

namespace msprt {

enum class Decision : std::uint8_t { continue_testing = 0, reject = 1 };

std::string_view to_string(Decision decision);

struct TestConfig {
  double alpha = 0.05;
  Metric metric = Metric::risk_ratio;
  std::size_t arms = 2;
  /// Dimension arms - 1. Effect-size priors require sigma_mode != none.
  MixtureNormalPrior prior;
  std::uint64_t batch_interval = 100;
  /// No rejection is emitted while the total count is below this.
  std::uint64_t burn_in = 200;
  SigmaMode sigma_mode = SigmaMode::none;
  bool keep_history = false;
};

inline constexpr std::uint64_t kDefaultBatchInterval = 100;
std::uint64_t default_burn_in(std::size_t arms);
SigmaMode default_sigma_mode(Metric metric);

/// Throws ConfigError naming the first offending field.
void validate_config(const TestConfig& config);

struct Evaluation {
  std::uint64_t n = 0;
  double log_lambda = 0.0;
  double p_value = 1.0;
  Decision decision = Decision::continue_testing;
  /// Statistics were insufficient; log_lambda repeats the previous value.
  bool deferred = false;
};

/// {"n": int, "log_lambda": float, "p": float, "decision": "continue"|"reject"}
nlohmann::ordered_json to_json(const Evaluation& e);

class SequentialTest {
 public:
  explicit SequentialTest(TestConfig config);

  /// Adds one observation (arm is 0-based). Returns the evaluation when this
  /// observation completes a batch. Errors from ArmStats::update propagate
  /// and leave the test untouched.
  std::optional<Evaluation> ingest(std::size_t arm, double value);

  /// Evaluates at the current sample size. Does not reset the batch counter.
  Evaluation evaluate();

  const TestConfig& config() const { return config_; }
  const ArmStats& stats() const { return stats_; }
  std::uint64_t n() const { return n_; }
  std::uint64_t pending() const { return pending_; }
  std::uint64_t evaluations() const { return evaluations_; }
  double log_lambda_max() const { return log_lambda_max_; }
  double last_log_lambda() const { return last_log_lambda_; }
  double p_value() const;
  Decision decision() const { return decision_; }
  const std::vector<Evaluation>& history() const { return history_; }

  /// Versioned little-endian binary image of the full state.
  std::vector<std::uint8_t> snapshot() const;
  /// Throws CorruptSnapshotError for truncated, malformed or foreign bytes.
  static SequentialTest restore(std::span<const std::uint8_t> bytes);

 private:
  struct RestoreTag {};
  SequentialTest(RestoreTag, TestConfig config, ArmStats stats);

  TestConfig config_;
  ArmStats stats_;
  std::uint64_t n_ = 0;
  std::uint64_t pending_ = 0;
  std::uint64_t evaluations_ = 0;
  double log_lambda_max_ = 0.0;  // Lambda_0 = 1
  double last_log_lambda_ = 0.0;
  Decision decision_ = Decision::continue_testing;
  std::vector<Evaluation> history_;
};

}  // namespace msprt
