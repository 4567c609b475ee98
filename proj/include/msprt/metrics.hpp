#pragma once

// Per-arm streaming statistics and the m-arm contrast estimators.
//
// Arm 0 is the baseline. Every contrast is a (m-1)-vector of "arm j versus
// baseline" effects together with its estimated covariance.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msprt/errors.hpp"

namespace msprt {

enum class Metric { risk_ratio, odds_ratio, prop_diff, mean_diff, auc };

std::string_view to_string(Metric metric);
/// Throws std::invalid_argument on an unknown name.
Metric parse_metric(std::string_view name);
bool is_binary(Metric metric);

/// What an ArmStats tracks beyond counts: successes (binary), running
/// sum/sum of squares (moments), or additionally every value (ranked).
enum class StatsLayout : std::uint8_t { binary = 0, moments = 1, ranked = 2 };

StatsLayout layout_for(Metric metric);

class ArmStats {
 public:
  struct Arm {
    std::uint64_t n = 0;
    std::uint64_t successes = 0;
    double sum = 0.0;
    double sumsq = 0.0;
    // Ranked layout only. `sorted` is ordered; `pending` holds values
    // appended since the last consolidate().
    std::vector<double> sorted;
    std::vector<double> pending;
  };

  ArmStats(std::size_t arms, StatsLayout layout);

  /// Adds one observation to `arm` (0-based). Throws DataError for an arm out
  /// of range, a non-finite value, or a non-binary value under the binary
  /// layout; the statistics are unchanged in that case.
  void update(std::size_t arm, double value);

  /// Merges pending values into the ordered store. Content is unchanged.
  void consolidate();
  bool consolidated() const;

  std::size_t arms() const { return arms_.size(); }
  StatsLayout layout() const { return layout_; }
  std::uint64_t total() const;

  const Arm& arm(std::size_t j) const { return arms_.at(j); }
  std::uint64_t count(std::size_t j) const { return arms_.at(j).n; }
  std::uint64_t successes(std::size_t j) const { return arms_.at(j).successes; }
  double sum(std::size_t j) const { return arms_.at(j).sum; }
  double sumsq(std::size_t j) const { return arms_.at(j).sumsq; }
  double proportion(std::size_t j) const;
  double mean(std::size_t j) const;
  /// Sample variance with the n-1 denominator, clamped at zero.
  double sample_variance(std::size_t j) const;

  /// All values of arm j in ascending order (merged copy when unconsolidated).
  std::vector<double> sorted_values(std::size_t j) const;

  /// Rebuilds stats from serialized per-arm state; used by snapshot restore.
  static ArmStats from_arms(StatsLayout layout, std::vector<Arm> arms);

 private:
  StatsLayout layout_;
  std::vector<Arm> arms_;
};

struct ContrastEstimate {
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd cov;
  Eigen::VectorXd null_value;
  /// Dispersion used for Cohen's-D prior scaling, when the metric has one.
  std::optional<double> sigma_scale;
};

/// Covariance with diagonal v[j+1] + v[0] and every off-diagonal v[0].
Eigen::MatrixXd baseline_contrast_cov(const std::vector<double>& v);

ContrastEstimate risk_ratio_contrast(const ArmStats& stats);
ContrastEstimate odds_ratio_contrast(const ArmStats& stats);
ContrastEstimate prop_diff_contrast(const ArmStats& stats);
ContrastEstimate mean_diff_contrast(const ArmStats& stats);
ContrastEstimate auc_contrast(const ArmStats& stats);
ContrastEstimate contrast(Metric metric, const ArmStats& stats);

/// Mid-rank estimates of P(X_j > X_0) + P(X_j = X_0)/2 for arms j >= 1.
/// Needs at least one value per arm; no variance requirement.
Eigen::VectorXd auc_point_estimates(const ArmStats& stats);

enum class SigmaMode : std::uint8_t { none = 0, baseline = 1, pooled = 2 };

std::string_view to_string(SigmaMode mode);
SigmaMode parse_sigma_mode(std::string_view name);

/// Dispersion for effect-size scaling. Binary layout uses sqrt(p(1-p)),
/// other layouts the sample standard deviation. Baseline mode reads arm 0,
/// pooled mode takes sqrt of the mean per-arm variance.
double sigma_scale_estimate(const ArmStats& stats, SigmaMode mode);

}  // namespace msprt
