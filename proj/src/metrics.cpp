#include "msprt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msprt {

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::risk_ratio: return "risk_ratio";
    case Metric::odds_ratio: return "odds_ratio";
    case Metric::prop_diff: return "prop_diff";
    case Metric::mean_diff: return "mean_diff";
    case Metric::auc: return "auc";
  }
  return "unknown";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : {Metric::risk_ratio, Metric::odds_ratio, Metric::prop_diff, Metric::mean_diff,
                   Metric::auc}) {
    if (name == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown metric \"" + std::string(name) + "\"");
}

bool is_binary(Metric metric) {
  return metric == Metric::risk_ratio || metric == Metric::odds_ratio ||
         metric == Metric::prop_diff;
}

StatsLayout layout_for(Metric metric) {
  if (is_binary(metric)) return StatsLayout::binary;
  return metric == Metric::auc ? StatsLayout::ranked : StatsLayout::moments;
}

std::string_view to_string(SigmaMode mode) {
  switch (mode) {
    case SigmaMode::none: return "none";
    case SigmaMode::baseline: return "baseline";
    case SigmaMode::pooled: return "pooled";
  }
  return "unknown";
}

SigmaMode parse_sigma_mode(std::string_view name) {
  for (SigmaMode m : {SigmaMode::none, SigmaMode::baseline, SigmaMode::pooled}) {
    if (name == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown sigma mode \"" + std::string(name) + "\"");
}

// ---------------------------------------------------------------------------
// ArmStats

ArmStats::ArmStats(std::size_t arms, StatsLayout layout) : layout_(layout), arms_(arms) {
  if (arms < 2) {
    throw std::invalid_argument("ArmStats needs at least two arms");
  }
}

void ArmStats::update(std::size_t arm, double value) {
  if (arm >= arms_.size()) {
    throw DataError("arm index " + std::to_string(arm) + " out of range for " +
                    std::to_string(arms_.size()) + " arms");
  }
  if (!std::isfinite(value)) {
    throw DataError("non-finite observation");
  }
  if (layout_ == StatsLayout::binary && value != 0.0 && value != 1.0) {
    throw DataError("binary metric requires values 0 or 1");
  }
  Arm& a = arms_[arm];
  ++a.n;
  if (layout_ == StatsLayout::binary && value == 1.0) ++a.successes;
  a.sum += value;
  a.sumsq += value * value;
  if (layout_ == StatsLayout::ranked) {
    // -0.0 and 0.0 compare equal; storing one of them keeps the order canonical.
    a.pending.push_back(value + 0.0);
  }
}

void ArmStats::consolidate() {
  for (Arm& a : arms_) {
    if (a.pending.empty()) continue;
    std::sort(a.pending.begin(), a.pending.end());
    const auto mid = static_cast<std::ptrdiff_t>(a.sorted.size());
    a.sorted.insert(a.sorted.end(), a.pending.begin(), a.pending.end());
    std::inplace_merge(a.sorted.begin(), a.sorted.begin() + mid, a.sorted.end());
    a.pending.clear();
  }
}

bool ArmStats::consolidated() const {
  return std::all_of(arms_.begin(), arms_.end(), [](const Arm& a) { return a.pending.empty(); });
}

std::uint64_t ArmStats::total() const {
  std::uint64_t n = 0;
  for (const Arm& a : arms_) n += a.n;
  return n;
}

double ArmStats::proportion(std::size_t j) const {
  const Arm& a = arms_.at(j);
  return static_cast<double>(a.successes) / static_cast<double>(a.n);
}

double ArmStats::mean(std::size_t j) const {
  const Arm& a = arms_.at(j);
  return a.sum / static_cast<double>(a.n);
}

double ArmStats::sample_variance(std::size_t j) const {
  const Arm& a = arms_.at(j);
  const auto n = static_cast<double>(a.n);
  const double v = (a.sumsq - a.sum * a.sum / n) / (n - 1.0);
  return v > 0.0 ? v : 0.0;
}

std::vector<double> ArmStats::sorted_values(std::size_t j) const {
  const Arm& a = arms_.at(j);
  std::vector<double> out = a.sorted;
  if (!a.pending.empty()) {
    std::vector<double> tail = a.pending;
    std::sort(tail.begin(), tail.end());
    const auto mid = static_cast<std::ptrdiff_t>(out.size());
    out.insert(out.end(), tail.begin(), tail.end());
    std::inplace_merge(out.begin(), out.begin() + mid, out.end());
  }
  return out;
}

ArmStats ArmStats::from_arms(StatsLayout layout, std::vector<Arm> arms) {
  ArmStats stats(arms.size(), layout);
  stats.arms_ = std::move(arms);
  return stats;
}

// ---------------------------------------------------------------------------
// Parametric contrasts

Eigen::MatrixXd baseline_contrast_cov(const std::vector<double>& v) {
  const auto d = static_cast<Eigen::Index>(v.size()) - 1;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(d, d, v[0]);
  for (Eigen::Index i = 0; i < d; ++i) {
    cov(i, i) = v[static_cast<std::size_t>(i) + 1] + v[0];
  }
  return cov;
}

namespace {

void require_layout(const ArmStats& stats, StatsLayout layout, const char* who) {
  if (stats.layout() != layout) {
    throw std::invalid_argument(std::string(who) + ": statistics have the wrong layout");
  }
}

void require_counts(const ArmStats& stats, std::uint64_t min_n, const char* who) {
  for (std::size_t j = 0; j < stats.arms(); ++j) {
    if (stats.count(j) < min_n) {
      throw InsufficientDataError(std::string(who) + ": arm " + std::to_string(j) + " has " +
                                  std::to_string(stats.count(j)) + " observations, needs " +
                                  std::to_string(min_n));
    }
  }
}

ContrastEstimate assemble(const std::vector<double>& effect, const std::vector<double>& v) {
  const auto d = static_cast<Eigen::Index>(effect.size()) - 1;
  ContrastEstimate est;
  est.beta_hat.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    est.beta_hat(i) = effect[static_cast<std::size_t>(i) + 1] - effect[0];
  }
  est.cov = baseline_contrast_cov(v);
  est.null_value = Eigen::VectorXd::Zero(d);
  return est;
}

}  // namespace

ContrastEstimate risk_ratio_contrast(const ArmStats& stats) {
  require_layout(stats, StatsLayout::binary, "risk_ratio");
  require_counts(stats, 1, "risk_ratio");
  std::vector<double> log_p(stats.arms()), v(stats.arms());
  for (std::size_t j = 0; j < stats.arms(); ++j) {
    if (stats.successes(j) == 0) {
      throw InsufficientDataError("risk_ratio: arm " + std::to_string(j) + " has no successes");
    }
    const double p = stats.proportion(j);
    log_p[j] = std::log(p);
    v[j] = (1.0 - p) / (p * static_cast<double>(stats.count(j)));
  }
  return assemble(log_p, v);
}

ContrastEstimate odds_ratio_contrast(const ArmStats& stats) {
  require_layout(stats, StatsLayout::binary, "odds_ratio");
  require_counts(stats, 1, "odds_ratio");
  std::vector<double> logit(stats.arms()), v(stats.arms());
  for (std::size_t j = 0; j < stats.arms(); ++j) {
    if (stats.successes(j) == 0 || stats.successes(j) == stats.count(j)) {
      throw InsufficientDataError("odds_ratio: arm " + std::to_string(j) +
                                  " has a degenerate proportion");
    }
    const double p = stats.proportion(j);
    const auto n = static_cast<double>(stats.count(j));
    logit[j] = std::log(p / (1.0 - p));
    v[j] = 1.0 / (n * p) + 1.0 / (n * (1.0 - p));
  }
  return assemble(logit, v);
}

ContrastEstimate prop_diff_contrast(const ArmStats& stats) {
  require_layout(stats, StatsLayout::binary, "prop_diff");
  require_counts(stats, 1, "prop_diff");
  std::vector<double> p(stats.arms()), v(stats.arms());
  for (std::size_t j = 0; j < stats.arms(); ++j) {
    p[j] = stats.proportion(j);
    v[j] = p[j] * (1.0 - p[j]) / static_cast<double>(stats.count(j));
  }
  ContrastEstimate est = assemble(p, v);
  // Zero when the baseline is degenerate; the engine defers effect-size
  // scaling in that case.
  est.sigma_scale = std::sqrt(p[0] * (1.0 - p[0]));
  return est;
}

ContrastEstimate mean_diff_contrast(const ArmStats& stats) {
  if (stats.layout() == StatsLayout::binary) {
    throw std::invalid_argument("mean_diff: statistics have the wrong layout");
  }
  require_counts(stats, 2, "mean_diff");
  std::vector<double> mu(stats.arms()), v(stats.arms());
  bool any_spread = false;
  for (std::size_t j = 0; j < stats.arms(); ++j) {
    mu[j] = stats.mean(j);
    const double var = stats.sample_variance(j);
    any_spread = any_spread || var > 0.0;
    v[j] = var / static_cast<double>(stats.count(j));
  }
  if (!any_spread) {
    throw InsufficientDataError("mean_diff: every arm has zero sample variance");
  }
  ContrastEstimate est = assemble(mu, v);
  est.sigma_scale = std::sqrt(stats.sample_variance(0));
  return est;
}

// ---------------------------------------------------------------------------
// AUC

namespace {

// One pass over the ordered baseline and treatment samples. Produces the
// normalized empirical distribution of each sample evaluated on the other,
// F(x) = (#{< x} + #{= x}/2) / n, and the sum of pooled mid-ranks of the
// treatment sample.
struct PairwiseRanks {
  std::vector<double> treatment_cdf_on_baseline;  // F_j(x), x in baseline
  std::vector<double> baseline_cdf_on_treatment;  // F_0(y), y in arm j
  double treatment_rank_sum = 0.0;
};

PairwiseRanks rank_pair(std::span<const double> base, std::span<const double> treat) {
  PairwiseRanks out;
  out.treatment_cdf_on_baseline.resize(base.size());
  out.baseline_cdf_on_treatment.resize(treat.size());
  double* on_base = out.treatment_cdf_on_baseline.data();
  double* on_treat = out.baseline_cdf_on_treatment.data();
  const auto n0 = static_cast<double>(base.size());
  const auto nj = static_cast<double>(treat.size());
  std::size_t i = 0, k = 0;
  while (i < base.size() || k < treat.size()) {
    double v;
    if (i == base.size()) {
      v = treat[k];
    } else if (k == treat.size()) {
      v = base[i];
    } else {
      v = std::min(base[i], treat[k]);
    }
    const std::size_t i0 = i, k0 = k;
    while (i < base.size() && base[i] == v) ++i;
    while (k < treat.size() && treat[k] == v) ++k;
    const auto ties_base = static_cast<double>(i - i0);
    const auto ties_treat = static_cast<double>(k - k0);

    const double f_treat = (static_cast<double>(k0) + 0.5 * ties_treat) / nj;
    const double f_base = (static_cast<double>(i0) + 0.5 * ties_base) / n0;
    for (std::size_t t = i0; t < i; ++t) on_base[t] = f_treat;
    for (std::size_t t = k0; t < k; ++t) on_treat[t] = f_base;

    const double mid_rank =
        static_cast<double>(i0 + k0) + (ties_base + ties_treat + 1.0) / 2.0;
    out.treatment_rank_sum += ties_treat * mid_rank;
  }
  return out;
}

double sample_mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sample_cov(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = sample_mean(x), my = sample_mean(y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
  return s / static_cast<double>(x.size() - 1);
}

}  // namespace

ContrastEstimate auc_contrast(const ArmStats& stats) {
  require_layout(stats, StatsLayout::ranked, "auc");
  require_counts(stats, 2, "auc");
  const std::size_t m = stats.arms();
  const auto d = static_cast<Eigen::Index>(m - 1);

  auto values_of = [&stats](std::size_t j, std::vector<double>& scratch) -> std::span<const double> {
    const auto& a = stats.arm(j);
    if (a.pending.empty()) return a.sorted;
    scratch = stats.sorted_values(j);
    return scratch;
  };
  std::vector<double> base_scratch;
  const std::span<const double> base = values_of(0, base_scratch);
  const auto n0 = static_cast<double>(base.size());

  ContrastEstimate est;
  est.beta_hat.resize(d);
  est.cov.resize(d, d);
  est.null_value = Eigen::VectorXd::Zero(d);

  std::vector<std::vector<double>> cdf_on_base(m - 1);
  for (std::size_t j = 1; j < m; ++j) {
    std::vector<double> scratch;
    const std::span<const double> treat = values_of(j, scratch);
    const auto nj = static_cast<double>(treat.size());
    PairwiseRanks r = rank_pair(base, treat);

    const double mean_rank = r.treatment_rank_sum / nj;
    const double p_hat = (mean_rank - (nj + 1.0) / 2.0) / n0;
    const auto i = static_cast<Eigen::Index>(j - 1);
    est.beta_hat(i) = p_hat - 0.5;

    // var of F_j over the baseline sample scales with 1/n_0; var of F_0 over
    // arm j scales with 1/n_j.
    const double sigma2 = sample_cov(r.treatment_cdf_on_baseline, r.treatment_cdf_on_baseline);
    const double v2 = sample_cov(r.baseline_cdf_on_treatment, r.baseline_cdf_on_treatment);
    est.cov(i, i) = sigma2 / n0 + v2 / nj;
    cdf_on_base[j - 1] = std::move(r.treatment_cdf_on_baseline);
  }
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = a + 1; b < d; ++b) {
      const double c = sample_cov(cdf_on_base[static_cast<std::size_t>(a)],
                                  cdf_on_base[static_cast<std::size_t>(b)]) /
                       n0;
      est.cov(a, b) = c;
      est.cov(b, a) = c;
    }
  }
  for (Eigen::Index a = 0; a < d; ++a) {
    if (!(est.cov(a, a) > 0.0)) {
      throw InsufficientDataError("auc: zero variance estimate for arm " + std::to_string(a + 1));
    }
  }
  return est;
}

Eigen::VectorXd auc_point_estimates(const ArmStats& stats) {
  require_layout(stats, StatsLayout::ranked, "auc");
  require_counts(stats, 1, "auc");
  const std::vector<double> base = stats.sorted_values(0);
  Eigen::VectorXd out(static_cast<Eigen::Index>(stats.arms() - 1));
  for (std::size_t j = 1; j < stats.arms(); ++j) {
    const std::vector<double> treat = stats.sorted_values(j);
    const auto nj = static_cast<double>(treat.size());
    const double mean_rank = rank_pair(base, treat).treatment_rank_sum / nj;
    out(static_cast<Eigen::Index>(j - 1)) = (mean_rank - (nj + 1.0) / 2.0) / static_cast<double>(base.size());
  }
  return out;
}

ContrastEstimate contrast(Metric metric, const ArmStats& stats) {
  switch (metric) {
    case Metric::risk_ratio: return risk_ratio_contrast(stats);
    case Metric::odds_ratio: return odds_ratio_contrast(stats);
    case Metric::prop_diff: return prop_diff_contrast(stats);
    case Metric::mean_diff: return mean_diff_contrast(stats);
    case Metric::auc: return auc_contrast(stats);
  }
  throw std::invalid_argument("unknown metric");
}

// ---------------------------------------------------------------------------

double sigma_scale_estimate(const ArmStats& stats, SigmaMode mode) {
  if (mode == SigmaMode::none) {
    throw std::invalid_argument("sigma_scale_estimate: mode none has no estimate");
  }
  const bool binary = stats.layout() == StatsLayout::binary;
  const std::uint64_t min_n = binary ? 1 : 2;
  auto arm_variance = [&](std::size_t j) {
    if (stats.count(j) < min_n) {
      throw InsufficientDataError("sigma scale: arm " + std::to_string(j) +
                                  " has too few observations");
    }
    if (binary) {
      const double p = stats.proportion(j);
      return p * (1.0 - p);
    }
    return stats.sample_variance(j);
  };

  double variance = 0.0;
  if (mode == SigmaMode::baseline) {
    variance = arm_variance(0);
  } else {
    for (std::size_t j = 0; j < stats.arms(); ++j) variance += arm_variance(j);
    variance /= static_cast<double>(stats.arms());
  }
  if (!(variance > 0.0)) {
    throw InsufficientDataError("sigma scale: zero dispersion estimate");
  }
  return std::sqrt(variance);
}

}  // namespace msprt
