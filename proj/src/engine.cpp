#include "msprt/engine.hpp"

#include <algorithm>
#include <cmath>

namespace msprt {

std::string_view to_string(Decision decision) {
  return decision == Decision::reject ? "reject" : "continue";
}

std::uint64_t default_burn_in(std::size_t arms) { return 100 * static_cast<std::uint64_t>(arms); }

SigmaMode default_sigma_mode(Metric metric) {
  return metric == Metric::prop_diff || metric == Metric::mean_diff ? SigmaMode::baseline
                                                                    : SigmaMode::none;
}

void validate_config(const TestConfig& c) {
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) {
    throw ConfigError("alpha", "must lie in (0, 1)");
  }
  if (c.arms < 2) {
    throw ConfigError("arms", "at least two arms are required");
  }
  if (c.batch_interval < 1) {
    throw ConfigError("batch_interval", "must be at least 1");
  }
  if (c.burn_in < c.batch_interval) {
    throw ConfigError("burn_in", "must be at least the batch interval (" +
                                     std::to_string(c.batch_interval) + ")");
  }
  if (auto diag = validate_prior(c.prior)) {
    throw ConfigError("prior", diag->message);
  }
  if (c.prior.dimension != static_cast<Eigen::Index>(c.arms - 1)) {
    throw ConfigError("prior", "dimension " + std::to_string(c.prior.dimension) +
                                   " does not match arms - 1 = " + std::to_string(c.arms - 1));
  }
  const bool scale_free = c.metric == Metric::risk_ratio || c.metric == Metric::odds_ratio ||
                          c.metric == Metric::auc;
  if (c.sigma_mode == SigmaMode::none && !scale_free) {
    throw ConfigError("sigma_mode", std::string(to_string(c.metric)) +
                                        " needs a dispersion estimate (baseline or pooled)");
  }
  if (c.sigma_mode != SigmaMode::none && c.metric == Metric::auc) {
    throw ConfigError("sigma_mode", "auc is already on a scale-free probability scale");
  }
  const bool effect_size = c.prior.scale == PriorScale::effect_size;
  if (effect_size != (c.sigma_mode != SigmaMode::none)) {
    throw ConfigError("prior", effect_size
                                   ? "effect_size prior requires sigma_mode baseline or pooled"
                                   : "sigma_mode " + std::string(to_string(c.sigma_mode)) +
                                         " requires an effect_size prior");
  }
}

nlohmann::ordered_json to_json(const Evaluation& e) {
  nlohmann::ordered_json j;
  j["n"] = e.n;
  j["log_lambda"] = e.log_lambda;
  j["p"] = e.p_value;
  j["decision"] = std::string(to_string(e.decision));
  return j;
}

SequentialTest::SequentialTest(TestConfig config)
    : config_(std::move(config)), stats_(std::max<std::size_t>(config_.arms, 2),
                                         layout_for(config_.metric)) {
  validate_config(config_);
}

SequentialTest::SequentialTest(RestoreTag, TestConfig config, ArmStats stats)
    : config_(std::move(config)), stats_(std::move(stats)) {
  validate_config(config_);
}

double SequentialTest::p_value() const { return std::min(1.0, std::exp(-log_lambda_max_)); }

std::optional<Evaluation> SequentialTest::ingest(std::size_t arm, double value) {
  stats_.update(arm, value);
  ++n_;
  if (++pending_ < config_.batch_interval) {
    return std::nullopt;
  }
  pending_ = 0;
  return evaluate();
}

Evaluation SequentialTest::evaluate() {
  ++evaluations_;
  stats_.consolidate();

  Evaluation e;
  e.n = n_;
  try {
    const ContrastEstimate est = contrast(config_.metric, stats_);
    GaussianSummary summary{est.beta_hat, est.cov, est.null_value};
    double log_lambda;
    if (config_.sigma_mode == SigmaMode::none) {
      log_lambda = msprt_log_ratio(summary, config_.prior);
    } else {
      const double sigma = sigma_scale_estimate(stats_, config_.sigma_mode);
      log_lambda = msprt_log_ratio(summary, scale_prior_to_effect_size(config_.prior, sigma));
    }
    if (std::isnan(log_lambda)) {
      throw InsufficientDataError("log ratio is NaN");
    }
    last_log_lambda_ = log_lambda;
    log_lambda_max_ = std::max(log_lambda_max_, log_lambda);
  } catch (const InsufficientDataError&) {
    e.deferred = true;
  } catch (const FactorizationError&) {
    e.deferred = true;
  } catch (const InvalidScaleError&) {
    e.deferred = true;
  }

  if (!e.deferred && n_ >= config_.burn_in && log_lambda_max_ >= -std::log(config_.alpha)) {
    decision_ = Decision::reject;
  }
  e.log_lambda = last_log_lambda_;
  e.p_value = p_value();
  e.decision = decision_;
  if (config_.keep_history) {
    history_.push_back(e);
  }
  return e;
}

}  // namespace msprt
