#include "msprt/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace msprt {

namespace {

template <typename... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <typename... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

/// Runs fn(i) for i in [0, count) on a small worker pool. Each index writes
/// only its own output slot, so results do not depend on scheduling.
template <typename Fn>
void parallel_for(std::uint64_t count, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, std::max<std::uint64_t>(count, 1)));
  if (threads <= 1) {
    for (std::uint64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      for (std::uint64_t i = next++; i < count; i = next++) fn(i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = count;
    }
  };
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

double quantile(const std::vector<double>& sorted, double q) {
  // Linear interpolation between order statistics.
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

MeanWithError mean_with_error(std::uint64_t n, const std::vector<double>& x) {
  const auto r = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= r;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = x.size() > 1 ? std::sqrt(ss / (r - 1.0)) : 0.0;
  return {n, mean, sd / std::sqrt(r)};
}

void check_probability_vector(const std::vector<double>& p, const std::string& what) {
  if (p.empty()) throw std::invalid_argument(what + " is empty");
  double sum = 0.0;
  for (double v : p) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(what + " entries must be positive");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument(what + " must sum to 1");
  }
}

}  // namespace

std::size_t generator_arms(const Generator& g) {
  return std::visit(overloaded{
                        [](const BernoulliArms& b) { return b.p.size(); },
                        [](const NormalArms& n) { return n.mean.size(); },
                        [](const LogNormalArms& l) { return l.mu.size(); },
                        [](const UniformArms& u) { return u.lo.size(); },
                        [](const OrdinalArms& o) { return o.probs.size(); },
                    },
                    g);
}

bool is_null_generator(const Generator& g) {
  auto all_same = [](const auto& v) {
    return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
  };
  return std::visit(overloaded{
                        [&](const BernoulliArms& b) { return all_same(b.p); },
                        [&](const NormalArms& n) { return all_same(n.mean) && all_same(n.sd); },
                        [&](const LogNormalArms& l) { return all_same(l.mu) && all_same(l.sigma); },
                        [&](const UniformArms& u) { return all_same(u.lo) && all_same(u.hi); },
                        [&](const OrdinalArms& o) { return all_same(o.probs); },
                    },
                    g);
}

void validate_scenario(const ScenarioSpec& spec) {
  const std::size_t m = generator_arms(spec.generator);
  if (m < 2) throw std::invalid_argument("generator needs at least two arms");
  std::visit(overloaded{
                 [](const BernoulliArms& b) {
                   for (double p : b.p) {
                     if (!(p >= 0.0 && p <= 1.0)) {
                       throw std::invalid_argument("bernoulli p must lie in [0, 1]");
                     }
                   }
                 },
                 [m](const NormalArms& n) {
                   if (n.sd.size() != m) throw std::invalid_argument("normal: sd per arm required");
                   for (double s : n.sd) {
                     if (!(s > 0.0)) throw std::invalid_argument("normal: sd must be positive");
                   }
                 },
                 [m](const LogNormalArms& l) {
                   if (l.sigma.size() != m) {
                     throw std::invalid_argument("lognormal: sigma per arm required");
                   }
                   for (double s : l.sigma) {
                     if (!(s > 0.0)) throw std::invalid_argument("lognormal: sigma must be positive");
                   }
                 },
                 [m](const UniformArms& u) {
                   if (u.hi.size() != m) throw std::invalid_argument("uniform: hi per arm required");
                   for (std::size_t j = 0; j < m; ++j) {
                     if (!(u.lo[j] < u.hi[j])) throw std::invalid_argument("uniform: lo must be below hi");
                   }
                 },
                 [](const OrdinalArms& o) {
                   for (const auto& p : o.probs) check_probability_vector(p, "ordinal probs");
                 },
             },
             spec.generator);
  if (spec.allocation.size() != m) {
    throw std::invalid_argument("allocation has " + std::to_string(spec.allocation.size()) +
                                " entries for " + std::to_string(m) + " arms");
  }
  check_probability_vector(spec.allocation, "allocation");
  if (spec.replications < 1) throw std::invalid_argument("replications must be at least 1");
  if (spec.max_n < 1) throw std::invalid_argument("max_n must be at least 1");
}

std::uint64_t child_seed(std::uint64_t seed, std::uint64_t replication) {
  std::uint64_t z = seed + (replication + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ObservationSource::ObservationSource(const ScenarioSpec& spec, std::uint64_t replication)
    : spec_(spec), rng_(child_seed(spec.seed, replication)) {
  cumulative_allocation_.resize(spec.allocation.size());
  std::partial_sum(spec.allocation.begin(), spec.allocation.end(),
                   cumulative_allocation_.begin());
}

double ObservationSource::draw(std::size_t arm) {
  return std::visit(
      overloaded{
          [&](const BernoulliArms& b) { return unit_(rng_) < b.p[arm] ? 1.0 : 0.0; },
          [&](const NormalArms& n) { return n.mean[arm] + n.sd[arm] * normal_(rng_); },
          [&](const LogNormalArms& l) {
            return std::exp(l.mu[arm] + l.sigma[arm] * normal_(rng_));
          },
          [&](const UniformArms& u) { return u.lo[arm] + (u.hi[arm] - u.lo[arm]) * unit_(rng_); },
          [&](const OrdinalArms& o) {
            const auto& p = o.probs[arm];
            double u = unit_(rng_);
            for (std::size_t k = 0; k + 1 < p.size(); ++k) {
              if (u < p[k]) return static_cast<double>(k + 1);
              u -= p[k];
            }
            return static_cast<double>(p.size());
          },
      },
      spec_.generator);
}

std::pair<std::size_t, double> ObservationSource::next() {
  const double u = unit_(rng_);
  std::size_t arm = 0;
  while (arm + 1 < cumulative_allocation_.size() && u >= cumulative_allocation_[arm]) ++arm;
  return {arm, draw(arm)};
}

SimulationReport run_scenario(const ScenarioSpec& spec, const TestConfig& config,
                              SimulationOptions options) {
  validate_scenario(spec);
  validate_config(config);
  if (generator_arms(spec.generator) != config.arms) {
    throw std::invalid_argument("scenario has " + std::to_string(generator_arms(spec.generator)) +
                                " arms but the test config has " + std::to_string(config.arms));
  }
  if (spec.max_n < config.burn_in) {
    throw std::invalid_argument("max_n must be at least the burn-in");
  }
  std::vector<std::uint64_t> checkpoints = spec.checkpoints;
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  std::erase_if(checkpoints, [&](std::uint64_t c) { return c == 0 || c > spec.max_n; });

  TestConfig cfg = config;
  cfg.keep_history = false;

  std::vector<ReplicationRecord> records(spec.replications);
  parallel_for(spec.replications, options.threads, [&](std::uint64_t r) {
    ObservationSource source(spec, r);
    SequentialTest test(cfg);
    ReplicationRecord rec;
    rec.lambda_at_checkpoints.reserve(checkpoints.size());
    std::size_t next_checkpoint = 0;
    for (std::uint64_t i = 1; i <= spec.max_n; ++i) {
      const auto [arm, value] = source.next();
      const auto e = test.ingest(arm, value);
      if (e && !rec.rejected && e->decision == Decision::reject) {
        rec.rejected = true;
        rec.stopping_n = e->n;
        rec.log_lambda_at_stop = e->log_lambda;
      }
      while (next_checkpoint < checkpoints.size() && checkpoints[next_checkpoint] == i) {
        rec.lambda_at_checkpoints.push_back(std::exp(test.last_log_lambda()));
        ++next_checkpoint;
      }
      if (rec.rejected && next_checkpoint == checkpoints.size()) break;
    }
    records[r] = std::move(rec);
  });

  SimulationReport report;
  report.replications = spec.replications;
  report.max_n = spec.max_n;
  std::vector<double> stops, overshoot;
  for (const auto& rec : records) {
    if (rec.rejected) {
      stops.push_back(static_cast<double>(rec.stopping_n));
      overshoot.push_back(rec.log_lambda_at_stop);
    }
  }
  report.rejections = stops.size();
  const auto reps = static_cast<double>(spec.replications);
  report.rejection_rate = static_cast<double>(report.rejections) / reps;
  report.rejection_se = std::sqrt(report.rejection_rate * (1.0 - report.rejection_rate) / reps);
  if (!stops.empty()) {
    std::sort(stops.begin(), stops.end());
    StoppingTimeSummary s;
    s.count = stops.size();
    s.mean = std::accumulate(stops.begin(), stops.end(), 0.0) / static_cast<double>(stops.size());
    s.q05 = quantile(stops, 0.05);
    s.q25 = quantile(stops, 0.25);
    s.q50 = quantile(stops, 0.50);
    s.q75 = quantile(stops, 0.75);
    s.q95 = quantile(stops, 0.95);
    report.stopping_time = s;
    report.mean_log_lambda_at_rejection =
        std::accumulate(overshoot.begin(), overshoot.end(), 0.0) /
        static_cast<double>(overshoot.size());
  }
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    std::vector<double> lambdas;
    lambdas.reserve(records.size());
    for (const auto& rec : records) lambdas.push_back(rec.lambda_at_checkpoints[c]);
    report.lambda_mean_at.push_back(mean_with_error(checkpoints[c], lambdas));
  }
  if (options.keep_records) report.records = std::move(records);
  return report;
}

std::vector<MeanWithError> martingale_diagnostic(const ScenarioSpec& spec,
                                                 const MixtureNormalPrior& prior,
                                                 const std::vector<std::uint64_t>& checkpoints,
                                                 SimulationOptions options) {
  const auto* normal = std::get_if<NormalArms>(&spec.generator);
  if (normal == nullptr || normal->mean.empty() || normal->sd.empty() || !(normal->sd[0] > 0.0)) {
    throw std::invalid_argument("martingale diagnostic needs a normal generator");
  }
  if (auto diag = validate_prior(prior)) throw std::invalid_argument(diag->message);
  if (prior.dimension != 1) {
    throw std::invalid_argument("martingale diagnostic needs a one-dimensional prior");
  }
  if (spec.replications < 1) throw std::invalid_argument("replications must be at least 1");
  std::vector<std::uint64_t> points = checkpoints;
  std::sort(points.begin(), points.end());
  std::erase(points, 0);
  if (points.empty()) return {};

  const double theta0 = normal->mean[0];
  const double variance = normal->sd[0] * normal->sd[0];
  std::vector<std::vector<double>> lambdas(points.size(), std::vector<double>(spec.replications));
  parallel_for(spec.replications, options.threads, [&](std::uint64_t r) {
    std::mt19937_64 rng(child_seed(spec.seed, r));
    std::normal_distribution<double> z(0.0, 1.0);
    double sum = 0.0;
    std::uint64_t n = 0;
    for (std::size_t c = 0; c < points.size(); ++c) {
      for (; n < points[c]; ++n) sum += theta0 + normal->sd[0] * z(rng);
      const auto nn = static_cast<double>(n);
      GaussianSummary s{Eigen::VectorXd::Constant(1, sum / nn),
                        Eigen::MatrixXd::Constant(1, 1, variance / nn),
                        Eigen::VectorXd::Constant(1, theta0)};
      lambdas[c][r] = std::exp(msprt_log_ratio(s, prior));
    }
  });

  std::vector<MeanWithError> out;
  for (std::size_t c = 0; c < points.size(); ++c) out.push_back(mean_with_error(points[c], lambdas[c]));
  return out;
}

CovarianceComparison covariance_diagnostic(const ScenarioSpec& spec, Metric metric,
                                           const std::vector<std::uint64_t>& n_per_arm,
                                           SimulationOptions options) {
  const std::size_t m = generator_arms(spec.generator);
  if (m < 2 || n_per_arm.size() != m) {
    throw std::invalid_argument("n_per_arm must give a sample size for every arm");
  }
  if (!is_null_generator(spec.generator)) {
    throw std::invalid_argument("covariance diagnostic requires identical arms (a null scenario)");
  }
  if (is_binary(metric) != std::holds_alternative<BernoulliArms>(spec.generator)) {
    throw std::invalid_argument("metric and generator disagree on binary outcomes");
  }
  if (spec.replications < 2) throw std::invalid_argument("replications must be at least 2");
  const auto d = static_cast<Eigen::Index>(m - 1);

  struct Draw {
    bool ok = false;
    Eigen::VectorXd beta;
    Eigen::MatrixXd cov;
  };
  std::vector<Draw> draws(spec.replications);
  parallel_for(spec.replications, options.threads, [&](std::uint64_t r) {
    ObservationSource source(spec, r);
    ArmStats stats(m, layout_for(metric));
    for (std::size_t j = 0; j < m; ++j) {
      for (std::uint64_t i = 0; i < n_per_arm[j]; ++i) stats.update(j, source.draw(j));
    }
    stats.consolidate();
    try {
      ContrastEstimate est = contrast(metric, stats);
      draws[r] = {true, std::move(est.beta_hat), std::move(est.cov)};
    } catch (const InsufficientDataError&) {
    }
  });

  CovarianceComparison out;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  out.plugin = Eigen::MatrixXd::Zero(d, d);
  for (const auto& dr : draws) {
    if (!dr.ok) {
      ++out.skipped;
      continue;
    }
    ++out.used;
    mean += dr.beta;
    out.plugin += dr.cov;
  }
  if (out.used < 2) throw std::invalid_argument("too few usable replications");
  const auto used = static_cast<double>(out.used);
  mean /= used;
  out.plugin /= used;
  out.empirical = Eigen::MatrixXd::Zero(d, d);
  for (const auto& dr : draws) {
    if (!dr.ok) continue;
    const Eigen::VectorXd c = dr.beta - mean;
    out.empirical += c * c.transpose();
  }
  out.empirical /= used - 1.0;
  out.relative_error = ((out.empirical - out.plugin).array() / out.plugin.array()).abs().matrix();
  out.max_relative_error = out.relative_error.maxCoeff();
  return out;
}

}  // namespace msprt
