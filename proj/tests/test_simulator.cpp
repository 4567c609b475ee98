#include <doctest.h>

#include <cmath>
#include <set>

#include "msprt/simulator.hpp"

using namespace msprt;

namespace {

ScenarioSpec bernoulli(std::vector<double> p, std::uint64_t reps, std::uint64_t max_n, std::uint64_t seed = 1) {
  ScenarioSpec s;
  const std::size_t m = p.size();
  s.generator = BernoulliArms{std::move(p)};
  s.allocation.assign(m, 1.0 / static_cast<double>(m));
  s.replications = reps;
  s.max_n = max_n;
  s.seed = seed;
  return s;
}

TestConfig prop_diff_config() {
  TestConfig c;
  c.metric = Metric::prop_diff;
  c.sigma_mode = SigmaMode::baseline;
  c.prior = normal_prior<double>(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 0.01),
                                 PriorScale::effect_size);
  c.batch_interval = 100;
  c.burn_in = 200;
  return c;
}

MixtureNormalPrior prior_1d(double mean, double var) {
  return normal_prior<double>(Eigen::VectorXd::Constant(1, mean), Eigen::MatrixXd::Constant(1, 1, var));
}

}  // namespace

TEST_SUITE("scenario") {
  TEST_CASE("validation") {
    auto s = bernoulli({0.3, 0.3}, 0, 100);
    CHECK_THROWS_AS(validate_scenario(s), std::invalid_argument);
    s = bernoulli({0.3, 0.3}, 10, 100);
    s.allocation = {0.5, 0.6};
    CHECK_THROWS_AS(validate_scenario(s), std::invalid_argument);
    s = bernoulli({0.3, 1.3}, 10, 100);
    CHECK_THROWS_AS(validate_scenario(s), std::invalid_argument);
    s = bernoulli({0.3}, 10, 100);
    CHECK_THROWS_AS(validate_scenario(s), std::invalid_argument);
  }

  TEST_CASE("json round trip") {
    const auto doc = nlohmann::json::parse(R"({
      "generator": {"type": "normal", "mean": [0, 0.1], "sd": [1, 1]},
      "max_n": 5000, "replications": 20, "seed": 9, "checkpoints": [100, 1000]})");
    const auto spec = scenario_from_json(doc);
    CHECK(spec.allocation == std::vector<double>{0.5, 0.5});
    CHECK(std::get<NormalArms>(spec.generator).mean[1] == 0.1);
    CHECK(scenario_from_json(scenario_to_json(spec)).checkpoints == spec.checkpoints);
    CHECK(scenario_to_json(scenario_from_json(scenario_to_json(spec))) == scenario_to_json(spec));

    CHECK_THROWS_AS(scenario_from_json(nlohmann::json::parse(R"({"generator": {"type": "poisson"}})")),
                    std::invalid_argument);
    CHECK_THROWS_AS(scenario_from_json(nlohmann::json::parse(
                        R"({"generator": {"type": "bernoulli", "p": [0.1, 0.2]}, "max_n": -3, "replications": 1})")),
                    std::invalid_argument);
  }

  TEST_CASE("child seeds are distinct and stable") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t r = 0; r < 10000; ++r) seen.insert(child_seed(42, r));
    CHECK(seen.size() == 10000);
    CHECK(child_seed(42, 3) == child_seed(42, 3));
    CHECK(child_seed(42, 3) != child_seed(43, 3));
  }

  TEST_CASE("allocation frequencies") {
    auto s = bernoulli({0.5, 0.5}, 1, 1);
    s.allocation = {0.7, 0.3};
    ObservationSource src(s, 0);
    int first = 0;
    const int N = 100000;
    for (int i = 0; i < N; ++i) first += src.next().first == 0;
    // binomial SE is about 0.00145
    CHECK(static_cast<double>(first) / N == doctest::Approx(0.7).epsilon(0.01));
  }

  TEST_CASE("ordinal draws are category numbers") {
    ScenarioSpec s;
    s.generator = OrdinalArms{{{0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}}};
    s.allocation = {0.5, 0.5};
    s.replications = 1;
    s.max_n = 10;
    validate_scenario(s);
    ObservationSource src(s, 0);
    for (int i = 0; i < 1000; ++i) {
      const double v = src.draw(1);
      CHECK((v == 1.0 || v == 2.0 || v == 3.0));
    }
  }
}

TEST_SUITE("run_scenario") {
  TEST_CASE("bit-identical across runs and thread counts") {
    const auto spec = bernoulli({0.3, 0.35}, 60, 3000, 17);
    const auto a = report_to_json(run_scenario(spec, prop_diff_config(), {1, true}));
    const auto b = report_to_json(run_scenario(spec, prop_diff_config(), {1, true}));
    const auto c = report_to_json(run_scenario(spec, prop_diff_config(), {3, true}));
    CHECK(a.dump() == b.dump());
    CHECK(a.dump() == c.dump());
  }

  TEST_CASE("mismatched arms") {
    CHECK_THROWS_AS(run_scenario(bernoulli({0.3, 0.3, 0.3}, 5, 1000), prop_diff_config()), std::invalid_argument);
    CHECK_THROWS_AS(run_scenario(bernoulli({0.3, 0.3}, 5, 150), prop_diff_config()), std::invalid_argument);
  }

  TEST_CASE("alternative rejects more often than the null") {
    const auto null = run_scenario(bernoulli({0.3, 0.3}, 300, 4000, 5), prop_diff_config());
    const auto alt = run_scenario(bernoulli({0.3, 0.4}, 300, 4000, 5), prop_diff_config());
    CHECK(alt.rejection_rate > null.rejection_rate);
    CHECK(alt.rejection_rate > 0.5);
    REQUIRE(alt.stopping_time.has_value());
    CHECK(alt.stopping_time->count == alt.rejections);
    CHECK(alt.stopping_time->q05 <= alt.stopping_time->q50);
    CHECK(alt.stopping_time->q50 <= alt.stopping_time->q95);
    CHECK(*alt.mean_log_lambda_at_rejection >= -std::log(0.05));
    CHECK(alt.rejection_se == doctest::Approx(std::sqrt(alt.rejection_rate * (1 - alt.rejection_rate) / 300)));
  }

  TEST_CASE("records and checkpoints") {
    auto spec = bernoulli({0.3, 0.3}, 20, 1000, 2);
    spec.checkpoints = {200, 500, 1000};
    auto cfg = prop_diff_config();
    cfg.prior = normal_prior<double>(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(1, 1), PriorScale::effect_size);
    const auto r = run_scenario(spec, cfg, {1, true});
    REQUIRE(r.records.size() == 20);
    REQUIRE(r.lambda_mean_at.size() == 3);
    for (const auto& p : r.lambda_mean_at) {
      CHECK(p.mean == 1.0);
      CHECK(p.se == 0.0);
    }
    CHECK(r.rejections == 0);
    CHECK_FALSE(r.stopping_time.has_value());
    const auto table = report_table(r);
    CHECK(table.find("rejection rate") != std::string::npos);
    CHECK(report_to_json(r)["stopping_time"].is_null());
  }
}

TEST_SUITE("martingale_diagnostic") {
  ScenarioSpec normal_spec(std::uint64_t reps) {
    ScenarioSpec s;
    s.generator = NormalArms{{0.0, 0.0}, {1.0, 1.0}};
    s.allocation = {0.5, 0.5};
    s.replications = reps;
    s.max_n = 1000;
    s.seed = 3;
    return s;
  }

  TEST_CASE("point mass gives Lambda identically one") {
    const auto out = martingale_diagnostic(normal_spec(50), prior_1d(0.0, 0.0), {10, 100, 1000});
    REQUIRE(out.size() == 3);
    for (const auto& p : out) {
      CHECK(p.mean == 1.0);
      CHECK(p.se == 0.0);
    }
  }

  TEST_CASE("mean Lambda stays near one") {
    const auto out = martingale_diagnostic(normal_spec(2000), prior_1d(0.0, 0.02 * 0.02), {10, 100});
    for (const auto& p : out) {
      CAPTURE(p.n);
      CHECK(std::abs(p.mean - 1.0) <= 4.0 * p.se);
      CHECK(p.se > 0.0);
    }
  }

  TEST_CASE("needs a normal generator") {
    CHECK_THROWS_AS(martingale_diagnostic(bernoulli({0.5, 0.5}, 10, 10), prior_1d(0, 1), {5}),
                    std::invalid_argument);
  }
}

TEST_SUITE("covariance_diagnostic") {
  TEST_CASE("prop_diff two arms") {
    const auto r = covariance_diagnostic(bernoulli({0.5, 0.5}, 5000, 1, 8), Metric::prop_diff, {2000, 2000});
    CHECK(r.plugin(0, 0) == doctest::Approx(0.00025).epsilon(0.01));
    // relative SE of a variance from 5000 draws is about 2%
    CHECK(r.max_relative_error <= 0.10);
    CHECK(r.used == 5000);
  }

  TEST_CASE("requires a null generator matching the metric") {
    CHECK_THROWS_AS(covariance_diagnostic(bernoulli({0.5, 0.6}, 50, 1), Metric::prop_diff, {100, 100}),
                    std::invalid_argument);
    CHECK_THROWS_AS(covariance_diagnostic(bernoulli({0.5, 0.5}, 50, 1), Metric::mean_diff, {100, 100}),
                    std::invalid_argument);
  }
}
