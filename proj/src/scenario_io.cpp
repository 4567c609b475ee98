#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "msprt/simulator.hpp"

namespace msprt {

using nlohmann::json;

namespace {

std::vector<double> numbers(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_array()) {
    throw std::invalid_argument(std::string("generator.") + key + ": expected an array");
  }
  std::vector<double> out;
  for (const auto& v : doc[key]) {
    if (!v.is_number()) throw std::invalid_argument(std::string("generator.") + key + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::uint64_t unsigned_field(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_number_unsigned()) {
    throw std::invalid_argument(std::string(key) + ": expected a non-negative integer");
  }
  return doc[key].get<std::uint64_t>();
}

}  // namespace

ScenarioSpec scenario_from_json(const json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("scenario must be a JSON object");
  if (!doc.contains("generator") || !doc["generator"].is_object()) {
    throw std::invalid_argument("generator: expected an object");
  }
  const json& g = doc["generator"];
  const std::string type = g.value("type", "");
  ScenarioSpec spec;
  if (type == "bernoulli") {
    spec.generator = BernoulliArms{numbers(g, "p")};
  } else if (type == "normal") {
    spec.generator = NormalArms{numbers(g, "mean"), numbers(g, "sd")};
  } else if (type == "lognormal") {
    spec.generator = LogNormalArms{numbers(g, "mu"), numbers(g, "sigma")};
  } else if (type == "uniform") {
    spec.generator = UniformArms{numbers(g, "lo"), numbers(g, "hi")};
  } else if (type == "ordinal") {
    if (!g.contains("probs") || !g["probs"].is_array()) {
      throw std::invalid_argument("generator.probs: expected an array of arrays");
    }
    OrdinalArms o;
    for (const auto& row : g["probs"]) o.probs.push_back(row.get<std::vector<double>>());
    spec.generator = std::move(o);
  } else {
    throw std::invalid_argument("generator.type must be bernoulli, normal, lognormal, uniform or ordinal");
  }
  const std::size_t m = generator_arms(spec.generator);
  if (doc.contains("allocation")) {
    spec.allocation = doc["allocation"].get<std::vector<double>>();
  } else {
    spec.allocation.assign(m, 1.0 / static_cast<double>(m));
  }
  spec.max_n = unsigned_field(doc, "max_n");
  spec.replications = unsigned_field(doc, "replications");
  spec.seed = doc.contains("seed") ? unsigned_field(doc, "seed") : 0;
  if (doc.contains("checkpoints")) {
    spec.checkpoints = doc["checkpoints"].get<std::vector<std::uint64_t>>();
  }
  validate_scenario(spec);
  return spec;
}

json scenario_to_json(const ScenarioSpec& spec) {
  json g = std::visit(
      [](const auto& gen) -> json {
        using T = std::decay_t<decltype(gen)>;
        if constexpr (std::is_same_v<T, BernoulliArms>) {
          return {{"type", "bernoulli"}, {"p", gen.p}};
        } else if constexpr (std::is_same_v<T, NormalArms>) {
          return {{"type", "normal"}, {"mean", gen.mean}, {"sd", gen.sd}};
        } else if constexpr (std::is_same_v<T, LogNormalArms>) {
          return {{"type", "lognormal"}, {"mu", gen.mu}, {"sigma", gen.sigma}};
        } else if constexpr (std::is_same_v<T, UniformArms>) {
          return {{"type", "uniform"}, {"lo", gen.lo}, {"hi", gen.hi}};
        } else {
          return {{"type", "ordinal"}, {"probs", gen.probs}};
        }
      },
      spec.generator);
  json doc{{"generator", g},
           {"allocation", spec.allocation},
           {"max_n", spec.max_n},
           {"replications", spec.replications},
           {"seed", spec.seed}};
  if (!spec.checkpoints.empty()) doc["checkpoints"] = spec.checkpoints;
  return doc;
}

json report_to_json(const SimulationReport& r) {
  json doc;
  doc["replications"] = r.replications;
  doc["max_n"] = r.max_n;
  doc["rejections"] = r.rejections;
  doc["rejection_rate"] = r.rejection_rate;
  doc["rejection_se"] = r.rejection_se;
  if (r.stopping_time) {
    const auto& s = *r.stopping_time;
    doc["stopping_time"] = {{"count", s.count}, {"mean", s.mean}, {"q05", s.q05}, {"q25", s.q25},
                            {"q50", s.q50},     {"q75", s.q75},   {"q95", s.q95}};
  } else {
    doc["stopping_time"] = nullptr;
  }
  doc["mean_log_lambda_at_rejection"] =
      r.mean_log_lambda_at_rejection ? json(*r.mean_log_lambda_at_rejection) : json(nullptr);
  json lam = json::array();
  for (const auto& p : r.lambda_mean_at) lam.push_back({{"n", p.n}, {"mean", p.mean}, {"se", p.se}});
  doc["lambda_mean_at"] = std::move(lam);
  if (!r.records.empty()) {
    json recs = json::array();
    for (const auto& rec : r.records) {
      recs.push_back({{"rejected", rec.rejected},
                      {"stopping_n", rec.stopping_n},
                      {"log_lambda_at_stop", rec.log_lambda_at_stop},
                      {"lambda_at_checkpoints", rec.lambda_at_checkpoints}});
    }
    doc["records"] = std::move(recs);
  }
  return doc;
}

std::string report_table(const SimulationReport& r) {
  std::ostringstream os;
  auto row = [&os](const std::string& label, const std::string& value) {
    os << std::left << std::setw(34) << label << value << '\n';
  };
  auto num = [](double v) {
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
  };
  row("replications", std::to_string(r.replications));
  row("truncation horizon (max_n)", std::to_string(r.max_n));
  row("rejections by max_n", std::to_string(r.rejections));
  row("rejection rate", num(r.rejection_rate) + " (se " + num(r.rejection_se) + ")");
  if (r.stopping_time) {
    const auto& s = *r.stopping_time;
    row("stopping time mean", num(s.mean));
    row("stopping time q05/q25/q50/q75/q95", num(s.q05) + " / " + num(s.q25) + " / " +
                                                 num(s.q50) + " / " + num(s.q75) + " / " +
                                                 num(s.q95));
  }
  if (r.mean_log_lambda_at_rejection) {
    row("mean log Lambda at rejection", num(*r.mean_log_lambda_at_rejection));
  }
  if (!r.lambda_mean_at.empty()) {
    os << '\n' << std::right << std::setw(10) << "n" << std::setw(16) << "mean Lambda"
       << std::setw(16) << "se" << '\n';
    for (const auto& p : r.lambda_mean_at) {
      os << std::setw(10) << p.n << std::setw(16) << num(p.mean) << std::setw(16) << num(p.se)
         << '\n';
    }
  }
  return os.str();
}

}  // namespace msprt
