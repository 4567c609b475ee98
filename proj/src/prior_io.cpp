#include "msprt/prior_io.hpp"

#include <fstream>
#include <sstream>

namespace msprt {

using nlohmann::json;

std::string to_string(PriorScale scale) {
  return scale == PriorScale::effect_size ? "effect_size" : "natural";
}

PriorScale parse_prior_scale(const std::string& text) {
  if (text == "natural") return PriorScale::natural;
  if (text == "effect_size") return PriorScale::effect_size;
  throw PriorFormatError("scale must be \"natural\" or \"effect_size\", got \"" + text + "\"");
}

namespace {

double number_at(const json& node, const std::string& where) {
  if (!node.is_number()) {
    throw PriorFormatError(where + ": expected a number");
  }
  return node.get<double>();
}

}  // namespace

MixtureNormalPrior prior_from_json(const json& doc) {
  if (!doc.is_object()) {
    throw PriorFormatError("prior document must be a JSON object");
  }
  if (!doc.contains("dimension") || !doc["dimension"].is_number_integer()) {
    throw PriorFormatError("dimension: expected a positive integer");
  }
  MixtureNormalPrior prior;
  const auto dim = doc["dimension"].get<long long>();
  if (dim < 1) {
    throw PriorFormatError("dimension: expected a positive integer");
  }
  prior.dimension = static_cast<Eigen::Index>(dim);
  if (doc.contains("scale")) {
    if (!doc["scale"].is_string()) throw PriorFormatError("scale: expected a string");
    prior.scale = parse_prior_scale(doc["scale"].get<std::string>());
  }
  if (!doc.contains("components") || !doc["components"].is_array()) {
    throw PriorFormatError("components: expected an array");
  }
  const auto& comps = doc["components"];
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const std::string where = "components[" + std::to_string(i) + "]";
    const auto& c = comps[i];
    if (!c.is_object()) throw PriorFormatError(where + ": expected an object");
    if (!c.contains("weight")) throw PriorFormatError(where + ".weight: missing");
    if (!c.contains("mean") || !c["mean"].is_array()) {
      throw PriorFormatError(where + ".mean: expected an array");
    }
    if (!c.contains("cov") || !c["cov"].is_array()) {
      throw PriorFormatError(where + ".cov: expected an array of rows");
    }
    MixtureComponent<double> comp;
    comp.weight = number_at(c["weight"], where + ".weight");
    const auto& mean = c["mean"];
    comp.mean.resize(static_cast<Eigen::Index>(mean.size()));
    for (std::size_t k = 0; k < mean.size(); ++k) {
      comp.mean(static_cast<Eigen::Index>(k)) =
          number_at(mean[k], where + ".mean[" + std::to_string(k) + "]");
    }
    const auto& rows = c["cov"];
    const auto nrows = static_cast<Eigen::Index>(rows.size());
    comp.cov.resize(nrows, nrows);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!rows[r].is_array() || rows[r].size() != rows.size()) {
        throw PriorFormatError(where + ".cov: expected a square matrix");
      }
      for (std::size_t k = 0; k < rows[r].size(); ++k) {
        comp.cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = number_at(
            rows[r][k], where + ".cov[" + std::to_string(r) + "][" + std::to_string(k) + "]");
      }
    }
    prior.components.push_back(std::move(comp));
  }
  if (auto diag = validate_prior(prior)) {
    throw PriorFormatError(diag->message);
  }
  return prior;
}

json prior_to_json(const MixtureNormalPrior& prior) {
  json comps = json::array();
  for (const auto& c : prior.components) {
    json mean = json::array();
    for (Eigen::Index i = 0; i < c.mean.size(); ++i) mean.push_back(c.mean(i));
    json cov = json::array();
    for (Eigen::Index r = 0; r < c.cov.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index k = 0; k < c.cov.cols(); ++k) row.push_back(c.cov(r, k));
      cov.push_back(std::move(row));
    }
    comps.push_back({{"weight", c.weight}, {"mean", std::move(mean)}, {"cov", std::move(cov)}});
  }
  return {{"dimension", prior.dimension}, {"scale", to_string(prior.scale)}, {"components", comps}};
}

MixtureNormalPrior load_prior_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw PriorFormatError("cannot open prior file " + path.string());
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw PriorFormatError(path.string() + ": invalid JSON: " + e.what());
  }
  return prior_from_json(doc);
}

}  // namespace msprt
