#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "msprt/errors.hpp"
#include "msprt/prior.hpp"

namespace msprt {

/// Malformed prior document, or one that violates a prior invariant. The
/// message carries the validate_prior diagnostic text.
class PriorFormatError : public Error {
 public:
  using Error::Error;
};

std::string to_string(PriorScale scale);
PriorScale parse_prior_scale(const std::string& text);

/// {"dimension": d, "scale": "natural"|"effect_size",
///  "components": [{"weight": w, "mean": [...], "cov": [[...], ...]}, ...]}
MixtureNormalPrior prior_from_json(const nlohmann::json& doc);
nlohmann::json prior_to_json(const MixtureNormalPrior& prior);

MixtureNormalPrior load_prior_file(const std::filesystem::path& path);

}  // namespace msprt
