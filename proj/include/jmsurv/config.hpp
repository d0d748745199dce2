#pragma once

#include <cstdint>
#include <filesystem>
#include "json.hpp"
#include <optional>
#include <string>
#include <vector>

#include "jmsurv/extrapolate.hpp"
#include "jmsurv/model.hpp"
#include "jmsurv/sampler.hpp"

namespace jmsurv {

/// Everything a command needs. Every field has a default, so a minimal
/// config file only names the data paths.
struct RunConfig {
  std::filesystem::path longitudinal;
  std::filesystem::path survival;
  std::filesystem::path output = "out";
  std::string scenario = "S2";
  std::optional<std::uint64_t> simulation_seed;
  JointModelSpec spec;
  McmcConfig mcmc = McmcConfig::paper();
  ExtrapolationOptions extrapolation;
  std::vector<double> km_horizons{60.0};  // months
  double rhat_threshold = 1.05;
  double mcse_threshold = 0.05;
};

/// Applies a named MCMC preset ("smoke" or "paper").
void apply_preset(McmcConfig& mcmc, const std::string& preset);

nlohmann::json to_json(const RunConfig& config);
/// Unknown keys and ill-typed values are InputErrors. Relative data and
/// output paths are resolved against `base`.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
RunConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64-bit hash of the canonical (sorted-key, compact) JSON text, as
/// 16 hex digits.
std::string manifest_hash(const nlohmann::json& canonical);

}  // namespace jmsurv
