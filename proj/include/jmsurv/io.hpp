#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "jmsurv/diagnostics.hpp"
#include "jmsurv/extrapolate.hpp"
#include "jmsurv/sampler.hpp"

namespace jmsurv {

inline constexpr const char* kSchemaVersion = "1.0";

/// `# manifest <hash>` then `chain,iteration,<names...>` and one row per draw.
void write_posterior_csv(const std::filesystem::path& path, const PosteriorSamples& samples,
                         const std::string& manifest);

struct PosteriorTable {
  std::string manifest;  // empty when the file carries none
  std::vector<std::string> names;
  std::vector<std::vector<std::vector<double>>> chains;  // chain -> draw -> values
};

PosteriorTable read_posterior_csv(const std::filesystem::path& path);

/// Rebuilds PosteriorSamples from a table, checking the parameter names
/// against spec and cohort. Per-draw log-likelihoods are recomputed.
PosteriorSamples posterior_from_table(const PosteriorTable& table, const JointModelSpec& spec,
                                      const McmcConfig& config, const CohortDataset& cohort);

nlohmann::json to_json(const DiagnosticsReport& report, const std::string& manifest);
nlohmann::json to_json(const ExtrapolationResult& result);
nlohmann::json truth_json(const ParameterState& truth, const std::vector<std::string>& groups,
                          const std::vector<std::string>& patients);

/// `# manifest <hash>` then `scope,time_months,mean,lo95,hi95`.
void write_curves_csv(const std::filesystem::path& path, const std::vector<CurveGrid>& curves,
                      const std::string& manifest);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// Provenance record for one command run.
nlohmann::json make_manifest(const std::string& command, const nlohmann::json& config,
                             const std::vector<std::uint64_t>& seeds);

}  // namespace jmsurv
