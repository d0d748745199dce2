#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "jmsurv/config.hpp"
#include "jmsurv/data.hpp"

namespace jmsurv {

enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitNumerical = 3 };

/// Loads and joins the configured data files, using the configured group order.
CohortDataset load_cohort(const RunConfig& config);

/// Order-sensitive fingerprint of the survival and biomarker records.
std::string cohort_fingerprint(const CohortDataset& cohort);

// Command bodies. They throw InputError / NumericalError; run_cli maps those
// to exit codes and an error JSON document.
void cmd_simulate(const RunConfig& config, std::ostream& log);
void cmd_fit(const RunConfig& config, std::ostream& log);
void cmd_diagnose(const RunConfig& config, const std::filesystem::path& posterior,
                  std::ostream& log);
void cmd_extrapolate(const RunConfig& config, const std::filesystem::path& posterior,
                     std::ostream& log);
void cmd_km(const RunConfig& config, std::ostream& log);
void cmd_compare(const RunConfig& config, const std::vector<std::filesystem::path>& inputs,
                 std::ostream& log);

/// Parses arguments and runs one command. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace jmsurv
