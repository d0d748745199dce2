#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "jmsurv/data.hpp"
#include "jmsurv/model.hpp"
#include "jmsurv/sampler.hpp"

namespace jmsurv {

struct RhatResult {
  double value = 1.0;
  bool constant = false;  // zero within-chain variance; value defined as 1
};

/// Split-chain potential scale reduction factor. Each chain is halved (the
/// middle draw of an odd-length chain is dropped).
RhatResult split_rhat(const std::vector<std::vector<double>>& chains);

struct McseResult {
  double mcse = 0.0;
  double posterior_sd = 0.0;
  double ratio = 0.0;
  bool degenerate = false;  // zero posterior SD; ratio undefined and set to 0
  bool available = true;    // false when the run was too short for 10 batches
};

/// Batch-means MCSE of the pooled mean with batches of floor(sqrt(n)) draws
/// per chain, divided by the pooled posterior SD. Throws InputError when
/// fewer than 10 batches are available.
McseResult batch_means_mcse(const std::vector<std::vector<double>>& chains);

RhatResult rhat(const PosteriorSamples& samples, std::string_view parameter);
McseResult mcse_ratio(const PosteriorSamples& samples, std::string_view parameter);

struct DicResult {
  double dbar = 0.0;
  double d_at_mean = 0.0;
  double pd = 0.0;
  double dic = 0.0;
};

/// Conditional DIC from per-draw deviances and the deviance at the posterior
/// mean.
DicResult dic_from_deviances(std::span<const double> deviances, double deviance_at_mean);

/// Conditional DIC: random effects are plugged in at their posterior means.
DicResult dic(const PosteriorSamples& samples, const CohortDataset& cohort);

/// Posterior mean of every stored coordinate across all chains.
std::vector<double> posterior_means(const PosteriorSamples& samples);

struct ParameterDiagnostics {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
  RhatResult rhat;
  McseResult mcse;
  bool rhat_ok = true;
  bool mcse_ok = true;
};

struct DiagnosticsReport {
  double rhat_threshold = 1.05;
  double mcse_threshold = 0.05;
  std::vector<ParameterDiagnostics> parameters;
  std::map<std::string, double> acceptance;  // averaged over chains
  std::size_t cap_events = 0;
  DicResult dic;
  bool converged = true;  // every monitored R-hat and MCSE ratio below threshold
};

/// Diagnostics for the monitored parameters (population parameters when the
/// config lists none).
DiagnosticsReport diagnose(const PosteriorSamples& samples, const CohortDataset& cohort,
                           double rhat_threshold = 1.05, double mcse_threshold = 0.05);

/// Type-7 (linear interpolation) sample quantile.
double quantile(std::vector<double> values, double p);

}  // namespace jmsurv
