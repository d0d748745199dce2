#include "jmsurv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jmsurv/error.hpp"
#include "jmsurv/layout.hpp"

namespace jmsurv {

namespace {

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x, double mean) {
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size() - 1);
}

void check_chains(const std::vector<std::vector<double>>& chains, std::size_t min_length) {
  if (chains.empty()) throw InputError("diagnostics: no chains");
  for (const auto& c : chains) {
    if (c.size() != chains.front().size()) {
      throw InputError("diagnostics: chains have different lengths");
    }
  }
  if (chains.front().size() < min_length) {
    throw InputError("diagnostics: chains are too short");
  }
}

}  // namespace

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

RhatResult split_rhat(const std::vector<std::vector<double>>& chains) {
  check_chains(chains, 4);
  const std::size_t half = chains.front().size() / 2;
  const std::size_t odd = chains.front().size() % 2;
  std::vector<double> means;
  std::vector<double> vars;
  for (const auto& c : chains) {
    for (std::size_t part = 0; part < 2; ++part) {
      std::span<const double> s(c.data() + part * (half + odd), half);
      const double m = mean_of(s);
      means.push_back(m);
      vars.push_back(variance_of(s, m));
    }
  }
  const auto n = static_cast<double>(half);
  const double w = mean_of(vars);
  const double grand = mean_of(means);
  double between = 0.0;
  for (double m : means) between += (m - grand) * (m - grand);
  between *= n / static_cast<double>(means.size() - 1);
  if (!(w > 0.0)) return {1.0, true};
  const double var_plus = (n - 1.0) / n * w + between / n;
  return {std::sqrt(var_plus / w), false};
}

McseResult batch_means_mcse(const std::vector<std::vector<double>>& chains) {
  check_chains(chains, 1);
  const std::size_t len = chains.front().size();
  const auto batch = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(len))));
  const std::size_t per_chain = batch == 0 ? 0 : len / batch;
  const std::size_t total_batches = per_chain * chains.size();
  if (total_batches < 10) {
    throw InputError("mcse: fewer than 10 batches (" + std::to_string(total_batches) + ")");
  }

  std::vector<double> pooled;
  pooled.reserve(len * chains.size());
  double ss = 0.0;
  for (const auto& c : chains) {
    std::vector<double> batch_means(per_chain);
    for (std::size_t b = 0; b < per_chain; ++b) {
      batch_means[b] = mean_of(std::span<const double>(c.data() + b * batch, batch));
    }
    const double m = mean_of(batch_means);
    for (double bm : batch_means) ss += (bm - m) * (bm - m);
    pooled.insert(pooled.end(), c.begin(), c.begin() + static_cast<std::ptrdiff_t>(per_chain * batch));
  }
  const double batch_var = ss / static_cast<double>(total_batches - chains.size());
  McseResult r;
  r.mcse = std::sqrt(static_cast<double>(batch) * batch_var / static_cast<double>(pooled.size()));
  r.posterior_sd = std::sqrt(variance_of(pooled, mean_of(pooled)));
  if (!(r.posterior_sd > 0.0)) {
    r.degenerate = true;
    r.ratio = 0.0;
  } else {
    r.ratio = r.mcse / r.posterior_sd;
  }
  return r;
}

RhatResult rhat(const PosteriorSamples& samples, std::string_view parameter) {
  if (samples.chains.size() < 2) throw InputError("rhat needs at least 2 chains");
  return split_rhat(samples.series(parameter));
}

McseResult mcse_ratio(const PosteriorSamples& samples, std::string_view parameter) {
  return batch_means_mcse(samples.series(parameter));
}

DicResult dic_from_deviances(std::span<const double> deviances, double deviance_at_mean) {
  if (deviances.empty()) throw InputError("dic: no draws");
  if (!std::isfinite(deviance_at_mean)) {
    throw NumericalError("dic: deviance at the posterior mean is not finite");
  }
  DicResult r;
  r.dbar = mean_of(deviances);
  r.d_at_mean = deviance_at_mean;
  r.pd = r.dbar - deviance_at_mean;
  r.dic = r.dbar + r.pd;
  return r;
}

std::vector<double> posterior_means(const PosteriorSamples& samples) {
  if (samples.chains.empty() || samples.total_draws() == 0) {
    throw InputError("posterior has no draws");
  }
  const std::size_t width = samples.chains.front().width;
  std::vector<double> sum(width, 0.0);
  for (const auto& c : samples.chains) {
    for (std::size_t d = 0; d < c.size(); ++d) {
      const auto row = c.row(d);
      for (std::size_t j = 0; j < width; ++j) sum[j] += row[j];
    }
  }
  const auto n = static_cast<double>(samples.total_draws());
  for (auto& s : sum) s /= n;
  return sum;
}

DicResult dic(const PosteriorSamples& samples, const CohortDataset& cohort) {
  std::vector<double> deviances;
  for (const auto& c : samples.chains) {
    for (double ll : c.loglik) deviances.push_back(-2.0 * ll);
  }
  const ParameterLayout layout(samples.spec, cohort);
  if (layout.size() != samples.chains.front().width) {
    throw InputError("dic: posterior width does not match the cohort and spec");
  }
  const ParameterState mean_state = layout.unpack(posterior_means(samples));
  const double ll = longitudinal_loglik(mean_state.longitudinal, cohort) +
                    survival_loglik(mean_state, cohort, samples.spec);
  return dic_from_deviances(deviances, -2.0 * ll);
}

DiagnosticsReport diagnose(const PosteriorSamples& samples, const CohortDataset& cohort,
                           double rhat_threshold, double mcse_threshold) {
  DiagnosticsReport report;
  report.rhat_threshold = rhat_threshold;
  report.mcse_threshold = mcse_threshold;
  const auto names =
      samples.config.monitored.empty() ? samples.population_names() : samples.config.monitored;
  for (const auto& name : names) {
    const auto series = samples.series(name);
    std::vector<double> pooled;
    for (const auto& s : series) pooled.insert(pooled.end(), s.begin(), s.end());
    ParameterDiagnostics p;
    p.name = name;
    p.mean = mean_of(pooled);
    p.sd = pooled.size() > 1 ? std::sqrt(variance_of(pooled, p.mean)) : 0.0;
    p.lo95 = quantile(pooled, 0.025);
    p.hi95 = quantile(pooled, 0.975);
    p.rhat = split_rhat(series);
    p.rhat_ok = p.rhat.value < rhat_threshold;
    try {
      p.mcse = batch_means_mcse(series);
      p.mcse_ok = p.mcse.ratio < mcse_threshold;
    } catch (const InputError&) {
      p.mcse.available = false;
      p.mcse.posterior_sd = p.sd;
      p.mcse_ok = false;
    }
    report.converged = report.converged && p.rhat_ok && p.mcse_ok;
    report.parameters.push_back(std::move(p));
  }
  for (const auto& c : samples.chains) {
    for (const auto& [k, v] : c.acceptance) {
      report.acceptance[k] += v / static_cast<double>(samples.chains.size());
    }
    report.cap_events += c.cap_events;
  }
  report.dic = dic(samples, cohort);
  return report;
}

}  // namespace jmsurv
