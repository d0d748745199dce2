#include "jmsurv/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace jmsurv {

namespace {

// Below this many patients the fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 256;

inline double capped(double x, std::uint8_t& flag) {
  if (x > kLinearPredictorCap) {
    flag = 1;
    return kLinearPredictorCap;
  }
  return x;
}

}  // namespace

CohortArrays::CohortArrays(const CohortDataset& cohort) {
  const std::size_t n = cohort.size();
  os_time.reserve(n);
  log_os_time.reserve(n);
  event.reserve(n);
  group.reserve(n);
  obs_offset.reserve(n + 1);
  obs_offset.push_back(0);
  group_members.assign(cohort.group_count(), {});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = cohort.patients[i];
    os_time.push_back(p.survival.os_time);
    log_os_time.push_back(std::log(p.survival.os_time));
    event.push_back(p.survival.event ? 1 : 0);
    group.push_back(p.group);
    group_members[p.group].push_back(i);
    for (const auto& v : p.visits) {
      obs_time.push_back(v.time);
      obs_sld.push_back(v.sld);
    }
    obs_offset.push_back(obs_time.size());
  }
}

void fill_root_nodes(const GaussLegendre& rule, double shape, std::vector<double>& root_nodes) {
  root_nodes.resize(rule.size());
  const double inv = 1.0 / shape;
  for (std::size_t j = 0; j < rule.size(); ++j) root_nodes[j] = std::pow(rule.graded_nodes[j], inv);
}

double survival_term(const SurvivalKernelParams& params, double os_time, double log_os_time,
                     bool event, std::size_t group, double intercept, double slope,
                     std::uint8_t& cap_flag) {
  const double eta = params.group_log_scale[group];
  const double alpha = params.group_alpha[group];
  const double t_pow_shape = std::exp(params.shape * log_os_time);
  const double log_baseline = params.log_shape + (params.shape - 1.0) * log_os_time;

  double lp_at_t = 0.0;
  double cumulative = 0.0;
  if (params.functional == AssociationFunctional::slope) {
    lp_at_t = capped(eta + alpha * slope, cap_flag);
    cumulative = std::exp(lp_at_t) * t_pow_shape;
  } else if (alpha * slope == 0.0) {
    lp_at_t = capped(eta + alpha * intercept, cap_flag);
    cumulative = std::exp(lp_at_t) * t_pow_shape;
  } else {
    lp_at_t = capped(eta + alpha * (intercept + slope * os_time), cap_flag);
    const double base = eta + alpha * intercept;
    const double rate = alpha * slope * os_time;
    double sum = 0.0;
    const std::size_t m = params.root_nodes.size();
    for (std::size_t j = 0; j < m; ++j) {
      sum += params.weights[j] * std::exp(capped(base + rate * params.root_nodes[j], cap_flag));
    }
    cumulative = t_pow_shape * sum;
  }
  return event ? (log_baseline + lp_at_t - cumulative) : -cumulative;
}

void survival_terms_serial(const SurvivalKernelParams& params, const CohortArrays& cohort,
                           std::span<const std::size_t> patients,
                           std::span<const double> intercept, std::span<const double> slope,
                           std::span<double> out, std::span<std::uint8_t> caps) {
  for (std::size_t k = 0; k < patients.size(); ++k) {
    const std::size_t i = patients[k];
    caps[k] = 0;
    out[k] = survival_term(params, cohort.os_time[i], cohort.log_os_time[i], cohort.event[i] != 0,
                           cohort.group[i], intercept[i], slope[i], caps[k]);
  }
}

void survival_terms_parallel(const SurvivalKernelParams& params, const CohortArrays& cohort,
                             std::span<const std::size_t> patients,
                             std::span<const double> intercept, std::span<const double> slope,
                             std::span<double> out, std::span<std::uint8_t> caps) {
  const auto n = static_cast<std::ptrdiff_t>(patients.size());
  const bool go_parallel = patients.size() >= kParallelThreshold && !omp_in_parallel();
#pragma omp parallel for schedule(static) if (go_parallel)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const std::size_t i = patients[static_cast<std::size_t>(k)];
    auto& flag = caps[static_cast<std::size_t>(k)];
    flag = 0;
    out[static_cast<std::size_t>(k)] =
        survival_term(params, cohort.os_time[i], cohort.log_os_time[i], cohort.event[i] != 0,
                      cohort.group[i], intercept[i], slope[i], flag);
  }
}

double residual_ss(const CohortArrays& cohort, std::size_t patient, double intercept,
                   double slope) {
  double rss = 0.0;
  for (std::size_t j = cohort.obs_offset[patient]; j < cohort.obs_offset[patient + 1]; ++j) {
    const double r = cohort.obs_sld[j] - (intercept + slope * cohort.obs_time[j]);
    rss += r * r;
  }
  return rss;
}

void residual_ss_serial(const CohortArrays& cohort, std::span<const std::size_t> patients,
                        std::span<const double> intercept, std::span<const double> slope,
                        std::span<double> out) {
  for (std::size_t k = 0; k < patients.size(); ++k) {
    const std::size_t i = patients[k];
    out[k] = residual_ss(cohort, i, intercept[i], slope[i]);
  }
}

void residual_ss_parallel(const CohortArrays& cohort, std::span<const std::size_t> patients,
                          std::span<const double> intercept, std::span<const double> slope,
                          std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(patients.size());
  const bool go_parallel = patients.size() >= kParallelThreshold && !omp_in_parallel();
#pragma omp parallel for schedule(static) if (go_parallel)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const std::size_t i = patients[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(k)] = residual_ss(cohort, i, intercept[i], slope[i]);
  }
}

double ordered_sum(std::span<const double> terms) {
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace jmsurv
