#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "jmsurv/data.hpp"
#include "jmsurv/model.hpp"
#include "jmsurv/quadrature.hpp"

namespace jmsurv {

/// Flattened, immutable view of a cohort for the per-patient kernels.
struct CohortArrays {
  std::vector<double> os_time;
  std::vector<double> log_os_time;
  std::vector<std::uint8_t> event;
  std::vector<std::size_t> group;
  std::vector<std::size_t> obs_offset;  // size n + 1, into obs_time / obs_sld
  std::vector<double> obs_time;
  std::vector<double> obs_sld;
  std::vector<std::vector<std::size_t>> group_members;

  explicit CohortArrays(const CohortDataset& cohort);
  std::size_t size() const { return os_time.size(); }
  std::size_t obs_count(std::size_t i) const { return obs_offset[i + 1] - obs_offset[i]; }
};

/// Survival-side parameters shared by every patient in one evaluation.
/// root_nodes[j] = graded_nodes[j]^(1/shape), so a patient's quadrature
/// abscissae are os_time * root_nodes[j]; weights are the graded weights.
struct SurvivalKernelParams {
  double shape = 1.0;
  double log_shape = 0.0;
  AssociationFunctional functional = AssociationFunctional::current_value;
  std::span<const double> group_log_scale;
  std::span<const double> group_alpha;
  std::span<const double> root_nodes;
  std::span<const double> weights;
};

/// Fills root_nodes for the given shape.
void fill_root_nodes(const GaussLegendre& rule, double shape, std::vector<double>& root_nodes);

/// One patient's survival log-likelihood term
/// event * log h(T) - H(0, T); cap_flag is set when a linear predictor was capped.
double survival_term(const SurvivalKernelParams& params, double os_time, double log_os_time,
                     bool event, std::size_t group, double intercept, double slope,
                     std::uint8_t& cap_flag);

/// Serial reference: out[k] = survival_term for patient patients[k].
/// intercept/slope are indexed by patient.
void survival_terms_serial(const SurvivalKernelParams& params, const CohortArrays& cohort,
                           std::span<const std::size_t> patients,
                           std::span<const double> intercept, std::span<const double> slope,
                           std::span<double> out, std::span<std::uint8_t> caps);

/// OpenMP version of survival_terms_serial; each output slot is written by
/// exactly one thread, so results are bitwise identical to the serial path.
void survival_terms_parallel(const SurvivalKernelParams& params, const CohortArrays& cohort,
                             std::span<const std::size_t> patients,
                             std::span<const double> intercept, std::span<const double> slope,
                             std::span<double> out, std::span<std::uint8_t> caps);

/// Residual sum of squares of one patient's SLD around intercept + slope * t.
double residual_ss(const CohortArrays& cohort, std::size_t patient, double intercept,
                   double slope);

void residual_ss_serial(const CohortArrays& cohort, std::span<const std::size_t> patients,
                        std::span<const double> intercept, std::span<const double> slope,
                        std::span<double> out);

void residual_ss_parallel(const CohortArrays& cohort, std::span<const std::size_t> patients,
                          std::span<const double> intercept, std::span<const double> slope,
                          std::span<double> out);

/// Fixed-order sum, independent of how the terms were produced.
double ordered_sum(std::span<const double> terms);

}  // namespace jmsurv
