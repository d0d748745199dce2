#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "jmsurv/data.hpp"
#include "jmsurv/quadrature.hpp"

namespace jmsurv {

enum class AssociationStructure { common, exchangeable, independent };
enum class AssociationFunctional { current_value, slope };

std::string to_string(AssociationStructure s);
std::string to_string(AssociationFunctional f);
AssociationStructure parse_structure(std::string_view text);
AssociationFunctional parse_functional(std::string_view text);

/// Prior hyperparameters. Defaults are the published settings; the residual
/// SD shares the between-patient SD bound.
struct PriorSettings {
  double intercept_lower = 0.0;
  double intercept_upper = 60.0;
  double slope_lower = 0.0;
  double slope_upper = 1.0;
  double sd_upper = 20.0;        // omega0, omega1 ~ Uniform(0, sd_upper)
  double sigma_upper = 20.0;     // sigma ~ Uniform(0, sigma_upper)
  double coefficient_sd = 1000;  // phi, alpha ~ Normal(0, coefficient_sd^2)
  double shape_rate = 0.003;     // kappa ~ Exponential(shape_rate)
  double tau_sd = 0.5;           // tau ~ Half-Normal(0, tau_sd^2)

  bool operator==(const PriorSettings&) const = default;
};

struct JointModelSpec {
  AssociationStructure structure = AssociationStructure::common;
  AssociationFunctional functional = AssociationFunctional::current_value;
  PriorSettings priors;
  std::size_t quadrature_nodes = 15;
  bool random_slope = true;
  bool group_intercepts = false;   // per-group longitudinal intercepts
  bool wide_slope_prior = false;   // slope ~ Uniform(-1, 1)
  bool association_fixed_zero = false;  // degenerate prior at alpha = 0 (common only)
  std::vector<std::string> groups;      // label order; first is the reference group

  double slope_lower() const { return wide_slope_prior ? -1.0 : priors.slope_lower; }
  double slope_upper() const { return priors.slope_upper; }

  /// Throws InputError on inconsistent settings.
  void validate() const;

  bool operator==(const JointModelSpec&) const = default;
};

struct LongitudinalParams {
  double beta0 = 30.0;   // mm
  double beta1 = 0.5;    // mm/month
  double sigma = 5.0;    // mm
  double omega0 = 10.0;  // mm
  double omega1 = 0.1;   // mm/month; 0 when the random slope is disabled
  std::vector<double> group_intercepts;  // replaces beta0 when non-empty
  std::vector<double> b0;
  std::vector<double> b1;

  double intercept(std::size_t group) const {
    return group_intercepts.empty() ? beta0 : group_intercepts[group];
  }

  bool operator==(const LongitudinalParams&) const = default;
};

struct SurvivalParams {
  double shape = 1.0;
  std::vector<double> phi;  // phi[0] intercept (reference group); phi[k] contrast of group k

  double linear_predictor(std::size_t group) const {
    return phi[0] + (group == 0 ? 0.0 : phi[group]);
  }

  bool operator==(const SurvivalParams&) const = default;
};

struct AssociationParams {
  AssociationStructure structure = AssociationStructure::common;
  AssociationFunctional functional = AssociationFunctional::current_value;
  double alpha = 0.0;
  std::vector<double> alpha_k;  // one per group; mirrors alpha under the common structure
  double tau = 0.0;             // exchangeable only

  double for_group(std::size_t group) const {
    return structure == AssociationStructure::common ? alpha : alpha_k[group];
  }

  bool operator==(const AssociationParams&) const = default;
};

struct ParameterState {
  LongitudinalParams longitudinal;
  SurvivalParams survival;
  AssociationParams association;

  bool operator==(const ParameterState&) const = default;
};

/// A zero-random-effect state shaped for spec and cohort.
ParameterState make_state(const JointModelSpec& spec, const CohortDataset& cohort);

/// Throws InputError if the state's shape does not match spec/cohort.
void check_shape(const ParameterState& state, const JointModelSpec& spec,
                 const CohortDataset& cohort);

/// Counts linear predictors capped before exponentiation.
struct HazardDiagnostics {
  std::size_t cap_events = 0;
};

constexpr double kLinearPredictorCap = 700.0;

double trajectory_mean(const LongitudinalParams& params, std::size_t patient, double t,
                       std::size_t group = 0);
double trajectory_slope(const LongitudinalParams& params, std::size_t patient);

double longitudinal_loglik(const LongitudinalParams& params, const CohortDataset& cohort);

/// h0(t) = shape * exp(log_scale) * t^(shape - 1).
double baseline_hazard(double shape, double log_scale, double t);

/// Everything needed to evaluate one patient's hazard: the trajectory is
/// m(t) = intercept + slope * t and the linked quantity is m(t) (current value)
/// or the slope.
struct PatientHazard {
  double shape = 1.0;
  double log_scale = 0.0;  // phi' v_i
  double alpha = 0.0;
  double intercept = 0.0;
  double slope = 0.0;
  AssociationFunctional functional = AssociationFunctional::current_value;

  double log_hazard(double t, HazardDiagnostics* diag = nullptr) const;
  double hazard(double t, HazardDiagnostics* diag = nullptr) const;
  /// H(lo, hi): integral of the hazard over [lo, hi].
  double cumulative(double lo, double hi, const GaussLegendre& rule,
                    HazardDiagnostics* diag = nullptr) const;
  bool constant_link() const;
};

PatientHazard patient_hazard(const ParameterState& state, const CohortDataset& cohort,
                             std::size_t patient);

double joint_hazard(const ParameterState& state, const CohortDataset& cohort, std::size_t patient,
                    double t, HazardDiagnostics* diag = nullptr);

double cumulative_hazard(const ParameterState& state, const CohortDataset& cohort,
                         std::size_t patient, double t, const GaussLegendre& rule,
                         HazardDiagnostics* diag = nullptr);

double survival_loglik(const ParameterState& state, const CohortDataset& cohort,
                       const JointModelSpec& spec, HazardDiagnostics* diag = nullptr);

double log_prior(const ParameterState& state, const JointModelSpec& spec);

double log_posterior(const ParameterState& state, const CohortDataset& cohort,
                     const JointModelSpec& spec, HazardDiagnostics* diag = nullptr);

/// Hazard ratio for a change of delta in the linked quantity.
double association_hr(double alpha, double delta);

double normal_logpdf(double x, double mean, double sd);

}  // namespace jmsurv
