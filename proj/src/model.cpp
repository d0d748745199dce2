#include "jmsurv/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "jmsurv/error.hpp"
#include "jmsurv/kernels.hpp"

namespace jmsurv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double capped(double x, HazardDiagnostics* diag) {
  if (std::isnan(x)) {
    throw NumericalError("non-finite linear predictor in hazard");
  }
  if (x > kLinearPredictorCap) {
    if (diag) ++diag->cap_events;
    return kLinearPredictorCap;
  }
  return x;
}

bool in_open(double x, double lo, double hi) { return x > lo && x < hi; }

}  // namespace

std::string to_string(AssociationStructure s) {
  switch (s) {
    case AssociationStructure::common: return "common";
    case AssociationStructure::exchangeable: return "exchangeable";
    case AssociationStructure::independent: return "independent";
  }
  return "common";
}

std::string to_string(AssociationFunctional f) {
  return f == AssociationFunctional::slope ? "slope" : "current";
}

AssociationStructure parse_structure(std::string_view text) {
  if (text == "common") return AssociationStructure::common;
  if (text == "exchangeable") return AssociationStructure::exchangeable;
  if (text == "independent") return AssociationStructure::independent;
  throw InputError("unknown association structure '" + std::string(text) + "'");
}

AssociationFunctional parse_functional(std::string_view text) {
  if (text == "current" || text == "current_value") return AssociationFunctional::current_value;
  if (text == "slope") return AssociationFunctional::slope;
  throw InputError("unknown association functional '" + std::string(text) + "'");
}

void JointModelSpec::validate() const {
  if (quadrature_nodes < 5) throw InputError("quadrature_nodes must be >= 5");
  if (!(priors.intercept_upper > priors.intercept_lower)) {
    throw InputError("intercept prior bounds are empty");
  }
  if (!(slope_upper() > slope_lower())) throw InputError("slope prior bounds are empty");
  if (!(priors.sd_upper > 0.0) || !(priors.sigma_upper > 0.0)) {
    throw InputError("standard deviation prior bounds must be positive");
  }
  if (!(priors.coefficient_sd > 0.0) || !(priors.shape_rate > 0.0) || !(priors.tau_sd > 0.0)) {
    throw InputError("prior scales must be positive");
  }
  if (association_fixed_zero && structure != AssociationStructure::common) {
    throw InputError("a fixed-zero association requires the common structure");
  }
}

ParameterState make_state(const JointModelSpec& spec, const CohortDataset& cohort) {
  const std::size_t k = cohort.group_count();
  if (k == 0) throw InputError("cohort has no tumour groups");
  ParameterState s;
  s.longitudinal.b0.assign(cohort.size(), 0.0);
  s.longitudinal.b1.assign(cohort.size(), 0.0);
  if (spec.group_intercepts) s.longitudinal.group_intercepts.assign(k, s.longitudinal.beta0);
  if (!spec.random_slope) s.longitudinal.omega1 = 0.0;
  s.survival.phi.assign(k, 0.0);
  s.survival.phi[0] = -5.0;
  s.association.structure = spec.structure;
  s.association.functional = spec.functional;
  s.association.alpha_k.assign(k, 0.0);
  s.association.tau = spec.structure == AssociationStructure::exchangeable ? 0.1 : 0.0;
  return s;
}

void check_shape(const ParameterState& state, const JointModelSpec& spec,
                 const CohortDataset& cohort) {
  const std::size_t k = cohort.group_count();
  const auto& l = state.longitudinal;
  if (l.b0.size() != cohort.size() || l.b1.size() != cohort.size()) {
    throw InputError("random effects do not match the cohort size");
  }
  if (spec.group_intercepts != !l.group_intercepts.empty() ||
      (spec.group_intercepts && l.group_intercepts.size() != k)) {
    throw InputError("group intercepts do not match the model specification");
  }
  if (state.survival.phi.size() != k) throw InputError("phi does not match the group count");
  if (state.association.alpha_k.size() != k) {
    throw InputError("alpha_k does not match the group count");
  }
  if (state.association.structure != spec.structure ||
      state.association.functional != spec.functional) {
    throw InputError("association settings do not match the model specification");
  }
}

double trajectory_mean(const LongitudinalParams& params, std::size_t patient, double t,
                       std::size_t group) {
  if (patient >= params.b0.size()) {
    throw InputError("unknown patient index " + std::to_string(patient));
  }
  return (params.intercept(group) + params.b0[patient]) + (params.beta1 + params.b1[patient]) * t;
}

double trajectory_slope(const LongitudinalParams& params, std::size_t patient) {
  if (patient >= params.b1.size()) {
    throw InputError("unknown patient index " + std::to_string(patient));
  }
  return params.beta1 + params.b1[patient];
}

double longitudinal_loglik(const LongitudinalParams& params, const CohortDataset& cohort) {
  if (params.b0.size() != cohort.size()) {
    throw InputError("random effects do not match the cohort size");
  }
  const double log_norm = std::log(params.sigma) + kLogSqrt2Pi;
  const double inv_2var = 0.5 / (params.sigma * params.sigma);
  double total = 0.0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& p = cohort.patients[i];
    const double a = params.intercept(p.group) + params.b0[i];
    const double b = params.beta1 + params.b1[i];
    double rss = 0.0;
    for (const auto& v : p.visits) {
      const double r = v.sld - (a + b * v.time);
      rss += r * r;
    }
    total += -static_cast<double>(p.visits.size()) * log_norm - rss * inv_2var;
  }
  return total;
}

double baseline_hazard(double shape, double log_scale, double t) {
  if (t < 0.0) throw InputError("baseline_hazard: negative time");
  if (t == 0.0 && shape < 1.0) {
    throw NumericalError("baseline_hazard: singular at t = 0 for shape < 1");
  }
  if (shape == 1.0) return std::exp(log_scale);
  return shape * std::exp(log_scale) * std::pow(t, shape - 1.0);
}

bool PatientHazard::constant_link() const {
  return functional == AssociationFunctional::slope || alpha * slope == 0.0;
}

double PatientHazard::log_hazard(double t, HazardDiagnostics* diag) const {
  if (t < 0.0) throw InputError("hazard: negative time");
  if (t == 0.0 && shape < 1.0) throw NumericalError("hazard: singular at t = 0 for shape < 1");
  const double link = functional == AssociationFunctional::slope ? slope : intercept + slope * t;
  const double lp = capped(log_scale + alpha * link, diag);
  const double log_t_term = shape == 1.0 ? 0.0 : (shape - 1.0) * std::log(t);
  return std::log(shape) + log_t_term + lp;
}

double PatientHazard::hazard(double t, HazardDiagnostics* diag) const {
  return std::exp(log_hazard(t, diag));
}

double PatientHazard::cumulative(double lo, double hi, const GaussLegendre& rule,
                                 HazardDiagnostics* diag) const {
  if (lo < 0.0 || hi < lo) throw InputError("cumulative hazard: invalid interval");
  if (hi == lo) return 0.0;
  const double ulo = lo == 0.0 ? 0.0 : std::pow(lo, shape);
  const double uhi = std::pow(hi, shape);
  double value = 0.0;
  double lp = 0.0;
  if (constant_link()) {
    const double link = functional == AssociationFunctional::slope ? slope : intercept;
    lp = capped(log_scale + alpha * link, diag);
    value = std::exp(lp) * (uhi - ulo);
  } else {
    // substitute u = s^shape so the baseline factor becomes the measure du
    const double inv = 1.0 / shape;
    double sum = 0.0;
    for (std::size_t j = 0; j < rule.size(); ++j) {
      const double s = std::pow(ulo + (uhi - ulo) * rule.graded_nodes[j], inv);
      lp = capped(log_scale + alpha * (intercept + slope * s), diag);
      sum += rule.graded_weights[j] * std::exp(lp);
    }
    value = (uhi - ulo) * sum;
  }
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "non-finite cumulative hazard at t = " << hi << " (linear predictor " << lp << ")";
    throw NumericalError(msg.str());
  }
  return value;
}

PatientHazard patient_hazard(const ParameterState& state, const CohortDataset& cohort,
                             std::size_t patient) {
  if (patient >= cohort.size()) {
    throw InputError("unknown patient index " + std::to_string(patient));
  }
  const std::size_t g = cohort.patients[patient].group;
  PatientHazard h;
  h.shape = state.survival.shape;
  h.log_scale = state.survival.linear_predictor(g);
  h.alpha = state.association.for_group(g);
  h.intercept = state.longitudinal.intercept(g) + state.longitudinal.b0[patient];
  h.slope = trajectory_slope(state.longitudinal, patient);
  h.functional = state.association.functional;
  return h;
}

double joint_hazard(const ParameterState& state, const CohortDataset& cohort, std::size_t patient,
                    double t, HazardDiagnostics* diag) {
  return patient_hazard(state, cohort, patient).hazard(t, diag);
}

double cumulative_hazard(const ParameterState& state, const CohortDataset& cohort,
                         std::size_t patient, double t, const GaussLegendre& rule,
                         HazardDiagnostics* diag) {
  if (!(t > 0.0)) throw InputError("cumulative_hazard: t must be > 0");
  return patient_hazard(state, cohort, patient).cumulative(0.0, t, rule, diag);
}

double survival_loglik(const ParameterState& state, const CohortDataset& cohort,
                       const JointModelSpec& spec, HazardDiagnostics* diag) {
  const CohortArrays arrays(cohort);
  const GaussLegendre rule(spec.quadrature_nodes);
  const std::size_t k = cohort.group_count();
  std::vector<double> log_scale(k);
  std::vector<double> alpha(k);
  for (std::size_t g = 0; g < k; ++g) {
    log_scale[g] = state.survival.linear_predictor(g);
    alpha[g] = state.association.for_group(g);
  }
  std::vector<double> roots;
  fill_root_nodes(rule, state.survival.shape, roots);
  SurvivalKernelParams params{state.survival.shape, std::log(state.survival.shape),
                              state.association.functional, log_scale, alpha, roots,
                              rule.graded_weights};

  const std::size_t n = cohort.size();
  std::vector<double> intercept(n);
  std::vector<double> slope(n);
  for (std::size_t i = 0; i < n; ++i) {
    intercept[i] = state.longitudinal.intercept(arrays.group[i]) + state.longitudinal.b0[i];
    slope[i] = state.longitudinal.beta1 + state.longitudinal.b1[i];
  }
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  std::vector<double> terms(n);
  std::vector<std::uint8_t> caps(n);
  survival_terms_parallel(params, arrays, all, intercept, slope, terms, caps);
  if (diag) {
    for (auto c : caps) diag->cap_events += c;
  }
  const double total = ordered_sum(terms);
  if (std::isnan(total)) throw NumericalError("survival log-likelihood is not a number");
  return total;
}

double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

double log_prior(const ParameterState& state, const JointModelSpec& spec) {
  const auto& pr = spec.priors;
  const auto& l = state.longitudinal;
  double lp = 0.0;

  const double intercept_width = pr.intercept_upper - pr.intercept_lower;
  if (spec.group_intercepts) {
    for (double b : l.group_intercepts) {
      if (!in_open(b, pr.intercept_lower, pr.intercept_upper)) return kNegInf;
      lp -= std::log(intercept_width);
    }
  } else {
    if (!in_open(l.beta0, pr.intercept_lower, pr.intercept_upper)) return kNegInf;
    lp -= std::log(intercept_width);
  }
  if (!in_open(l.beta1, spec.slope_lower(), spec.slope_upper())) return kNegInf;
  lp -= std::log(spec.slope_upper() - spec.slope_lower());
  if (!in_open(l.sigma, 0.0, pr.sigma_upper)) return kNegInf;
  lp -= std::log(pr.sigma_upper);
  if (!in_open(l.omega0, 0.0, pr.sd_upper)) return kNegInf;
  lp -= std::log(pr.sd_upper);
  for (double b : l.b0) lp += normal_logpdf(b, 0.0, l.omega0);
  if (spec.random_slope) {
    if (!in_open(l.omega1, 0.0, pr.sd_upper)) return kNegInf;
    lp -= std::log(pr.sd_upper);
    for (double b : l.b1) lp += normal_logpdf(b, 0.0, l.omega1);
  } else {
    for (double b : l.b1) {
      if (b != 0.0) return kNegInf;
    }
  }

  const double kappa = state.survival.shape;
  if (!(kappa > 0.0) || !std::isfinite(kappa)) return kNegInf;
  lp += std::log(pr.shape_rate) - pr.shape_rate * kappa;
  for (double phi : state.survival.phi) lp += normal_logpdf(phi, 0.0, pr.coefficient_sd);

  const auto& a = state.association;
  switch (a.structure) {
    case AssociationStructure::common:
      if (spec.association_fixed_zero) {
        if (a.alpha != 0.0) return kNegInf;
      } else {
        lp += normal_logpdf(a.alpha, 0.0, pr.coefficient_sd);
      }
      break;
    case AssociationStructure::exchangeable:
      if (!(a.tau > 0.0) || !std::isfinite(a.tau)) return kNegInf;
      lp += normal_logpdf(a.alpha, 0.0, pr.coefficient_sd);
      lp += std::log(2.0) + normal_logpdf(a.tau, 0.0, pr.tau_sd);
      for (double ak : a.alpha_k) lp += normal_logpdf(ak, a.alpha, a.tau);
      break;
    case AssociationStructure::independent:
      for (double ak : a.alpha_k) lp += normal_logpdf(ak, 0.0, pr.coefficient_sd);
      break;
  }
  if (std::isnan(lp)) return kNegInf;
  return lp;
}

double log_posterior(const ParameterState& state, const CohortDataset& cohort,
                     const JointModelSpec& spec, HazardDiagnostics* diag) {
  const double prior = log_prior(state, spec);
  if (prior == kNegInf) return kNegInf;
  return longitudinal_loglik(state.longitudinal, cohort) +
         survival_loglik(state, cohort, spec, diag) + prior;
}

double association_hr(double alpha, double delta) { return std::exp(alpha * delta); }

}  // namespace jmsurv
