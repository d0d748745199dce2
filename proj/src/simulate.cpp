#include "jmsurv/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "jmsurv/error.hpp"
#include "jmsurv/extrapolate.hpp"
#include "jmsurv/rng.hpp"

namespace jmsurv {

namespace {

const std::vector<std::string> kGroups{"soft_tissue_sarcoma", "thyroid", "salivary_gland", "lung",
                                       "other"};
const std::vector<double> kTrialMix{65.0, 30.0, 25.0, 23.0, 53.0};

std::string patient_label(std::size_t i, std::size_t n) {
  const int width = static_cast<int>(std::to_string(n).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%0*zu", width, i + 1);
  return buf;
}

ParameterState base_truth(double beta0, double beta1, double sigma, double omega0, double omega1,
                          double shape, std::vector<double> phi, double alpha) {
  ParameterState s;
  s.longitudinal.beta0 = beta0;
  s.longitudinal.beta1 = beta1;
  s.longitudinal.sigma = sigma;
  s.longitudinal.omega0 = omega0;
  s.longitudinal.omega1 = omega1;
  s.survival.shape = shape;
  s.survival.phi = std::move(phi);
  s.association.alpha = alpha;
  s.association.alpha_k.assign(s.survival.phi.size(), alpha);
  return s;
}

}  // namespace

std::vector<double> visit_times(const VisitSchedule& schedule, double end) {
  std::vector<double> out;
  const double step1 = schedule.first_year_interval_days / kDaysPerMonth;
  double t = 0.0;
  double last = 0.0;
  for (int k = 0; k * schedule.first_year_interval_days < 365.25; ++k) {
    t = k * step1;
    if (!(t < end)) return out;
    out.push_back(t);
    last = t;
  }
  for (t = last + schedule.later_interval_months; t < end; t += schedule.later_interval_months) {
    out.push_back(t);
  }
  return out;
}

void SimDesign::validate() const {
  if (n < 1) throw InputError("simulation: n must be >= 1");
  if (groups.empty() || groups.size() != proportions.size()) {
    throw InputError("simulation: one proportion per group is required");
  }
  double total = 0.0;
  for (double p : proportions) {
    if (p < 0.0) throw InputError("simulation: negative group proportion");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InputError("simulation: proportions must sum to 1");
  if (!(censor_lower > 0.0) || censor_upper < censor_lower) {
    throw InputError("simulation: censoring times must be positive");
  }
  if (truth.survival.phi.size() != groups.size()) {
    throw InputError("simulation: one phi per group is required");
  }
  if (truth.association.structure != AssociationStructure::common &&
      truth.association.alpha_k.size() != groups.size()) {
    throw InputError("simulation: one alpha per group is required");
  }
}

std::vector<std::size_t> SimDesign::group_sizes() const {
  const std::size_t k = proportions.size();
  std::vector<std::size_t> sizes(k);
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t used = 0;
  for (std::size_t g = 0; g < k; ++g) {
    const double exact = proportions[g] * static_cast<double>(n);
    sizes[g] = static_cast<std::size_t>(std::floor(exact));
    used += sizes[g];
    remainder.emplace_back(exact - std::floor(exact), g);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; used < n; ++j, ++used) ++sizes[remainder[j % k].second];
  return sizes;
}

SimulationResult simulate_cohort(const SimDesign& design) {
  design.validate();
  const auto sizes = design.group_sizes();
  const auto& truth = design.truth;
  const GaussLegendre rule(15);

  std::vector<SurvivalRecord> surv;
  std::vector<LongitudinalRecord> longi;
  std::vector<std::uint8_t> truncated;
  SimulationResult result;
  result.truth = truth;
  auto& l = result.truth.longitudinal;
  l.b0.clear();
  l.b1.clear();

  std::size_t i = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    for (std::size_t c = 0; c < sizes[g]; ++c, ++i) {
      CounterRng rng(design.seed, 1, i);
      std::normal_distribution<double> normal;
      const double b0 = truth.longitudinal.omega0 * normal(rng);
      const double b1 = design.random_slope ? truth.longitudinal.omega1 * normal(rng) : 0.0;
      l.b0.push_back(b0);
      l.b1.push_back(b1);

      PatientHazard h;
      h.shape = truth.survival.shape;
      h.log_scale = truth.survival.linear_predictor(g);
      h.alpha = truth.association.for_group(g);
      h.intercept = truth.longitudinal.intercept(g) + b0;
      h.slope = truth.longitudinal.beta1 + b1;
      h.functional = truth.association.functional;
      const DeathDraw death = conditional_death_draw(h, 0.0, uniform_open01(rng), design.horizon,
                                                     rule);
      const double censor = design.censor_lower +
                            (design.censor_upper - design.censor_lower) * uniform_open01(rng);

      SurvivalRecord s;
      s.patient_id = patient_label(i, design.n);
      s.tumour_group = design.groups[g];
      s.event = !death.capped && death.time <= censor;
      s.os_time = s.event ? death.time : censor;
      surv.push_back(s);

      for (double t : visit_times(design.schedule, s.os_time)) {
        double y = h.intercept + h.slope * t + truth.longitudinal.sigma * normal(rng);
        const bool floored = y < 0.0;
        if (floored) y = 0.0;
        truncated.push_back(floored ? 1 : 0);
        result.truncated_observations += floored ? 1 : 0;
        longi.push_back({s.patient_id, t, y});
      }
    }
  }
  result.cohort = join_cohort(longi, surv, design.groups);
  result.truncated = std::move(truncated);
  return result;
}

JointModelSpec spec_for(const SimDesign& design) {
  JointModelSpec spec;
  spec.structure = design.fit_structure;
  spec.functional = design.truth.association.functional;
  spec.random_slope = design.random_slope;
  spec.groups = design.groups;
  return spec;
}

std::vector<SimDesign> scenario_catalog() {
  std::vector<double> mix(kTrialMix);
  const double total = std::accumulate(mix.begin(), mix.end(), 0.0);
  for (auto& m : mix) m /= total;
  const std::vector<double> contrasts{0.0, -0.1, -0.2, 0.5, 0.7};

  std::vector<SimDesign> out;

  SimDesign s1;
  s1.name = "S1";
  s1.n = 200;
  s1.groups = kGroups;
  s1.proportions = mix;
  s1.truth = base_truth(45.0, 0.25, 4.0, 12.0, 0.15, 1.2, contrasts, 0.0);
  s1.truth.survival.phi[0] = -5.26;
  s1.seed = 101;
  out.push_back(s1);

  SimDesign s2 = s1;
  s2.name = "S2";
  s2.n = 196;
  s2.truth = base_truth(45.0, 0.25, 4.0, 12.0, 0.15, 1.2, contrasts, std::log(1.09) / 10.0);
  s2.truth.survival.phi[0] = -5.8;
  s2.seed = 202;
  out.push_back(s2);

  SimDesign s3 = s1;
  s3.name = "S3";
  s3.n = 2000;
  s3.proportions.assign(kGroups.size(), 1.0 / static_cast<double>(kGroups.size()));
  s3.truth = base_truth(50.0, 0.5, 4.0, 18.0, 1.0, 1.2, contrasts, 0.009);
  s3.truth.survival.phi[0] = -5.0;
  s3.truth.association.structure = AssociationStructure::exchangeable;
  s3.truth.association.alpha_k = {0.004, 0.0065, 0.009, 0.0115, 0.014};
  s3.truth.association.tau = 0.004;
  s3.fit_structure = AssociationStructure::exchangeable;
  s3.seed = 303;
  out.push_back(s3);

  SimDesign s4 = s2;
  s4.name = "S4";
  s4.n = 5;
  s4.proportions.assign(kGroups.size(), 0.2);
  s4.seed = 404;
  out.push_back(s4);
  return out;
}

SimDesign scenario(const std::string& name) {
  for (auto& d : scenario_catalog()) {
    if (d.name == name) return d;
  }
  throw InputError("unknown scenario '" + name + "' (expected S1, S2, S3 or S4)");
}

}  // namespace jmsurv
