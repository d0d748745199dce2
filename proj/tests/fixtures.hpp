#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "jmsurv/data.hpp"
#include "jmsurv/layout.hpp"
#include "jmsurv/model.hpp"
#include "jmsurv/simulate.hpp"

namespace fixtures {

inline jmsurv::SurvivalRecord surv(const std::string& id, double t, bool event,
                                   const std::string& group = "a") {
  jmsurv::SurvivalRecord r;
  r.patient_id = id;
  r.os_time = t;
  r.event = event;
  r.tumour_group = group;
  return r;
}

/// Small simulated cohort drawn from the S2 design.
inline jmsurv::SimulationResult small_cohort(std::size_t n, std::uint64_t seed) {
  auto design = jmsurv::scenario("S2");
  design.n = n;
  design.seed = seed;
  return jmsurv::simulate_cohort(design);
}

inline jmsurv::JointModelSpec spec_for_groups(const jmsurv::CohortDataset& cohort,
                                              jmsurv::AssociationStructure s,
                                              jmsurv::AssociationFunctional f) {
  jmsurv::JointModelSpec spec;
  spec.structure = s;
  spec.functional = f;
  spec.groups = cohort.groups;
  return spec;
}

/// A random state well inside prior support.
template <class Rng>
jmsurv::ParameterState random_state(const jmsurv::JointModelSpec& spec,
                                    const jmsurv::CohortDataset& cohort, Rng& rng) {
  using std::uniform_real_distribution;
  auto u = [&](double lo, double hi) { return uniform_real_distribution<double>(lo, hi)(rng); };
  std::normal_distribution<double> z;
  auto state = jmsurv::make_state(spec, cohort);
  auto& l = state.longitudinal;
  l.beta0 = u(15, 45);
  l.beta1 = u(0.1, 0.9);
  l.sigma = u(2, 8);
  l.omega0 = u(5, 15);
  l.omega1 = u(0.05, 0.4);
  for (auto& b : l.group_intercepts) b = u(15, 45);
  for (auto& b : l.b0) b = l.omega0 * z(rng);
  for (auto& b : l.b1) b = spec.random_slope ? l.omega1 * z(rng) : 0.0;
  state.survival.shape = u(0.7, 1.5);
  state.survival.phi[0] = u(-6.0, -4.5);
  for (std::size_t k = 1; k < state.survival.phi.size(); ++k) state.survival.phi[k] = 0.3 * z(rng);
  auto& a = state.association;
  a.alpha = spec.association_fixed_zero ? 0.0 : u(-0.02, 0.02);
  for (auto& ak : a.alpha_k) ak = a.alpha + 0.01 * z(rng);
  if (a.structure == jmsurv::AssociationStructure::common) {
    std::fill(a.alpha_k.begin(), a.alpha_k.end(), a.alpha);
  }
  if (a.structure == jmsurv::AssociationStructure::exchangeable) a.tau = u(0.005, 0.05);
  if (a.structure == jmsurv::AssociationStructure::independent) a.alpha = 0.0;
  return state;
}

struct RichardsonResult {
  double worst = 0.0;  // max |D(h) - D(h/2)| / max(|R|, 1) over coordinates
  std::string worst_name;
  bool finite = true;
};

/// Central differences of log_posterior at steps h and h/2 along every
/// coordinate of the flat layout, compared through the Richardson estimate.
inline RichardsonResult richardson_check(const jmsurv::ParameterState& state,
                                         const jmsurv::CohortDataset& cohort,
                                         const jmsurv::JointModelSpec& spec,
                                         double rel_step = 1e-4) {
  const jmsurv::ParameterLayout layout(spec, cohort);
  const auto x = layout.pack(state);
  auto f = [&](std::size_t j, double delta) {
    auto y = x;
    y[j] += delta;
    return jmsurv::log_posterior(layout.unpack(y), cohort, spec);
  };
  RichardsonResult out;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double h = rel_step * std::max(std::abs(x[j]), 1e-2);
    const double d1 = (f(j, h) - f(j, -h)) / (2 * h);
    const double d2 = (f(j, h / 2) - f(j, -h / 2)) / h;
    const double r = (4 * d2 - d1) / 3;
    if (!std::isfinite(d1) || !std::isfinite(d2)) {
      out.finite = false;
      out.worst_name = layout.names()[j];
      return out;
    }
    const double disagreement = std::abs(d1 - d2) / std::max(std::abs(r), 1.0);
    if (disagreement > out.worst) {
      out.worst = disagreement;
      out.worst_name = layout.names()[j];
    }
  }
  return out;
}

/// Two-sided KS statistic of a sample against a continuous CDF.
template <class Cdf>
double ks_statistic(std::vector<double> sample, Cdf cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

}  // namespace fixtures
