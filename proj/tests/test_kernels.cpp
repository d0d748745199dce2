#include <omp.h>

#include <cstring>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "jmsurv/kernels.hpp"
#include "jmsurv/model.hpp"

using namespace jmsurv;

namespace {

struct KernelSetup {
  SimulationResult sim;
  JointModelSpec spec;
  ParameterState state;
  GaussLegendre rule{15};
  std::vector<double> log_scale;
  std::vector<double> alpha;
  std::vector<double> roots;
  std::vector<double> intercept;
  std::vector<double> slope;
  std::vector<std::size_t> all;

  KernelSetup(std::size_t n, AssociationStructure s, AssociationFunctional f)
      : sim(fixtures::small_cohort(n, 31)),
        spec(fixtures::spec_for_groups(sim.cohort, s, f)) {
    std::mt19937_64 rng(8);
    state = fixtures::random_state(spec, sim.cohort, rng);
    for (std::size_t g = 0; g < sim.cohort.group_count(); ++g) {
      log_scale.push_back(state.survival.linear_predictor(g));
      alpha.push_back(state.association.for_group(g));
    }
    fill_root_nodes(rule, state.survival.shape, roots);
    for (std::size_t i = 0; i < sim.cohort.size(); ++i) {
      intercept.push_back(state.longitudinal.intercept(sim.cohort.patients[i].group) +
                          state.longitudinal.b0[i]);
      slope.push_back(trajectory_slope(state.longitudinal, i));
      all.push_back(i);
    }
  }

  SurvivalKernelParams params() const {
    return {state.survival.shape, std::log(state.survival.shape), spec.functional, log_scale,
            alpha, roots, rule.graded_weights};
  }
};

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("parallel survival kernel is bitwise identical to the serial reference") {
  omp_set_num_threads(4);
  for (auto f : {AssociationFunctional::current_value, AssociationFunctional::slope}) {
    KernelSetup k(600, AssociationStructure::independent, f);
    const CohortArrays arrays(k.sim.cohort);
    std::vector<double> serial(k.all.size()), parallel(k.all.size());
    std::vector<std::uint8_t> caps_s(k.all.size()), caps_p(k.all.size());
    survival_terms_serial(k.params(), arrays, k.all, k.intercept, k.slope, serial, caps_s);
    survival_terms_parallel(k.params(), arrays, k.all, k.intercept, k.slope, parallel, caps_p);
    CHECK(bitwise_equal(serial, parallel));
    CHECK(caps_s == caps_p);
    CHECK(ordered_sum(serial) == ordered_sum(parallel));
  }
}

TEST_CASE("parallel residual kernel is bitwise identical to the serial reference") {
  omp_set_num_threads(4);
  KernelSetup k(600, AssociationStructure::common, AssociationFunctional::current_value);
  const CohortArrays arrays(k.sim.cohort);
  std::vector<double> serial(k.all.size()), parallel(k.all.size());
  residual_ss_serial(arrays, k.all, k.intercept, k.slope, serial);
  residual_ss_parallel(arrays, k.all, k.intercept, k.slope, parallel);
  CHECK(bitwise_equal(serial, parallel));
}

TEST_CASE("survival kernel agrees with the model-level hazard functions") {
  for (auto f : {AssociationFunctional::current_value, AssociationFunctional::slope}) {
    KernelSetup k(40, AssociationStructure::exchangeable, f);
    const CohortArrays arrays(k.sim.cohort);
    for (std::size_t i = 0; i < k.sim.cohort.size(); ++i) {
      std::uint8_t cap = 0;
      const double term = survival_term(k.params(), arrays.os_time[i], arrays.log_os_time[i],
                                        arrays.event[i] != 0, arrays.group[i], k.intercept[i],
                                        k.slope[i], cap);
      const double t = k.sim.cohort.patients[i].survival.os_time;
      const double h = cumulative_hazard(k.state, k.sim.cohort, i, t, k.rule);
      const double expected =
          (arrays.event[i] ? std::log(joint_hazard(k.state, k.sim.cohort, i, t)) : 0.0) - h;
      CHECK(term == doctest::Approx(expected).epsilon(1e-12));
      CHECK(cap == 0);
    }
  }
}

TEST_CASE("residual kernel matches a direct sum") {
  KernelSetup k(10, AssociationStructure::common, AssociationFunctional::current_value);
  const CohortArrays arrays(k.sim.cohort);
  for (std::size_t i = 0; i < k.sim.cohort.size(); ++i) {
    double rss = 0;
    for (const auto& v : k.sim.cohort.patients[i].visits) {
      const double r = v.sld - (k.intercept[i] + k.slope[i] * v.time);
      rss += r * r;
    }
    CHECK(residual_ss(arrays, i, k.intercept[i], k.slope[i]) == doctest::Approx(rss));
  }
}

TEST_CASE("cohort arrays flatten the cohort") {
  const auto sim = fixtures::small_cohort(30, 4);
  const CohortArrays arrays(sim.cohort);
  CHECK(arrays.size() == 30);
  CHECK(arrays.obs_offset.back() == sim.cohort.observation_count());
  std::size_t members = 0;
  for (const auto& g : arrays.group_members) members += g.size();
  CHECK(members == 30);
  const std::vector<double> terms{1e16, 1.0, -1e16};
  CHECK(ordered_sum(terms) == (1e16 + 1.0) - 1e16);
}
