// Serial vs OpenMP per-patient likelihood kernels on simulated cohorts.
#include <benchmark/benchmark.h>

#include <cmath>
#include <numeric>

#include "jmsurv/kernels.hpp"
#include "jmsurv/simulate.hpp"

namespace {

using namespace jmsurv;

struct Fixture {
  explicit Fixture(std::size_t n) : sim(make(n)), arrays(sim.cohort), rule(15) {
    const auto& t = sim.truth;
    for (std::size_t g = 0; g < sim.cohort.group_count(); ++g) {
      log_scale.push_back(t.survival.linear_predictor(g));
      alpha.push_back(t.association.for_group(g));
    }
    fill_root_nodes(rule, t.survival.shape, roots);
    for (std::size_t i = 0; i < sim.cohort.size(); ++i) {
      intercept.push_back(t.longitudinal.beta0 + t.longitudinal.b0[i]);
      slope.push_back(t.longitudinal.beta1 + t.longitudinal.b1[i]);
    }
    patients.resize(sim.cohort.size());
    std::iota(patients.begin(), patients.end(), 0);
    out.resize(patients.size());
    caps.resize(patients.size());
  }

  static SimulationResult make(std::size_t n) {
    SimDesign d = scenario("S2");
    d.n = n;
    return simulate_cohort(d);
  }

  SurvivalKernelParams params() const {
    return {sim.truth.survival.shape, std::log(sim.truth.survival.shape),
            AssociationFunctional::current_value, log_scale, alpha, roots, rule.graded_weights};
  }

  SimulationResult sim;
  CohortArrays arrays;
  GaussLegendre rule;
  std::vector<double> log_scale, alpha, roots, intercept, slope, out;
  std::vector<std::size_t> patients;
  std::vector<std::uint8_t> caps;
};

void BM_SurvivalSerial(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  const auto p = f.params();
  for (auto _ : state) {
    survival_terms_serial(p, f.arrays, f.patients, f.intercept, f.slope, f.out, f.caps);
    benchmark::DoNotOptimize(f.out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SurvivalParallel(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  const auto p = f.params();
  for (auto _ : state) {
    survival_terms_parallel(p, f.arrays, f.patients, f.intercept, f.slope, f.out, f.caps);
    benchmark::DoNotOptimize(f.out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ResidualSerial(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    residual_ss_serial(f.arrays, f.patients, f.intercept, f.slope, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ResidualParallel(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    residual_ss_parallel(f.arrays, f.patients, f.intercept, f.slope, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_SurvivalSerial)->Arg(196)->Arg(2000)->Arg(20000);
BENCHMARK(BM_SurvivalParallel)->Arg(196)->Arg(2000)->Arg(20000);
BENCHMARK(BM_ResidualSerial)->Arg(196)->Arg(2000)->Arg(20000);
BENCHMARK(BM_ResidualParallel)->Arg(196)->Arg(2000)->Arg(20000);

BENCHMARK_MAIN();
