// Acceptance criteria. Each prints one PASS/FAIL line with the measured
// quantities; the exit status is non-zero if any criterion fails.
// Usage: acceptance [criterion numbers...]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "jmsurv/data.hpp"
#include "jmsurv/diagnostics.hpp"
#include "jmsurv/extrapolate.hpp"
#include "jmsurv/io.hpp"
#include "jmsurv/model.hpp"
#include "jmsurv/rng.hpp"
#include "jmsurv/sampler.hpp"
#include "jmsurv/simulate.hpp"
#include "jmsurv/weibull.hpp"
#include "schema_check.hpp"
#include "test_util.hpp"

using namespace jmsurv;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << x;
  return os.str();
}

McmcConfig smoke_times(std::size_t factor, std::size_t thin, std::uint64_t seed) {
  auto c = McmcConfig::smoke();
  c.burn_in *= factor;
  c.iterations *= factor;
  c.thin = thin;
  c.base_seed = seed;
  return c;
}

std::vector<double> pooled(const PosteriorSamples& s, const std::string& name) {
  std::vector<double> out;
  for (const auto& c : s.series(name)) out.insert(out.end(), c.begin(), c.end());
  return out;
}

bool covers(const PosteriorSamples& s, const std::string& name, double truth) {
  const auto v = pooled(s, name);
  return quantile(v, 0.025) <= truth && truth <= quantile(v, 0.975);
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 1. Closed-form cumulative hazard for kappa = 1 and a linear trajectory.
Outcome quadrature_oracle() {
  const auto start = std::chrono::steady_clock::now();
  PatientHazard h;
  h.shape = 1.0;
  h.log_scale = -5.8;
  h.alpha = std::log(1.09) / 10;
  h.intercept = 45.0;
  h.slope = 0.25;
  const GaussLegendre rule(15);
  double worst = 0;
  for (double t : {1.0, 6.0, 12.0, 60.0, 600.0}) {
    const double exact = std::exp(h.log_scale) * std::exp(h.alpha * h.intercept) *
                         std::expm1(h.alpha * h.slope * t) / (h.alpha * h.slope);
    worst = std::max(worst, std::abs(h.cumulative(0, t, rule) - exact) / exact);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst < 1e-8 && secs < 1.0,
          "max rel err " + fmt(worst) + " (< 1e-8), " + fmt(secs) + " s (< 1 s)"};
}

// 2. Null association: alpha CrI covers 0 and 5-year RMST matches the Weibull comparator.
Outcome null_factorisation() {
  const auto design = scenario("S1");
  const auto sim = simulate_cohort(design);
  const auto spec = spec_for(design);
  const auto samples = run_chains(spec, sim.cohort, smoke_times(5, 10, 1101));
  const auto a = pooled(samples, "alpha");
  const double lo = quantile(a, 0.025);
  const double hi = quantile(a, 0.975);

  ExtrapolationOptions opt;
  opt.bootstrap = 0;
  opt.seed = 1102;
  const auto joint = extrapolate_joint(samples, sim.cohort, opt);
  const auto fit = fit_weibull_mle(survival_records(sim.cohort), sim.cohort.groups);
  const auto weibull = weibull_extrapolation(fit, sim.cohort, opt);
  const double rj = joint.summaries[0].rmst_short.point;
  const double rw = weibull.summaries[0].rmst_short.point;
  const bool ok = lo <= 0.0 && 0.0 <= hi && std::abs(rj - rw) < 0.15;
  return {ok, "alpha 95% CrI [" + fmt(lo) + ", " + fmt(hi) + "]; RMST 5y joint " + fmt(rj) +
                  " vs Weibull " + fmt(rw) + " (|diff| " + fmt(std::abs(rj - rw)) + " < 0.15 y)"};
}

// 3. Coverage of the 95% CrI over 20 simulated S2 replicates.
Outcome parameter_recovery() {
  const std::vector<std::string> names{"beta0", "beta1", "sigma", "kappa", "alpha"};
  std::map<std::string, int> hits;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    auto design = scenario("S2");
    design.seed = derive_seed(design.seed, static_cast<std::uint64_t>(r));
    const auto sim = simulate_cohort(design);
    const auto samples =
        run_chains(spec_for(design), sim.cohort, smoke_times(5, 10, 3000 + static_cast<std::uint64_t>(r)));
    const auto& t = design.truth;
    const std::map<std::string, double> truth{{"beta0", t.longitudinal.beta0},
                                              {"beta1", t.longitudinal.beta1},
                                              {"sigma", t.longitudinal.sigma},
                                              {"kappa", t.survival.shape},
                                              {"alpha", t.association.alpha}};
    for (const auto& n : names) hits[n] += covers(samples, n, truth.at(n)) ? 1 : 0;
  }
  bool ok = true;
  std::string detail;
  for (const auto& n : names) {
    ok = ok && hits[n] >= 16;
    detail += n + " " + std::to_string(hits[n]) + "/20  ";
  }
  return {ok, detail + "(each >= 16/20)"};
}

// 4. DIC prefers a heterogeneous association structure on S3.
Outcome dic_ordering() {
  int wins = 0;
  std::string detail;
  for (int r = 0; r < 5; ++r) {
    auto design = scenario("S3");
    design.seed = derive_seed(design.seed, static_cast<std::uint64_t>(r));
    const auto sim = simulate_cohort(design);
    std::map<AssociationStructure, double> dics;
    for (auto s : {AssociationStructure::common, AssociationStructure::exchangeable,
                   AssociationStructure::independent}) {
      auto spec = spec_for(design);
      spec.structure = s;
      const auto samples =
          run_chains(spec, sim.cohort, smoke_times(1, 1, 4000 + static_cast<std::uint64_t>(r)));
      dics[s] = dic(samples, sim.cohort).dic;
    }
    const double het = std::min(dics[AssociationStructure::exchangeable],
                                dics[AssociationStructure::independent]);
    const bool win = het < dics[AssociationStructure::common];
    wins += win ? 1 : 0;
    detail += "[common " + fmt(dics[AssociationStructure::common], 7) + ", exch " +
              fmt(dics[AssociationStructure::exchangeable], 7) + ", indep " +
              fmt(dics[AssociationStructure::independent], 7) + "] ";
  }
  return {wins >= 4, std::to_string(wins) + "/5 replicates favour a heterogeneous model (>= 4) " +
                         detail};
}

// 5. R-hat and MCSE on iid Normal chains, and R-hat on separated chains.
Outcome diagnostics_calibration() {
  std::mt19937_64 rng(55);
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> iid(4, std::vector<double>(2500));
  for (auto& c : iid) {
    for (auto& x : c) x = 3.0 + 2.0 * z(rng);
  }
  std::vector<std::vector<double>> apart(2, std::vector<double>(5000));
  for (std::size_t c = 0; c < 2; ++c) {
    for (auto& x : apart[c]) x = 10.0 * static_cast<double>(c) + z(rng);
  }
  const double r_iid = split_rhat(iid).value;
  const double ratio = batch_means_mcse(iid).ratio;
  const double r_apart = split_rhat(apart).value;
  const double expected = 1.0 / std::sqrt(10000.0);
  const bool ok = r_iid < 1.01 && std::abs(ratio - expected) <= 0.5 * expected && r_apart > 3.0;
  return {ok, "iid R-hat " + fmt(r_iid) + " (< 1.01), MCSE/SD " + fmt(ratio) + " (0.01 +/- 50%), " +
                  "separated R-hat " + fmt(r_apart) + " (> 3)"};
}

// 6. Kaplan-Meier and observed RMST on the five-patient example.
Outcome km_oracle() {
  using fixtures::surv;
  const auto km = kaplan_meier({surv("A", 1, false), surv("B", 2, true), surv("C", 3, true),
                                surv("D", 4, false), surv("E", 5, true)});
  const bool steps = km.at(0) == 1.0 && km.at(1.99) == 1.0 && km.at(2) == 0.75 &&
                     km.at(2.99) == 0.75 && km.at(3) == 0.5 && km.at(4.99) == 0.5 && km.at(5) == 0.0;
  const double r = observed_rmst(km, 5.0).estimate;
  return {steps && r == 3.75, std::string("S breakpoints {1, 0.75, 0.5, 0} ") +
                                  (steps ? "exact" : "wrong") + ", RMST(5) = " + fmt(r, 17)};
}

// 7. Conditional draws past c follow the memoryless exponential law.
Outcome conditional_law() {
  const double lambda = 0.03;
  const double c = 18.0;
  PatientHazard h;
  h.shape = 1.0;
  h.log_scale = std::log(lambda);
  h.intercept = 40.0;
  h.slope = 0.3;
  const GaussLegendre rule(15);
  CounterRng rng(707, 0, 0);
  std::vector<double> times;
  for (int i = 0; i < 100000; ++i) {
    times.push_back(conditional_death_draw(h, c, uniform_open01(rng), kLifespanMonths, rule).time);
  }
  const double ks = fixtures::ks_statistic(
      times, [&](double t) { return t <= c ? 0.0 : 1.0 - std::exp(-lambda * (t - c)); });
  return {ks < 0.01, "KS " + fmt(ks) + " over 1e5 draws (< 0.01)"};
}

// 8. Central differences at h and h/2 agree at 10 random in-support states.
Outcome gradient_integrity() {
  const auto sim = fixtures::small_cohort(60, 808);
  std::mt19937_64 rng(809);
  const AssociationStructure structures[] = {AssociationStructure::common,
                                             AssociationStructure::exchangeable,
                                             AssociationStructure::independent};
  double worst = 0;
  std::string where;
  bool finite = true;
  for (int k = 0; k < 10; ++k) {
    const auto functional =
        k % 2 == 0 ? AssociationFunctional::current_value : AssociationFunctional::slope;
    const auto spec = fixtures::spec_for_groups(sim.cohort, structures[k % 3], functional);
    const auto state = fixtures::random_state(spec, sim.cohort, rng);
    const auto r = fixtures::richardson_check(state, sim.cohort, spec);
    finite = finite && r.finite;
    if (r.worst >= worst) {
      worst = r.worst;
      where = r.worst_name;
    }
  }
  return {finite && worst < 1e-4,
          "worst relative disagreement " + fmt(worst) + " at " + where + " (< 1e-4)"};
}

// 9. Two CLI fits of S4 with fixed seeds write identical posterior files.
Outcome determinism(const testutil::TempDir& dir) {
  const std::string cli = JMSURV_CLI;
  const auto data = dir / "s4";
  if (shell(cli + " simulate --scenario S4 --out " + data.string() + " >/dev/null") != 0) {
    return {false, "simulate failed"};
  }
  const auto cfg = (data / "config.json").string();
  for (const char* out : {"fit1", "fit2"}) {
    const auto cmd = cli + " fit --config " + cfg + " --preset smoke --seed 909 --out " +
                     (dir / out).string() + " >/dev/null";
    if (shell(cmd) != 0) return {false, std::string("fit into ") + out + " failed"};
  }
  const auto a = testutil::read_file(dir / "fit1" / "posterior.csv");
  const auto b = testutil::read_file(dir / "fit2" / "posterior.csv");
  return {!a.empty() && a == b,
          "posterior.csv " + std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different")};
}

// 10. The extrapolation summary has every scope and validates against the schema.
Outcome report_shape(const testutil::TempDir& dir) {
  const std::string cli = JMSURV_CLI;
  const auto data = dir / "s2";
  if (shell(cli + " simulate --scenario S2 --out " + data.string() + " >/dev/null") != 0) {
    return {false, "simulate failed"};
  }
  const auto cfg = (data / "config.json").string();
  const auto fit = dir / "s2fit";
  if (shell(cli + " fit --config " + cfg + " --preset smoke --out " + fit.string() + " >/dev/null") != 0) {
    return {false, "fit failed"};
  }
  if (shell(cli + " extrapolate --config " + cfg + " --posterior " + (fit / "posterior.csv").string() +
            " --out " + fit.string() + " >/dev/null") != 0) {
    return {false, "extrapolate failed"};
  }
  const auto doc = read_json(fit / "extrapolation_summary.json");
  const auto schema =
      read_json(std::filesystem::path(JMSURV_SCHEMA_DIR) / "extrapolation_summary.schema.json");
  const auto errors = schema::validate(doc, schema);
  std::string detail = std::to_string(errors.size()) + " schema violations";
  if (!errors.empty()) detail += " (first: " + errors.front() + ")";

  bool shape = true;
  std::set<std::string> scopes;
  for (const char* method : {"joint", "weibull"}) {
    const auto& list = doc.at(method);
    if (!list.is_array() || list.size() != 6) {
      shape = false;
      continue;
    }
    for (const auto& s : list) {
      scopes.insert(s.at("scope").get<std::string>());
      shape = shape && s.at("landmark_10y").is_object();
      for (const char* key : {"rmst_lifespan", "rmst_5y", "landmark_10y"}) {
        const auto& iv = s.at(key);
        shape = shape && iv.at("lo95").is_number() && iv.at("hi95").is_number() &&
                iv.at("lo95").get<double>() <= iv.at("point").get<double>() &&
                iv.at("point").get<double>() <= iv.at("hi95").get<double>();
      }
      const auto& m = s.at("median");
      shape = shape && (m.at("reached").get<bool>() ? m.at("point").is_number() : m.at("point").is_null());
    }
  }
  shape = shape && scopes.size() == 6 && scopes.count("overall") == 1;
  detail += "; scopes " + std::to_string(scopes.size()) + " (overall + 5 groups), intervals " +
            (shape ? "ordered" : "malformed");
  return {errors.empty() && shape, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  testutil::TempDir dir("acceptance");

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"quadrature oracle", quadrature_oracle},
      {"null-association factorisation (S1)", null_factorisation},
      {"parameter recovery (S2, 20 replicates)", parameter_recovery},
      {"DIC ordering (S3, 5 replicates)", dic_ordering},
      {"diagnostics calibration", diagnostics_calibration},
      {"Kaplan-Meier and observed RMST hand example", km_oracle},
      {"conditional-draw law", conditional_law},
      {"finite-difference integrity", gradient_integrity},
      {"determinism (S4 via CLI)", [&] { return determinism(dir); }},
      {"extrapolation report shape", [&] { return report_shape(dir); }},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int number = static_cast<int>(k) + 1;
    if (!only.empty() && only.count(number) == 0) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << number << "] " << criteria[k].first << ": "
              << o.detail << " (" << fmt(secs, 3) << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
