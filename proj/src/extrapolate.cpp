#include "jmsurv/extrapolate.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <cmath>
#include <numeric>
#include <random>

#include "jmsurv/diagnostics.hpp"
#include "jmsurv/error.hpp"
#include "jmsurv/layout.hpp"

namespace jmsurv {

namespace {

constexpr double kRootTolerance = 1e-6;  // months
constexpr std::size_t kMinSummaryDraws = 40;

// Solves f(t) = 0 on [lo, hi] where f(lo) < 0 <= f(hi).
template <class F>
double bracketed_root(F f, double lo, double hi, double flo, double fhi, double tolerance) {
  boost::uintmax_t max_iter = 200;
  auto done = [tolerance](double a, double b) { return std::abs(b - a) <= tolerance; };
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, done, max_iter);
  if (max_iter >= 200) throw NumericalError("root finder did not converge");
  return 0.5 * (a + b);
}

double interpolate(std::span<const double> grid, std::span<const double> values, double t) {
  if (t <= grid.front()) return values.front();
  const auto it = std::lower_bound(grid.begin(), grid.end(), t);
  const auto j = static_cast<std::size_t>(std::distance(grid.begin(), it));
  if (grid[j] == t) return values[j];
  const double w = (t - grid[j - 1]) / (grid[j] - grid[j - 1]);
  return values[j - 1] + w * (values[j] - values[j - 1]);
}

void check_grid(std::span<const double> grid, std::span<const double> survival) {
  if (grid.empty()) throw InputError("empty time grid");
  if (grid.size() != survival.size()) throw InputError("grid and curve sizes differ");
}

std::vector<std::size_t> scope_members(const CohortDataset& cohort,
                                       std::optional<std::size_t> group) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (!group || cohort.patients[i].group == *group) out.push_back(i);
  }
  return out;
}

Interval point_only(double value) { return Interval{value, std::nullopt, std::nullopt}; }

Interval with_percentiles(double point, const std::vector<double>& values) {
  if (values.empty()) return point_only(point);
  return Interval{point, quantile(values, 0.025), quantile(values, 0.975)};
}

}  // namespace

DeathDraw conditional_death_draw(const PatientHazard& hazard, double censor_time, double u,
                                 double horizon, const GaussLegendre& rule) {
  if (!(u > 0.0 && u < 1.0)) throw InputError("conditional draw: u must lie in (0, 1)");
  if (censor_time < 0.0 || !(horizon > censor_time)) {
    if (censor_time >= horizon) return {horizon, true};
    throw InputError("conditional draw: invalid censoring time");
  }
  const double target = -std::log(u);

  if (hazard.constant_link()) {
    const double link =
        hazard.functional == AssociationFunctional::slope ? hazard.slope : hazard.intercept;
    const double lp = std::min(hazard.log_scale + hazard.alpha * link, kLinearPredictorCap);
    const double rate = std::exp(lp);
    if (!(rate > 0.0)) return {horizon, true};
    const double start = std::pow(censor_time, hazard.shape);
    const double t = std::pow(start + target / rate, 1.0 / hazard.shape);
    if (!(t < horizon)) return {horizon, true};
    return {t, false};
  }

  const double at_horizon = hazard.cumulative(censor_time, horizon, rule);
  if (at_horizon < target) return {horizon, true};
  auto f = [&](double t) { return hazard.cumulative(censor_time, t, rule) - target; };
  const double t = bracketed_root(f, censor_time, horizon, -target, at_horizon - target,
                                  kRootTolerance);
  return {t, false};
}

DeathDraw conditional_death_draw(const ParameterState& state, const CohortDataset& cohort,
                                 std::size_t patient, double censor_time, CounterRng& rng,
                                 double horizon, const GaussLegendre& rule) {
  return conditional_death_draw(patient_hazard(state, cohort, patient), censor_time,
                                uniform_open01(rng), horizon, rule);
}

std::vector<PredictedSurvivalDraw> predict_cohort(const PosteriorSamples& samples,
                                                  const CohortDataset& cohort,
                                                  const PredictOptions& options) {
  if (samples.chains.empty()) throw InputError("posterior has no chains");
  if (options.draws_per_sample == 0) throw InputError("draws_per_sample must be > 0");
  const ParameterLayout layout(samples.spec, cohort);
  for (const auto& c : samples.chains) {
    if (c.width != layout.size()) {
      throw InputError("posterior draws do not match the cohort: expected " +
                       std::to_string(layout.size()) + " parameters including random effects, got " +
                       std::to_string(c.width));
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> rows;  // (chain, draw)
  for (std::size_t c = 0; c < samples.chains.size(); ++c) {
    for (std::size_t d = 0; d < samples.chains[c].size(); ++d) rows.emplace_back(c, d);
  }
  std::vector<std::size_t> selected(rows.size());
  std::iota(selected.begin(), selected.end(), 0);
  if (options.max_posterior_draws > 0 && rows.size() > options.max_posterior_draws) {
    selected.resize(options.max_posterior_draws);
    const double step =
        static_cast<double>(rows.size()) / static_cast<double>(options.max_posterior_draws);
    for (std::size_t s = 0; s < selected.size(); ++s) {
      selected[s] = static_cast<std::size_t>(std::floor(static_cast<double>(s) * step));
    }
  }

  const GaussLegendre rule(samples.spec.quadrature_nodes);
  const std::size_t per = options.draws_per_sample;
  std::vector<PredictedSurvivalDraw> out(selected.size() * per);
  std::vector<std::exception_ptr> errors(out.size());
  const auto total = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t o = 0; o < total; ++o) {
    const auto slot = static_cast<std::size_t>(o);
    try {
      const std::size_t global = selected[slot / per];
      const auto [chain, draw] = rows[global];
      const ParameterState state = layout.unpack(samples.chains[chain].row(draw));
      auto& pred = out[slot];
      pred.posterior_draw = global;
      pred.time.resize(cohort.size());
      pred.capped.assign(cohort.size(), 0);
      for (std::size_t i = 0; i < cohort.size(); ++i) {
        const auto& s = cohort.patients[i].survival;
        if (s.event) {
          pred.time[i] = s.os_time;
          continue;
        }
        CounterRng rng(options.seed, slot, i);
        const DeathDraw d =
            conditional_death_draw(state, cohort, i, s.os_time, rng, options.horizon, rule);
        pred.time[i] = d.time;
        pred.capped[i] = d.capped ? 1 : 0;
      }
    } catch (...) {
      errors[slot] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<double> default_grid(double horizon) {
  if (!(horizon > 0.0)) throw InputError("grid horizon must be > 0");
  std::vector<double> grid;
  for (double t = 0.0; t <= std::min(horizon, 120.0); t += 1.0) grid.push_back(t);
  for (double t = 123.0; t <= horizon; t += 3.0) grid.push_back(t);
  if (grid.back() < horizon) grid.push_back(horizon);
  return grid;
}

CurveGrid curve_from_draws(const std::vector<PredictedSurvivalDraw>& draws,
                           std::span<const double> grid, std::span<const std::size_t> patients) {
  if (draws.empty()) throw InputError("curve_from_draws: no draws");
  if (grid.empty()) throw InputError("curve_from_draws: empty grid");
  std::vector<std::size_t> members(patients.begin(), patients.end());
  if (members.empty()) {
    members.resize(draws.front().time.size());
    std::iota(members.begin(), members.end(), 0);
  }
  const auto n = static_cast<double>(members.size());

  CurveGrid curve;
  curve.time.assign(grid.begin(), grid.end());
  curve.draws.resize(draws.size());
  std::vector<double> times(members.size());
  for (std::size_t d = 0; d < draws.size(); ++d) {
    for (std::size_t k = 0; k < members.size(); ++k) {
      const std::size_t i = members[k];
      times[k] = draws[d].capped[i] ? std::numeric_limits<double>::infinity() : draws[d].time[i];
    }
    std::sort(times.begin(), times.end());
    auto& s = curve.draws[d];
    s.resize(grid.size());
    std::size_t dead = 0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
      while (dead < times.size() && times[dead] <= grid[j]) ++dead;
      s[j] = (n - static_cast<double>(dead)) / n;
    }
  }

  curve.mean.resize(grid.size());
  curve.lo95.resize(grid.size());
  curve.hi95.resize(grid.size());
  std::vector<double> column(draws.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    for (std::size_t d = 0; d < draws.size(); ++d) column[d] = curve.draws[d][j];
    curve.mean[j] = std::accumulate(column.begin(), column.end(), 0.0) /
                    static_cast<double>(column.size());
    curve.lo95[j] = quantile(column, 0.025);
    curve.hi95[j] = quantile(column, 0.975);
  }
  return curve;
}

double rmst(std::span<const double> grid, std::span<const double> survival, double horizon) {
  check_grid(grid, survival);
  if (horizon < 0.0) throw InputError("rmst: negative horizon");
  if (horizon > grid.back() * (1.0 + 1e-12)) throw InputError("rmst: horizon exceeds the grid");
  double area = 0.0;
  for (std::size_t j = 1; j < grid.size() && grid[j - 1] < horizon; ++j) {
    const double right = std::min(grid[j], horizon);
    const double s_right = grid[j] <= horizon ? survival[j] : interpolate(grid, survival, right);
    area += 0.5 * (survival[j - 1] + s_right) * (right - grid[j - 1]);
  }
  return months_to_years(area);
}

MedianResult median_survival(std::span<const double> grid, std::span<const double> survival) {
  check_grid(grid, survival);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (survival[j] > 0.5) continue;
    if (j == 0) return {months_to_years(grid[0]), true};
    const double w = (survival[j - 1] - 0.5) / (survival[j - 1] - survival[j]);
    return {months_to_years(grid[j - 1] + w * (grid[j] - grid[j - 1])), true};
  }
  return {months_to_years(grid.back()), false};
}

double landmark(std::span<const double> grid, std::span<const double> survival, double t) {
  check_grid(grid, survival);
  if (t < 0.0 || t > grid.back()) throw InputError("landmark time outside the grid");
  return 100.0 * interpolate(grid, survival, t);
}

Interval summarize(std::span<const double> values) {
  if (values.size() < kMinSummaryDraws) {
    throw NumericalError("summarize needs at least " + std::to_string(kMinSummaryDraws) +
                         " draws, got " + std::to_string(values.size()));
  }
  std::vector<double> v(values.begin(), values.end());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  return Interval{mean, quantile(v, 0.025), quantile(v, 0.975)};
}

ExtrapolationResult extrapolate_joint(const PosteriorSamples& samples, const CohortDataset& cohort,
                                      const ExtrapolationOptions& options) {
  PredictOptions po;
  po.horizon = options.horizon;
  po.draws_per_sample = options.draws_per_sample;
  po.max_posterior_draws = options.max_posterior_draws;
  po.seed = options.seed;
  const auto draws = predict_cohort(samples, cohort, po);
  if (draws.size() < kMinSummaryDraws) {
    throw NumericalError("extrapolation needs at least " + std::to_string(kMinSummaryDraws) +
                         " predictive draws, got " + std::to_string(draws.size()));
  }
  const auto grid = default_grid(options.horizon);

  ExtrapolationResult result;
  for (std::size_t s = 0; s <= cohort.group_count(); ++s) {
    const std::optional<std::size_t> group =
        s == 0 ? std::nullopt : std::optional<std::size_t>(s - 1);
    const auto members = scope_members(cohort, group);
    ExtrapolationSummary summary;
    summary.scope = group ? cohort.groups[*group] : "overall";
    summary.method = "joint";
    summary.patients = members.size();
    summary.lifespan_months = options.horizon;
    summary.short_horizon_months = options.short_horizon;
    summary.draws = draws.size();
    if (members.empty()) {
      result.summaries.push_back(summary);
      continue;
    }

    CurveGrid curve = curve_from_draws(draws, grid, members);
    curve.scope = summary.scope;
    std::vector<double> life, short_rmst, median;
    std::vector<std::vector<double>> marks(options.landmarks.size());
    std::size_t not_reached = 0;
    for (const auto& s_draw : curve.draws) {
      life.push_back(rmst(grid, s_draw, options.horizon));
      short_rmst.push_back(rmst(grid, s_draw, options.short_horizon));
      const auto m = median_survival(grid, s_draw);
      median.push_back(m.years);
      if (!m.reached) ++not_reached;
      for (std::size_t l = 0; l < options.landmarks.size(); ++l) {
        marks[l].push_back(landmark(grid, s_draw, options.landmarks[l]));
      }
    }
    summary.rmst_lifespan = summarize(life);
    summary.rmst_short = summarize(short_rmst);
    summary.median = summarize(median);
    summary.median_reached = median_survival(grid, curve.mean).reached;
    summary.median_not_reached_fraction =
        static_cast<double>(not_reached) / static_cast<double>(curve.draws.size());
    for (std::size_t l = 0; l < options.landmarks.size(); ++l) {
      summary.landmarks.push_back({options.landmarks[l], summarize(marks[l])});
    }
    std::size_t capped = 0;
    for (const auto& d : draws) {
      for (auto i : members) capped += d.capped[i];
    }
    summary.cap_fraction = static_cast<double>(capped) /
                           static_cast<double>(members.size() * draws.size());
    summary.cap_warning = summary.cap_fraction > 0.01;
    result.summaries.push_back(summary);
    curve.draws.clear();
    result.curves.push_back(std::move(curve));
  }
  return result;
}

double weibull_rmst_months(double shape, double log_scale, double horizon) {
  if (!(shape > 0.0)) throw InputError("weibull rmst: shape must be > 0");
  if (horizon <= 0.0) return 0.0;
  const double x = std::exp(log_scale + shape * std::log(horizon));
  const double a = 1.0 / shape;
  return std::exp(-a * log_scale) * boost::math::tgamma(1.0 + a) * boost::math::gamma_p(a, x);
}

namespace {

struct WeibullScopeStats {
  double life = 0.0;
  double short_rmst = 0.0;
  double median = 0.0;
  bool reached = true;
  std::vector<double> landmarks;
  std::vector<double> curve;
};

// Mixture of group survival curves with the given weights.
WeibullScopeStats weibull_scope_stats(double shape, const std::vector<double>& log_scale,
                                      const std::vector<double>& weights,
                                      const ExtrapolationOptions& options,
                                      std::span<const double> grid, bool with_curve) {
  auto surv = [&](double t) {
    double s = 0.0;
    for (std::size_t g = 0; g < weights.size(); ++g) {
      if (weights[g] == 0.0) continue;
      s += weights[g] * std::exp(-std::exp(log_scale[g] + shape * std::log(t)));
    }
    return t <= 0.0 ? 1.0 : s;
  };
  WeibullScopeStats st;
  for (std::size_t g = 0; g < weights.size(); ++g) {
    if (weights[g] == 0.0) continue;
    st.life += weights[g] * weibull_rmst_months(shape, log_scale[g], options.horizon);
    st.short_rmst += weights[g] * weibull_rmst_months(shape, log_scale[g], options.short_horizon);
  }
  st.life = months_to_years(st.life);
  st.short_rmst = months_to_years(st.short_rmst);
  const double s_end = surv(options.horizon);
  if (s_end > 0.5) {
    st.median = months_to_years(options.horizon);
    st.reached = false;
  } else {
    auto f = [&](double t) { return 0.5 - surv(t); };
    st.median =
        months_to_years(bracketed_root(f, 0.0, options.horizon, -0.5, 0.5 - s_end, 1e-9));
  }
  for (double t : options.landmarks) st.landmarks.push_back(100.0 * surv(t));
  if (with_curve) {
    st.curve.resize(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) st.curve[j] = surv(grid[j]);
  }
  return st;
}

}  // namespace

ExtrapolationResult weibull_extrapolation(const WeibullFit& fit, const CohortDataset& cohort,
                                          const ExtrapolationOptions& options) {
  const std::size_t k = cohort.group_count();
  if (fit.phi.size() != k) throw InputError("weibull fit and cohort have different groups");
  const auto grid = default_grid(options.horizon);
  const Eigen::VectorXd theta = fit.estimate();
  const auto m = theta.size();

  // Bootstrap draws on the (log shape, phi) scale.
  std::vector<Eigen::VectorXd> boot;
  if (options.bootstrap > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.covariance);
    if (eig.info() != Eigen::Success) throw NumericalError("weibull covariance decomposition failed");
    const double largest = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(largest, 1.0)) {
      throw NumericalError("weibull covariance is not positive semidefinite");
    }
    const Eigen::MatrixXd root =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    std::normal_distribution<double> normal;
    for (std::size_t b = 0; b < options.bootstrap; ++b) {
      CounterRng rng(options.seed, 0xB0075, b);
      Eigen::VectorXd z(m);
      for (Eigen::Index j = 0; j < m; ++j) z[j] = normal(rng);
      boot.push_back(theta + root * z);
    }
  }
  auto unpack = [k](const Eigen::VectorXd& t, double& shape, std::vector<double>& ls) {
    shape = std::exp(t[0]);
    ls.resize(k);
    for (std::size_t g = 0; g < k; ++g) {
      ls[g] = t[1] + (g == 0 ? 0.0 : t[static_cast<Eigen::Index>(g + 1)]);
    }
  };

  ExtrapolationResult result;
  for (std::size_t s = 0; s <= k; ++s) {
    const std::optional<std::size_t> group =
        s == 0 ? std::nullopt : std::optional<std::size_t>(s - 1);
    std::vector<double> weights(k, 0.0);
    const auto members = scope_members(cohort, group);
    for (auto i : members) weights[cohort.patients[i].group] += 1.0;
    ExtrapolationSummary summary;
    summary.scope = group ? cohort.groups[*group] : "overall";
    summary.method = "weibull";
    summary.patients = members.size();
    summary.lifespan_months = options.horizon;
    summary.short_horizon_months = options.short_horizon;
    summary.draws = boot.size();
    if (members.empty()) {
      result.summaries.push_back(summary);
      continue;
    }
    for (auto& w : weights) w /= static_cast<double>(members.size());

    double shape = 0.0;
    std::vector<double> ls;
    unpack(theta, shape, ls);
    const auto point = weibull_scope_stats(shape, ls, weights, options, grid, true);

    std::vector<double> life, short_rmst, median;
    std::vector<std::vector<double>> marks(options.landmarks.size());
    std::vector<std::vector<double>> columns(grid.size());
    std::size_t not_reached = 0;
    for (const auto& tb : boot) {
      unpack(tb, shape, ls);
      const auto st = weibull_scope_stats(shape, ls, weights, options, grid, true);
      life.push_back(st.life);
      short_rmst.push_back(st.short_rmst);
      median.push_back(st.median);
      if (!st.reached) ++not_reached;
      for (std::size_t l = 0; l < marks.size(); ++l) marks[l].push_back(st.landmarks[l]);
      for (std::size_t j = 0; j < grid.size(); ++j) columns[j].push_back(st.curve[j]);
    }
    summary.rmst_lifespan = with_percentiles(point.life, life);
    summary.rmst_short = with_percentiles(point.short_rmst, short_rmst);
    summary.median = with_percentiles(point.median, median);
    summary.median_reached = point.reached;
    summary.median_not_reached_fraction =
        boot.empty() ? (point.reached ? 0.0 : 1.0)
                     : static_cast<double>(not_reached) / static_cast<double>(boot.size());
    for (std::size_t l = 0; l < marks.size(); ++l) {
      summary.landmarks.push_back(
          {options.landmarks[l], with_percentiles(point.landmarks[l], marks[l])});
    }
    result.summaries.push_back(summary);

    CurveGrid curve;
    curve.scope = summary.scope;
    curve.time = grid;
    curve.mean = point.curve;
    if (!boot.empty()) {
      for (std::size_t j = 0; j < grid.size(); ++j) {
        curve.lo95.push_back(quantile(columns[j], 0.025));
        curve.hi95.push_back(quantile(columns[j], 0.975));
      }
    }
    result.curves.push_back(std::move(curve));
  }
  return result;
}

}  // namespace jmsurv
