#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jmsurv/data.hpp"
#include "jmsurv/model.hpp"
#include "jmsurv/rng.hpp"
#include "jmsurv/sampler.hpp"
#include "jmsurv/weibull.hpp"

namespace jmsurv {

constexpr double kLifespanMonths = 1200.0;

struct DeathDraw {
  double time = 0.0;    // months
  bool capped = false;  // no death before the horizon
};

/// Samples T > censor_time from the conditional law of the patient's event
/// time given survival to censor_time, by inverting H(c, T) = -ln u.
DeathDraw conditional_death_draw(const PatientHazard& hazard, double censor_time, double u,
                                 double horizon, const GaussLegendre& rule);

DeathDraw conditional_death_draw(const ParameterState& state, const CohortDataset& cohort,
                                 std::size_t patient, double censor_time, CounterRng& rng,
                                 double horizon = kLifespanMonths,
                                 const GaussLegendre& rule = GaussLegendre(15));

/// Predicted death times for every patient under one posterior draw.
struct PredictedSurvivalDraw {
  std::size_t posterior_draw = 0;  // index into the concatenated chains
  std::vector<double> time;        // months
  std::vector<std::uint8_t> capped;
};

struct PredictOptions {
  double horizon = kLifespanMonths;
  std::size_t draws_per_sample = 1;
  std::size_t max_posterior_draws = 0;  // 0 = use every retained draw
  std::uint64_t seed = 20210720;
};

/// Deaths keep their observed times; censored patients get a conditional
/// draw using the posterior draw's own random effects.
std::vector<PredictedSurvivalDraw> predict_cohort(const PosteriorSamples& samples,
                                                  const CohortDataset& cohort,
                                                  const PredictOptions& options);

/// Monthly to 120 months, then quarterly to the horizon.
std::vector<double> default_grid(double horizon = kLifespanMonths);

struct CurveGrid {
  std::string scope;
  std::vector<double> time;                 // months
  std::vector<std::vector<double>> draws;   // per-draw survival on the grid
  std::vector<double> mean;
  std::vector<double> lo95;
  std::vector<double> hi95;
};

/// Per-draw empirical survival fraction of the selected patients (all when
/// `patients` is empty) with pointwise mean and 2.5/97.5 percentiles.
CurveGrid curve_from_draws(const std::vector<PredictedSurvivalDraw>& draws,
                           std::span<const double> grid,
                           std::span<const std::size_t> patients = {});

/// Trapezoid area under (grid, survival) on [0, horizon], in years.
double rmst(std::span<const double> grid, std::span<const double> survival, double horizon);

struct MedianResult {
  double years = 0.0;
  bool reached = true;
};

/// Smallest linearly interpolated t with S(t) <= 0.5.
MedianResult median_survival(std::span<const double> grid, std::span<const double> survival);

/// Interpolated S(t) * 100.
double landmark(std::span<const double> grid, std::span<const double> survival, double t);

struct Interval {
  double point = 0.0;
  std::optional<double> lo;
  std::optional<double> hi;
};

/// Mean with equal-tailed 95% percentile interval; needs >= 40 values.
Interval summarize(std::span<const double> values);

struct LandmarkSummary {
  double months = 0.0;
  Interval percent;
};

struct ExtrapolationSummary {
  std::string scope;  // "overall" or a tumour group label
  std::string method; // "joint" or "weibull"
  std::size_t patients = 0;
  double lifespan_months = kLifespanMonths;
  double short_horizon_months = 60.0;
  Interval rmst_lifespan;  // years
  Interval median;         // years
  bool median_reached = true;
  double median_not_reached_fraction = 0.0;
  std::vector<LandmarkSummary> landmarks;
  Interval rmst_short;  // years
  double cap_fraction = 0.0;
  bool cap_warning = false;  // more than 1% of predicted times capped
  std::size_t draws = 0;
};

struct ExtrapolationOptions {
  double horizon = kLifespanMonths;
  std::vector<double> landmarks{120.0};
  double short_horizon = 60.0;
  std::size_t draws_per_sample = 1;
  std::size_t max_posterior_draws = 1000;
  std::size_t bootstrap = 2000;
  std::uint64_t seed = 20210720;
};

struct ExtrapolationResult {
  std::vector<ExtrapolationSummary> summaries;  // overall first, then groups in order
  std::vector<CurveGrid> curves;
};

ExtrapolationResult extrapolate_joint(const PosteriorSamples& samples, const CohortDataset& cohort,
                                      const ExtrapolationOptions& options);

/// Plug-in Weibull extrapolation; the cohort curve is the patient-mix average
/// of the group curves. Intervals come from a parametric bootstrap of the
/// MLE on the (log shape, phi) scale; bootstrap = 0 gives point estimates only.
ExtrapolationResult weibull_extrapolation(const WeibullFit& fit, const CohortDataset& cohort,
                                          const ExtrapolationOptions& options);

/// Restricted mean of exp(-exp(log_scale) t^shape) on [0, horizon] months,
/// in months.
double weibull_rmst_months(double shape, double log_scale, double horizon);

}  // namespace jmsurv
