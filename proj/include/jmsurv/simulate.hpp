#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "jmsurv/data.hpp"
#include "jmsurv/model.hpp"

namespace jmsurv {

struct VisitSchedule {
  double first_year_interval_days = 56.0;  // every other 28-day cycle
  double later_interval_months = 3.0;
};

constexpr double kDaysPerMonth = 30.4375;

/// Visit times (months) from 0 up to, and excluding, `end`.
std::vector<double> visit_times(const VisitSchedule& schedule, double end);

struct SimDesign {
  std::string name;
  std::size_t n = 0;
  std::vector<std::string> groups;
  std::vector<double> proportions;  // group mix; counts are allocated exactly
  ParameterState truth;             // population values; random effects are drawn
  bool random_slope = true;
  VisitSchedule schedule;
  double censor_lower = 24.0;  // administrative censoring ~ Uniform(lower, upper) months
  double censor_upper = 72.0;
  double horizon = 1200.0;     // death draws beyond this are treated as censored
  std::uint64_t seed = 1;
  AssociationStructure fit_structure = AssociationStructure::common;

  void validate() const;
  /// Largest-remainder allocation of n over the proportions.
  std::vector<std::size_t> group_sizes() const;
};

struct SimulationResult {
  CohortDataset cohort;
  ParameterState truth;  // includes the drawn random effects in cohort order
  std::size_t truncated_observations = 0;  // SLD values floored at 0
  std::vector<std::uint8_t> truncated;     // per longitudinal record, cohort order
};

SimulationResult simulate_cohort(const SimDesign& design);

/// Fixed, seeded scenarios S1 to S4.
std::vector<SimDesign> scenario_catalog();
SimDesign scenario(const std::string& name);

/// The spec matching a design's generating structure and groups.
JointModelSpec spec_for(const SimDesign& design);

}  // namespace jmsurv
