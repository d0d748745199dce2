#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace jmsurv {

/// One SLD measurement. Time in months since first dose, SLD in mm.
struct LongitudinalRecord {
  std::string patient_id;
  double time = 0.0;
  double sld = 0.0;

  bool operator==(const LongitudinalRecord&) const = default;
};

struct SurvivalRecord {
  std::string patient_id;
  double os_time = 0.0;  // months, > 0
  bool event = false;    // true = death observed
  std::string tumour_group;
  std::map<std::string, std::string> covariates;  // age_group, ecog, metastatic

  bool operator==(const SurvivalRecord&) const = default;
};

struct Patient {
  SurvivalRecord survival;
  std::vector<LongitudinalRecord> visits;  // strictly increasing in time
  std::size_t group = 0;                   // index into CohortDataset::groups

  bool operator==(const Patient&) const = default;
};

/// Joined biomarker and survival data. Invariants are established by
/// join_cohort and never broken afterwards.
struct CohortDataset {
  std::vector<Patient> patients;
  std::vector<std::string> groups;
  std::vector<std::size_t> group_counts;

  std::size_t size() const { return patients.size(); }
  std::size_t group_count() const { return groups.size(); }
  std::size_t event_count() const;
  std::size_t observation_count() const;

  bool operator==(const CohortDataset&) const = default;
};

/// Survival step function. survival[j] holds S(t) on [time[j], time[j+1]).
/// at_risk/events describe the risk set at time[j] (zero on the t = 0 row).
struct StepCurve {
  std::vector<double> time;
  std::vector<double> survival;
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;

  double at(double t) const;
  double last_time() const { return time.empty() ? 0.0 : time.back(); }
};

struct ObservedRmst {
  double horizon = 0.0;   // months
  double estimate = 0.0;  // months
  double variance = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
  bool truncated = false;  // horizon beyond last observation with S > 0
};

std::vector<LongitudinalRecord> load_longitudinal(const std::filesystem::path& path);
std::vector<SurvivalRecord> load_survival(const std::filesystem::path& path);

/// Joins survival and biomarker records into a cohort. If group_order is
/// empty the labels are taken in sorted order; otherwise every survival
/// record's tumour_group must appear in group_order.
CohortDataset join_cohort(const std::vector<LongitudinalRecord>& longitudinal,
                          const std::vector<SurvivalRecord>& survival,
                          const std::vector<std::string>& group_order = {});

/// Product-limit estimator. Deaths are processed before censorings at tied
/// times.
StepCurve kaplan_meier(const std::vector<SurvivalRecord>& survival);

/// Area under the step curve on [0, horizon] with a Greenwood-based
/// normal-approximation 95% interval truncated to [0, horizon].
ObservedRmst observed_rmst(const StepCurve& curve, double horizon);

/// Writers emit `# <comment>` as the first line when a comment is given;
/// the loaders skip leading comment lines.
void write_longitudinal(const std::filesystem::path& path,
                        const std::vector<LongitudinalRecord>& records,
                        std::string_view comment = {});
void write_survival(const std::filesystem::path& path,
                    const std::vector<SurvivalRecord>& records, std::string_view comment = {});
void write_step_curve(const std::filesystem::path& path, const StepCurve& curve,
                      std::string_view comment = {});

/// Flattens a cohort back into record lists (survival order, then visit order).
std::vector<LongitudinalRecord> longitudinal_records(const CohortDataset& cohort);
std::vector<SurvivalRecord> survival_records(const CohortDataset& cohort);

/// Records restricted to patients of one group (all patients if group is empty).
std::vector<SurvivalRecord> survival_records(const CohortDataset& cohort,
                                             std::optional<std::size_t> group);

constexpr double kMonthsPerYear = 12.0;
constexpr double years_to_months(double years) { return years * kMonthsPerYear; }
constexpr double months_to_years(double months) { return months / kMonthsPerYear; }

}  // namespace jmsurv
