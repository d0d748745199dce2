#include "jmsurv/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "jmsurv/error.hpp"

namespace jmsurv {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

double parse_double(const std::string& text, const std::filesystem::path& path,
                    std::size_t line, const char* column) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw InputError(where(path, line) + ": cannot parse " + column + " value '" + text + "'");
  }
  return value;
}

std::ifstream open_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path.string());
  return in;
}

// Reads the header line, skipping leading '#' comment lines (provenance).
bool read_header(std::ifstream& in, std::string& line, std::size_t& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] != '#') return true;
  }
  return false;
}

void write_comment(std::ofstream& out, std::string_view comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const std::vector<std::string> kOptionalSurvivalColumns = {"age_group", "ecog", "metastatic"};

}  // namespace

std::size_t CohortDataset::event_count() const {
  return static_cast<std::size_t>(std::count_if(
      patients.begin(), patients.end(), [](const Patient& p) { return p.survival.event; }));
}

std::size_t CohortDataset::observation_count() const {
  std::size_t n = 0;
  for (const auto& p : patients) n += p.visits.size();
  return n;
}

double StepCurve::at(double t) const {
  if (time.empty() || t < time.front()) return 1.0;
  auto it = std::upper_bound(time.begin(), time.end(), t);
  return survival[static_cast<std::size_t>(std::distance(time.begin(), it)) - 1];
}

std::vector<LongitudinalRecord> load_longitudinal(const std::filesystem::path& path) {
  auto in = open_csv(path);
  std::string line;
  std::size_t lineno = 0;
  if (!read_header(in, line, lineno) || strip_cr(line) != "patient_id,time_months,sld_mm") {
    throw InputError(where(path, lineno) + ": expected header 'patient_id,time_months,sld_mm'");
  }
  std::vector<LongitudinalRecord> out;
  std::set<std::pair<std::string, double>> seen;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 3) {
      throw InputError(where(path, lineno) + ": expected 3 columns, found " +
                       std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw InputError(where(path, lineno) + ": empty patient_id");
    LongitudinalRecord rec{fields[0], parse_double(fields[1], path, lineno, "time_months"),
                           parse_double(fields[2], path, lineno, "sld_mm")};
    if (rec.time < 0.0) throw InputError(where(path, lineno) + ": negative time_months");
    if (rec.sld < 0.0) throw InputError(where(path, lineno) + ": negative sld_mm");
    if (!seen.emplace(rec.patient_id, rec.time).second) {
      throw InputError(where(path, lineno) + ": duplicate (patient_id, time) for " +
                       rec.patient_id);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<SurvivalRecord> load_survival(const std::filesystem::path& path) {
  auto in = open_csv(path);
  std::string line;
  std::size_t lineno = 0;
  if (!read_header(in, line, lineno)) throw InputError(where(path, 1) + ": missing header");
  auto header = split_csv(strip_cr(line));
  const std::vector<std::string> required = {"patient_id", "os_time_months", "event",
                                             "tumour_group"};
  if (header.size() < required.size() ||
      !std::equal(required.begin(), required.end(), header.begin())) {
    throw InputError(where(path, lineno) +
                     ": expected header 'patient_id,os_time_months,event,tumour_group[,...]'");
  }
  for (std::size_t c = required.size(); c < header.size(); ++c) {
    if (std::find(kOptionalSurvivalColumns.begin(), kOptionalSurvivalColumns.end(), header[c]) ==
        kOptionalSurvivalColumns.end()) {
      throw InputError(where(path, lineno) + ": unknown survival column '" + header[c] + "'");
    }
  }

  std::vector<SurvivalRecord> out;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != header.size()) {
      throw InputError(where(path, lineno) + ": expected " + std::to_string(header.size()) +
                       " columns, found " + std::to_string(fields.size()));
    }
    SurvivalRecord rec;
    rec.patient_id = fields[0];
    if (rec.patient_id.empty()) throw InputError(where(path, lineno) + ": empty patient_id");
    rec.os_time = parse_double(fields[1], path, lineno, "os_time_months");
    if (!(rec.os_time > 0.0)) throw InputError(where(path, lineno) + ": os_time_months must be > 0");
    if (fields[2] == "0") {
      rec.event = false;
    } else if (fields[2] == "1") {
      rec.event = true;
    } else {
      throw InputError(where(path, lineno) + ": event must be 0 or 1, found '" + fields[2] + "'");
    }
    rec.tumour_group = fields[3];
    if (rec.tumour_group.empty()) throw InputError(where(path, lineno) + ": empty tumour_group");
    for (std::size_t c = required.size(); c < header.size(); ++c) {
      if (!fields[c].empty()) rec.covariates[header[c]] = fields[c];
    }
    if (!seen.insert(rec.patient_id).second) {
      throw InputError(where(path, lineno) + ": duplicate patient_id " + rec.patient_id);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

CohortDataset join_cohort(const std::vector<LongitudinalRecord>& longitudinal,
                          const std::vector<SurvivalRecord>& survival,
                          const std::vector<std::string>& group_order) {
  CohortDataset cohort;
  if (group_order.empty()) {
    std::set<std::string> labels;
    for (const auto& s : survival) labels.insert(s.tumour_group);
    cohort.groups.assign(labels.begin(), labels.end());
  } else {
    cohort.groups = group_order;
    std::set<std::string> unique(group_order.begin(), group_order.end());
    if (unique.size() != group_order.size()) throw InputError("duplicate tumour group label");
  }
  cohort.group_counts.assign(cohort.groups.size(), 0);

  std::unordered_map<std::string, std::size_t> index;
  cohort.patients.reserve(survival.size());
  for (const auto& s : survival) {
    auto g = std::find(cohort.groups.begin(), cohort.groups.end(), s.tumour_group);
    if (g == cohort.groups.end()) {
      throw InputError("patient " + s.patient_id + ": tumour group '" + s.tumour_group +
                       "' not in declared label set");
    }
    if (!index.emplace(s.patient_id, cohort.patients.size()).second) {
      throw InputError("duplicate survival record for patient " + s.patient_id);
    }
    Patient p;
    p.survival = s;
    p.group = static_cast<std::size_t>(std::distance(cohort.groups.begin(), g));
    ++cohort.group_counts[p.group];
    cohort.patients.push_back(std::move(p));
  }

  for (const auto& r : longitudinal) {
    auto it = index.find(r.patient_id);
    if (it == index.end()) {
      throw InputError("orphan longitudinal record: patient " + r.patient_id +
                       " has no survival record");
    }
    cohort.patients[it->second].visits.push_back(r);
  }

  for (auto& p : cohort.patients) {
    if (p.visits.empty()) {
      throw InputError("patient " + p.survival.patient_id + " has no biomarker records");
    }
    std::stable_sort(p.visits.begin(), p.visits.end(),
                     [](const auto& a, const auto& b) { return a.time < b.time; });
    for (std::size_t j = 1; j < p.visits.size(); ++j) {
      if (!(p.visits[j].time > p.visits[j - 1].time)) {
        throw InputError("patient " + p.survival.patient_id + ": duplicate biomarker time " +
                         format_number(p.visits[j].time));
      }
    }
    if (p.visits.back().time > p.survival.os_time) {
      throw InputError("patient " + p.survival.patient_id + ": biomarker time " +
                       format_number(p.visits.back().time) + " exceeds os_time " +
                       format_number(p.survival.os_time));
    }
  }
  return cohort;
}

StepCurve kaplan_meier(const std::vector<SurvivalRecord>& survival) {
  if (survival.empty()) throw InputError("kaplan_meier: no survival records");
  std::vector<std::pair<double, bool>> obs;
  obs.reserve(survival.size());
  for (const auto& s : survival) obs.emplace_back(s.os_time, s.event);
  std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second > b.second;  // deaths first
  });

  StepCurve curve;
  curve.time.push_back(0.0);
  curve.survival.push_back(1.0);
  curve.at_risk.push_back(obs.size());
  curve.events.push_back(0);

  std::size_t at_risk = obs.size();
  double s = 1.0;
  for (std::size_t k = 0; k < obs.size();) {
    const double t = obs[k].first;
    std::size_t deaths = 0;
    std::size_t removed = 0;
    while (k < obs.size() && obs[k].first == t) {
      if (obs[k].second) ++deaths;
      ++removed;
      ++k;
    }
    if (deaths > 0) s *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
    curve.time.push_back(t);
    curve.survival.push_back(s);
    curve.at_risk.push_back(at_risk);
    curve.events.push_back(deaths);
    at_risk -= removed;
  }
  return curve;
}

ObservedRmst observed_rmst(const StepCurve& curve, double horizon) {
  if (!(horizon > 0.0)) throw InputError("observed_rmst: horizon must be > 0");
  if (curve.time.empty()) throw InputError("observed_rmst: empty curve");

  const std::size_t m = curve.time.size();
  // area[j] = integral of S from time[j] to horizon (0 if time[j] >= horizon).
  std::vector<double> tail(m + 1, 0.0);
  for (std::size_t j = m; j-- > 0;) {
    const double start = curve.time[j];
    const double end = (j + 1 < m) ? std::min(curve.time[j + 1], horizon) : horizon;
    const double width = std::max(0.0, end - start);
    tail[j] = tail[j + 1] + width * curve.survival[j];
  }

  ObservedRmst out;
  out.horizon = horizon;
  out.estimate = tail[0];
  for (std::size_t j = 1; j < m; ++j) {
    if (curve.time[j] > horizon) break;
    const auto d = static_cast<double>(curve.events[j]);
    const auto n = static_cast<double>(curve.at_risk[j]);
    if (d == 0.0 || n <= d) continue;
    out.variance += tail[j] * tail[j] * d / (n * (n - d));
  }
  const double half = 1.959963984540054 * std::sqrt(out.variance);
  out.lo95 = std::clamp(out.estimate - half, 0.0, horizon);
  out.hi95 = std::clamp(out.estimate + half, 0.0, horizon);
  out.truncated = horizon > curve.last_time() && curve.survival.back() > 0.0;
  return out;
}

void write_longitudinal(const std::filesystem::path& path,
                        const std::vector<LongitudinalRecord>& records, std::string_view comment) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path.string());
  write_comment(out, comment);
  out << "patient_id,time_months,sld_mm\n";
  for (const auto& r : records) {
    out << r.patient_id << ',' << format_number(r.time) << ',' << format_number(r.sld) << '\n';
  }
}

void write_survival(const std::filesystem::path& path,
                    const std::vector<SurvivalRecord>& records, std::string_view comment) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path.string());
  write_comment(out, comment);
  std::vector<std::string> extras;
  for (const auto& name : kOptionalSurvivalColumns) {
    bool any = std::any_of(records.begin(), records.end(),
                           [&](const auto& r) { return r.covariates.count(name) > 0; });
    if (any) extras.push_back(name);
  }
  out << "patient_id,os_time_months,event,tumour_group";
  for (const auto& e : extras) out << ',' << e;
  out << '\n';
  for (const auto& r : records) {
    out << r.patient_id << ',' << format_number(r.os_time) << ',' << (r.event ? 1 : 0) << ','
        << r.tumour_group;
    for (const auto& e : extras) {
      auto it = r.covariates.find(e);
      out << ',' << (it == r.covariates.end() ? std::string() : it->second);
    }
    out << '\n';
  }
}

void write_step_curve(const std::filesystem::path& path, const StepCurve& curve,
                      std::string_view comment) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path.string());
  write_comment(out, comment);
  out << "time_months,survival,at_risk,events\n";
  for (std::size_t j = 0; j < curve.time.size(); ++j) {
    out << format_number(curve.time[j]) << ',' << format_number(curve.survival[j]) << ','
        << curve.at_risk[j] << ',' << curve.events[j] << '\n';
  }
}

std::vector<LongitudinalRecord> longitudinal_records(const CohortDataset& cohort) {
  std::vector<LongitudinalRecord> out;
  out.reserve(cohort.observation_count());
  for (const auto& p : cohort.patients) out.insert(out.end(), p.visits.begin(), p.visits.end());
  return out;
}

std::vector<SurvivalRecord> survival_records(const CohortDataset& cohort) {
  return survival_records(cohort, std::nullopt);
}

std::vector<SurvivalRecord> survival_records(const CohortDataset& cohort,
                                             std::optional<std::size_t> group) {
  std::vector<SurvivalRecord> out;
  for (const auto& p : cohort.patients) {
    if (!group || p.group == *group) out.push_back(p.survival);
  }
  return out;
}

}  // namespace jmsurv
