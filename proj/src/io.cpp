#include "jmsurv/io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "jmsurv/config.hpp"
#include "jmsurv/error.hpp"
#include "jmsurv/layout.hpp"

namespace jmsurv {

using nlohmann::json;

namespace {

constexpr const char* kCodeVersion = "0.1.0";

std::string num(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write file: " + path.string());
  return out;
}

json interval_json(const Interval& i, const char* units) {
  json j = {{"point", i.point}, {"units", units}};
  j["lo95"] = i.lo ? json(*i.lo) : json(nullptr);
  j["hi95"] = i.hi ? json(*i.hi) : json(nullptr);
  return j;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

void write_posterior_csv(const std::filesystem::path& path, const PosteriorSamples& samples,
                         const std::string& manifest) {
  auto out = open_out(path);
  out << "# manifest " << manifest << '\n';
  out << "chain,iteration";
  for (const auto& n : samples.names) out << ',' << n;
  out << '\n';
  for (std::size_t c = 0; c < samples.chains.size(); ++c) {
    const auto& chain = samples.chains[c];
    for (std::size_t d = 0; d < chain.size(); ++d) {
      out << c << ',' << samples.config.burn_in + (d + 1) * samples.config.thin;
      for (double v : chain.row(d)) out << ',' << num(v);
      out << '\n';
    }
  }
}

PosteriorTable read_posterior_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open posterior file: " + path.string());
  PosteriorTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("# manifest ", 0) == 0) {
      table.manifest = line.substr(11);
      continue;
    }
    if (!line.empty() && line[0] == '#') continue;
    break;
  }
  auto header = split(line);
  if (header.size() < 3 || header[0] != "chain" || header[1] != "iteration") {
    throw InputError(path.string() + ": expected header 'chain,iteration,<parameters>'");
  }
  table.names.assign(header.begin() + 2, header.end());
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != header.size()) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    }
    std::size_t chain = 0;
    auto [p, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), chain);
    if (ec != std::errc()) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": bad chain index");
    }
    if (chain >= table.chains.size()) table.chains.resize(chain + 1);
    std::vector<double> row(table.names.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
      const auto& f = fields[j + 2];
      auto [q, e2] = std::from_chars(f.data(), f.data() + f.size(), row[j]);
      if (e2 != std::errc() || q != f.data() + f.size()) {
        throw InputError(path.string() + ":" + std::to_string(lineno) + ": cannot parse '" + f +
                         "'");
      }
    }
    table.chains[chain].push_back(std::move(row));
  }
  return table;
}

PosteriorSamples posterior_from_table(const PosteriorTable& table, const JointModelSpec& spec,
                                      const McmcConfig& config, const CohortDataset& cohort) {
  const ParameterLayout layout(spec, cohort);
  if (table.names != layout.names()) {
    throw InputError(
        "posterior parameters do not match the model specification and cohort (expected " +
        std::to_string(layout.size()) + " columns, found " + std::to_string(table.names.size()) +
        ")");
  }
  PosteriorSamples s;
  s.spec = spec;
  s.config = config;
  s.names = table.names;
  s.groups = cohort.groups;
  for (std::size_t c = 0; c < table.chains.size(); ++c) {
    Chain chain;
    chain.width = layout.size();
    for (const auto& row : table.chains[c]) {
      chain.draws.insert(chain.draws.end(), row.begin(), row.end());
      const ParameterState state = layout.unpack(row);
      chain.loglik.push_back(longitudinal_loglik(state.longitudinal, cohort) +
                             survival_loglik(state, cohort, spec));
    }
    s.chains.push_back(std::move(chain));
  }
  if (s.chains.empty()) throw InputError("posterior file has no draws");
  for (const auto& c : s.chains) {
    if (c.size() != s.chains.front().size()) {
      throw InputError("posterior chains have different lengths");
    }
  }
  return s;
}

json to_json(const DiagnosticsReport& r, const std::string& manifest) {
  json params = json::array();
  for (const auto& p : r.parameters) {
    params.push_back({{"name", p.name},
                      {"mean", p.mean},
                      {"sd", p.sd},
                      {"lo95", p.lo95},
                      {"hi95", p.hi95},
                      {"rhat", p.rhat.value},
                      {"rhat_constant", p.rhat.constant},
                      {"mcse", p.mcse.available ? json(p.mcse.mcse) : json(nullptr)},
                      {"mcse_ratio", p.mcse.available ? json(p.mcse.ratio) : json(nullptr)},
                      {"mcse_degenerate", p.mcse.degenerate},
                      {"rhat_ok", p.rhat_ok},
                      {"mcse_ok", p.mcse_ok}});
  }
  return {{"schema_version", kSchemaVersion},
          {"manifest", manifest},
          {"rhat_threshold", r.rhat_threshold},
          {"mcse_threshold", r.mcse_threshold},
          {"converged", r.converged},
          {"parameters", params},
          {"acceptance", r.acceptance},
          {"cap_events", r.cap_events},
          {"dic", {{"dbar", r.dic.dbar}, {"pd", r.dic.pd}, {"dic", r.dic.dic},
                   {"d_at_mean", r.dic.d_at_mean}}}};
}

json to_json(const ExtrapolationResult& result) {
  json scopes = json::array();
  for (const auto& s : result.summaries) {
    json marks = json::array();
    json ten_years = nullptr;
    for (const auto& l : s.landmarks) {
      json m = interval_json(l.percent, "percent");
      m["months"] = l.months;
      if (l.months == 120.0) ten_years = m;
      marks.push_back(m);
    }
    json median = interval_json(s.median, "years");
    median["reached"] = s.median_reached;
    median["not_reached_fraction"] = s.median_not_reached_fraction;
    if (!s.median_reached) median["point"] = nullptr;
    scopes.push_back({{"scope", s.scope},
                      {"method", s.method},
                      {"patients", s.patients},
                      {"draws", s.draws},
                      {"lifespan_months", s.lifespan_months},
                      {"short_horizon_months", s.short_horizon_months},
                      {"rmst_lifespan", interval_json(s.rmst_lifespan, "years")},
                      {"median", median},
                      {"landmarks", marks},
                      {"landmark_10y", ten_years},
                      {"rmst_5y", interval_json(s.rmst_short, "years")},
                      {"cap_fraction", s.cap_fraction},
                      {"cap_warning", s.cap_warning}});
  }
  return scopes;
}

json truth_json(const ParameterState& t, const std::vector<std::string>& groups,
                const std::vector<std::string>& patients) {
  const auto& l = t.longitudinal;
  json b0 = json::object();
  json b1 = json::object();
  for (std::size_t i = 0; i < patients.size() && i < l.b0.size(); ++i) {
    b0[patients[i]] = l.b0[i];
    b1[patients[i]] = l.b1[i];
  }
  json phi = json::object();
  json alpha_k = json::object();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    phi[groups[g]] = t.survival.phi[g];
    alpha_k[groups[g]] = t.association.for_group(g);
  }
  return {{"schema_version", kSchemaVersion},
          {"beta0", l.beta0},
          {"beta1", l.beta1},
          {"sigma", l.sigma},
          {"omega0", l.omega0},
          {"omega1", l.omega1},
          {"kappa", t.survival.shape},
          {"phi", phi},
          {"association", to_string(t.association.structure)},
          {"functional", to_string(t.association.functional)},
          {"alpha", t.association.alpha},
          {"alpha_k", alpha_k},
          {"tau", t.association.tau},
          {"b0", b0},
          {"b1", b1}};
}

void write_curves_csv(const std::filesystem::path& path, const std::vector<CurveGrid>& curves,
                      const std::string& manifest) {
  auto out = open_out(path);
  out << "# manifest " << manifest << '\n';
  out << "scope,time_months,mean,lo95,hi95\n";
  for (const auto& c : curves) {
    for (std::size_t j = 0; j < c.time.size(); ++j) {
      out << c.scope << ',' << num(c.time[j]) << ',' << num(c.mean[j]) << ','
          << (c.lo95.empty() ? "" : num(c.lo95[j])) << ','
          << (c.hi95.empty() ? "" : num(c.hi95[j])) << '\n';
    }
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

json make_manifest(const std::string& command, const json& config,
                   const std::vector<std::uint64_t>& seeds) {
  const auto now = std::chrono::system_clock::now();
  const auto secs =
      std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  return {{"schema_version", kSchemaVersion},
          {"command", command},
          {"code_version", kCodeVersion},
          {"hash", manifest_hash({{"command", command}, {"config", config}})},
          {"seeds", seeds},
          {"config", config},
          {"timestamp_unix", secs}};
}

}  // namespace jmsurv
