#include "jmsurv/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "jmsurv/diagnostics.hpp"
#include "jmsurv/error.hpp"
#include "jmsurv/extrapolate.hpp"
#include "jmsurv/io.hpp"
#include "jmsurv/simulate.hpp"
#include "jmsurv/weibull.hpp"

namespace jmsurv {

using nlohmann::json;

namespace {

// The output location does not change what a command computes, so it is
// left out of the hash.
std::string manifest_of(const std::string& command, const RunConfig& config) {
  json j = to_json(config);
  j.erase("output");
  return manifest_hash({{"command", command}, {"config", j}});
}

void prepare_output(const RunConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(config.output, ec);
  if (ec || !std::filesystem::is_directory(config.output)) {
    throw InputError("cannot create output directory: " + config.output.string());
  }
}

void write_manifest(const std::string& command, const RunConfig& config,
                    const std::vector<std::uint64_t>& seeds) {
  write_json(config.output / ("manifest_" + command + ".json"),
             make_manifest(command, to_json(config), seeds));
}

PosteriorSamples load_posterior(const RunConfig& config, const std::filesystem::path& path,
                                const CohortDataset& cohort) {
  JointModelSpec spec = config.spec;
  spec.groups = cohort.groups;
  return posterior_from_table(read_posterior_csv(path), spec, config.mcmc, cohort);
}

json diagnostics_document(const DiagnosticsReport& report, const RunConfig& config,
                          const CohortDataset& cohort, const std::string& manifest) {
  json j = to_json(report, manifest);
  j["model"] = {{"association", to_string(config.spec.structure)},
                {"functional", to_string(config.spec.functional)}};
  j["cohort"] = {{"fingerprint", cohort_fingerprint(cohort)},
                 {"patients", cohort.size()},
                 {"events", cohort.event_count()}};
  return j;
}

}  // namespace

CohortDataset load_cohort(const RunConfig& config) {
  if (config.survival.empty()) throw InputError("no survival file configured");
  if (config.longitudinal.empty()) throw InputError("no longitudinal file configured");
  return join_cohort(load_longitudinal(config.longitudinal), load_survival(config.survival),
                     config.spec.groups);
}

std::string cohort_fingerprint(const CohortDataset& cohort) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& p : cohort.patients) {
    os << p.survival.patient_id << ',' << p.survival.os_time << ',' << p.survival.event << ','
       << p.survival.tumour_group << ';';
    for (const auto& v : p.visits) os << v.time << ':' << v.sld << ';';
  }
  return manifest_hash(json(os.str()));
}

void cmd_simulate(const RunConfig& config, std::ostream& log) {
  SimDesign design = scenario(config.scenario);
  if (config.simulation_seed) design.seed = *config.simulation_seed;
  prepare_output(config);
  const auto sim = simulate_cohort(design);
  const std::string manifest = manifest_of("simulate", config);
  const std::string comment = "manifest " + manifest;
  write_longitudinal(config.output / "longitudinal.csv", longitudinal_records(sim.cohort), comment);
  write_survival(config.output / "survival.csv", survival_records(sim.cohort), comment);

  std::vector<std::string> ids;
  for (const auto& p : sim.cohort.patients) ids.push_back(p.survival.patient_id);
  json truth = truth_json(sim.truth, sim.cohort.groups, ids);
  truth["manifest"] = manifest;
  truth["scenario"] = design.name;
  truth["seed"] = design.seed;
  truth["truncated_observations"] = sim.truncated_observations;
  write_json(config.output / "truth.json", truth);

  // A ready-to-fit config for the generated files.
  RunConfig fit = config;
  fit.longitudinal = "longitudinal.csv";
  fit.survival = "survival.csv";
  fit.output = ".";
  fit.spec = spec_for(design);
  write_json(config.output / "config.json", to_json(fit));
  write_manifest("simulate", config, {design.seed});
  log << "simulated " << design.name << ": " << sim.cohort.size() << " patients, "
      << sim.cohort.event_count() << " deaths, " << sim.cohort.observation_count()
      << " SLD records\n";
}

void cmd_fit(const RunConfig& config, std::ostream& log) {
  const CohortDataset cohort = load_cohort(config);
  JointModelSpec spec = config.spec;
  spec.groups = cohort.groups;
  prepare_output(config);
  const std::string manifest = manifest_of("fit", config);
  const PosteriorSamples samples = run_chains(spec, cohort, config.mcmc);
  write_posterior_csv(config.output / "posterior.csv", samples, manifest);
  const auto report = diagnose(samples, cohort, config.rhat_threshold, config.mcse_threshold);
  write_json(config.output / "diagnostics.json",
             diagnostics_document(report, config, cohort, manifest));
  write_manifest("fit", config, config.mcmc.chain_seeds());
  log << "fit " << to_string(spec.structure) << "/" << to_string(spec.functional) << ": "
      << samples.total_draws() << " draws, DIC " << report.dic.dic
      << (report.converged ? "" : " (convergence thresholds not met)") << '\n';
}

void cmd_diagnose(const RunConfig& config, const std::filesystem::path& posterior,
                  std::ostream& log) {
  const CohortDataset cohort = load_cohort(config);
  const PosteriorSamples samples = load_posterior(config, posterior, cohort);
  prepare_output(config);
  const std::string manifest = manifest_of("diagnose", config);
  const auto report = diagnose(samples, cohort, config.rhat_threshold, config.mcse_threshold);
  write_json(config.output / "diagnostics.json",
             diagnostics_document(report, config, cohort, manifest));
  write_manifest("diagnose", config, config.mcmc.chain_seeds());
  log << "DIC " << report.dic.dic << (report.converged ? "" : " (convergence thresholds not met)")
      << '\n';
}

void cmd_extrapolate(const RunConfig& config, const std::filesystem::path& posterior,
                     std::ostream& log) {
  const CohortDataset cohort = load_cohort(config);
  const PosteriorSamples samples = load_posterior(config, posterior, cohort);
  prepare_output(config);
  const std::string manifest = manifest_of("extrapolate", config);

  const auto joint = extrapolate_joint(samples, cohort, config.extrapolation);
  // The comparator needs an event in every group; without one the joint
  // results are still reported.
  std::optional<WeibullFit> fit;
  std::optional<ExtrapolationResult> weibull;
  std::string weibull_error;
  try {
    fit = fit_weibull_mle(survival_records(cohort), cohort.groups);
    weibull = weibull_extrapolation(*fit, cohort, config.extrapolation);
  } catch (const std::runtime_error& e) {
    weibull_error = e.what();
    log << "warning: Weibull comparator unavailable: " << weibull_error << '\n';
  }

  json observed = json::array();
  for (std::size_t s = 0; s <= cohort.group_count(); ++s) {
    const auto group = s == 0 ? std::nullopt : std::optional<std::size_t>(s - 1);
    const auto records = survival_records(cohort, group);
    if (records.empty()) continue;
    const auto r = observed_rmst(kaplan_meier(records), config.extrapolation.short_horizon);
    observed.push_back({{"scope", group ? cohort.groups[*group] : "overall"},
                        {"horizon_months", r.horizon},
                        {"rmst", {{"point", months_to_years(r.estimate)},
                                  {"lo95", months_to_years(r.lo95)},
                                  {"hi95", months_to_years(r.hi95)},
                                  {"units", "years"}}},
                        {"truncated", r.truncated}});
  }
  json doc = {{"schema_version", kSchemaVersion},
              {"manifest", manifest},
              {"groups", cohort.groups},
              {"joint", to_json(joint)},
              {"weibull", weibull ? to_json(*weibull) : json(nullptr)},
              {"observed", observed},
              {"weibull_fit", fit ? json{{"shape", fit->shape},
                                         {"phi", fit->phi},
                                         {"loglik", fit->loglik}}
                                  : json{{"error", weibull_error}}}};
  write_json(config.output / "extrapolation_summary.json", doc);
  write_curves_csv(config.output / "curves_joint.csv", joint.curves, manifest);
  if (weibull) write_curves_csv(config.output / "curves_weibull.csv", weibull->curves, manifest);
  write_manifest("extrapolate", config, {config.extrapolation.seed});

  const auto& o = joint.summaries.front();
  log << std::fixed << std::setprecision(2) << "overall RMST " << months_to_years(o.lifespan_months)
      << "y: joint " << o.rmst_lifespan.point;
  if (weibull) log << ", weibull " << weibull->summaries.front().rmst_lifespan.point;
  log << "; RMST " << months_to_years(o.short_horizon_months) << "y: joint " << o.rmst_short.point;
  if (weibull) log << ", weibull " << weibull->summaries.front().rmst_short.point;
  log << '\n';
  for (const auto& s : joint.summaries) {
    if (s.cap_warning) {
      log << "warning: " << s.scope << ": " << 100.0 * s.cap_fraction
          << "% of predicted times capped at the horizon; lifespan RMST is biased low\n";
    }
  }
}

void cmd_km(const RunConfig& config, std::ostream& log) {
  if (config.survival.empty()) throw InputError("no survival file configured");
  const auto records = load_survival(config.survival);
  if (records.empty()) throw InputError("survival file has no records: " + config.survival.string());
  prepare_output(config);
  const std::string manifest = manifest_of("km", config);
  const std::string comment = "manifest " + manifest;

  std::vector<std::string> groups = config.spec.groups;
  if (groups.empty()) {
    std::set<std::string> labels;
    for (const auto& r : records) labels.insert(r.tumour_group);
    groups.assign(labels.begin(), labels.end());
  }
  json scopes = json::array();
  for (std::size_t s = 0; s <= groups.size(); ++s) {
    std::vector<SurvivalRecord> subset;
    for (const auto& r : records) {
      if (s == 0 || r.tumour_group == groups[s - 1]) subset.push_back(r);
    }
    if (subset.empty()) continue;
    const std::string scope = s == 0 ? "overall" : groups[s - 1];
    const StepCurve curve = kaplan_meier(subset);
    write_step_curve(config.output / (s == 0 ? "km.csv" : "km_" + scope + ".csv"), curve,
                     comment);
    json rmst = json::array();
    for (double h : config.km_horizons) {
      const auto r = observed_rmst(curve, h);
      rmst.push_back({{"horizon_months", h},
                      {"estimate_months", r.estimate},
                      {"lo95_months", r.lo95},
                      {"hi95_months", r.hi95},
                      {"estimate_years", months_to_years(r.estimate)},
                      {"lo95_years", months_to_years(r.lo95)},
                      {"hi95_years", months_to_years(r.hi95)},
                      {"truncated", r.truncated}});
    }
    scopes.push_back({{"scope", scope}, {"patients", subset.size()}, {"observed_rmst", rmst}});
  }
  write_json(config.output / "observed_rmst.json",
             {{"schema_version", kSchemaVersion}, {"manifest", manifest}, {"scopes", scopes}});
  write_manifest("km", config, {});
  log << "KM written for " << scopes.size() << " scopes\n";
}

void cmd_compare(const RunConfig& config, const std::vector<std::filesystem::path>& inputs,
                 std::ostream& log) {
  if (inputs.size() < 2) throw InputError("compare needs at least 2 diagnostics files");
  struct Row {
    std::string file;
    std::string model;
    double dic = 0.0;
    std::string cohort;
  };
  std::vector<Row> rows;
  for (const auto& path : inputs) {
    const json j = read_json(path);
    Row r;
    r.file = path.string();
    try {
      r.dic = j.at("dic").at("dic").get<double>();
      r.model = j.at("model").at("association").get<std::string>() + "/" +
                j.at("model").at("functional").get<std::string>();
      r.cohort = j.at("cohort").at("fingerprint").get<std::string>();
    } catch (const json::exception&) {
      throw InputError(path.string() + ": not a diagnostics document");
    }
    rows.push_back(r);
  }
  for (const auto& r : rows) {
    if (r.cohort != rows.front().cohort) {
      throw InputError("diagnostics come from different cohorts: " + rows.front().file + " and " +
                       r.file);
    }
  }
  double best = rows.front().dic;
  for (const auto& r : rows) best = std::min(best, r.dic);
  std::size_t n_best = 0;
  for (const auto& r : rows) n_best += r.dic == best ? 1 : 0;

  json table = json::array();
  log << std::left << std::setw(28) << "model" << std::right << std::setw(14) << "DIC" << '\n';
  for (const auto& r : rows) {
    const bool is_best = r.dic == best;
    table.push_back({{"file", r.file},
                     {"model", r.model},
                     {"dic", r.dic},
                     {"best", is_best},
                     {"tie", is_best && n_best > 1}});
    log << std::left << std::setw(28) << r.model << std::right << std::setw(14) << std::fixed
        << std::setprecision(1) << r.dic
        << (is_best ? (n_best > 1 ? "  best fit (lowest DIC, tie)" : "  best fit (lowest DIC)")
                    : "")
        << '\n';
  }
  prepare_output(config);
  write_json(config.output / "compare.json", {{"schema_version", kSchemaVersion},
                                              {"manifest", manifest_of("compare", config)},
                                              {"models", table}});
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian joint longitudinal-survival modelling and survival extrapolation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string association;
  std::string functional;
  std::string scenario_name;
  std::string posterior;
  std::vector<std::string> compare_inputs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--preset", preset, "MCMC preset: smoke or paper");
    sub->add_option("--seed", seed, "Seed for simulation, MCMC and prediction");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--association", association, "common, exchangeable or independent");
    sub->add_option("--functional", functional, "current or slope");
  };
  auto* simulate = app.add_subcommand("simulate", "Simulate a scenario cohort");
  add_common(simulate);
  simulate->add_option("--scenario", scenario_name, "S1, S2, S3 or S4");
  auto* fit = app.add_subcommand("fit", "Fit the joint model by MCMC");
  add_common(fit);
  auto* diag = app.add_subcommand("diagnose", "Convergence diagnostics and DIC for a posterior");
  add_common(diag);
  diag->add_option("--posterior", posterior, "Posterior draws CSV");
  auto* extra = app.add_subcommand("extrapolate", "Extrapolate survival from a posterior");
  add_common(extra);
  extra->add_option("--posterior", posterior, "Posterior draws CSV");
  auto* km = app.add_subcommand("km", "Kaplan-Meier curve and observed RMST");
  add_common(km);
  auto* compare = app.add_subcommand("compare", "Compare DIC across fitted models");
  add_common(compare);
  compare->add_option("inputs", compare_inputs, "Diagnostics JSON files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  auto fail = [&](const char* type, const std::string& message, int code) {
    json j = {{"schema_version", kSchemaVersion},
              {"error", {{"type", type}, {"message", message}}},
              {"exit_code", code}};
    err << j.dump() << '\n';
    return code;
  };

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (!preset.empty()) apply_preset(config.mcmc, preset);
    if (seed) {
      config.simulation_seed = *seed;
      config.mcmc.base_seed = *seed;
      config.mcmc.seeds.clear();
      config.extrapolation.seed = *seed;
    }
    if (!out_dir.empty()) config.output = out_dir;
    if (!association.empty()) config.spec.structure = parse_structure(association);
    if (!functional.empty()) config.spec.functional = parse_functional(functional);
    if (!scenario_name.empty()) config.scenario = scenario_name;
    config.spec.validate();
    config.mcmc.validate();
    const std::filesystem::path posterior_path =
        posterior.empty() ? config.output / "posterior.csv" : std::filesystem::path(posterior);

    if (simulate->parsed()) cmd_simulate(config, out);
    if (fit->parsed()) cmd_fit(config, out);
    if (diag->parsed()) cmd_diagnose(config, posterior_path, out);
    if (extra->parsed()) cmd_extrapolate(config, posterior_path, out);
    if (km->parsed()) cmd_km(config, out);
    if (compare->parsed()) {
      std::vector<std::filesystem::path> inputs(compare_inputs.begin(), compare_inputs.end());
      cmd_compare(config, inputs, out);
    }
  } catch (const InputError& e) {
    return fail("InputError", e.what(), kExitInput);
  } catch (const NumericalError& e) {
    return fail("NumericalError", e.what(), kExitNumerical);
  } catch (const std::exception& e) {
    return fail("InternalError", e.what(), kExitNumerical);
  }
  return kExitOk;
}

}  // namespace jmsurv
