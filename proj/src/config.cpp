#include "jmsurv/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "jmsurv/error.hpp"

namespace jmsurv {

using nlohmann::json;

namespace {

// Reads known keys of one config section and rejects anything else.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw InputError("config: '" + name_ + "' must be an object");
  }

  template <class T>
  void read(const std::string& key, T& target) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      target = it->get<T>();
    } catch (const json::exception&) {
      throw InputError("config: '" + name_ + "." + key + "' has the wrong type");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw InputError("config: unknown key '" + name_ + "." + it.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::string& text, const std::filesystem::path& base) {
  if (text.empty()) return {};
  std::filesystem::path p(text);
  return p.is_relative() && !base.empty() ? base / p : p;
}

}  // namespace

void apply_preset(McmcConfig& mcmc, const std::string& preset) {
  if (preset == "smoke") {
    const auto s = McmcConfig::smoke();
    mcmc.burn_in = s.burn_in;
    mcmc.iterations = s.iterations;
  } else if (preset == "paper") {
    const auto p = McmcConfig::paper();
    mcmc.burn_in = p.burn_in;
    mcmc.iterations = p.iterations;
  } else {
    throw InputError("unknown preset '" + preset + "' (expected smoke or paper)");
  }
}

json to_json(const RunConfig& c) {
  const auto& pr = c.spec.priors;
  json j;
  j["data"] = {{"longitudinal", c.longitudinal.string()},
               {"survival", c.survival.string()},
               {"groups", c.spec.groups}};
  j["output"] = c.output.string();
  j["simulation"] = {{"scenario", c.scenario},
                     {"seed", c.simulation_seed ? json(*c.simulation_seed) : json(nullptr)}};
  j["model"] = {{"association", to_string(c.spec.structure)},
                {"functional", to_string(c.spec.functional)},
                {"quadrature_nodes", c.spec.quadrature_nodes},
                {"random_slope", c.spec.random_slope},
                {"group_intercepts", c.spec.group_intercepts},
                {"wide_slope_prior", c.spec.wide_slope_prior},
                {"association_fixed_zero", c.spec.association_fixed_zero},
                {"priors",
                 {{"intercept_lower", pr.intercept_lower},
                  {"intercept_upper", pr.intercept_upper},
                  {"slope_lower", pr.slope_lower},
                  {"slope_upper", pr.slope_upper},
                  {"sd_upper", pr.sd_upper},
                  {"sigma_upper", pr.sigma_upper},
                  {"coefficient_sd", pr.coefficient_sd},
                  {"shape_rate", pr.shape_rate},
                  {"tau_sd", pr.tau_sd}}}};
  j["mcmc"] = {{"chains", c.mcmc.chains},
               {"burn_in", c.mcmc.burn_in},
               {"iterations", c.mcmc.iterations},
               {"thin", c.mcmc.thin},
               {"seed", c.mcmc.base_seed},
               {"seeds", c.mcmc.seeds},
               {"monitored", c.mcmc.monitored},
               {"adapt_window", c.mcmc.adapt_window}};
  const auto& e = c.extrapolation;
  j["extrapolation"] = {{"horizon_months", e.horizon},
                        {"landmarks_months", e.landmarks},
                        {"short_horizon_months", e.short_horizon},
                        {"draws_per_sample", e.draws_per_sample},
                        {"max_posterior_draws", e.max_posterior_draws},
                        {"bootstrap", e.bootstrap},
                        {"seed", e.seed}};
  j["km"] = {{"horizons_months", c.km_horizons}};
  j["diagnostics"] = {{"rhat_threshold", c.rhat_threshold},
                      {"mcse_threshold", c.mcse_threshold}};
  return j;
}

RunConfig config_from_json(const json& j, const std::filesystem::path& base) {
  RunConfig c;
  Section root(j, "config");
  if (const json* d = root.child("data")) {
    Section s(*d, "data");
    std::string longi, surv;
    s.read("longitudinal", longi);
    s.read("survival", surv);
    s.read("groups", c.spec.groups);
    s.finish();
    c.longitudinal = resolve(longi, base);
    c.survival = resolve(surv, base);
  }
  std::string output = c.output.string();
  root.read("output", output);
  c.output = resolve(output, base);
  if (const json* d = root.child("simulation")) {
    Section s(*d, "simulation");
    s.read("scenario", c.scenario);
    std::uint64_t seed = 0;
    if (d->contains("seed") && !d->at("seed").is_null()) {
      s.read("seed", seed);
      c.simulation_seed = seed;
    } else {
      s.read("seed", seed);
    }
    s.finish();
  }
  if (const json* d = root.child("model")) {
    Section s(*d, "model");
    std::string structure = to_string(c.spec.structure);
    std::string functional = to_string(c.spec.functional);
    s.read("association", structure);
    s.read("functional", functional);
    c.spec.structure = parse_structure(structure);
    c.spec.functional = parse_functional(functional);
    s.read("quadrature_nodes", c.spec.quadrature_nodes);
    s.read("random_slope", c.spec.random_slope);
    s.read("group_intercepts", c.spec.group_intercepts);
    s.read("wide_slope_prior", c.spec.wide_slope_prior);
    s.read("association_fixed_zero", c.spec.association_fixed_zero);
    if (const json* p = s.child("priors")) {
      Section ps(*p, "model.priors");
      auto& pr = c.spec.priors;
      ps.read("intercept_lower", pr.intercept_lower);
      ps.read("intercept_upper", pr.intercept_upper);
      ps.read("slope_lower", pr.slope_lower);
      ps.read("slope_upper", pr.slope_upper);
      ps.read("sd_upper", pr.sd_upper);
      ps.read("sigma_upper", pr.sigma_upper);
      ps.read("coefficient_sd", pr.coefficient_sd);
      ps.read("shape_rate", pr.shape_rate);
      ps.read("tau_sd", pr.tau_sd);
      ps.finish();
    }
    s.finish();
  }
  if (const json* d = root.child("mcmc")) {
    Section s(*d, "mcmc");
    std::string preset;
    s.read("preset", preset);
    if (!preset.empty()) apply_preset(c.mcmc, preset);
    s.read("chains", c.mcmc.chains);
    s.read("burn_in", c.mcmc.burn_in);
    s.read("iterations", c.mcmc.iterations);
    s.read("thin", c.mcmc.thin);
    s.read("seed", c.mcmc.base_seed);
    s.read("seeds", c.mcmc.seeds);
    s.read("monitored", c.mcmc.monitored);
    s.read("adapt_window", c.mcmc.adapt_window);
    s.finish();
  }
  if (const json* d = root.child("extrapolation")) {
    Section s(*d, "extrapolation");
    auto& e = c.extrapolation;
    s.read("horizon_months", e.horizon);
    s.read("landmarks_months", e.landmarks);
    s.read("short_horizon_months", e.short_horizon);
    s.read("draws_per_sample", e.draws_per_sample);
    s.read("max_posterior_draws", e.max_posterior_draws);
    s.read("bootstrap", e.bootstrap);
    s.read("seed", e.seed);
    s.finish();
  }
  if (const json* d = root.child("km")) {
    Section s(*d, "km");
    s.read("horizons_months", c.km_horizons);
    s.finish();
  }
  if (const json* d = root.child("diagnostics")) {
    Section s(*d, "diagnostics");
    s.read("rhat_threshold", c.rhat_threshold);
    s.read("mcse_threshold", c.mcse_threshold);
    s.finish();
  }
  root.finish();
  c.spec.validate();
  c.mcmc.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

std::string manifest_hash(const json& canonical) {
  const std::string text = canonical.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace jmsurv
