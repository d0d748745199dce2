#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "jmsurv/config.hpp"
#include "jmsurv/error.hpp"
#include "jmsurv/io.hpp"
#include "schema_check.hpp"
#include "test_util.hpp"

using namespace jmsurv;
using testutil::TempDir;
using testutil::write_file;

namespace {

PosteriorSamples short_fit(const CohortDataset& cohort, const JointModelSpec& spec) {
  McmcConfig config;
  config.chains = 2;
  config.burn_in = 50;
  config.iterations = 40;
  config.thin = 2;
  return run_chains(spec, cohort, config);
}

}  // namespace

TEST_CASE("posterior CSV round trips exactly") {
  TempDir dir("io");
  const auto sim = fixtures::small_cohort(10, 1);
  const auto spec = fixtures::spec_for_groups(sim.cohort, AssociationStructure::exchangeable,
                                              AssociationFunctional::current_value);
  const auto samples = short_fit(sim.cohort, spec);
  write_posterior_csv(dir / "p.csv", samples, "abc123");
  const auto table = read_posterior_csv(dir / "p.csv");
  CHECK(table.manifest == "abc123");
  CHECK(table.names == samples.names);
  REQUIRE(table.chains.size() == 2);
  const auto back = posterior_from_table(table, spec, samples.config, sim.cohort);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(back.chains[c].draws == samples.chains[c].draws);
    REQUIRE(back.chains[c].loglik.size() == samples.chains[c].loglik.size());
    for (std::size_t d = 0; d < back.chains[c].loglik.size(); ++d) {
      CHECK(back.chains[c].loglik[d] == doctest::Approx(samples.chains[c].loglik[d]).epsilon(1e-9));
    }
  }
  const auto text = testutil::read_file(dir / "p.csv");
  CHECK(text.rfind("# manifest abc123\nchain,iteration,", 0) == 0);
  CHECK(text.find("\n0,52,") != std::string::npos);  // first retained draw after burn-in 50, thin 2

  // names must match the model
  auto common = spec;
  common.structure = AssociationStructure::common;
  CHECK_THROWS_AS(posterior_from_table(table, common, samples.config, sim.cohort), InputError);
}

TEST_CASE("malformed posterior files are rejected") {
  TempDir dir("io");
  write_file(dir / "bad.csv", "chain,iteration,kappa\n0,1,abc\n");
  CHECK_THROWS_AS(read_posterior_csv(dir / "bad.csv"), InputError);
  write_file(dir / "short.csv", "chain,iteration,kappa,sigma\n0,1,1.0\n");
  CHECK_THROWS_AS(read_posterior_csv(dir / "short.csv"), InputError);
  CHECK_THROWS_AS(read_posterior_csv(dir / "none.csv"), InputError);
}

TEST_CASE("config round trips through JSON") {
  RunConfig c;
  c.longitudinal = "/data/l.csv";
  c.survival = "/data/s.csv";
  c.output = "/tmp/out";
  c.spec.structure = AssociationStructure::independent;
  c.spec.functional = AssociationFunctional::slope;
  c.spec.quadrature_nodes = 21;
  c.spec.priors.tau_sd = 0.25;
  c.mcmc = McmcConfig::smoke();
  c.mcmc.seeds = {4, 5, 6};
  c.extrapolation.landmarks = {60, 120};
  c.km_horizons = {12, 60};
  c.simulation_seed = 99;
  const auto j = to_json(c);
  const auto back = config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.spec == c.spec);
  CHECK(back.mcmc == c.mcmc);
  CHECK(back.extrapolation.landmarks == c.extrapolation.landmarks);
}

TEST_CASE("config parsing is strict") {
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"mcmc", {{"chians", 3}}}}), InputError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"surprise", 1}}), InputError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"mcmc", {{"chains", "three"}}}}), InputError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"model", {{"association", "shared"}}}}),
                  InputError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"mcmc", {{"preset", "fast"}}}}), InputError);

  const auto smoke = config_from_json(nlohmann::json{{"mcmc", {{"preset", "smoke"}}}});
  CHECK(smoke.mcmc.burn_in == 2000);
  CHECK(smoke.mcmc.iterations == 5000);

  TempDir dir("cfg");
  write_file(dir / "c.json", R"({"data": {"longitudinal": "l.csv", "survival": "s.csv"}})");
  const auto loaded = load_config(dir / "c.json");
  CHECK(loaded.longitudinal == dir / "l.csv");
  write_file(dir / "broken.json", "{ not json");
  CHECK_THROWS_AS(load_config(dir / "broken.json"), InputError);
  CHECK_THROWS_AS(load_config(dir / "absent.json"), InputError);
}

TEST_CASE("manifest hash") {
  const nlohmann::json a = {{"b", 1}, {"a", {1, 2}}};
  const nlohmann::json b = nlohmann::json::parse(R"({"a":[1,2],"b":1})");
  CHECK(manifest_hash(a) == manifest_hash(b));
  CHECK(manifest_hash(a).size() == 16);
  CHECK(manifest_hash(a) != manifest_hash(nlohmann::json{{"b", 2}, {"a", {1, 2}}}));
  // FNV-1a 64 of the empty object text "{}"
  CHECK(manifest_hash(nlohmann::json::object()) == "08f44b07b5901a25");

  const auto m = make_manifest("fit", a, {1, 2});
  CHECK(m.at("schema_version") == kSchemaVersion);
  CHECK(m.at("command") == "fit");
  CHECK(m.at("seeds").size() == 2);
  CHECK(m.at("hash").get<std::string>().size() == 16);
}

TEST_CASE("json helpers") {
  TempDir dir("json");
  const nlohmann::json j = {{"x", 1.5}, {"y", "z"}};
  write_json(dir / "a.json", j);
  CHECK(read_json(dir / "a.json") == j);
  CHECK_THROWS_AS(read_json(dir / "missing.json"), InputError);
}

TEST_CASE("curve CSV layout") {
  TempDir dir("curve");
  CurveGrid c;
  c.scope = "overall";
  c.time = {0, 1};
  c.mean = {1, 0.5};
  c.lo95 = {1, 0.4};
  c.hi95 = {1, 0.6};
  write_curves_csv(dir / "c.csv", {c}, "h");
  const auto text = testutil::read_file(dir / "c.csv");
  CHECK(text.rfind("# manifest h\nscope,time_months,mean,lo95,hi95\noverall,0,1,1,1\n", 0) == 0);
}

TEST_CASE("schema validator") {
  const auto schema = nlohmann::json::parse(R"({
    "type": "object",
    "required": ["a"],
    "additionalProperties": false,
    "properties": {
      "a": {"$ref": "#/$defs/pct"},
      "b": {"type": ["string", "null"], "enum": ["x", null]},
      "c": {"type": "array", "items": {"type": "integer"}}
    },
    "$defs": {"pct": {"type": "number", "minimum": 0, "maximum": 100}}
  })");
  CHECK(schema::validate(nlohmann::json{{"a", 50}}, schema).empty());
  CHECK(schema::validate(nlohmann::json{{"a", 50}, {"b", nullptr}, {"c", {1, 2}}}, schema).empty());
  CHECK(schema::validate(nlohmann::json{{"a", 150}}, schema).size() == 1);
  CHECK(schema::validate(nlohmann::json{{"b", "x"}}, schema).size() == 1);
  CHECK(schema::validate(nlohmann::json{{"a", 1}, {"z", 1}}, schema).size() == 1);
  CHECK(schema::validate(nlohmann::json{{"a", 1}, {"b", "y"}}, schema).size() == 1);
  CHECK(schema::validate(nlohmann::json{{"a", 1}, {"c", {1.5}}}, schema).size() == 1);
  CHECK(schema::validate(nlohmann::json{{"a", "1"}}, schema).size() == 1);
}

TEST_CASE("extrapolation summaries validate against the published schema") {
  const auto schema = read_json(std::filesystem::path(JMSURV_SCHEMA_DIR) /
                                "extrapolation_summary.schema.json");
  ExtrapolationSummary s;
  s.scope = "overall";
  s.method = "joint";
  s.patients = 3;
  s.rmst_lifespan = {4.0, 3.0, 5.0};
  s.median = {2.0, 1.0, 3.0};
  s.landmarks = {{120.0, {20.0, 10.0, 30.0}}};
  s.rmst_short = {2.5, 2.0, 3.0};
  ExtrapolationResult r;
  r.summaries = {s};
  const nlohmann::json doc = {{"schema_version", kSchemaVersion},
                              {"manifest", "x"},
                              {"groups", {"a"}},
                              {"joint", to_json(r)},
                              {"weibull", nullptr},
                              {"observed", nlohmann::json::array()},
                              {"weibull_fit", {{"error", "none"}}}};
  CHECK(schema::validate(doc, schema).empty());
  CHECK(to_json(r)[0].at("landmark_10y").at("point") == 20.0);

  auto bad = doc;
  bad["joint"][0]["landmark_10y"]["point"] = 120.0;
  CHECK_FALSE(schema::validate(bad, schema).empty());
  bad = doc;
  bad["joint"][0].erase("rmst_5y");
  CHECK_FALSE(schema::validate(bad, schema).empty());
}
