#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "jmsurv/cli.hpp"
#include "jmsurv/io.hpp"
#include "schema_check.hpp"
#include "test_util.hpp"

using namespace jmsurv;
using testutil::read_file;
using testutil::TempDir;
using testutil::write_file;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "jmsurv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// Simulated S4 data plus a short-chain config next to it.
std::filesystem::path prepare_s4(const TempDir& dir, const nlohmann::json& mcmc) {
  const auto data = dir / "data";
  const auto r = cli({"simulate", "--scenario", "S4", "--out", data.string()});
  REQUIRE(r.code == 0);
  auto cfg = read_json(data / "config.json");
  cfg["mcmc"] = mcmc;
  write_json(data / "config.json", cfg);
  return data / "config.json";
}

void write_diag(const std::filesystem::path& path, const std::string& association, double dic,
                const std::string& fingerprint = "abc") {
  write_json(path, {{"dic", {{"dic", dic}}},
                    {"model", {{"association", association}, {"functional", "current"}}},
                    {"cohort", {{"fingerprint", fingerprint}}}});
}

}  // namespace

TEST_CASE("simulate writes a ready-to-fit data directory") {
  TempDir dir("cli");
  const auto r = cli({"simulate", "--scenario", "S4", "--out", (dir / "d").string()});
  CHECK(r.code == 0);
  for (const char* f : {"longitudinal.csv", "survival.csv", "truth.json", "config.json",
                        "manifest_simulate.json"}) {
    CHECK(std::filesystem::exists(dir / "d" / f));
  }
  const auto cfg = load_config(dir / "d" / "config.json");
  CHECK(load_cohort(cfg).size() == 5);
}

TEST_CASE("fit is byte-identical across runs with fixed seeds") {
  TempDir dir("cli");
  const auto cfg = prepare_s4(dir, {{"preset", "smoke"}, {"chains", 2}, {"seed", 5}});
  const auto a = cli({"fit", "--config", cfg.string(), "--out", (dir / "a").string()});
  const auto b = cli({"fit", "--config", cfg.string(), "--out", (dir / "b").string()});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto pa = read_file(dir / "a" / "posterior.csv");
  CHECK(pa.size() > 1000);
  CHECK(pa == read_file(dir / "b" / "posterior.csv"));
  const auto diag = read_json(dir / "a" / "diagnostics.json");
  CHECK(diag.contains("dic"));
  CHECK(diag.at("model").at("association") == "common");
  CHECK(std::filesystem::exists(dir / "a" / "manifest_fit.json"));

  // a different seed changes the draws
  const auto c = cli({"fit", "--config", cfg.string(), "--seed", "6", "--out", (dir / "c").string()});
  REQUIRE(c.code == 0);
  CHECK(read_file(dir / "c" / "posterior.csv") != pa);

  // diagnose re-reads the posterior
  const auto d = cli({"diagnose", "--config", cfg.string(), "--posterior",
                      (dir / "a" / "posterior.csv").string(), "--out", (dir / "d").string()});
  CHECK(d.code == 0);
  CHECK(read_json(dir / "d" / "diagnostics.json").at("dic").at("dic") == diag.at("dic").at("dic"));
}

TEST_CASE("input errors exit with status 2 and name the problem") {
  TempDir dir("cli");
  write_file(dir / "s.csv", "patient_id,os_time_months,event,tumour_group\nP1,3,1,lung\n");
  write_file(dir / "c.json", R"({"data": {"longitudinal": "nope.csv", "survival": "s.csv"}})");
  const auto r = cli({"fit", "--config", (dir / "c.json").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("nope.csv") != std::string::npos);
  CHECK(nlohmann::json::parse(r.err).at("error").at("type") == "InputError");

  CHECK(cli({"simulate", "--scenario", "S7", "--out", (dir / "x").string()}).code == 2);
  CHECK(cli({"fit", "--association", "shared"}).code == 2);
  CHECK(cli({"bogus"}).code == 2);
  CHECK(cli({}).code == 2);
}

TEST_CASE("extrapolate with too few draws exits with status 3") {
  TempDir dir("cli");
  const auto cfg = prepare_s4(dir, {{"chains", 1}, {"burn_in", 20}, {"iterations", 30}});
  REQUIRE(cli({"fit", "--config", cfg.string(), "--out", (dir / "f").string()}).code == 0);
  const auto r = cli({"extrapolate", "--config", cfg.string(), "--posterior",
                      (dir / "f" / "posterior.csv").string(), "--out", (dir / "e").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("NumericalError") != std::string::npos);
}

TEST_CASE("extrapolate emits summaries for every scope and landmark") {
  TempDir dir("cli");
  const auto cfg_path = prepare_s4(dir, {{"chains", 2}, {"burn_in", 200}, {"iterations", 400}});
  auto cfg = read_json(cfg_path);
  cfg["extrapolation"] = {{"landmarks_months", {60, 120}}, {"bootstrap", 100}};
  write_json(cfg_path, cfg);
  REQUIRE(cli({"fit", "--config", cfg_path.string(), "--out", (dir / "f").string()}).code == 0);
  const auto r = cli({"extrapolate", "--config", cfg_path.string(), "--posterior",
                      (dir / "f" / "posterior.csv").string(), "--out", (dir / "e").string()});
  REQUIRE(r.code == 0);
  const auto s = read_json(dir / "e" / "extrapolation_summary.json");
  REQUIRE(s.at("joint").size() == 6);
  CHECK(s.at("joint")[0].at("scope") == "overall");
  for (const auto& scope : s.at("joint")) CHECK(scope.at("landmarks").size() == 2);
  CHECK(std::filesystem::exists(dir / "e" / "curves_joint.csv"));
  const auto errors =
      schema::validate(s, read_json(std::filesystem::path(JMSURV_SCHEMA_DIR) /
                                    "extrapolation_summary.schema.json"));
  for (const auto& e : errors) FAIL_CHECK(e);
  // five patients, one per group: some groups have no deaths, so no comparator
  CHECK(s.at("weibull").is_null());
  CHECK(s.at("weibull_fit").contains("error"));
  CHECK(r.out.find("Weibull comparator unavailable") != std::string::npos);
}

TEST_CASE("km writes curves and observed RMST") {
  TempDir dir("cli");
  const auto cfg = prepare_s4(dir, {{"preset", "smoke"}});
  const auto r = cli({"km", "--config", cfg.string(), "--out", (dir / "k").string()});
  REQUIRE(r.code == 0);
  CHECK(std::filesystem::exists(dir / "k" / "km.csv"));
  const auto j = read_json(dir / "k" / "observed_rmst.json");
  CHECK(j.dump().find("estimate") != std::string::npos);
}

TEST_CASE("compare flags the lowest DIC") {
  TempDir dir("cli");
  write_diag(dir / "common.json", "common", 16265);
  write_diag(dir / "exch.json", "exchangeable", 15974);
  write_diag(dir / "ind.json", "independent", 16018);
  const auto r = cli({"compare", (dir / "common.json").string(), (dir / "exch.json").string(),
                      (dir / "ind.json").string(), "--out", (dir / "o").string()});
  REQUIRE(r.code == 0);
  const auto models = read_json(dir / "o" / "compare.json").at("models");
  CHECK(models[1].at("best") == true);
  CHECK(models[0].at("best") == false);
  CHECK(models[2].at("best") == false);
  CHECK(r.out.find("exchangeable/current") != std::string::npos);

  CHECK(cli({"compare", (dir / "common.json").string(), "--out", (dir / "o").string()}).code == 2);

  write_diag(dir / "tie.json", "independent", 15974);
  REQUIRE(cli({"compare", (dir / "exch.json").string(), (dir / "tie.json").string(), "--out",
               (dir / "t").string()})
              .code == 0);
  const auto tied = read_json(dir / "t" / "compare.json").at("models");
  CHECK(tied[0].at("tie") == true);
  CHECK(tied[1].at("tie") == true);

  write_diag(dir / "other.json", "common", 1, "zzz");
  CHECK(cli({"compare", (dir / "exch.json").string(), (dir / "other.json").string(), "--out",
             (dir / "x").string()})
            .code == 2);
}

TEST_CASE("the installed executable maps errors to exit codes") {
  TempDir dir("cli");
  const std::string cmd = std::string(JMSURV_CLI) + " simulate --scenario S9 --out " +
                          (dir / "x").string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
  const std::string ok = std::string(JMSURV_CLI) + " --help >/dev/null";
  CHECK(WEXITSTATUS(std::system(ok.c_str())) == 0);
}
