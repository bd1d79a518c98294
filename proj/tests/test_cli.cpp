#include "capcrl/commands.hpp"

#include "capcrl/csv.hpp"
#include "capcrl/io.hpp"
#include "capcrl/rng.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

using namespace capcrl;
namespace fs = std::filesystem;

namespace {
/// Fresh directory under the system temp dir, removed on scope exit.
class ScratchDir {
public:
  explicit ScratchDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("capcrl-test-" + tag + "-" + std::to_string(++counter));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
  fs::path path_;
};

struct RunResult {
  int code;
  std::string log;
};

RunResult run(const std::string& command, Json config, const fs::path& out, std::uint64_t seed = 0) {
  std::ostringstream log;
  const int code = run_command({command, std::move(config), seed, out}, log);
  return {code, log.str()};
}

Json report(const fs::path& dir, const std::string& name) { return read_json_file(dir / name); }

std::size_t file_count(const fs::path& dir) {
  if (!fs::exists(dir)) return 0;
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) ++n;
  return n;
}
}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config resolution rejects unknown keys and overlays nested objects") {
    const Json c = resolve_config("pipeline", {{"ica", {{"restarts", 2}}}});
    CHECK(c["ica"]["restarts"] == 2);
    CHECK(c["ica"]["max_iter"] == 500);
    CHECK_THROWS_AS(resolve_config("pipeline", {{"bogus", 1}}), Error);
    CHECK_THROWS_AS(resolve_config("pipeline", {{"ica", {{"bogus", 1}}}}), Error);
    CHECK_THROWS_AS(command_defaults("nope"), Error);
    CHECK(command_names().size() == 8);
    CHECK(exit_code(ErrorKind::Input) == 2);
    CHECK(exit_code(ErrorKind::Numerical) == 3);
    CHECK(exit_code(ErrorKind::NoSolution) == 4);
  }

  TEST_CASE("simulate writes K domain files of the requested shape plus the truth") {
    ScratchDir dir("sim");
    REQUIRE(run("simulate", {{"samples", 500}}, dir.path(), 1).code == 0);
    const DomainCollection c = load_bundle(dir.path());
    REQUIRE(c.domains.size() == 4);
    for (const auto& d : c.domains) {
      CHECK(d.observations.rows() == 500);
      CHECK(d.observations.cols() == 6);
    }
    const Json truth = report(dir.path(), "truth.json");
    CHECK(truth["latent_dim"] == 3);
    CHECK(truth["mixing"].size() == 6);
    const Json rep = report(dir.path(), "simulate.json");
    CHECK(rep["seed"] == 1);
    CHECK(rep["config"]["samples"] == 500);
    CHECK(rep.contains("run"));
  }

  TEST_CASE("repeated runs with one seed are byte-identical") {
    ScratchDir a("rep-a"), b("rep-b");
    REQUIRE(run("simulate", {{"samples", 300}}, a.path(), 9).code == 0);
    REQUIRE(run("simulate", {{"samples", 300}}, b.path(), 9).code == 0);
    for (const auto& e : fs::directory_iterator(a.path())) {
      const std::string name = e.path().filename().string();
      if (name == "simulate.json") {
        CHECK(report_payload(report(a.path(), name)) == report_payload(report(b.path(), name)));
      } else {
        CHECK(read_text_file(e.path()) == read_text_file(b / name));
      }
    }
    ScratchDir c("rep-c");
    REQUIRE(run("simulate", {{"samples", 300}}, c.path(), 10).code == 0);
    CHECK(read_text_file(a / "domain_1.csv") != read_text_file(c / "domain_1.csv"));
  }

  TEST_CASE("inexact simulation records U and alpha") {
    ScratchDir dir("inexact");
    REQUIRE(run("simulate", {{"samples", 200}, {"alpha", 0.1}}, dir.path(), 2).code == 0);
    const Json truth = report(dir.path(), "truth.json");
    for (const auto& d : truth["domains"]) {
      CHECK(d["alpha"].get<double>() == doctest::Approx(0.1));
      CHECK(d["entanglement"].size() == 3);
    }
  }

  TEST_CASE("pipeline on an exact bundle reports a vanishing MIC") {
    ScratchDir data("pipe-data"), out("pipe-out");
    REQUIRE(run("simulate", {{"samples", 2000}}, data.path(), 3).code == 0);
    const auto r = run("pipeline", {{"data", data.path().string()}, {"unmixing_source", "truth"}}, out.path(), 3);
    REQUIRE(r.code == 0);
    const Json sol = report(out.path(), "solution.json");
    CHECK(sol.at("result").at("solution").at("mic").get<double>() < 1e-6);
    CHECK(fs::exists(out / "r2.csv"));
    CHECK(fs::exists(out / "summary.txt"));
    CHECK(fs::exists(out / "graphs/domain_1.dot"));
    CHECK(read_text_file(out / "summary.txt").find("mic = ") != std::string::npos);
  }

  TEST_CASE("strict mode warns when K < d0 and still runs") {
    ScratchDir data("strict-data"), out("strict-out");
    REQUIRE(run("simulate", {{"samples", 2000}, {"domains", 2}}, data.path(), 4).code == 0);
    const auto r = run("pipeline", {{"data", data.path().string()}, {"strict", true}, {"unmixing_source", "truth"}},
                       out.path(), 4);
    REQUIRE(r.code == 0);
    CHECK(r.log.find("warning") != std::string::npos);
    const Json sol = report(out.path(), "solution.json");
    REQUIRE(sol["warnings"].size() >= 1);
  }

  TEST_CASE("missing data directory fails without partial outputs") {
    ScratchDir out("missing");
    const fs::path target = out / "run";
    const auto r = run("pipeline", {{"data", (out / "nowhere").string()}}, target);
    CHECK(r.code == 2);
    CHECK(r.log.find("error") != std::string::npos);
    CHECK(file_count(target) == 0);
    CHECK_FALSE(fs::exists(target));
  }

  TEST_CASE("pca on two identical domains gives zero distance") {
    ScratchDir data("pca-data"), out("pca-out");
    Rng rng(5);
    MatrixXd x(100, 4);
    for (Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    DomainCollection c;
    c.benchmarks = {"a", "b", "c", "d"};
    c.domains = {{"first", x, std::nullopt}, {"second", x, std::nullopt}};
    write_bundle(data.path(), c);
    REQUIRE(run("pca", {{"data", data.path().string()}, {"rank", 2}}, out.path()).code == 0);
    const Json rep = report(out.path(), "pca.json");
    CHECK(rep["result"]["distances"][0][1].get<double>() < 1e-10);
    CHECK(fs::exists(out / "distances.csv"));
  }

  TEST_CASE("complete with nothing hidden has zero RMSE") {
    ScratchDir data("comp-data"), out("comp-out");
    REQUIRE(run("simulate", {{"samples", 60}, {"domains", 2}}, data.path(), 6).code == 0);
    REQUIRE(run("complete", {{"data", data.path().string()}, {"p", 0.0}, {"repeats", 2}}, out.path(), 6).code == 0);
    const Json rep = report(out.path(), "completion.json");
    CHECK(rep["result"]["global"]["mean"] == 0.0);
    CHECK(rep["result"]["local"]["mean"] == 0.0);
    CHECK(rep["result"]["target"] == "domain_1");
    CHECK(rep["result"]["pattern"] == "random");
    CHECK(rep["result"]["p"] == 0.0);
    CHECK(read_csv(out / "mask_repeat0.csv").rows.size() == 60);
  }

  TEST_CASE("scaling recovers a synthetic sigmoid within 1%") {
    ScratchDir data("scal-data"), out("scal-out");
    Rng rng(7);
    std::string csv = "compute,treatment,score\n";
    for (int i = 0; i < 120; ++i) {
      const double logc = rng.uniform(std::log(1e21), std::log(1e25));
      const double t = i % 2;
      const double y = 0.55 / (1.0 + std::exp(-1.2 * (logc - std::log(2e23)))) + 0.04 * t + 0.12;
      csv += csv_line({format_number(std::exp(logc)), format_number(t), format_number(y)});
    }
    write_text_file(data / "scores.csv", csv);
    REQUIRE(run("scaling", {{"input", (data / "scores.csv").string()}}, out.path()).code == 0);
    const Json fit = report(out.path(), "scaling.json")["result"]["fits"][0]["fit"];
    CHECK(fit["L"].get<double>() == doctest::Approx(0.55).epsilon(0.01));
    CHECK(fit["k"].get<double>() == doctest::Approx(1.2).epsilon(0.01));
    CHECK(fit["c0"].get<double>() == doctest::Approx(2e23).epsilon(0.01));
    CHECK(fit["b"].get<double>() == doctest::Approx(0.12).epsilon(0.01));
    CHECK(fit["tau"].get<double>() == doctest::Approx(0.04).epsilon(0.01));
  }

  TEST_CASE("ingest of the golden leaderboard writes a bundle and the attribution table") {
    ScratchDir out("ingest");
    const auto r = run("ingest", {{"input", std::string(CAPCRL_TEST_DATA) + "/golden_leaderboard.csv"}}, out.path());
    REQUIRE(r.code == 0);
    const Json rep = report(out.path(), "ingest_report.json");
    CHECK(rep["result"]["rows"] == 20);
    CHECK(rep["result"]["unattributed"] == 3);
    CHECK(rep["result"]["rescaled"] == true);
    const CsvTable table = read_csv(out / "attributions.csv");
    CHECK(table.rows.size() == 20);
    const DomainCollection c = load_bundle(out.path());
    CHECK(c.domains.front().id == "Gemma-2-27B");
  }

  TEST_CASE("executable: version, bad flags and exit codes") {
    const std::string cli = CAPCRL_CLI;
    CHECK(std::system((cli + " --version > /dev/null").c_str()) == 0);
    ScratchDir out("exe");
    const std::string missing = cli + " --out " + (out / "x").string() + " pipeline --data " +
                                (out / "nowhere").string() + " 2> /dev/null";
    const int status = std::system(missing.c_str());
    CHECK(WEXITSTATUS(status) == 2);
    const int unknown = std::system((cli + " frobnicate 2> /dev/null > /dev/null").c_str());
    CHECK(WEXITSTATUS(unknown) != 0);
    const std::string sim = cli + " --seed 5 --out " + (out / "sim").string() +
                            " simulate --samples 100 --set domains=2 2> /dev/null";
    REQUIRE(std::system(sim.c_str()) == 0);
    const Json rep = read_json_file(out / "sim/simulate.json");
    CHECK(rep["seed"] == 5);
    CHECK(rep["config"]["domains"] == 2);
    CHECK(rep["config"]["samples"] == 100);
  }
}
