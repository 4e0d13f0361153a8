#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "clinnote/pipeline.hpp"
#include "support.hpp"

using namespace clinnote;
using namespace clinnote::pipeline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fixture_config() { return testing::data_dir() / "pipeline" / "config.json"; }

PipelineConfig fixture() { return validate_config(fixture_config()); }

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + CLINNOTE_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> report_hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename() != kManifestName) out[e.path().filename().string()] = sha256_hex(read_file(e.path()));
  return out;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("stage names and the dependency graph") {
    for (Stage s : kAllStages) CHECK(stage_from_string(to_string(s)) == s);
    CHECK(stage_from_string("evaluate-fidelity") == Stage::evaluate_fidelity);
    CHECK_FALSE(stage_from_string("train"));
    CHECK(dependencies(Stage::ingest).empty());
    CHECK(dependencies(Stage::extract) == std::vector<Stage>{Stage::ingest});
    CHECK(dependencies(Stage::associate) == std::vector<Stage>{Stage::canonicalize, Stage::normalize});
    CHECK(dependencies(Stage::predict) == std::vector<Stage>{Stage::summarize, Stage::extract});
    // every dependency appears earlier in the run order
    for (size_t i = 0; i < kAllStages.size(); ++i)
      for (Stage d : dependencies(kAllStages[i]))
        CHECK(std::find(kAllStages.begin(), kAllStages.begin() + static_cast<long>(i), d) != kAllStages.begin() + static_cast<long>(i));
    for (Stage s : kAllStages) CHECK_FALSE(stage_outputs(s).empty());
  }

  TEST_CASE("configuration defaults, types and names") {
    const auto c = fixture();
    CHECK(c.seed == 7);
    CHECK(c.folds == 5);
    CHECK(c.k_medoids == 200);
    CHECK(c.admissions.is_absolute());
    CHECK(fs::exists(c.icd9_descriptions));
    CHECK(c.hash.size() == 64);
    CHECK(c.effective.contains("llm"));
    CHECK(fixture().hash == c.hash);

    const fs::path base = testing::data_dir() / "pipeline";
    CHECK_THROWS_AS(config_from_json({{"bogus", 1}}, base), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"folds", "five"}}, base), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"folds", 1}}, base), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"llm", {{"bogus", true}}}}, base), ConfigError);
    try {
      config_from_json({{"data", {{"nope", "x"}}}}, base);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.message().find("data.nope") != std::string::npos);
    }
    CHECK(config_from_json({{"seed", 8}}, base).hash != config_from_json({{"seed", 7}}, base).hash);
    for (const auto& [key, value] : default_config().items()) CHECK_FALSE(key.empty());

    testing::TempDir tmp("cfg");
    write_text(tmp / "bad.json", "{ not json");
    CHECK_THROWS_AS(validate_config(tmp / "bad.json"), ConfigError);
    CHECK_THROWS_AS(validate_config(tmp / "missing.json"), ConfigError);
  }

  TEST_CASE("a stage without its prerequisites reports the missing stage") {
    testing::TempDir out("dep");
    Pipeline p(fixture(), out.path(), {true, std::nullopt});
    try {
      p.run_stage(Stage::extract);
      FAIL("expected DependencyMissing");
    } catch (const DependencyMissing& e) {
      CHECK(e.stage() == "ingest");
    }
    CHECK_THROWS_AS(p.run_stage(Stage::associate), DependencyMissing);
  }

  TEST_CASE("live mode needs the key variable") {
    testing::TempDir out("live");
    auto c = fixture();
    c.api_key_env = "CLINNOTE_TEST_KEY_THAT_IS_NOT_SET";
    ::unsetenv(c.api_key_env.c_str());
    Pipeline p(c, out.path(), {false, std::nullopt});
    p.run_stage(Stage::ingest);
    CHECK_THROWS_AS(p.run_stage(Stage::extract), ConfigError);
  }

  TEST_CASE("mock run: outputs, manifest, idempotence and invalidation") {
    testing::TempDir out("run");
    Pipeline p(fixture(), out.path(), {true, std::nullopt});
    const auto results = p.run_all();
    REQUIRE(results.size() == kAllStages.size());
    for (const auto& r : results) CHECK_FALSE(r.skipped);
    for (Stage s : kAllStages)
      for (const auto& f : stage_outputs(s)) CHECK_MESSAGE(fs::exists(out / f), f);

    const json m = json::parse(read_file(out / kManifestName));
    CHECK(m["mock"] == true);
    CHECK(m["seed"] == 7);
    CHECK(m["config_sha256"] == p.config().hash);
    for (Stage s : kAllStages) {
      const auto& e = m["stages"][std::string(to_string(s))];
      CHECK(e.contains("inputs_sha256"));
      for (const auto& [name, hash] : e["outputs"].items()) CHECK(hash == sha256_hex(read_file(out / name)));
    }
    CHECK(m["files"].size() == report_hashes(out.path()).size());
    for (const auto& [name, hash] : report_hashes(out.path())) CHECK(m["files"][name] == hash);

    const auto cohort = json::parse(read_file(out / "cohort_summary.json"));
    CHECK(cohort["cohort"]["n_pairs"] == 14);
    CHECK(cohort["cohort"]["n_patients"] == 6);
    CHECK(cohort["cohort"]["readmission_rate"].get<double>() == doctest::Approx(8.0 / 14.0));
    const auto summary = json::parse(read_file(out / "summary_report.json"));
    CHECK(summary["no_number"]["accepted_with_digits"] == 0);
    CHECK(summary["no_number"].contains("violation_rate"));

    // unchanged inputs: every stage is skipped
    Pipeline again(fixture(), out.path(), {true, std::nullopt});
    for (const auto& r : again.run_all()) CHECK(r.skipped);

    // a changed upstream file re-runs its consumers
    write_text(out / "canonical_vitals.csv", read_file(out / "canonical_vitals.csv") + "\n");
    CHECK_FALSE(again.run_stage(Stage::evaluate_fidelity).skipped);
    CHECK(again.run_stage(Stage::summarize).skipped);

    // a seed override changes the configuration hash and re-runs
    Pipeline reseeded(fixture(), out.path(), {true, 8});
    CHECK(reseeded.config().seed == 8);
    CHECK_FALSE(reseeded.run_stage(Stage::ingest).skipped);
  }

  TEST_CASE("two mock runs produce identical reports") {
    testing::TempDir a("det-a"), b("det-b");
    Pipeline(fixture(), a.path(), {true, std::nullopt}).run_all();
    Pipeline(fixture(), b.path(), {true, std::nullopt}).run_all();
    CHECK(report_hashes(a.path()) == report_hashes(b.path()));
  }

  TEST_CASE("command-line exit codes") {
    testing::TempDir tmp("cli");
    const std::string cfg = "--config \"" + fixture_config().string() + "\"";
    const std::string out = "--out \"" + (tmp / "out").string() + "\"";
    CHECK(cli("validate-config " + cfg, tmp / "log") == kExitOk);
    write_text(tmp / "bad.json", R"({"folds": "five"})");
    CHECK(cli("validate-config --config \"" + (tmp / "bad.json").string() + "\"", tmp / "log") == kExitConfig);
    CHECK(read_file(tmp / "log").find("folds") != std::string::npos);
    write_text(tmp / "unknown.json", R"({"bogus": 1})");
    CHECK(cli("validate-config --config \"" + (tmp / "unknown.json").string() + "\"", tmp / "log") == kExitConfig);
    CHECK(cli("extract --mock " + cfg + " " + out, tmp / "log") == kExitDependency);
    CHECK(cli("ingest --mock " + cfg + " " + out, tmp / "log") == kExitOk);
    CHECK(cli("ingest --mock " + cfg + " " + out, tmp / "log") == kExitOk);
    CHECK(read_file(tmp / "log").find("up to date") != std::string::npos);
    CHECK(cli("no-such-command", tmp / "log") == kExitConfig);
  }
}
