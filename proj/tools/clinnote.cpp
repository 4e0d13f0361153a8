#include <chrono>
#include <iostream>

#include "CLI11.hpp"

#include "clinnote/pipeline.hpp"

namespace pl = clinnote::pipeline;

namespace {

void report(const pl::StageResult& r, double seconds) {
  std::cout << pl::to_string(r.stage) << ": " << (r.skipped ? "up to date" : "done");
  if (!r.skipped) std::cout << " in " << seconds << " s " << r.entry.value("summary", nlohmann::json::object()).dump();
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clinical note extraction and analysis pipeline"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  bool mock = false;
  std::optional<std::uint64_t> seed;

  std::vector<std::string> names = {"run-all"};
  for (auto s : pl::kAllStages) names.emplace_back(pl::to_string(s));
  std::vector<CLI::App*> subs;
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name, name == "run-all" ? "Run every stage in order" : "Run one stage");
    sub->add_option("--config", config_path, "Path to config.json")->required();
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_flag("--mock", mock, "Use the offline mock backend and transcript");
    sub->add_option("--seed", seed, "Override the configured seed");
    subs.push_back(sub);
  }
  auto* validate = app.add_subcommand("validate-config", "Check a config file and print the effective config");
  validate->add_option("--config", config_path, "Path to config.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? pl::kExitOk : pl::kExitConfig;
  }

  try {
    auto config = pl::validate_config(config_path);
    if (validate->parsed()) {
      std::cout << config.effective.dump(2) << "\n";
      return pl::kExitOk;
    }
    pl::Pipeline pipeline(std::move(config), out_dir, {mock, seed});
    const std::string chosen = app.get_subcommands().front()->get_name();
    auto timed = [&](pl::Stage s) {
      const auto t0 = std::chrono::steady_clock::now();
      auto r = pipeline.run_stage(s);
      report(r, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    };
    if (chosen == "run-all") {
      for (auto s : pl::kAllStages) timed(s);
    } else {
      timed(*pl::stage_from_string(chosen));
    }
    return pl::kExitOk;
  } catch (const clinnote::ConfigError& e) {
    std::cerr << "config error: " << e.message() << "\n";
    return pl::kExitConfig;
  } catch (const pl::DependencyMissing& e) {
    std::cerr << "missing dependency: " << e.message() << "\n";
    return pl::kExitDependency;
  } catch (const clinnote::Error& e) {
    std::cerr << "stage failed: " << e.what() << "\n";
    return pl::kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "stage failed: " << e.what() << "\n";
    return pl::kExitStage;
  }
}
