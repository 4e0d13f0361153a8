#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "clinnote/common.hpp"
#include "clinnote/gateway.hpp"
#include "clinnote/prompts.hpp"

namespace clinnote::pipeline {

class DependencyMissing : public Error {
 public:
  DependencyMissing(const std::string& stage, const std::string& detail)
      : Error("DependencyMissing", stage + " (" + detail + ")"), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

class StageFailed : public Error {
 public:
  explicit StageFailed(const std::string& what) : Error("StageFailed", what) {}
};

enum class Stage { ingest, extract, canonicalize, normalize, evaluate_fidelity, associate, summarize, predict };
inline constexpr std::array<Stage, 8> kAllStages = {Stage::ingest,    Stage::extract,           Stage::canonicalize,
                                                    Stage::normalize, Stage::evaluate_fidelity, Stage::associate,
                                                    Stage::summarize, Stage::predict};

std::string_view to_string(Stage s);
std::optional<Stage> stage_from_string(std::string_view s);
// Direct prerequisites of a stage.
std::vector<Stage> dependencies(Stage s);
// Files a stage writes into the output directory.
std::vector<std::string> stage_outputs(Stage s);

struct AgentSettings {
  double temperature = 0.0;
  int max_tokens = 4096;
};

struct PipelineConfig {
  std::uint64_t seed = 7;
  int k_medoids = 200;
  int folds = 5;
  double l2_lambda = 1.0;
  bool standardize = true;
  bool judge_macro_average = false;

  std::filesystem::path admissions, diagnoses, notes;
  std::filesystem::path truth_vitals, truth_sdoh, icd9_descriptions;
  std::filesystem::path prompts_dir;
  std::filesystem::path mock_transcript;

  std::vector<std::string> normalize_variables;
  std::vector<std::string> predict_variants;
  std::map<std::string, AgentSettings> agents;  // extractor, normalizer, labeler, judge, summarizer

  std::string endpoint_url;
  std::string api_key_env;
  std::string chat_model;
  std::string embed_model;
  int max_concurrency = 4;
  int max_retries = 3;
  int backoff_ms = 500;
  int timeout_s = 300;
  std::filesystem::path cache_path;  // empty: no response cache

  nlohmann::json effective;  // fully defaulted config, paths resolved
  std::string hash;          // SHA-256 of effective.dump()
};

// Default configuration document; every accepted key appears here.
const nlohmann::json& default_config();

// Applies defaults and checks types, ranges and names. Relative paths are
// resolved against `base_dir`. Throws ConfigError naming the key path.
PipelineConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
PipelineConfig validate_config(const std::filesystem::path& path);

struct RunOptions {
  bool mock = false;
  std::optional<std::uint64_t> seed;  // overrides the config
};

struct StageResult {
  Stage stage;
  bool skipped = false;  // inputs unchanged since the recorded run
  nlohmann::json entry;  // manifest entry
};

inline constexpr const char* kManifestName = "manifest.json";

class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::filesystem::path out_dir, RunOptions options);

  // Throws DependencyMissing when a prerequisite has not produced its
  // outputs, StageFailed (or a module error) when the stage itself fails.
  StageResult run_stage(Stage stage);
  std::vector<StageResult> run_all();

  const PipelineConfig& config() const { return config_; }
  const std::filesystem::path& out_dir() const { return out_; }
  nlohmann::json manifest() const;

 private:
  llm::Gateway& gateway();
  std::filesystem::path out(const std::string& name) const { return out_ / name; }
  std::string input_fingerprint(Stage stage) const;
  void write(const std::string& name, std::string_view content, std::map<std::string, std::string>& hashes);
  void write_manifest(const nlohmann::json& manifest) const;

  nlohmann::json run_ingest(std::map<std::string, std::string>& hashes);
  nlohmann::json run_extract(std::map<std::string, std::string>& hashes);
  nlohmann::json run_canonicalize(std::map<std::string, std::string>& hashes);
  nlohmann::json run_normalize(std::map<std::string, std::string>& hashes);
  nlohmann::json run_evaluate_fidelity(std::map<std::string, std::string>& hashes);
  nlohmann::json run_associate(std::map<std::string, std::string>& hashes);
  nlohmann::json run_summarize(std::map<std::string, std::string>& hashes);
  nlohmann::json run_predict(std::map<std::string, std::string>& hashes);

  PipelineConfig config_;
  std::filesystem::path out_;
  RunOptions options_;
  PromptSet prompts_;
  std::unique_ptr<llm::Gateway> gateway_;
};

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDependency = 3;
inline constexpr int kExitStage = 4;

}  // namespace clinnote::pipeline
