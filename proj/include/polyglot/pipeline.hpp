#pragma once

// End-to-end run orchestration.
//
// Stages run in the order seed, generate, intrinsic, extrinsic, pgscore,
// analyze, report. Each stage records an input hash and the content hashes of
// the artifacts it wrote; a stage whose input hash is unchanged and whose
// artifacts still verify is skipped. Output layout:
//
//   <output_dir>/<run_id>/datasets/   seed corpus and generated datasets
//   <output_dir>/<run_id>/metrics/    intrinsic records and judge audit logs
//   <output_dir>/<run_id>/scores/     benchmark scores, extrinsic and PG-Score records
//   <output_dir>/<run_id>/reports/    analysis results and CSV / text reports
//   <output_dir>/<run_id>/manifest/   manifest.json

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyglot/analysis.hpp"
#include "polyglot/generation.hpp"
#include "polyglot/inference_client.hpp"

namespace polyglot {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct TeacherConfig {
  ModelEndpoint endpoint;
  std::optional<double> param_size_b;
  std::optional<double> multilingual_perf;

  const std::string& id() const { return endpoint.model; }
};

struct SeedFile {
  std::filesystem::path path;
  std::optional<std::string> language;
};

struct LanguageProperty {
  std::string name;
  std::map<std::string, double> values;
  LanguageAggregate aggregate = LanguageAggregate::Median;
};

struct RunConfig {
  std::string run_id;
  std::vector<TeacherConfig> teachers;
  ModelEndpoint base_model;
  ModelEndpoint embedder;
  ModelEndpoint judge;
  std::vector<std::string> languages;
  std::vector<SeedFile> seed_files;
  std::size_t n = 10500;
  MethodMix mix;
  std::size_t k = 3;
  double alpha = 0.5;
  std::vector<double> alpha_grid = kDefaultAlphaGrid;
  std::uint64_t run_seed = 0;
  int trials = 1;
  std::optional<std::filesystem::path> scores_file;
  std::optional<std::vector<std::string>> benchmarks;
  std::size_t pair_budget = kDefaultPairBudget;
  std::optional<std::size_t> judge_sample;
  double coverage_floor = 0.95;
  double pc_split = 0.8;
  std::optional<LanguageProperty> language_property;
  std::filesystem::path cache_dir;
  std::filesystem::path output_dir;
  bool offline = false;
  int global_concurrency = 16;
  int per_endpoint_concurrency = 8;
  std::size_t workers = 8;

  /// Throws ValidationError for an invalid or inconsistent configuration.
  void validate() const;
  /// SHA-256 of the canonical configuration, excluding output, cache and
  /// offline settings.
  std::string hash() const;
  nlohmann::json to_json() const;

  /// Parses a JSON config. Relative paths are resolved against `base_dir`.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
};

ModelEndpoint endpoint_from_json(const nlohmann::json& j);
nlohmann::json endpoint_to_json(const ModelEndpoint& endpoint);

enum class Stage { Seed, Generate, Intrinsic, Extrinsic, PgScore, Analyze, Report };

inline constexpr Stage kAllStages[] = {Stage::Seed,    Stage::Generate, Stage::Intrinsic,
                                       Stage::Extrinsic, Stage::PgScore, Stage::Analyze,
                                       Stage::Report};

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view name);

struct StageRecord {
  std::string status;  // "complete", "skipped" or "failed"
  std::string input_hash;
  std::map<std::string, std::string> artifacts;  // relative path -> sha256
  std::vector<std::string> notes;

  bool operator==(const StageRecord&) const = default;
};

struct RunManifest {
  std::string tool_version;
  std::string run_id;
  std::string config_hash;
  std::map<std::string, std::string> template_versions;
  std::map<std::string, StageRecord> stages;

  bool complete(Stage s) const;
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  /// Checks every artifact of every complete stage against its hash.
  /// Throws PipelineError naming the first mismatch.
  void verify(const std::filesystem::path& run_dir) const;
};

RunManifest load_manifest(const std::filesystem::path& run_dir);

class Pipeline {
 public:
  explicit Pipeline(RunConfig config,
                    std::shared_ptr<Transport> transport = make_http_transport());

  /// Runs every stage in order, skipping up-to-date ones. Stages after
  /// extrinsic are left out when no scores file is configured.
  RunManifest run();
  /// Runs one stage. Throws PipelineError when a prerequisite is incomplete.
  void run_stage(Stage stage);

  const RunManifest& manifest() const noexcept { return manifest_; }
  const RunConfig& config() const noexcept { return config_; }
  std::filesystem::path run_dir() const;
  ClientStats client_stats() const { return client_->stats(); }
  /// Stages executed (not skipped) by this Pipeline object.
  const std::vector<Stage>& executed() const noexcept { return executed_; }

 private:
  std::string stage_input_hash(Stage stage) const;
  bool up_to_date(Stage stage, const std::string& input_hash) const;
  std::map<std::string, std::string> execute(Stage stage, std::vector<std::string>& notes);
  void save_manifest() const;
  std::string hash_artifact(const std::string& rel) const;

  std::map<std::string, std::string> do_seed(std::vector<std::string>& notes);
  std::map<std::string, std::string> do_generate(std::vector<std::string>& notes);
  std::map<std::string, std::string> do_intrinsic(std::vector<std::string>& notes);
  std::map<std::string, std::string> do_extrinsic(std::vector<std::string>& notes);
  std::map<std::string, std::string> do_pgscore(std::vector<std::string>& notes);
  std::map<std::string, std::string> do_analyze(std::vector<std::string>& notes);
  std::map<std::string, std::string> do_report(std::vector<std::string>& notes);

  RunConfig config_;
  std::unique_ptr<InferenceClient> client_;
  RunManifest manifest_;
  std::vector<Stage> executed_;
};

/// Relative dataset path for one (teacher, language, trial).
std::string dataset_relpath(const std::string& teacher, const std::string& language, int trial);

/// Seed for the dataset of one language in one trial. Every teacher in the
/// cohort receives the same seed, so they see the same seed-example draws.
std::uint64_t dataset_seed(std::uint64_t run_seed, int trial, const std::string& language);

}  // namespace polyglot
