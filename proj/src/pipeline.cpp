#include "polyglot/pipeline.hpp"

#include <algorithm>
#include <set>

#include "polyglot/error.hpp"
#include "polyglot/extrinsic.hpp"
#include "polyglot/intrinsic.hpp"
#include "polyglot/languages.hpp"
#include "polyglot/reports.hpp"
#include "polyglot/rng.hpp"
#include "polyglot/scoring.hpp"
#include "polyglot/seed_corpus.hpp"
#include "polyglot/util.hpp"

namespace polyglot {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSeedCorpusRel = "datasets/seed_corpus.jsonl";
constexpr const char* kIntrinsicRel = "metrics/intrinsic.jsonl";
constexpr const char* kBenchmarkRel = "scores/benchmark_scores.jsonl";
constexpr const char* kExtrinsicRel = "scores/extrinsic.jsonl";
constexpr const char* kPgScoreRel = "scores/pgscore.jsonl";
constexpr const char* kPgSummaryRel = "scores/pgscore_summary.jsonl";
constexpr const char* kAnalysisRel = "reports/analysis.json";
constexpr const char* kManifestRel = "manifest/manifest.json";

std::string slug(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '-' || c == '_';
    if (!ok) c = '_';
  }
  return out;
}

template <class T>
std::optional<T> opt(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::string jsonl(const std::vector<json>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l.dump();
    out += '\n';
  }
  return out;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  for (const auto& line : split(read_file(path), '\n')) {
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("invalid JSON line in " + path.string());
    out.push_back(std::move(j));
  }
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json fit_to_json(const RegressionFit& f) {
  return {{"method", f.method},         {"predictors", f.predictors}, {"beta", f.beta},
          {"se", f.se},                 {"p", f.p},                   {"df", f.df},
          {"r2", optional_json(f.r2)},  {"rmse", f.rmse},             {"train_keys", f.train_keys},
          {"test_keys", f.test_keys},   {"split_seed", f.split_seed}, {"notes", f.notes}};
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      row.push_back(std::isfinite(m(i, j)) ? json(m(i, j)) : json(nullptr));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

struct TrialRecord {
  int trial = 0;
  IntrinsicRecord record;
};

std::vector<TrialRecord> read_intrinsic(const fs::path& path) {
  std::vector<TrialRecord> out;
  for (const auto& j : read_jsonl(path)) out.push_back({j.at("trial").get<int>(), intrinsic_from_json(j)});
  return out;
}

}  // namespace

// ---- configuration -------------------------------------------------------

ModelEndpoint endpoint_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("endpoint must be an object");
  ModelEndpoint e;
  e.base_url = j.value("base_url", std::string());
  e.model = j.value("model", std::string());
  e.api_key_env = j.value("api_key_env", std::string());
  e.params.temperature = opt<double>(j, "temperature");
  e.params.top_p = opt<double>(j, "top_p");
  e.params.top_k = opt<int>(j, "top_k");
  e.params.max_seq_len = opt<int>(j, "max_seq_len");
  e.params.max_tokens = opt<int>(j, "max_tokens");
  return e;
}

json endpoint_to_json(const ModelEndpoint& e) {
  json j = {{"base_url", e.base_url}, {"model", e.model}};
  if (!e.api_key_env.empty()) j["api_key_env"] = e.api_key_env;
  if (e.params.temperature) j["temperature"] = *e.params.temperature;
  if (e.params.top_p) j["top_p"] = *e.params.top_p;
  if (e.params.top_k) j["top_k"] = *e.params.top_k;
  if (e.params.max_seq_len) j["max_seq_len"] = *e.params.max_seq_len;
  if (e.params.max_tokens) j["max_tokens"] = *e.params.max_tokens;
  return j;
}

void RunConfig::validate() const {
  if (teachers.empty()) throw ValidationError("config lists no teachers");
  std::set<std::string> ids;
  for (const auto& t : teachers) {
    polyglot::validate(t.endpoint);
    if (!ids.insert(t.id()).second) throw ValidationError("teacher listed twice: " + t.id());
  }
  polyglot::validate(base_model);
  polyglot::validate(embedder);
  polyglot::validate(judge);
  if (languages.empty()) throw ValidationError("config lists no languages");
  for (const auto& l : languages) require_language_name(l);
  if (std::set<std::string>(languages.begin(), languages.end()).size() != languages.size()) {
    throw ValidationError("language listed twice");
  }
  if (seed_files.empty()) throw ValidationError("config lists no seed files");
  if (n < 2) throw ValidationError("n must be at least 2");
  polyglot::validate(mix);
  if (k == 0) throw ValidationError("k must be at least 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (alpha_grid.size() < 2) throw ValidationError("alpha grid needs at least two values");
  for (double a : alpha_grid) {
    if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("alpha grid values must lie in [0, 1]");
  }
  if (trials < 1) throw ValidationError("trial count must be at least 1");
  if (!(coverage_floor >= 0.0 && coverage_floor <= 1.0)) {
    throw ValidationError("coverage floor must lie in [0, 1]");
  }
  if (!(pc_split > 0.0 && pc_split < 1.0)) throw ValidationError("pc_split must lie in (0, 1)");
  if (output_dir.empty()) throw ValidationError("output_dir is required");
  if (run_id.empty() || run_id.find('/') != std::string::npos) {
    throw ValidationError("run_id must be a non-empty directory name");
  }
}

json RunConfig::to_json() const {
  json teachers_json = json::array();
  for (const auto& t : teachers) {
    json tj = endpoint_to_json(t.endpoint);
    if (t.param_size_b) tj["param_size_b"] = *t.param_size_b;
    if (t.multilingual_perf) tj["multilingual_perf"] = *t.multilingual_perf;
    teachers_json.push_back(std::move(tj));
  }
  json seeds = json::array();
  for (const auto& s : seed_files) {
    json sj = {{"path", s.path.string()}};
    if (s.language) sj["language"] = *s.language;
    seeds.push_back(std::move(sj));
  }
  json j = {{"run_id", run_id},
            {"teachers", teachers_json},
            {"base_model", endpoint_to_json(base_model)},
            {"embedder", endpoint_to_json(embedder)},
            {"judge", endpoint_to_json(judge)},
            {"languages", languages},
            {"seed_files", seeds},
            {"n", n},
            {"mix", {{"generate", mix.generate}, {"translate", mix.translate}, {"respond", mix.respond}}},
            {"k", k},
            {"alpha", alpha},
            {"alpha_grid", alpha_grid},
            {"run_seed", run_seed},
            {"trials", trials},
            {"pair_budget", pair_budget},
            {"coverage_floor", coverage_floor},
            {"pc_split", pc_split},
            {"cache_dir", cache_dir.string()},
            {"output_dir", output_dir.string()},
            {"offline", offline},
            {"concurrency",
             {{"global", global_concurrency}, {"per_endpoint", per_endpoint_concurrency},
              {"workers", workers}}}};
  if (scores_file) j["scores_file"] = scores_file->string();
  if (benchmarks) j["benchmarks"] = *benchmarks;
  if (judge_sample) j["judge_sample"] = *judge_sample;
  if (language_property) {
    j["language_property"] = {
        {"name", language_property->name},
        {"values", language_property->values},
        {"aggregate", language_property->aggregate == LanguageAggregate::Median ? "median" : "mean"}};
  }
  return j;
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("cache_dir");
  j.erase("output_dir");
  j.erase("offline");
  j.erase("concurrency");
  return sha256_hex(j.dump());
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  try {
    RunConfig c;
    for (const auto& tj : j.at("teachers")) {
      TeacherConfig t;
      t.endpoint = endpoint_from_json(tj);
      if (tj.value("recommended_defaults", true)) t.endpoint = t.endpoint.with_recommended_defaults();
      t.param_size_b = opt<double>(tj, "param_size_b");
      t.multilingual_perf = opt<double>(tj, "multilingual_perf");
      c.teachers.push_back(std::move(t));
    }
    c.base_model = endpoint_from_json(j.at("base_model"));
    c.embedder = endpoint_from_json(j.at("embedder"));
    c.judge = endpoint_from_json(j.at("judge"));
    c.languages = j.at("languages").get<std::vector<std::string>>();
    for (const auto& sj : j.at("seed_files")) {
      SeedFile s;
      if (sj.is_string()) {
        s.path = resolve(base_dir, sj.get<std::string>());
      } else {
        s.path = resolve(base_dir, sj.at("path").get<std::string>());
        s.language = opt<std::string>(sj, "language");
      }
      c.seed_files.push_back(std::move(s));
    }
    c.n = j.value("n", c.n);
    if (auto it = j.find("mix"); it != j.end()) {
      if (it->is_string()) {
        c.mix = parse_mix(it->get<std::string>());
      } else {
        c.mix = {it->value("generate", 0.0), it->value("translate", 0.0), it->value("respond", 0.0)};
      }
    }
    c.k = j.value("k", c.k);
    c.alpha = j.value("alpha", c.alpha);
    c.alpha_grid = j.value("alpha_grid", c.alpha_grid);
    c.run_seed = j.value("run_seed", c.run_seed);
    c.trials = j.value("trials", c.trials);
    if (auto s = opt<std::string>(j, "scores_file")) c.scores_file = resolve(base_dir, *s);
    c.benchmarks = opt<std::vector<std::string>>(j, "benchmarks");
    c.pair_budget = j.value("pair_budget", c.pair_budget);
    c.judge_sample = opt<std::size_t>(j, "judge_sample");
    c.coverage_floor = j.value("coverage_floor", c.coverage_floor);
    c.pc_split = j.value("pc_split", c.pc_split);
    if (auto it = j.find("language_property"); it != j.end() && !it->is_null()) {
      LanguageProperty p;
      p.name = it->value("name", std::string("property"));
      p.values = it->at("values").get<std::map<std::string, double>>();
      const std::string agg = it->value("aggregate", std::string("median"));
      if (agg == "median") {
        p.aggregate = LanguageAggregate::Median;
      } else if (agg == "mean") {
        p.aggregate = LanguageAggregate::Mean;
      } else {
        throw ValidationError("language_property.aggregate must be median or mean");
      }
      c.language_property = std::move(p);
    }
    c.output_dir = resolve(base_dir, j.value("output_dir", std::string("out")));
    c.cache_dir = resolve(base_dir, j.value("cache_dir", std::string("cache")));
    c.offline = j.value("offline", false);
    if (auto it = j.find("concurrency"); it != j.end()) {
      c.global_concurrency = it->value("global", c.global_concurrency);
      c.per_endpoint_concurrency = it->value("per_endpoint", c.per_endpoint_concurrency);
      c.workers = it->value("workers", c.workers);
    }
    c.run_id = j.value("run_id", std::string());
    if (c.run_id.empty()) c.run_id = "run-" + c.hash().substr(0, 12);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid config: ") + e.what());
  }
}

RunConfig RunConfig::load(const fs::path& path) {
  const json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw ParseError("config is not valid JSON: " + path.string());
  return from_json(j, path.parent_path());
}

// ---- manifest ------------------------------------------------------------

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Seed:
      return "seed";
    case Stage::Generate:
      return "generate";
    case Stage::Intrinsic:
      return "intrinsic";
    case Stage::Extrinsic:
      return "extrinsic";
    case Stage::PgScore:
      return "pgscore";
    case Stage::Analyze:
      return "analyze";
    case Stage::Report:
      return "report";
  }
  return "unknown";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError("unknown stage '" + std::string(name) + "'");
}

bool RunManifest::complete(Stage s) const {
  auto it = stages.find(std::string(to_string(s)));
  return it != stages.end() && it->second.status == "complete";
}

json RunManifest::to_json() const {
  json st = json::object();
  for (const auto& [name, r] : stages) {
    st[name] = {{"status", r.status},
                {"input_hash", r.input_hash},
                {"artifacts", r.artifacts},
                {"notes", r.notes}};
  }
  return {{"tool_version", tool_version},
          {"run_id", run_id},
          {"config_hash", config_hash},
          {"template_versions", template_versions},
          {"stages", st}};
}

RunManifest RunManifest::from_json(const json& j) {
  try {
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.run_id = j.at("run_id").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.template_versions = j.at("template_versions").get<std::map<std::string, std::string>>();
    for (const auto& [name, r] : j.at("stages").items()) {
      StageRecord s;
      s.status = r.at("status").get<std::string>();
      s.input_hash = r.at("input_hash").get<std::string>();
      s.artifacts = r.at("artifacts").get<std::map<std::string, std::string>>();
      s.notes = r.at("notes").get<std::vector<std::string>>();
      m.stages[name] = std::move(s);
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed run manifest: ") + e.what());
  }
}

void RunManifest::verify(const fs::path& run_dir) const {
  for (const auto& [name, stage] : stages) {
    if (stage.status != "complete") continue;
    for (const auto& [rel, hash] : stage.artifacts) {
      const fs::path p = run_dir / rel;
      if (!fs::exists(p)) throw PipelineError("artifact missing: " + rel);
      if (sha256_file(p) != hash) throw PipelineError("artifact hash mismatch: " + rel);
    }
  }
}

RunManifest load_manifest(const fs::path& run_dir) {
  const fs::path p = run_dir / kManifestRel;
  if (!fs::exists(p)) throw PipelineError("no manifest in " + run_dir.string());
  const json j = json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw ParseError("manifest is not valid JSON");
  return RunManifest::from_json(j);
}

std::string dataset_relpath(const std::string& teacher, const std::string& language, int trial) {
  return "datasets/" + slug(teacher) + "__" + language + "__t" + std::to_string(trial) + ".jsonl";
}

std::uint64_t dataset_seed(std::uint64_t run_seed, int trial, const std::string& language) {
  const std::uint64_t trial_seed = derive_seed(run_seed, {static_cast<std::uint64_t>(trial)});
  return derive_seed(trial_seed, {fnv1a64(language)});
}

// ---- pipeline ------------------------------------------------------------

Pipeline::Pipeline(RunConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)) {
  config_.validate();
  ClientOptions opts;
  if (!config_.cache_dir.empty()) opts.cache_dir = config_.cache_dir;
  opts.offline = config_.offline;
  opts.global_concurrency = config_.global_concurrency;
  opts.per_endpoint_concurrency = config_.per_endpoint_concurrency;
  client_ = std::make_unique<InferenceClient>(opts, std::move(transport));

  if (fs::exists(run_dir() / kManifestRel)) {
    manifest_ = load_manifest(run_dir());
    if (manifest_.config_hash != config_.hash()) {
      // a different configuration invalidates every stage
      manifest_.stages.clear();
      manifest_.template_versions.clear();
    }
  }
  manifest_.tool_version = std::string(kToolVersion);
  manifest_.run_id = config_.run_id;
  manifest_.config_hash = config_.hash();
}

fs::path Pipeline::run_dir() const { return config_.output_dir / config_.run_id; }

void Pipeline::save_manifest() const {
  write_file_atomic(run_dir() / kManifestRel, manifest_.to_json().dump(2) + "\n");
}

std::string Pipeline::hash_artifact(const std::string& rel) const {
  return sha256_file(run_dir() / rel);
}

std::string Pipeline::stage_input_hash(Stage stage) const {
  json j = {{"stage", std::string(to_string(stage))}, {"tool_version", std::string(kToolVersion)}};
  const json c = config_.to_json();
  auto seed_hashes = [&] {
    json arr = json::array();
    for (const auto& s : config_.seed_files) {
      arr.push_back({{"sha256", sha256_file(s.path)}, {"language", s.language.value_or("")}});
    }
    return arr;
  };
  switch (stage) {
    case Stage::Seed:
      j["seed_files"] = seed_hashes();
      break;
    case Stage::Generate:
      j["params"] = {c["teachers"], c["languages"], c["n"], c["mix"], c["k"], c["run_seed"], c["trials"]};
      break;
    case Stage::Intrinsic:
      j["params"] = {c["base_model"], c["embedder"], c["judge"], c["pair_budget"],
                     c.value("judge_sample", json()), c["coverage_floor"]};
      break;
    case Stage::Extrinsic:
      j["scores"] = config_.scores_file ? json(sha256_file(*config_.scores_file)) : json(nullptr);
      j["benchmarks"] = c.value("benchmarks", json());
      break;
    case Stage::PgScore:
      j["params"] = {c["alpha"], c["teachers"], c["languages"], c["trials"]};
      break;
    case Stage::Analyze:
      j["params"] = {c["alpha_grid"], c["pc_split"], c["run_seed"], c["teachers"],
                     c.value("language_property", json())};
      break;
    case Stage::Report:
      break;
  }
  // every upstream artifact hash
  json upstream = json::object();
  for (Stage s : kAllStages) {
    if (s == stage) break;
    auto it = manifest_.stages.find(std::string(to_string(s)));
    if (it != manifest_.stages.end()) upstream[it->first] = it->second.artifacts;
  }
  j["upstream"] = upstream;
  return sha256_hex(j.dump());
}

bool Pipeline::up_to_date(Stage stage, const std::string& input_hash) const {
  auto it = manifest_.stages.find(std::string(to_string(stage)));
  if (it == manifest_.stages.end()) return false;
  const auto& rec = it->second;
  if (rec.input_hash != input_hash) return false;
  if (rec.status != "complete" && rec.status != "skipped") return false;
  for (const auto& [rel, hash] : rec.artifacts) {
    const fs::path p = run_dir() / rel;
    if (!fs::exists(p) || sha256_file(p) != hash) return false;
  }
  return true;
}

void Pipeline::run_stage(Stage stage) {
  auto require = [&](Stage s) {
    if (!manifest_.complete(s)) {
      throw PipelineError(std::string(to_string(stage)) + " requires the " +
                          std::string(to_string(s)) + " stage to be complete");
    }
  };
  switch (stage) {
    case Stage::Seed:
    case Stage::Extrinsic:
      break;
    case Stage::Generate:
      require(Stage::Seed);
      break;
    case Stage::Intrinsic:
      require(Stage::Generate);
      break;
    case Stage::PgScore:
      require(Stage::Intrinsic);
      require(Stage::Extrinsic);
      break;
    case Stage::Analyze:
      require(Stage::PgScore);
      break;
    case Stage::Report:
      require(Stage::PgScore);
      break;
  }
  const std::string input_hash = stage_input_hash(stage);
  if (up_to_date(stage, input_hash)) return;

  StageRecord rec;
  rec.input_hash = input_hash;
  const std::string name(to_string(stage));
  manifest_.stages.erase(name);
  try {
    std::vector<std::string> notes;
    std::map<std::string, std::string> artifacts = execute(stage, notes);
    rec.artifacts = std::move(artifacts);
    rec.notes = std::move(notes);
    rec.status = (stage == Stage::Extrinsic && !config_.scores_file) ? "skipped" : "complete";
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.notes.push_back(e.what());
    manifest_.stages[name] = rec;
    save_manifest();
    throw PipelineError("stage " + name + " failed: " + e.what());
  }
  manifest_.stages[name] = std::move(rec);
  executed_.push_back(stage);
  save_manifest();
}

RunManifest Pipeline::run() {
  for (Stage s : kAllStages) {
    if (s == Stage::PgScore && !manifest_.complete(Stage::Extrinsic)) break;
    run_stage(s);
  }
  return manifest_;
}

std::map<std::string, std::string> Pipeline::execute(Stage stage, std::vector<std::string>& notes) {
  switch (stage) {
    case Stage::Seed:
      return do_seed(notes);
    case Stage::Generate:
      return do_generate(notes);
    case Stage::Intrinsic:
      return do_intrinsic(notes);
    case Stage::Extrinsic:
      return do_extrinsic(notes);
    case Stage::PgScore:
      return do_pgscore(notes);
    case Stage::Analyze:
      return do_analyze(notes);
    case Stage::Report:
      return do_report(notes);
  }
  return {};
}

std::map<std::string, std::string> Pipeline::do_seed(std::vector<std::string>& notes) {
  SeedCorpus merged;
  for (const auto& f : config_.seed_files) {
    IngestOptions opts;
    opts.default_language = f.language;
    IngestResult r = ingest(f.path, opts);
    for (const auto& ex : r.corpus.examples()) merged.add(ex);
    notes.push_back(f.path.filename().string() + ": " + std::to_string(r.corpus.size()) +
                    " accepted, " + std::to_string(r.rejections.size()) + " rejected");
  }
  write_file_atomic(run_dir() / kSeedCorpusRel, serialize_corpus(merged));
  return {{kSeedCorpusRel, hash_artifact(kSeedCorpusRel)}};
}

std::map<std::string, std::string> Pipeline::do_generate(std::vector<std::string>& notes) {
  const SeedCorpus corpus =
      ingest(run_dir() / kSeedCorpusRel, IngestOptions{std::nullopt, false, true}).corpus;
  GenerationOptions opts;
  opts.k = config_.k;
  opts.workers = config_.workers;
  std::map<std::string, std::string> artifacts;
  manifest_.template_versions.clear();
  for (int t = 0; t < config_.trials; ++t) {
    for (const auto& teacher : config_.teachers) {
      for (const auto& lang : config_.languages) {
        const SyntheticDataset ds =
            build_dataset(*client_, corpus, teacher.endpoint, lang, config_.n, config_.mix,
                          dataset_seed(config_.run_seed, t, lang), opts);
        const std::string rel = dataset_relpath(teacher.id(), lang, t);
        write_dataset(ds, run_dir() / rel);
        artifacts[rel] = hash_artifact(rel);
        const std::string mrel = manifest_path_for(rel).string();
        artifacts[mrel] = hash_artifact(mrel);
        for (const auto& [m, v] : ds.manifest.template_versions) manifest_.template_versions[m] = v;
        if (!ds.manifest.rejections.empty()) {
          notes.push_back(rel + ": " + std::to_string(ds.manifest.rejections.size()) + " rejections");
        }
      }
    }
  }
  return artifacts;
}

std::map<std::string, std::string> Pipeline::do_intrinsic(std::vector<std::string>& notes) {
  IntrinsicEndpoints eps{config_.embedder, config_.base_model, config_.judge};
  std::vector<json> lines;
  std::map<std::string, std::string> artifacts;
  for (int t = 0; t < config_.trials; ++t) {
    for (const auto& teacher : config_.teachers) {
      for (const auto& lang : config_.languages) {
        const std::string rel = dataset_relpath(teacher.id(), lang, t);
        const SyntheticDataset ds = read_dataset(run_dir() / rel);
        IntrinsicOptions opts;
        opts.pair_budget = config_.pair_budget;
        opts.workers = config_.workers;
        opts.judge.coverage_floor = config_.coverage_floor;
        opts.judge.sample = config_.judge_sample;
        opts.judge.sample_seed = derive_seed(ds.manifest.run_seed, {fnv1a64("judge-sample")});
        opts.judge.workers = config_.workers;
        const IntrinsicResult r = compute_record(*client_, ds, eps, opts);
        json line = to_json(r.record);
        line["trial"] = t;
        lines.push_back(std::move(line));

        std::vector<json> audit;
        for (const auto& jp : r.judge.verdicts) {
          audit.push_back({{"index", jp.index},
                           {"attempts", jp.attempts},
                           {"score", jp.verdict.score ? json(*jp.verdict.score) : json(nullptr)},
                           {"status", jp.verdict.status == JudgeParseStatus::Ok ? "ok"
                                      : jp.verdict.status == JudgeParseStatus::NoMarker
                                          ? "no-marker"
                                          : "invalid-value"},
                           {"raw", jp.verdict.raw}});
        }
        const std::string arel =
            "metrics/judge__" + slug(teacher.id()) + "__" + lang + "__t" + std::to_string(t) + ".jsonl";
        write_file_atomic(run_dir() / arel, jsonl(audit));
        artifacts[arel] = hash_artifact(arel);
        if (r.perplexity.excluded > 0) {
          notes.push_back(rel + ": " + std::to_string(r.perplexity.excluded) +
                          " pairs excluded from perplexity (context window)");
        }
      }
    }
  }
  write_file_atomic(run_dir() / kIntrinsicRel, jsonl(lines));
  artifacts[kIntrinsicRel] = hash_artifact(kIntrinsicRel);
  return artifacts;
}

std::map<std::string, std::string> Pipeline::do_extrinsic(std::vector<std::string>& notes) {
  if (!config_.scores_file) {
    notes.push_back("no scores file configured");
    return {};
  }
  const BenchmarkRegistry registry =
      config_.benchmarks
          ? BenchmarkRegistry(std::set<std::string>(config_.benchmarks->begin(), config_.benchmarks->end()))
          : BenchmarkRegistry();
  const auto scores = load_scores(*config_.scores_file, registry);
  write_file_atomic(run_dir() / kBenchmarkRel, serialize_scores(scores));
  std::vector<json> lines;
  for (const auto& r : extrinsic_scores(scores)) {
    lines.push_back(to_json(r));
    for (const auto& b : r.degenerate) {
      notes.push_back("degenerate benchmark " + b + " for " + r.teacher + "/" + r.language +
                      "/t" + std::to_string(r.trial));
    }
  }
  write_file_atomic(run_dir() / kExtrinsicRel, jsonl(lines));
  return {{kBenchmarkRel, hash_artifact(kBenchmarkRel)}, {kExtrinsicRel, hash_artifact(kExtrinsicRel)}};
}

std::map<std::string, std::string> Pipeline::do_pgscore(std::vector<std::string>& notes) {
  const auto intrinsic = read_intrinsic(run_dir() / kIntrinsicRel);
  std::map<std::tuple<std::string, std::string, int>, ExtrinsicRecord> extr;
  for (const auto& j : read_jsonl(run_dir() / kExtrinsicRel)) {
    auto r = extrinsic_from_json(j);
    extr[{r.teacher, r.language, r.trial}] = r;
  }
  std::map<std::tuple<std::string, std::string, int>, IntrinsicRecord> intr;
  for (const auto& tr : intrinsic) intr[{tr.record.teacher, tr.record.language, tr.trial}] = tr.record;

  std::vector<json> lines;
  std::vector<PgScoreRecord> all;
  for (int t = 0; t < config_.trials; ++t) {
    for (const auto& lang : config_.languages) {
      Cohort cohort;
      cohort.id = lang + "/t" + std::to_string(t);
      cohort.language = lang;
      for (const auto& teacher : config_.teachers) {
        const auto key = std::make_tuple(teacher.id(), lang, t);
        auto ie = intr.find(key);
        auto ee = extr.find(key);
        if (ie == intr.end()) throw PipelineError("no intrinsic record for " + teacher.id() + "/" + cohort.id);
        if (ee == extr.end()) throw PipelineError("no benchmark scores for " + teacher.id() + "/" + cohort.id);
        cohort.entries.push_back({ie->second, ee->second});
      }
      const CohortScores cs = score_cohort(cohort, config_.alpha, t);
      std::vector<std::string> cohort_flags;
      for (const auto& m : cs.degenerate_metrics) cohort_flags.push_back("flat:" + m);
      if (cs.combined_degenerate) cohort_flags.push_back("flat:combined");
      if (!cohort_flags.empty()) {
        std::string joined;
        for (const auto& f : cohort_flags) joined += (joined.empty() ? "" : ",") + f;
        notes.push_back(cohort.id + ": " + joined);
      }
      for (const auto& r : cs.records) {
        json line = to_json(r);
        std::vector<std::string> flags = cohort_flags;
        if (auto it = cs.degenerate_benchmarks.find(r.teacher); it != cs.degenerate_benchmarks.end()) {
          for (const auto& b : it->second) flags.push_back("degenerate-pgr:" + b);
        }
        line["flags"] = flags;
        lines.push_back(std::move(line));
        all.push_back(r);
      }
    }
  }
  write_file_atomic(run_dir() / kPgScoreRel, jsonl(lines));
  std::vector<json> summary;
  for (const auto& s : summarize_trials(all)) {
    summary.push_back({{"teacher", s.teacher},
                       {"language", s.language},
                       {"trials", s.trials},
                       {"mean", s.mean},
                       {"standard_error", s.standard_error}});
  }
  write_file_atomic(run_dir() / kPgSummaryRel, jsonl(summary));
  return {{kPgScoreRel, hash_artifact(kPgScoreRel)}, {kPgSummaryRel, hash_artifact(kPgSummaryRel)}};
}

std::map<std::string, std::string> Pipeline::do_analyze(std::vector<std::string>& notes) {
  const auto intrinsic = read_intrinsic(run_dir() / kIntrinsicRel);
  std::map<std::tuple<std::string, std::string, int>, ExtrinsicRecord> extr;
  for (const auto& j : read_jsonl(run_dir() / kExtrinsicRel)) {
    auto r = extrinsic_from_json(j);
    extr[{r.teacher, r.language, r.trial}] = r;
  }
  std::vector<PgScoreRecord> pg;
  for (const auto& j : read_jsonl(run_dir() / kPgScoreRel)) pg.push_back(pgscore_from_json(j));

  json results = json::object();
  auto attempt = [&](const std::string& name, const std::function<json()>& fn) {
    try {
      json r = fn();
      r["status"] = "ok";
      results[name] = std::move(r);
      notes.push_back(name + ": ok");
    } catch (const Error& e) {
      results[name] = {{"status", "skipped"}, {"reason", e.what()}};
      notes.push_back(name + ": skipped (" + std::string(e.what()) + ")");
    }
  };

  std::vector<IntrinsicRecord> records;
  std::vector<int> trials;
  std::vector<double> targets;
  for (const auto& tr : intrinsic) {
    records.push_back(tr.record);
    trials.push_back(tr.trial);
    auto it = extr.find({tr.record.teacher, tr.record.language, tr.trial});
    targets.push_back(it == extr.end() ? std::numeric_limits<double>::quiet_NaN() : it->second.mean_pgr);
  }

  attempt("pca", [&] {
    const FeatureMatrix m = feature_matrix(records, trials);
    const PcaResult r = pca(m);
    return json{{"features", r.features},
                {"rows", m.row_keys},
                {"variance_fraction", vector_to_json(r.variance_fraction)},
                {"cumulative_fraction", vector_to_json(r.cumulative_fraction)},
                {"eigenvalues", vector_to_json(r.eigenvalues)},
                {"loadings", matrix_to_json(r.loadings)}};
  });

  attempt("regress", [&] {
    const FeatureMatrix m = feature_matrix(records, trials);
    const std::uint64_t seed = derive_seed(config_.run_seed, {fnv1a64("pc-regression")});
    return fit_to_json(fit_pc_regression(m, targets, config_.pc_split, seed));
  });

  attempt("ablation", [&] {
    std::map<std::tuple<std::string, std::string, int>, IntrinsicRecord> intr;
    for (const auto& tr : intrinsic) intr[{tr.record.teacher, tr.record.language, tr.trial}] = tr.record;
    std::vector<Cohort> cohorts;
    for (int t = 0; t < config_.trials; ++t) {
      for (const auto& lang : config_.languages) {
        Cohort c;
        c.id = lang + "/t" + std::to_string(t);
        c.language = lang;
        for (const auto& teacher : config_.teachers) {
          const auto key = std::make_tuple(teacher.id(), lang, t);
          c.entries.push_back({intr.at(key), extr.at(key)});
        }
        cohorts.push_back(std::move(c));
      }
    }
    const AblationResult a = weight_ablation(cohorts, config_.alpha_grid);
    return json{{"alphas", a.alphas}, {"rho", matrix_to_json(a.rho)}};
  });

  attempt("strength", [&] {
    std::map<std::string, const TeacherConfig*> by_id;
    for (const auto& t : config_.teachers) by_id[t.id()] = &t;
    std::vector<StrengthRow> rows;
    for (const auto& r : pg) {
      const auto* t = by_id.at(r.teacher);
      rows.push_back({r.teacher, r.language, r.trial, r.pg_score, t->param_size_b, t->multilingual_perf});
    }
    json fits = json::object();
    std::size_t ok = 0;
    for (auto [name, pred] : {std::pair{"log_param_size", StrengthPredictor::LogParamSize},
                              std::pair{"avg_multilingual_perf", StrengthPredictor::MultilingualPerf}}) {
      try {
        fits[name] = fit_to_json(strength_regression(rows, {pred}));
        ++ok;
      } catch (const Error& e) {
        fits[name] = {{"status", "skipped"}, {"reason", e.what()}};
      }
    }
    if (ok == 0) throw ValidationError("no strength predictor could be fitted");
    return json{{"fits", fits}};
  });

  attempt("correlate", [&] {
    if (!config_.language_property) throw ValidationError("no language property configured");
    // per teacher, average trials first; then aggregate teachers per language
    std::map<std::pair<std::string, std::string>, std::vector<double>> per_teacher;
    for (const auto& r : pg) per_teacher[{r.language, r.teacher}].push_back(r.pg_score);
    std::map<std::string, std::vector<double>> by_lang;
    for (const auto& [key, v] : per_teacher) by_lang[key.first].push_back(kahan_mean(v));
    const auto& prop = *config_.language_property;
    const RankStats s = property_correlation(by_lang, prop.values, prop.aggregate);
    return json{{"property", prop.name},
                {"aggregate", prop.aggregate == LanguageAggregate::Median ? "median" : "mean"},
                {"rho", s.rho ? json(*s.rho) : json(nullptr)},
                {"p", s.p ? json(*s.p) : json(nullptr)},
                {"n", s.n}};
  });

  write_file_atomic(run_dir() / kAnalysisRel, results.dump(2) + "\n");
  return {{kAnalysisRel, hash_artifact(kAnalysisRel)}};
}

std::map<std::string, std::string> Pipeline::do_report(std::vector<std::string>& notes) {
  std::map<std::string, std::string> artifacts;
  json analysis = json::object();
  if (manifest_.complete(Stage::Analyze)) analysis = json::parse(read_file(run_dir() / kAnalysisRel));
  for (const auto& kind : report_kinds()) {
    const bool from_analysis = kind == "pca" || kind == "ablation" || kind == "regress" ||
                               kind == "strength" || kind == "correlate";
    if (from_analysis && analysis.value(kind, json::object()).value("status", "") != "ok") {
      notes.push_back(kind + ": not emitted");
      continue;
    }
    for (const auto& rel : emit_report(run_dir(), kind)) artifacts[rel] = hash_artifact(rel);
  }
  return artifacts;
}

}  // namespace polyglot
