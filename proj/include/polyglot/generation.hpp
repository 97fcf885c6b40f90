#pragma once

// Synthetic data generation with the Generate, Translate and Respond methods.
//
// Request seeds are derived per pair as derive_seed(run_seed, {fnv1a64(method),
// sequence}), so any pair can be regenerated in isolation. Few-shot and seed
// prompt draws use derive_seed(request_seed, {fnv1a64("seed-draw")}).

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyglot/error.hpp"
#include "polyglot/inference_client.hpp"
#include "polyglot/seed_corpus.hpp"
#include "polyglot/templates.hpp"

namespace polyglot {

/// A teacher reply that cannot become a pair. Recorded, then replaced.
class GenerationRejected : public Error {
 public:
  using Error::Error;
};

struct SyntheticPair {
  std::string prompt;
  std::string response;
  std::string teacher;
  std::string language;
  Method method = Method::Generate;
  std::size_t sequence = 0;
  std::uint64_t request_seed = 0;
  std::vector<std::size_t> seed_refs;
  /// The English input of a Translate pair. Never part of the pair itself.
  std::optional<std::string> source_prompt;
  bool reprompted = false;

  bool operator==(const SyntheticPair&) const = default;
};

struct PromptResponse {
  std::string prompt;
  std::string response;
};

/// Finds a JSON object with string `prompt` and `response` keys in a model
/// reply. Code fences and surrounding prose are tolerated. Returns nullopt when
/// no such object exists or either field is empty.
std::optional<PromptResponse> extract_prompt_response(std::string_view text);

/// Corrective user turn sent once after an unparseable reply.
extern const std::string_view kReformatRequest;

SyntheticPair run_generate(InferenceClient& client, const ModelEndpoint& teacher,
                           const std::string& language, const std::vector<SeedExample>& few_shots,
                           std::uint64_t request_seed);

SyntheticPair run_translate(InferenceClient& client, const ModelEndpoint& teacher,
                            const std::string& language, const std::string& english_prompt,
                            std::uint64_t request_seed);

SyntheticPair run_respond(InferenceClient& client, const ModelEndpoint& teacher,
                          const std::string& language, const std::string& seed_prompt,
                          std::uint64_t request_seed);

struct MethodMix {
  double generate = 1.0 / 3.0;
  double translate = 1.0 / 3.0;
  double respond = 1.0 / 3.0;

  double operator[](Method m) const;
  bool operator==(const MethodMix&) const = default;
};

/// Parses "generate=x,translate=y,respond=z"; omitted methods get 0 and each
/// value may be a decimal or a fraction "a/b". Validates the result.
MethodMix parse_mix(std::string_view text);
std::string format_mix(const MethodMix& mix);

/// Throws ValidationError unless every share is in [0,1] and they sum to 1.
void validate(const MethodMix& mix);

/// floor(n * p) per method; the remaining pairs go one at a time to methods
/// with a positive share, in the order Generate, Translate, Respond.
std::array<std::size_t, 3> allocate_counts(std::size_t n, const MethodMix& mix);

struct RejectionRecord {
  Method method = Method::Generate;
  std::size_t sequence = 0;
  std::string reason;

  bool operator==(const RejectionRecord&) const = default;
};

struct DatasetManifest {
  std::string teacher;
  std::string language;
  std::size_t n = 0;
  MethodMix mix;
  std::array<std::size_t, 3> counts{};
  std::array<std::size_t, 3> attempts{};
  std::uint64_t run_seed = 0;
  std::size_t k = 3;
  std::map<std::string, std::string> template_versions;
  std::string rejection_policy;
  bool language_filter = false;
  std::vector<RejectionRecord> rejections;

  bool operator==(const DatasetManifest&) const = default;
};

struct SyntheticDataset {
  std::vector<SyntheticPair> pairs;
  DatasetManifest manifest;

  /// Throws ValidationError when manifest counts disagree with the pairs.
  void check_counts() const;
};

struct GenerationOptions {
  std::size_t k = 3;
  /// Attempts allowed per method, as a multiple of its target count.
  std::size_t budget_factor = 3;
  std::size_t workers = 8;
  /// Optional acceptance predicate (e.g. language identification). Off by default.
  std::function<bool(const SyntheticPair&)> language_filter;
};

/// Builds a dataset of n pairs for one teacher and language. Throws
/// GenerationRejected when a method exhausts its attempt budget.
SyntheticDataset build_dataset(InferenceClient& client, const SeedCorpus& corpus,
                               const ModelEndpoint& teacher, const std::string& language,
                               std::size_t n, const MethodMix& mix, std::uint64_t run_seed,
                               const GenerationOptions& options = {});

std::uint64_t pair_request_seed(std::uint64_t run_seed, Method method, std::size_t sequence);

nlohmann::json to_json(const SyntheticPair& pair);
SyntheticPair pair_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

/// Pairs as line-delimited JSON.
std::string serialize_pairs(const SyntheticDataset& dataset);
std::string serialize_manifest(const DatasetManifest& manifest);

/// Writes <path> (pairs) and <path>.manifest.json, checking counts first.
void write_dataset(const SyntheticDataset& dataset, const std::filesystem::path& path);
SyntheticDataset read_dataset(const std::filesystem::path& path);
std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path);

/// SHA-256 of the serialized manifest; identifies the dataset in metric records.
std::string manifest_hash(const DatasetManifest& manifest);

}  // namespace polyglot
