#pragma once

// Intrinsic dataset metrics: prompt/response diversity, base-model
// perplexity, rubric-judge reward and mean lengths.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyglot/error.hpp"
#include "polyglot/generation.hpp"
#include "polyglot/inference_client.hpp"

namespace polyglot {

inline constexpr std::size_t kDefaultPairBudget = 100000;

/// Mean cosine distance over unordered pairs of vectors. Every pair is used
/// when n(n-1)/2 <= pair_budget; otherwise pair_budget pairs are drawn with
/// replacement using `seed`. Vectors are put in lexicographic order first, so
/// the result does not depend on input order. Throws ValidationError for
/// fewer than two vectors, a zero vector or mismatched dimensions.
double diversity(const std::vector<std::vector<double>>& vectors,
                 std::size_t pair_budget = kDefaultPairBudget, std::uint64_t seed = 0);

/// 1 - cos(a, b), clamped to [0, 2].
double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);

/// exp(-mean(logprobs)); logprobs must be non-empty and non-positive.
double sequence_perplexity(const std::vector<double>& logprobs);

/// Separator between prompt and response when scoring the response.
inline constexpr std::string_view kPerplexitySeparator = "\n\n";

struct PerplexityResult {
  double ppl = 0.0;
  std::size_t scored = 0;
  /// Pairs skipped because prompt plus response overflow the context window.
  std::size_t excluded = 0;
};

/// Arithmetic mean of per-pair perplexities of each response given its
/// prompt. Throws DegenerateError when every pair is excluded.
PerplexityResult dataset_perplexity(InferenceClient& client, const SyntheticDataset& dataset,
                                    const ModelEndpoint& base_model, std::size_t workers = 8);

enum class JudgeParseStatus { Ok, NoMarker, InvalidValue };

struct JudgeVerdict {
  std::string raw;
  std::optional<int> score;
  JudgeParseStatus status = JudgeParseStatus::NoMarker;
};

/// Score extraction. Markers are tried in order "Score:" (case-insensitive),
/// "[RESULT]" (optional colon), then a trailing line holding only an integer
/// (code fence lines are ignored). The last occurrence of the first marker
/// kind found decides; its value must be a standalone integer in 1..5.
JudgeVerdict parse_judge(std::string_view raw);

class JudgeCoverageError : public Error {
 public:
  using Error::Error;
};

struct JudgeOptions {
  double coverage_floor = 0.95;
  /// Judge only this many pairs, drawn with `sample_seed`.
  std::optional<std::size_t> sample;
  std::uint64_t sample_seed = 0;
  std::size_t workers = 8;
};

struct JudgedPair {
  std::size_t index = 0;  // position in the dataset
  int attempts = 0;
  JudgeVerdict verdict;
};

struct JudgeSummary {
  double reward = 0.0;
  double coverage = 0.0;
  std::size_t judged = 0;
  std::size_t parsed = 0;
  std::vector<JudgedPair> verdicts;
};

/// Scores each pair once with the rubric prompt, retrying a parse failure
/// once. Throws JudgeCoverageError when parsed/judged falls below the floor.
JudgeSummary judge_dataset(InferenceClient& client, const SyntheticDataset& dataset,
                           const ModelEndpoint& judge, std::string_view language_name,
                           const JudgeOptions& options = {});

struct IntrinsicRecord {
  std::string teacher;
  std::string language;
  std::string manifest_hash;
  std::size_t n = 0;
  double d_x = 0.0;
  double d_y = 0.0;
  double ppl = 0.0;
  double reward = 0.0;
  double judge_coverage = 0.0;
  double mean_prompt_len = 0.0;
  double mean_resp_len = 0.0;
  std::size_t ppl_excluded = 0;

  bool operator==(const IntrinsicRecord&) const = default;
};

nlohmann::json to_json(const IntrinsicRecord& record);
IntrinsicRecord intrinsic_from_json(const nlohmann::json& j);

struct IntrinsicEndpoints {
  ModelEndpoint embedder;
  ModelEndpoint base_model;
  ModelEndpoint judge;
};

struct IntrinsicOptions {
  std::size_t pair_budget = kDefaultPairBudget;
  JudgeOptions judge;
  std::size_t workers = 8;
};

struct IntrinsicResult {
  IntrinsicRecord record;
  JudgeSummary judge;
  PerplexityResult perplexity;
};

IntrinsicResult compute_record(InferenceClient& client, const SyntheticDataset& dataset,
                               const IntrinsicEndpoints& endpoints,
                               const IntrinsicOptions& options = {});

/// Mean length in Unicode scalar values.
double mean_char_length(const std::vector<std::string>& texts);

}  // namespace polyglot
