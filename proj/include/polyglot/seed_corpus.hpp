#pragma once

// Multilingual seed corpus: line-delimited JSON ingestion, deterministic
// per-language sampling and summary statistics.
//
// Record format (UTF-8, one JSON object per line):
//   {"prompt": "...", "response": "...", "language": "de", "source": "aya"}
// `language` may be omitted when a default language is supplied; `source`
// defaults to the input file's stem.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace polyglot {

struct SeedExample {
  std::string prompt;
  std::string response;
  std::string language;
  std::string source;

  bool operator==(const SeedExample&) const = default;
};

/// Throws ValidationError unless the example satisfies the record invariants.
void validate(const SeedExample& example);

class SeedCorpus {
 public:
  SeedCorpus() = default;
  explicit SeedCorpus(std::vector<SeedExample> examples);

  /// Validates and appends; returns the new position.
  std::size_t add(SeedExample example);

  const std::vector<SeedExample>& examples() const noexcept { return examples_; }
  const SeedExample& at(std::size_t position) const { return examples_.at(position); }
  std::size_t size() const noexcept { return examples_.size(); }
  bool empty() const noexcept { return examples_.empty(); }

  /// Positions of every example in `language`, ascending. Empty if absent.
  const std::vector<std::size_t>& positions(const std::string& language) const;
  std::size_t count(const std::string& language) const { return positions(language).size(); }
  std::vector<std::string> languages() const;

 private:
  std::vector<SeedExample> examples_;
  std::map<std::string, std::vector<std::size_t>> index_;
};

struct IngestOptions {
  std::optional<std::string> default_language;
  /// Drop records whose (language, prompt) was already accepted.
  bool dedup_exact = false;
  /// Throw on the first malformed record instead of counting it.
  bool strict = false;
};

struct Rejection {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct IngestResult {
  SeedCorpus corpus;
  std::vector<Rejection> rejections;
  std::size_t duplicates_dropped = 0;
};

/// Reads a line-delimited record file. Blank lines are skipped.
/// Throws IoError for an unreadable file.
IngestResult ingest(const std::filesystem::path& path, const IngestOptions& options = {});
IngestResult ingest_text(const std::string& text, const std::string& source_name,
                         const IngestOptions& options = {});

/// Writes the corpus in the ingest record format, one record per line.
void export_corpus(const SeedCorpus& corpus, const std::filesystem::path& path);
std::string serialize_corpus(const SeedCorpus& corpus);

/// Returns `n` distinct examples of `language`, ordered by a seeded partial
/// Fisher-Yates shuffle over the language's positions (see rng.hpp).
/// Throws ValidationError when fewer than n examples exist.
std::vector<std::size_t> sample_positions(const SeedCorpus& corpus, const std::string& language,
                                          std::size_t n, std::uint64_t seed);
std::vector<SeedExample> sample(const SeedCorpus& corpus, const std::string& language,
                                std::size_t n, std::uint64_t seed);

struct LanguageStats {
  std::size_t count = 0;
  double mean_prompt_chars = 0.0;
  double mean_response_chars = 0.0;
};

/// Per-language counts and mean lengths in Unicode scalar values.
std::map<std::string, LanguageStats> stats(const SeedCorpus& corpus);

}  // namespace polyglot
