#include "polyglot/seed_corpus.hpp"

#include <nlohmann/json.hpp>

#include <set>
#include <sstream>
#include <utility>

#include "polyglot/error.hpp"
#include "polyglot/languages.hpp"
#include "polyglot/rng.hpp"
#include "polyglot/util.hpp"

namespace polyglot {

using json = nlohmann::json;

void validate(const SeedExample& example) {
  if (example.prompt.empty()) throw ValidationError("empty prompt");
  if (example.source.empty()) throw ValidationError("empty source");
  if (!is_known_language(example.language)) {
    throw ValidationError("unknown language code '" + example.language + "'");
  }
  if (!utf8_length(example.prompt) || !utf8_length(example.response)) {
    throw ValidationError("text is not valid UTF-8");
  }
}

SeedCorpus::SeedCorpus(std::vector<SeedExample> examples) {
  examples_.reserve(examples.size());
  for (auto& e : examples) add(std::move(e));
}

std::size_t SeedCorpus::add(SeedExample example) {
  validate(example);
  const std::size_t pos = examples_.size();
  index_[example.language].push_back(pos);
  examples_.push_back(std::move(example));
  return pos;
}

const std::vector<std::size_t>& SeedCorpus::positions(const std::string& language) const {
  static const std::vector<std::size_t> kEmpty;
  const auto it = index_.find(language);
  return it == index_.end() ? kEmpty : it->second;
}

std::vector<std::string> SeedCorpus::languages() const {
  std::vector<std::string> out;
  out.reserve(index_.size());
  for (const auto& [lang, _] : index_) out.push_back(lang);
  return out;
}

namespace {

std::string required_string(const json& record, const char* key) {
  const auto it = record.find(key);
  if (it == record.end()) throw ValidationError(std::string("missing field '") + key + "'");
  if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' is not a string");
  return it->get<std::string>();
}

SeedExample parse_record(std::string_view line, const std::string& source_name,
                         const IngestOptions& options) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
  if (!record.is_object()) throw ValidationError("record is not an object");

  SeedExample ex;
  ex.prompt = required_string(record, "prompt");
  ex.response = required_string(record, "response");
  if (auto it = record.find("language"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) throw ValidationError("field 'language' is not a string");
    ex.language = it->get<std::string>();
  } else if (options.default_language) {
    ex.language = *options.default_language;
  } else {
    throw ValidationError("record has no language and no default language was given");
  }
  if (auto it = record.find("source"); it != record.end() && it->is_string() &&
                                       !it->get<std::string>().empty()) {
    ex.source = it->get<std::string>();
  } else {
    ex.source = source_name;
  }
  validate(ex);
  return ex;
}

}  // namespace

IngestResult ingest_text(const std::string& text, const std::string& source_name,
                         const IngestOptions& options) {
  if (options.default_language && !is_known_language(*options.default_language)) {
    throw ValidationError("unknown default language '" + *options.default_language + "'");
  }
  IngestResult result;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    ++line_no;
    start = end + 1;
    if (trim(line).empty()) {
      if (end == text.size()) break;
      continue;
    }
    try {
      SeedExample ex = parse_record(line, source_name, options);
      if (options.dedup_exact && !seen.emplace(ex.language, ex.prompt).second) {
        ++result.duplicates_dropped;
        continue;
      }
      result.corpus.add(std::move(ex));
    } catch (const ValidationError& e) {
      if (options.strict) {
        throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
      }
      result.rejections.push_back({line_no, e.what()});
    }
    if (end == text.size()) break;
  }
  return result;
}

IngestResult ingest(const std::filesystem::path& path, const IngestOptions& options) {
  return ingest_text(read_file(path), path.stem().string(), options);
}

std::string serialize_corpus(const SeedCorpus& corpus) {
  std::string out;
  for (const auto& ex : corpus.examples()) {
    json record = {{"prompt", ex.prompt},
                   {"response", ex.response},
                   {"language", ex.language},
                   {"source", ex.source}};
    out += record.dump();
    out += '\n';
  }
  return out;
}

void export_corpus(const SeedCorpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_corpus(corpus));
}

std::vector<std::size_t> sample_positions(const SeedCorpus& corpus, const std::string& language,
                                          std::size_t n, std::uint64_t seed) {
  const auto& pool = corpus.positions(language);
  if (pool.size() < n) {
    throw ValidationError("cannot sample " + std::to_string(n) + " examples of '" + language +
                          "': only " + std::to_string(pool.size()) + " available");
  }
  Rng rng(seed);
  return partial_shuffle(pool, n, rng);
}

std::vector<SeedExample> sample(const SeedCorpus& corpus, const std::string& language,
                                std::size_t n, std::uint64_t seed) {
  std::vector<SeedExample> out;
  out.reserve(n);
  for (std::size_t pos : sample_positions(corpus, language, n, seed)) {
    out.push_back(corpus.at(pos));
  }
  return out;
}

std::map<std::string, LanguageStats> stats(const SeedCorpus& corpus) {
  std::map<std::string, LanguageStats> out;
  for (const auto& lang : corpus.languages()) {
    KahanSum prompt_chars;
    KahanSum response_chars;
    const auto& pos = corpus.positions(lang);
    for (std::size_t p : pos) {
      const auto& ex = corpus.at(p);
      prompt_chars.add(static_cast<double>(*utf8_length(ex.prompt)));
      response_chars.add(static_cast<double>(*utf8_length(ex.response)));
    }
    const double n = static_cast<double>(pos.size());
    out[lang] = {pos.size(), prompt_chars.value() / n, response_chars.value() / n};
  }
  return out;
}

}  // namespace polyglot
