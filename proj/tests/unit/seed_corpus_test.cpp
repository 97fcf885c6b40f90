#include <gtest/gtest.h>

#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "polyglot/error.hpp"
#include "polyglot/rng.hpp"
#include "polyglot/seed_corpus.hpp"
#include "polyglot/util.hpp"

using namespace polyglot;
using nlohmann::json;
using testing_support::TempDir;

namespace {

std::string record(const std::string& prompt, const std::string& response, const std::string& lang = "") {
  json j = {{"prompt", prompt}, {"response", response}};
  if (!lang.empty()) j["language"] = lang;
  return j.dump() + "\n";
}

SeedCorpus corpus_of(const std::string& lang, std::size_t n) {
  SeedCorpus c;
  for (std::size_t i = 0; i < n; ++i) c.add({"p" + std::to_string(i), "r" + std::to_string(i), lang, "src"});
  return c;
}

}  // namespace

TEST(SeedCorpus, DefaultLanguageTagsEveryRecord) {
  TempDir dir;
  std::ofstream(dir / "de.jsonl") << record("a", "b") << record("c", "d") << record("e", "f");
  const IngestResult r = ingest(dir / "de.jsonl", {"de", false, false});
  ASSERT_EQ(r.corpus.size(), 3u);
  for (const auto& ex : r.corpus.examples()) {
    EXPECT_EQ(ex.language, "de");
    EXPECT_EQ(ex.source, "de");
  }
}

TEST(SeedCorpus, EmptyPromptIsRejected) {
  const IngestResult r = ingest_text(record("ok", "fine", "es") + record("", "x", "es"), "mem");
  EXPECT_EQ(r.corpus.size(), 1u);
  ASSERT_EQ(r.rejections.size(), 1u);
  EXPECT_EQ(r.rejections[0].line, 2u);
}

TEST(SeedCorpus, MalformedLinesAndUnknownLanguages) {
  const std::string text = "not json\n" + record("a", "b", "xx") + record("a", "b") + "\n" + record("q", "r", "ja");
  const IngestResult r = ingest_text(text, "mem");
  EXPECT_EQ(r.corpus.size(), 1u);
  EXPECT_EQ(r.rejections.size(), 3u);
  EXPECT_THROW(ingest_text(text, "mem", {std::nullopt, false, true}), Error);
}

TEST(SeedCorpus, ExactDuplicatesDroppedOnRequest) {
  const std::string text = record("same", "a", "de") + record("same", "b", "de") + record("same", "c", "es");
  EXPECT_EQ(ingest_text(text, "m").corpus.size(), 3u);
  const IngestResult r = ingest_text(text, "m", {std::nullopt, true, false});
  EXPECT_EQ(r.corpus.size(), 2u);
  EXPECT_EQ(r.duplicates_dropped, 1u);
}

TEST(SeedCorpus, UnreadableFileIsAnIoError) {
  EXPECT_THROW(ingest("/nonexistent/path/seed.jsonl"), IoError);
}

TEST(SeedCorpus, ExportRoundTrips) {
  TempDir dir;
  const IngestResult r = ingest_text(record("Wie geht's?", "Gut.", "de") + record("¿Qué?", "Nada.", "es"), "mix");
  export_corpus(r.corpus, dir / "out.jsonl");
  EXPECT_EQ(ingest(dir / "out.jsonl").corpus.examples(), r.corpus.examples());
}

TEST(SeedSampling, FullCountIsAPermutation) {
  const SeedCorpus c = corpus_of("de", 25);
  auto pos = sample_positions(c, "de", 25, 99);
  std::sort(pos.begin(), pos.end());
  EXPECT_EQ(pos, c.positions("de"));
}

TEST(SeedSampling, SameSeedSameDraw) {
  const SeedCorpus c = corpus_of("de", 50);
  EXPECT_EQ(sample(c, "de", 7, 5), sample(c, "de", 7, 5));
  EXPECT_THROW(sample(c, "de", 51, 5), ValidationError);
  EXPECT_THROW(sample(c, "ar", 1, 5), ValidationError);
}

// Second implementation of the documented procedure, written from the
// description in rng.hpp without calling bounded() or partial_shuffle().
std::vector<std::size_t> reference_sample(std::size_t m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::vector<std::size_t> a(m);
  for (std::size_t i = 0; i < m; ++i) a[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned __int128 two64 = static_cast<unsigned __int128>(1) << 64;
    const std::uint64_t range = m - i;
    const unsigned __int128 limit = two64 - (two64 % range);
    std::uint64_t x;
    do {
      x = g();
    } while (static_cast<unsigned __int128>(x) >= limit);
    std::swap(a[i], a[i + x % range]);
  }
  a.resize(n);
  return a;
}

TEST(SeedSampling, MatchesIndependentReimplementation) {
  const SeedCorpus c = corpus_of("es", 100);
  for (std::uint64_t seed : {1ULL, 0xdeadbeefULL}) {
    EXPECT_EQ(sample_positions(c, "es", 10, seed), reference_sample(100, 10, seed));
  }
  EXPECT_NE(sample_positions(c, "es", 10, 1), sample_positions(c, "es", 10, 2));
}

TEST(SeedStats, EmptyCorpusGivesEmptyReport) { EXPECT_TRUE(stats(SeedCorpus{}).empty()); }

TEST(SeedStats, MeanLengthsInCharacters) {
  SeedCorpus c;
  c.add({"ab", "xyz", "de", "s"});
  c.add({"abcd", "äöü", "de", "s"});
  const auto s = stats(c);
  EXPECT_EQ(s.at("de").count, 2u);
  EXPECT_DOUBLE_EQ(s.at("de").mean_prompt_chars, 3.0);
  EXPECT_DOUBLE_EQ(s.at("de").mean_response_chars, 3.0);
}

// Per-source seed counts; "-" cells are absent.
const char* kSourceCounts[] = {
    // source, en, ar, cs, de, es, id, ja
    "aya,0,0,5000,241,3854,2786,6259",
    "tulu3,10000,0,0,0,0,0,0",
    "wildchat,10000,4660,1266,5908,5900,7983,602",
    "cidar,0,6000,0,0,0,0,0",
    "cendol,0,0,0,0,0,3000,0",
    "oasst2,0,23,4,2328,8785,3,306",
    "euroblocks,0,0,3813,12551,15641,0,2893",
    "gsm8k,7473,0,0,0,0,0,0",
    "helpsteer3,0,0,0,462,778,156,534",
    "magpie,10000,0,0,0,0,0,0",
};
const std::vector<std::string> kLangs = {"en", "ar", "cs", "de", "es", "id", "ja"};
const std::map<std::string, std::size_t> kPublishedTotals = {
    {"en", 30743}, {"ar", 10683}, {"cs", 10083}, {"de", 21490}, {"es", 34958}, {"id", 13928}, {"ja", 10594}};

TEST(SeedStats, LanguageIndexReportsPublishedTotals) {
  TempDir dir;
  std::string text;
  for (const auto& [lang, n] : kPublishedTotals) {
    for (std::size_t i = 0; i < n; ++i) text += record("p" + std::to_string(i), "r", lang);
  }
  write_file_atomic(dir / "all.jsonl", text);
  const IngestResult r = ingest(dir / "all.jsonl");
  ASSERT_TRUE(r.rejections.empty());
  for (const auto& [lang, n] : kPublishedTotals) EXPECT_EQ(r.corpus.count(lang), n) << lang;
  EXPECT_EQ(stats(r.corpus).at("ar").count, 10683u);
}

TEST(SeedStats, PerSourceFixtureTotals) {
  SeedCorpus c;
  std::map<std::string, std::size_t> column_sums;
  for (const char* row : kSourceCounts) {
    const auto cells = split(row, ',');
    for (std::size_t l = 0; l < kLangs.size(); ++l) {
      const std::size_t n = std::stoul(cells[l + 1]);
      column_sums[kLangs[l]] += n;
      for (std::size_t i = 0; i < n; ++i) c.add({"p", "r", kLangs[l], cells[0]});
    }
  }
  const auto s = stats(c);
  for (const auto& lang : kLangs) EXPECT_EQ(s.at(lang).count, column_sums.at(lang)) << lang;
  // the six non-English columns agree with the published totals
  for (const auto& lang : kLangs) {
    if (lang != "en") EXPECT_EQ(s.at(lang).count, kPublishedTotals.at(lang)) << lang;
  }
  // the English source rows sum to 37,473 while the published total reads 30,743
  EXPECT_EQ(s.at("en").count, 37473u);
}

TEST(Rng, DeriveSeedIsOrderSensitiveAndStable) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
  // SplitMix64 reference output for state 0
  EXPECT_EQ(mix64(0), 0xe220a8397b1dcdafULL);
}

TEST(Rng, BoundedStaysInRange) {
  Rng g(3);
  for (std::uint64_t n : {1ULL, 2ULL, 3ULL, 7ULL, 1000ULL, (1ULL << 63) + 1}) {
    for (int i = 0; i < 200; ++i) EXPECT_LT(bounded(g, n), n);
  }
}

TEST(Util, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Util, Utf8Length) {
  EXPECT_EQ(utf8_length("Grüße"), 5u);
  EXPECT_EQ(utf8_length("日本語"), 3u);
  EXPECT_FALSE(utf8_length("\xff\xfe").has_value());
}
