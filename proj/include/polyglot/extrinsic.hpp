#pragma once

// Benchmark score ingestion and Performance Gap Recovered.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace polyglot {

inline constexpr double kPgrEpsilon = 1e-9;

/// Known benchmark ids. Loaded from config; defaults to culture, chat, math.
class BenchmarkRegistry {
 public:
  BenchmarkRegistry();
  explicit BenchmarkRegistry(std::set<std::string> ids);
  /// Reads a JSON array of ids, or an object with a "benchmarks" array.
  static BenchmarkRegistry from_file(const std::filesystem::path& path);

  bool contains(const std::string& id) const { return ids_.count(id) > 0; }
  const std::set<std::string>& ids() const noexcept { return ids_; }

 private:
  std::set<std::string> ids_;
};

struct BenchmarkScores {
  std::string teacher;
  std::string language;
  std::string benchmark;
  double student = 0.0;
  double base = 0.0;
  double reference = 0.0;
  /// Generation trial index; 0 when the file has a single trial.
  int trial = 0;

  bool operator==(const BenchmarkScores&) const = default;
};

/// Line-delimited JSON records with fields teacher, language, benchmark,
/// student, base, reference and optional trial. Throws ValidationError naming
/// the (teacher, language, benchmark) triple for a missing score, an unknown
/// benchmark or a duplicate record.
std::vector<BenchmarkScores> load_scores(const std::filesystem::path& path,
                                         const BenchmarkRegistry& registry = {});
std::vector<BenchmarkScores> parse_scores(const std::string& text,
                                          const BenchmarkRegistry& registry = {});
std::string serialize_scores(const std::vector<BenchmarkScores>& scores);

/// (student - base) / (reference - base); nullopt when the gap is below epsilon.
std::optional<double> pgr(double student, double base, double reference,
                          double epsilon = kPgrEpsilon);

struct ExtrinsicRecord {
  std::string teacher;
  std::string language;
  int trial = 0;
  std::map<std::string, double> pgr;  // non-degenerate benchmarks
  std::vector<std::string> degenerate;
  double mean_pgr = 0.0;

  bool operator==(const ExtrinsicRecord&) const = default;
};

/// Mean PGR over the non-degenerate benchmarks of one (teacher, language,
/// trial). Throws DegenerateError when every benchmark is degenerate.
ExtrinsicRecord extrinsic_score(const std::vector<BenchmarkScores>& records,
                                double epsilon = kPgrEpsilon);

/// Groups records by (teacher, language, trial) and scores each group.
std::vector<ExtrinsicRecord> extrinsic_scores(const std::vector<BenchmarkScores>& records,
                                              double epsilon = kPgrEpsilon);

nlohmann::json to_json(const ExtrinsicRecord& record);
ExtrinsicRecord extrinsic_from_json(const nlohmann::json& j);

}  // namespace polyglot
