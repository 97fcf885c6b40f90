#pragma once

// Cohort normalization and the PG-Score.
//
// A cohort is the set of teachers evaluated together for one language in one
// run. Scores are only comparable inside a cohort.

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyglot/extrinsic.hpp"
#include "polyglot/intrinsic.hpp"

namespace polyglot {

inline constexpr double kSigmaFloor = 1e-12;

struct ZScores {
  std::vector<double> values;
  /// Population standard deviation was below kSigmaFloor; values are all 0.
  bool degenerate = false;
};

/// (v - mean) / sigma with the population standard deviation. Throws
/// ValidationError for fewer than two values.
ZScores zscore(std::span<const double> values);

/// The four intrinsic metrics entering the aggregate, in order
/// d_x, d_y, -log(1 + PPL), R.
inline constexpr const char* kIntrinsicMetricNames[] = {"d_x", "d_y", "neg_log1p_ppl", "reward"};

struct CohortEntry {
  IntrinsicRecord intrinsic;
  ExtrinsicRecord extrinsic;

  const std::string& teacher() const { return intrinsic.teacher; }
};

struct Cohort {
  std::string id;
  std::string language;
  std::vector<CohortEntry> entries;

  /// At least two teachers, one entry each, all in `language`, intrinsic and
  /// extrinsic records matching.
  void validate() const;
};

struct IntrinsicAggregate {
  std::vector<double> intr;  // per entry, cohort order
  std::vector<std::string> degenerate_metrics;
};

/// Averages the z-scores of d_x, d_y, -log(1 + PPL) and R across the cohort.
IntrinsicAggregate intrinsic_aggregate(const Cohort& cohort);

/// Same aggregate from a raw n x 4 metric table (rows in cohort order, PPL
/// untransformed in column 2).
IntrinsicAggregate intrinsic_aggregate(const std::vector<std::array<double, 4>>& raw);

/// Z-score of alpha * intr + (1 - alpha) * extr within `cohort_combined`,
/// the combined values of every cohort member. Throws ValidationError when
/// alpha is outside [0,1] or the combined value is not in the cohort.
double pg_score(double intr, double extr, double alpha, std::span<const double> cohort_combined);

struct PgScoreRecord {
  std::string teacher;
  std::string language;
  int trial = 0;
  double intrinsic = 0.0;
  double extrinsic = 0.0;
  double alpha = 0.5;
  double pg_score = 0.0;
  int rank = 0;

  bool operator==(const PgScoreRecord&) const = default;
};

/// Sorts by descending pg_score, then higher extrinsic, then teacher id, and
/// assigns ranks 1..n. Throws ValidationError when records mix languages,
/// trials or alphas, or repeat a teacher.
std::vector<PgScoreRecord> rank_cohort(std::vector<PgScoreRecord> records);

struct CohortScores {
  std::vector<PgScoreRecord> records;  // ranked
  std::vector<std::string> degenerate_metrics;
  bool combined_degenerate = false;
  /// teacher -> benchmarks excluded from that teacher's extrinsic mean
  std::map<std::string, std::vector<std::string>> degenerate_benchmarks;
};

CohortScores score_cohort(const Cohort& cohort, double alpha = 0.5, int trial = 0);

struct TrialSummary {
  std::string teacher;
  std::string language;
  std::size_t trials = 0;
  double mean = 0.0;
  /// Sample standard deviation over trials divided by sqrt(trials); 0 for one trial.
  double standard_error = 0.0;
};

/// Mean and standard error of PG-Scores per (teacher, language) across trials.
std::vector<TrialSummary> summarize_trials(const std::vector<PgScoreRecord>& records);

/// Per-teacher mean of pg_score, intrinsic and extrinsic across languages,
/// returned as records with language "avg" (not yet ranked). Every teacher
/// must appear in the same set of languages.
std::vector<PgScoreRecord> average_across_languages(const std::vector<PgScoreRecord>& records);

nlohmann::json to_json(const PgScoreRecord& record);
PgScoreRecord pgscore_from_json(const nlohmann::json& j);

}  // namespace polyglot
