#include "polyglot/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "polyglot/error.hpp"
#include "polyglot/util.hpp"

namespace polyglot {

using nlohmann::json;

namespace {

struct Moments {
  double mean = 0.0;
  double sigma = 0.0;
};

Moments moments(std::span<const double> values) {
  Moments m;
  m.mean = kahan_mean(values);
  KahanSum ss;
  for (double v : values) ss.add((v - m.mean) * (v - m.mean));
  m.sigma = std::sqrt(ss.value() / static_cast<double>(values.size()));
  return m;
}

// Two distinct values sit exactly one standard deviation either side of their
// mean; returning the sign keeps the pair exactly antisymmetric.
double standardize(double v, std::span<const double> values, const Moments& m) {
  if (values.size() == 2) return v > m.mean ? 1.0 : -1.0;
  return (v - m.mean) / m.sigma;
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
}

}  // namespace

ZScores zscore(std::span<const double> values) {
  if (values.size() < 2) throw ValidationError("z-score needs at least two values");
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("z-score input is not finite");
  }
  const Moments m = moments(values);
  ZScores z;
  z.values.resize(values.size(), 0.0);
  if (m.sigma < kSigmaFloor) {
    z.degenerate = true;
    return z;
  }
  for (std::size_t i = 0; i < values.size(); ++i) z.values[i] = standardize(values[i], values, m);
  return z;
}

void Cohort::validate() const {
  if (entries.size() < 2) throw ValidationError("cohort " + id + " needs at least two teachers");
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (e.intrinsic.teacher != e.extrinsic.teacher) {
      throw ValidationError("intrinsic and extrinsic records name different teachers");
    }
    if (e.intrinsic.language != language || e.extrinsic.language != language) {
      throw ValidationError("cohort " + id + " mixes languages");
    }
    if (!seen.insert(e.teacher()).second) {
      throw ValidationError("teacher " + e.teacher() + " appears twice in cohort " + id);
    }
  }
}

IntrinsicAggregate intrinsic_aggregate(const std::vector<std::array<double, 4>>& raw) {
  const std::size_t n = raw.size();
  IntrinsicAggregate agg;
  agg.intr.assign(n, 0.0);
  for (std::size_t m = 0; m < 4; ++m) {
    std::vector<double> column(n);
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = m == 2 ? -std::log1p(raw[i][m]) : raw[i][m];
    }
    const ZScores z = zscore(column);
    if (z.degenerate) agg.degenerate_metrics.emplace_back(kIntrinsicMetricNames[m]);
    for (std::size_t i = 0; i < n; ++i) agg.intr[i] += z.values[i];
  }
  for (double& v : agg.intr) v /= 4.0;
  return agg;
}

IntrinsicAggregate intrinsic_aggregate(const Cohort& cohort) {
  cohort.validate();
  std::vector<std::array<double, 4>> raw;
  raw.reserve(cohort.entries.size());
  for (const auto& e : cohort.entries) {
    const auto& r = e.intrinsic;
    if (!(r.ppl > -1.0)) throw ValidationError("perplexity must exceed -1 for " + r.teacher);
    raw.push_back({r.d_x, r.d_y, r.ppl, r.reward});
  }
  return intrinsic_aggregate(raw);
}

double pg_score(double intr, double extr, double alpha, std::span<const double> cohort_combined) {
  check_alpha(alpha);
  if (cohort_combined.size() < 2) throw ValidationError("cohort needs at least two members");
  const double combined = alpha * intr + (1.0 - alpha) * extr;
  const double tol = 1e-12 * std::max(1.0, std::abs(combined));
  const bool present = std::any_of(cohort_combined.begin(), cohort_combined.end(),
                                   [&](double c) { return std::abs(c - combined) <= tol; });
  if (!present) throw ValidationError("combined value is not part of the cohort");
  const Moments m = moments(cohort_combined);
  if (m.sigma < kSigmaFloor) return 0.0;
  return standardize(combined, cohort_combined, m);
}

std::vector<PgScoreRecord> rank_cohort(std::vector<PgScoreRecord> records) {
  if (records.empty()) return records;
  std::set<std::string> teachers;
  for (const auto& r : records) {
    const auto& f = records.front();
    if (r.language != f.language || r.trial != f.trial || r.alpha != f.alpha) {
      throw ValidationError("records from different cohorts cannot be ranked together");
    }
    if (!teachers.insert(r.teacher).second) {
      throw ValidationError("teacher " + r.teacher + " appears twice");
    }
  }
  std::sort(records.begin(), records.end(), [](const PgScoreRecord& a, const PgScoreRecord& b) {
    if (a.pg_score != b.pg_score) return a.pg_score > b.pg_score;
    if (a.extrinsic != b.extrinsic) return a.extrinsic > b.extrinsic;
    return a.teacher < b.teacher;
  });
  for (std::size_t i = 0; i < records.size(); ++i) records[i].rank = static_cast<int>(i + 1);
  return records;
}

CohortScores score_cohort(const Cohort& cohort, double alpha, int trial) {
  check_alpha(alpha);
  const IntrinsicAggregate agg = intrinsic_aggregate(cohort);
  const std::size_t n = cohort.entries.size();
  std::vector<double> combined(n);
  for (std::size_t i = 0; i < n; ++i) {
    combined[i] = alpha * agg.intr[i] + (1.0 - alpha) * cohort.entries[i].extrinsic.mean_pgr;
  }
  const ZScores z = zscore(combined);

  CohortScores out;
  out.degenerate_metrics = agg.degenerate_metrics;
  out.combined_degenerate = z.degenerate;
  std::vector<PgScoreRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = cohort.entries[i];
    PgScoreRecord r;
    r.teacher = e.teacher();
    r.language = cohort.language;
    r.trial = trial;
    r.intrinsic = agg.intr[i];
    r.extrinsic = e.extrinsic.mean_pgr;
    r.alpha = alpha;
    r.pg_score = z.values[i];
    records.push_back(std::move(r));
    if (!e.extrinsic.degenerate.empty()) {
      out.degenerate_benchmarks[e.teacher()] = e.extrinsic.degenerate;
    }
  }
  out.records = rank_cohort(std::move(records));
  return out;
}

std::vector<TrialSummary> summarize_trials(const std::vector<PgScoreRecord>& records) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : records) groups[{r.teacher, r.language}].push_back(r.pg_score);
  std::vector<TrialSummary> out;
  for (const auto& [key, values] : groups) {
    TrialSummary s;
    s.teacher = key.first;
    s.language = key.second;
    s.trials = values.size();
    s.mean = kahan_mean(values);
    if (values.size() > 1) {
      KahanSum ss;
      for (double v : values) ss.add((v - s.mean) * (v - s.mean));
      const double sd = std::sqrt(ss.value() / static_cast<double>(values.size() - 1));
      s.standard_error = sd / std::sqrt(static_cast<double>(values.size()));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PgScoreRecord> average_across_languages(const std::vector<PgScoreRecord>& records) {
  struct Acc {
    std::set<std::string> languages;
    std::vector<double> pg, intr, extr;
    double alpha = 0.5;
  };
  std::map<std::string, Acc> by_teacher;
  for (const auto& r : records) {
    auto& a = by_teacher[r.teacher];
    if (!a.languages.insert(r.language).second) {
      throw ValidationError("teacher " + r.teacher + " has two records for " + r.language);
    }
    a.pg.push_back(r.pg_score);
    a.intr.push_back(r.intrinsic);
    a.extr.push_back(r.extrinsic);
    a.alpha = r.alpha;
  }
  std::vector<PgScoreRecord> out;
  const std::set<std::string>* first = nullptr;
  for (const auto& [teacher, a] : by_teacher) {
    if (first && a.languages != *first) {
      throw ValidationError("teachers were not scored on the same languages");
    }
    first = &a.languages;
    PgScoreRecord r;
    r.teacher = teacher;
    r.language = "avg";
    r.alpha = a.alpha;
    r.pg_score = kahan_mean(a.pg);
    r.intrinsic = kahan_mean(a.intr);
    r.extrinsic = kahan_mean(a.extr);
    out.push_back(std::move(r));
  }
  return out;
}

json to_json(const PgScoreRecord& r) {
  return {{"teacher", r.teacher},     {"language", r.language}, {"trial", r.trial},
          {"intrinsic", r.intrinsic}, {"extrinsic", r.extrinsic}, {"alpha", r.alpha},
          {"pg_score", r.pg_score},   {"rank", r.rank}};
}

PgScoreRecord pgscore_from_json(const json& j) {
  try {
    PgScoreRecord r;
    r.teacher = j.at("teacher").get<std::string>();
    r.language = j.at("language").get<std::string>();
    r.trial = j.value("trial", 0);
    r.intrinsic = j.at("intrinsic").get<double>();
    r.extrinsic = j.at("extrinsic").get<double>();
    r.alpha = j.at("alpha").get<double>();
    r.pg_score = j.at("pg_score").get<double>();
    r.rank = j.value("rank", 0);
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed PG-Score record: ") + e.what());
  }
}

}  // namespace polyglot
