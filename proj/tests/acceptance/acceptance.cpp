// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "polyglot/analysis.hpp"
#include "polyglot/error.hpp"
#include "polyglot/extrinsic.hpp"
#include "polyglot/intrinsic.hpp"
#include "polyglot/pipeline.hpp"
#include "polyglot/scoring.hpp"
#include "polyglot/stats.hpp"
#include "polyglot/util.hpp"
#include "support/pipeline_script.hpp"
#include "support/stub_server.hpp"

using namespace polyglot;
using nlohmann::json;
namespace fs = std::filesystem;

#ifndef POLYGLOT_FIXTURE_DIR
#error "POLYGLOT_FIXTURE_DIR must be defined"
#endif

namespace {

const fs::path kFixtures = POLYGLOT_FIXTURE_DIR;

struct Outcome {
  std::vector<std::string> failures;
  std::string summary;

  void check(bool cond, const std::string& what) {
    if (!cond && failures.size() < 5) failures.push_back(what);
    if (!cond) ++failed;
  }
  int failed = 0;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// 1. PGR formula cases and affine invariance
void criterion_pgr(Outcome& o) {
  o.check(pgr(0.3, 0.3, 0.7).value() == 0.0, "student at base gives 0");
  o.check(close(pgr(0.7, 0.3, 0.7).value(), 1.0, 1e-12), "student at reference gives 1");
  o.check(close(pgr(0.5, 0.3, 0.7).value(), 0.5, 1e-12), "midpoint gives 0.5");
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> u(-5, 5), scale(0.1, 10);
  for (int i = 0; i < 1000; ++i) {
    const double base = u(g), ref = base + (g() % 2 ? 1 : -1) * scale(g), student = u(g);
    const double a = (g() % 2 ? 1 : -1) * scale(g), b = u(g);
    const double p0 = pgr(student, base, ref).value();
    const double p1 = pgr(a * student + b, a * base + b, a * ref + b).value();
    o.check(close(p0, p1, 1e-9 * std::max(1.0, std::abs(p0))), "affine invariance at triple " + std::to_string(i));
  }
  o.summary = "3 cases exact, 1000 affine triples";
}

// 2. z-scores and the intrinsic aggregate
void criterion_zscore(Outcome& o) {
  std::mt19937_64 g(2);
  std::normal_distribution<double> nd(3.0, 7.0);
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 2 + g() % 30;
    std::vector<double> v(n);
    for (auto& x : v) x = nd(g);
    const ZScores z = zscore(v);
    double mean = 0, var = 0;
    for (double x : z.values) mean += x;
    mean /= n;
    for (double x : z.values) var += (x - mean) * (x - mean);
    o.check(close(mean, 0.0, 1e-9) && close(std::sqrt(var / n), 1.0, 1e-9), "cohort " + std::to_string(c));
    const std::vector<double> two = {nd(g), nd(g)};
    const ZScores z2 = zscore(two);
    o.check(z2.values[0] == -z2.values[1], "two-teacher antisymmetry");
  }
  const auto metrics = read_csv(kFixtures / "table8_german.csv");
  const auto oracle = read_csv(kFixtures / "table8_german_intr.csv");
  std::vector<std::array<double, 4>> raw;
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    raw.push_back({std::stod(metrics[i][1]), std::stod(metrics[i][2]), std::stod(metrics[i][3]),
                   std::stod(metrics[i][4])});
  }
  const IntrinsicAggregate agg = intrinsic_aggregate(raw);
  std::map<std::string, double> intr;
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    intr[metrics[i][0]] = agg.intr[i - 1];
    o.check(oracle[i][0] == metrics[i][0] && close(agg.intr[i - 1], std::stod(oracle[i][1]), 1e-9),
            "fixture Intr for " + metrics[i][0]);
  }
  o.check(intr.at("Gemma 3 27B") > intr.at("Llama 3.1 8B"), "Gemma 3 27B Intr above Llama 3.1 8B");
  o.summary = "1000 cohorts; German fixture Gemma 3 27B " + fmt(intr.at("Gemma 3 27B")) +
              " > Llama 3.1 8B " + fmt(intr.at("Llama 3.1 8B"));
}

std::vector<int> order_desc(const std::vector<double>& v) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] > v[b]; });
  return idx;
}

// 3. alpha equivalence and endpoints
void criterion_alpha(Outcome& o) {
  std::mt19937_64 g(3);
  std::normal_distribution<double> nd;
  for (int c = 0; c < 200; ++c) {
    const std::size_t n = 3 + g() % 10;
    std::vector<double> intr(n), extr(n);
    for (std::size_t i = 0; i < n; ++i) {
      intr[i] = nd(g);
      extr[i] = nd(g);
    }
    std::vector<double> sum(n);
    for (std::size_t i = 0; i < n; ++i) sum[i] = intr[i] + extr[i];
    const ZScores direct = zscore(sum);
    for (double alpha : {0.5, 0.0, 1.0}) {
      std::vector<double> combined(n);
      for (std::size_t i = 0; i < n; ++i) combined[i] = alpha * intr[i] + (1 - alpha) * extr[i];
      std::vector<PgScoreRecord> recs;
      std::vector<double> pg(n);
      for (std::size_t i = 0; i < n; ++i) {
        pg[i] = pg_score(intr[i], extr[i], alpha, combined);
        recs.push_back({"t" + std::to_string(i), "xx", 0, intr[i], extr[i], alpha, pg[i], 0});
      }
      if (alpha == 0.5) {
        for (std::size_t i = 0; i < n; ++i) o.check(close(pg[i], direct.values[i], 1e-12), "alpha 0.5 equivalence");
        continue;
      }
      const auto ranked = rank_cohort(recs);
      const auto expected = order_desc(alpha == 1.0 ? intr : extr);
      for (std::size_t r = 0; r < n; ++r) {
        o.check(ranked[r].teacher == "t" + std::to_string(expected[r]),
                "alpha " + fmt(alpha) + " ranking matches single component");
      }
    }
  }
  o.summary = "200 cohorts";
}

double brute_diversity(const std::vector<std::vector<double>>& v) {
  double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < v[i].size(); ++k) {
        dot += v[i][k] * v[j][k];
        na += v[i][k] * v[i][k];
        nb += v[j][k] * v[j][k];
      }
      sum += 1.0 - dot / std::sqrt(na * nb);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

// 4. diversity
void criterion_diversity(Outcome& o) {
  std::mt19937_64 g(4);
  std::normal_distribution<double> nd;
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 2 + g() % 199, dim = 1 + g() % 32;
    std::vector<std::vector<double>> v(n, std::vector<double>(dim));
    for (auto& row : v) {
      for (auto& x : row) x = nd(g);
    }
    o.check(close(diversity(v), brute_diversity(v), 1e-9), "corpus " + std::to_string(c));
  }
  o.check(diversity(std::vector<std::vector<double>>(10, {0.3, -1.2, 4.0})) == 0.0, "identical vectors give 0");
  o.check(diversity({{1, 0, 0}, {0, 5, 0}}) == 1.0, "orthogonal pair gives 1");
  o.summary = "100 corpora";
}

ModelEndpoint base_endpoint() {
  ModelEndpoint e;
  e.base_url = "http://stub/v1";
  e.model = "base";
  return e;
}

SyntheticDataset dataset_of(const std::vector<std::pair<std::string, std::string>>& pairs) {
  SyntheticDataset ds;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    SyntheticPair p;
    p.prompt = pairs[i].first;
    p.response = pairs[i].second;
    p.sequence = i;
    ds.pairs.push_back(p);
  }
  return ds;
}

// 5. perplexity
void criterion_perplexity(Outcome& o) {
  const auto ds = dataset_of({{"Wie spät ist es?", "Es ist acht Uhr."}, {"Hallo", "Guten Tag, wie geht es?"}});
  for (double vocab : {2.0, 3.0, 1000.0, 32000.0, 128256.0, 256000.0}) {
    auto t = std::make_shared<stub::FakeTransport>([&](const std::string&, const json& body) {
      return stub::per_byte_logprobs(body.at("prompt").get<std::string>(),
                                     [&](std::size_t) { return -std::log(vocab); });
    });
    InferenceClient client({}, t);
    const double ppl = dataset_perplexity(client, ds, base_endpoint()).ppl;
    // -log(V) is itself rounded, so equality holds to a few ulp
    o.check(std::abs(ppl - vocab) <= 4 * std::numeric_limits<double>::epsilon() * vocab,
            "uniform logprob over " + fmt(vocab) + " gives " + fmt(ppl));
  }

  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> lpd(-8.0, -0.01);
  for (int f = 0; f < 50; ++f) {
    const std::size_t npairs = 1 + g() % 5;
    std::vector<std::pair<std::string, std::string>> pairs;
    std::map<std::string, std::vector<double>> by_prompt;  // full text -> continuation logprobs
    double hand = 0;
    for (std::size_t i = 0; i < npairs; ++i) {
      const std::string prompt = "fixture " + std::to_string(f) + " prompt " + std::to_string(i);
      const std::string response(1 + g() % 40, static_cast<char>('a' + i));
      std::vector<double> lps(response.size());
      double sum = 0;
      for (auto& x : lps) {
        x = lpd(g);
        sum += x;
      }
      hand += std::exp(-sum / static_cast<double>(lps.size()));
      by_prompt[prompt + "\n\n" + response] = lps;
      pairs.push_back({prompt, response});
    }
    hand /= static_cast<double>(npairs);
    auto t = std::make_shared<stub::FakeTransport>([&](const std::string&, const json& body) {
      const std::string full = body.at("prompt").get<std::string>();
      const auto& lps = by_prompt.at(full);
      const std::size_t ctx = full.size() - lps.size();
      return stub::per_byte_logprobs(full, [&](std::size_t i) { return i < ctx ? -0.5 : lps[i - ctx]; });
    });
    InferenceClient client({}, t);
    const double ppl = dataset_perplexity(client, dataset_of(pairs), base_endpoint()).ppl;
    o.check(close(ppl, hand, 1e-9 * std::max(1.0, hand)), "fixture " + std::to_string(f));
  }

  double prev = 0;
  for (double lp = -0.1; lp >= -6.0; lp -= 0.3) {
    auto t = std::make_shared<stub::FakeTransport>([&](const std::string&, const json& body) {
      return stub::per_byte_logprobs(body.at("prompt").get<std::string>(), [&](std::size_t) { return lp; });
    });
    InferenceClient client({}, t);
    const double ppl = dataset_perplexity(client, ds, base_endpoint()).ppl;
    o.check(ppl > prev, "perplexity increases as logprob decreases");
    prev = ppl;
  }
  o.summary = "uniform vocabularies, 50 fixtures, monotone sweep";
}

// 6. PCA against an independent eigen-solver
void criterion_pca(Outcome& o) {
  std::mt19937_64 g(6);
  std::normal_distribution<double> nd;
  for (int c = 0; c < 50; ++c) {
    const Eigen::Index n = 10 + static_cast<Eigen::Index>(g() % 40);
    FeatureMatrix m;
    m.values.resize(n, 6);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < 6; ++j) m.values(i, j) = nd(g) * (j + 1) + (j == 3 ? m.values(i, 0) : 0.0);
      m.row_keys.push_back("r" + std::to_string(i));
    }
    m.columns = {"a", "b", "c", "d", "e", "f"};
    const PcaResult r = pca(m);

    const Eigen::RowVectorXd mean = m.values.colwise().mean();
    const Eigen::MatrixXd centered = m.values.rowwise() - mean;
    const Eigen::RowVectorXd sd = (centered.array().square().colwise().sum() / n).sqrt();
    const Eigen::MatrixXd std_x = centered.array().rowwise() / sd.array();
    const Eigen::MatrixXd cov = std_x.transpose() * std_x / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    for (int k = 0; k < 6; ++k) {
      const double val = es.eigenvalues()(5 - k);
      const Eigen::VectorXd vec = es.eigenvectors().col(5 - k);
      o.check(close(r.eigenvalues(k), val, 1e-8), "eigenvalue " + std::to_string(k));
      const double sign = vec.dot(r.loadings.col(k)) < 0 ? -1.0 : 1.0;
      o.check((sign * vec - r.loadings.col(k)).cwiseAbs().maxCoeff() < 1e-8, "loading " + std::to_string(k));
      o.check(close(r.variance_fraction(k), val / es.eigenvalues().sum(), 1e-8), "variance fraction");
    }
    o.check(close(r.variance_fraction.sum(), 1.0, 1e-9), "fractions sum to 1");
    const Eigen::MatrixXd rec = r.reconstruct_standardized(r.transform(m.values));
    o.check((rec - r.standardize(m.values)).cwiseAbs().maxCoeff() < 1e-8, "reconstruction");
  }
  FeatureMatrix rank1;
  rank1.columns = {"a", "b", "c", "d", "e", "f"};
  rank1.values.resize(8, 6);
  const double w[6] = {1.0, -2.0, 0.5, 3.0, -0.25, 7.0};
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 6; ++j) rank1.values(i, j) = (i * i - 3.0 * i + 1.0) * w[j];
    rank1.row_keys.push_back("r" + std::to_string(i));
  }
  const PcaResult r1 = pca(rank1);
  o.check(close(r1.variance_fraction(0), 1.0, 1e-9), "rank-1 matrix gives PC1 fraction 1");
  o.summary = "50 matrices; rank-1 PC1 fraction " + fmt(r1.variance_fraction(0));
}

// Gaussian elimination with partial pivoting on the normal equations.
std::vector<double> normal_equations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const int k = static_cast<int>(x.cols());
  std::vector<std::vector<double>> a(k, std::vector<double>(k + 1, 0.0));
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      for (int r = 0; r < x.rows(); ++r) a[i][j] += x(r, i) * x(r, j);
    }
    for (int r = 0; r < x.rows(); ++r) a[i][k] += x(r, i) * y(r);
  }
  for (int c = 0; c < k; ++c) {
    int piv = c;
    for (int r = c + 1; r < k; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    for (int r = c + 1; r < k; ++r) {
      const double f = a[r][c] / a[c][c];
      for (int j = c; j <= k; ++j) a[r][j] -= f * a[c][j];
    }
  }
  std::vector<double> b(k);
  for (int i = k - 1; i >= 0; --i) {
    double s = a[i][k];
    for (int j = i + 1; j < k; ++j) s -= a[i][j] * b[j];
    b[i] = s / a[i][i];
  }
  return b;
}

// 7. regression
void criterion_regression(Outcome& o) {
  std::mt19937_64 g(7);
  std::normal_distribution<double> nd;
  for (int c = 0; c < 50; ++c) {
    const int n = 12 + static_cast<int>(g() % 50), k = 2 + static_cast<int>(g() % 5);
    Eigen::MatrixXd x(n, k);
    Eigen::VectorXd y(n);
    std::vector<std::string> names = {"intercept"};
    for (int i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      for (int j = 1; j < k; ++j) x(i, j) = nd(g);
      y(i) = nd(g);
    }
    for (int j = 1; j < k; ++j) names.push_back("x" + std::to_string(j));
    const RegressionFit fit = ols(x, y, names);
    const auto oracle = normal_equations(x, y);
    for (int j = 0; j < k; ++j) o.check(close(fit.beta[j], oracle[j], 1e-8), "design " + std::to_string(c));
  }
  FeatureMatrix m;
  m.columns = default_feature_names();
  m.values.resize(40, 6);
  std::vector<double> target;
  const double w[6] = {0.7, -1.3, 2.0, 0.4, -0.05, 0.01};
  for (int i = 0; i < 40; ++i) {
    double t = 1.5;
    for (int j = 0; j < 6; ++j) {
      m.values(i, j) = nd(g) * (j + 1);
      t += w[j] * m.values(i, j);
    }
    target.push_back(t);
    m.row_keys.push_back("r" + std::to_string(i));
  }
  const RegressionFit fit = fit_pc_regression(m, target, 0.8, 11);
  o.check(fit.r2.has_value() && close(*fit.r2, 1.0, 1e-9), "noiseless target gives test R2 = 1");
  o.check(close(fit.rmse, 0.0, 1e-9), "noiseless target gives test RMSE = 0");
  o.summary = "50 designs; noiseless test R2 " + fmt(fit.r2.value_or(NAN)) + " RMSE " + fmt(fit.rmse);
}

std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double x : v) {
      less += x < v[i];
      equal += x == v[i];
    }
    r[i] = less + (equal + 1) / 2.0;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// 8. Spearman
void criterion_spearman(Outcome& o) {
  std::vector<double> a(20), rev(20);
  for (int i = 0; i < 20; ++i) {
    a[i] = std::exp(0.3 * i);
    rev[i] = -i * i;
  }
  std::vector<double> lin(20);
  std::iota(lin.begin(), lin.end(), 0.0);
  o.check(spearman(lin, a).rho == 1.0, "monotone gives +1");
  o.check(spearman(lin, rev).rho == -1.0, "reversed gives -1");
  std::mt19937_64 g(8);
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 3 + g() % 30;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(g() % 5);
      y[i] = static_cast<double>(g() % 7);
    }
    const RankStats s = spearman(x, y);
    const auto rx = brute_ranks(x), ry = brute_ranks(y);
    o.check(average_ranks(x) == rx, "average ranks");
    const bool flat = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
                      std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (flat) {
      o.check(!s.rho.has_value(), "all-tied input has no rho");
    } else {
      o.check(s.rho.has_value() && close(*s.rho, pearson(rx, ry), 1e-12), "tied vector " + std::to_string(c));
    }
  }
  const auto t1 = read_csv(kFixtures / "table1_pgscores.csv");
  const auto t11 = read_csv(kFixtures / "table11_commoncrawl.csv");
  std::map<std::string, std::vector<double>> by_lang;
  for (std::size_t r = 1; r < t1.size(); ++r) {
    for (std::size_t c = 1; c + 1 < t1[0].size(); ++c) by_lang[t1[0][c]].push_back(std::stod(t1[r][c]));
  }
  std::map<std::string, double> cc;
  for (std::size_t r = 1; r < t11.size(); ++r) cc[t11[r][0]] = std::stod(t11[r][1]);
  const RankStats s = property_correlation(by_lang, cc);
  o.check(s.rho.has_value() && close(*s.rho, 0.886, 0.001), "CommonCrawl fixture rho");
  o.summary = "1000 tied vectors; CommonCrawl fixture rho " + fmt(s.rho.value_or(NAN)) + " (n " +
              std::to_string(s.n) + ")";
}

// 9. judge parse corpus
void criterion_judge(Outcome& o) {
  std::ifstream in(kFixtures / "judge_verdicts.json");
  const json cases = json::parse(in);
  int ok = 0;
  for (const auto& c : cases) {
    const JudgeVerdict v = parse_judge(c.at("text").get<std::string>());
    const std::string status = c.at("status").get<std::string>();
    const JudgeParseStatus want = status == "ok"          ? JudgeParseStatus::Ok
                                  : status == "no_marker" ? JudgeParseStatus::NoMarker
                                                          : JudgeParseStatus::InvalidValue;
    const std::optional<int> score =
        c.at("score").is_null() ? std::nullopt : std::optional<int>(c.at("score").get<int>());
    o.check(v.status == want && v.score == score, "verdict: " + c.at("text").dump());
    o.check(!v.score || (*v.score >= 1 && *v.score <= 5), "score out of range");
    ok += v.status == JudgeParseStatus::Ok;
  }
  o.check(cases.size() == 40, "corpus holds 40 verdicts");
  o.summary = std::to_string(cases.size()) + " verdicts, " + std::to_string(ok) + " scored";
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

// 10. end-to-end determinism against the scripted stub server
void criterion_e2e(Outcome& o) {
  const fs::path work = fs::temp_directory_path() / ("polyglot-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(work);
  e2e::write_seed_corpus(work / "seed.jsonl");
  e2e::write_scores(work / "scores.jsonl");
  stub::Server server(e2e::script);

  auto run = [&](const std::string& out) {
    const RunConfig cfg = RunConfig::from_json(e2e::config_json(server.url(), work / out, work / "cache"), work);
    Pipeline p(cfg);
    p.run();
    return std::make_pair(p.client_stats(), p.run_dir());
  };

  const auto [first, dir1] = run("out1");
  const int requests_after_first = server.requests();
  o.check(first.network_calls > 0 && requests_after_first > 0, "first run contacts the stub");
  const auto [second, dir2] = run("out2");
  o.check(second.network_calls == 0 && server.requests() == requests_after_first,
          "primed cache run makes zero network calls");

  const auto tree1 = read_tree(dir1), tree2 = read_tree(dir2);
  o.check(tree1 == tree2, "re-run emits byte-identical artifacts");
  o.check(tree1.count("manifest/manifest.json") && tree1.count("reports/pgscore.csv"), "manifest and reports exist");
  o.check(load_manifest(dir1).complete(Stage::Report), "every stage completes");

  std::map<std::tuple<std::string, int, std::string>, json> emitted;
  for (const auto& line : split(tree1.at("scores/pgscore.jsonl"), '\n')) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    emitted[{j.at("language"), j.at("trial"), j.at("teacher")}] = j;
  }
  const auto expected = e2e::expected_pgscores();
  o.check(emitted.size() == expected.size(), "PG-Score row count");
  for (const auto& e : expected) {
    auto it = emitted.find({e.language, e.trial, e.teacher});
    const std::string id = e.language + "/" + std::to_string(e.trial) + "/" + e.teacher;
    if (it == emitted.end()) {
      o.check(false, "missing PG-Score row " + id);
      continue;
    }
    const json& j = it->second;
    o.check(close(j.at("intrinsic").get<double>(), e.intr, 1e-9), id + " Intr");
    o.check(close(j.at("extrinsic").get<double>(), e.extr, 1e-9), id + " Extr");
    o.check(close(j.at("pg_score").get<double>(), e.pg, 1e-9), id + " PG-Score");
    o.check(j.at("rank").get<int>() == e.rank, id + " rank");
  }
  for (const auto& line : split(tree1.at("metrics/intrinsic.jsonl"), '\n')) {
    if (trim(line).empty()) continue;
    const IntrinsicRecord r = intrinsic_from_json(json::parse(line));
    const auto want = e2e::expected_intrinsic(r.teacher);
    o.check(close(r.d_x, want.d_x, 1e-9) && close(r.d_y, want.d_y, 1e-9) && close(r.ppl, want.ppl, 1e-9) &&
                close(r.reward, want.reward, 1e-12) && r.judge_coverage == 1.0,
            "intrinsic metrics for " + r.teacher + "/" + r.language);
  }
  o.summary = std::to_string(first.network_calls) + " calls first run, " + std::to_string(second.network_calls) +
              " on re-run, " + std::to_string(tree1.size()) + " artifacts identical";
  fs::remove_all(work);
}

// 11. ranking shape of the published averages
void criterion_ranking(Outcome& o) {
  const auto t1 = read_csv(kFixtures / "table1_pgscores.csv");
  std::vector<PgScoreRecord> recs;
  for (std::size_t r = 1; r < t1.size(); ++r) {
    double sum = 0;
    for (std::size_t c = 1; c + 1 < t1[r].size(); ++c) sum += std::stod(t1[r][c]);
    const double mean = sum / static_cast<double>(t1[r].size() - 2);
    o.check(close(mean, std::stod(t1[r].back()), 5e-4 + 1e-12), "fixture average for " + t1[r][0]);
    PgScoreRecord rec;
    rec.teacher = t1[r][0];
    rec.language = "avg";
    rec.pg_score = std::stod(t1[r].back());
    recs.push_back(rec);
  }
  const auto ranked = rank_cohort(recs);
  o.check(ranked[0].teacher == "Gemma 3 27B" && ranked[0].pg_score == 0.726, "first is Gemma 3 27B 0.726");
  o.check(ranked[1].teacher == "Aya Expanse 32B" && ranked[1].pg_score == 0.706, "second is Aya Expanse 32B 0.706");
  o.summary = ranked[0].teacher + " " + fmt(ranked[0].pg_score) + " > " + ranked[1].teacher + " " +
              fmt(ranked[1].pg_score);
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Outcome&)> fn;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "PGR formula oracle", 1, criterion_pgr},
      {2, "z-score and intrinsic aggregate", 1, criterion_zscore},
      {3, "alpha equivalence and endpoints", 1, criterion_alpha},
      {4, "diversity oracle", 5, criterion_diversity},
      {5, "perplexity oracle", 1, criterion_perplexity},
      {6, "PCA oracle", 5, criterion_pca},
      {7, "regression oracle", 5, criterion_regression},
      {8, "Spearman oracle", 2, criterion_spearman},
      {9, "judge parse corpus", 60, criterion_judge},
      {10, "end-to-end determinism", 60, criterion_e2e},
      {11, "ranking shape", 60, criterion_ranking},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.fn(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.check(secs < c.budget_s, "runtime " + fmt(secs) + " s over budget " + fmt(c.budget_s) + " s");
    const bool pass = o.failed == 0;
    failed += !pass;
    std::printf("%s  %2d  %-34s %7.3f s  %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs, o.summary.c_str());
    for (const auto& f : o.failures) std::printf("        %s\n", f.c_str());
    if (o.failed > static_cast<int>(o.failures.size())) {
      std::printf("        ... %d checks failed in total\n", o.failed);
    }
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
