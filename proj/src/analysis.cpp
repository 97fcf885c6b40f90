#include "polyglot/analysis.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "polyglot/error.hpp"
#include "polyglot/rng.hpp"
#include "polyglot/stats.hpp"

namespace polyglot {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double feature_value(const IntrinsicRecord& r, const std::string& name) {
  if (name == "d_x") return r.d_x;
  if (name == "d_y") return r.d_y;
  if (name == "neg_log1p_ppl") return -std::log1p(r.ppl);
  if (name == "ppl") return r.ppl;
  if (name == "reward") return r.reward;
  if (name == "mean_prompt_len") return r.mean_prompt_len;
  if (name == "mean_resp_len") return r.mean_resp_len;
  throw ValidationError("unknown feature '" + name + "'");
}

FeatureMatrix select_rows(const FeatureMatrix& m, const std::vector<std::size_t>& rows) {
  FeatureMatrix out;
  out.columns = m.columns;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row_keys.push_back(m.row_keys[rows[i]]);
    out.values.row(static_cast<Eigen::Index>(i)) = m.values.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

std::optional<double> r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();
  if (ss_tot <= 1e-12 * std::max(1.0, y.squaredNorm())) return std::nullopt;
  return 1.0 - (y - pred).squaredNorm() / ss_tot;
}

std::size_t tied_count(const std::vector<double>& v) {
  std::map<double, std::size_t> counts;
  for (double x : v) ++counts[x];
  std::size_t tied = 0;
  for (const auto& [x, c] : counts)
    if (c > 1) tied += c;
  return tied;
}

}  // namespace

void FeatureMatrix::validate() const {
  if (static_cast<std::size_t>(values.rows()) != row_keys.size() ||
      static_cast<std::size_t>(values.cols()) != columns.size()) {
    throw ValidationError("feature matrix shape disagrees with its labels");
  }
  if (std::set<std::string>(row_keys.begin(), row_keys.end()).size() != row_keys.size()) {
    throw ValidationError("duplicate row key in feature matrix");
  }
  if (std::set<std::string>(columns.begin(), columns.end()).size() != columns.size()) {
    throw ValidationError("duplicate column name in feature matrix");
  }
  if (!values.allFinite()) throw ValidationError("feature matrix has missing or non-finite cells");
}

std::vector<std::string> default_feature_names() {
  return {"d_x", "d_y", "neg_log1p_ppl", "reward", "mean_prompt_len", "mean_resp_len"};
}

FeatureMatrix feature_matrix(const std::vector<IntrinsicRecord>& records,
                             const std::vector<int>& trials,
                             const std::vector<std::string>& features) {
  if (!trials.empty() && trials.size() != records.size()) {
    throw ValidationError("one trial index per record is required");
  }
  FeatureMatrix m;
  m.columns = features;
  m.values.resize(static_cast<Eigen::Index>(records.size()),
                  static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int trial = trials.empty() ? 0 : trials[i];
    m.row_keys.push_back(records[i].teacher + "/" + records[i].language + "/" +
                         std::to_string(trial));
    for (std::size_t j = 0; j < features.size(); ++j) {
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          feature_value(records[i], features[j]);
    }
  }
  m.validate();
  return m;
}

Eigen::MatrixXd PcaResult::standardize(const Eigen::MatrixXd& x) const {
  if (x.cols() != means.size()) throw ValidationError("column count differs from the fitted PCA");
  return (x.rowwise() - means.transpose()).array().rowwise() / scales.transpose().array();
}

Eigen::MatrixXd PcaResult::transform(const Eigen::MatrixXd& x) const {
  return standardize(x) * loadings;
}

Eigen::MatrixXd PcaResult::reconstruct_standardized(const Eigen::MatrixXd& scores) const {
  return scores * loadings.leftCols(scores.cols()).transpose();
}

PcaResult pca(const FeatureMatrix& matrix) {
  matrix.validate();
  const Eigen::Index n = matrix.rows(), p = matrix.cols();
  if (n < 2) throw ValidationError("PCA needs at least two rows");
  if (p < 1) throw ValidationError("PCA needs at least one column");

  PcaResult r;
  r.features = matrix.columns;
  r.means = matrix.values.colwise().mean().transpose();
  r.scales.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double var =
        (matrix.values.col(j).array() - r.means(j)).square().sum() / static_cast<double>(n);
    const double sd = std::sqrt(var);
    if (sd <= 1e-12 * std::max(1.0, std::abs(r.means(j)))) {
      throw ValidationError("feature '" + matrix.columns[static_cast<std::size_t>(j)] +
                            "' is constant");
    }
    r.scales(j) = sd;
  }
  const Eigen::MatrixXd z = r.standardize(matrix.values);
  const Eigen::MatrixXd corr = (z.transpose() * z) / static_cast<double>(n);
  EigenDecomposition eig = jacobi_eigen(corr);

  r.eigenvalues = eig.values.cwiseMax(0.0);
  r.loadings = eig.vectors;
  for (Eigen::Index k = 0; k < p; ++k) {
    Eigen::Index arg = 0;
    r.loadings.col(k).cwiseAbs().maxCoeff(&arg);
    if (r.loadings(arg, k) < 0.0) r.loadings.col(k) *= -1.0;
  }
  const double total = r.eigenvalues.sum();
  r.variance_fraction = r.eigenvalues / total;
  r.cumulative_fraction.resize(p);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < p; ++k) {
    acc += r.variance_fraction(k);
    r.cumulative_fraction(k) = acc;
  }
  return r;
}

RegressionFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                  std::vector<std::string> predictor_names) {
  const Eigen::Index n = x.rows(), k = x.cols();
  if (y.size() != n) throw ValidationError("target length differs from design rows");
  if (static_cast<Eigen::Index>(predictor_names.size()) != k) {
    throw ValidationError("one name per design column is required");
  }
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("design or target is not finite");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) throw SingularDesignError("design matrix is rank deficient");
  if (n <= k) throw DegenerateError("no residual degrees of freedom");

  RegressionFit fit;
  fit.method = "OLS";
  fit.predictors = std::move(predictor_names);
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd fitted = x * beta;
  const double rss = (y - fitted).squaredNorm();
  fit.df = static_cast<double>(n - k);
  const double sigma2 = rss / fit.df;

  const Eigen::MatrixXd r_upper = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r_upper.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd xtx_inv =
      qr.colsPermutation() * (r_inv * r_inv.transpose()) * qr.colsPermutation().transpose();

  for (Eigen::Index j = 0; j < k; ++j) {
    const double b = beta(j);
    const double se = std::sqrt(std::max(0.0, sigma2 * xtx_inv(j, j)));
    fit.beta.push_back(b);
    fit.se.push_back(se);
    if (se == 0.0) {
      fit.p.push_back(b == 0.0 ? 1.0 : 0.0);
    } else {
      fit.p.push_back(student_t_two_sided_p(b / se, fit.df));
    }
  }
  fit.r2 = r_squared(y, fitted);
  fit.rmse = std::sqrt(rss / static_cast<double>(n));
  return fit;
}

RegressionFit fit_pc_regression(const FeatureMatrix& matrix, const std::vector<double>& target,
                                double split, std::uint64_t seed,
                                std::optional<std::size_t> components) {
  matrix.validate();
  const std::size_t n = static_cast<std::size_t>(matrix.rows());
  if (target.size() != n) throw ValidationError("target length differs from feature rows");
  if (!(split > 0.0 && split < 1.0)) throw ValidationError("split must lie in (0, 1)");
  const std::size_t c = components.value_or(static_cast<std::size_t>(matrix.cols()));
  if (c == 0 || c > static_cast<std::size_t>(matrix.cols())) {
    throw ValidationError("component count out of range");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(split * static_cast<double>(n)));
  if (n_train < c + 2 || n_train >= n) {
    throw ValidationError("split leaves too few training or test rows");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng g(seed);
  order = partial_shuffle(std::move(order), n, g);
  const std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<long>(n_train));
  const std::vector<std::size_t> test_idx(order.begin() + static_cast<long>(n_train), order.end());

  const FeatureMatrix train = select_rows(matrix, train_idx);
  const FeatureMatrix test = select_rows(matrix, test_idx);
  const PcaResult pc = pca(train);

  auto design = [&](const FeatureMatrix& m) {
    const Eigen::MatrixXd scores = pc.transform(m.values);
    Eigen::MatrixXd x(scores.rows(), static_cast<Eigen::Index>(c) + 1);
    x.col(0).setOnes();
    x.rightCols(static_cast<Eigen::Index>(c)) = scores.leftCols(static_cast<Eigen::Index>(c));
    return x;
  };
  auto targets = [&](const std::vector<std::size_t>& idx) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) y(static_cast<Eigen::Index>(i)) = target[idx[i]];
    return y;
  };

  std::vector<std::string> names = {"intercept"};
  for (std::size_t k = 1; k <= c; ++k) names.push_back("PC" + std::to_string(k));
  RegressionFit fit = ols(design(train), targets(train_idx), names);

  const Eigen::MatrixXd x_test = design(test);
  const Eigen::VectorXd y_test = targets(test_idx);
  const Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(
      fit.beta.data(), static_cast<Eigen::Index>(fit.beta.size()));
  const Eigen::VectorXd pred = x_test * beta;
  fit.r2 = r_squared(y_test, pred);
  fit.rmse = std::sqrt((y_test - pred).squaredNorm() / static_cast<double>(y_test.size()));
  fit.method = "OLS on principal components";
  fit.train_keys = train.row_keys;
  fit.test_keys = test.row_keys;
  fit.split_seed = seed;
  fit.notes.push_back("PCA fitted on training rows only");
  if (!fit.r2) fit.notes.push_back("test target has zero variance; R2 undefined");
  return fit;
}

RankStats spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("spearman inputs differ in length");
  if (a.size() < 3) throw ValidationError("spearman needs at least three pairs");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) {
      throw ValidationError("spearman input is not finite");
    }
  }
  RankStats s;
  s.n = a.size();
  s.ties_a = tied_count(a);
  s.ties_b = tied_count(b);
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double mean = (static_cast<double>(s.n) + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) return s;
  const double rho = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  s.rho = rho;
  const double df = static_cast<double>(s.n) - 2.0;
  if (std::abs(rho) >= 1.0) {
    s.p = 0.0;
  } else {
    s.p = student_t_two_sided_p(rho * std::sqrt(df / (1.0 - rho * rho)), df);
  }
  return s;
}

AblationResult weight_ablation(const std::vector<Cohort>& cohorts,
                               const std::vector<double>& alphas) {
  if (alphas.size() < 2) throw ValidationError("alpha grid needs at least two values");
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("alpha grid values must lie in [0, 1]");
  }
  if (cohorts.empty()) throw ValidationError("no cohorts to ablate");
  std::vector<IntrinsicAggregate> aggregates;
  for (const auto& c : cohorts) aggregates.push_back(intrinsic_aggregate(c));

  AblationResult r;
  r.alphas = alphas;
  for (double alpha : alphas) {
    std::vector<double> all;
    for (std::size_t ci = 0; ci < cohorts.size(); ++ci) {
      const auto& entries = cohorts[ci].entries;
      std::vector<double> combined(entries.size());
      for (std::size_t i = 0; i < entries.size(); ++i) {
        combined[i] =
            alpha * aggregates[ci].intr[i] + (1.0 - alpha) * entries[i].extrinsic.mean_pgr;
      }
      const ZScores z = zscore(combined);
      all.insert(all.end(), z.values.begin(), z.values.end());
    }
    r.scores.push_back(std::move(all));
  }
  const auto k = static_cast<Eigen::Index>(alphas.size());
  r.rho = Eigen::MatrixXd::Constant(k, k, kNaN);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i; j < k; ++j) {
      const RankStats s = spearman(r.scores[static_cast<std::size_t>(i)],
                                   r.scores[static_cast<std::size_t>(j)]);
      const double v = s.rho.value_or(kNaN);
      r.rho(i, j) = v;
      r.rho(j, i) = v;
    }
  }
  return r;
}

RegressionFit strength_regression(const std::vector<StrengthRow>& rows,
                                  const std::vector<StrengthPredictor>& predictors) {
  if (predictors.empty()) throw ValidationError("no strength predictors selected");
  std::vector<const StrengthRow*> kept;
  std::set<std::string> excluded;
  for (const auto& row : rows) {
    bool ok = std::isfinite(row.pg_score);
    for (auto p : predictors) {
      if (p == StrengthPredictor::LogParamSize && !(row.param_size_b && *row.param_size_b > 0.0)) ok = false;
      if (p == StrengthPredictor::MultilingualPerf && !row.multilingual_perf) ok = false;
    }
    if (ok) {
      kept.push_back(&row);
    } else {
      excluded.insert(row.teacher);
    }
  }
  std::set<std::string> language_set;
  for (const auto* row : kept) language_set.insert(row->language);
  const std::vector<std::string> languages(language_set.begin(), language_set.end());

  std::vector<std::string> names = {"intercept"};
  for (auto p : predictors) {
    names.push_back(p == StrengthPredictor::LogParamSize ? "log_param_size" : "avg_multilingual_perf");
  }
  for (std::size_t l = 1; l < languages.size(); ++l) names.push_back("lang[" + languages[l] + "]");

  const auto n = static_cast<Eigen::Index>(kept.size());
  const auto k = static_cast<Eigen::Index>(names.size());
  if (n == 0) throw ValidationError("no rows with the selected predictors");
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, k);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = *kept[static_cast<std::size_t>(i)];
    y(i) = row.pg_score;
    x(i, 0) = 1.0;
    Eigen::Index col = 1;
    for (auto p : predictors) {
      x(i, col++) = p == StrengthPredictor::LogParamSize ? std::log(*row.param_size_b)
                                                         : *row.multilingual_perf;
    }
    for (std::size_t l = 1; l < languages.size(); ++l, ++col) {
      x(i, col) = row.language == languages[l] ? 1.0 : 0.0;
    }
  }
  RegressionFit fit = ols(x, y, std::move(names));
  fit.method = "OLS + language fixed effects";
  for (const auto& t : excluded) fit.notes.push_back("excluded teacher without predictor: " + t);
  return fit;
}

RankStats property_correlation(const std::map<std::string, std::vector<double>>& pg_by_language,
                               const std::map<std::string, double>& property_by_language,
                               LanguageAggregate aggregate) {
  std::vector<double> a, b;
  for (const auto& [lang, scores] : pg_by_language) {
    auto it = property_by_language.find(lang);
    if (it == property_by_language.end() || scores.empty()) continue;
    a.push_back(aggregate == LanguageAggregate::Median
                    ? median(scores)
                    : std::accumulate(scores.begin(), scores.end(), 0.0) /
                          static_cast<double>(scores.size()));
    b.push_back(it->second);
  }
  if (a.size() < 3) throw ValidationError("fewer than three languages have both values");
  return spearman(a, b);
}

}  // namespace polyglot
