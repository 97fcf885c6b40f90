#pragma once

// Statistical analyses over scored cohorts: PCA of intrinsic features,
// regression on principal components, Spearman statistics, the alpha
// weighting ablation, the teacher-strength regression and language-property
// correlation.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polyglot/intrinsic.hpp"
#include "polyglot/scoring.hpp"

namespace polyglot {

struct FeatureMatrix {
  std::vector<std::string> row_keys;
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // rows x columns

  /// Unique row keys and column names, consistent shape, finite cells.
  void validate() const;
  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

/// Default six features: d_x, d_y, -log(1 + PPL), R and the two mean lengths.
std::vector<std::string> default_feature_names();

/// Builds a feature row per record, keyed "teacher/language/trial". Unknown
/// feature names throw ValidationError.
FeatureMatrix feature_matrix(const std::vector<IntrinsicRecord>& records,
                             const std::vector<int>& trials,
                             const std::vector<std::string>& features = default_feature_names());

struct PcaResult {
  std::vector<std::string> features;
  Eigen::VectorXd means;
  Eigen::VectorXd scales;  // population standard deviations
  /// Column k holds the loadings of PC k+1; unit length, mutually orthogonal.
  Eigen::MatrixXd loadings;
  Eigen::VectorXd eigenvalues;
  Eigen::VectorXd variance_fraction;
  Eigen::VectorXd cumulative_fraction;

  Eigen::MatrixXd standardize(const Eigen::MatrixXd& x) const;
  /// Principal component scores of raw rows.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
  /// Maps scores back to standardized feature space.
  Eigen::MatrixXd reconstruct_standardized(const Eigen::MatrixXd& scores) const;
};

/// PCA on the correlation structure of the columns. The largest-magnitude
/// entry of every loading vector is made positive. Throws ValidationError for
/// fewer than two rows or a constant column.
PcaResult pca(const FeatureMatrix& matrix);

struct RegressionFit {
  std::string method;
  std::vector<std::string> predictors;  // first is "intercept"
  std::vector<double> beta;
  std::vector<double> se;
  std::vector<double> p;
  double df = 0.0;
  /// Coefficient of determination; nullopt when the evaluated target has zero variance.
  std::optional<double> r2;
  double rmse = 0.0;
  std::vector<std::string> train_keys;
  std::vector<std::string> test_keys;
  std::uint64_t split_seed = 0;
  std::vector<std::string> notes;
};

/// Ordinary least squares with a column-pivoted QR. `x` must already contain
/// any intercept column. Throws SingularDesignError for a rank-deficient
/// design and DegenerateError when no residual degrees of freedom remain.
/// r2 and rmse are in-sample.
RegressionFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                  std::vector<std::string> predictor_names);

/// Seeded shuffle, first round(split * n) rows train. PCA is fitted on the
/// training rows only; OLS on the training PC scores; R2 and RMSE on the
/// held-out rows.
RegressionFit fit_pc_regression(const FeatureMatrix& matrix, const std::vector<double>& target,
                                double split, std::uint64_t seed,
                                std::optional<std::size_t> components = std::nullopt);

struct RankStats {
  std::optional<double> rho;  // nullopt when either input is entirely tied
  std::size_t n = 0;
  std::size_t ties_a = 0;  // values sharing a rank with another value
  std::size_t ties_b = 0;
  std::optional<double> p;  // two-sided, t approximation with n - 2 df
};

/// Spearman correlation: Pearson correlation of fractional ranks.
RankStats spearman(const std::vector<double>& a, const std::vector<double>& b);

inline const std::vector<double> kDefaultAlphaGrid = {0.0, 0.25, 0.5, 0.75, 1.0};

struct AblationResult {
  std::vector<double> alphas;
  /// scores[k] holds PG-Scores for alphas[k], concatenated over cohorts in
  /// input order and teachers in cohort order.
  std::vector<std::vector<double>> scores;
  /// Symmetric; NaN where the correlation is undefined.
  Eigen::MatrixXd rho;
};

AblationResult weight_ablation(const std::vector<Cohort>& cohorts,
                               const std::vector<double>& alphas = kDefaultAlphaGrid);

struct StrengthRow {
  std::string teacher;
  std::string language;
  int trial = 0;
  double pg_score = 0.0;
  /// Billions of parameters; unknown for closed models.
  std::optional<double> param_size_b;
  std::optional<double> multilingual_perf;
};

enum class StrengthPredictor { LogParamSize, MultilingualPerf };

/// OLS of PG-Score on the chosen predictors plus language indicator columns
/// (first language in sorted order is the reference level). Rows missing a
/// chosen predictor are excluded and listed in the fit notes.
RegressionFit strength_regression(const std::vector<StrengthRow>& rows,
                                  const std::vector<StrengthPredictor>& predictors);

enum class LanguageAggregate { Median, Mean };

/// Spearman correlation across languages between an aggregate of the
/// teachers' PG-Scores and a numeric language property.
RankStats property_correlation(const std::map<std::string, std::vector<double>>& pg_by_language,
                               const std::map<std::string, double>& property_by_language,
                               LanguageAggregate aggregate = LanguageAggregate::Median);

}  // namespace polyglot
