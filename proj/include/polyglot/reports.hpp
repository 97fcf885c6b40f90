#pragma once

// CSV and plain-text tables built from the artifacts of a run directory.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace polyglot {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
  /// Right-aligned columns separated by two spaces, with a rule under the header.
  std::string to_text(std::string_view title = {}) const;
};

/// Kinds: pgscore, pgscore-summary, intrinsic, extrinsic, pca, ablation,
/// regress, strength, correlate.
std::vector<std::string> report_kinds();

/// Builds the table for `kind` from the run directory. Throws PipelineError
/// when the stage that produces the data has not completed.
Table build_report(const std::filesystem::path& run_dir, std::string_view kind);

/// Writes reports/<kind>.csv and reports/<kind>.txt; returns their paths
/// relative to the run directory.
std::vector<std::string> emit_report(const std::filesystem::path& run_dir, std::string_view kind);

/// Fixed-precision number formatting used in every report ("NA" for NaN).
std::string format_number(double value, int precision = 6);

}  // namespace polyglot
