#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace polyglot {

/// Neumaier-compensated running sum; order-sensitive only in the last ulp.
class KahanSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double kahan_mean(std::span<const double> xs);

/// Number of Unicode scalar values in UTF-8 text, or nullopt if the bytes are
/// not valid UTF-8.
std::optional<std::size_t> utf8_length(std::string_view s);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename so readers never see a partial
/// file.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

}  // namespace polyglot
