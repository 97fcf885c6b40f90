#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>
#include <memory>
#include <random>
#include <string>

#include "polyglot/inference_client.hpp"
#include "support/stub_server.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 g(std::random_device{}());
    path_ = fs::temp_directory_path() / ("polyglot-unit-" + std::to_string(g()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline const fs::path kFixtures = POLYGLOT_FIXTURE_DIR;

// Simple comma-separated rows (no quoting), header included.
inline std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
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

inline polyglot::ModelEndpoint endpoint(const std::string& model, const std::string& url = "http://stub/v1") {
  polyglot::ModelEndpoint e;
  e.base_url = url;
  e.model = model;
  return e;
}

inline polyglot::ClientOptions fast_options() {
  polyglot::ClientOptions o;
  o.backoff_base = std::chrono::milliseconds(1);
  o.backoff_cap = std::chrono::milliseconds(4);
  return o;
}

}  // namespace testing_support
