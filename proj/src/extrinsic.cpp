#include "polyglot/extrinsic.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "polyglot/error.hpp"
#include "polyglot/util.hpp"

namespace polyglot {

using nlohmann::json;

namespace {

std::string triple(const std::string& t, const std::string& l, const std::string& b) {
  return "(" + t + ", " + l + ", " + b + ")";
}

double score_field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    throw ValidationError(std::string("missing ") + key + " score for " + where);
  }
  if (!it->is_number()) throw ValidationError(std::string(key) + " score is not a number for " + where);
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ValidationError(std::string(key) + " score is not finite for " + where);
  return v;
}

std::string string_field(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw ValidationError("line " + std::to_string(line) + ": missing " + key);
  }
  return it->get<std::string>();
}

}  // namespace

BenchmarkRegistry::BenchmarkRegistry() : ids_{"culture", "chat", "math"} {}

BenchmarkRegistry::BenchmarkRegistry(std::set<std::string> ids) : ids_(std::move(ids)) {
  if (ids_.empty()) throw ValidationError("benchmark registry is empty");
}

BenchmarkRegistry BenchmarkRegistry::from_file(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw ParseError("invalid benchmark registry: " + path.string());
  const json& arr = j.is_object() ? j.value("benchmarks", json::array()) : j;
  if (!arr.is_array()) throw ParseError("benchmark registry must list ids");
  std::set<std::string> ids;
  for (const auto& v : arr) ids.insert(v.get<std::string>());
  return BenchmarkRegistry(std::move(ids));
}

std::vector<BenchmarkScores> parse_scores(const std::string& text,
                                          const BenchmarkRegistry& registry) {
  std::vector<BenchmarkScores> out;
  std::set<std::tuple<std::string, std::string, std::string, int>> seen;
  std::size_t line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ParseError("scores line " + std::to_string(line_no) + " is not a JSON object");
    }
    BenchmarkScores s;
    s.teacher = string_field(j, "teacher", line_no);
    s.language = string_field(j, "language", line_no);
    s.benchmark = string_field(j, "benchmark", line_no);
    const std::string where = triple(s.teacher, s.language, s.benchmark);
    if (!registry.contains(s.benchmark)) throw ValidationError("unknown benchmark in " + where);
    s.student = score_field(j, "student", where);
    s.base = score_field(j, "base", where);
    s.reference = score_field(j, "reference", where);
    s.trial = j.value("trial", 0);
    if (!seen.emplace(s.teacher, s.language, s.benchmark, s.trial).second) {
      throw ValidationError("duplicate scores for " + where);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<BenchmarkScores> load_scores(const std::filesystem::path& path,
                                         const BenchmarkRegistry& registry) {
  return parse_scores(read_file(path), registry);
}

std::string serialize_scores(const std::vector<BenchmarkScores>& scores) {
  std::string out;
  for (const auto& s : scores) {
    json j = {{"teacher", s.teacher},   {"language", s.language}, {"benchmark", s.benchmark},
              {"student", s.student},   {"base", s.base},         {"reference", s.reference},
              {"trial", s.trial}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::optional<double> pgr(double student, double base, double reference, double epsilon) {
  const double gap = reference - base;
  if (!(std::abs(gap) >= epsilon)) return std::nullopt;
  return (student - base) / gap;
}

ExtrinsicRecord extrinsic_score(const std::vector<BenchmarkScores>& records, double epsilon) {
  if (records.empty()) throw ValidationError("no benchmark scores");
  ExtrinsicRecord r;
  r.teacher = records.front().teacher;
  r.language = records.front().language;
  r.trial = records.front().trial;
  for (const auto& s : records) {
    if (s.teacher != r.teacher || s.language != r.language || s.trial != r.trial) {
      throw ValidationError("scores from different teachers, languages or trials");
    }
    if (r.pgr.count(s.benchmark) ||
        std::find(r.degenerate.begin(), r.degenerate.end(), s.benchmark) != r.degenerate.end()) {
      throw ValidationError("duplicate benchmark " + s.benchmark);
    }
    if (auto v = pgr(s.student, s.base, s.reference, epsilon)) {
      r.pgr[s.benchmark] = *v;
    } else {
      r.degenerate.push_back(s.benchmark);
    }
  }
  std::sort(r.degenerate.begin(), r.degenerate.end());
  if (r.pgr.empty()) {
    throw DegenerateError("every benchmark is degenerate for " + r.teacher + "/" + r.language);
  }
  // map iteration is by benchmark id, so the sum does not depend on input order
  KahanSum sum;
  for (const auto& [id, v] : r.pgr) sum.add(v);
  r.mean_pgr = sum.value() / static_cast<double>(r.pgr.size());
  return r;
}

std::vector<ExtrinsicRecord> extrinsic_scores(const std::vector<BenchmarkScores>& records,
                                              double epsilon) {
  std::map<std::tuple<std::string, std::string, int>, std::vector<BenchmarkScores>> groups;
  for (const auto& s : records) groups[{s.teacher, s.language, s.trial}].push_back(s);
  std::vector<ExtrinsicRecord> out;
  for (const auto& [key, group] : groups) out.push_back(extrinsic_score(group, epsilon));
  return out;
}

json to_json(const ExtrinsicRecord& r) {
  return {{"teacher", r.teacher}, {"language", r.language},     {"trial", r.trial},
          {"pgr", r.pgr},         {"degenerate", r.degenerate}, {"mean_pgr", r.mean_pgr}};
}

ExtrinsicRecord extrinsic_from_json(const json& j) {
  try {
    ExtrinsicRecord r;
    r.teacher = j.at("teacher").get<std::string>();
    r.language = j.at("language").get<std::string>();
    r.trial = j.value("trial", 0);
    r.pgr = j.value("pgr", std::map<std::string, double>{});
    r.degenerate = j.value("degenerate", std::vector<std::string>{});
    r.mean_pgr = j.at("mean_pgr").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed extrinsic record: ") + e.what());
  }
}

}  // namespace polyglot
