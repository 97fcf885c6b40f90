#include "polyglot/reports.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "polyglot/error.hpp"
#include "polyglot/pipeline.hpp"
#include "polyglot/util.hpp"

namespace polyglot {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  for (const auto& line : split(read_file(path), '\n')) {
    if (!trim(line).empty()) out.push_back(json::parse(line));
  }
  return out;
}

std::string num(const json& v, int precision = 6) {
  if (v.is_null()) return "NA";
  return format_number(v.get<double>(), precision);
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

void require_stage(const RunManifest& m, Stage s, std::string_view kind) {
  if (!m.complete(s)) {
    throw PipelineError("report " + std::string(kind) + " needs the " + std::string(to_string(s)) +
                        " stage");
  }
}

json analysis_section(const fs::path& run_dir, const RunManifest& m, std::string_view kind) {
  require_stage(m, Stage::Analyze, kind);
  const json all = json::parse(read_file(run_dir / "reports/analysis.json"));
  const json section = all.value(std::string(kind), json::object());
  if (section.value("status", "") != "ok") {
    throw PipelineError("analysis " + std::string(kind) + " was skipped: " +
                        section.value("reason", std::string("not run")));
  }
  return section;
}

void add_fit_rows(Table& t, const json& fit, const std::string& label) {
  const auto predictors = fit.at("predictors").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < predictors.size(); ++i) {
    std::vector<std::string> row;
    if (!label.empty()) row.push_back(label);
    row.push_back(predictors[i]);
    row.push_back(num(fit.at("beta")[i], 3));
    row.push_back(num(fit.at("se")[i], 3));
    row.push_back(num(fit.at("p")[i], 3));
    t.rows.push_back(std::move(row));
  }
}

}  // namespace

std::string format_number(double value, int precision) {
  if (std::isnan(value)) return "NA";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, value);
  std::string s(buf);
  if (s.find_first_not_of("-0.") == std::string::npos) s = std::string(buf + (buf[0] == '-'));
  return s;
}

std::string Table::to_csv() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_cell(cells[i]);
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::string Table::to_text(std::string_view title) const {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) {
      width[i] = std::max(width[i], utf8_length(r[i]).value_or(r[i].size()));
    }
  }
  std::string out;
  if (!title.empty()) {
    out += title;
    out += "\n\n";
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string l;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) l += "  ";
      const std::size_t len = utf8_length(cells[i]).value_or(cells[i].size());
      l += std::string(width[i] > len ? width[i] - len : 0, ' ');
      l += cells[i];
    }
    out += l;
    out += '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  total += width.empty() ? 0 : 2 * (width.size() - 1);
  out += std::string(total, '-');
  out += '\n';
  for (const auto& r : rows) line(r);
  return out;
}

std::vector<std::string> report_kinds() {
  return {"pgscore", "pgscore-summary", "intrinsic", "extrinsic", "pca",
          "ablation", "regress",        "strength",  "correlate"};
}

Table build_report(const fs::path& run_dir, std::string_view kind) {
  const RunManifest m = load_manifest(run_dir);
  Table t;
  if (kind == "pgscore") {
    require_stage(m, Stage::PgScore, kind);
    t.header = {"language", "trial", "teacher", "Intr", "Extr", "alpha", "PG-Score", "rank", "flags"};
    for (const auto& j : read_jsonl(run_dir / "scores/pgscore.jsonl")) {
      t.rows.push_back({j.at("language").get<std::string>(), std::to_string(j.at("trial").get<int>()),
                        j.at("teacher").get<std::string>(), num(j.at("intrinsic"), 3),
                        num(j.at("extrinsic"), 3), num(j.at("alpha"), 2), num(j.at("pg_score"), 3),
                        std::to_string(j.at("rank").get<int>()),
                        join(j.value("flags", std::vector<std::string>{}), ";")});
    }
  } else if (kind == "pgscore-summary") {
    require_stage(m, Stage::PgScore, kind);
    t.header = {"language", "teacher", "trials", "mean", "SE"};
    for (const auto& j : read_jsonl(run_dir / "scores/pgscore_summary.jsonl")) {
      t.rows.push_back({j.at("language").get<std::string>(), j.at("teacher").get<std::string>(),
                        std::to_string(j.at("trials").get<std::size_t>()), num(j.at("mean"), 3),
                        num(j.at("standard_error"), 3)});
    }
  } else if (kind == "intrinsic") {
    require_stage(m, Stage::Intrinsic, kind);
    t.header = {"language", "trial", "teacher", "d_x", "d_y", "PPL", "R", "judge_coverage",
                "mean_prompt_len", "mean_resp_len", "ppl_excluded"};
    for (const auto& j : read_jsonl(run_dir / "metrics/intrinsic.jsonl")) {
      t.rows.push_back({j.at("language").get<std::string>(), std::to_string(j.at("trial").get<int>()),
                        j.at("teacher").get<std::string>(), num(j.at("d_x"), 3), num(j.at("d_y"), 3),
                        num(j.at("ppl"), 2), num(j.at("reward"), 3), num(j.at("judge_coverage"), 3),
                        num(j.at("mean_prompt_len"), 1), num(j.at("mean_resp_len"), 1),
                        std::to_string(j.at("ppl_excluded").get<std::size_t>())});
    }
  } else if (kind == "extrinsic") {
    require_stage(m, Stage::Extrinsic, kind);
    const auto lines = read_jsonl(run_dir / "scores/extrinsic.jsonl");
    std::set<std::string> benchmarks;
    for (const auto& j : lines) {
      for (const auto& [b, v] : j.at("pgr").items()) benchmarks.insert(b);
      for (const auto& b : j.at("degenerate")) benchmarks.insert(b.get<std::string>());
    }
    t.header = {"language", "trial", "teacher"};
    for (const auto& b : benchmarks) t.header.push_back("PGR:" + b);
    t.header.push_back("mean_PGR");
    t.header.push_back("degenerate");
    for (const auto& j : lines) {
      std::vector<std::string> row = {j.at("language").get<std::string>(),
                                      std::to_string(j.at("trial").get<int>()),
                                      j.at("teacher").get<std::string>()};
      for (const auto& b : benchmarks) {
        const auto& p = j.at("pgr");
        row.push_back(p.contains(b) ? num(p.at(b), 3) : "NA");
      }
      row.push_back(num(j.at("mean_pgr"), 3));
      row.push_back(join(j.at("degenerate").get<std::vector<std::string>>(), ";"));
      t.rows.push_back(std::move(row));
    }
  } else if (kind == "pca") {
    const json s = analysis_section(run_dir, m, kind);
    const auto features = s.at("features").get<std::vector<std::string>>();
    t.header = {"PC", "variance_pct", "cumulative_pct"};
    for (const auto& f : features) t.header.push_back("loading:" + f);
    const auto& var = s.at("variance_fraction");
    const auto& cum = s.at("cumulative_fraction");
    const auto& load = s.at("loadings");
    for (std::size_t k = 0; k < var.size(); ++k) {
      std::vector<std::string> row = {"PC " + std::to_string(k + 1),
                                      format_number(100.0 * var[k].get<double>(), 1),
                                      format_number(100.0 * cum[k].get<double>(), 1)};
      for (std::size_t f = 0; f < features.size(); ++f) row.push_back(num(load[f][k], 3));
      t.rows.push_back(std::move(row));
    }
  } else if (kind == "ablation") {
    const json s = analysis_section(run_dir, m, kind);
    const auto alphas = s.at("alphas").get<std::vector<double>>();
    t.header = {"alpha"};
    for (double a : alphas) t.header.push_back(format_number(a, 2));
    for (std::size_t i = 0; i < alphas.size(); ++i) {
      std::vector<std::string> row = {format_number(alphas[i], 2)};
      for (std::size_t j = 0; j < alphas.size(); ++j) row.push_back(num(s.at("rho")[i][j], 3));
      t.rows.push_back(std::move(row));
    }
  } else if (kind == "regress") {
    const json s = analysis_section(run_dir, m, kind);
    t.header = {"predictor", "beta", "SE", "p"};
    add_fit_rows(t, s, "");
    t.rows.push_back({"R2 (test)", num(s.at("r2"), 3), "", ""});
    t.rows.push_back({"RMSE (test)", num(s.at("rmse"), 3), "", ""});
  } else if (kind == "strength") {
    const json s = analysis_section(run_dir, m, kind);
    t.header = {"model", "predictor", "beta", "SE", "p"};
    for (const auto& [name, fit] : s.at("fits").items()) {
      if (fit.contains("status") && fit.at("status") == "skipped") continue;
      add_fit_rows(t, fit, name);
    }
  } else if (kind == "correlate") {
    const json s = analysis_section(run_dir, m, kind);
    t.header = {"property", "aggregate", "n", "rho", "p"};
    t.rows.push_back({s.at("property").get<std::string>(), s.at("aggregate").get<std::string>(),
                      std::to_string(s.at("n").get<std::size_t>()), num(s.at("rho"), 3),
                      num(s.at("p"), 3)});
  } else {
    throw ValidationError("unknown report kind '" + std::string(kind) + "'");
  }
  return t;
}

std::vector<std::string> emit_report(const fs::path& run_dir, std::string_view kind) {
  const Table t = build_report(run_dir, kind);
  const std::string base = "reports/" + std::string(kind);
  write_file_atomic(run_dir / (base + ".csv"), t.to_csv());
  write_file_atomic(run_dir / (base + ".txt"), t.to_text(kind));
  return {base + ".csv", base + ".txt"};
}

}  // namespace polyglot
