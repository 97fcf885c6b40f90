// polyglot: command-line front end for the teacher evaluation pipeline.

#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <tuple>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "polyglot/analysis.hpp"
#include "polyglot/error.hpp"
#include "polyglot/extrinsic.hpp"
#include "polyglot/generation.hpp"
#include "polyglot/intrinsic.hpp"
#include "polyglot/languages.hpp"
#include "polyglot/pipeline.hpp"
#include "polyglot/reports.hpp"
#include "polyglot/scoring.hpp"
#include "polyglot/seed_corpus.hpp"
#include "polyglot/util.hpp"

using namespace polyglot;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// "model@http://host:port/v1"
ModelEndpoint parse_endpoint(const std::string& text, const std::string& key_env) {
  const auto at = text.find('@');
  if (at == std::string::npos || at == 0 || at + 1 == text.size()) {
    throw ValidationError("endpoint must be MODEL@URL, got '" + text + "'");
  }
  ModelEndpoint e;
  e.model = text.substr(0, at);
  e.base_url = text.substr(at + 1);
  e.api_key_env = key_env;
  return e;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  for (const auto& line : split(read_file(path), '\n')) {
    if (!trim(line).empty()) out.push_back(json::parse(line));
  }
  return out;
}

void write_or_print(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
  }
}

std::string jsonl(const std::vector<json>& lines) {
  std::string s;
  for (const auto& l : lines) s += l.dump() + "\n";
  return s;
}

struct TrialIntrinsic {
  int trial;
  IntrinsicRecord record;
};

std::vector<TrialIntrinsic> load_intrinsic(const fs::path& path) {
  std::vector<TrialIntrinsic> out;
  for (const auto& j : read_jsonl(path)) out.push_back({j.value("trial", 0), intrinsic_from_json(j)});
  return out;
}

using Key = std::tuple<std::string, std::string, int>;

std::map<Key, ExtrinsicRecord> load_extrinsic(const fs::path& path) {
  std::map<Key, ExtrinsicRecord> out;
  for (const auto& j : read_jsonl(path)) {
    auto r = extrinsic_from_json(j);
    out[{r.teacher, r.language, r.trial}] = r;
  }
  return out;
}

// Cohorts per (language, trial), teachers in file order.
std::vector<Cohort> build_cohorts(const std::vector<TrialIntrinsic>& intr,
                                  const std::map<Key, ExtrinsicRecord>& extr) {
  std::map<std::pair<std::string, int>, Cohort> cohorts;
  for (const auto& ti : intr) {
    const Key key{ti.record.teacher, ti.record.language, ti.trial};
    auto it = extr.find(key);
    if (it == extr.end()) {
      throw ValidationError("no extrinsic record for " + ti.record.teacher + "/" +
                            ti.record.language + "/t" + std::to_string(ti.trial));
    }
    auto& c = cohorts[{ti.record.language, ti.trial}];
    c.id = ti.record.language + "/t" + std::to_string(ti.trial);
    c.language = ti.record.language;
    c.entries.push_back({ti.record, it->second});
  }
  std::vector<Cohort> out;
  for (auto& [k, c] : cohorts) out.push_back(std::move(c));
  return out;
}

void print_fit(const RegressionFit& f) {
  Table t;
  t.header = {"predictor", "beta", "SE", "p"};
  for (std::size_t i = 0; i < f.predictors.size(); ++i) {
    t.rows.push_back({f.predictors[i], format_number(f.beta[i], 4), format_number(f.se[i], 4),
                      format_number(f.p[i], 4)});
  }
  std::cout << t.to_text(f.method);
  std::cout << "R2: " << (f.r2 ? format_number(*f.r2, 4) : std::string("degenerate"))
            << "  RMSE: " << format_number(f.rmse, 4) << "\n";
  for (const auto& n : f.notes) std::cout << "note: " << n << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluate language models as multilingual synthetic-data teachers"};
  app.require_subcommand(1);

  // seed
  auto* seed = app.add_subcommand("seed", "Seed corpus tools");
  seed->require_subcommand(1);
  std::string seed_in, seed_lang, seed_out;
  bool seed_dedup = false;
  auto* seed_ingest = seed->add_subcommand("ingest", "Validate a record file");
  seed_ingest->add_option("--in", seed_in, "Line-delimited record file")->required();
  seed_ingest->add_option("--lang", seed_lang, "Default language code");
  seed_ingest->add_option("--out", seed_out, "Write accepted records here");
  seed_ingest->add_flag("--dedup", seed_dedup, "Drop exact duplicate prompts");
  auto* seed_stats = seed->add_subcommand("stats", "Per-language counts and mean lengths");
  seed_stats->add_option("--in", seed_in, "Line-delimited record file")->required();
  seed_stats->add_option("--lang", seed_lang, "Default language code");

  // generate
  auto* gen = app.add_subcommand("generate", "Build a synthetic dataset with one teacher");
  std::string g_teacher, g_lang, g_mix = "generate=1/3,translate=1/3,respond=1/3", g_corpus, g_out,
                         g_cache, g_key_env;
  std::size_t g_n = 0, g_k = 3;
  std::uint64_t g_seed = 0;
  bool g_offline = false;
  gen->add_option("--teacher", g_teacher, "Teacher endpoint MODEL@URL")->required();
  gen->add_option("--lang", g_lang, "Target language code")->required();
  gen->add_option("--n", g_n, "Number of pairs")->required();
  gen->add_option("--mix", g_mix, "Method shares, e.g. generate=1/3,translate=1/3,respond=1/3");
  gen->add_option("--seed", g_seed, "Run seed");
  gen->add_option("--k", g_k, "Few-shot examples per Generate call");
  gen->add_option("--seed-corpus", g_corpus, "Seed corpus file")->required();
  gen->add_option("--out", g_out, "Dataset output path")->required();
  gen->add_option("--cache", g_cache, "Response cache directory");
  gen->add_option("--api-key-env", g_key_env, "Environment variable holding the API key");
  gen->add_flag("--offline", g_offline, "Serve from cache only");

  // score
  auto* score = app.add_subcommand("score", "Dataset and benchmark metrics");
  score->require_subcommand(1);
  auto* s_intr = score->add_subcommand("intrinsic", "d_x, d_y, PPL and R for a dataset");
  std::string si_dataset, si_base, si_embedder, si_judge, si_out, si_cache, si_key_env;
  std::optional<std::size_t> si_sample;
  double si_floor = 0.95;
  std::size_t si_budget = kDefaultPairBudget;
  bool si_offline = false;
  s_intr->add_option("--dataset", si_dataset, "Dataset file")->required();
  s_intr->add_option("--base", si_base, "Base model MODEL@URL")->required();
  s_intr->add_option("--embedder", si_embedder, "Embedding model MODEL@URL")->required();
  s_intr->add_option("--judge", si_judge, "Judge model MODEL@URL")->required();
  s_intr->add_option("--judge-sample", si_sample, "Judge only this many pairs");
  s_intr->add_option("--coverage-floor", si_floor, "Minimum parsed judge fraction");
  s_intr->add_option("--pair-budget", si_budget, "Diversity pair budget");
  s_intr->add_option("--out", si_out, "Append the record to this file");
  s_intr->add_option("--cache", si_cache, "Response cache directory");
  s_intr->add_option("--api-key-env", si_key_env, "Environment variable holding the API key");
  s_intr->add_flag("--offline", si_offline, "Serve from cache only");
  auto* s_extr = score->add_subcommand("extrinsic", "PGR per (teacher, language, trial)");
  std::string se_scores, se_out, se_registry;
  s_extr->add_option("--scores", se_scores, "Benchmark scores file")->required();
  s_extr->add_option("--benchmarks", se_registry, "Benchmark registry JSON");
  s_extr->add_option("--out", se_out, "Output file");

  // pgscore
  auto* pgs = app.add_subcommand("pgscore", "PG-Scores per language cohort");
  std::string p_intr, p_extr, p_out;
  double p_alpha = 0.5;
  pgs->add_option("--intrinsic", p_intr, "Intrinsic records")->required();
  pgs->add_option("--extrinsic", p_extr, "Extrinsic records")->required();
  pgs->add_option("--alpha", p_alpha, "Intrinsic weight in [0,1]");
  pgs->add_option("--out", p_out, "Output file");

  // analyze
  auto* an = app.add_subcommand("analyze", "Statistical analyses");
  an->require_subcommand(1);
  std::string a_intr, a_extr, a_pg, a_teachers, a_property;
  double a_split = 0.8;
  std::uint64_t a_seed = 0;
  std::vector<double> a_alphas = kDefaultAlphaGrid;
  std::string a_aggregate = "median";
  auto* a_pca = an->add_subcommand("pca", "PCA of intrinsic features");
  a_pca->add_option("--intrinsic", a_intr, "Intrinsic records")->required();
  auto* a_reg = an->add_subcommand("regress", "Regress extrinsic scores on principal components");
  a_reg->add_option("--intrinsic", a_intr, "Intrinsic records")->required();
  a_reg->add_option("--extrinsic", a_extr, "Extrinsic records")->required();
  a_reg->add_option("--split", a_split, "Training fraction");
  a_reg->add_option("--seed", a_seed, "Split seed");
  auto* a_abl = an->add_subcommand("ablate-weights", "Rank stability across alpha");
  a_abl->add_option("--intrinsic", a_intr, "Intrinsic records")->required();
  a_abl->add_option("--extrinsic", a_extr, "Extrinsic records")->required();
  a_abl->add_option("--alphas", a_alphas, "Alpha grid");
  auto* a_str = an->add_subcommand("strength", "PG-Score against teacher size and benchmark strength");
  a_str->add_option("--pgscores", a_pg, "PG-Score records")->required();
  a_str->add_option("--teachers", a_teachers,
                    "JSON object: teacher -> {param_size_b, multilingual_perf}")
      ->required();
  auto* a_cor = an->add_subcommand("correlate", "Spearman correlation with a language property");
  a_cor->add_option("--pgscores", a_pg, "PG-Score records")->required();
  a_cor->add_option("--property", a_property, "JSON object: language -> value")->required();
  a_cor->add_option("--aggregate", a_aggregate, "median or mean");

  // report
  auto* rep = app.add_subcommand("report", "Emit a report from a run directory");
  std::string r_run, r_kind;
  rep->add_option("--run", r_run, "Run directory")->required();
  rep->add_option("--kind", r_kind, "Report kind")->required();

  // run
  auto* run = app.add_subcommand("run", "Run the full pipeline from a config file");
  std::string run_config, run_stage;
  bool run_offline = false;
  run->add_option("--config", run_config, "Run configuration JSON")->required();
  run->add_option("--stage", run_stage, "Run a single stage");
  run->add_flag("--offline", run_offline, "Serve model calls from cache only");

  CLI11_PARSE(app, argc, argv);

  try {
    if (seed_ingest->parsed() || seed_stats->parsed()) {
      IngestOptions opts;
      if (!seed_lang.empty()) opts.default_language = seed_lang;
      opts.dedup_exact = seed_dedup;
      const IngestResult r = ingest(seed_in, opts);
      if (seed_ingest->parsed()) {
        std::cout << "accepted " << r.corpus.size() << ", rejected " << r.rejections.size()
                  << ", duplicates dropped " << r.duplicates_dropped << "\n";
        for (const auto& rej : r.rejections) {
          std::cout << "  line " << rej.line << ": " << rej.reason << "\n";
        }
        if (!seed_out.empty()) export_corpus(r.corpus, seed_out);
      } else {
        Table t;
        t.header = {"language", "count", "mean_prompt_chars", "mean_response_chars"};
        std::size_t total = 0;
        for (const auto& [lang, s] : stats(r.corpus)) {
          t.rows.push_back({lang, std::to_string(s.count), format_number(s.mean_prompt_chars, 1),
                            format_number(s.mean_response_chars, 1)});
          total += s.count;
        }
        t.rows.push_back({"total", std::to_string(total), "", ""});
        std::cout << t.to_text();
      }
    } else if (gen->parsed()) {
      ClientOptions co;
      if (!g_cache.empty()) co.cache_dir = g_cache;
      co.offline = g_offline;
      InferenceClient client(co);
      const SeedCorpus corpus = ingest(g_corpus).corpus;
      GenerationOptions go;
      go.k = g_k;
      const auto teacher = parse_endpoint(g_teacher, g_key_env).with_recommended_defaults();
      const SyntheticDataset ds =
          build_dataset(client, corpus, teacher, g_lang, g_n, parse_mix(g_mix), g_seed, go);
      write_dataset(ds, g_out);
      std::cout << "wrote " << ds.pairs.size() << " pairs to " << g_out << " ("
                << ds.manifest.rejections.size() << " rejections)\n";
    } else if (s_intr->parsed()) {
      ClientOptions co;
      if (!si_cache.empty()) co.cache_dir = si_cache;
      co.offline = si_offline;
      InferenceClient client(co);
      const SyntheticDataset ds = read_dataset(si_dataset);
      IntrinsicOptions io;
      io.pair_budget = si_budget;
      io.judge.coverage_floor = si_floor;
      io.judge.sample = si_sample;
      const IntrinsicResult r =
          compute_record(client, ds,
                         {parse_endpoint(si_embedder, si_key_env), parse_endpoint(si_base, si_key_env),
                          parse_endpoint(si_judge, si_key_env)},
                         io);
      const std::string line = to_json(r.record).dump() + "\n";
      if (si_out.empty()) {
        std::cout << line;
      } else {
        const std::string prev = fs::exists(si_out) ? read_file(si_out) : std::string();
        write_file_atomic(si_out, prev + line);
      }
    } else if (s_extr->parsed()) {
      const BenchmarkRegistry reg =
          se_registry.empty() ? BenchmarkRegistry() : BenchmarkRegistry::from_file(se_registry);
      std::vector<json> lines;
      for (const auto& r : extrinsic_scores(load_scores(se_scores, reg))) lines.push_back(to_json(r));
      write_or_print(se_out, jsonl(lines));
    } else if (pgs->parsed()) {
      const auto cohorts = build_cohorts(load_intrinsic(p_intr), load_extrinsic(p_extr));
      std::vector<json> lines;
      for (const auto& c : cohorts) {
        const int trial = c.entries.front().extrinsic.trial;
        const CohortScores cs = score_cohort(c, p_alpha, trial);
        for (const auto& r : cs.records) lines.push_back(to_json(r));
        for (const auto& m : cs.degenerate_metrics) {
          std::cerr << c.id << ": metric " << m << " is flat across the cohort\n";
        }
      }
      write_or_print(p_out, jsonl(lines));
    } else if (a_pca->parsed() || a_reg->parsed()) {
      const auto intr = load_intrinsic(a_intr);
      std::vector<IntrinsicRecord> recs;
      std::vector<int> trials;
      for (const auto& ti : intr) {
        recs.push_back(ti.record);
        trials.push_back(ti.trial);
      }
      const FeatureMatrix m = feature_matrix(recs, trials);
      if (a_pca->parsed()) {
        const PcaResult r = pca(m);
        Table t;
        t.header = {"PC", "variance_pct", "cumulative_pct"};
        for (const auto& f : r.features) t.header.push_back(f);
        for (Eigen::Index k = 0; k < r.variance_fraction.size(); ++k) {
          std::vector<std::string> row = {"PC " + std::to_string(k + 1),
                                          format_number(100 * r.variance_fraction(k), 1),
                                          format_number(100 * r.cumulative_fraction(k), 1)};
          for (Eigen::Index f = 0; f < r.loadings.rows(); ++f) row.push_back(format_number(r.loadings(f, k), 3));
          t.rows.push_back(std::move(row));
        }
        std::cout << t.to_text("PCA");
      } else {
        const auto extr = load_extrinsic(a_extr);
        std::vector<double> target;
        for (const auto& ti : intr) {
          target.push_back(extr.at({ti.record.teacher, ti.record.language, ti.trial}).mean_pgr);
        }
        print_fit(fit_pc_regression(m, target, a_split, a_seed));
      }
    } else if (a_abl->parsed()) {
      const auto cohorts = build_cohorts(load_intrinsic(a_intr), load_extrinsic(a_extr));
      const AblationResult r = weight_ablation(cohorts, a_alphas);
      Table t;
      t.header = {"alpha"};
      for (double a : r.alphas) t.header.push_back(format_number(a, 2));
      for (std::size_t i = 0; i < r.alphas.size(); ++i) {
        std::vector<std::string> row = {format_number(r.alphas[i], 2)};
        for (std::size_t j = 0; j < r.alphas.size(); ++j) {
          row.push_back(format_number(r.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), 3));
        }
        t.rows.push_back(std::move(row));
      }
      std::cout << t.to_text("Spearman rho between alpha settings");
    } else if (a_str->parsed()) {
      const json teachers = json::parse(read_file(a_teachers));
      std::vector<StrengthRow> rows;
      for (const auto& j : read_jsonl(a_pg)) {
        const PgScoreRecord r = pgscore_from_json(j);
        StrengthRow row{r.teacher, r.language, r.trial, r.pg_score, std::nullopt, std::nullopt};
        if (auto it = teachers.find(r.teacher); it != teachers.end()) {
          if (it->contains("param_size_b")) row.param_size_b = it->at("param_size_b").get<double>();
          if (it->contains("multilingual_perf")) row.multilingual_perf = it->at("multilingual_perf").get<double>();
        }
        rows.push_back(std::move(row));
      }
      for (auto pred : {StrengthPredictor::LogParamSize, StrengthPredictor::MultilingualPerf}) {
        try {
          print_fit(strength_regression(rows, {pred}));
        } catch (const Error& e) {
          std::cout << "skipped: " << e.what() << "\n";
        }
      }
    } else if (a_cor->parsed()) {
      const auto property = json::parse(read_file(a_property)).get<std::map<std::string, double>>();
      std::map<std::pair<std::string, std::string>, std::vector<double>> per_teacher;
      for (const auto& j : read_jsonl(a_pg)) {
        const PgScoreRecord r = pgscore_from_json(j);
        per_teacher[{r.language, r.teacher}].push_back(r.pg_score);
      }
      std::map<std::string, std::vector<double>> by_lang;
      for (const auto& [k, v] : per_teacher) by_lang[k.first].push_back(kahan_mean(v));
      const auto agg = a_aggregate == "mean" ? LanguageAggregate::Mean : LanguageAggregate::Median;
      const RankStats s = property_correlation(by_lang, property, agg);
      std::cout << "n " << s.n << "  rho " << (s.rho ? format_number(*s.rho, 4) : "degenerate")
                << "  p " << (s.p ? format_number(*s.p, 4) : "NA") << "\n";
    } else if (rep->parsed()) {
      for (const auto& rel : emit_report(r_run, r_kind)) std::cout << (fs::path(r_run) / rel).string() << "\n";
      std::cout << build_report(r_run, r_kind).to_text(r_kind);
    } else if (run->parsed()) {
      RunConfig cfg = RunConfig::load(run_config);
      if (run_offline) cfg.offline = true;
      Pipeline p(cfg);
      if (run_stage.empty()) {
        p.run();
      } else {
        p.run_stage(parse_stage(run_stage));
      }
      const ClientStats st = p.client_stats();
      for (const auto& [name, rec] : p.manifest().stages) {
        std::cout << name << ": " << rec.status << "\n";
        for (const auto& n : rec.notes) std::cout << "  " << n << "\n";
      }
      std::cout << "network calls " << st.network_calls << ", cache hits " << st.cache_hits
                << ", retries " << st.retries << "\n";
      std::cout << "run directory " << p.run_dir().string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
