#include "polyglot/intrinsic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "polyglot/languages.hpp"
#include "polyglot/rng.hpp"
#include "polyglot/util.hpp"

namespace polyglot {

using nlohmann::json;

namespace {

double squared_norm(const std::vector<double>& v) {
  KahanSum s;
  for (double x : v) s.add(x * x);
  return s.value();
}

double distance_with_norms(const std::vector<double>& a, double na, const std::vector<double>& b,
                           double nb) {
  KahanSum dot;
  for (std::size_t i = 0; i < a.size(); ++i) dot.add(a[i] * b[i]);
  // sqrt of the product of squared norms keeps identical vectors at exactly 0
  const double d = 1.0 - dot.value() / std::sqrt(na * nb);
  return std::clamp(d, 0.0, 2.0);
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Reads a standalone integer at the start of s (after spaces and markdown
// emphasis). Returns nullopt if the token there is not an integer.
std::optional<long> leading_integer(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '*' || s[i] == ':')) ++i;
  const std::size_t start = i;
  while (i < s.size() && is_digit(s[i])) ++i;
  if (i == start || i - start > 6) return std::nullopt;
  if (i < s.size()) {
    const char c = s[i];
    const bool boundary = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '.' ||
                          c == ',' || c == ';' || c == ')' || c == ']' || c == '*' || c == '/';
    if (!boundary) return std::nullopt;
    if (c == '.' && i + 1 < s.size() && is_digit(s[i + 1])) return std::nullopt;  // 4.5
  }
  return std::stol(std::string(s.substr(start, i - start)));
}

std::size_t rfind_ci(std::string_view haystack, std::string_view needle) {
  const std::string lower = to_lower(haystack);
  return lower.rfind(to_lower(needle));
}

JudgeVerdict verdict_from(std::string_view raw, std::optional<long> value) {
  JudgeVerdict v;
  v.raw = std::string(raw);
  if (value && *value >= 1 && *value <= 5) {
    v.score = static_cast<int>(*value);
    v.status = JudgeParseStatus::Ok;
  } else {
    v.status = JudgeParseStatus::InvalidValue;
  }
  return v;
}

}  // namespace

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("vector dimension mismatch");
  const double na = squared_norm(a), nb = squared_norm(b);
  if (na == 0.0 || nb == 0.0) throw ValidationError("zero vector has no direction");
  return distance_with_norms(a, na, b, nb);
}

double diversity(const std::vector<std::vector<double>>& vectors, std::size_t pair_budget,
                 std::uint64_t seed) {
  const std::size_t n = vectors.size();
  if (n < 2) throw ValidationError("diversity needs at least two vectors");
  const std::size_t dim = vectors.front().size();
  if (dim == 0) throw ValidationError("empty embedding vector");
  for (const auto& v : vectors) {
    if (v.size() != dim) throw ValidationError("vector dimension mismatch");
  }
  std::vector<const std::vector<double>*> sorted;
  sorted.reserve(n);
  for (const auto& v : vectors) sorted.push_back(&v);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return *a < *b; });
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = squared_norm(*sorted[i]);
    if (norms[i] == 0.0) throw ValidationError("zero vector has no direction");
  }

  const std::size_t total = n * (n - 1) / 2;
  KahanSum sum;
  if (total <= pair_budget) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        sum.add(distance_with_norms(*sorted[i], norms[i], *sorted[j], norms[j]));
      }
    }
    return sum.value() / static_cast<double>(total);
  }
  if (pair_budget == 0) throw ValidationError("pair budget must be positive");
  Rng g(seed);
  for (std::size_t s = 0; s < pair_budget; ++s) {
    const auto i = static_cast<std::size_t>(bounded(g, n));
    auto j = static_cast<std::size_t>(bounded(g, n - 1));
    if (j >= i) ++j;
    sum.add(distance_with_norms(*sorted[i], norms[i], *sorted[j], norms[j]));
  }
  return sum.value() / static_cast<double>(pair_budget);
}

double sequence_perplexity(const std::vector<double>& logprobs) {
  if (logprobs.empty()) throw ValidationError("no log-probabilities");
  for (double lp : logprobs) {
    if (!(lp <= 0.0)) throw ValidationError("log-probability is positive or NaN");
  }
  return std::exp(-kahan_mean(logprobs));
}

PerplexityResult dataset_perplexity(InferenceClient& client, const SyntheticDataset& dataset,
                                    const ModelEndpoint& base_model, std::size_t workers) {
  const auto& pairs = dataset.pairs;
  if (pairs.empty()) throw ValidationError("dataset is empty");
  for (const auto& p : pairs) {
    if (p.response.empty()) throw ValidationError("pair with empty response");
  }
  std::vector<std::optional<double>> per_pair(pairs.size());
  parallel_for(pairs.size(), std::max<std::size_t>(1, workers), [&](std::size_t i) {
    try {
      const auto lp = client.score_continuation(
          base_model, pairs[i].prompt + std::string(kPerplexitySeparator), pairs[i].response);
      per_pair[i] = sequence_perplexity(lp.logprobs);
    } catch (const TruncationError&) {
      per_pair[i] = std::nullopt;
    }
  });
  PerplexityResult r;
  KahanSum sum;
  for (const auto& v : per_pair) {
    if (v) {
      sum.add(*v);
      ++r.scored;
    } else {
      ++r.excluded;
    }
  }
  if (r.scored == 0) throw DegenerateError("every pair exceeds the base model's context window");
  r.ppl = sum.value() / static_cast<double>(r.scored);
  return r;
}

JudgeVerdict parse_judge(std::string_view raw) {
  if (auto pos = rfind_ci(raw, "score:"); pos != std::string::npos) {
    return verdict_from(raw, leading_integer(raw.substr(pos + 6)));
  }
  if (auto pos = raw.rfind("[RESULT]"); pos != std::string_view::npos) {
    return verdict_from(raw, leading_integer(raw.substr(pos + 8)));
  }
  // trailing lone integer line
  const auto lines = split(raw, '\n');
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    const auto line = trim(*it);
    if (line.empty() || line.substr(0, 3) == "```") continue;
    const bool all_digits =
        !line.empty() && line.size() <= 6 && std::all_of(line.begin(), line.end(), is_digit);
    if (all_digits) return verdict_from(raw, std::stol(std::string(line)));
    break;
  }
  JudgeVerdict v;
  v.raw = std::string(raw);
  v.status = JudgeParseStatus::NoMarker;
  return v;
}

JudgeSummary judge_dataset(InferenceClient& client, const SyntheticDataset& dataset,
                           const ModelEndpoint& judge, std::string_view language_name,
                           const JudgeOptions& options) {
  if (dataset.pairs.empty()) throw ValidationError("dataset is empty");
  std::vector<std::size_t> indices(dataset.pairs.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (options.sample && *options.sample < indices.size()) {
    if (*options.sample == 0) throw ValidationError("judge sample size must be positive");
    Rng g(options.sample_seed);
    indices = partial_shuffle(std::move(indices), *options.sample, g);
    std::sort(indices.begin(), indices.end());
  }

  JudgeSummary s;
  s.verdicts.resize(indices.size());
  const std::uint64_t base_seed = derive_seed(dataset.manifest.run_seed, {fnv1a64("judge")});
  parallel_for(indices.size(), std::max<std::size_t>(1, options.workers), [&](std::size_t k) {
    const std::size_t idx = indices[k];
    const auto& pair = dataset.pairs[idx];
    const auto rendered = render_judge_prompt(language_name, pair.prompt, pair.response);
    JudgedPair jp;
    jp.index = idx;
    for (int attempt = 0; attempt < 2; ++attempt) {
      ChatRequest req{rendered.messages, derive_seed(base_seed, {idx, static_cast<std::uint64_t>(attempt)})};
      jp.verdict = parse_judge(client.chat(judge, req).text);
      jp.attempts = attempt + 1;
      if (jp.verdict.score) break;
    }
    s.verdicts[k] = std::move(jp);
  });

  KahanSum sum;
  for (const auto& jp : s.verdicts) {
    if (jp.verdict.score) {
      sum.add(*jp.verdict.score);
      ++s.parsed;
    }
  }
  s.judged = s.verdicts.size();
  s.coverage = static_cast<double>(s.parsed) / static_cast<double>(s.judged);
  if (s.parsed == 0 || s.coverage < options.coverage_floor) {
    throw JudgeCoverageError("judge coverage " + std::to_string(s.coverage) +
                             " is below the floor " + std::to_string(options.coverage_floor));
  }
  s.reward = sum.value() / static_cast<double>(s.parsed);
  return s;
}

double mean_char_length(const std::vector<std::string>& texts) {
  if (texts.empty()) return 0.0;
  KahanSum s;
  for (const auto& t : texts) {
    const auto len = utf8_length(t);
    if (!len) throw ValidationError("text is not valid UTF-8");
    s.add(static_cast<double>(*len));
  }
  return s.value() / static_cast<double>(texts.size());
}

json to_json(const IntrinsicRecord& r) {
  return {{"teacher", r.teacher},
          {"language", r.language},
          {"manifest_hash", r.manifest_hash},
          {"n", r.n},
          {"d_x", r.d_x},
          {"d_y", r.d_y},
          {"ppl", r.ppl},
          {"reward", r.reward},
          {"judge_coverage", r.judge_coverage},
          {"mean_prompt_len", r.mean_prompt_len},
          {"mean_resp_len", r.mean_resp_len},
          {"ppl_excluded", r.ppl_excluded}};
}

IntrinsicRecord intrinsic_from_json(const json& j) {
  try {
    IntrinsicRecord r;
    r.teacher = j.at("teacher").get<std::string>();
    r.language = j.at("language").get<std::string>();
    r.manifest_hash = j.value("manifest_hash", std::string());
    r.n = j.value("n", std::size_t{0});
    r.d_x = j.at("d_x").get<double>();
    r.d_y = j.at("d_y").get<double>();
    r.ppl = j.at("ppl").get<double>();
    r.reward = j.at("reward").get<double>();
    r.judge_coverage = j.value("judge_coverage", 1.0);
    r.mean_prompt_len = j.value("mean_prompt_len", 0.0);
    r.mean_resp_len = j.value("mean_resp_len", 0.0);
    r.ppl_excluded = j.value("ppl_excluded", std::size_t{0});
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed intrinsic record: ") + e.what());
  }
}

IntrinsicResult compute_record(InferenceClient& client, const SyntheticDataset& dataset,
                               const IntrinsicEndpoints& endpoints,
                               const IntrinsicOptions& options) {
  if (dataset.pairs.empty()) throw ValidationError("dataset is empty");
  if (dataset.pairs.size() < 2) throw ValidationError("diversity needs at least two pairs");
  std::vector<std::string> prompts, responses;
  for (const auto& p : dataset.pairs) {
    prompts.push_back(p.prompt);
    responses.push_back(p.response);
  }
  const std::uint64_t div_seed = derive_seed(dataset.manifest.run_seed, {fnv1a64("diversity")});

  IntrinsicResult out;
  auto& r = out.record;
  r.teacher = dataset.manifest.teacher;
  r.language = dataset.manifest.language;
  r.manifest_hash = manifest_hash(dataset.manifest);
  r.n = dataset.pairs.size();
  r.d_x = diversity(client.embed(endpoints.embedder, prompts), options.pair_budget, div_seed);
  r.d_y = diversity(client.embed(endpoints.embedder, responses), options.pair_budget,
                    derive_seed(div_seed, {1}));
  out.perplexity = dataset_perplexity(client, dataset, endpoints.base_model, options.workers);
  r.ppl = out.perplexity.ppl;
  r.ppl_excluded = out.perplexity.excluded;
  out.judge = judge_dataset(client, dataset, endpoints.judge,
                            require_language_name(dataset.manifest.language), options.judge);
  r.reward = out.judge.reward;
  r.judge_coverage = out.judge.coverage;
  r.mean_prompt_len = mean_char_length(prompts);
  r.mean_resp_len = mean_char_length(responses);
  return out;
}

}  // namespace polyglot
