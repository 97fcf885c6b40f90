#include "polyglot/generation.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "polyglot/languages.hpp"
#include "polyglot/rng.hpp"
#include "polyglot/util.hpp"

namespace polyglot {

using nlohmann::json;

namespace {

constexpr double kMixTolerance = 1e-9;
constexpr std::string_view kPolicy = "reprompt-once-then-replace;budget=3x";

std::optional<PromptResponse> from_object(const json& j) {
  if (!j.is_object()) return std::nullopt;
  auto p = j.find("prompt");
  auto r = j.find("response");
  if (p == j.end() || r == j.end() || !p->is_string() || !r->is_string()) return std::nullopt;
  PromptResponse out{std::string(trim(p->get<std::string>())),
                     std::string(trim(r->get<std::string>()))};
  if (out.prompt.empty() || out.response.empty()) return std::nullopt;
  return out;
}

std::optional<json> try_parse(std::string_view s) {
  json j = json::parse(s.begin(), s.end(), nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

// Position of the brace closing the object opened at `open`, skipping braces
// inside JSON strings; npos when unbalanced.
std::size_t balanced_object_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
    } else if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}' && --depth == 0) {
      return i;
    }
  }
  return std::string_view::npos;
}

ChatRequest single_turn(const RenderedPrompt& rendered, std::uint64_t seed) {
  return ChatRequest{rendered.messages, seed};
}

// Sends the request; on an unparseable reply, sends the conversation back once
// with a corrective turn under a derived seed.
std::pair<PromptResponse, bool> chat_structured(InferenceClient& client,
                                                const ModelEndpoint& teacher,
                                                const RenderedPrompt& rendered,
                                                std::uint64_t request_seed) {
  ChatResponse first = client.chat(teacher, single_turn(rendered, request_seed));
  if (auto pr = extract_prompt_response(first.text)) return {*pr, false};

  ChatRequest retry;
  retry.messages = rendered.messages;
  retry.messages.push_back({"assistant", first.text});
  retry.messages.push_back({"user", std::string(kReformatRequest)});
  retry.seed = derive_seed(request_seed, {1});
  ChatResponse second = client.chat(teacher, retry);
  if (auto pr = extract_prompt_response(second.text)) return {*pr, true};
  throw GenerationRejected("reply is not a JSON object with prompt and response");
}

SyntheticPair make_pair(const ModelEndpoint& teacher, const std::string& language, Method m,
                        std::uint64_t request_seed) {
  SyntheticPair p;
  p.teacher = teacher.model;
  p.language = language;
  p.method = m;
  p.request_seed = request_seed;
  return p;
}

std::size_t method_index(Method m) { return static_cast<std::size_t>(m); }

std::array<std::size_t, 3> array_from_json(const json& j) {
  std::array<std::size_t, 3> out{};
  for (Method m : kAllMethods) out[method_index(m)] = j.at(std::string(to_string(m))).get<std::size_t>();
  return out;
}

json array_to_json(const std::array<std::size_t, 3>& a) {
  json j = json::object();
  for (Method m : kAllMethods) j[std::string(to_string(m))] = a[method_index(m)];
  return j;
}

}  // namespace

const std::string_view kReformatRequest =
    "Your previous reply could not be read. Reply again with only a JSON dictionary that has "
    "the keys `prompt` and `response`.";

std::optional<PromptResponse> extract_prompt_response(std::string_view text) {
  for (auto start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
    const auto end = balanced_object_end(text, start);
    if (end == std::string_view::npos) continue;
    if (auto j = try_parse(text.substr(start, end - start + 1))) {
      if (auto pr = from_object(*j)) return pr;
    }
  }
  return std::nullopt;
}

SyntheticPair run_generate(InferenceClient& client, const ModelEndpoint& teacher,
                           const std::string& language, const std::vector<SeedExample>& few_shots,
                           std::uint64_t request_seed) {
  if (few_shots.empty()) throw ValidationError("generate needs at least one few-shot example");
  for (const auto& ex : few_shots) {
    if (ex.language != language) {
      throw ValidationError("few-shot example in '" + ex.language + "' for target '" + language +
                            "'");
    }
  }
  const auto rendered =
      render_template(Method::Generate, require_language_name(language), {few_shots, std::nullopt});
  auto [pr, reprompted] = chat_structured(client, teacher, rendered, request_seed);
  SyntheticPair p = make_pair(teacher, language, Method::Generate, request_seed);
  p.prompt = std::move(pr.prompt);
  p.response = std::move(pr.response);
  p.reprompted = reprompted;
  return p;
}

SyntheticPair run_translate(InferenceClient& client, const ModelEndpoint& teacher,
                            const std::string& language, const std::string& english_prompt,
                            std::uint64_t request_seed) {
  if (trim(english_prompt).empty()) throw ValidationError("English prompt is empty");
  const auto rendered =
      render_template(Method::Translate, require_language_name(language), {{}, english_prompt});
  auto [pr, reprompted] = chat_structured(client, teacher, rendered, request_seed);
  if (pr.prompt == trim(english_prompt)) {
    throw GenerationRejected("translated prompt is identical to the English input");
  }
  SyntheticPair p = make_pair(teacher, language, Method::Translate, request_seed);
  p.prompt = std::move(pr.prompt);
  p.response = std::move(pr.response);
  p.source_prompt = english_prompt;
  p.reprompted = reprompted;
  return p;
}

SyntheticPair run_respond(InferenceClient& client, const ModelEndpoint& teacher,
                          const std::string& language, const std::string& seed_prompt,
                          std::uint64_t request_seed) {
  if (trim(seed_prompt).empty()) throw ValidationError("seed prompt is empty");
  const auto rendered =
      render_template(Method::Respond, require_language_name(language), {{}, seed_prompt});
  ChatResponse reply = client.chat(teacher, single_turn(rendered, request_seed));
  if (trim(reply.text).empty()) throw GenerationRejected("empty completion");
  SyntheticPair p = make_pair(teacher, language, Method::Respond, request_seed);
  p.prompt = seed_prompt;
  p.response = reply.text;
  return p;
}

double MethodMix::operator[](Method m) const {
  switch (m) {
    case Method::Generate:
      return generate;
    case Method::Translate:
      return translate;
    case Method::Respond:
      return respond;
  }
  return 0.0;
}

void validate(const MethodMix& mix) {
  double total = 0.0;
  for (Method m : kAllMethods) {
    const double p = mix[m];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError("mix share for " + std::string(to_string(m)) + " is outside [0,1]");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kMixTolerance) throw ValidationError("mix shares do not sum to 1");
}

MethodMix parse_mix(std::string_view text) {
  MethodMix mix{0.0, 0.0, 0.0};
  bool seen[3] = {false, false, false};
  for (const auto& part : split(text, ',')) {
    const auto item = trim(part);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw ValidationError("mix entry without '=': " + std::string(item));
    const Method m = parse_method(item.substr(0, eq));
    const std::string value(trim(item.substr(eq + 1)));
    double v = 0.0;
    try {
      std::size_t used = 0;
      if (const auto slash = value.find('/'); slash != std::string::npos) {
        const double a = std::stod(value.substr(0, slash), &used);
        if (used != slash) throw std::invalid_argument("numerator");
        const std::string den = value.substr(slash + 1);
        const double b = std::stod(den, &used);
        if (used != den.size() || b == 0.0) throw std::invalid_argument("denominator");
        v = a / b;
      } else {
        v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
      }
    } catch (const std::exception&) {
      throw ValidationError("bad mix value '" + value + "'");
    }
    if (seen[method_index(m)]) throw ValidationError("method listed twice in mix");
    seen[method_index(m)] = true;
    switch (m) {
      case Method::Generate:
        mix.generate = v;
        break;
      case Method::Translate:
        mix.translate = v;
        break;
      case Method::Respond:
        mix.respond = v;
        break;
    }
  }
  validate(mix);
  return mix;
}

std::string format_mix(const MethodMix& mix) {
  std::ostringstream os;
  os.precision(17);
  os << "generate=" << mix.generate << ",translate=" << mix.translate
     << ",respond=" << mix.respond;
  return os.str();
}

std::array<std::size_t, 3> allocate_counts(std::size_t n, const MethodMix& mix) {
  validate(mix);
  std::array<std::size_t, 3> counts{};
  std::size_t assigned = 0;
  for (Method m : kAllMethods) {
    counts[method_index(m)] =
        static_cast<std::size_t>(std::floor(static_cast<double>(n) * mix[m] + 1e-9));
    assigned += counts[method_index(m)];
  }
  while (assigned < n) {
    for (Method m : kAllMethods) {
      if (assigned == n) break;
      if (mix[m] > 0.0) {
        ++counts[method_index(m)];
        ++assigned;
      }
    }
  }
  return counts;
}

std::uint64_t pair_request_seed(std::uint64_t run_seed, Method method, std::size_t sequence) {
  return derive_seed(run_seed, {fnv1a64(to_string(method)), static_cast<std::uint64_t>(sequence)});
}

void SyntheticDataset::check_counts() const {
  std::array<std::size_t, 3> tally{};
  for (const auto& p : pairs) ++tally[method_index(p.method)];
  if (tally != manifest.counts) throw ValidationError("manifest counts disagree with dataset pairs");
  if (pairs.size() != manifest.n) throw ValidationError("dataset size disagrees with manifest n");
}

SyntheticDataset build_dataset(InferenceClient& client, const SeedCorpus& corpus,
                               const ModelEndpoint& teacher, const std::string& language,
                               std::size_t n, const MethodMix& mix, std::uint64_t run_seed,
                               const GenerationOptions& options) {
  require_language_name(language);
  if (options.k == 0) throw ValidationError("few-shot count k must be at least 1");
  const auto counts = allocate_counts(n, mix);

  if (counts[method_index(Method::Generate)] > 0 && corpus.count(language) < options.k) {
    throw ValidationError("seed corpus has fewer than k examples in '" + language + "'");
  }
  if (counts[method_index(Method::Translate)] > 0) {
    if (language == "en") throw ValidationError("translate needs a non-English target language");
    if (corpus.count("en") == 0) throw ValidationError("seed corpus has no English prompts");
  }
  if (counts[method_index(Method::Respond)] > 0 && corpus.count(language) == 0) {
    throw ValidationError("seed corpus has no prompts in '" + language + "'");
  }

  SyntheticDataset ds;
  auto& man = ds.manifest;
  man.teacher = teacher.model;
  man.language = language;
  man.n = n;
  man.mix = mix;
  man.counts = counts;
  man.run_seed = run_seed;
  man.k = options.k;
  man.rejection_policy = std::string(kPolicy);
  man.language_filter = static_cast<bool>(options.language_filter);
  for (Method m : kAllMethods) {
    if (counts[method_index(m)] > 0) {
      man.template_versions[std::string(to_string(m))] = std::string(template_version(m));
    }
  }

  auto attempt = [&](Method m, std::size_t seq) -> SyntheticPair {
    const std::uint64_t rs = pair_request_seed(run_seed, m, seq);
    const std::uint64_t draw_seed = derive_seed(rs, {fnv1a64("seed-draw")});
    SyntheticPair p;
    std::vector<std::size_t> refs;
    switch (m) {
      case Method::Generate: {
        refs = sample_positions(corpus, language, options.k, draw_seed);
        std::vector<SeedExample> shots;
        for (auto pos : refs) shots.push_back(corpus.at(pos));
        p = run_generate(client, teacher, language, shots, rs);
        break;
      }
      case Method::Translate:
        refs = sample_positions(corpus, "en", 1, draw_seed);
        p = run_translate(client, teacher, language, corpus.at(refs[0]).prompt, rs);
        break;
      case Method::Respond:
        refs = sample_positions(corpus, language, 1, draw_seed);
        p = run_respond(client, teacher, language, corpus.at(refs[0]).prompt, rs);
        break;
    }
    p.sequence = seq;
    p.seed_refs = std::move(refs);
    if (options.language_filter && !options.language_filter(p)) {
      throw GenerationRejected("language filter");
    }
    return p;
  };

  for (Method m : kAllMethods) {
    const std::size_t target = counts[method_index(m)];
    const std::size_t budget = options.budget_factor * target;
    std::size_t next = 0;
    std::vector<SyntheticPair> accepted;
    while (accepted.size() < target) {
      const std::size_t wave = std::min(target - accepted.size(), budget - next);
      if (wave == 0) {
        throw GenerationRejected("attempt budget exhausted for " + std::string(to_string(m)) +
                                 " after " + std::to_string(next) + " attempts");
      }
      std::vector<std::optional<SyntheticPair>> results(wave);
      std::vector<std::string> reasons(wave);
      parallel_for(wave, std::max<std::size_t>(1, options.workers), [&](std::size_t i) {
        try {
          results[i] = attempt(m, next + i);
        } catch (const GenerationRejected& e) {
          reasons[i] = e.what();
        }
      });
      for (std::size_t i = 0; i < wave; ++i) {
        if (results[i]) {
          accepted.push_back(std::move(*results[i]));
        } else {
          man.rejections.push_back({m, next + i, reasons[i]});
        }
      }
      next += wave;
    }
    man.attempts[method_index(m)] = next;
    for (auto& p : accepted) ds.pairs.push_back(std::move(p));
  }
  ds.check_counts();
  return ds;
}

json to_json(const SyntheticPair& p) {
  json j = {{"prompt", p.prompt},
            {"response", p.response},
            {"teacher", p.teacher},
            {"language", p.language},
            {"method", std::string(to_string(p.method))},
            {"seq", p.sequence},
            {"request_seed", p.request_seed},
            {"seed_refs", p.seed_refs},
            {"reprompted", p.reprompted}};
  if (p.source_prompt) j["source_prompt"] = *p.source_prompt;
  return j;
}

SyntheticPair pair_from_json(const json& j) {
  try {
    SyntheticPair p;
    p.prompt = j.at("prompt").get<std::string>();
    p.response = j.at("response").get<std::string>();
    p.teacher = j.at("teacher").get<std::string>();
    p.language = j.at("language").get<std::string>();
    p.method = parse_method(j.at("method").get<std::string>());
    p.sequence = j.at("seq").get<std::size_t>();
    p.request_seed = j.at("request_seed").get<std::uint64_t>();
    p.seed_refs = j.at("seed_refs").get<std::vector<std::size_t>>();
    p.reprompted = j.value("reprompted", false);
    if (auto it = j.find("source_prompt"); it != j.end()) p.source_prompt = it->get<std::string>();
    if (p.prompt.empty() || p.response.empty()) throw ValidationError("pair with empty text");
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed dataset record: ") + e.what());
  }
}

json to_json(const DatasetManifest& m) {
  json rejections = json::array();
  for (const auto& r : m.rejections) {
    rejections.push_back(
        {{"method", std::string(to_string(r.method))}, {"seq", r.sequence}, {"reason", r.reason}});
  }
  return {{"teacher", m.teacher},
          {"language", m.language},
          {"n", m.n},
          {"mix",
           {{"generate", m.mix.generate}, {"translate", m.mix.translate}, {"respond", m.mix.respond}}},
          {"counts", array_to_json(m.counts)},
          {"attempts", array_to_json(m.attempts)},
          {"run_seed", m.run_seed},
          {"k", m.k},
          {"template_versions", m.template_versions},
          {"rejection_policy", m.rejection_policy},
          {"language_filter", m.language_filter},
          {"rejections", rejections}};
}

DatasetManifest manifest_from_json(const json& j) {
  try {
    DatasetManifest m;
    m.teacher = j.at("teacher").get<std::string>();
    m.language = j.at("language").get<std::string>();
    m.n = j.at("n").get<std::size_t>();
    const auto& mix = j.at("mix");
    m.mix = {mix.at("generate").get<double>(), mix.at("translate").get<double>(),
             mix.at("respond").get<double>()};
    m.counts = array_from_json(j.at("counts"));
    m.attempts = array_from_json(j.at("attempts"));
    m.run_seed = j.at("run_seed").get<std::uint64_t>();
    m.k = j.at("k").get<std::size_t>();
    m.template_versions = j.at("template_versions").get<std::map<std::string, std::string>>();
    m.rejection_policy = j.at("rejection_policy").get<std::string>();
    m.language_filter = j.at("language_filter").get<bool>();
    for (const auto& r : j.at("rejections")) {
      m.rejections.push_back({parse_method(r.at("method").get<std::string>()),
                              r.at("seq").get<std::size_t>(), r.at("reason").get<std::string>()});
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed dataset manifest: ") + e.what());
  }
}

std::string serialize_pairs(const SyntheticDataset& dataset) {
  std::string out;
  for (const auto& p : dataset.pairs) {
    out += to_json(p).dump();
    out += '\n';
  }
  return out;
}

std::string serialize_manifest(const DatasetManifest& manifest) {
  return to_json(manifest).dump(2) + "\n";
}

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path) {
  return dataset_path.string() + ".manifest.json";
}

void write_dataset(const SyntheticDataset& dataset, const std::filesystem::path& path) {
  dataset.check_counts();
  write_file_atomic(path, serialize_pairs(dataset));
  write_file_atomic(manifest_path_for(path), serialize_manifest(dataset.manifest));
}

SyntheticDataset read_dataset(const std::filesystem::path& path) {
  SyntheticDataset ds;
  const std::string text = read_file(path);
  std::size_t line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": invalid JSON");
    }
    ds.pairs.push_back(pair_from_json(j));
  }
  const std::string mtext = read_file(manifest_path_for(path));
  json mj = json::parse(mtext, nullptr, false);
  if (mj.is_discarded()) throw ParseError("invalid manifest JSON for " + path.string());
  ds.manifest = manifest_from_json(mj);
  ds.check_counts();
  return ds;
}

std::string manifest_hash(const DatasetManifest& manifest) {
  return sha256_hex(serialize_manifest(manifest));
}

}  // namespace polyglot
