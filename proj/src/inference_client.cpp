#include "polyglot/inference_client.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <thread>

#include "polyglot/error.hpp"
#include "polyglot/util.hpp"

namespace polyglot {

using json = nlohmann::json;

namespace {

struct Preset {
  const char* pattern;
  GenerationParams params;
};

// Matched as lowercase substrings of the model id, first match wins.
const std::vector<Preset>& presets() {
  static const std::vector<Preset> kPresets = {
      {"gpt-4o-mini", {0.8, 0.9, std::nullopt, 16384, std::nullopt}},
      {"llama-3.1-70b", {0.6, 0.9, std::nullopt, 131072, std::nullopt}},
      {"llama-3.1-8b", {0.6, 0.9, std::nullopt, 131072, std::nullopt}},
      {"command-a", {0.3, std::nullopt, std::nullopt, 128000, std::nullopt}},
      {"aya-expanse-32b", {0.3, std::nullopt, std::nullopt, 128000, std::nullopt}},
      {"gemma-3-27b", {1.0, 0.95, 64, 8192, std::nullopt}},
      {"gemma-3-12b", {1.0, 0.95, 64, 8192, std::nullopt}},
      {"gemma-3-4b", {1.0, 0.95, 64, 8192, std::nullopt}},
      {"granite-4.0", {0.0, std::nullopt, std::nullopt, 4096, std::nullopt}},
  };
  return kPresets;
}

std::string sanitize_model_dir(const std::string& model) {
  std::string out = model;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '-' || c == '_';
    if (!ok) c = '_';
  }
  return out;
}

double normalize_float(double x) { return x == 0.0 ? 0.0 : x; }

json params_json(const GenerationParams& p) {
  json j = json::object();
  if (p.temperature) j["temperature"] = normalize_float(*p.temperature);
  if (p.top_p) j["top_p"] = normalize_float(*p.top_p);
  if (p.top_k) j["top_k"] = *p.top_k;
  if (p.max_tokens) j["max_tokens"] = *p.max_tokens;
  return j;
}

json messages_json(const std::vector<ChatMessage>& messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
  return arr;
}

bool retryable(const HttpResponse& r) {
  return r.status == 0 || r.status == 408 || r.status == 429 || r.status >= 500;
}

json parse_body(const std::string& body, const char* what) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw InferenceError(std::string("malformed ") + what + " response body: " + e.what());
  }
}

ChatResponse parse_chat(const std::string& body) {
  const json j = parse_body(body, "chat");
  try {
    const auto& choice = j.at("choices").at(0);
    ChatResponse r;
    const auto& content = choice.at("message").at("content");
    if (!content.is_string()) throw InferenceError("chat response has no text content");
    r.text = content.get<std::string>();
    if (auto it = choice.find("finish_reason"); it != choice.end() && it->is_string()) {
      r.finish_reason = it->get<std::string>();
    }
    if (auto it = j.find("usage"); it != j.end() && it->is_object()) {
      r.usage.prompt_tokens = it->value("prompt_tokens", 0);
      r.usage.completion_tokens = it->value("completion_tokens", 0);
    }
    r.raw_body = body;
    return r;
  } catch (const json::exception& e) {
    throw InferenceError(std::string("malformed chat response: ") + e.what());
  }
}

bool mentions_context_overflow(const std::string& body) {
  const std::string lower = to_lower(body);
  return lower.find("context length") != std::string::npos ||
         lower.find("maximum context") != std::string::npos ||
         lower.find("context_length_exceeded") != std::string::npos;
}

}  // namespace

GenerationParams recommended_params(const std::string& model_id) {
  const std::string lower = to_lower(model_id);
  for (const auto& preset : presets()) {
    if (lower.find(preset.pattern) != std::string::npos) return preset.params;
  }
  GenerationParams fallback;
  fallback.temperature = 0.8;
  fallback.top_p = 0.9;
  return fallback;
}

ModelEndpoint ModelEndpoint::with_recommended_defaults() const {
  ModelEndpoint out = *this;
  const GenerationParams rec = recommended_params(model);
  if (!out.params.temperature) out.params.temperature = rec.temperature;
  if (!out.params.top_p) out.params.top_p = rec.top_p;
  if (!out.params.top_k) out.params.top_k = rec.top_k;
  if (!out.params.max_seq_len) out.params.max_seq_len = rec.max_seq_len;
  return out;
}

void validate(const ModelEndpoint& endpoint) {
  if (endpoint.base_url.empty()) throw ValidationError("endpoint base URL is empty");
  if (endpoint.model.empty()) throw ValidationError("endpoint model id is empty");
  const auto& p = endpoint.params;
  if (p.temperature && !(*p.temperature >= 0.0)) {
    throw ValidationError("temperature must be >= 0");
  }
  if (p.top_p && !(*p.top_p > 0.0 && *p.top_p <= 1.0)) {
    throw ValidationError("top_p must lie in (0, 1]");
  }
  if (p.top_k && *p.top_k < 1) throw ValidationError("top_k must be >= 1");
  if (p.max_seq_len && *p.max_seq_len < 1) throw ValidationError("max_seq_len must be >= 1");
  if (p.max_tokens && *p.max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
}

double LogprobResult::sum() const {
  KahanSum s;
  for (double lp : logprobs) s.add(lp);
  return s.value();
}

void Semaphore::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return permits_ > 0; });
  --permits_;
}

void Semaphore::release() {
  {
    std::lock_guard lock(mu_);
    ++permits_;
  }
  cv_.notify_one();
}

namespace {

class Permit {
 public:
  explicit Permit(Semaphore& s) : s_(s) { s_.acquire(); }
  ~Permit() { s_.release(); }
  Permit(const Permit&) = delete;
  Permit& operator=(const Permit&) = delete;

 private:
  Semaphore& s_;
};

}  // namespace

InferenceClient::InferenceClient(ClientOptions options, std::shared_ptr<Transport> transport)
    : options_(std::move(options)),
      transport_(std::move(transport)),
      global_(std::max(1, options_.global_concurrency)) {
  if (options_.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
  if (options_.embed_batch_size == 0) throw ValidationError("embed_batch_size must be >= 1");
  if (!transport_) throw ValidationError("no transport");
}

ClientStats InferenceClient::stats() const {
  return {network_calls_.load(), cache_hits_.load(), retries_.load()};
}

std::string InferenceClient::cache_key(const std::string& kind, const ModelEndpoint& endpoint,
                                       const json& payload, std::uint64_t seed) {
  const json canonical = {{"kind", kind},
                          {"model", endpoint.model},
                          {"params", params_json(endpoint.params)},
                          {"payload", payload},
                          {"seed", seed}};
  // nlohmann::json objects are key-sorted, so dump() is canonical.
  return sha256_hex(canonical.dump());
}

std::optional<std::filesystem::path> InferenceClient::cache_path(const std::string& model,
                                                                 const std::string& key) const {
  if (!options_.cache_dir) return std::nullopt;
  return *options_.cache_dir / sanitize_model_dir(model) / (key + ".json");
}

Semaphore& InferenceClient::endpoint_semaphore(const ModelEndpoint& endpoint) {
  std::lock_guard lock(endpoints_mu_);
  auto& slot = per_endpoint_[endpoint.base_url + "|" + endpoint.model];
  if (!slot) slot = std::make_unique<Semaphore>(std::max(1, options_.per_endpoint_concurrency));
  return *slot;
}

std::mutex& InferenceClient::key_mutex(const std::string& key) {
  return key_mutexes_[std::hash<std::string>{}(key) % key_mutexes_.size()];
}

HttpResponse InferenceClient::send_with_retries(const ModelEndpoint& endpoint,
                                                const std::string& url, const std::string& body) {
  std::vector<std::pair<std::string, std::string>> headers = {
      {"Content-Type", "application/json"}};
  if (!endpoint.api_key_env.empty()) {
    if (const char* key = std::getenv(endpoint.api_key_env.c_str()); key && *key) {
      headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }
  }
  Semaphore& per_endpoint = endpoint_semaphore(endpoint);
  HttpResponse last;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    {
      Permit g(global_);
      Permit e(per_endpoint);
      network_calls_.fetch_add(1);
      last = transport_->post(url, body, headers);
    }
    if (last.status >= 200 && last.status < 300) return last;
    if (!retryable(last)) {
      throw InferenceError("request to " + url + " failed with status " +
                               std::to_string(last.status) + ": " + last.body,
                           last.status);
    }
    if (attempt == options_.max_attempts) break;
    // delay before retry k (k = attempt) is base * 2^(k-1), capped
    auto delay = options_.backoff_base * (1LL << std::min(attempt - 1, 30));
    delay = std::min<std::chrono::milliseconds>(delay, options_.backoff_cap);
    retries_.fetch_add(1);
    std::this_thread::sleep_for(delay);
  }
  throw InferenceError("request to " + url + " failed after " +
                           std::to_string(options_.max_attempts) + " attempts (last status " +
                           std::to_string(last.status) + (last.error.empty() ? "" : ", " + last.error) +
                           ")",
                       last.status);
}

std::string InferenceClient::request_with_cache(
    const ModelEndpoint& endpoint, const std::string& kind, const std::string& route,
    const json& body, const json& key_payload, std::uint64_t seed,
    const std::function<void(const std::string&)>& check) {
  validate(endpoint);
  const std::string key = cache_key(kind, endpoint, key_payload, seed);
  const auto path = cache_path(endpoint.model, key);
  if (path) {
    std::error_code ec;
    if (std::filesystem::exists(*path, ec)) {
      std::string cached = read_file(*path);
      check(cached);
      cache_hits_.fetch_add(1);
      return cached;
    }
  }
  if (options_.offline) {
    throw InferenceError("cache miss for " + kind + " request to " + endpoint.model +
                         " in offline mode");
  }
  std::string base = endpoint.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  HttpResponse resp = send_with_retries(endpoint, base + route, body.dump());
  check(resp.body);
  if (path) {
    std::lock_guard lock(key_mutex(key));
    write_file_atomic(*path, resp.body);
  }
  return resp.body;
}

ChatResponse InferenceClient::chat(const ModelEndpoint& endpoint, const ChatRequest& request) {
  if (request.messages.empty()) throw ValidationError("chat request has no messages");
  json body = params_json(endpoint.params);
  body["model"] = endpoint.model;
  body["messages"] = messages_json(request.messages);
  body["seed"] = request.seed;
  const std::string raw =
      request_with_cache(endpoint, "chat", "/chat/completions", body,
                         messages_json(request.messages), request.seed,
                         [](const std::string& b) { parse_chat(b); });
  return parse_chat(raw);
}

LogprobResult InferenceClient::score_continuation(const ModelEndpoint& endpoint,
                                                  const std::string& context,
                                                  const std::string& continuation) {
  if (continuation.empty()) throw ValidationError("continuation is empty");
  const std::string full = context + continuation;
  json body = {{"model", endpoint.model}, {"prompt", full},  {"echo", true},
               {"logprobs", 0},           {"max_tokens", 1}, {"temperature", 0.0}};
  const json key_payload = {{"context", context}, {"continuation", continuation}};

  auto extract = [&](const std::string& raw) {
    const json j = parse_body(raw, "completions");
    const json* lp = nullptr;
    try {
      const auto& choice = j.at("choices").at(0);
      auto it = choice.find("logprobs");
      if (it == choice.end() || it->is_null()) {
        throw CapabilityError("endpoint " + endpoint.model + " returned no logprobs");
      }
      lp = &*it;
      const auto& tokens = lp->at("token_logprobs");
      const auto& offsets = lp->at("text_offset");
      if (!tokens.is_array() || !offsets.is_array() || tokens.size() != offsets.size()) {
        throw InferenceError("logprob arrays are missing or misaligned");
      }
      if (endpoint.params.max_seq_len) {
        if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
          if (u->value("prompt_tokens", 0) > *endpoint.params.max_seq_len) {
            throw TruncationError("scored text exceeds the context window of " + endpoint.model);
          }
        }
      }
      LogprobResult result;
      const std::size_t ctx_bytes = context.size();
      const std::size_t end_bytes = full.size();
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto off = offsets[i].get<std::size_t>();
        // tokens starting inside the context belong to the context; tokens
        // starting at or past the end are generated, not scored
        if (off < ctx_bytes || off >= end_bytes) continue;
        if (tokens[i].is_null()) {
          if (i == 0) continue;  // first token of the sequence has no logprob
          throw InferenceError("missing logprob for continuation token");
        }
        const double v = tokens[i].get<double>();
        if (!(v <= 0.0)) throw InferenceError("logprob is positive or NaN");
        result.logprobs.push_back(v);
      }
      if (result.logprobs.empty()) {
        throw InferenceError("no continuation tokens in logprob response");
      }
      return result;
    } catch (const json::exception& e) {
      throw InferenceError(std::string("malformed completions response: ") + e.what());
    }
  };

  std::string raw;
  try {
    raw = request_with_cache(endpoint, "logprobs", "/completions", body, key_payload, 0,
                             [&](const std::string& b) { extract(b); });
  } catch (const TruncationError&) {
    throw;
  } catch (const InferenceError& e) {
    if (e.status() == 400 && mentions_context_overflow(e.what())) {
      throw TruncationError(e.what(), e.status());
    }
    throw;
  }
  return extract(raw);
}

std::vector<std::vector<double>> InferenceClient::embed(const ModelEndpoint& endpoint,
                                                        const std::vector<std::string>& texts) {
  if (texts.empty()) throw ValidationError("no texts to embed");
  for (const auto& t : texts) {
    if (t.empty()) throw ValidationError("cannot embed an empty text");
  }
  const std::size_t batch = options_.embed_batch_size;
  const std::size_t batches = (texts.size() + batch - 1) / batch;
  std::vector<std::vector<double>> out(texts.size());

  auto parse_batch = [](const std::string& raw, std::size_t expected) {
    const json j = parse_body(raw, "embeddings");
    std::vector<std::vector<double>> vecs(expected);
    try {
      const auto& data = j.at("data");
      if (data.size() != expected) throw InferenceError("embedding count mismatch");
      for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t idx = data[i].contains("index") ? data[i]["index"].get<std::size_t>() : i;
        if (idx >= expected || !vecs[idx].empty()) throw InferenceError("bad embedding index");
        vecs[idx] = data[i].at("embedding").get<std::vector<double>>();
        if (vecs[idx].empty()) throw InferenceError("empty embedding vector");
      }
    } catch (const json::exception& e) {
      throw InferenceError(std::string("malformed embeddings response: ") + e.what());
    }
    return vecs;
  };

  parallel_for(batches, static_cast<std::size_t>(std::max(1, options_.per_endpoint_concurrency)),
               [&](std::size_t b) {
                 const std::size_t lo = b * batch;
                 const std::size_t hi = std::min(texts.size(), lo + batch);
                 const std::vector<std::string> chunk(texts.begin() + lo, texts.begin() + hi);
                 const json body = {{"model", endpoint.model}, {"input", chunk}};
                 const std::string raw = request_with_cache(
                     endpoint, "embed", "/embeddings", body, json(chunk), 0,
                     [&](const std::string& r) { parse_batch(r, chunk.size()); });
                 auto vecs = parse_batch(raw, chunk.size());
                 for (std::size_t i = 0; i < vecs.size(); ++i) out[lo + i] = std::move(vecs[i]);
               });

  const std::size_t dim = out.front().size();
  for (const auto& v : out) {
    if (v.size() != dim) throw InferenceError("embedding dimension mismatch across inputs");
  }
  return out;
}

void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace polyglot
