#pragma once

// Gateway to OpenAI-compatible model endpoints: chat completions,
// teacher-forced log-probabilities (completions with echo) and embeddings.
//
// Every successful response body is stored in a content-addressed cache at
// <cache>/<model-id>/<key-hash>.json, where the key hashes a canonical JSON
// serialization of (kind, model, parameters, payload, request seed). With a
// primed cache no network I/O happens.

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace polyglot {

struct GenerationParams {
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<int> top_k;
  /// Context window of the served model; used to detect truncation.
  std::optional<int> max_seq_len;
  /// Cap on generated tokens, forwarded as max_tokens.
  std::optional<int> max_tokens;

  bool operator==(const GenerationParams&) const = default;
};

/// Per-model inference settings for the known teacher families; the "Default"
/// row (temperature 0.8, top-p 0.9) applies to anything unrecognized.
GenerationParams recommended_params(const std::string& model_id);

struct ModelEndpoint {
  /// Base URL including the API prefix, e.g. "http://localhost:8000/v1".
  std::string base_url;
  std::string model;
  GenerationParams params;
  /// Name of the environment variable holding the bearer token, if any.
  std::string api_key_env;

  /// Fills unset generation parameters from recommended_params(model).
  ModelEndpoint with_recommended_defaults() const;
};

/// Throws ValidationError unless temperature >= 0, top_p in (0,1],
/// top_k >= 1, max_seq_len >= 1 and base_url/model are non-empty.
void validate(const ModelEndpoint& endpoint);

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::uint64_t seed = 0;
};

struct TokenUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  std::string finish_reason;
  TokenUsage usage;
  /// Response body exactly as received or cached.
  std::string raw_body;
};

struct LogprobResult {
  std::vector<double> logprobs;

  std::size_t token_count() const noexcept { return logprobs.size(); }
  double sum() const;
};

struct HttpResponse {
  /// 0 signals a transport-level failure (connection refused, timeout).
  int status = 0;
  std::string body;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& url, const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

/// cpp-httplib backed transport; supports http:// and https:// URLs.
std::shared_ptr<Transport> make_http_transport(std::chrono::seconds timeout = std::chrono::seconds(600));

struct ClientOptions {
  std::optional<std::filesystem::path> cache_dir;
  /// Fail on cache misses instead of contacting the endpoint.
  bool offline = false;
  int max_attempts = 5;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{30000};
  int global_concurrency = 16;
  int per_endpoint_concurrency = 8;
  std::size_t embed_batch_size = 64;
};

struct ClientStats {
  std::uint64_t network_calls = 0;  // HTTP requests actually sent
  std::uint64_t cache_hits = 0;
  std::uint64_t retries = 0;
};

/// Counting semaphore with a runtime bound.
class Semaphore {
 public:
  explicit Semaphore(int permits) : permits_(permits) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int permits_;
};

class InferenceClient {
 public:
  explicit InferenceClient(ClientOptions options = {},
                           std::shared_ptr<Transport> transport = make_http_transport());

  InferenceClient(const InferenceClient&) = delete;
  InferenceClient& operator=(const InferenceClient&) = delete;

  /// Chat completion. Retries timeouts, 408, 429 and 5xx with exponential
  /// backoff; other 4xx and malformed bodies throw InferenceError.
  ChatResponse chat(const ModelEndpoint& endpoint, const ChatRequest& request);

  /// Log-probabilities of `continuation` given `context` under teacher forcing.
  /// Throws ValidationError for an empty continuation, TruncationError when
  /// the text exceeds the endpoint's context window and CapabilityError when
  /// the endpoint returns no log-probabilities.
  LogprobResult score_continuation(const ModelEndpoint& endpoint, const std::string& context,
                                   const std::string& continuation);

  /// One vector per text, in input order; batches of options.embed_batch_size.
  std::vector<std::vector<double>> embed(const ModelEndpoint& endpoint,
                                         const std::vector<std::string>& texts);

  ClientStats stats() const;
  const ClientOptions& options() const noexcept { return options_; }

  /// Cache key for a request payload, exposed for tests and tooling.
  static std::string cache_key(const std::string& kind, const ModelEndpoint& endpoint,
                               const nlohmann::json& payload, std::uint64_t seed);
  std::optional<std::filesystem::path> cache_path(const std::string& model,
                                                  const std::string& key) const;

 private:
  std::string request_with_cache(const ModelEndpoint& endpoint, const std::string& kind,
                                 const std::string& route, const nlohmann::json& body,
                                 const nlohmann::json& key_payload, std::uint64_t seed,
                                 const std::function<void(const std::string&)>& check);
  HttpResponse send_with_retries(const ModelEndpoint& endpoint, const std::string& url,
                                 const std::string& body);
  Semaphore& endpoint_semaphore(const ModelEndpoint& endpoint);
  std::mutex& key_mutex(const std::string& key);

  ClientOptions options_;
  std::shared_ptr<Transport> transport_;
  Semaphore global_;
  std::mutex endpoints_mu_;
  std::map<std::string, std::unique_ptr<Semaphore>> per_endpoint_;
  std::array<std::mutex, 64> key_mutexes_;
  std::atomic<std::uint64_t> network_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> retries_{0};
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions are
/// collected and the one with the lowest index is rethrown after all work
/// finishes.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace polyglot
