#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>

#include "common.hpp"
#include "polyglot/error.hpp"

using namespace polyglot;
using nlohmann::json;
using testing_support::endpoint;
using testing_support::fast_options;
using testing_support::TempDir;

namespace {

ChatRequest hello(std::uint64_t seed = 7) { return {{{"user", "hello"}}, seed}; }

std::shared_ptr<stub::FakeTransport> echo_transport() {
  return std::make_shared<stub::FakeTransport>([](const std::string&, const json& body) {
    return stub::chat_reply("seed " + std::to_string(body.at("seed").get<std::uint64_t>()));
  });
}

}  // namespace

TEST(InferenceClient, PrimedCacheServesWithoutNetwork) {
  TempDir dir;
  auto opts = fast_options();
  opts.cache_dir = dir.path();
  auto t = echo_transport();
  InferenceClient first(opts, t);
  const ChatResponse a = first.chat(endpoint("m"), hello());
  EXPECT_EQ(t->calls(), 1);

  InferenceClient second(opts, t);
  const ChatResponse b = second.chat(endpoint("m"), hello());
  EXPECT_EQ(t->calls(), 1);
  EXPECT_EQ(second.stats().network_calls, 0u);
  EXPECT_EQ(second.stats().cache_hits, 1u);
  EXPECT_EQ(a.raw_body, b.raw_body);
  EXPECT_EQ(b.text, "seed 7");

  opts.offline = true;
  InferenceClient offline(opts, t);
  EXPECT_EQ(offline.chat(endpoint("m"), hello()).text, "seed 7");
  EXPECT_THROW(offline.chat(endpoint("m"), hello(8)), InferenceError);
}

TEST(InferenceClient, RequestSeedIsPartOfTheKey) {
  TempDir dir;
  auto opts = fast_options();
  opts.cache_dir = dir.path();
  auto t = echo_transport();
  InferenceClient c(opts, t);
  EXPECT_EQ(c.chat(endpoint("m"), hello(1)).text, "seed 1");
  EXPECT_EQ(c.chat(endpoint("m"), hello(2)).text, "seed 2");
  EXPECT_EQ(t->calls(), 2);
  const json payload = {{"messages", "x"}};
  EXPECT_NE(InferenceClient::cache_key("chat", endpoint("m"), payload, 1),
            InferenceClient::cache_key("chat", endpoint("m"), payload, 2));
  EXPECT_EQ(InferenceClient::cache_key("chat", endpoint("m"), payload, 1),
            InferenceClient::cache_key("chat", endpoint("m"), payload, 1));
  auto hot = endpoint("m");
  hot.params.temperature = 0.3;
  EXPECT_NE(InferenceClient::cache_key("chat", endpoint("m"), payload, 1),
            InferenceClient::cache_key("chat", hot, payload, 1));
}

TEST(InferenceClient, RetriesServerErrorsThenSucceeds) {
  std::atomic<int> n{0};
  auto t = std::make_shared<stub::FakeTransport>([&](const std::string&, const json&) {
    return ++n <= 2 ? stub::Reply{500, "busy"} : stub::chat_reply("ok");
  });
  InferenceClient c(fast_options(), t);
  EXPECT_EQ(c.chat(endpoint("m"), hello()).text, "ok");
  EXPECT_EQ(t->calls(), 3);
  EXPECT_EQ(c.stats().retries, 2u);
}

TEST(InferenceClient, ClientErrorsAreNotRetried) {
  auto t = std::make_shared<stub::FakeTransport>(
      [](const std::string&, const json&) { return stub::Reply{400, "bad request"}; });
  InferenceClient c(fast_options(), t);
  try {
    c.chat(endpoint("m"), hello());
    FAIL() << "expected an InferenceError";
  } catch (const InferenceError& e) {
    EXPECT_EQ(e.status(), 400);
  }
  EXPECT_EQ(t->calls(), 1);
}

TEST(InferenceClient, GivesUpAfterMaxAttempts) {
  auto t = std::make_shared<stub::FakeTransport>([](const std::string&, const json&) { return stub::Reply{0, "refused"}; });
  auto opts = fast_options();
  opts.max_attempts = 3;
  InferenceClient c(opts, t);
  EXPECT_THROW(c.chat(endpoint("m"), hello()), InferenceError);
  EXPECT_EQ(t->calls(), 3);
}

TEST(InferenceClient, MalformedBodyIsAnError) {
  auto t = std::make_shared<stub::FakeTransport>([](const std::string&, const json&) { return stub::Reply{200, "{}"}; });
  InferenceClient c(fast_options(), t);
  EXPECT_THROW(c.chat(endpoint("m"), hello()), InferenceError);
}

TEST(InferenceClient, BearerTokenComesFromNamedVariable) {
  ::setenv("POLYGLOT_TEST_KEY", "s3cret", 1);
  auto t = echo_transport();
  InferenceClient c(fast_options(), t);
  auto e = endpoint("m");
  e.api_key_env = "POLYGLOT_TEST_KEY";
  c.chat(e, hello());
  bool found = false;
  for (const auto& [k, v] : t->last_headers()) found |= k == "Authorization" && v == "Bearer s3cret";
  EXPECT_TRUE(found);
}

TEST(InferenceClient, GenerationParametersAreForwarded) {
  auto t = echo_transport();
  InferenceClient c(fast_options(), t);
  c.chat(endpoint("gemma-3-27b-it").with_recommended_defaults(), hello());
  const json body = json::parse(t->bodies().back());
  EXPECT_TRUE(body.contains("temperature"));
  EXPECT_TRUE(body.contains("top_p"));
  EXPECT_EQ(body.at("seed").get<std::uint64_t>(), 7u);
}

TEST(ScoreContinuation, PassesThroughScriptedValues) {
  auto t = std::make_shared<stub::FakeTransport>([](const std::string&, const json& body) {
    return stub::per_byte_logprobs(body.at("prompt").get<std::string>(), [](std::size_t) { return -1.0; });
  });
  InferenceClient c(fast_options(), t);
  const LogprobResult r = c.score_continuation(endpoint("base"), "ab", "xyz");
  EXPECT_EQ(r.token_count(), 3u);
  EXPECT_DOUBLE_EQ(r.sum(), -3.0);
  EXPECT_THROW(c.score_continuation(endpoint("base"), "ab", ""), ValidationError);
}

TEST(ScoreContinuation, TranscriptValuesAtContinuationPositions) {
  const std::string ctx = "Frage:\n\n", cont = "Antwort";
  auto t = std::make_shared<stub::FakeTransport>([&](const std::string&, const json& body) {
    return stub::per_byte_logprobs(body.at("prompt").get<std::string>(),
                                   [](std::size_t i) { return -0.1 * static_cast<double>(i); });
  });
  InferenceClient c(fast_options(), t);
  const LogprobResult r = c.score_continuation(endpoint("base"), ctx, cont);
  ASSERT_EQ(r.token_count(), cont.size());
  for (std::size_t i = 0; i < cont.size(); ++i) {
    EXPECT_DOUBLE_EQ(r.logprobs[i], -0.1 * static_cast<double>(ctx.size() + i));
  }
}

TEST(ScoreContinuation, MissingLogprobsIsACapabilityError) {
  auto t = std::make_shared<stub::FakeTransport>([](const std::string&, const json&) {
    return stub::ok_json({{"choices", {{{"text", "x"}, {"logprobs", nullptr}}}}});
  });
  InferenceClient c(fast_options(), t);
  EXPECT_THROW(c.score_continuation(endpoint("base"), "a", "b"), CapabilityError);
}

TEST(ScoreContinuation, ContextOverflowIsATruncation) {
  auto t = std::make_shared<stub::FakeTransport>([](const std::string&, const json& body) {
    return stub::per_byte_logprobs(body.at("prompt").get<std::string>(), [](std::size_t) { return -1.0; });
  });
  InferenceClient c(fast_options(), t);
  auto e = endpoint("base");
  e.params.max_seq_len = 4;
  EXPECT_THROW(c.score_continuation(e, "abc", "defg"), TruncationError);

  auto rejecting = std::make_shared<stub::FakeTransport>([](const std::string&, const json&) {
    return stub::Reply{400, R"({"error":"This model's maximum context length is 8192 tokens"})"};
  });
  InferenceClient c2(fast_options(), rejecting);
  EXPECT_THROW(c2.score_continuation(endpoint("base"), "abc", "defg"), TruncationError);
}

TEST(Embed, OneTextOneVector) {
  auto t = std::make_shared<stub::FakeTransport>([](const std::string&, const json& body) {
    std::vector<std::vector<double>> v(body.at("input").size(), std::vector<double>(8, 0.5));
    return stub::embeddings_reply(v);
  });
  InferenceClient c(fast_options(), t);
  const auto out = c.embed(endpoint("emb"), {"hallo"});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].size(), 8u);
  EXPECT_THROW(c.embed(endpoint("emb"), {}), ValidationError);
}

TEST(Embed, BatchesAndPreservesOrder) {
  auto t = std::make_shared<stub::FakeTransport>([](const std::string&, const json& body) {
    std::vector<std::vector<double>> v;
    for (const auto& s : body.at("input")) v.push_back({std::stod(s.get<std::string>()), 1.0});
    // answer in reverse order with explicit indices
    json data = json::array();
    for (std::size_t i = v.size(); i-- > 0;) data.push_back({{"index", i}, {"embedding", v[i]}});
    return stub::ok_json({{"data", data}});
  });
  InferenceClient c(fast_options(), t);
  std::vector<std::string> texts;
  for (int i = 0; i < 1000; ++i) texts.push_back(std::to_string(i));
  const auto out = c.embed(endpoint("emb"), texts);
  EXPECT_EQ(t->calls(), 16);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(out[i][0], i);
}

TEST(Embed, OrthonormalScriptIsReturnedVerbatim) {
  const std::vector<std::vector<double>> basis = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  auto t = std::make_shared<stub::FakeTransport>(
      [&](const std::string&, const json&) { return stub::embeddings_reply(basis); });
  InferenceClient c(fast_options(), t);
  EXPECT_EQ(c.embed(endpoint("emb"), {"a", "b", "c"}), basis);
}

TEST(InferenceClient, PerEndpointConcurrencyIsBounded) {
  stub::Server server([](const std::string&, const json&) { return stub::chat_reply("ok"); },
                      std::chrono::milliseconds(40));
  auto opts = fast_options();
  opts.per_endpoint_concurrency = 2;
  InferenceClient c(opts, make_http_transport(std::chrono::seconds(10)));
  const auto e = endpoint("m", server.url());
  parallel_for(8, 8, [&](std::size_t i) { c.chat(e, hello(i)); });
  EXPECT_EQ(server.requests(), 8);
  EXPECT_LE(server.max_in_flight(), 2);
  EXPECT_GE(server.max_in_flight(), 1);
}

TEST(ParallelFor, RethrowsLowestIndexFailure) {
  try {
    parallel_for(10, 4, [](std::size_t i) {
      if (i == 3 || i == 7) throw ValidationError("fail " + std::to_string(i));
    });
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "fail 3");
  }
}
