#include "demokit/errors.hpp"
#include "demokit/hashing.hpp"
#include "demokit/know_seeker.hpp"
#include "demokit/model_client.hpp"

#include "support/fixtures.hpp"

#include <httplib.h>

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

namespace demokit {
namespace {

ChatRequest text_request(const std::string& text) {
    ChatRequest r;
    r.system_prompt = "sys";
    r.user_parts.push_back(TextPart{text});
    return r;
}

TEST(ChatRequestTest, DefaultsAndValidation) {
    ChatRequest r;
    EXPECT_EQ(r.temperature, 0.0);
    EXPECT_EQ(r.max_output_tokens, 2048);
    EXPECT_THROW(validate(r), InvalidInput);
    r = text_request("x");
    EXPECT_NO_THROW(validate(r));
    r.temperature = -0.1;
    EXPECT_THROW(validate(r), InvalidInput);
    r = text_request("x");
    r.max_output_tokens = 0;
    EXPECT_THROW(validate(r), InvalidInput);
}

TEST(WireFormat, Shape) {
    testing::TempDir dir;
    write_text_file(dir / "s.png", "PNGDATA");
    ChatRequest r = text_request("hello");
    r.user_parts.push_back(image_file(dir / "s.png"));

    const json inline_wire = to_wire_json(r, true);
    EXPECT_EQ(inline_wire["system"], "sys");
    EXPECT_EQ(inline_wire["temperature"], 0.0);
    EXPECT_EQ(inline_wire["max_tokens"], 2048);
    ASSERT_EQ(inline_wire["parts"].size(), 2u);
    EXPECT_EQ(inline_wire["parts"][0], (json{{"type", "text"}, {"value", "hello"}}));
    EXPECT_EQ(inline_wire["parts"][1]["type"], "image");
    EXPECT_EQ(inline_wire["parts"][1]["mime"], "image/png");
    EXPECT_EQ(inline_wire["parts"][1]["value"], base64_encode("PNGDATA"));
}

TEST(WireFormat, FingerprintIgnoresLocationOnlyThroughContent) {
    ChatRequest a = text_request("one");
    ChatRequest b = text_request("one");
    EXPECT_EQ(request_fingerprint(a), request_fingerprint(b));
    b.user_parts.push_back(TextPart{"two"});
    EXPECT_NE(request_fingerprint(a), request_fingerprint(b));
    EXPECT_EQ(request_fingerprint(a).size(), 64u);
}

TEST(Hashing, KnownVectors) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(base64_encode("hello"), "aGVsbG8=");
    EXPECT_EQ(base64_encode(""), "");
}

TEST(ScriptedClientTest, RepliesInOrderThenFails) {
    ScriptedClient c({"first", "second"});
    EXPECT_EQ(c.complete(text_request("a")), "first");
    EXPECT_EQ(c.complete(text_request("b")), "second");
    EXPECT_THROW(c.complete(text_request("c")), BackendFailure);
    EXPECT_EQ(c.calls(), 3u);
    ASSERT_EQ(c.requests().size(), 3u);
    EXPECT_EQ(std::get<TextPart>(c.requests()[1].user_parts[0]).text, "b");
}

TEST(EchoClientTest, ReplaysGoldActions) {
    EchoClient c(std::vector<Action>{action::Click{1, 2}, action::TaskComplete{"ok"}});
    EXPECT_EQ(c.complete(text_request("x")), "CLICK[1,2]");
    EXPECT_EQ(c.complete(text_request("x")), "TASK_COMPLETE[ok]");
}

TEST(HashEmbedderTest, ShapeDeterminismCache) {
    HashEmbedder e(32);
    EXPECT_EQ(e.tag(), "hash-v1:dim=32");
    const auto v = e.embed({"a", "a"});
    ASSERT_EQ(v.size(), 2u);
    EXPECT_EQ(v[0], v[1]);
    EXPECT_EQ(e.cache_size(), 1u);

    const auto xy = e.embed({"x", "y"});
    EXPECT_EQ(xy[0].dimension(), 32u);
    EXPECT_EQ(xy[1].dimension(), 32u);

    HashEmbedder other(32);
    EXPECT_EQ(other.embed_one("open gmail"), e.embed_one("open gmail"));
    EXPECT_THROW(e.embed({}), InvalidInput);
}

TEST(HashEmbedderTest, OrderAndLengthPreserved) {
    HashEmbedder e(16);
    const std::vector<std::string> texts{"c", "a", "b", "a", "c"};
    const auto batch = e.embed(texts);
    ASSERT_EQ(batch.size(), texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i)
        EXPECT_EQ(batch[i], e.embed_one(texts[i]));
}

TEST(HashEmbedderTest, NeverZero) {
    HashEmbedder e(1);
    for (const char* s : {"", "!!!", "a b", "b a"}) {
        const auto v = e.embed_one(s);
        EXPECT_NE(v.values[0], 0.0) << s;
    }
}

TEST(HashEmbedderTest, SimilarTextsScoreHigher) {
    HashEmbedder e(256);
    const double close = cosine_similarity(e.embed_one("open the gmail inbox"), e.embed_one("open gmail inbox"));
    const double far = cosine_similarity(e.embed_one("open the gmail inbox"), e.embed_one("book a hotel in rome"));
    EXPECT_GT(close, far);
}

TEST(HashEmbedderTest, ConcurrentUse) {
    HashEmbedder e(64);
    std::vector<std::jthread> pool;
    std::atomic<int> mismatches{0};
    const auto ref = e.embed_one("shared text");
    for (int t = 0; t < 4; ++t)
        pool.emplace_back([&] {
            for (int i = 0; i < 200; ++i)
                if (e.embed_one("shared text") != ref || e.embed_one("t" + std::to_string(i)).dimension() != 64)
                    ++mismatches;
        });
    pool.clear();
    EXPECT_EQ(mismatches.load(), 0);
}

// A local server whose status sequence is scripted per request.
class FakeBackend {
  public:
    explicit FakeBackend(std::vector<std::pair<int, std::string>> responses, int delay_ms = 0)
        : responses_(std::move(responses)), delay_ms_(delay_ms) {
        server_.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
            const std::size_t i = hits_++;
            last_body_ = req.body;
            last_auth_ = req.get_header_value("Authorization");
            if (delay_ms_)
                std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
            const auto& r = responses_[std::min(i, responses_.size() - 1)];
            res.status = r.first;
            res.set_content(r.second, "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeBackend() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/generate"; }
    std::size_t hits() const { return hits_; }
    const std::string& last_body() const { return last_body_; }
    const std::string& last_auth() const { return last_auth_; }

  private:
    httplib::Server server_;
    std::vector<std::pair<int, std::string>> responses_;
    int delay_ms_;
    std::atomic<std::size_t> hits_{0};
    std::string last_body_;
    std::string last_auth_;
    int port_ = 0;
    std::thread thread_;
};

HttpBackendConfig fast_config(const std::string& url) {
    HttpBackendConfig c;
    c.endpoint = url;
    c.model = "test-model";
    c.api_key = "secret";
    c.retry.max_retries = 3;
    c.retry.initial_backoff = std::chrono::milliseconds(1);
    c.retry.timeout = std::chrono::milliseconds(2000);
    return c;
}

TEST(HttpModelClientTest, RetriesServerErrorsThenSucceeds) {
    FakeBackend backend({{500, "oops"}, {500, "oops"}, {200, R"({"text":"CLICK[1,2]"})"}});
    HttpModelClient client(fast_config(backend.url()));
    EXPECT_EQ(client.complete(text_request("hi")), "CLICK[1,2]");
    EXPECT_EQ(backend.hits(), 3u);

    const json body = json::parse(backend.last_body());
    EXPECT_EQ(body["model"], "test-model");
    EXPECT_EQ(body["system"], "sys");
    EXPECT_EQ(backend.last_auth(), "Bearer secret");
}

TEST(HttpModelClientTest, ClientErrorIsNotRetried) {
    FakeBackend backend({{401, "unauthorized"}});
    HttpModelClient client(fast_config(backend.url()));
    try {
        client.complete(text_request("hi"));
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.status(), 401);
        EXPECT_EQ(e.body_excerpt(), "unauthorized");
    }
    EXPECT_EQ(backend.hits(), 1u);
}

TEST(HttpModelClientTest, GivesUpAfterMaxRetries) {
    FakeBackend backend({{503, "busy"}});
    HttpModelClient client(fast_config(backend.url()));
    EXPECT_THROW(client.complete(text_request("hi")), BackendError);
    EXPECT_EQ(backend.hits(), 4u);
}

TEST(HttpModelClientTest, RawBodyWhenNoTextField) {
    FakeBackend backend({{200, "TYPE[plain]"}});
    HttpModelClient client(fast_config(backend.url()));
    EXPECT_EQ(client.complete(text_request("hi")), "TYPE[plain]");
}

TEST(HttpModelClientTest, SlowBackendTimesOut) {
    FakeBackend backend({{200, "late"}}, 400);
    auto cfg = fast_config(backend.url());
    cfg.retry.timeout = std::chrono::milliseconds(100);
    cfg.retry.max_retries = 0;
    HttpModelClient client(cfg);
    EXPECT_THROW(client.complete(text_request("hi")), Timeout);
}

TEST(HttpModelClientTest, ConnectionRefusedIsTransportError) {
    const int port = testing::unused_local_port();
    auto cfg = fast_config("http://127.0.0.1:" + std::to_string(port) + "/v1/generate");
    cfg.retry.max_retries = 1;
    HttpModelClient client(cfg);
    EXPECT_THROW(client.complete(text_request("hi")), TransportError);
}

TEST(HttpTransportTest, RejectsRelativeEndpoint) {
    HttpBackendConfig c;
    c.endpoint = "localhost/generate";
    EXPECT_THROW(HttpTransport{c}, InvalidInput);
}

TEST(HttpEmbedderTest, ParsesEmbeddingsAndChecksDimension) {
    FakeBackend backend({{200, R"({"embeddings":[[1,0,0],[0,1,0]]})"}});
    HttpEmbedder e(fast_config(backend.url()), 3);
    const auto v = e.embed({"a", "b"});
    EXPECT_EQ(v[0].values, (std::vector<double>{1, 0, 0}));
    EXPECT_EQ(v[1].values, (std::vector<double>{0, 1, 0}));
    EXPECT_EQ(json::parse(backend.last_body())["texts"], (json{"a", "b"}));

    HttpEmbedder wrong(fast_config(backend.url()), 4);
    EXPECT_THROW(wrong.embed({"a", "b"}), DimensionMismatch);
}

TEST(HttpEmbedderTest, MalformedResponse) {
    FakeBackend backend({{200, R"({"vectors":[]})"}});
    HttpEmbedder e(fast_config(backend.url()), 3);
    EXPECT_THROW(e.embed({"a"}), BackendFailure);
}

} // namespace
} // namespace demokit
