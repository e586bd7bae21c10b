#pragma once

#include "demokit/action.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace demokit {

struct Trajectory;

struct TextPart {
    std::string text;
    friend bool operator==(const TextPart&, const TextPart&) = default;
};

// An image either referenced by file path or carried as encoded bytes
// (bytes win when both are set). Files are read only when a request goes
// over the wire.
struct ImagePart {
    std::filesystem::path path;
    std::string encoded;
    std::string mime = "image/png";
    friend bool operator==(const ImagePart&, const ImagePart&) = default;
};

/// File reference with the mime type guessed from the extension.
ImagePart image_file(const std::filesystem::path& path);

using UserPart = std::variant<TextPart, ImagePart>;

struct ChatRequest {
    std::string system_prompt;
    std::vector<UserPart> user_parts;
    double temperature = 0.0;
    int max_output_tokens = 2048;
};

/// Neutral wire form: {system, parts:[{type, value}], temperature, max_tokens}.
/// With inline_images, image values are base64 of the encoded bytes;
/// otherwise they are the path (or a digest of inline bytes), which is what
/// prompt fingerprints use.
nlohmann::json to_wire_json(const ChatRequest& req, bool inline_images);

/// Stable hash of a request, independent of image file contents.
std::string request_fingerprint(const ChatRequest& req);

/// Throws InvalidInput on a request that violates its invariants.
void validate(const ChatRequest& req);

/// A generative backend. Implementations must be safe to share across threads.
class ModelClient {
  public:
    virtual ~ModelClient() = default;
    virtual std::string complete(const ChatRequest& req) = 0;
};

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dimension() const noexcept { return values.size(); }
    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// Text embedder with an exact-string cache shared by all callers.
class Embedder {
  public:
    virtual ~Embedder() = default;

    /// One vector per input, in input order. Throws InvalidInput on an empty list.
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts);
    EmbeddingVector embed_one(const std::string& text);

    virtual std::size_t dimension() const = 0;

    /// Identifies the embedder configuration; stored with persisted indices.
    virtual std::string tag() const = 0;

    std::size_t cache_size() const;

  protected:
    virtual std::vector<EmbeddingVector> embed_uncached(const std::vector<std::string>& texts) = 0;

  private:
    mutable std::mutex mu_;
    std::unordered_map<std::string, EmbeddingVector> cache_;
};

/// Deterministic feature-hashing embedder: lowercase alphanumeric tokens
/// (and adjacent token pairs) are hashed into signed buckets, so texts
/// sharing words land close together.
class HashEmbedder final : public Embedder {
  public:
    explicit HashEmbedder(std::size_t dimension = 64);

    std::size_t dimension() const override { return dim_; }
    std::string tag() const override;

  protected:
    std::vector<EmbeddingVector> embed_uncached(const std::vector<std::string>& texts) override;

  private:
    std::size_t dim_;
};

/// Replies with a fixed script, one entry per call. Running past the end
/// throws BackendFailure. Every request is recorded.
class ScriptedClient : public ModelClient {
  public:
    explicit ScriptedClient(std::vector<std::string> replies);

    std::string complete(const ChatRequest& req) override;

    std::size_t calls() const;
    std::vector<ChatRequest> requests() const;

  private:
    mutable std::mutex mu_;
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
    std::vector<ChatRequest> requests_;
};

/// Replays a gold action sequence: call t returns the canonical string of gold step t.
class EchoClient final : public ScriptedClient {
  public:
    explicit EchoClient(const Trajectory& gold);
    explicit EchoClient(const std::vector<Action>& gold);
};

/// Delegates to a callable; handy for classifiers and fault injection in tests.
class CallbackClient final : public ModelClient {
  public:
    using Fn = std::function<std::string(const ChatRequest&)>;
    explicit CallbackClient(Fn fn) : fn_(std::move(fn)) {}
    std::string complete(const ChatRequest& req) override { return fn_(req); }

  private:
    Fn fn_;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::milliseconds timeout{60000};
};

struct HttpBackendConfig {
    std::string endpoint; // full URL, e.g. https://host:443/v1/generate
    std::string model;
    std::string api_key; // sent as a bearer token when non-empty
    RetryPolicy retry;
};

/// POSTs JSON with retries: transport failures, timeouts and 5xx are retried
/// with exponential backoff; 4xx fails immediately with BackendError.
class HttpTransport {
  public:
    explicit HttpTransport(HttpBackendConfig config);

    std::string post_json(const nlohmann::json& body) const;
    const HttpBackendConfig& config() const noexcept { return config_; }

  private:
    HttpBackendConfig config_;
    std::string scheme_host_port_;
    std::string path_;
};

/// Response: a JSON object whose "text" string is the output; any other body
/// is returned verbatim.
class HttpModelClient final : public ModelClient {
  public:
    explicit HttpModelClient(HttpBackendConfig config) : transport_(std::move(config)) {}
    std::string complete(const ChatRequest& req) override;

  private:
    HttpTransport transport_;
};

/// Request {model, texts}; response {"embeddings": [[...], ...]}.
class HttpEmbedder final : public Embedder {
  public:
    HttpEmbedder(HttpBackendConfig config, std::size_t dimension);

    std::size_t dimension() const override { return dim_; }
    std::string tag() const override;

  protected:
    std::vector<EmbeddingVector> embed_uncached(const std::vector<std::string>& texts) override;

  private:
    HttpTransport transport_;
    std::size_t dim_;
};

} // namespace demokit
