#include "demokit/model_client.hpp"

#include "demokit/errors.hpp"
#include "demokit/hashing.hpp"
#include "demokit/store.hpp"
#include "demokit/text.hpp"

#include <httplib.h>

#include <cmath>
#include <thread>

namespace demokit {

using nlohmann::json;

ImagePart image_file(const std::filesystem::path& path) {
    const std::string ext = text::lower(path.extension().string());
    return ImagePart{path, {}, (ext == ".jpg" || ext == ".jpeg") ? "image/jpeg" : "image/png"};
}

json to_wire_json(const ChatRequest& req, bool inline_images) {
    json parts = json::array();
    for (const auto& part : req.user_parts) {
        if (const auto* t = std::get_if<TextPart>(&part)) {
            parts.push_back({{"type", "text"}, {"value", t->text}});
            continue;
        }
        const auto& img = std::get<ImagePart>(part);
        std::string value;
        if (inline_images) {
            value = base64_encode(img.encoded.empty() ? read_text_file(img.path) : img.encoded);
        } else {
            value = img.encoded.empty() ? img.path.generic_string() : "sha256:" + sha256_hex(img.encoded);
        }
        parts.push_back({{"type", "image"}, {"mime", img.mime}, {"value", std::move(value)}});
    }
    return {{"system", req.system_prompt},
            {"parts", std::move(parts)},
            {"temperature", req.temperature},
            {"max_tokens", req.max_output_tokens}};
}

std::string request_fingerprint(const ChatRequest& req) {
    return sha256_hex(to_wire_json(req, false).dump());
}

void validate(const ChatRequest& req) {
    if (req.user_parts.empty())
        throw InvalidInput("chat request needs at least one user part");
    if (!(req.temperature >= 0.0))
        throw InvalidInput("temperature must be >= 0");
    if (req.max_output_tokens <= 0)
        throw InvalidInput("max_output_tokens must be positive");
}

// ---- Embedder ----

std::vector<EmbeddingVector> Embedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty())
        throw InvalidInput("embed() needs at least one text");

    std::vector<std::string> missing;
    {
        std::lock_guard lock(mu_);
        for (const auto& t : texts)
            if (!cache_.contains(t) && std::find(missing.begin(), missing.end(), t) == missing.end())
                missing.push_back(t);
    }
    if (!missing.empty()) {
        auto fresh = embed_uncached(missing);
        if (fresh.size() != missing.size())
            throw BackendFailure("embedder returned " + std::to_string(fresh.size()) + " vectors for " +
                                 std::to_string(missing.size()) + " texts");
        for (const auto& v : fresh) {
            if (v.dimension() != dimension())
                throw DimensionMismatch("embedder returned dimension " + std::to_string(v.dimension()) +
                                        ", expected " + std::to_string(dimension()));
            for (double x : v.values)
                if (!std::isfinite(x))
                    throw BackendFailure("embedder returned a non-finite value");
        }
        std::lock_guard lock(mu_);
        for (std::size_t i = 0; i < missing.size(); ++i)
            cache_.try_emplace(missing[i], std::move(fresh[i]));
    }

    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    std::lock_guard lock(mu_);
    for (const auto& t : texts)
        out.push_back(cache_.at(t));
    return out;
}

EmbeddingVector Embedder::embed_one(const std::string& text) { return embed({text}).front(); }

std::size_t Embedder::cache_size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
}

HashEmbedder::HashEmbedder(std::size_t dimension) : dim_(dimension) {
    if (dim_ == 0)
        throw InvalidInput("embedding dimension must be positive");
}

std::string HashEmbedder::tag() const { return "hash-v1:dim=" + std::to_string(dim_); }

std::vector<EmbeddingVector> HashEmbedder::embed_uncached(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        std::vector<std::string> tokens;
        std::string cur;
        for (char c : t) {
            if (std::isalnum(static_cast<unsigned char>(c))) {
                cur += text::to_lower(c);
            } else if (!cur.empty()) {
                tokens.push_back(std::move(cur));
                cur.clear();
            }
        }
        if (!cur.empty())
            tokens.push_back(std::move(cur));
        if (tokens.empty())
            tokens.emplace_back("\x01empty");

        EmbeddingVector v{std::vector<double>(dim_, 0.0)};
        auto add = [&](std::string_view feature, double weight) {
            const std::uint64_t h = fnv1a64(feature);
            const double sign = (h >> 63) ? -1.0 : 1.0;
            v.values[h % dim_] += sign * weight;
        };
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            add(tokens[i], 1.0);
            if (i + 1 < tokens.size())
                add(tokens[i] + ' ' + tokens[i + 1], 0.5);
        }
        // Hash collisions can cancel every bucket; keep the vector non-zero.
        if (std::all_of(v.values.begin(), v.values.end(), [](double x) { return x == 0.0; }))
            v.values[fnv1a64(t) % dim_] = 1.0;
        out.push_back(std::move(v));
    }
    return out;
}

// ---- Mocks ----

ScriptedClient::ScriptedClient(std::vector<std::string> replies) : replies_(std::move(replies)) {}

std::string ScriptedClient::complete(const ChatRequest& req) {
    validate(req);
    std::lock_guard lock(mu_);
    requests_.push_back(req);
    if (next_ >= replies_.size())
        throw BackendFailure("scripted client exhausted after " + std::to_string(replies_.size()) + " replies");
    return replies_[next_++];
}

std::size_t ScriptedClient::calls() const {
    std::lock_guard lock(mu_);
    return requests_.size();
}

std::vector<ChatRequest> ScriptedClient::requests() const {
    std::lock_guard lock(mu_);
    return requests_;
}

namespace {

std::vector<std::string> render_all(const std::vector<Action>& actions) {
    std::vector<std::string> out;
    out.reserve(actions.size());
    for (const auto& a : actions)
        out.push_back(render_action(a));
    return out;
}

std::vector<Action> actions_of(const Trajectory& t) {
    std::vector<Action> out;
    out.reserve(t.steps.size());
    for (const auto& s : t.steps)
        out.push_back(s.action);
    return out;
}

} // namespace

EchoClient::EchoClient(const std::vector<Action>& gold) : ScriptedClient(render_all(gold)) {}
EchoClient::EchoClient(const Trajectory& gold) : EchoClient(actions_of(gold)) {}

// ---- HTTP ----

HttpTransport::HttpTransport(HttpBackendConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos)
        throw InvalidInput("endpoint must be an absolute URL: '" + config_.endpoint + "'");
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    scheme_host_port_ = config_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
    if (config_.retry.max_retries < 0)
        throw InvalidInput("max_retries must be >= 0");
}

std::string HttpTransport::post_json(const json& body) const {
    httplib::Client client(scheme_host_port_);
    const auto timeout = config_.retry.timeout;
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

    httplib::Headers headers;
    if (!config_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + config_.api_key);

    const std::string payload = body.dump();
    auto backoff = config_.retry.initial_backoff;
    for (int attempt = 0;; ++attempt) {
        const bool last = attempt >= config_.retry.max_retries;
        const auto started = std::chrono::steady_clock::now();
        auto res = client.Post(path_, headers, payload, "application/json");
        if (!res) {
            const auto err = res.error();
            // httplib reports a read timeout as a plain read error.
            const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                                   (err == httplib::Error::Read && std::chrono::steady_clock::now() - started >= timeout);
            if (last) {
                if (timed_out)
                    throw Timeout("request to " + config_.endpoint + " timed out");
                throw TransportError("request to " + config_.endpoint + " failed: " + httplib::to_string(err));
            }
        } else if (res->status >= 200 && res->status < 300) {
            return res->body;
        } else if (res->status >= 400 && res->status < 500) {
            throw BackendError(res->status, res->body.substr(0, 256));
        } else if (last) {
            throw BackendError(res->status, res->body.substr(0, 256));
        }
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

std::string HttpModelClient::complete(const ChatRequest& req) {
    validate(req);
    json body = to_wire_json(req, true);
    body["model"] = transport_.config().model;
    std::string raw = transport_.post_json(body);
    const json parsed = json::parse(raw, nullptr, false);
    if (parsed.is_object()) {
        auto it = parsed.find("text");
        if (it != parsed.end() && it->is_string())
            return it->get<std::string>();
    }
    return raw;
}

HttpEmbedder::HttpEmbedder(HttpBackendConfig config, std::size_t dimension)
    : transport_(std::move(config)), dim_(dimension) {
    if (dim_ == 0)
        throw InvalidInput("embedding dimension must be positive");
}

std::string HttpEmbedder::tag() const {
    return "http:" + transport_.config().model + ":dim=" + std::to_string(dim_);
}

std::vector<EmbeddingVector> HttpEmbedder::embed_uncached(const std::vector<std::string>& texts) {
    const json body = {{"model", transport_.config().model}, {"texts", texts}};
    const json parsed = json::parse(transport_.post_json(body), nullptr, false);
    if (!parsed.is_object() || !parsed.contains("embeddings") || !parsed["embeddings"].is_array())
        throw BackendFailure("embedding response lacks an 'embeddings' array");
    std::vector<EmbeddingVector> out;
    for (const auto& row : parsed["embeddings"]) {
        if (!row.is_array())
            throw BackendFailure("embedding rows must be arrays");
        EmbeddingVector v;
        for (const auto& x : row) {
            if (!x.is_number())
                throw BackendFailure("embedding values must be numbers");
            v.values.push_back(x.get<double>());
        }
        out.push_back(std::move(v));
    }
    return out;
}

} // namespace demokit
