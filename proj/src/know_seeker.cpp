#include "demokit/know_seeker.hpp"

#include "demokit/errors.hpp"

#include <algorithm>
#include <cmath>

namespace demokit {

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw DimensionMismatch("cosine of vectors with dimensions " + std::to_string(u.size()) + " and " +
                                std::to_string(v.size()));
    double dot = 0.0;
    double uu = 0.0;
    double vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0)
        throw ZeroVector("cosine similarity of a zero vector");
    return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
    return cosine_similarity(std::span<const double>(u.values), std::span<const double>(v.values));
}

EmbeddingIndex::EmbeddingIndex(std::size_t dimension, std::string backend_tag)
    : dimension_(dimension), backend_tag_(std::move(backend_tag)) {
    if (dimension_ == 0)
        throw InvalidInput("index dimension must be positive");
}

void EmbeddingIndex::add(IndexEntry entry) {
    if (entry.vector.dimension() != dimension_)
        throw DimensionMismatch("entry '" + entry.entry_id + "' has dimension " +
                                std::to_string(entry.vector.dimension()) + ", index expects " +
                                std::to_string(dimension_));
    if (std::all_of(entry.vector.values.begin(), entry.vector.values.end(), [](double x) { return x == 0.0; }))
        throw ZeroVector("entry '" + entry.entry_id + "' has a zero vector");
    if (!ids_.insert(entry.entry_id).second)
        throw InvalidInput("duplicate entry id '" + entry.entry_id + "'");
    entries_.push_back(std::move(entry));
}

EmbeddingIndex build_index(const KnowledgeBase& kb, Embedder& embedder, std::size_t batch_size) {
    if (kb.empty())
        throw EmptyKnowledgeBase();
    if (batch_size == 0)
        throw InvalidInput("batch size must be positive");

    EmbeddingIndex index(embedder.dimension(), embedder.tag());
    for (std::size_t start = 0; start < kb.size(); start += batch_size) {
        const std::size_t end = std::min(kb.size(), start + batch_size);
        std::vector<std::string> batch;
        for (std::size_t i = start; i < end; ++i)
            batch.push_back(kb[i].instruction);
        auto vectors = embedder.embed(batch);
        for (std::size_t i = start; i < end; ++i)
            index.add({kb[i].entry_id, kb[i].instruction, kb[i].app, std::move(vectors[i - start])});
    }
    return index;
}

std::vector<ScoredEntry> retrieve_by_vector(const EmbeddingIndex& index, const EmbeddingVector& query,
                                            const RetrieveOptions& opts) {
    if (opts.k < 1)
        throw InvalidInput("k must be >= 1");
    if (!(opts.tau_s >= -1.0 && opts.tau_s <= 1.0))
        throw InvalidInput("tau_s must lie in [-1, 1]");
    if (index.empty())
        throw EmptyKnowledgeBase();
    if (query.dimension() != index.dimension())
        throw DimensionMismatch("query dimension " + std::to_string(query.dimension()) +
                                " does not match index dimension " + std::to_string(index.dimension()));

    struct Candidate {
        double score;
        std::size_t pos;
    };
    std::vector<Candidate> candidates;
    const auto& entries = index.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (opts.app_filter && e.app != *opts.app_filter)
            continue;
        if (std::find(opts.exclude_ids.begin(), opts.exclude_ids.end(), e.entry_id) != opts.exclude_ids.end())
            continue;
        const double score = cosine_similarity(query, e.vector);
        if (score >= opts.tau_s)
            candidates.push_back({score, i});
    }

    const auto better = [](const Candidate& a, const Candidate& b) {
        return a.score != b.score ? a.score > b.score : a.pos < b.pos;
    };
    const std::size_t take = std::min(opts.k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      better);

    std::vector<ScoredEntry> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        out.push_back({entries[candidates[i].pos].entry_id, candidates[i].score});
    return out;
}

std::vector<ScoredEntry> retrieve(const std::string& instruction, const EmbeddingIndex& index, Embedder& embedder,
                                  const RetrieveOptions& opts) {
    if (embedder.tag() != index.backend_tag())
        throw DimensionMismatch("index was built with '" + index.backend_tag() + "' but the embedder is '" +
                                embedder.tag() + "'");
    return retrieve_by_vector(index, embedder.embed_one(instruction), opts);
}

void save_index(const EmbeddingIndex& index, const fs::path& path) {
    std::vector<json> records;
    records.reserve(index.size() + 1);
    records.push_back({{"dimension", index.dimension()}, {"backend_tag", index.backend_tag()}, {"count", index.size()}});
    for (const auto& e : index.entries())
        records.push_back(
            {{"entry_id", e.entry_id}, {"instruction", e.instruction}, {"app", e.app}, {"vector", e.vector.values}});
    write_jsonl(path, records);
}

EmbeddingIndex load_index(const fs::path& path) {
    const auto records = read_jsonl(path);
    if (records.empty())
        throw SchemaError(1, "dimension", "index file has no header");
    const json& header = records.front();
    if (!header.contains("dimension") || !header["dimension"].is_number_unsigned())
        throw SchemaError(1, "dimension", "missing or not a positive integer");
    if (!header.contains("backend_tag") || !header["backend_tag"].is_string())
        throw SchemaError(1, "backend_tag", "missing");

    EmbeddingIndex index(header["dimension"].get<std::size_t>(), header["backend_tag"].get<std::string>());
    for (std::size_t i = 1; i < records.size(); ++i) {
        const json& r = records[i];
        const std::size_t line = i + 1;
        for (const char* field : {"entry_id", "instruction", "app"})
            if (!r.contains(field) || !r[field].is_string())
                throw SchemaError(line, field, "missing");
        if (!r.contains("vector") || !r["vector"].is_array())
            throw SchemaError(line, "vector", "missing");
        IndexEntry e{r["entry_id"].get<std::string>(), r["instruction"].get<std::string>(),
                     r["app"].get<std::string>(), {}};
        for (const auto& x : r["vector"]) {
            if (!x.is_number())
                throw SchemaError(line, "vector", "non-numeric value");
            e.vector.values.push_back(x.get<double>());
        }
        try {
            index.add(std::move(e));
        } catch (const Error& err) {
            throw SchemaError(line, "vector", err.what());
        }
    }
    if (header.contains("count") && header["count"].get<std::size_t>() != index.size())
        throw SchemaError(1, "count", "header count does not match records");
    return index;
}

} // namespace demokit
