#pragma once

#include "demokit/model_client.hpp"
#include "demokit/store.hpp"

#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace demokit {

/// (u . v) / (|u| |v|), clamped to [-1, 1].
/// Throws DimensionMismatch or ZeroVector.
double cosine_similarity(std::span<const double> u, std::span<const double> v);
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

struct IndexEntry {
    std::string entry_id;
    std::string instruction;
    std::string app;
    EmbeddingVector vector;

    friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

/// Instruction embeddings for a knowledge base, in knowledge-base order.
class EmbeddingIndex {
  public:
    EmbeddingIndex(std::size_t dimension, std::string backend_tag);

    /// Throws DimensionMismatch on a wrong-sized vector, InvalidInput on a duplicate id.
    void add(IndexEntry entry);

    std::size_t dimension() const noexcept { return dimension_; }
    const std::string& backend_tag() const noexcept { return backend_tag_; }
    const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    friend bool operator==(const EmbeddingIndex&, const EmbeddingIndex&) = default;

  private:
    std::size_t dimension_;
    std::string backend_tag_;
    std::vector<IndexEntry> entries_;
    std::unordered_set<std::string> ids_;
};

struct ScoredEntry {
    std::string entry_id;
    double score = 0.0;
    friend bool operator==(const ScoredEntry&, const ScoredEntry&) = default;
};

struct RetrieveOptions {
    std::size_t k = 1;
    double tau_s = 0.0;
    std::optional<std::string> app_filter;
    // Entries whose id is listed here are skipped (e.g. the query's own demonstration).
    std::vector<std::string> exclude_ids;
};

/// Embeds every entry's instruction in batches. Throws EmptyKnowledgeBase.
EmbeddingIndex build_index(const KnowledgeBase& kb, Embedder& embedder, std::size_t batch_size = 64);

/// Exact top-k over the index by cosine score: entries scoring >= tau_s,
/// descending, ties in index order, at most k.
std::vector<ScoredEntry> retrieve_by_vector(const EmbeddingIndex& index, const EmbeddingVector& query,
                                            const RetrieveOptions& opts);

/// Embeds the instruction and retrieves. Throws DimensionMismatch when the
/// embedder's tag differs from the index's backend_tag.
std::vector<ScoredEntry> retrieve(const std::string& instruction, const EmbeddingIndex& index,
                                  Embedder& embedder, const RetrieveOptions& opts);

/// Sidecar JSONL: a header {"dimension", "backend_tag", "count"} followed by
/// one {"entry_id", "instruction", "app", "vector"} record per entry.
void save_index(const EmbeddingIndex& index, const fs::path& path);
EmbeddingIndex load_index(const fs::path& path);

} // namespace demokit
