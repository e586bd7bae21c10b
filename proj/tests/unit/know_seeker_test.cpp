#include "demokit/errors.hpp"
#include "demokit/know_seeker.hpp"

#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace demokit {
namespace {

using testing::TempDir;

KnowledgeEntry entry(const std::string& id, const std::string& instruction, const std::string& app = "Gmail") {
    KnowledgeEntry e;
    e.entry_id = id;
    e.instruction = instruction;
    e.app = app;
    e.source_task_id = id;
    e.actions = {"TASK_COMPLETE[]"};
    e.descriptions = {"On Home Screen, complete task, done"};
    return e;
}

EmbeddingIndex random_index(std::mt19937& rng, std::size_t n, std::size_t dim) {
    std::normal_distribution<double> g;
    EmbeddingIndex idx(dim, "synthetic");
    for (std::size_t i = 0; i < n; ++i) {
        IndexEntry e;
        e.entry_id = "e" + std::to_string(i);
        e.app = i % 3 == 0 ? "Maps" : "Gmail";
        e.vector.values.resize(dim);
        for (auto& x : e.vector.values)
            x = g(rng);
        idx.add(std::move(e));
    }
    return idx;
}

// Exhaustive scan written independently of the library: long-double cosine, full stable sort.
std::vector<std::string> brute_force(const EmbeddingIndex& idx, const std::vector<double>& q, std::size_t k,
                                     double tau) {
    std::vector<std::pair<long double, std::size_t>> scored;
    long double qn = 0;
    for (double x : q)
        qn += static_cast<long double>(x) * x;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& v = idx.entries()[i].vector.values;
        long double dot = 0, vn = 0;
        for (std::size_t d = 0; d < q.size(); ++d) {
            dot += static_cast<long double>(q[d]) * v[d];
            vn += static_cast<long double>(v[d]) * v[d];
        }
        const long double c = dot / std::sqrt(qn * vn);
        if (c >= tau)
            scored.emplace_back(c, i);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < std::min(k, scored.size()); ++i)
        ids.push_back(idx.entries()[scored[i].second].entry_id);
    return ids;
}

std::vector<std::string> ids_of(const std::vector<ScoredEntry>& r) {
    std::vector<std::string> out;
    for (const auto& s : r)
        out.push_back(s.entry_id);
    return out;
}

TEST(Cosine, Examples) {
    const std::vector<double> a{1, 2, 3};
    EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
    EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 1}, std::vector<double>{2, 2}), 1.0, 1e-12);
    EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{-3, 0}), -1.0, 1e-12);
}

TEST(Cosine, Errors) {
    EXPECT_THROW(cosine_similarity(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), DimensionMismatch);
    EXPECT_THROW(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 2}), ZeroVector);
}

TEST(Cosine, BoundedAndSymmetric) {
    std::mt19937 rng(5);
    std::normal_distribution<double> g;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> u(8), v(8);
        for (auto& x : u)
            x = g(rng);
        for (auto& x : v)
            x = g(rng);
        const double c = cosine_similarity(u, v);
        EXPECT_GE(c, -1.0);
        EXPECT_LE(c, 1.0);
        EXPECT_EQ(c, cosine_similarity(v, u));
    }
}

TEST(BuildIndex, ShapeAndOrder) {
    HashEmbedder e(32);
    const KnowledgeBase kb{entry("a", "open inbox"), entry("b", "send mail"), entry("c", "open inbox")};
    const auto idx = build_index(kb, e, 2);
    ASSERT_EQ(idx.size(), 3u);
    EXPECT_EQ(idx.dimension(), 32u);
    EXPECT_EQ(idx.backend_tag(), e.tag());
    EXPECT_EQ(idx.entries()[0].entry_id, "a");
    EXPECT_EQ(idx.entries()[2].entry_id, "c");
    EXPECT_EQ(idx.entries()[0].vector, idx.entries()[2].vector);
    EXPECT_EQ(idx.entries()[1].app, "Gmail");
}

TEST(BuildIndex, EmptyKnowledgeBase) {
    HashEmbedder e(8);
    EXPECT_THROW(build_index({}, e), EmptyKnowledgeBase);
}

TEST(BuildIndex, DuplicateIdsRejected) {
    HashEmbedder e(8);
    EXPECT_THROW(build_index({entry("a", "x"), entry("a", "y")}, e), InvalidInput);
}

TEST(Retrieve, IdentityQuery) {
    HashEmbedder e(64);
    const KnowledgeBase kb{entry("a", "open inbox"), entry("b", "book a flight to rome"), entry("c", "set alarm")};
    const auto idx = build_index(kb, e);
    RetrieveOptions opts;
    const auto r = retrieve("book a flight to rome", idx, e, opts);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].entry_id, "b");
    EXPECT_NEAR(r[0].score, 1.0, 1e-12);
}

TEST(Retrieve, MatchesBruteForceOn500) {
    std::mt19937 rng(42);
    const auto idx = random_index(rng, 500, 16);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
        EmbeddingVector q;
        q.values.resize(16);
        for (auto& x : q.values)
            x = g(rng);
        RetrieveOptions opts;
        opts.k = 3;
        EXPECT_EQ(ids_of(retrieve_by_vector(idx, q, opts)), brute_force(idx, q.values, 3, 0.0));
    }
}

TEST(Retrieve, OracleEquivalenceOverRandomIndices) {
    std::mt19937 rng(9);
    std::normal_distribution<double> g;
    std::uniform_int_distribution<std::size_t> kd(1, 12);
    std::uniform_real_distribution<double> taud(-0.5, 0.5);
    for (std::size_t n : {1u, 2u, 17u, 250u, 2000u, 10000u}) {
        const auto idx = random_index(rng, n, 8);
        for (int trial = 0; trial < 3; ++trial) {
            EmbeddingVector q;
            q.values.resize(8);
            for (auto& x : q.values)
                x = g(rng);
            RetrieveOptions opts;
            opts.k = kd(rng);
            opts.tau_s = taud(rng);
            const auto r = retrieve_by_vector(idx, q, opts);
            ASSERT_EQ(ids_of(r), brute_force(idx, q.values, opts.k, opts.tau_s)) << "n=" << n;
            ASSERT_LE(r.size(), opts.k);
            for (std::size_t i = 0; i < r.size(); ++i) {
                EXPECT_GE(r[i].score, opts.tau_s);
                if (i)
                    EXPECT_LE(r[i].score, r[i - 1].score);
            }
        }
    }
}

TEST(Retrieve, ScaleInvariance) {
    std::mt19937 rng(3);
    const auto idx = random_index(rng, 300, 12);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    for (int trial = 0; trial < 50; ++trial) {
        EmbeddingVector q;
        q.values.resize(12);
        for (auto& x : q.values)
            x = g(rng);
        EmbeddingVector scaled = q;
        const double c = scale(rng);
        for (auto& x : scaled.values)
            x *= c;
        RetrieveOptions opts;
        opts.k = 5;
        EXPECT_EQ(ids_of(retrieve_by_vector(idx, q, opts)), ids_of(retrieve_by_vector(idx, scaled, opts)));
    }
}

TEST(Retrieve, TiesBreakByIndexOrder) {
    EmbeddingIndex idx(2, "t");
    idx.add({"z", "", "A", EmbeddingVector{{1, 0}}});
    idx.add({"a", "", "A", EmbeddingVector{{2, 0}}});
    idx.add({"m", "", "A", EmbeddingVector{{0, 1}}});
    RetrieveOptions opts;
    opts.k = 3;
    EXPECT_EQ(ids_of(retrieve_by_vector(idx, EmbeddingVector{{1, 0}}, opts)),
              (std::vector<std::string>{"z", "a", "m"}));
}

TEST(Retrieve, ThresholdBoundary) {
    EmbeddingIndex idx(2, "t");
    idx.add({"a", "", "A", EmbeddingVector{{1, 0.1}}});
    idx.add({"b", "", "A", EmbeddingVector{{0, 1}}});
    RetrieveOptions opts;
    opts.tau_s = 1.0 + 1e-9;
    EXPECT_THROW(retrieve_by_vector(idx, EmbeddingVector{{1, 0}}, opts), InvalidInput);
    opts.tau_s = -1.0 - 1e-9;
    EXPECT_THROW(retrieve_by_vector(idx, EmbeddingVector{{1, 0}}, opts), InvalidInput);
    opts.tau_s = 1.0;
    EXPECT_TRUE(retrieve_by_vector(idx, EmbeddingVector{{1, 0}}, opts).empty());
    opts.k = 0;
    opts.tau_s = 0;
    EXPECT_THROW(retrieve_by_vector(idx, EmbeddingVector{{1, 0}}, opts), InvalidInput);
}

TEST(Retrieve, AppFilterAndExclusions) {
    std::mt19937 rng(8);
    const auto idx = random_index(rng, 60, 6);
    EmbeddingVector q{{1, 1, 1, 1, 1, 1}};
    RetrieveOptions opts;
    opts.k = 60;
    opts.tau_s = -1.0;
    opts.app_filter = "Maps";
    const auto maps = retrieve_by_vector(idx, q, opts);
    EXPECT_EQ(maps.size(), 20u);
    for (const auto& s : maps)
        EXPECT_EQ(std::stoi(s.entry_id.substr(1)) % 3, 0);

    opts.exclude_ids = {maps[0].entry_id};
    const auto rest = retrieve_by_vector(idx, q, opts);
    EXPECT_EQ(rest.size(), 19u);
    EXPECT_EQ(rest[0].entry_id, maps[1].entry_id);
}

TEST(Retrieve, EmbedderTagMustMatch) {
    HashEmbedder e32(32), e16(16);
    const auto idx = build_index({entry("a", "x")}, e32);
    EXPECT_THROW(retrieve("x", idx, e16, {}), DimensionMismatch);
}

TEST(Retrieve, QueryDimensionChecked) {
    EmbeddingIndex idx(2, "t");
    idx.add({"a", "", "A", EmbeddingVector{{1, 0}}});
    EXPECT_THROW(retrieve_by_vector(idx, EmbeddingVector{{1, 0, 0}}, {}), DimensionMismatch);
    EXPECT_THROW(idx.add({"b", "", "A", EmbeddingVector{{1}}}), DimensionMismatch);
}

TEST(IndexFile, RoundTrip) {
    TempDir dir;
    HashEmbedder e(16);
    const auto idx = build_index({entry("a", "open inbox"), entry("b", "send mail", "Mail")}, e);
    save_index(idx, dir / "index.jsonl");
    EXPECT_EQ(load_index(dir / "index.jsonl"), idx);
}

TEST(IndexFile, CountMismatchRejected) {
    TempDir dir;
    HashEmbedder e(4);
    save_index(build_index({entry("a", "x"), entry("b", "y")}, e), dir / "i.jsonl");
    auto lines = read_jsonl(dir / "i.jsonl");
    lines.pop_back();
    write_jsonl(dir / "i.jsonl", lines);
    EXPECT_THROW(load_index(dir / "i.jsonl"), SchemaError);
}

} // namespace
} // namespace demokit
