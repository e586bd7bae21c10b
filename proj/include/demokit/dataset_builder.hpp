#pragma once

#include "demokit/model_client.hpp"
#include "demokit/prompts.hpp"
#include "demokit/store.hpp"

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace demokit {

// ---- standardization ----

struct StandardizeReport {
    std::size_t tasks_in = 0;
    std::size_t tasks_kept = 0;
    std::size_t actions_upgraded = 0;
    std::vector<std::string> excluded_task_ids; // tasks that contained a dropped action

    friend bool operator==(const StandardizeReport&, const StandardizeReport&) = default;
};

struct StandardizeResult {
    std::vector<json> records; // trajectory records with canonical action strings
    StandardizeReport report;
};

/// Rewrites every step's action through normalize_legacy and drops tasks
/// that contain a TASK_IMPOSSIBLE step. Idempotent.
/// Throws SchemaError on records that are not trajectory-shaped or whose
/// actions do not parse.
StandardizeResult standardize(const std::vector<json>& raw);

json to_json(const StandardizeReport& r);

// ---- app recovery ----

struct AppClassifier {
    ModelClient* client = nullptr;
    std::vector<std::string> apps; // allowed labels
    PromptSet prompts = PromptSet::builtin();
};

/// Manifest label first, then the trajectory's own app field, then the
/// classifier (instruction plus first screenshot). A classifier answer must
/// name one of `apps` (case-insensitive); the list's spelling is returned.
/// Throws UnknownApp when nothing yields a label.
std::string recover_app(const Trajectory& t, const std::map<std::string, std::string>& labels,
                        const AppClassifier* classifier = nullptr);

// ---- instruction similarity and k-shot combos ----

double instruction_similarity(const std::string& a, const std::string& b, Embedder& embedder);

/// Dense symmetric matrix over `task_ids`, in the order given.
struct SimilarityMatrix {
    std::vector<std::string> task_ids;
    std::vector<double> values; // row-major, n x n

    std::size_t size() const noexcept { return task_ids.size(); }
    double at(std::size_t i, std::size_t j) const { return values.at(i * task_ids.size() + j); }
    std::size_t position(const std::string& task_id) const;

    friend bool operator==(const SimilarityMatrix&, const SimilarityMatrix&) = default;
};

/// All-pairs instruction similarity. The diagonal is 1.
SimilarityMatrix instruction_similarity_matrix(const std::vector<Trajectory>& tasks, Embedder& embedder,
                                               std::size_t workers = 1);

json to_json(const SimilarityMatrix& m);
SimilarityMatrix similarity_matrix_from_json(const json& j);

struct KShotResult {
    std::vector<KShotCombo> combos;         // query order follows `tasks`
    std::vector<std::string> dropped_queries; // no candidates, too few, or under the floor
};

/// For each query, the other tasks of the same app ranked by similarity
/// descending (ties by task_id); the top k form the support set when their
/// mean similarity is >= min_avg_sim. Every task needs a non-empty app.
KShotResult build_kshot(const std::vector<Trajectory>& tasks, int k, const SimilarityMatrix& sims,
                        double min_avg_sim = 0.6);

// ---- UI similarity ----

/// UI-tree tokens: maximal runs of ASCII alphanumerics, lowercased.
std::vector<std::string> ui_tokens(std::string_view text);

/// TF-IDF fitted over a fixed corpus.
///   tf  = raw count in the document
///   idf = ln((1 + N) / (1 + df)) + 1
class TfidfModel {
  public:
    explicit TfidfModel(const std::vector<std::string>& documents);

    std::size_t document_count() const noexcept { return n_docs_; }
    double idf(const std::string& token) const;
    std::map<std::string, double> vectorize(std::string_view document) const;

    /// Cosine of the two TF-IDF vectors, in [0, 1]. Two empty documents score 1,
    /// one empty document scores 0.
    double similarity(std::string_view a, std::string_view b) const;

  private:
    std::size_t n_docs_ = 0;
    std::unordered_map<std::string, std::size_t> df_;
};

/// The task's per-step UI trees merged into one document. Throws MissingUiTrees.
std::string ui_document(const Trajectory& t);

/// Fits a model over the UI documents of `corpus`. Throws MissingUiTrees.
TfidfModel fit_ui_model(const std::vector<Trajectory>& corpus);

double ui_similarity(const Trajectory& a, const Trajectory& b, const TfidfModel& model);

// ---- action similarity and quadrants ----

/// Cosine of the embeddings of each entry's newline-joined descriptions.
double action_similarity(const KnowledgeEntry& a, const KnowledgeEntry& b, Embedder& embedder);

struct QuadrantThresholds {
    double ui = 0.9447;
    double action = 0.9015;
};

/// SH on an axis iff value >= threshold.
Quadrant classify_profile(double ui_sim, double act_sim, const QuadrantThresholds& thresholds = {});

/// Fills ui_sim when every task of the combo has UI trees and action_sim when
/// every task has a knowledge entry (looked up by source_task_id); each is the
/// mean over the supports. Sets the quadrant when both are present.
void attach_profiles(std::vector<KShotCombo>& combos, const std::vector<Trajectory>& tasks,
                     const KnowledgeBase* knowledge, Embedder& embedder, const QuadrantThresholds& thresholds = {});

// ---- statistics ----

struct StatsTable {
    std::size_t tasks = 0;
    std::size_t apps = 0;
    std::size_t steps = 0;
    std::size_t combos = 0;
    double mean_instruction_sim = 0.0;
    std::optional<double> mean_ui_sim;     // over combos that carry one
    std::optional<double> mean_action_sim; // likewise
    std::map<Quadrant, std::size_t> quadrant_counts;

    friend bool operator==(const StatsTable&, const StatsTable&) = default;
};

StatsTable split_stats(const std::vector<KShotCombo>& combos, const std::vector<Trajectory>& trajectories);

json to_json(const StatsTable& s);
std::string render_text(const StatsTable& s);

} // namespace demokit
