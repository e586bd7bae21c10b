#pragma once

#include "demokit/action.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace demokit {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Step {
    int index = 0;
    std::string screenshot; // relative to the owning file's directory
    Action action;
    std::optional<std::string> description;
    std::optional<std::string> ui_tree; // relative path of a UI-tree dump, if the source had one

    friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
    std::string task_id;
    std::string app;
    std::string instruction;
    std::vector<Step> steps;
    int screen_width = 0;
    int screen_height = 0;
    std::optional<std::vector<std::string>> ui_trees;

    // Directory the record was loaded from; not serialized.
    fs::path base_dir;

    fs::path screenshot_path(std::size_t step) const { return base_dir / steps.at(step).screenshot; }

    friend bool operator==(const Trajectory& a, const Trajectory& b) {
        return a.task_id == b.task_id && a.app == b.app && a.instruction == b.instruction &&
               a.steps == b.steps && a.screen_width == b.screen_width &&
               a.screen_height == b.screen_height && a.ui_trees == b.ui_trees;
    }
};

struct KnowledgeEntry {
    std::string entry_id;
    std::string instruction;
    std::vector<std::string> actions; // canonical action strings
    std::vector<std::string> descriptions;
    std::string app;
    std::string source_task_id;

    friend bool operator==(const KnowledgeEntry&, const KnowledgeEntry&) = default;
};

using KnowledgeBase = std::vector<KnowledgeEntry>;

/// Joint high/low classification on (UI similarity, action similarity).
enum class Quadrant { UiShActSh, UiShActSl, UiSlActSh, UiSlActSl };

std::string_view to_string(Quadrant q) noexcept;
Quadrant quadrant_from_string(std::string_view s);

// ui_sim and action_sim are only known once UI trees and action descriptions
// are available; quadrant is set iff both are.
struct SimilarityProfile {
    double instruction_sim = 0.0;
    std::optional<double> ui_sim;
    std::optional<double> action_sim;
    std::optional<Quadrant> quadrant;

    friend bool operator==(const SimilarityProfile&, const SimilarityProfile&) = default;
};

struct KShotCombo {
    std::string query_task_id;
    std::vector<std::string> support_task_ids; // descending instruction similarity
    int k = 1;
    SimilarityProfile profile;

    friend bool operator==(const KShotCombo&, const KShotCombo&) = default;
};

struct DatasetManifest {
    std::string split;
    std::vector<int> ks;
    std::string trajectories;             // relative to the manifest directory
    std::map<int, std::string> combos;    // k -> relative path
    std::optional<std::string> knowledge; // optional knowledge base
    std::optional<std::string> stats;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct LoadOptions {
    // Gold trajectories must end in TASK_COMPLETE.
    bool require_task_complete = true;
};

// Conversions. `line` is 1-based and only used for error reporting.
json to_json(const Step& s);
json to_json(const Trajectory& t);
json to_json(const KnowledgeEntry& e);
json to_json(const SimilarityProfile& p);
json to_json(const KShotCombo& c);
json to_json(const DatasetManifest& m);

Trajectory trajectory_from_json(const json& j, std::size_t line, const fs::path& base_dir,
                                const LoadOptions& opts = {});
KnowledgeEntry knowledge_entry_from_json(const json& j, std::size_t line);
KShotCombo combo_from_json(const json& j, std::size_t line);

/// Reads every non-blank line of a JSONL file as a JSON value.
/// Throws IoError when the file cannot be opened, SchemaError(line, "<json>") on syntax errors.
std::vector<json> read_jsonl(const fs::path& path);

/// Writes one compact JSON value per line (UTF-8, sorted keys), creating parent directories.
void write_jsonl(const fs::path& path, const std::vector<json>& records);

std::vector<Trajectory> load_trajectories(const fs::path& path, const LoadOptions& opts = {});
void save_trajectories(const std::vector<Trajectory>& trajectories, const fs::path& path);

void save_knowledge_base(const KnowledgeBase& entries, const fs::path& path);
KnowledgeBase load_knowledge_base(const fs::path& path);

void save_combos(const std::vector<KShotCombo>& combos, const fs::path& path);
std::vector<KShotCombo> load_combos(const fs::path& path);

void save_dataset_manifest(const DatasetManifest& m, const fs::path& path);
DatasetManifest load_dataset_manifest(const fs::path& path);

std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, std::string_view content);

/// Validates trajectory invariants; throws SchemaError(line, field).
void validate(const Trajectory& t, std::size_t line, const LoadOptions& opts = {});
void validate(const KnowledgeEntry& e, std::size_t line);

} // namespace demokit
