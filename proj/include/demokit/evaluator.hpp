#pragma once

#include "demokit/act_executor.hpp"
#include "demokit/action.hpp"
#include "demokit/store.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace demokit {

struct StepJudgment {
    bool type_match = false;
    bool full_match = false; // implies type_match
    std::string reason;
};

/// Token-level F1 over lowercase whitespace tokens, as multisets.
/// 1.0 when both are empty, 0.0 when exactly one is.
double token_f1(std::string_view prediction, std::string_view gold);

/// Step match rules:
///  CLICK         Euclidean distance <= 0.14 * screen_width (inclusive)
///  TYPE          token F1 strictly greater than 0.5
///  SWIPE         same direction
///  PRESS_*       same type
///  TASK_COMPLETE same type; the answer is ignored
StepJudgment judge_step(const Action& prediction, const Action& gold, int screen_width);

struct Prediction {
    std::string task_id;
    int step_index = 0;
    Action action;

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct AccuracyCell {
    std::size_t total = 0;
    std::size_t type_matched = 0;
    std::size_t matched = 0;

    double type_accuracy() const noexcept { return total ? double(type_matched) / double(total) : 0.0; }
    double match_accuracy() const noexcept { return total ? double(matched) / double(total) : 0.0; }

    void add(const StepJudgment& j) noexcept {
        ++total;
        type_matched += j.type_match ? 1 : 0;
        matched += j.full_match ? 1 : 0;
    }
    friend bool operator==(const AccuracyCell&, const AccuracyCell&) = default;
};

struct EvalReport {
    AccuracyCell overall;
    std::map<std::string, AccuracyCell> per_app;
    std::map<Quadrant, AccuracyCell> per_quadrant;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Judges every gold step; a step without a prediction counts as a miss on
/// both metrics. Quadrant cells are filled only when combos are given.
/// Throws UnknownTask for predictions outside the gold set and
/// DuplicatePrediction when a step is predicted twice.
EvalReport evaluate_offline(const std::vector<Prediction>& predictions, const std::vector<Trajectory>& gold,
                            const std::vector<KShotCombo>* combos = nullptr);

/// {overall:{type,match}, per_app:{...}, per_quadrant:{...}, counts:{...}}
json to_json(const EvalReport& report);

/// Aligned text table: Average column first, then one column per app.
std::string render_text(const EvalReport& report);

/// Fraction of episodes that ended in TASK_COMPLETE with every predicted step
/// fully matching the gold step at the same index (and no missing steps).
double replay_success_rate(const std::vector<EpisodeResult>& results, const std::vector<Trajectory>& gold);

std::vector<Prediction> predictions_from_episodes(const std::vector<EpisodeResult>& results);

void save_predictions(const std::vector<Prediction>& predictions, const fs::path& path);
std::vector<Prediction> load_predictions(const fs::path& path);

} // namespace demokit
