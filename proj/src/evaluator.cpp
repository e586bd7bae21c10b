#include "demokit/evaluator.hpp"

#include "demokit/errors.hpp"
#include "demokit/text.hpp"

#include <cstdint>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

namespace demokit {

namespace {

std::size_t multiset_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::string, long> counts;
    for (const auto& t : a)
        ++counts[t];
    std::size_t overlap = 0;
    for (const auto& t : b) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return overlap;
}

std::vector<std::string> f1_tokens(std::string_view s) { return text::split_whitespace(text::lower(s)); }

std::string percent(double v) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(1) << v * 100.0;
    return ss.str();
}

} // namespace

double token_f1(std::string_view prediction, std::string_view gold) {
    const auto p = f1_tokens(prediction);
    const auto g = f1_tokens(gold);
    if (p.empty() && g.empty())
        return 1.0;
    if (p.empty() || g.empty())
        return 0.0;
    // 2PR/(P+R) with P = o/|p|, R = o/|g| reduces to 2o/(|p|+|g|).
    const std::size_t overlap = multiset_overlap(p, g);
    return 2.0 * double(overlap) / double(p.size() + g.size());
}

StepJudgment judge_step(const Action& prediction, const Action& gold, int screen_width) {
    if (screen_width <= 0)
        throw InvalidInput("screen_width must be positive");

    StepJudgment j;
    const ActionType pt = action_type(prediction);
    const ActionType gt = action_type(gold);
    if (pt != gt) {
        j.reason = "type mismatch: " + std::string(to_string(pt)) + " vs " + std::string(to_string(gt));
        return j;
    }
    j.type_match = true;

    switch (gt) {
    case ActionType::Click: {
        const auto& p = std::get<action::Click>(prediction);
        const auto& g = std::get<action::Click>(gold);
        const std::int64_t dx = std::int64_t(p.x) - g.x;
        const std::int64_t dy = std::int64_t(p.y) - g.y;
        // distance <= 0.14 * width  <=>  2500 * d^2 <= 49 * width^2, in exact integers.
        const std::int64_t w = screen_width;
        j.full_match = 2500 * (dx * dx + dy * dy) <= 49 * w * w;
        j.reason = j.full_match ? "click within tolerance" : "click outside tolerance";
        break;
    }
    case ActionType::Type: {
        const auto p = f1_tokens(std::get<action::Type>(prediction).text);
        const auto g = f1_tokens(std::get<action::Type>(gold).text);
        if (p.empty() || g.empty()) {
            j.full_match = p.empty() && g.empty();
        } else {
            // F1 > 0.5  <=>  4 * overlap > |p| + |g|.
            j.full_match = 4 * multiset_overlap(p, g) > p.size() + g.size();
        }
        j.reason = j.full_match ? "text F1 above 0.5" : "text F1 at or below 0.5";
        break;
    }
    case ActionType::Swipe:
        j.full_match = std::get<action::Swipe>(prediction) == std::get<action::Swipe>(gold);
        j.reason = j.full_match ? "same direction" : "different direction";
        break;
    case ActionType::TaskComplete:
        j.full_match = true;
        j.reason = "task complete (answer ignored)";
        break;
    default:
        j.full_match = true;
        j.reason = "same action";
        break;
    }
    return j;
}

EvalReport evaluate_offline(const std::vector<Prediction>& predictions, const std::vector<Trajectory>& gold,
                            const std::vector<KShotCombo>* combos) {
    std::unordered_map<std::string, std::size_t> task_pos;
    for (std::size_t i = 0; i < gold.size(); ++i)
        task_pos.emplace(gold[i].task_id, i);

    // Slot per gold step; filled by at most one prediction.
    std::vector<std::vector<const Action*>> slots(gold.size());
    for (std::size_t i = 0; i < gold.size(); ++i)
        slots[i].assign(gold[i].steps.size(), nullptr);

    for (const auto& p : predictions) {
        auto it = task_pos.find(p.task_id);
        if (it == task_pos.end())
            throw UnknownTask("prediction for unknown task '" + p.task_id + "'");
        auto& row = slots[it->second];
        if (p.step_index < 0 || static_cast<std::size_t>(p.step_index) >= row.size())
            throw UnknownTask("prediction for task '" + p.task_id + "' references missing step " +
                              std::to_string(p.step_index));
        if (row[p.step_index] != nullptr)
            throw DuplicatePrediction("step " + std::to_string(p.step_index) + " of task '" + p.task_id +
                                      "' predicted twice");
        row[p.step_index] = &p.action;
    }

    std::unordered_map<std::string, Quadrant> quadrant_of;
    if (combos) {
        for (const auto& c : *combos)
            if (c.profile.quadrant)
                quadrant_of.try_emplace(c.query_task_id, *c.profile.quadrant);
    }

    EvalReport report;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const Trajectory& t = gold[i];
        auto& app_cell = report.per_app[t.app];
        const auto q = quadrant_of.find(t.task_id);
        for (std::size_t s = 0; s < t.steps.size(); ++s) {
            StepJudgment j;
            if (const Action* pred = slots[i][s])
                j = judge_step(*pred, t.steps[s].action, t.screen_width);
            else
                j.reason = "missing prediction";
            report.overall.add(j);
            app_cell.add(j);
            if (q != quadrant_of.end())
                report.per_quadrant[q->second].add(j);
        }
    }
    return report;
}

json to_json(const EvalReport& report) {
    auto pair = [](const AccuracyCell& c) { return json{{"type", c.type_accuracy()}, {"match", c.match_accuracy()}}; };
    auto counts = [](const AccuracyCell& c) {
        return json{{"total", c.total}, {"type_matched", c.type_matched}, {"matched", c.matched}};
    };
    json per_app = json::object(), per_quadrant = json::object();
    json app_counts = json::object(), quadrant_counts = json::object();
    for (const auto& [app, cell] : report.per_app) {
        per_app[app] = pair(cell);
        app_counts[app] = counts(cell);
    }
    for (const auto& [q, cell] : report.per_quadrant) {
        per_quadrant[std::string(to_string(q))] = pair(cell);
        quadrant_counts[std::string(to_string(q))] = counts(cell);
    }
    return {{"overall", pair(report.overall)},
            {"per_app", per_app},
            {"per_quadrant", per_quadrant},
            {"counts", {{"overall", counts(report.overall)}, {"per_app", app_counts}, {"per_quadrant", quadrant_counts}}}};
}

std::string render_text(const EvalReport& report) {
    std::vector<std::string> header{"Metric", "Average"};
    std::vector<std::string> type_row{"Type acc %", percent(report.overall.type_accuracy())};
    std::vector<std::string> match_row{"Match acc %", percent(report.overall.match_accuracy())};
    std::vector<std::string> steps_row{"Steps", std::to_string(report.overall.total)};
    for (const auto& [app, cell] : report.per_app) {
        header.push_back(app.empty() ? "(no app)" : app);
        type_row.push_back(percent(cell.type_accuracy()));
        match_row.push_back(percent(cell.match_accuracy()));
        steps_row.push_back(std::to_string(cell.total));
    }

    std::string out = text::format_table({header, type_row, match_row, steps_row});
    if (!report.per_quadrant.empty()) {
        std::vector<std::vector<std::string>> rows{{"Quadrant", "Type acc %", "Match acc %", "Steps"}};
        for (const auto& [q, cell] : report.per_quadrant)
            rows.push_back({std::string(to_string(q)), percent(cell.type_accuracy()), percent(cell.match_accuracy()),
                            std::to_string(cell.total)});
        out += '\n' + text::format_table(rows);
    }
    return out;
}

double replay_success_rate(const std::vector<EpisodeResult>& results, const std::vector<Trajectory>& gold) {
    if (results.empty())
        throw InvalidInput("no episode results");
    if (results.size() != gold.size())
        throw InvalidInput("got " + std::to_string(results.size()) + " episode results for " +
                           std::to_string(gold.size()) + " gold tasks");
    std::unordered_map<std::string, const Trajectory*> by_id;
    for (const auto& t : gold)
        by_id.emplace(t.task_id, &t);

    std::set<std::string> seen;
    std::size_t successes = 0;
    for (const auto& r : results) {
        auto it = by_id.find(r.predicted.task_id);
        if (it == by_id.end())
            throw UnknownTask("episode for unknown task '" + r.predicted.task_id + "'");
        if (!seen.insert(r.predicted.task_id).second)
            throw DuplicatePrediction("two episodes for task '" + r.predicted.task_id + "'");
        const Trajectory& g = *it->second;
        if (r.terminated_by != Termination::TaskComplete || r.predicted.steps.size() != g.steps.size())
            continue;
        bool ok = true;
        for (std::size_t s = 0; s < g.steps.size() && ok; ++s)
            ok = judge_step(r.predicted.steps[s].action, g.steps[s].action, g.screen_width).full_match;
        successes += ok ? 1 : 0;
    }
    return double(successes) / double(results.size());
}

std::vector<Prediction> predictions_from_episodes(const std::vector<EpisodeResult>& results) {
    std::vector<Prediction> out;
    for (const auto& r : results)
        for (const auto& s : r.predicted.steps)
            out.push_back({r.predicted.task_id, s.index, s.action});
    return out;
}

void save_predictions(const std::vector<Prediction>& predictions, const fs::path& path) {
    std::vector<json> records;
    records.reserve(predictions.size());
    for (const auto& p : predictions)
        records.push_back({{"task_id", p.task_id}, {"step_index", p.step_index}, {"action", render_action(p.action)}});
    write_jsonl(path, records);
}

std::vector<Prediction> load_predictions(const fs::path& path) {
    const auto records = read_jsonl(path);
    std::vector<Prediction> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const json& r = records[i];
        const std::size_t line = i + 1;
        if (!r.is_object() || !r.contains("task_id") || !r["task_id"].is_string())
            throw SchemaError(line, "task_id", "missing");
        if (!r.contains("step_index") || !r["step_index"].is_number_integer())
            throw SchemaError(line, "step_index", "missing");
        if (!r.contains("action") || !r["action"].is_string())
            throw SchemaError(line, "action", "missing");
        Prediction p;
        p.task_id = r["task_id"].get<std::string>();
        p.step_index = r["step_index"].get<int>();
        const auto parsed = try_parse_action(r["action"].get<std::string>());
        if (!parsed)
            throw SchemaError(line, "action", "unparseable action '" + r["action"].get<std::string>() + "'");
        p.action = *parsed;
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace demokit
