#include "demokit/dataset_builder.hpp"

#include "demokit/errors.hpp"
#include "demokit/know_seeker.hpp"
#include "demokit/parallel.hpp"
#include "demokit/text.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace demokit {

// ---- standardization ----

StandardizeResult standardize(const std::vector<json>& raw) {
    StandardizeResult out;
    out.report.tasks_in = raw.size();
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const std::size_t line = i + 1;
        const json& rec = raw[i];
        if (!rec.is_object())
            throw SchemaError(line, "<record>", "expected object");
        if (!rec.contains("task_id") || !rec["task_id"].is_string())
            throw SchemaError(line, "task_id", "missing or not a string");
        if (!rec.contains("steps") || !rec["steps"].is_array())
            throw SchemaError(line, "steps", "missing or not an array");

        json copy = rec;
        bool dropped = false;
        std::size_t upgrades = 0;
        for (auto& step : copy["steps"]) {
            if (!step.is_object() || !step.contains("action") || !step["action"].is_string())
                throw SchemaError(line, "steps.action", "missing or not a string");
            const std::string action = step["action"].get<std::string>();
            LegacyAction norm;
            try {
                norm = normalize_legacy(action);
            } catch (const MalformedAction& e) {
                throw SchemaError(line, "steps.action", e.reason() + " in '" + action + "'");
            }
            if (norm.kind == LegacyAction::Kind::Drop) {
                dropped = true;
                break;
            }
            if (norm.kind == LegacyAction::Kind::Upgrade)
                ++upgrades;
            step["action"] = render_action(*norm.action);
        }
        if (dropped) {
            out.report.excluded_task_ids.push_back(rec["task_id"].get<std::string>());
            continue;
        }
        out.report.actions_upgraded += upgrades;
        out.records.push_back(std::move(copy));
    }
    out.report.tasks_kept = out.records.size();
    return out;
}

json to_json(const StandardizeReport& r) {
    return {{"tasks_in", r.tasks_in},
            {"tasks_kept", r.tasks_kept},
            {"tasks_excluded", r.excluded_task_ids.size()},
            {"excluded_task_ids", r.excluded_task_ids},
            {"actions_upgraded", r.actions_upgraded}};
}

// ---- app recovery ----

std::string recover_app(const Trajectory& t, const std::map<std::string, std::string>& labels,
                        const AppClassifier* classifier) {
    if (auto it = labels.find(t.task_id); it != labels.end() && !it->second.empty())
        return it->second;
    if (!t.app.empty())
        return t.app;
    if (classifier == nullptr || classifier->client == nullptr || classifier->apps.empty())
        throw UnknownApp("task '" + t.task_id + "' has no app label and no classifier is configured");

    std::string list;
    for (const auto& a : classifier->apps)
        list += a + '\n';
    const std::array<std::pair<std::string_view, std::string>, 1> sys{{{"apps", list}}};
    const std::array<std::pair<std::string_view, std::string>, 1> usr{{{"instruction", t.instruction}}};

    ChatRequest req;
    req.system_prompt = text::substitute(classifier->prompts.app_classifier_system, sys);
    req.user_parts.push_back(TextPart{text::substitute(classifier->prompts.app_classifier_user, usr)});
    if (!t.steps.empty())
        req.user_parts.push_back(image_file(t.screenshot_path(0)));
    req.max_output_tokens = 64;

    std::string_view reply = text::trim(classifier->client->complete(req));
    if (reply.size() >= 2 && reply.front() == '"' && reply.back() == '"')
        reply = text::trim(reply.substr(1, reply.size() - 2));
    while (!reply.empty() && reply.back() == '.')
        reply.remove_suffix(1);
    for (const auto& a : classifier->apps)
        if (text::iequals(a, reply))
            return a;
    throw UnknownApp("classifier answered '" + std::string(reply) + "' for task '" + t.task_id +
                     "', which is not a configured app");
}

// ---- instruction similarity ----

double instruction_similarity(const std::string& a, const std::string& b, Embedder& embedder) {
    const auto v = embedder.embed({a, b});
    return cosine_similarity(v[0], v[1]);
}

std::size_t SimilarityMatrix::position(const std::string& task_id) const {
    auto it = std::find(task_ids.begin(), task_ids.end(), task_id);
    if (it == task_ids.end())
        throw UnknownTask("task '" + task_id + "' is not in the similarity matrix");
    return static_cast<std::size_t>(it - task_ids.begin());
}

SimilarityMatrix instruction_similarity_matrix(const std::vector<Trajectory>& tasks, Embedder& embedder,
                                               std::size_t workers) {
    SimilarityMatrix m;
    const std::size_t n = tasks.size();
    m.values.assign(n * n, 0.0);
    if (n == 0)
        return m;
    std::vector<std::string> instructions;
    for (const auto& t : tasks) {
        m.task_ids.push_back(t.task_id);
        instructions.push_back(t.instruction);
    }
    const auto vectors = embedder.embed(instructions);
    parallel_for(n, workers, [&](std::size_t i) {
        m.values[i * n + i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = cosine_similarity(vectors[i], vectors[j]);
            m.values[i * n + j] = s;
            m.values[j * n + i] = s;
        }
    });
    return m;
}

json to_json(const SimilarityMatrix& m) { return {{"task_ids", m.task_ids}, {"values", m.values}}; }

SimilarityMatrix similarity_matrix_from_json(const json& j) {
    SimilarityMatrix m;
    try {
        m.task_ids = j.at("task_ids").get<std::vector<std::string>>();
        m.values = j.at("values").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw SchemaError(1, "similarity_matrix", e.what());
    }
    if (m.values.size() != m.task_ids.size() * m.task_ids.size())
        throw SchemaError(1, "values", "expected a square matrix");
    return m;
}

KShotResult build_kshot(const std::vector<Trajectory>& tasks, int k, const SimilarityMatrix& sims,
                        double min_avg_sim) {
    if (k < 1 || k > 3)
        throw InvalidInput("k must be 1, 2 or 3");

    std::vector<std::size_t> pos(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (tasks[i].app.empty())
            throw InvalidInput("task '" + tasks[i].task_id + "' has no app label");
        pos[i] = sims.position(tasks[i].task_id);
    }

    KShotResult out;
    for (std::size_t q = 0; q < tasks.size(); ++q) {
        std::vector<std::pair<double, std::size_t>> candidates;
        for (std::size_t c = 0; c < tasks.size(); ++c)
            if (c != q && tasks[c].app == tasks[q].app)
                candidates.emplace_back(sims.at(pos[q], pos[c]), c);
        if (candidates.size() < static_cast<std::size_t>(k)) {
            out.dropped_queries.push_back(tasks[q].task_id);
            continue;
        }
        std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(),
                          [&](const auto& a, const auto& b) {
                              if (a.first != b.first)
                                  return a.first > b.first;
                              return tasks[a.second].task_id < tasks[b.second].task_id;
                          });

        KShotCombo combo;
        combo.query_task_id = tasks[q].task_id;
        combo.k = k;
        double sum = 0.0;
        for (int s = 0; s < k; ++s) {
            combo.support_task_ids.push_back(tasks[candidates[s].second].task_id);
            sum += candidates[s].first;
        }
        combo.profile.instruction_sim = sum / k;
        if (combo.profile.instruction_sim >= min_avg_sim)
            out.combos.push_back(std::move(combo));
        else
            out.dropped_queries.push_back(tasks[q].task_id);
    }
    return out;
}

// ---- UI similarity ----

std::vector<std::string> ui_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += text::to_lower(c);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty())
        out.push_back(std::move(cur));
    return out;
}

TfidfModel::TfidfModel(const std::vector<std::string>& documents) : n_docs_(documents.size()) {
    for (const auto& doc : documents) {
        const auto tokens = ui_tokens(doc);
        for (const auto& t : std::set<std::string>(tokens.begin(), tokens.end()))
            ++df_[t];
    }
}

double TfidfModel::idf(const std::string& token) const {
    auto it = df_.find(token);
    const double df = it == df_.end() ? 0.0 : double(it->second);
    return std::log((1.0 + double(n_docs_)) / (1.0 + df)) + 1.0;
}

std::map<std::string, double> TfidfModel::vectorize(std::string_view document) const {
    std::map<std::string, double> v;
    for (auto& t : ui_tokens(document))
        v[std::move(t)] += 1.0;
    for (auto& [token, weight] : v)
        weight *= idf(token);
    return v;
}

double TfidfModel::similarity(std::string_view a, std::string_view b) const {
    const auto va = vectorize(a);
    const auto vb = vectorize(b);
    if (va.empty() || vb.empty())
        return va.empty() && vb.empty() ? 1.0 : 0.0;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [t, w] : va) {
        na += w * w;
        if (auto it = vb.find(t); it != vb.end())
            dot += w * it->second;
    }
    for (const auto& [t, w] : vb)
        nb += w * w;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

std::string ui_document(const Trajectory& t) {
    if (!t.ui_trees)
        throw MissingUiTrees("task '" + t.task_id + "' has no UI trees");
    std::string doc;
    for (const auto& tree : *t.ui_trees) {
        doc += tree;
        doc += '\n';
    }
    return doc;
}

TfidfModel fit_ui_model(const std::vector<Trajectory>& corpus) {
    std::vector<std::string> docs;
    docs.reserve(corpus.size());
    for (const auto& t : corpus)
        docs.push_back(ui_document(t));
    return TfidfModel(docs);
}

double ui_similarity(const Trajectory& a, const Trajectory& b, const TfidfModel& model) {
    return model.similarity(ui_document(a), ui_document(b));
}

// ---- action similarity and quadrants ----

namespace {

std::string joined_descriptions(const KnowledgeEntry& e) {
    if (e.descriptions.empty())
        throw InvalidInput("knowledge entry '" + e.entry_id + "' has no descriptions");
    std::string out;
    for (std::size_t i = 0; i < e.descriptions.size(); ++i) {
        if (i)
            out += '\n';
        out += e.descriptions[i];
    }
    return out;
}

} // namespace

double action_similarity(const KnowledgeEntry& a, const KnowledgeEntry& b, Embedder& embedder) {
    const auto v = embedder.embed({joined_descriptions(a), joined_descriptions(b)});
    return cosine_similarity(v[0], v[1]);
}

Quadrant classify_profile(double ui_sim, double act_sim, const QuadrantThresholds& th) {
    const bool ui_high = ui_sim >= th.ui;
    const bool act_high = act_sim >= th.action;
    if (ui_high)
        return act_high ? Quadrant::UiShActSh : Quadrant::UiShActSl;
    return act_high ? Quadrant::UiSlActSh : Quadrant::UiSlActSl;
}

void attach_profiles(std::vector<KShotCombo>& combos, const std::vector<Trajectory>& tasks,
                     const KnowledgeBase* knowledge, Embedder& embedder, const QuadrantThresholds& thresholds) {
    std::map<std::string, const Trajectory*> by_task;
    for (const auto& t : tasks)
        by_task.emplace(t.task_id, &t);
    std::map<std::string, const KnowledgeEntry*> entry_of;
    if (knowledge)
        for (const auto& e : *knowledge)
            entry_of.emplace(e.source_task_id, &e);

    const bool all_trees = !tasks.empty() && std::all_of(tasks.begin(), tasks.end(),
                                                         [](const Trajectory& t) { return t.ui_trees.has_value(); });
    std::optional<TfidfModel> model;
    if (all_trees)
        model.emplace(fit_ui_model(tasks));

    auto find_task = [&](const std::string& id) -> const Trajectory& {
        auto it = by_task.find(id);
        if (it == by_task.end())
            throw UnknownTask("combo references unknown task '" + id + "'");
        return *it->second;
    };

    for (auto& c : combos) {
        const Trajectory& query = find_task(c.query_task_id);
        std::vector<const Trajectory*> supports;
        for (const auto& id : c.support_task_ids)
            supports.push_back(&find_task(id));

        if (model) {
            double sum = 0.0;
            for (const auto* s : supports)
                sum += ui_similarity(query, *s, *model);
            c.profile.ui_sim = sum / double(supports.size());
        }

        auto q_entry = entry_of.find(c.query_task_id);
        const bool have_entries =
            q_entry != entry_of.end() && std::all_of(c.support_task_ids.begin(), c.support_task_ids.end(),
                                                      [&](const std::string& id) { return entry_of.contains(id); });
        if (have_entries) {
            double sum = 0.0;
            for (const auto& id : c.support_task_ids)
                sum += action_similarity(*q_entry->second, *entry_of.at(id), embedder);
            c.profile.action_sim = sum / double(c.support_task_ids.size());
        }

        c.profile.quadrant.reset();
        if (c.profile.ui_sim && c.profile.action_sim)
            c.profile.quadrant = classify_profile(*c.profile.ui_sim, *c.profile.action_sim, thresholds);
    }
}

// ---- statistics ----

StatsTable split_stats(const std::vector<KShotCombo>& combos, const std::vector<Trajectory>& trajectories) {
    StatsTable s;
    for (Quadrant q : {Quadrant::UiShActSh, Quadrant::UiShActSl, Quadrant::UiSlActSh, Quadrant::UiSlActSl})
        s.quadrant_counts[q] = 0;

    std::set<std::string> apps;
    for (const auto& t : trajectories) {
        apps.insert(t.app);
        s.steps += t.steps.size();
    }
    s.tasks = trajectories.size();
    s.apps = apps.size();
    s.combos = combos.size();

    double ins = 0.0, ui = 0.0, act = 0.0;
    std::size_t n_ui = 0, n_act = 0;
    for (const auto& c : combos) {
        ins += c.profile.instruction_sim;
        if (c.profile.ui_sim) {
            ui += *c.profile.ui_sim;
            ++n_ui;
        }
        if (c.profile.action_sim) {
            act += *c.profile.action_sim;
            ++n_act;
        }
        if (c.profile.quadrant)
            ++s.quadrant_counts[*c.profile.quadrant];
    }
    if (!combos.empty())
        s.mean_instruction_sim = ins / double(combos.size());
    if (n_ui)
        s.mean_ui_sim = ui / double(n_ui);
    if (n_act)
        s.mean_action_sim = act / double(n_act);
    return s;
}

json to_json(const StatsTable& s) {
    json quadrants = json::object();
    for (const auto& [q, n] : s.quadrant_counts)
        quadrants[std::string(to_string(q))] = n;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"tasks", s.tasks},
            {"apps", s.apps},
            {"steps", s.steps},
            {"combos", s.combos},
            {"mean_instruction_sim", s.mean_instruction_sim},
            {"mean_ui_sim", opt(s.mean_ui_sim)},
            {"mean_action_sim", opt(s.mean_action_sim)},
            {"quadrant_counts", quadrants}};
}

std::string render_text(const StatsTable& s) {
    auto fixed4 = [](std::optional<double> v) {
        if (!v)
            return std::string("-");
        std::ostringstream ss;
        ss << std::fixed << std::setprecision(4) << *v;
        return ss.str();
    };
    std::vector<std::vector<std::string>> rows{
        {"Tasks", std::to_string(s.tasks)},
        {"Apps", std::to_string(s.apps)},
        {"Step actions", std::to_string(s.steps)},
        {"Combos", std::to_string(s.combos)},
        {"Ins sim", fixed4(s.mean_instruction_sim)},
        {"UI sim", fixed4(s.mean_ui_sim)},
        {"Act sim", fixed4(s.mean_action_sim)},
    };
    for (const auto& [q, n] : s.quadrant_counts)
        rows.push_back({std::string(to_string(q)), std::to_string(n)});
    return text::format_table(rows);
}

} // namespace demokit
