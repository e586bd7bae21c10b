#include "demokit/store.hpp"

#include "demokit/errors.hpp"

#include <fstream>
#include <sstream>

namespace demokit {

namespace {

const json& require(const json& j, const char* field, std::size_t line) {
    auto it = j.find(field);
    if (it == j.end() || it->is_null())
        throw SchemaError(line, field, "missing");
    return *it;
}

std::string require_string(const json& j, const char* field, std::size_t line) {
    const json& v = require(j, field, line);
    if (!v.is_string())
        throw SchemaError(line, field, "expected string");
    return v.get<std::string>();
}

int require_int(const json& j, const char* field, std::size_t line) {
    const json& v = require(j, field, line);
    if (!v.is_number_integer())
        throw SchemaError(line, field, "expected integer");
    return v.get<int>();
}

double require_number(const json& j, const char* field, std::size_t line) {
    const json& v = require(j, field, line);
    if (!v.is_number())
        throw SchemaError(line, field, "expected number");
    return v.get<double>();
}

std::vector<std::string> require_string_list(const json& j, const char* field, std::size_t line) {
    const json& v = require(j, field, line);
    if (!v.is_array())
        throw SchemaError(line, field, "expected array");
    std::vector<std::string> out;
    out.reserve(v.size());
    for (const auto& item : v) {
        if (!item.is_string())
            throw SchemaError(line, field, "expected array of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

std::optional<std::string> optional_string(const json& j, const char* field, std::size_t line) {
    auto it = j.find(field);
    if (it == j.end() || it->is_null())
        return std::nullopt;
    if (!it->is_string())
        throw SchemaError(line, field, "expected string");
    return it->get<std::string>();
}

std::optional<double> optional_number(const json& j, const char* field, std::size_t line) {
    auto it = j.find(field);
    if (it == j.end() || it->is_null())
        return std::nullopt;
    if (!it->is_number())
        throw SchemaError(line, field, "expected number");
    return it->get<double>();
}

} // namespace

std::string_view to_string(Quadrant q) noexcept {
    switch (q) {
    case Quadrant::UiShActSh: return "UI_SH·Act_SH";
    case Quadrant::UiShActSl: return "UI_SH·Act_SL";
    case Quadrant::UiSlActSh: return "UI_SL·Act_SH";
    case Quadrant::UiSlActSl: return "UI_SL·Act_SL";
    }
    return "?";
}

Quadrant quadrant_from_string(std::string_view s) {
    for (Quadrant q : {Quadrant::UiShActSh, Quadrant::UiShActSl, Quadrant::UiSlActSh, Quadrant::UiSlActSl}) {
        if (s == to_string(q))
            return q;
    }
    // ASCII spelling with an underscore in place of the middle dot.
    if (s == "UI_SH_Act_SH")
        return Quadrant::UiShActSh;
    if (s == "UI_SH_Act_SL")
        return Quadrant::UiShActSl;
    if (s == "UI_SL_Act_SH")
        return Quadrant::UiSlActSh;
    if (s == "UI_SL_Act_SL")
        return Quadrant::UiSlActSl;
    throw InvalidInput("unknown quadrant label '" + std::string(s) + "'");
}

json to_json(const Step& s) {
    json j = {{"index", s.index}, {"screenshot", s.screenshot}, {"action", render_action(s.action)}};
    if (s.description)
        j["description"] = *s.description;
    if (s.ui_tree)
        j["ui_tree"] = *s.ui_tree;
    return j;
}

json to_json(const Trajectory& t) {
    json steps = json::array();
    for (const auto& s : t.steps)
        steps.push_back(to_json(s));
    json j = {{"task_id", t.task_id},
              {"app", t.app},
              {"instruction", t.instruction},
              {"steps", std::move(steps)},
              {"screen_width", t.screen_width},
              {"screen_height", t.screen_height}};
    if (t.ui_trees)
        j["ui_trees"] = *t.ui_trees;
    return j;
}

json to_json(const KnowledgeEntry& e) {
    return {{"entry_id", e.entry_id},         {"instruction", e.instruction},
            {"actions", e.actions},           {"descriptions", e.descriptions},
            {"app", e.app},                   {"source_task_id", e.source_task_id}};
}

json to_json(const SimilarityProfile& p) {
    json j = {{"instruction_sim", p.instruction_sim}};
    j["ui_sim"] = p.ui_sim ? json(*p.ui_sim) : json(nullptr);
    j["action_sim"] = p.action_sim ? json(*p.action_sim) : json(nullptr);
    j["quadrant"] = p.quadrant ? json(std::string(to_string(*p.quadrant))) : json(nullptr);
    return j;
}

json to_json(const KShotCombo& c) {
    return {{"query_task_id", c.query_task_id},
            {"support_task_ids", c.support_task_ids},
            {"k", c.k},
            {"profile", to_json(c.profile)}};
}

json to_json(const DatasetManifest& m) {
    json combos = json::object();
    for (const auto& [k, path] : m.combos)
        combos[std::to_string(k)] = path;
    json j = {{"split", m.split}, {"k", m.ks}, {"trajectories", m.trajectories}, {"combos", combos}};
    if (m.knowledge)
        j["knowledge"] = *m.knowledge;
    if (m.stats)
        j["stats"] = *m.stats;
    return j;
}

void validate(const Trajectory& t, std::size_t line, const LoadOptions& opts) {
    if (t.task_id.empty())
        throw SchemaError(line, "task_id", "empty");
    if (t.steps.empty())
        throw SchemaError(line, "steps", "trajectory has no steps");
    if (t.screen_width <= 0)
        throw SchemaError(line, "screen_width", "must be positive");
    if (t.screen_height <= 0)
        throw SchemaError(line, "screen_height", "must be positive");
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        if (t.steps[i].index != static_cast<int>(i))
            throw SchemaError(line, "steps.index", "indices must be contiguous from 0");
        if (t.steps[i].screenshot.empty())
            throw SchemaError(line, "steps.screenshot", "empty path");
    }
    if (opts.require_task_complete && action_type(t.steps.back().action) != ActionType::TaskComplete)
        throw SchemaError(line, "steps.action", "gold trajectory must end with TASK_COMPLETE");
    if (t.ui_trees && t.ui_trees->size() != t.steps.size())
        throw SchemaError(line, "ui_trees", "need one UI tree per step");
}

void validate(const KnowledgeEntry& e, std::size_t line) {
    if (e.actions.empty())
        throw SchemaError(line, "actions", "empty");
    if (e.actions.size() != e.descriptions.size())
        throw SchemaError(line, "descriptions", "length differs from actions");
    for (const auto& a : e.actions) {
        if (!try_parse_action(a))
            throw SchemaError(line, "actions", "unparseable action '" + a + "'");
    }
}

Trajectory trajectory_from_json(const json& j, std::size_t line, const fs::path& base_dir,
                                const LoadOptions& opts) {
    if (!j.is_object())
        throw SchemaError(line, "<record>", "expected object");
    Trajectory t;
    t.task_id = require_string(j, "task_id", line);
    t.app = optional_string(j, "app", line).value_or("");
    t.instruction = require_string(j, "instruction", line);
    t.screen_width = require_int(j, "screen_width", line);
    t.screen_height = require_int(j, "screen_height", line);
    t.base_dir = base_dir;

    const json& steps = require(j, "steps", line);
    if (!steps.is_array())
        throw SchemaError(line, "steps", "expected array");
    for (const auto& sj : steps) {
        if (!sj.is_object())
            throw SchemaError(line, "steps", "expected array of objects");
        Step s;
        s.index = require_int(sj, "index", line);
        s.screenshot = require_string(sj, "screenshot", line);
        const std::string raw = require_string(sj, "action", line);
        try {
            s.action = parse_action(raw);
        } catch (const MalformedAction& e) {
            throw SchemaError(line, "steps.action", e.reason() + " in '" + raw + "'");
        }
        s.description = optional_string(sj, "description", line);
        s.ui_tree = optional_string(sj, "ui_tree", line);
        t.steps.push_back(std::move(s));
    }

    if (j.contains("ui_trees") && !j["ui_trees"].is_null()) {
        t.ui_trees = require_string_list(j, "ui_trees", line);
    } else if (!t.steps.empty() && std::all_of(t.steps.begin(), t.steps.end(),
                                               [](const Step& s) { return s.ui_tree.has_value(); })) {
        std::vector<std::string> trees;
        for (const auto& s : t.steps) {
            try {
                trees.push_back(read_text_file(base_dir / *s.ui_tree));
            } catch (const IoError& e) {
                throw SchemaError(line, "steps.ui_tree", e.what());
            }
        }
        t.ui_trees = std::move(trees);
    }

    validate(t, line, opts);
    return t;
}

KnowledgeEntry knowledge_entry_from_json(const json& j, std::size_t line) {
    if (!j.is_object())
        throw SchemaError(line, "<record>", "expected object");
    KnowledgeEntry e;
    e.entry_id = require_string(j, "entry_id", line);
    e.instruction = require_string(j, "instruction", line);
    e.actions = require_string_list(j, "actions", line);
    e.descriptions = require_string_list(j, "descriptions", line);
    e.app = optional_string(j, "app", line).value_or("");
    e.source_task_id = optional_string(j, "source_task_id", line).value_or("");
    validate(e, line);
    return e;
}

KShotCombo combo_from_json(const json& j, std::size_t line) {
    if (!j.is_object())
        throw SchemaError(line, "<record>", "expected object");
    KShotCombo c;
    c.query_task_id = require_string(j, "query_task_id", line);
    c.support_task_ids = require_string_list(j, "support_task_ids", line);
    c.k = require_int(j, "k", line);
    if (c.k < 1 || c.k > 3)
        throw SchemaError(line, "k", "must be 1, 2 or 3");
    if (static_cast<int>(c.support_task_ids.size()) != c.k)
        throw SchemaError(line, "support_task_ids", "length must equal k");
    for (const auto& s : c.support_task_ids)
        if (s == c.query_task_id)
            throw SchemaError(line, "support_task_ids", "support set contains the query");

    const json& p = require(j, "profile", line);
    c.profile.instruction_sim = require_number(p, "instruction_sim", line);
    c.profile.ui_sim = optional_number(p, "ui_sim", line);
    c.profile.action_sim = optional_number(p, "action_sim", line);
    if (auto q = optional_string(p, "quadrant", line)) {
        try {
            c.profile.quadrant = quadrant_from_string(*q);
        } catch (const InvalidInput&) {
            throw SchemaError(line, "profile.quadrant", "unknown label");
        }
    }
    return c;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, std::string_view content) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw IoError("write failed for '" + path.string() + "'");
}

namespace {

// Calls fn(record, line) with the physical line number of each record.
template <typename F> void for_each_jsonl(const fs::path& path, F&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos)
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw SchemaError(lineno, "<json>", e.what());
        }
        fn(j, lineno);
    }
}

} // namespace

std::vector<json> read_jsonl(const fs::path& path) {
    std::vector<json> out;
    for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(j); });
    return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
    std::string buf;
    for (const auto& r : records) {
        buf += r.dump(-1, ' ', false, json::error_handler_t::strict);
        buf += '\n';
    }
    write_text_file(path, buf);
}


std::vector<Trajectory> load_trajectories(const fs::path& path, const LoadOptions& opts) {
    std::vector<Trajectory> out;
    const fs::path base = path.parent_path();
    for_each_jsonl(path, [&](const json& j, std::size_t line) {
        out.push_back(trajectory_from_json(j, line, base, opts));
    });
    return out;
}

void save_trajectories(const std::vector<Trajectory>& trajectories, const fs::path& path) {
    std::vector<json> records;
    records.reserve(trajectories.size());
    for (const auto& t : trajectories)
        records.push_back(to_json(t));
    write_jsonl(path, records);
}

void save_knowledge_base(const KnowledgeBase& entries, const fs::path& path) {
    std::vector<json> records;
    records.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        validate(entries[i], i + 1);
        records.push_back(to_json(entries[i]));
    }
    write_jsonl(path, records);
}

KnowledgeBase load_knowledge_base(const fs::path& path) {
    KnowledgeBase out;
    for_each_jsonl(path, [&](const json& j, std::size_t line) {
        out.push_back(knowledge_entry_from_json(j, line));
    });
    return out;
}

void save_combos(const std::vector<KShotCombo>& combos, const fs::path& path) {
    std::vector<json> records;
    records.reserve(combos.size());
    for (const auto& c : combos)
        records.push_back(to_json(c));
    write_jsonl(path, records);
}

std::vector<KShotCombo> load_combos(const fs::path& path) {
    std::vector<KShotCombo> out;
    for_each_jsonl(path, [&](const json& j, std::size_t line) { out.push_back(combo_from_json(j, line)); });
    return out;
}

void save_dataset_manifest(const DatasetManifest& m, const fs::path& path) {
    write_text_file(path, to_json(m).dump(2) + "\n");
}

DatasetManifest load_dataset_manifest(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw SchemaError(1, "<json>", e.what());
    }
    DatasetManifest m;
    m.split = require_string(j, "split", 1);
    const json& ks = require(j, "k", 1);
    if (!ks.is_array())
        throw SchemaError(1, "k", "expected array");
    for (const auto& k : ks) {
        if (!k.is_number_integer())
            throw SchemaError(1, "k", "expected integers");
        m.ks.push_back(k.get<int>());
    }
    m.trajectories = require_string(j, "trajectories", 1);
    const json& combos = require(j, "combos", 1);
    if (!combos.is_object())
        throw SchemaError(1, "combos", "expected object");
    for (const auto& [key, value] : combos.items()) {
        if (!value.is_string())
            throw SchemaError(1, "combos", "expected string paths");
        m.combos[std::stoi(key)] = value.get<std::string>();
    }
    m.knowledge = optional_string(j, "knowledge", 1);
    m.stats = optional_string(j, "stats", 1);
    return m;
}

} // namespace demokit
