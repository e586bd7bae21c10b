#include "cli.hpp"

#include "config.hpp"

#include "demokit/act_executor.hpp"
#include "demokit/dataset_builder.hpp"
#include "demokit/demo_parser.hpp"
#include "demokit/errors.hpp"
#include "demokit/evaluator.hpp"
#include "demokit/hashing.hpp"
#include "demokit/know_seeker.hpp"
#include "demokit/model_client.hpp"
#include "demokit/parallel.hpp"
#include "demokit/store.hpp"
#include "demokit/text.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

namespace demokit::cli {

namespace {

// ---- run directory ----

class RunDir {
  public:
    explicit RunDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_ / "outputs"); }

    const fs::path& root() const noexcept { return root_; }
    fs::path output(const std::string& name) {
        outputs_.insert("outputs/" + name);
        return root_ / "outputs" / name;
    }
    fs::path top(const std::string& name) {
        outputs_.insert(name);
        return root_ / name;
    }

    void record_input(const std::string& role, const fs::path& path) {
        inputs_[role] = {{"path", path.generic_string()}, {"sha256", sha256_hex(read_text_file(path))}};
    }

    // Timestamps live here only, so everything else is byte-stable across reruns.
    void log(const std::string& line) {
        std::ofstream out(root_ / "run.log", std::ios::app);
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&now, &tm);
        out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << line << '\n';
    }

    void finish(const std::vector<std::string>& argv, const std::string& subcommand, const Config& config) {
        const std::string snapshot = config.snapshot();
        write_text_file(root_ / "config.snapshot", snapshot);
        json manifest = {{"command", argv},
                         {"subcommand", subcommand},
                         {"config_sha256", sha256_hex(snapshot)},
                         {"inputs", inputs_},
                         {"outputs", std::vector<std::string>(outputs_.begin(), outputs_.end())}};
        write_text_file(root_ / "manifest.json", manifest.dump(2) + "\n");
    }

  private:
    fs::path root_;
    json inputs_ = json::object();
    std::set<std::string> outputs_;
};

// ---- backends ----

RetryPolicy retry_policy(const Config& c) {
    RetryPolicy r;
    r.max_retries = c.get_int("model.max_retries");
    r.timeout = std::chrono::milliseconds(c.get_int("model.timeout_ms"));
    return r;
}

std::string api_key() {
    const char* key = std::getenv(kApiKeyEnv);
    return key ? key : "";
}

std::unique_ptr<Embedder> make_embedder(const Config& c) {
    const std::string& backend = c.get("embed.backend");
    const std::string dim_text = c.get_or_env("embed.dim", kEmbedDimEnv);
    int dim = 64;
    if (!dim_text.empty()) {
        std::size_t used = 0;
        try {
            dim = std::stoi(dim_text, &used);
        } catch (const std::exception&) {
        }
        if (used != dim_text.size())
            throw InvalidInput("embed.dim needs an integer, got '" + dim_text + "'");
    }
    if (dim <= 0)
        throw InvalidInput("embed.dim must be positive");
    if (backend == "hash")
        return std::make_unique<HashEmbedder>(static_cast<std::size_t>(dim));
    if (backend == "http") {
        HttpBackendConfig cfg{c.get_or_env("embed.endpoint", kEmbedEndpointEnv),
                              c.get_or_env("embed.model", kEmbedModelEnv), api_key(), retry_policy(c)};
        if (cfg.endpoint.empty())
            throw InvalidInput("embed.backend = http needs embed.endpoint or " + std::string(kEmbedEndpointEnv));
        return std::make_unique<HttpEmbedder>(std::move(cfg), static_cast<std::size_t>(dim));
    }
    throw InvalidInput("embed.backend must be 'hash' or 'http', got '" + backend + "'");
}

std::unique_ptr<ModelClient> make_http_client(const Config& c) {
    HttpBackendConfig cfg{c.get_or_env("model.endpoint", kModelEndpointEnv),
                          c.get_or_env("model.model", kModelNameEnv), api_key(), retry_policy(c)};
    if (cfg.endpoint.empty())
        throw InvalidInput("no model backend: set model.endpoint, " + std::string(kModelEndpointEnv) +
                           ", or pass --mock");
    return std::make_unique<HttpModelClient>(std::move(cfg));
}

std::vector<std::string> load_script(const fs::path& path) {
    std::vector<std::string> replies;
    std::size_t line = 0;
    for (const auto& j : read_jsonl(path)) {
        ++line;
        if (!j.is_string())
            throw SchemaError(line, "<reply>", "mock script lines must be JSON strings");
        replies.push_back(j.get<std::string>());
    }
    return replies;
}

// ---- helpers ----

// Screenshot and UI-tree references are relative to the file that holds them;
// rewrite them when a trajectory moves to another directory.
Trajectory rebased(Trajectory t, const fs::path& new_dir) {
    auto rel = [&](const std::string& ref) {
        const fs::path from = fs::absolute(t.base_dir / ref).lexically_normal();
        const fs::path to = fs::absolute(new_dir).lexically_normal();
        const fs::path r = from.lexically_relative(to);
        return (r.empty() ? from : r).generic_string();
    };
    for (auto& s : t.steps) {
        s.screenshot = rel(s.screenshot);
        if (s.ui_tree)
            s.ui_tree = rel(*s.ui_tree);
    }
    t.base_dir = new_dir;
    return t;
}

// Stand-in knowledge when no parsed knowledge base is supplied: the recorded
// actions with whatever descriptions the trajectory already carries.
KnowledgeEntry knowledge_from_trajectory(const Trajectory& t) {
    KnowledgeEntry e;
    e.entry_id = t.task_id;
    e.source_task_id = t.task_id;
    e.instruction = t.instruction;
    e.app = t.app;
    for (const auto& s : t.steps) {
        e.actions.push_back(render_action(s.action));
        e.descriptions.push_back(s.description.value_or(""));
    }
    return e;
}

std::string fixed(double v, int digits) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << v;
    return ss.str();
}

bool caused_by_backend(const std::exception& e) {
    if (dynamic_cast<const BackendFailure*>(&e))
        return true;
    try {
        std::rethrow_if_nested(e);
    } catch (const std::exception& inner) {
        return caused_by_backend(inner);
    } catch (...) {
    }
    return false;
}

std::string describe_chain(const std::exception& e) {
    std::string msg = e.what();
    try {
        std::rethrow_if_nested(e);
    } catch (const std::exception& inner) {
        msg += ": " + describe_chain(inner);
    } catch (...) {
    }
    return msg;
}

// ---- subcommands ----

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string run_dir;
};

Config effective_config(const Common& common) {
    Config c = Config::defaults();
    if (!common.config_path.empty())
        c.merge_file(common.config_path);
    for (const auto& kv : common.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw InvalidInput("--set expects key=value, got '" + kv + "'");
        c.set(std::string(text::trim(std::string_view(kv).substr(0, eq))),
              std::string(text::trim(std::string_view(kv).substr(eq + 1))));
    }
    return c;
}

template <typename T> void apply(Config& c, const std::string& key, const std::optional<T>& flag) {
    if (!flag)
        return;
    if constexpr (std::is_same_v<T, std::string>)
        c.set(key, *flag);
    else {
        std::ostringstream ss;
        ss << *flag;
        c.set(key, ss.str());
    }
}

struct MockFlags {
    std::string mock; // "", "echo", "scripted"
    std::string script;
};

struct ParseDemosArgs {
    std::string trajectories;
    MockFlags mock;
    std::optional<int> workers;
    std::string viz_dir;
};

int cmd_parse_demos(const ParseDemosArgs& a, Config& config, RunDir& run, std::ostream& out) {
    apply(config, "workers", a.workers);
    run.record_input("trajectories", a.trajectories);
    const auto trajectories = load_trajectories(a.trajectories);

    std::unique_ptr<ModelClient> client;
    if (a.mock.mock == "scripted") {
        run.record_input("script", a.mock.script);
        client = std::make_unique<ScriptedClient>(load_script(a.mock.script));
    } else if (a.mock.mock.empty()) {
        client = make_http_client(config);
    } else {
        throw InvalidInput("parse-demos supports --mock scripted only");
    }

    DemoParserOptions opts;
    opts.max_output_tokens = config.get_int("max_tokens");
    if (!a.viz_dir.empty())
        opts.debug_viz_dir = fs::path(a.viz_dir);
    DemoParser parser(*client, PromptSet::builtin(), opts);
    const auto kb = parser.generate_knowledge_base(trajectories, static_cast<std::size_t>(config.get_int("workers")));

    save_knowledge_base(kb, run.output("knowledge.jsonl"));
    std::size_t steps = 0;
    for (const auto& e : kb)
        steps += e.actions.size();
    write_text_file(run.top("report.json"), json{{"entries", kb.size()}, {"steps", steps}}.dump(2) + "\n");
    const std::string text = "Knowledge entries  " + std::to_string(kb.size()) + "\nDescribed steps    " +
                             std::to_string(steps) + "\n";
    write_text_file(run.top("report.txt"), text);
    out << text;
    return kOk;
}

struct IndexArgs {
    std::string knowledge;
};

int cmd_index(const IndexArgs& a, Config& config, RunDir& run, std::ostream& out) {
    run.record_input("knowledge", a.knowledge);
    const auto kb = load_knowledge_base(a.knowledge);
    auto embedder = make_embedder(config);
    const auto index = build_index(kb, *embedder);
    save_index(index, run.output("index.jsonl"));
    const json report = {{"entries", index.size()}, {"dimension", index.dimension()}, {"backend_tag", index.backend_tag()}};
    write_text_file(run.top("report.json"), report.dump(2) + "\n");
    const std::string text = "Indexed " + std::to_string(index.size()) + " entries (" + index.backend_tag() + ")\n";
    write_text_file(run.top("report.txt"), text);
    out << text;
    return kOk;
}

struct RetrieveArgs {
    std::string index;
    std::string query;
    std::optional<int> k;
    std::optional<double> tau_s;
    std::string app;
};

int cmd_retrieve(const RetrieveArgs& a, Config& config, RunDir* run, std::ostream& out) {
    apply(config, "k", a.k);
    apply(config, "tau_s", a.tau_s);
    if (run)
        run->record_input("index", a.index);
    const auto index = load_index(a.index);
    auto embedder = make_embedder(config);

    RetrieveOptions opts;
    const int k = config.get_int("k");
    if (k < 1)
        throw InvalidInput("--k must be >= 1");
    opts.k = static_cast<std::size_t>(k);
    opts.tau_s = config.get_double("tau_s");
    if (!a.app.empty())
        opts.app_filter = a.app;

    const auto hits = retrieve(a.query, index, *embedder, opts);
    std::vector<json> records;
    for (const auto& h : hits) {
        out << h.entry_id << '\t' << fixed(h.score, 6) << '\n';
        records.push_back({{"entry_id", h.entry_id}, {"score", h.score}});
    }
    if (run) {
        write_jsonl(run->output("retrieval.jsonl"), records);
        write_text_file(run->top("report.json"), json{{"query", a.query}, {"hits", records}}.dump(2) + "\n");
    }
    return kOk;
}

struct BuildDatasetArgs {
    std::string corpus;
    std::string labels;
    std::string knowledge;
    std::vector<int> ks{1, 2, 3};
    std::optional<double> min_avg_sim;
    std::optional<int> workers;
    MockFlags mock;
    std::string split_name = "offline";
};

int cmd_build_dataset(const BuildDatasetArgs& a, Config& config, RunDir& run, std::ostream& out) {
    apply(config, "min_avg_sim", a.min_avg_sim);
    apply(config, "workers", a.workers);
    const auto workers = static_cast<std::size_t>(config.get_int("workers"));
    for (int k : a.ks)
        if (k < 1 || k > 3)
            throw InvalidInput("--ks values must be 1, 2 or 3");

    run.record_input("corpus", a.corpus);
    const StandardizeResult std_result = standardize(read_jsonl(a.corpus));
    const fs::path corpus_dir = fs::path(a.corpus).parent_path();

    std::vector<Trajectory> tasks;
    for (std::size_t i = 0; i < std_result.records.size(); ++i)
        tasks.push_back(trajectory_from_json(std_result.records[i], i + 1, corpus_dir));

    std::map<std::string, std::string> labels;
    if (!a.labels.empty()) {
        run.record_input("labels", a.labels);
        const json j = json::parse(read_text_file(a.labels));
        if (!j.is_object())
            throw SchemaError(1, "<labels>", "expected an object of task_id -> app");
        for (const auto& [id, app] : j.items()) {
            if (!app.is_string())
                throw SchemaError(1, id, "app label must be a string");
            labels[id] = app.get<std::string>();
        }
    }

    std::unique_ptr<ModelClient> classifier_client;
    std::optional<AppClassifier> classifier;
    const auto apps = config.get_list("apps");
    auto need_classifier = [&] {
        return std::any_of(tasks.begin(), tasks.end(),
                           [&](const Trajectory& t) { return t.app.empty() && !labels.contains(t.task_id); });
    };
    if (!apps.empty() && need_classifier()) {
        if (a.mock.mock == "scripted") {
            run.record_input("script", a.mock.script);
            classifier_client = std::make_unique<ScriptedClient>(load_script(a.mock.script));
        } else if (a.mock.mock.empty()) {
            classifier_client = make_http_client(config);
        } else {
            throw InvalidInput("build-dataset supports --mock scripted only");
        }
        classifier = AppClassifier{classifier_client.get(), apps, PromptSet::builtin()};
    }
    for (auto& t : tasks)
        t.app = recover_app(t, labels, classifier ? &*classifier : nullptr);

    std::optional<KnowledgeBase> kb;
    if (!a.knowledge.empty()) {
        run.record_input("knowledge", a.knowledge);
        std::set<std::string> kept;
        for (const auto& t : tasks)
            kept.insert(t.task_id);
        kb.emplace();
        for (auto& e : load_knowledge_base(a.knowledge))
            if (kept.contains(e.source_task_id))
                kb->push_back(std::move(e));
    }

    auto embedder = make_embedder(config);
    const auto sims = instruction_similarity_matrix(tasks, *embedder, workers);
    const QuadrantThresholds thresholds{config.get_double("ui_threshold"), config.get_double("act_threshold")};

    const fs::path out_dir = run.root() / "outputs";
    std::vector<Trajectory> saved;
    for (const auto& t : tasks)
        saved.push_back(rebased(t, out_dir));
    save_trajectories(saved, run.output("trajectories.jsonl"));
    write_text_file(run.output("similarity_matrix.json"), to_json(sims).dump() + "\n");
    if (kb)
        save_knowledge_base(*kb, run.output("knowledge.jsonl"));

    DatasetManifest manifest;
    manifest.split = a.split_name;
    manifest.trajectories = "trajectories.jsonl";
    if (kb)
        manifest.knowledge = "knowledge.jsonl";

    json report = {{"standardize", to_json(std_result.report)}, {"splits", json::object()}};
    std::string text;
    for (int k : a.ks) {
        KShotResult built = build_kshot(tasks, k, sims, config.get_double("min_avg_sim"));
        attach_profiles(built.combos, tasks, kb ? &*kb : nullptr, *embedder, thresholds);
        const std::string name = "combos_k" + std::to_string(k) + ".jsonl";
        save_combos(built.combos, run.output(name));
        manifest.ks.push_back(k);
        manifest.combos[k] = name;

        std::vector<Trajectory> queries;
        std::set<std::string> query_ids;
        for (const auto& c : built.combos)
            query_ids.insert(c.query_task_id);
        for (const auto& t : tasks)
            if (query_ids.contains(t.task_id))
                queries.push_back(t);
        const StatsTable stats = split_stats(built.combos, queries);
        report["splits"][std::to_string(k) + "-shot"] = {{"stats", to_json(stats)},
                                                        {"dropped_queries", built.dropped_queries}};
        text += std::to_string(k) + "-shot\n" + render_text(stats) + "\n";
    }
    manifest.stats = "stats.json";
    write_text_file(run.output("stats.json"), report["splits"].dump(2) + "\n");
    save_dataset_manifest(manifest, run.output("dataset.json"));

    const auto& sr = std_result.report;
    text = "Tasks in " + std::to_string(sr.tasks_in) + ", kept " + std::to_string(sr.tasks_kept) + ", excluded " +
           std::to_string(sr.excluded_task_ids.size()) + ", actions upgraded " + std::to_string(sr.actions_upgraded) +
           "\n\n" + text;
    write_text_file(run.top("report.json"), report.dump(2) + "\n");
    write_text_file(run.top("report.txt"), text);
    out << text;
    return kOk;
}

struct RunOfflineArgs {
    std::string split;     // dataset.json or trajectories .jsonl
    std::string combos;    // optional; overrides the manifest's
    std::string knowledge; // optional
    std::string index;     // optional; retrieval when no combos
    std::optional<int> k;
    std::optional<double> tau_s;
    std::optional<int> max_steps;
    std::optional<int> workers;
    MockFlags mock;
};

int cmd_run_offline(const RunOfflineArgs& a, Config& config, RunDir& run, std::ostream& out) {
    apply(config, "k", a.k);
    apply(config, "tau_s", a.tau_s);
    apply(config, "max_steps", a.max_steps);
    apply(config, "workers", a.workers);
    const int k = config.get_int("k");
    const auto workers = static_cast<std::size_t>(config.get_int("workers"));

    run.record_input("split", a.split);
    std::vector<Trajectory> gold;
    std::optional<std::vector<KShotCombo>> combos;
    std::optional<KnowledgeBase> kb;
    if (fs::path(a.split).extension() == ".json") {
        const DatasetManifest m = load_dataset_manifest(a.split);
        const fs::path dir = fs::path(a.split).parent_path();
        gold = load_trajectories(dir / m.trajectories);
        if (a.combos.empty()) {
            auto it = m.combos.find(k);
            if (it == m.combos.end())
                throw InvalidInput("split has no " + std::to_string(k) + "-shot combos");
            combos = load_combos(dir / it->second);
        }
        if (a.knowledge.empty() && m.knowledge)
            kb = load_knowledge_base(dir / *m.knowledge);
    } else {
        gold = load_trajectories(a.split);
    }
    if (!a.combos.empty()) {
        run.record_input("combos", a.combos);
        combos = load_combos(a.combos);
    }
    if (!a.knowledge.empty()) {
        run.record_input("knowledge", a.knowledge);
        kb = load_knowledge_base(a.knowledge);
    }
    if (!kb) {
        kb.emplace();
        for (const auto& t : gold)
            kb->push_back(knowledge_from_trajectory(t));
    }

    std::map<std::string, const KnowledgeEntry*> entry_by_task;
    for (const auto& e : *kb)
        entry_by_task.emplace(e.source_task_id, &e);

    // With combos the split is the set of query tasks; support sets come from the combos.
    std::map<std::string, const KShotCombo*> combo_of;
    if (combos) {
        for (const auto& c : *combos)
            if (c.k == k)
                combo_of.emplace(c.query_task_id, &c);
        std::erase_if(gold, [&](const Trajectory& t) { return !combo_of.contains(t.task_id); });
        if (gold.empty())
            throw InvalidInput("no query task of the split has a " + std::to_string(k) + "-shot combo");
    }

    std::optional<EmbeddingIndex> index;
    std::unique_ptr<Embedder> embedder;
    if (!combos && !a.index.empty()) {
        run.record_input("index", a.index);
        index = load_index(a.index);
        embedder = make_embedder(config);
    }

    auto demo_source_for = [&](const Trajectory& t) -> DemoSource {
        if (combos) {
            std::vector<KnowledgeEntry> demos;
            for (const auto& id : combo_of.at(t.task_id)->support_task_ids) {
                auto it = entry_by_task.find(id);
                if (it == entry_by_task.end())
                    throw InvalidInput("no knowledge entry for support task '" + id + "'");
                demos.push_back(*it->second);
            }
            return fixed_source(std::move(demos));
        }
        if (index) {
            RetrieveOptions opts;
            opts.k = static_cast<std::size_t>(std::max(k, 1));
            opts.tau_s = config.get_double("tau_s");
            for (const auto& e : *kb)
                if (e.source_task_id == t.task_id)
                    opts.exclude_ids.push_back(e.entry_id);
            return retrieval_source(*kb, *index, *embedder, opts);
        }
        return fixed_source({});
    };

    ExecutorOptions exec;
    exec.max_steps = config.get_int("max_steps");
    exec.max_output_tokens = config.get_int("max_tokens");

    std::unique_ptr<ModelClient> shared;
    std::unique_ptr<DemoParser> describer;
    if (a.mock.mock == "scripted") {
        run.record_input("script", a.mock.script);
        shared = std::make_unique<ScriptedClient>(load_script(a.mock.script));
    } else if (a.mock.mock.empty()) {
        shared = make_http_client(config);
        describer = std::make_unique<DemoParser>(*shared);
    } else if (a.mock.mock != "echo") {
        throw InvalidInput("--mock must be 'echo' or 'scripted'");
    }
    // Mock policies cannot also write descriptions; they get the fixed template.
    exec.description_mode = describer ? DescriptionMode::Model : DescriptionMode::Template;

    std::vector<EpisodeResult> results(gold.size());
    parallel_for(gold.size(), workers, [&](std::size_t i) {
        const Trajectory& t = gold[i];
        std::unique_ptr<ModelClient> echo;
        ModelClient* policy = shared.get();
        if (a.mock.mock == "echo") {
            echo = std::make_unique<EchoClient>(t);
            policy = echo.get();
        }
        ActExecutor executor(*policy, describer.get(), exec);
        ReplayEnvironment env(t);
        results[i] = executor.run_episode(env, t.task_id, t.instruction, demo_source_for(t));
    });

    std::vector<json> episodes, steps;
    bool backend_failed = false;
    for (const auto& r : results) {
        episodes.push_back(to_json(r));
        for (const auto& s : r.log) {
            steps.push_back({{"task_id", r.predicted.task_id},
                             {"step", s.step},
                             {"prompt_sha256", s.prompt_hash},
                             {"raw_output", s.raw_output},
                             {"action", s.action},
                             {"description", s.description}});
            run.log("task=" + r.predicted.task_id + " step=" + std::to_string(s.step) +
                    " wall_ms=" + fixed(s.wall_ms, 1));
        }
        backend_failed = backend_failed || r.backend_failure;
    }
    const auto predictions = predictions_from_episodes(results);
    write_jsonl(run.output("episodes.jsonl"), episodes);
    write_jsonl(run.output("steps.jsonl"), steps);
    save_predictions(predictions, run.output("predictions.jsonl"));

    const EvalReport report = evaluate_offline(predictions, gold, combos ? &*combos : nullptr);
    const double sr = replay_success_rate(results, gold);
    json rj = to_json(report);
    rj["replay_success_rate"] = sr;
    rj["episodes"] = results.size();
    const std::string text = render_text(report) + "\nReplay SR %  " + fixed(sr * 100.0, 1) + "\n";
    write_text_file(run.top("report.json"), rj.dump(2) + "\n");
    write_text_file(run.top("report.txt"), text);
    out << text;

    if (backend_failed) {
        for (const auto& r : results)
            if (r.backend_failure)
                throw BackendFailure("episode " + r.predicted.task_id + ": " + r.error);
    }
    return kOk;
}

struct EvaluateArgs {
    std::string predictions;
    std::string gold;
    std::string combos;
};

int cmd_evaluate(const EvaluateArgs& a, RunDir& run, std::ostream& out) {
    run.record_input("predictions", a.predictions);
    run.record_input("gold", a.gold);
    const auto predictions = load_predictions(a.predictions);
    const auto gold = load_trajectories(a.gold);
    std::optional<std::vector<KShotCombo>> combos;
    if (!a.combos.empty()) {
        run.record_input("combos", a.combos);
        combos = load_combos(a.combos);
    }
    const EvalReport report = evaluate_offline(predictions, gold, combos ? &*combos : nullptr);
    const std::string text = render_text(report);
    write_text_file(run.top("report.json"), to_json(report).dump(2) + "\n");
    write_text_file(run.top("report.txt"), text);
    out << text;
    return kOk;
}

struct StatsArgs {
    std::string split;
    std::string combos;
};

int cmd_stats(const StatsArgs& a, RunDir& run, std::ostream& out) {
    run.record_input("split", a.split);
    run.record_input("combos", a.combos);
    auto trajectories = load_trajectories(a.split);
    const auto combos = load_combos(a.combos);
    std::set<std::string> queries;
    for (const auto& c : combos)
        queries.insert(c.query_task_id);
    std::erase_if(trajectories, [&](const Trajectory& t) { return !queries.contains(t.task_id); });
    const StatsTable stats = split_stats(combos, trajectories);
    const std::string text = render_text(stats);
    write_text_file(run.top("report.json"), to_json(stats).dump(2) + "\n");
    write_text_file(run.top("report.txt"), text);
    out << text;
    return kOk;
}

void add_mock_flags(CLI::App* sub, MockFlags& m, const std::vector<std::string>& allowed) {
    auto* mock = sub->add_option("--mock", m.mock, "Use a mock backend instead of HTTP")
                     ->check(CLI::IsMember(allowed));
    auto* script = sub->add_option("--script", m.script, "JSONL file of scripted replies (one JSON string per line)")
                       ->check(CLI::ExistingFile);
    script->needs(mock);
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Learn-from-demonstration toolkit for mobile GUI agents", "demokit"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    Common common;
    app.add_option("--config", common.config_path, "Flat key = value config file")->check(CLI::ExistingFile);
    app.add_option("--set", common.overrides, "Override one config key (key=value); repeatable");
    app.add_option("--run-dir", common.run_dir, "Directory receiving outputs, reports and the manifest");

    ParseDemosArgs pd;
    auto* parse_demos = app.add_subcommand("parse-demos", "Describe demonstration steps into a knowledge base");
    parse_demos->add_option("--trajectories", pd.trajectories, "Trajectory JSONL")->required()->check(CLI::ExistingFile);
    parse_demos->add_option("--workers", pd.workers, "Parallel trajectories");
    parse_demos->add_option("--viz-dir", pd.viz_dir, "Write every action visualization here");
    add_mock_flags(parse_demos, pd.mock, {"scripted"});

    IndexArgs ix;
    auto* index = app.add_subcommand("index", "Embed knowledge-base instructions into an index");
    index->add_option("--knowledge", ix.knowledge, "Knowledge base JSONL")->required()->check(CLI::ExistingFile);

    RetrieveArgs rt;
    auto* retrieve_cmd = app.add_subcommand("retrieve", "Top-k demonstrations for an ad-hoc instruction");
    retrieve_cmd->add_option("--index", rt.index, "Index JSONL")->required()->check(CLI::ExistingFile);
    retrieve_cmd->add_option("--query", rt.query, "Instruction text")->required();
    retrieve_cmd->add_option("--k", rt.k, "Number of demonstrations");
    retrieve_cmd->add_option("--tau-s", rt.tau_s, "Minimum cosine score");
    retrieve_cmd->add_option("--app", rt.app, "Only entries of this app");

    BuildDatasetArgs bd;
    auto* build = app.add_subcommand("build-dataset", "Standardize a raw corpus and build k-shot combos");
    build->add_option("--corpus", bd.corpus, "Raw trajectory JSONL")->required()->check(CLI::ExistingFile);
    build->add_option("--labels", bd.labels, "JSON object mapping task_id to app")->check(CLI::ExistingFile);
    build->add_option("--knowledge", bd.knowledge, "Knowledge base for action similarity")->check(CLI::ExistingFile);
    build->add_option("--ks", bd.ks, "Shot counts to build")->delimiter(',');
    build->add_option("--min-avg-sim", bd.min_avg_sim, "Floor on mean support similarity");
    build->add_option("--workers", bd.workers, "Parallel similarity rows");
    build->add_option("--split-name", bd.split_name, "Name recorded in the dataset manifest");
    add_mock_flags(build, bd.mock, {"scripted"});

    RunOfflineArgs ro;
    auto* run_offline = app.add_subcommand("run-offline", "Replay episodes over a split and score them");
    run_offline->add_option("--split", ro.split, "dataset.json or trajectory JSONL")->required()->check(CLI::ExistingFile);
    run_offline->add_option("--combos", ro.combos, "Combos JSONL")->check(CLI::ExistingFile);
    run_offline->add_option("--knowledge", ro.knowledge, "Knowledge base JSONL")->check(CLI::ExistingFile);
    run_offline->add_option("--index", ro.index, "Index JSONL for retrieval")->check(CLI::ExistingFile);
    run_offline->add_option("--k", ro.k, "Demonstrations per task");
    run_offline->add_option("--tau-s", ro.tau_s, "Minimum retrieval score");
    run_offline->add_option("--max-steps", ro.max_steps, "Step limit per episode");
    run_offline->add_option("--workers", ro.workers, "Parallel episodes");
    add_mock_flags(run_offline, ro.mock, {"echo", "scripted"});

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold trajectories");
    evaluate->add_option("--predictions", ev.predictions, "Predictions JSONL")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--gold", ev.gold, "Gold trajectory JSONL")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--combos", ev.combos, "Combos JSONL for the quadrant breakdown")->check(CLI::ExistingFile);

    StatsArgs st;
    auto* stats = app.add_subcommand("stats", "Summary statistics of a split");
    stats->add_option("--split", st.split, "Trajectory JSONL")->required()->check(CLI::ExistingFile);
    stats->add_option("--combos", st.combos, "Combos JSONL")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kOk;
        }
        const auto extra = app.remaining();
        if (app.get_subcommands().empty() && !extra.empty() && extra.front().rfind('-', 0) != 0)
            err << "error: unknown subcommand '" << extra.front() << "'\n\n" << app.help();
        else
            err << "error: " << e.what() << "\n\n" << app.help();
        return kValidationError;
    }

    std::vector<std::string> command{"demokit"};
    for (int i = 1; i < argc; ++i)
        command.emplace_back(argv[i]);

    try {
        Config config = effective_config(common);
        CLI::App* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();

        if (name == "retrieve" && common.run_dir.empty())
            return cmd_retrieve(rt, config, nullptr, out);
        if (common.run_dir.empty())
            throw InvalidInput("--run-dir is required for " + name);
        for (const auto* m : {&pd.mock, &bd.mock, &ro.mock})
            if (m->mock == "scripted" && m->script.empty())
                throw InvalidInput("--mock scripted needs --script");

        RunDir run(common.run_dir);
        if (!common.config_path.empty())
            run.record_input("config", common.config_path);
        run.log("start " + name);

        int code = kOk;
        try {
            if (name == "parse-demos")
                code = cmd_parse_demos(pd, config, run, out);
            else if (name == "index")
                code = cmd_index(ix, config, run, out);
            else if (name == "retrieve")
                code = cmd_retrieve(rt, config, &run, out);
            else if (name == "build-dataset")
                code = cmd_build_dataset(bd, config, run, out);
            else if (name == "run-offline")
                code = cmd_run_offline(ro, config, run, out);
            else if (name == "evaluate")
                code = cmd_evaluate(ev, run, out);
            else if (name == "stats")
                code = cmd_stats(st, run, out);
        } catch (...) {
            run.finish(command, name, config);
            run.log("failed " + name);
            throw;
        }
        run.finish(command, name, config);
        run.log("done " + name);
        return code;
    } catch (const std::exception& e) {
        if (caused_by_backend(e)) {
            err << "backend failure: " << describe_chain(e) << '\n';
            return kBackendFailure;
        }
        err << "error: " << describe_chain(e) << '\n';
        return kValidationError;
    }
}

} // namespace demokit::cli
