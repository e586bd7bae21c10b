#include "cli.hpp"
#include "config.hpp"

#include "demokit/errors.hpp"
#include "demokit/store.hpp"

#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

namespace demokit {
namespace {

using testing::TempDir;

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

CliResult run(std::vector<std::string> args) {
    args.insert(args.begin(), "demokit");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    CliResult r;
    r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

// Six tasks over two apps, written as a raw corpus with legacy spellings,
// plus one task that must be excluded.
fs::path write_corpus(const fs::path& dir) {
    std::vector<json> records;
    const std::vector<std::pair<std::string, std::string>> specs{
        {"Gmail", "open the inbox in gmail"},  {"Gmail", "open the sent folder in gmail"},
        {"Gmail", "open the drafts in gmail"}, {"Maps", "find a cafe nearby on maps"},
        {"Maps", "find a bakery nearby on maps"}, {"Maps", "find a pharmacy nearby on maps"}};
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto t = testing::make_trajectory(
            dir, "task" + std::to_string(i), specs[i].first, specs[i].second,
            {action::Click{10 + int(i), 20}, action::Type{"query " + std::to_string(i)},
             action::Swipe{SwipeDirection::Up}, action::TaskComplete{}});
        json j = to_json(t);
        j["steps"][2]["action"] = "SWIPE[UP,60,200]";
        j["steps"][3]["action"] = "TASK_COMPLETE";
        records.push_back(j);
    }
    json impossible = records[0];
    impossible["task_id"] = "impossible";
    impossible["steps"][3]["action"] = "TASK_IMPOSSIBLE";
    records.push_back(impossible);
    write_jsonl(dir / "corpus.jsonl", records);
    return dir / "corpus.jsonl";
}

std::vector<Trajectory> write_gold(const fs::path& dir) {
    std::vector<Trajectory> ts{
        testing::make_trajectory(dir, "g1", "Gmail", "archive the newest mail",
                                 {action::Click{5, 6}, action::PressBack{}, action::TaskComplete{}}),
        testing::make_trajectory(dir, "g2", "Gmail", "archive the oldest mail",
                                 {action::Swipe{SwipeDirection::Down}, action::TaskComplete{"done"}})};
    save_trajectories(ts, dir / "gold.jsonl");
    return ts;
}

TEST(Cli, UnknownSubcommand) {
    const auto r = run({"frobnicate"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("unknown subcommand 'frobnicate'"), std::string::npos);
    EXPECT_NE(r.err.find("run-offline"), std::string::npos); // usage follows
}

TEST(Cli, HelpAndMissingArguments) {
    EXPECT_EQ(run({"--help"}).code, 0);
    EXPECT_EQ(run({}).code, 1);
    EXPECT_EQ(run({"evaluate"}).code, 1);
    TempDir dir;
    write_gold(dir.path());
    const auto r = run({"stats", "--split", (dir / "gold.jsonl").string(), "--combos", (dir / "gold.jsonl").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--run-dir"), std::string::npos);
}

TEST(Cli, ScriptedMockNeedsScript) {
    TempDir dir;
    write_gold(dir.path());
    const auto r = run({"--run-dir", (dir / "run").string(), "parse-demos", "--trajectories",
                        (dir / "gold.jsonl").string(), "--mock", "scripted"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--script"), std::string::npos);
}

TEST(Cli, SchemaErrorIsValidationFailure) {
    TempDir dir;
    write_text_file(dir / "bad.jsonl", "{\"task_id\": 1}\n");
    const auto r = run({"--run-dir", (dir / "run").string(), "evaluate", "--predictions",
                        (dir / "bad.jsonl").string(), "--gold", (dir / "bad.jsonl").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("line 1"), std::string::npos);
}

TEST(Cli, ParseIndexRetrieve) {
    TempDir dir;
    write_gold(dir.path());
    std::vector<json> script{"On Inbox Screen, tap newest mail, to open it",
                             "On Mail Detail Screen, press back, to return to inbox",
                             "On Inbox Screen, complete task, mail archived",
                             "On Inbox Screen, swipe down, to reach oldest mail",
                             "On Inbox Screen, complete task, the answer is done"};
    write_jsonl(dir / "script.jsonl", script);
    const auto parsed = run({"--run-dir", (dir / "parse").string(), "parse-demos", "--trajectories",
                             (dir / "gold.jsonl").string(), "--mock", "scripted", "--script",
                             (dir / "script.jsonl").string()});
    ASSERT_EQ(parsed.code, 0) << parsed.err;
    const auto kb = load_knowledge_base(dir / "parse/outputs/knowledge.jsonl");
    ASSERT_EQ(kb.size(), 2u);
    EXPECT_EQ(kb[1].descriptions[1], "On Inbox Screen, complete task, the answer is done");

    const auto indexed = run({"--run-dir", (dir / "index").string(), "index", "--knowledge",
                              (dir / "parse/outputs/knowledge.jsonl").string()});
    ASSERT_EQ(indexed.code, 0) << indexed.err;

    const auto hits = run({"retrieve", "--index", (dir / "index/outputs/index.jsonl").string(), "--query",
                           "archive the oldest mail", "--k", "2"});
    ASSERT_EQ(hits.code, 0) << hits.err;
    EXPECT_EQ(hits.out.rfind("g2\t1.000000\n", 0), 0u) << hits.out;
    EXPECT_NE(hits.out.find("g1\t"), std::string::npos);
}

TEST(Cli, BuildDatasetThenEchoRunIsPerfect) {
    TempDir dir;
    const auto corpus = write_corpus(dir.path());
    const auto built = run({"--run-dir", (dir / "ds").string(), "build-dataset", "--corpus", corpus.string(),
                            "--ks", "1,2", "--min-avg-sim", "0"});
    ASSERT_EQ(built.code, 0) << built.err;
    const json report = json::parse(read_text_file(dir / "ds/report.json"));
    EXPECT_EQ(report["standardize"]["tasks_kept"], 6);
    EXPECT_EQ(report["standardize"]["excluded_task_ids"], (json{"impossible"}));
    EXPECT_EQ(report["standardize"]["actions_upgraded"], 12);
    EXPECT_EQ(load_combos(dir / "ds/outputs/combos_k2.jsonl").size(), 6u);

    const auto ran = run({"--run-dir", (dir / "run").string(), "run-offline", "--split",
                          (dir / "ds/outputs/dataset.json").string(), "--mock", "echo"});
    ASSERT_EQ(ran.code, 0) << ran.err;
    const json rj = json::parse(read_text_file(dir / "run/report.json"));
    EXPECT_EQ(rj["overall"]["type"], 1.0);
    EXPECT_EQ(rj["overall"]["match"], 1.0);
    EXPECT_EQ(rj["replay_success_rate"], 1.0);
    EXPECT_EQ(rj["episodes"], 6);
    EXPECT_NE(ran.out.find("Replay SR %  100.0"), std::string::npos);

    const auto evaluated = run({"--run-dir", (dir / "eval").string(), "evaluate", "--predictions",
                                (dir / "run/outputs/predictions.jsonl").string(), "--gold",
                                (dir / "ds/outputs/trajectories.jsonl").string()});
    ASSERT_EQ(evaluated.code, 0) << evaluated.err;
    EXPECT_EQ(json::parse(read_text_file(dir / "eval/report.json"))["overall"]["match"], 1.0);

    const auto stats = run({"--run-dir", (dir / "stats").string(), "stats", "--split",
                            (dir / "ds/outputs/trajectories.jsonl").string(), "--combos",
                            (dir / "ds/outputs/combos_k1.jsonl").string()});
    ASSERT_EQ(stats.code, 0) << stats.err;
    const json sj = json::parse(read_text_file(dir / "stats/report.json"));
    EXPECT_EQ(sj["tasks"], 6);
    EXPECT_EQ(sj["apps"], 2);
    EXPECT_EQ(sj["steps"], 24);
}

TEST(Cli, RunDirManifestAndByteIdenticalReruns) {
    TempDir dir;
    write_gold(dir.path());
    for (const char* name : {"a", "b"}) {
        const auto r = run({"--run-dir", (dir / name).string(), "--set", "max_steps=5", "run-offline", "--split",
                            (dir / "gold.jsonl").string(), "--mock", "echo"});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    for (const char* file : {"outputs/episodes.jsonl", "outputs/steps.jsonl", "outputs/predictions.jsonl",
                             "report.json", "report.txt", "config.snapshot"})
        EXPECT_EQ(read_text_file(dir / "a" / file), read_text_file(dir / "b" / file)) << file;

    const json m = json::parse(read_text_file(dir / "a/manifest.json"));
    EXPECT_EQ(m["subcommand"], "run-offline");
    EXPECT_EQ(m["inputs"]["split"]["sha256"].get<std::string>().size(), 64u);
    EXPECT_NE(std::find(m["outputs"].begin(), m["outputs"].end(), "outputs/predictions.jsonl"), m["outputs"].end());
    EXPECT_NE(read_text_file(dir / "a/config.snapshot").find("max_steps = 5"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "a/run.log"));
}

TEST(Cli, BackendFailureExitsWithTwo) {
    TempDir dir;
    write_gold(dir.path());
    const std::string endpoint = "http://127.0.0.1:" + std::to_string(testing::unused_local_port()) + "/generate";
    const auto r = run({"--run-dir", (dir / "run").string(), "--set", "model.endpoint=" + endpoint, "--set",
                        "model.max_retries=0", "run-offline", "--split", (dir / "gold.jsonl").string()});
    EXPECT_EQ(r.code, 2) << r.err;
    EXPECT_NE(r.err.find("backend failure"), std::string::npos);
    // Partial outputs and the manifest are still written.
    EXPECT_TRUE(fs::exists(dir / "run/outputs/episodes.jsonl"));
    EXPECT_TRUE(fs::exists(dir / "run/manifest.json"));
}

TEST(Cli, NoBackendConfiguredIsValidationError) {
    TempDir dir;
    write_gold(dir.path());
    ::unsetenv(cli::kModelEndpointEnv);
    const auto r = run({"--run-dir", (dir / "run").string(), "run-offline", "--split", (dir / "gold.jsonl").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--mock"), std::string::npos);
}

TEST(Config, Precedence) {
    TempDir dir;
    write_text_file(dir / "c.conf", "# comment\nmax_steps = 7\nk = 2\n\n");
    auto c = cli::Config::defaults();
    EXPECT_EQ(c.get_int("max_steps"), 40);
    EXPECT_EQ(c.get_int("k"), 1);
    EXPECT_EQ(c.get_double("tau_s"), 0.0);
    EXPECT_EQ(c.get_int("max_tokens"), 2048);
    c.merge_file(dir / "c.conf");
    EXPECT_EQ(c.get_int("max_steps"), 7);
    c.set("max_steps", "9");
    EXPECT_EQ(c.get_int("max_steps"), 9);
    EXPECT_EQ(c.get_int("k"), 2);

    write_text_file(dir / "bad.conf", "no_such_key = 1\n");
    EXPECT_THROW(c.merge_file(dir / "bad.conf"), InvalidInput);
    EXPECT_THROW(c.set("nope", "1"), InvalidInput);
    EXPECT_THROW(c.get_int("model.endpoint"), InvalidInput);
}

TEST(Config, EnvironmentOnlyFillsGaps) {
    ::setenv(cli::kModelEndpointEnv, "http://env.example/generate", 1);
    auto c = cli::Config::defaults();
    EXPECT_EQ(c.get_or_env("model.endpoint", cli::kModelEndpointEnv), "http://env.example/generate");
    c.set("model.endpoint", "http://file.example/generate");
    EXPECT_EQ(c.get_or_env("model.endpoint", cli::kModelEndpointEnv), "http://file.example/generate");
    ::unsetenv(cli::kModelEndpointEnv);
    EXPECT_EQ(c.snapshot().find("env.example"), std::string::npos);
}

TEST(Config, FlagBeatsFileThroughCli) {
    TempDir dir;
    write_gold(dir.path());
    write_text_file(dir / "c.conf", "max_steps = 7\n");
    const auto r = run({"--config", (dir / "c.conf").string(), "--run-dir", (dir / "run").string(), "run-offline",
                        "--split", (dir / "gold.jsonl").string(), "--mock", "echo", "--max-steps", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(read_text_file(dir / "run/config.snapshot").find("max_steps = 3"), std::string::npos);
}

} // namespace
} // namespace demokit
