#pragma once

#include "demokit/action.hpp"
#include "demokit/demo_parser.hpp"
#include "demokit/know_seeker.hpp"
#include "demokit/model_client.hpp"
#include "demokit/prompts.hpp"
#include "demokit/store.hpp"

#include <functional>
#include <string>
#include <vector>

namespace demokit {

struct Observation {
    fs::path path;          // readable location of the screenshot
    std::string screenshot; // the reference recorded in trajectories
    int width = 0;
    int height = 0;
};

/// The device the agent acts on. get_observation must not change state.
class Environment {
  public:
    virtual ~Environment() = default;
    virtual Observation get_observation() const = 0;
    virtual void execute(const Action& a) = 0;
    virtual bool is_terminal() const = 0;
};

/// Serves a recorded trajectory with teacher forcing: every execute() moves
/// to the next gold step whatever the action was.
class ReplayEnvironment final : public Environment {
  public:
    explicit ReplayEnvironment(const Trajectory& gold);

    Observation get_observation() const override;
    void execute(const Action& a) override;
    bool is_terminal() const override { return cursor_ >= gold_.steps.size(); }

    std::size_t cursor() const noexcept { return cursor_; }

  private:
    const Trajectory& gold_;
    std::size_t cursor_ = 0;
};

struct HistoryItem {
    Action action;
    DescriptionRecord description;
};

/// Assembles the task-execution prompt. The demonstration block is omitted
/// without demos and the history block without history.
ChatRequest construct_prompt(const std::string& instruction, const Observation& observation,
                             const std::vector<HistoryItem>& history, const std::vector<KnowledgeEntry>& demos,
                             const PromptSet& prompts = PromptSet::builtin());

struct Decision {
    Action action;
    std::string raw_output; // the reply that parsed
    int attempts = 1;
};

/// Asks the policy for one action; a reply that does not parse earns one
/// re-prompt listing the legal actions. Throws UnparseableDecision after that.
Decision decide(ModelClient& policy, const ChatRequest& req, const PromptSet& prompts = PromptSet::builtin());

/// Produces the demonstrations for an instruction. Called once per episode.
using DemoSource = std::function<std::vector<KnowledgeEntry>(const std::string& instruction)>;

/// Retrieval through the embedding index; ids map back into `kb` by entry_id.
DemoSource retrieval_source(const KnowledgeBase& kb, const EmbeddingIndex& index, Embedder& embedder,
                            RetrieveOptions options);

DemoSource fixed_source(std::vector<KnowledgeEntry> demos);

enum class Termination { TaskComplete, StepLimit, Error };
enum class CompletionSource { None, Policy, Environment };

std::string_view to_string(Termination t) noexcept;
std::string_view to_string(CompletionSource s) noexcept;

struct StepRecord {
    int step = 0;
    std::string prompt_hash;
    std::string raw_output;
    std::string action;
    std::string description;
    double wall_ms = 0.0;
};

struct EpisodeResult {
    Trajectory predicted;
    Termination terminated_by = Termination::StepLimit;
    CompletionSource completed_by = CompletionSource::None;
    int steps_taken = 0;
    std::vector<std::string> demo_ids;
    std::vector<StepRecord> log;
    std::string error;
    bool backend_failure = false;
};

enum class DescriptionMode {
    Model,   // describe each step through the demo-parser prompts
    Template // "<action> on step <n>", no backend call
};

struct ExecutorOptions {
    int max_steps = 40;
    DescriptionMode description_mode = DescriptionMode::Model;
    int max_output_tokens = 2048;
};

/// The perceive-decide-act loop over an Environment.
class ActExecutor {
  public:
    /// `describer` is required in DescriptionMode::Model and ignored otherwise.
    ActExecutor(ModelClient& policy, DemoParser* describer, ExecutorOptions options = {},
                PromptSet prompts = PromptSet::builtin());

    EpisodeResult run_episode(Environment& env, const std::string& task_id, const std::string& instruction,
                              const DemoSource& demos);

  private:
    DescriptionRecord describe(const std::string& instruction, const Observation& obs, const Action& a, int step,
                               const std::vector<HistoryItem>& history);

    ModelClient& policy_;
    DemoParser* describer_;
    ExecutorOptions options_;
    PromptSet prompts_;
};

json to_json(const EpisodeResult& r);

} // namespace demokit
