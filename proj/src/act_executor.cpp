#include "demokit/act_executor.hpp"

#include "demokit/errors.hpp"
#include "demokit/text.hpp"

#include <array>
#include <chrono>
#include <unordered_map>

namespace demokit {

ReplayEnvironment::ReplayEnvironment(const Trajectory& gold) : gold_(gold) {
    if (gold_.steps.empty())
        throw InvalidInput("replay needs a non-empty trajectory");
}

Observation ReplayEnvironment::get_observation() const {
    if (is_terminal())
        throw InvalidInput("replay of '" + gold_.task_id + "' is past its last step");
    return {gold_.screenshot_path(cursor_), gold_.steps[cursor_].screenshot, gold_.screen_width,
            gold_.screen_height};
}

void ReplayEnvironment::execute(const Action&) {
    if (!is_terminal())
        ++cursor_;
}

ChatRequest construct_prompt(const std::string& instruction, const Observation& observation,
                             const std::vector<HistoryItem>& history, const std::vector<KnowledgeEntry>& demos,
                             const PromptSet& prompts) {
    if (observation.width <= 0 || observation.height <= 0)
        throw InvalidInput("observation needs positive pixel dimensions");

    std::string examples;
    if (!demos.empty()) {
        std::string items;
        for (std::size_t d = 0; d < demos.size(); ++d) {
            const auto& demo = demos[d];
            if (d)
                items += '\n';
            items += "Example " + std::to_string(d + 1) + ": " + demo.instruction + "\n";
            items += "Steps taken in this example:\n";
            for (std::size_t s = 0; s < demo.actions.size(); ++s) {
                items += "Step-" + std::to_string(s + 1) + ": " + demo.actions[s];
                if (s < demo.descriptions.size() && !demo.descriptions[s].empty())
                    items += " " + demo.descriptions[s];
                items += '\n';
            }
        }
        const std::array<std::pair<std::string_view, std::string>, 1> v{{{"examples", items}}};
        examples = text::substitute(prompts.execution_examples, v);
    }

    std::string history_block;
    if (!history.empty()) {
        std::string steps;
        for (std::size_t i = 0; i < history.size(); ++i) {
            steps += "Step-" + std::to_string(i + 1) + ": " + render_action(history[i].action);
            if (!history[i].description.text.empty())
                steps += " " + history[i].description.text;
            steps += '\n';
        }
        const std::array<std::pair<std::string_view, std::string>, 1> v{{{"steps", steps}}};
        history_block = text::substitute(prompts.execution_history, v);
    }

    const std::array<std::pair<std::string_view, std::string>, 5> values{{
        {"examples", examples},
        {"width", std::to_string(observation.width)},
        {"height", std::to_string(observation.height)},
        {"instruction", instruction},
        {"history", history_block},
    }};
    ChatRequest req;
    req.user_parts.push_back(TextPart{text::substitute(prompts.execution, values)});
    req.user_parts.push_back(image_file(observation.path));
    return req;
}

Decision decide(ModelClient& policy, const ChatRequest& req, const PromptSet& prompts) {
    std::string raw = policy.complete(req);
    try {
        return {parse_action(raw), raw, 1};
    } catch (const MalformedAction& e) {
        const std::array<std::pair<std::string_view, std::string>, 2> values{{{"error", e.reason()}, {"reply", raw}}};
        ChatRequest retry = req;
        retry.user_parts.push_back(TextPart{text::substitute(prompts.decision_retry, values)});
        raw = policy.complete(retry);
    }
    auto parsed = try_parse_action(raw);
    if (!parsed)
        throw UnparseableDecision(raw);
    return {*parsed, raw, 2};
}

DemoSource retrieval_source(const KnowledgeBase& kb, const EmbeddingIndex& index, Embedder& embedder,
                            RetrieveOptions options) {
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < kb.size(); ++i)
        by_id.emplace(kb[i].entry_id, i);
    return [&kb, &index, &embedder, options = std::move(options),
            by_id = std::move(by_id)](const std::string& instruction) {
        std::vector<KnowledgeEntry> out;
        for (const auto& hit : retrieve(instruction, index, embedder, options)) {
            auto it = by_id.find(hit.entry_id);
            if (it == by_id.end())
                throw InvalidInput("index entry '" + hit.entry_id + "' is not in the knowledge base");
            out.push_back(kb[it->second]);
        }
        return out;
    };
}

DemoSource fixed_source(std::vector<KnowledgeEntry> demos) {
    return [demos = std::move(demos)](const std::string&) { return demos; };
}

std::string_view to_string(Termination t) noexcept {
    switch (t) {
    case Termination::TaskComplete: return "TaskComplete";
    case Termination::StepLimit: return "StepLimit";
    case Termination::Error: return "Error";
    }
    return "?";
}

std::string_view to_string(CompletionSource s) noexcept {
    switch (s) {
    case CompletionSource::None: return "none";
    case CompletionSource::Policy: return "policy";
    case CompletionSource::Environment: return "environment";
    }
    return "?";
}

ActExecutor::ActExecutor(ModelClient& policy, DemoParser* describer, ExecutorOptions options, PromptSet prompts)
    : policy_(policy), describer_(describer), options_(options), prompts_(std::move(prompts)) {
    if (options_.max_steps < 1)
        throw InvalidInput("max_steps must be >= 1");
    if (options_.description_mode == DescriptionMode::Model && describer_ == nullptr)
        throw InvalidInput("model-generated descriptions need a describer");
}

DescriptionRecord ActExecutor::describe(const std::string& instruction, const Observation& obs, const Action& a,
                                        int step, const std::vector<HistoryItem>& history) {
    const bool terminal = action_type(a) == ActionType::TaskComplete;
    if (options_.description_mode == DescriptionMode::Template) {
        DescriptionRecord rec;
        rec.text = render_action(a) + " on step " + std::to_string(step + 1);
        rec.terminal = terminal;
        if (terminal && std::get<action::TaskComplete>(a).has_answer())
            rec.answer = std::get<action::TaskComplete>(a).answer;
        return rec;
    }

    std::vector<DescriptionRecord> prior;
    prior.reserve(history.size());
    for (const auto& h : history)
        prior.push_back(h.description);
    if (terminal)
        return describer_->describe_terminal(instruction, image_file(obs.path), prior,
                                             std::get<action::TaskComplete>(a));
    // Only the current screen exists before the action runs; it fills both panes.
    const cv::Mat screen = load_image(obs.path);
    return describer_->describe_intermediate(instruction, a, build_visualization(screen, screen, a), prior);
}

EpisodeResult ActExecutor::run_episode(Environment& env, const std::string& task_id, const std::string& instruction,
                                       const DemoSource& demo_source) {
    using Clock = std::chrono::steady_clock;

    EpisodeResult result;
    result.predicted.task_id = task_id;
    result.predicted.instruction = instruction;

    std::vector<KnowledgeEntry> demos;
    try {
        demos = demo_source(instruction);
    } catch (const Error& e) {
        result.terminated_by = Termination::Error;
        result.error = e.what();
        result.backend_failure = dynamic_cast<const BackendFailure*>(&e) != nullptr;
        return result;
    }
    for (const auto& d : demos)
        result.demo_ids.push_back(d.entry_id);

    std::vector<HistoryItem> history;
    bool finished = false;
    for (int t = 0; t < options_.max_steps && !env.is_terminal(); ++t) {
        const auto started = Clock::now();
        const Observation obs = env.get_observation();
        result.predicted.screen_width = obs.width;
        result.predicted.screen_height = obs.height;

        StepRecord rec;
        rec.step = t;
        DescriptionRecord description;
        Action action;
        try {
            ChatRequest req = construct_prompt(instruction, obs, history, demos, prompts_);
            req.max_output_tokens = options_.max_output_tokens;
            rec.prompt_hash = request_fingerprint(req);
            Decision decision = decide(policy_, req, prompts_);
            rec.raw_output = decision.raw_output;
            action = decision.action;
            description = describe(instruction, obs, action, t, history);
        } catch (const Error& e) {
            result.terminated_by = Termination::Error;
            result.error = "step " + std::to_string(t) + ": " + e.what();
            result.backend_failure = dynamic_cast<const BackendFailure*>(&e) != nullptr;
            finished = true;
            break;
        }

        rec.action = render_action(action);
        rec.description = description.text;
        history.push_back({action, description});
        result.predicted.steps.push_back(Step{t, obs.screenshot, action, description.text, std::nullopt});
        env.execute(action);
        rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - started).count();
        result.log.push_back(std::move(rec));

        if (action_type(action) == ActionType::TaskComplete) {
            result.terminated_by = Termination::TaskComplete;
            result.completed_by = CompletionSource::Policy;
            finished = true;
            break;
        }
    }
    if (!finished) {
        if (env.is_terminal()) {
            result.terminated_by = Termination::TaskComplete;
            result.completed_by = CompletionSource::Environment;
        } else {
            result.terminated_by = Termination::StepLimit;
        }
    }
    result.steps_taken = static_cast<int>(result.predicted.steps.size());
    return result;
}

json to_json(const EpisodeResult& r) {
    json actions = json::array();
    json descriptions = json::array();
    for (const auto& s : r.predicted.steps) {
        actions.push_back(render_action(s.action));
        descriptions.push_back(s.description.value_or(""));
    }
    json j = {{"task_id", r.predicted.task_id},
              {"terminated_by", std::string(to_string(r.terminated_by))},
              {"completed_by", std::string(to_string(r.completed_by))},
              {"steps_taken", r.steps_taken},
              {"demo_ids", r.demo_ids},
              {"actions", std::move(actions)},
              {"descriptions", std::move(descriptions)}};
    if (!r.error.empty())
        j["error"] = r.error;
    return j;
}

} // namespace demokit
