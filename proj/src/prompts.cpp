#include "demokit/prompts.hpp"

#include "demokit/errors.hpp"
#include "demokit/store.hpp"

#include <cstddef>
#include <utility>

namespace demokit {

namespace detail {
extern const std::pair<std::string_view, std::string_view> kBuiltinPrompts[];
extern const std::size_t kBuiltinPromptCount;
} // namespace detail

namespace {

template <typename Load> PromptSet assemble(Load&& load) {
    PromptSet p;
    p.demo_intermediate_system = load("demo_intermediate.system");
    p.demo_intermediate_user = load("demo_intermediate.user");
    p.demo_terminal_standard_system = load("demo_terminal_standard.system");
    p.demo_terminal_answer_system = load("demo_terminal_answer.system");
    p.demo_terminal_user = load("demo_terminal.user");
    p.demo_format_retry = load("demo_format_retry");
    p.execution = load("execution");
    p.execution_examples = load("execution_examples");
    p.execution_history = load("execution_history");
    p.decision_retry = load("decision_retry");
    p.app_classifier_system = load("app_classifier.system");
    p.app_classifier_user = load("app_classifier.user");
    return p;
}

} // namespace

const PromptSet& PromptSet::builtin() {
    static const PromptSet set = assemble([](std::string_view name) {
        for (std::size_t i = 0; i < detail::kBuiltinPromptCount; ++i)
            if (detail::kBuiltinPrompts[i].first == name)
                return std::string(detail::kBuiltinPrompts[i].second);
        throw Error("builtin prompt '" + std::string(name) + "' was not embedded");
    });
    return set;
}

PromptSet PromptSet::from_directory(const std::filesystem::path& dir) {
    return assemble([&](std::string_view name) { return read_text_file(dir / (std::string(name) + ".txt")); });
}

} // namespace demokit
