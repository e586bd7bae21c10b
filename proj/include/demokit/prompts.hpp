#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace demokit {

/// The prompt templates used by every model-facing component. Placeholders
/// use the "{name}" form and are filled by plain substitution.
struct PromptSet {
    static constexpr std::string_view kVersion = "v1";

    std::string demo_intermediate_system;
    std::string demo_intermediate_user;   // {instruction} {action} {history}
    std::string demo_terminal_standard_system;
    std::string demo_terminal_answer_system;
    std::string demo_terminal_user;       // {instruction} {action} {answer} {history}
    std::string demo_format_retry;        // {rule} {reply}
    std::string execution;                // {examples} {width} {height} {instruction} {history}
    std::string execution_examples;       // {examples}
    std::string execution_history;        // {steps}
    std::string decision_retry;           // {error} {reply}
    std::string app_classifier_system;    // {apps}
    std::string app_classifier_user;      // {instruction}

    /// Templates compiled into the library from the prompts/ directory.
    static const PromptSet& builtin();

    /// Loads an override directory laid out like prompts/. Throws IoError on a missing file.
    static PromptSet from_directory(const std::filesystem::path& dir);
};

} // namespace demokit
