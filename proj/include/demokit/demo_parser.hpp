#pragma once

#include "demokit/action.hpp"
#include "demokit/model_client.hpp"
#include "demokit/prompts.hpp"
#include "demokit/store.hpp"

#include <opencv2/core.hpp>

#include <optional>
#include <string>
#include <vector>

namespace demokit {

/// A validated step description.
///
/// Non-terminal form: "[On/In] <Screen>, <Action>, to <Purpose>" optionally
/// followed by ". [Memory: <fact>]". Terminal form:
/// "[On/In] <Screen>, complete task, <Reason-or-Answer>".
struct DescriptionRecord {
    std::string text;
    std::string screen_name;
    std::string action_detail;
    std::string purpose;
    std::optional<std::string> memory;
    bool terminal = false;
    std::optional<std::string> answer;
    // Soft-rule violations (purpose length, coordinates, ...). Never fatal.
    std::vector<std::string> warnings;
};

/// Parses and validates a description. Throws DescriptionFormatError naming the violated rule.
DescriptionRecord parse_description(std::string_view text, bool terminal);

/// Pulls the description text out of a model reply: a JSON object's
/// "action_description" field (code fences tolerated) or the bare text.
std::string extract_description_text(std::string_view reply);

struct ClickMarker {
    cv::Point center;
    int radius = 0;      // red circle with a white ring, 2% of the screen width
    int square_side = 0; // green square, 8% of the screen width
    cv::Point label_origin;
};

/// Before-screen on the left, after-screen on the right; a click marker on the left pane.
struct ActionVisualization {
    cv::Mat composite;
    int before_width = 0;
    std::optional<ClickMarker> marker;

    /// PNG-encoded composite.
    std::string encode_png() const;
};

/// Throws ImageError when either image is empty, OutOfBounds for a click outside `before`.
ActionVisualization build_visualization(const cv::Mat& before, const cv::Mat& after, const Action& a);

/// Throws ImageError when the file is missing or undecodable.
cv::Mat load_image(const fs::path& path);

struct DemoParserOptions {
    int max_output_tokens = 2048;
    // When set, every composite is written here as PNG.
    std::optional<fs::path> debug_viz_dir;
};

/// Generates per-step descriptions for demonstrations through a generative backend.
/// Each malformed reply earns exactly one corrective re-prompt.
class DemoParser {
  public:
    DemoParser(ModelClient& client, PromptSet prompts = PromptSet::builtin(), DemoParserOptions options = {});

    DescriptionRecord describe_intermediate(const std::string& instruction, const Action& a,
                                            const ActionVisualization& viz,
                                            const std::vector<DescriptionRecord>& history);

    DescriptionRecord describe_terminal(const std::string& instruction, const ImagePart& final_screenshot,
                                        const std::vector<DescriptionRecord>& history,
                                        const action::TaskComplete& a);

    /// Describes every step in order. Failures surface as StepFailed(index, cause)
    /// with the original exception nested.
    KnowledgeEntry generate_knowledge(const Trajectory& t);

    /// Builds one entry per trajectory, order-preserving, using up to `workers` threads.
    KnowledgeBase generate_knowledge_base(const std::vector<Trajectory>& trajectories, std::size_t workers = 1);

  private:
    DescriptionRecord request_description(ChatRequest req, bool terminal,
                                          const std::optional<std::string>& answer);

    ModelClient& client_;
    PromptSet prompts_;
    DemoParserOptions options_;
};

/// "Step-1: <text>" lines, or "(none)".
std::string render_description_history(const std::vector<DescriptionRecord>& history);

} // namespace demokit
