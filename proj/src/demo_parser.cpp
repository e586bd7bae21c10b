#include "demokit/demo_parser.hpp"

#include "demokit/errors.hpp"
#include "demokit/hashing.hpp"
#include "demokit/parallel.hpp"
#include "demokit/text.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <array>
#include <cmath>
#include <regex>
#include <utility>

namespace demokit {

namespace {

constexpr double kMarkerRadiusFraction = 0.02;
constexpr double kMarkerSquareFraction = 0.08;
constexpr std::size_t kMaxPurposeWords = 7; // "under 8 words"
constexpr std::size_t kMaxReasonWords = 9;  // "less than 10 words"

std::string strip_trailing_period(std::string_view s) {
    s = text::trim(s);
    while (!s.empty() && s.back() == '.')
        s.remove_suffix(1);
    return std::string(text::trim(s));
}

// Splits "On X, rest" into (X, rest).
std::pair<std::string, std::string> split_screen(std::string_view original, std::string_view body) {
    if (!(text::istarts_with(body, "On ") || text::istarts_with(body, "In ")))
        throw DescriptionFormatError(std::string(original), "must start with 'On' or 'In'");
    body.remove_prefix(3);
    const auto comma = body.find(',');
    if (comma == std::string_view::npos)
        throw DescriptionFormatError(std::string(original), "missing ', ' after the screen name");
    std::string screen(text::trim(body.substr(0, comma)));
    const std::size_t words = text::word_count(screen);
    if (words < 2 || words > 6)
        throw DescriptionFormatError(std::string(original),
                                     "screen name must have 2-6 words, got " + std::to_string(words));
    return {std::move(screen), std::string(text::trim(body.substr(comma + 1)))};
}

bool mentions_coordinates(std::string_view s) {
    static const std::regex pattern(R"((\d+\s*,\s*\d+)|(\bids?\b)|(resource-id)|(\[\s*\d))",
                                    std::regex::icase);
    return std::regex_search(s.begin(), s.end(), pattern);
}

} // namespace

std::string render_description_history(const std::vector<DescriptionRecord>& history) {
    if (history.empty())
        return "(none)";
    std::string out;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (i)
            out += '\n';
        out += "Step-" + std::to_string(i + 1) + ": " + history[i].text;
    }
    return out;
}

std::string extract_description_text(std::string_view reply) {
    std::string_view s = text::trim(reply);
    if (s.starts_with("```")) {
        const auto first_nl = s.find('\n');
        const auto closing = s.rfind("```");
        if (first_nl != std::string_view::npos && closing != std::string_view::npos && closing > first_nl)
            s = text::trim(s.substr(first_nl + 1, closing - first_nl - 1));
    }
    if (s.starts_with('{')) {
        const auto parsed = nlohmann::json::parse(s, nullptr, false);
        if (parsed.is_object()) {
            auto it = parsed.find("action_description");
            if (it == parsed.end() || !it->is_string())
                throw DescriptionFormatError(std::string(reply), "reply JSON lacks a string 'action_description'");
            return std::string(text::trim(it->get<std::string>()));
        }
    }
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
        s = text::trim(s.substr(1, s.size() - 2));
    return std::string(s);
}

DescriptionRecord parse_description(std::string_view input, bool terminal) {
    DescriptionRecord rec;
    rec.text = std::string(text::trim(input));
    rec.terminal = terminal;
    if (rec.text.empty())
        throw DescriptionFormatError(rec.text, "empty description");

    std::string_view body = rec.text;
    if (const auto mem = text::lower(rec.text).rfind("[memory:"); mem != std::string::npos) {
        std::string_view tail = std::string_view(rec.text).substr(mem);
        if (tail.back() != ']')
            throw DescriptionFormatError(rec.text, "memory annotation must end with ']'");
        std::string fact(text::trim(tail.substr(8, tail.size() - 9)));
        if (fact.empty())
            throw DescriptionFormatError(rec.text, "memory annotation is empty");
        rec.memory = std::move(fact);
        body = body.substr(0, mem);
    }
    const std::string core = strip_trailing_period(body);
    auto [screen, rest] = split_screen(rec.text, core);
    rec.screen_name = std::move(screen);

    if (terminal) {
        std::string_view r = rest;
        std::string detail;
        if (text::istarts_with(r, "complete task,"))
            detail = "complete task";
        else if (text::istarts_with(r, "cannot complete task,"))
            detail = "cannot complete task";
        else
            throw DescriptionFormatError(rec.text, "terminal description needs ', complete task, <reason>'");
        rec.action_detail = detail;
        rec.purpose = std::string(text::trim(r.substr(detail.size() + 1)));
        if (rec.purpose.empty())
            throw DescriptionFormatError(rec.text, "missing reason or answer after 'complete task'");
        if (text::word_count(rec.purpose) > kMaxReasonWords && !text::istarts_with(rec.purpose, "the answer is"))
            rec.warnings.push_back("reason should be less than 10 words");
    } else {
        const auto to = rest.rfind(", to ");
        if (to == std::string::npos)
            throw DescriptionFormatError(rec.text, "missing ', to <Purpose>'");
        rec.action_detail = std::string(text::trim(std::string_view(rest).substr(0, to)));
        rec.purpose = std::string(text::trim(std::string_view(rest).substr(to + 5)));
        if (rec.action_detail.empty())
            throw DescriptionFormatError(rec.text, "missing action details");
        if (rec.purpose.empty())
            throw DescriptionFormatError(rec.text, "missing purpose");
        if (text::word_count(rec.purpose) > kMaxPurposeWords)
            rec.warnings.push_back("purpose should be under 8 words");
        if (text::istarts_with(rec.action_detail, "complete task"))
            throw DescriptionFormatError(rec.text, "intermediate step described as task completion");
    }
    if (mentions_coordinates(rec.action_detail) || mentions_coordinates(rec.purpose))
        rec.warnings.push_back("description should not mention coordinates or IDs");
    return rec;
}

// ---- Visualization ----

std::string ActionVisualization::encode_png() const {
    std::vector<unsigned char> buf;
    if (!cv::imencode(".png", composite, buf))
        throw ImageError("failed to encode composite as PNG");
    return std::string(buf.begin(), buf.end());
}

cv::Mat load_image(const fs::path& path) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (img.empty())
        throw ImageError("cannot decode image '" + path.string() + "'");
    return img;
}

ActionVisualization build_visualization(const cv::Mat& before, const cv::Mat& after, const Action& a) {
    if (before.empty() || after.empty())
        throw ImageError("visualization needs both before and after images");

    auto to_bgr = [](const cv::Mat& m) {
        cv::Mat out;
        if (m.channels() == 1)
            cv::cvtColor(m, out, cv::COLOR_GRAY2BGR);
        else if (m.channels() == 4)
            cv::cvtColor(m, out, cv::COLOR_BGRA2BGR);
        else
            out = m.clone();
        return out;
    };
    cv::Mat left = to_bgr(before);
    cv::Mat right = to_bgr(after);

    ActionVisualization viz;
    viz.before_width = left.cols;

    if (const auto* click = std::get_if<action::Click>(&a)) {
        if (click->x >= left.cols || click->y >= left.rows)
            throw OutOfBounds(click->x, click->y);
        const int width = left.cols;
        ClickMarker m;
        m.center = {click->x, click->y};
        m.radius = std::max(2, static_cast<int>(std::lround(kMarkerRadiusFraction * width)));
        m.square_side = std::max(4, static_cast<int>(std::lround(kMarkerSquareFraction * width)));
        const int half = m.square_side / 2;
        const int stroke = std::max(1, width / 360);
        const cv::Scalar red(0, 0, 255), green(0, 200, 0), white(255, 255, 255);

        cv::rectangle(left, {m.center.x - half, m.center.y - half}, {m.center.x + half, m.center.y + half}, green,
                      stroke, cv::LINE_AA);
        cv::circle(left, m.center, m.radius, white, cv::FILLED, cv::LINE_AA);
        cv::circle(left, m.center, std::max(1, m.radius - std::max(1, m.radius / 3)), red, cv::FILLED, cv::LINE_AA);

        const double font_scale = std::max(0.3, width / 1080.0 * 1.2);
        const int thickness = std::max(1, width / 540);
        m.label_origin = {m.center.x + half + stroke, m.center.y - half - stroke};
        cv::putText(left, "C", m.label_origin, cv::FONT_HERSHEY_SIMPLEX, font_scale, green, thickness, cv::LINE_AA);
        viz.marker = m;
    }

    // Pad to a common height so panes of different sizes still compose.
    const int height = std::max(left.rows, right.rows);
    if (left.rows < height)
        cv::copyMakeBorder(left, left, 0, height - left.rows, 0, 0, cv::BORDER_CONSTANT, cv::Scalar::all(0));
    if (right.rows < height)
        cv::copyMakeBorder(right, right, 0, height - right.rows, 0, 0, cv::BORDER_CONSTANT, cv::Scalar::all(0));
    cv::hconcat(left, right, viz.composite);
    return viz;
}

// ---- DemoParser ----

DemoParser::DemoParser(ModelClient& client, PromptSet prompts, DemoParserOptions options)
    : client_(client), prompts_(std::move(prompts)), options_(std::move(options)) {}

DescriptionRecord DemoParser::request_description(ChatRequest req, bool terminal,
                                                  const std::optional<std::string>& answer) {
    auto attempt = [&](const ChatRequest& r) {
        const std::string reply = client_.complete(r);
        try {
            DescriptionRecord rec = parse_description(extract_description_text(reply), terminal);
            if (answer) {
                rec.answer = answer;
                if (rec.purpose.find(*answer) == std::string::npos)
                    rec.warnings.push_back("answer text not repeated in the description");
            }
            return std::pair<std::optional<DescriptionRecord>, std::pair<std::string, std::string>>{rec, {}};
        } catch (const DescriptionFormatError& e) {
            return std::pair<std::optional<DescriptionRecord>, std::pair<std::string, std::string>>{
                std::nullopt, {reply, e.rule()}};
        }
    };

    auto [first, failure] = attempt(req);
    if (first)
        return *first;

    const std::array<std::pair<std::string_view, std::string>, 2> values{{{"rule", failure.second},
                                                                          {"reply", failure.first}}};
    req.user_parts.push_back(TextPart{text::substitute(prompts_.demo_format_retry, values)});
    auto [second, second_failure] = attempt(req);
    if (second)
        return *second;
    throw DescriptionFormatError(second_failure.first, second_failure.second);
}

DescriptionRecord DemoParser::describe_intermediate(const std::string& instruction, const Action& a,
                                                    const ActionVisualization& viz,
                                                    const std::vector<DescriptionRecord>& history) {
    if (action_type(a) == ActionType::TaskComplete)
        throw InvalidInput("describe_intermediate called with TASK_COMPLETE");

    const std::array<std::pair<std::string_view, std::string>, 3> values{{
        {"instruction", instruction},
        {"action", render_action(a)},
        {"history", render_description_history(history)},
    }};
    ChatRequest req;
    req.system_prompt = prompts_.demo_intermediate_system;
    req.max_output_tokens = options_.max_output_tokens;
    req.user_parts.push_back(TextPart{text::substitute(prompts_.demo_intermediate_user, values)});

    ImagePart image;
    image.encoded = viz.encode_png();
    if (options_.debug_viz_dir) {
        const fs::path out = *options_.debug_viz_dir / ("viz_" + sha256_hex(image.encoded).substr(0, 16) + ".png");
        write_text_file(out, image.encoded);
    }
    req.user_parts.push_back(std::move(image));
    return request_description(std::move(req), false, std::nullopt);
}

DescriptionRecord DemoParser::describe_terminal(const std::string& instruction, const ImagePart& final_screenshot,
                                                const std::vector<DescriptionRecord>& history,
                                                const action::TaskComplete& a) {
    const std::array<std::pair<std::string_view, std::string>, 4> values{{
        {"instruction", instruction},
        {"action", render_action(a)},
        {"answer", a.has_answer() ? a.answer : std::string("(none)")},
        {"history", render_description_history(history)},
    }};
    ChatRequest req;
    req.system_prompt = a.has_answer() ? prompts_.demo_terminal_answer_system : prompts_.demo_terminal_standard_system;
    req.max_output_tokens = options_.max_output_tokens;
    req.user_parts.push_back(TextPart{text::substitute(prompts_.demo_terminal_user, values)});
    req.user_parts.push_back(final_screenshot);
    return request_description(std::move(req), true,
                               a.has_answer() ? std::optional<std::string>(a.answer) : std::nullopt);
}

KnowledgeEntry DemoParser::generate_knowledge(const Trajectory& t) {
    KnowledgeEntry entry;
    entry.entry_id = t.task_id;
    entry.instruction = t.instruction;
    entry.app = t.app;
    entry.source_task_id = t.task_id;

    std::vector<DescriptionRecord> history;
    const std::size_t n = t.steps.size();
    if (n == 0)
        throw InvalidInput("trajectory '" + t.task_id + "' has no steps");

    for (std::size_t j = 0; j < n; ++j) {
        const Action& a = t.steps[j].action;
        try {
            if (j + 1 < n) {
                const cv::Mat before = load_image(t.screenshot_path(j));
                const cv::Mat after = load_image(t.screenshot_path(j + 1));
                history.push_back(describe_intermediate(t.instruction, a, build_visualization(before, after, a), history));
            } else {
                const auto* done = std::get_if<action::TaskComplete>(&a);
                if (!done)
                    throw InvalidInput("final action must be TASK_COMPLETE, got " + render_action(a));
                history.push_back(describe_terminal(t.instruction, image_file(t.screenshot_path(j)),
                                                    history, *done));
            }
        } catch (const Error& e) {
            std::throw_with_nested(StepFailed(j, e.what()));
        }
        entry.actions.push_back(render_action(a));
        entry.descriptions.push_back(history.back().text);
    }
    return entry;
}

KnowledgeBase DemoParser::generate_knowledge_base(const std::vector<Trajectory>& trajectories, std::size_t workers) {
    KnowledgeBase kb(trajectories.size());
    parallel_for(trajectories.size(), workers, [&](std::size_t i) { kb[i] = generate_knowledge(trajectories[i]); });
    return kb;
}

} // namespace demokit
