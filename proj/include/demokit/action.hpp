#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace demokit {

enum class SwipeDirection { Up, Down, Left, Right };

enum class ActionType { Click, Type, Swipe, PressHome, PressBack, PressEnter, TaskComplete };

namespace action {

struct Click {
    int x = 0;
    int y = 0;
    friend bool operator==(const Click&, const Click&) = default;
};

struct Type {
    std::string text;
    friend bool operator==(const Type&, const Type&) = default;
};

struct Swipe {
    SwipeDirection direction = SwipeDirection::Up;
    friend bool operator==(const Swipe&, const Swipe&) = default;
};

struct PressHome {
    friend bool operator==(const PressHome&, const PressHome&) = default;
};

struct PressBack {
    friend bool operator==(const PressBack&, const PressBack&) = default;
};

struct PressEnter {
    friend bool operator==(const PressEnter&, const PressEnter&) = default;
};

// An empty answer and "no answer" are the same value.
struct TaskComplete {
    std::string answer;
    bool has_answer() const noexcept { return !answer.empty(); }
    friend bool operator==(const TaskComplete&, const TaskComplete&) = default;
};

} // namespace action

/// One element of the unified mobile action space.
using Action = std::variant<action::Click, action::Type, action::Swipe, action::PressHome,
                            action::PressBack, action::PressEnter, action::TaskComplete>;

ActionType action_type(const Action& a) noexcept;

std::string_view to_string(ActionType t) noexcept;
std::string_view to_string(SwipeDirection d) noexcept;

/// Parses one candidate action string. Keywords and swipe directions are
/// case-insensitive; surrounding whitespace and one pair of wrapping double
/// quotes are tolerated. TYPE and TASK_COMPLETE payloads run up to the last
/// closing bracket in the string.
///
/// Throws MalformedAction (carrying the offending text) on any failure.
Action parse_action(std::string_view text);

/// Non-throwing variant; returns nullopt where parse_action would throw.
std::optional<Action> try_parse_action(std::string_view text) noexcept;

/// Canonical uppercase rendering. parse_action(render_action(a)) == a.
std::string render_action(const Action& a);

/// Outcome of mapping a source-dataset action string onto the unified space.
struct LegacyAction {
    enum class Kind {
        Keep,    // already canonical
        Upgrade, // rewritten (bare TASK_COMPLETE, swipe with coordinates)
        Drop     // TASK_IMPOSSIBLE; the containing task must be excluded
    };
    Kind kind = Kind::Keep;
    std::optional<Action> action; // empty iff kind == Drop
};

LegacyAction normalize_legacy(std::string_view raw);

/// Whitespace / quote stripping applied before parsing model output.
std::string_view strip_action_text(std::string_view text) noexcept;

} // namespace demokit
