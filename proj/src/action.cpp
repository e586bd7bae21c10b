#include "demokit/action.hpp"

#include "demokit/errors.hpp"
#include "demokit/text.hpp"

#include <charconv>
#include <limits>

namespace demokit {

namespace {

template <class... Ts> struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

std::optional<SwipeDirection> parse_direction(std::string_view s) noexcept {
    s = text::trim(s);
    if (text::iequals(s, "UP"))
        return SwipeDirection::Up;
    if (text::iequals(s, "DOWN"))
        return SwipeDirection::Down;
    if (text::iequals(s, "LEFT"))
        return SwipeDirection::Left;
    if (text::iequals(s, "RIGHT"))
        return SwipeDirection::Right;
    return std::nullopt;
}

int parse_coordinate(std::string_view original, std::string_view field) {
    field = text::trim(field);
    if (field.empty())
        throw MalformedAction(std::string(original), "missing coordinate");
    if (field.front() == '-')
        throw MalformedAction(std::string(original), "negative coordinate");
    int value = 0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    if (*first == '+')
        ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec == std::errc::result_out_of_range)
        throw MalformedAction(std::string(original), "coordinate out of range");
    if (ec != std::errc() || ptr != last || first == last)
        throw MalformedAction(std::string(original), "coordinate is not an integer");
    return value;
}

} // namespace

ActionType action_type(const Action& a) noexcept {
    return std::visit(overloaded{
                          [](const action::Click&) { return ActionType::Click; },
                          [](const action::Type&) { return ActionType::Type; },
                          [](const action::Swipe&) { return ActionType::Swipe; },
                          [](const action::PressHome&) { return ActionType::PressHome; },
                          [](const action::PressBack&) { return ActionType::PressBack; },
                          [](const action::PressEnter&) { return ActionType::PressEnter; },
                          [](const action::TaskComplete&) { return ActionType::TaskComplete; },
                      },
                      a);
}

std::string_view to_string(ActionType t) noexcept {
    switch (t) {
    case ActionType::Click: return "CLICK";
    case ActionType::Type: return "TYPE";
    case ActionType::Swipe: return "SWIPE";
    case ActionType::PressHome: return "PRESS_HOME";
    case ActionType::PressBack: return "PRESS_BACK";
    case ActionType::PressEnter: return "PRESS_ENTER";
    case ActionType::TaskComplete: return "TASK_COMPLETE";
    }
    return "?";
}

std::string_view to_string(SwipeDirection d) noexcept {
    switch (d) {
    case SwipeDirection::Up: return "UP";
    case SwipeDirection::Down: return "DOWN";
    case SwipeDirection::Left: return "LEFT";
    case SwipeDirection::Right: return "RIGHT";
    }
    return "?";
}

std::string_view strip_action_text(std::string_view s) noexcept {
    s = text::trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        s.remove_prefix(1);
        s.remove_suffix(1);
        s = text::trim(s);
    }
    return s;
}

Action parse_action(std::string_view input) {
    const std::string_view s = strip_action_text(input);
    if (s.empty())
        throw MalformedAction(std::string(input), "empty action");

    const std::size_t open = s.find('[');
    if (open == std::string_view::npos) {
        if (text::iequals(s, "PRESS_HOME"))
            return action::PressHome{};
        if (text::iequals(s, "PRESS_BACK"))
            return action::PressBack{};
        if (text::iequals(s, "PRESS_ENTER"))
            return action::PressEnter{};
        throw MalformedAction(std::string(input), "unknown action keyword");
    }

    if (s.back() != ']')
        throw MalformedAction(std::string(input), "missing closing bracket");
    const std::string_view keyword = text::trim(s.substr(0, open));
    const std::string_view payload = s.substr(open + 1, s.size() - open - 2);

    if (text::iequals(keyword, "CLICK")) {
        const std::size_t comma = payload.find(',');
        if (comma == std::string_view::npos)
            throw MalformedAction(std::string(input), "CLICK needs two coordinates");
        const int x = parse_coordinate(input, payload.substr(0, comma));
        const int y = parse_coordinate(input, payload.substr(comma + 1));
        return action::Click{x, y};
    }
    if (text::iequals(keyword, "TYPE"))
        return action::Type{std::string(payload)};
    if (text::iequals(keyword, "SWIPE")) {
        auto dir = parse_direction(payload);
        if (!dir)
            throw MalformedAction(std::string(input), "swipe direction must be UP, DOWN, LEFT or RIGHT");
        return action::Swipe{*dir};
    }
    if (text::iequals(keyword, "TASK_COMPLETE"))
        return action::TaskComplete{std::string(payload)};
    throw MalformedAction(std::string(input), "unknown action keyword");
}

std::optional<Action> try_parse_action(std::string_view text) noexcept {
    try {
        return parse_action(text);
    } catch (...) {
        return std::nullopt;
    }
}

std::string render_action(const Action& a) {
    return std::visit(
        overloaded{
            [](const action::Click& c) {
                return "CLICK[" + std::to_string(c.x) + "," + std::to_string(c.y) + "]";
            },
            [](const action::Type& t) { return "TYPE[" + t.text + "]"; },
            [](const action::Swipe& s) { return "SWIPE[" + std::string(to_string(s.direction)) + "]"; },
            [](const action::PressHome&) { return std::string("PRESS_HOME"); },
            [](const action::PressBack&) { return std::string("PRESS_BACK"); },
            [](const action::PressEnter&) { return std::string("PRESS_ENTER"); },
            [](const action::TaskComplete& t) { return "TASK_COMPLETE[" + t.answer + "]"; },
        },
        a);
}

LegacyAction normalize_legacy(std::string_view raw) {
    const std::string_view s = strip_action_text(raw);
    if (text::istarts_with(s, "TASK_IMPOSSIBLE"))
        return {LegacyAction::Kind::Drop, std::nullopt};
    if (text::iequals(s, "TASK_COMPLETE"))
        return {LegacyAction::Kind::Upgrade, action::TaskComplete{}};

    // Source swipes may carry coordinates after the direction; only the direction survives.
    if (text::istarts_with(s, "SWIPE[") && s.back() == ']') {
        const std::string_view payload = s.substr(6, s.size() - 7);
        const std::size_t comma = payload.find(',');
        if (comma != std::string_view::npos) {
            if (auto dir = parse_direction(payload.substr(0, comma)))
                return {LegacyAction::Kind::Upgrade, action::Swipe{*dir}};
        }
    }
    return {LegacyAction::Kind::Keep, parse_action(raw)};
}

} // namespace demokit
