#include "config.hpp"

#include "demokit/errors.hpp"
#include "demokit/store.hpp"
#include "demokit/text.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>

namespace demokit::cli {

Config Config::defaults() {
    Config c;
    c.values_ = {
        {"act_threshold", "0.9015"},
        {"apps", ""},
        {"embed.backend", "hash"},
        {"embed.dim", ""},
        {"embed.endpoint", ""},
        {"embed.model", ""},
        {"k", "1"},
        {"max_steps", "40"},
        {"max_tokens", "2048"},
        {"min_avg_sim", "0.6"},
        {"model.endpoint", ""},
        {"model.max_retries", "3"},
        {"model.model", ""},
        {"model.timeout_ms", "60000"},
        {"tau_s", "0"},
        {"ui_threshold", "0.9447"},
        {"workers", "1"},
    };
    return c;
}

void Config::merge_file(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
        const std::string_view s = text::trim(line);
        if (s.empty() || s.front() == '#')
            continue;
        const auto eq = s.find('=');
        if (eq == std::string_view::npos)
            throw InvalidInput(path.string() + ":" + std::to_string(n) + ": expected key = value");
        set(std::string(text::trim(s.substr(0, eq))), std::string(text::trim(s.substr(eq + 1))));
    }
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end())
        throw InvalidInput("unknown config key '" + key + "'");
    it->second = value;
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
        throw InvalidInput("unknown config key '" + key + "'");
    return it->second;
}

int Config::get_int(const std::string& key) const {
    const std::string& v = get(key);
    int out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw InvalidInput("config key '" + key + "' needs an integer, got '" + v + "'");
    return out;
}

double Config::get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used == v.size())
            return out;
    } catch (const std::exception&) {
    }
    throw InvalidInput("config key '" + key + "' needs a number, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::string_view rest = get(key);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto item = text::trim(rest.substr(0, comma));
        if (!item.empty())
            out.emplace_back(item);
        if (comma == std::string_view::npos)
            break;
        rest.remove_prefix(comma + 1);
    }
    return out;
}

std::string Config::get_or_env(const std::string& key, const char* env_var) const {
    const std::string& v = get(key);
    if (!v.empty())
        return v;
    const char* env = std::getenv(env_var);
    return env ? env : "";
}

std::string Config::snapshot() const {
    std::string out;
    for (const auto& [k, v] : values_)
        out += k + " = " + v + "\n";
    return out;
}

} // namespace demokit::cli
