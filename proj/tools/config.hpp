#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace demokit::cli {

/// Flat `key = value` settings. Precedence: built-in defaults < config file
/// < command-line flags. Environment variables never override either; they
/// only fill in endpoints nobody set and carry the API key.
class Config {
  public:
    static Config defaults();

    /// Merges a file over the current values. Blank lines and `#` comments
    /// are ignored. Throws InvalidInput on unknown keys or malformed lines.
    void merge_file(const std::filesystem::path& path);

    /// Throws InvalidInput on an unknown key.
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key) const; // comma-separated, trimmed

    /// The config value, or the named environment variable when the value is empty.
    std::string get_or_env(const std::string& key, const char* env_var) const;

    /// Sorted `key = value` lines; secrets never appear here.
    std::string snapshot() const;

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

inline constexpr const char* kApiKeyEnv = "MODEL_API_KEY";
inline constexpr const char* kModelEndpointEnv = "MODEL_ENDPOINT";
inline constexpr const char* kModelNameEnv = "MODEL_NAME";
inline constexpr const char* kEmbedEndpointEnv = "EMBED_ENDPOINT";
inline constexpr const char* kEmbedModelEnv = "EMBED_MODEL";
inline constexpr const char* kEmbedDimEnv = "EMBED_DIM";

} // namespace demokit::cli
