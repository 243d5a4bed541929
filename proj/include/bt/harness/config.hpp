#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <json.hpp>

namespace bt::harness {

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// The process environment.
std::optional<std::string> process_env(const std::string& name);

/// Replaces ${NAME} and ${NAME:-default} in `text`; "$$" yields "$".
/// An unset variable without a default raises ConfigError.
std::string interpolate_env(const std::string& text, const EnvLookup& env = process_env);

/// Applies interpolate_env to every string in the tree (keys untouched).
nlohmann::json interpolate_tree(const nlohmann::json& tree, const EnvLookup& env = process_env);

/// Reads a JSON config file and interpolates it. Throws ParseError on bad
/// JSON, IoError when unreadable.
nlohmann::json load_config(const std::filesystem::path& path, const EnvLookup& env = process_env);

}  // namespace bt::harness
