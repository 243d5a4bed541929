#include "bt/harness/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bt/core/errors.hpp"

namespace bt::harness {

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

std::string interpolate_env(const std::string& text, const EnvLookup& env) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '$' || i + 1 == text.size()) {
      out += text[i];
      continue;
    }
    if (text[i + 1] == '$') {
      out += '$';
      ++i;
      continue;
    }
    if (text[i + 1] != '{') {
      out += text[i];
      continue;
    }
    const auto close = text.find('}', i + 2);
    if (close == std::string::npos) throw ConfigError("unterminated ${ in: " + text);
    std::string name = text.substr(i + 2, close - i - 2);
    std::optional<std::string> fallback;
    if (const auto sep = name.find(":-"); sep != std::string::npos) {
      fallback = name.substr(sep + 2);
      name.resize(sep);
    }
    if (name.empty()) throw ConfigError("empty variable name in: " + text);
    auto value = env(name);
    if (!value || (value->empty() && fallback)) value = fallback;
    if (!value) throw ConfigError("environment variable " + name + " is not set");
    out += *value;
    i = close;
  }
  return out;
}

nlohmann::json interpolate_tree(const nlohmann::json& tree, const EnvLookup& env) {
  if (tree.is_string()) return interpolate_env(tree.get<std::string>(), env);
  if (tree.is_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : tree) out.push_back(interpolate_tree(v, env));
    return out;
  }
  if (tree.is_object()) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, v] : tree.items()) out[k] = interpolate_tree(v, env);
    return out;
  }
  return tree;
}

nlohmann::json load_config(const std::filesystem::path& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json tree;
  try {
    tree = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    // byte offset -> line number
    const std::string text = ss.str();
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line = 1 + std::size_t(std::count(text.begin(), text.begin() + long(upto), '\n'));
    throw ParseError(path.string(), line, e.what());
  }
  return interpolate_tree(tree, env);
}

}  // namespace bt::harness
