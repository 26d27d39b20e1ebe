#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "amplio/error.hpp"
#include "amplio/text.hpp"

namespace amplio {

struct Settings {
  std::filesystem::path data_dir = "amplio-data";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string llm_endpoint;
  std::string llm_key;
  std::string llm_model = "gpt-4o-mini";
  std::string invert_endpoint;
  std::string embed_endpoint;
  int embed_dim = 0;  // 0: provider default (256 desk-hash, 768 external)
  std::string projection_endpoint;
  int timeout_ms = 30000;
  int max_concurrent = 4;
  std::uint64_t seed = 0;

  void set(const std::string& key, const std::string& value) {
    auto as_int = [&](const std::string& v) {
      try {
        std::size_t pos = 0;
        const int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
      } catch (const std::exception&) {
        fail(ErrorCode::InvalidInput, "config key '" + key + "' expects an integer, got '" + v + "'");
      }
    };
    if (key == "data_dir") data_dir = value;
    else if (key == "host") host = value;
    else if (key == "port") port = as_int(value);
    else if (key == "llm_endpoint") llm_endpoint = value;
    else if (key == "llm_key") llm_key = value;
    else if (key == "llm_model") llm_model = value;
    else if (key == "invert_endpoint") invert_endpoint = value;
    else if (key == "embed_endpoint") embed_endpoint = value;
    else if (key == "embed_dim") embed_dim = as_int(value);
    else if (key == "projection_endpoint") projection_endpoint = value;
    else if (key == "timeout_ms") timeout_ms = as_int(value);
    else if (key == "max_concurrent") max_concurrent = as_int(value);
    else if (key == "seed") seed = static_cast<std::uint64_t>(as_int(value));
    else fail(ErrorCode::InvalidInput, "unknown config key '" + key + "'");
  }

  void validate() const {
    if (port < 0 || port > 65535) fail(ErrorCode::InvalidInput, "port out of range");
    if (timeout_ms <= 0) fail(ErrorCode::InvalidInput, "timeout_ms must be positive");
    if (max_concurrent < 1 || max_concurrent > 64) fail(ErrorCode::InvalidInput, "max_concurrent must lie in [1, 64]");
    if (embed_dim != 0 && embed_dim < 2) fail(ErrorCode::InvalidInput, "embed_dim must be >= 2");
  }

  int effective_embed_dim() const { return embed_dim != 0 ? embed_dim : (embed_endpoint.empty() ? 256 : 768); }
};

/// `key = value` lines; `#` comments and `[section]` headers are ignored,
/// values may be double-quoted.
inline void apply_config_text(Settings& s, const std::string& content) {
  int lineno = 0;
  for (const auto& raw : text::lines(content)) {
    ++lineno;
    auto line = text::trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::InvalidInput, "config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = text::trim(line.substr(0, eq));
    auto value = text::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    s.set(key, value);
  }
}

inline void apply_config_file(Settings& s, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open config " + path.string(), path.string());
  apply_config_text(s, std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

/// AMPLIO_* environment overrides.
inline void apply_env(Settings& s) {
  static const std::map<std::string, std::string> vars = {
      {"AMPLIO_DATA_DIR", "data_dir"},         {"AMPLIO_HOST", "host"},
      {"AMPLIO_PORT", "port"},                 {"AMPLIO_LLM_ENDPOINT", "llm_endpoint"},
      {"AMPLIO_LLM_KEY", "llm_key"},           {"AMPLIO_LLM_MODEL", "llm_model"},
      {"AMPLIO_INVERT_ENDPOINT", "invert_endpoint"}, {"AMPLIO_EMBED_ENDPOINT", "embed_endpoint"},
      {"AMPLIO_EMBED_DIM", "embed_dim"},       {"AMPLIO_PROJECTION_ENDPOINT", "projection_endpoint"},
      {"AMPLIO_TIMEOUT_MS", "timeout_ms"},
  };
  for (const auto& [env, key] : vars)
    if (const char* v = std::getenv(env.c_str()); v && *v) s.set(key, v);
}

inline Settings load_settings(const std::optional<std::filesystem::path>& config_file = std::nullopt) {
  Settings s;
  if (config_file) apply_config_file(s, *config_file);
  apply_env(s);
  s.validate();
  return s;
}

}  // namespace amplio
