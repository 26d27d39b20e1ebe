#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace amplio::text {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

/// Trim and collapse every whitespace run to one space.
inline std::string squish(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(c);
    }
  }
  return out;
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_space(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Sentence length as used for stats and filters: whitespace token count.
inline int word_count(std::string_view s) { return static_cast<int>(split_whitespace(s).size()); }

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

/// Lowercased alphanumeric word tokens; bytes >= 0x80 are kept as word characters.
inline std::vector<std::string> word_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string first_words(std::string_view s, std::size_t n) {
  auto words = split_whitespace(s);
  std::string out;
  for (std::size_t i = 0; i < std::min(n, words.size()); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::vector<std::string> lines(std::string_view s) {
  std::vector<std::string> out;
  std::string line;
  std::istringstream in{std::string(s)};
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

/// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Strip a list bullet ("1.", "12)", "-", "*") from one line. Returns nullopt
/// when the line carries no bullet.
inline std::optional<std::string> strip_bullet(std::string_view raw) {
  std::string line = trim(raw);
  if (line.empty()) return std::nullopt;
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
    auto body = trim(std::string_view(line).substr(i + 1));
    if (body.empty()) return std::nullopt;
    return body;
  }
  if (i == 0 && (line[0] == '-' || line[0] == '*') && line.size() > 1 && is_space(line[1])) {
    auto body = trim(std::string_view(line).substr(1));
    if (body.empty()) return std::nullopt;
    return body;
  }
  return std::nullopt;
}

/// Items of a bulleted/numbered list reply; preamble lines and blank lines are dropped.
inline std::vector<std::string> parse_list(std::string_view reply) {
  std::vector<std::string> items;
  for (const auto& l : lines(reply)) {
    if (auto item = strip_bullet(l)) items.push_back(std::move(*item));
  }
  return items;
}

}  // namespace amplio::text
