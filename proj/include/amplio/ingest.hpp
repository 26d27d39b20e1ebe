#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amplio/error.hpp"
#include "amplio/text.hpp"

namespace amplio {

struct IngestRow {
  std::string text;
  std::optional<std::string> category;
};

inline constexpr std::size_t kMinIngestRows = 3;

[[noreturn]] inline void ingest_error(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::IngestError, "line " + std::to_string(line) + ": " + what, std::to_string(line));
}

/// One JSON object per line: {"text": ..., "category"?: ...}. Blank lines are skipped.
inline std::vector<IngestRow> parse_jsonl(std::istream& in) {
  std::vector<IngestRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      ingest_error(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) ingest_error(lineno, "missing string field 'text'");
    IngestRow row{j["text"].get<std::string>(), std::nullopt};
    if (text::trim(row.text).empty()) ingest_error(lineno, "empty text");
    if (j.contains("category") && !j["category"].is_null()) {
      if (!j["category"].is_string()) ingest_error(lineno, "'category' must be a string");
      auto c = text::trim(j["category"].get<std::string>());
      if (!c.empty()) row.category = c;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// RFC 4180 records. Returns fields per record with the line each record started on.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> parse_csv_records(std::istream& in) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> out;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false, field_started = false, any = false;
  std::size_t line = 1, record_line = 1;
  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = fields.size() == 1 && fields[0].empty();
    if (!blank) out.emplace_back(record_line, std::move(fields));
    fields.clear();
    any = false;
  };
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (!any) {
      record_line = line;
      any = true;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == '"') {
      ingest_error(line, "stray quote inside unquoted field");
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
      ++line;
    } else if (c == '\r') {
      // CRLF
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) ingest_error(line, "unterminated quoted field");
  if (any) end_record();
  return out;
}

/// Header "text[,category]" (any column order, extra columns ignored).
inline std::vector<IngestRow> parse_csv(std::istream& in) {
  auto records = parse_csv_records(in);
  if (records.empty()) ingest_error(1, "empty CSV file");
  const auto& header = records.front().second;
  std::optional<std::size_t> text_col, cat_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto h = text::lower(text::trim(header[i]));
    if (h == "text") text_col = i;
    if (h == "category") cat_col = i;
  }
  if (!text_col) ingest_error(records.front().first, "CSV header must contain a 'text' column");
  std::vector<IngestRow> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& [lineno, fields] = records[r];
    if (fields.size() != header.size())
      ingest_error(lineno, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    IngestRow row{fields[*text_col], std::nullopt};
    if (text::trim(row.text).empty()) ingest_error(lineno, "empty text");
    if (cat_col) {
      auto c = text::trim(fields[*cat_col]);
      if (!c.empty()) row.category = c;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

enum class IngestFormat { Jsonl, Csv };

inline IngestFormat sniff_format(const std::filesystem::path& path, std::string_view head) {
  const auto ext = text::lower(path.extension().string());
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return IngestFormat::Jsonl;
  if (ext == ".csv") return IngestFormat::Csv;
  const auto t = text::trim(head);
  return (!t.empty() && t.front() == '{') ? IngestFormat::Jsonl : IngestFormat::Csv;
}

inline std::vector<IngestRow> parse_ingest_text(const std::string& content, IngestFormat format) {
  std::istringstream in(content);
  auto rows = format == IngestFormat::Jsonl ? parse_jsonl(in) : parse_csv(in);
  if (rows.size() < kMinIngestRows)
    throw Error(ErrorCode::IngestError, "need at least " + std::to_string(kMinIngestRows) + " rows, got " + std::to_string(rows.size()));
  return rows;
}

inline std::vector<IngestRow> parse_ingest_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string(), path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_ingest_text(content, sniff_format(path, content.substr(0, 256)));
}

}  // namespace amplio
