#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amplio/augmentation.hpp"
#include "amplio/knn.hpp"
#include "amplio/projection.hpp"
#include "amplio/text.hpp"

namespace amplio {

using nlohmann::json;

enum class RecordKind { Original, Generated };

inline std::string_view to_string(RecordKind k) { return k == RecordKind::Original ? "original" : "generated"; }

inline RecordKind kind_from_string(std::string_view s) {
  if (s == "original") return RecordKind::Original;
  if (s == "generated") return RecordKind::Generated;
  fail(ErrorCode::InvalidInput, "unknown sentence kind '" + std::string(s) + "'");
}

struct SentenceRecord {
  SentenceId id = 0;
  std::string text;
  Vector embedding;
  Point2D coords;
  RecordKind kind = RecordKind::Original;
  Method method = Method::None;
  std::optional<SentenceId> parent_id;
  json details = json::object();
  std::string category;
  int length = 0;
  bool edited = false;
  std::optional<double> alpha;
};

struct AugmentationRound {
  std::int64_t round_id = 0;
  SentenceId parent_id = 0;
  Method method = Method::None;
  json details = json::object();
  std::vector<SentenceId> child_ids;
  std::set<SentenceId> deleted;  // tombstoned children
  std::int64_t created_at = 0;   // unix milliseconds
};

struct DatasetStats {
  std::int64_t total_sentences = 0;
  std::int64_t total_categories = 0;
  double mean_sentences_per_category = 0.0;
  double mean_sentence_length = 0.0;
  std::int64_t original_count = 0;
  std::int64_t generated_count = 0;
  std::map<std::string, std::int64_t> generated_by_method;  // concepts / interpolation / llm
  std::map<std::string, std::int64_t> category_counts;
  std::map<int, std::int64_t> length_counts;

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

/// Running aggregates, updated on every add/remove.
class StatsAccumulator {
 public:
  void add(const SentenceRecord& r) { update(r, +1); }
  void remove(const SentenceRecord& r) { update(r, -1); }

  DatasetStats stats() const {
    DatasetStats s;
    s.total_sentences = count_;
    s.original_count = originals_;
    s.generated_count = count_ - originals_;
    for (auto m : {Method::Concepts, Method::Interpolation, Method::Llm}) {
      auto it = methods_.find(m);
      s.generated_by_method[std::string(to_string(m))] = it == methods_.end() ? 0 : it->second;
    }
    s.category_counts = categories_;
    s.length_counts = lengths_;
    s.total_categories = static_cast<std::int64_t>(categories_.size());
    s.mean_sentences_per_category =
        categories_.empty() ? 0.0 : static_cast<double>(count_) / static_cast<double>(categories_.size());
    s.mean_sentence_length = count_ == 0 ? 0.0 : static_cast<double>(length_sum_) / static_cast<double>(count_);
    return s;
  }

 private:
  template <typename Map, typename Key>
  static void bump(Map& m, const Key& k, int delta) {
    auto& v = m[k];
    v += delta;
    if (v == 0) m.erase(k);
  }

  void update(const SentenceRecord& r, int delta) {
    count_ += delta;
    length_sum_ += delta * r.length;
    if (r.kind == RecordKind::Original) originals_ += delta;
    else bump(methods_, r.method, delta);
    bump(categories_, r.category, delta);
    bump(lengths_, r.length, delta);
  }

  std::int64_t count_ = 0;
  std::int64_t originals_ = 0;
  std::int64_t length_sum_ = 0;
  std::map<Method, std::int64_t> methods_;
  std::map<std::string, std::int64_t> categories_;
  std::map<int, std::int64_t> lengths_;
};

template <typename Range>
DatasetStats compute_stats(const Range& records) {
  StatsAccumulator acc;
  for (const auto& r : records) acc.add(r);
  return acc.stats();
}

struct FilterSpec {
  std::set<RecordKind> kinds;
  std::set<Method> methods;
  std::set<std::string> categories;
  std::optional<int> min_length;
  std::optional<int> max_length;

  bool empty() const { return kinds.empty() && methods.empty() && categories.empty() && !min_length && !max_length; }

  bool matches(const SentenceRecord& r) const {
    if (!kinds.empty() && !kinds.count(r.kind)) return false;
    if (!methods.empty() && !methods.count(r.method)) return false;
    if (!categories.empty() && !categories.count(r.category)) return false;
    if (min_length && r.length < *min_length) return false;
    if (max_length && r.length > *max_length) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// JSON forms
// ---------------------------------------------------------------------------

inline json coords_json(Point2D p) { return json::array({p.x, p.y}); }

inline Point2D coords_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

/// Public record shape (export and HTTP). Embeddings are omitted.
inline json record_public_json(const SentenceRecord& r) {
  json j = {{"id", r.id},
            {"text", r.text},
            {"kind", to_string(r.kind)},
            {"method", to_string(r.method)},
            {"parent_id", r.parent_id ? json(*r.parent_id) : json(nullptr)},
            {"category", r.category},
            {"length", r.length},
            {"edited", r.edited},
            {"details", r.details},
            {"coords", coords_json(r.coords)}};
  if (r.alpha) j["alpha"] = *r.alpha;
  return j;
}

/// Full record shape used by the event log and snapshots.
inline json record_storage_json(const SentenceRecord& r) {
  json j = record_public_json(r);
  j["embedding"] = to_std(r.embedding);
  return j;
}

inline SentenceRecord record_from_storage_json(const json& j) {
  SentenceRecord r;
  r.id = j.at("id").get<SentenceId>();
  r.text = j.at("text").get<std::string>();
  r.embedding = to_vector(j.at("embedding").get<std::vector<double>>());
  r.coords = coords_from_json(j.at("coords"));
  r.kind = kind_from_string(j.at("kind").get<std::string>());
  r.method = method_from_string(j.at("method").get<std::string>());
  if (!j.at("parent_id").is_null()) r.parent_id = j.at("parent_id").get<SentenceId>();
  r.details = j.value("details", json::object());
  r.category = j.at("category").get<std::string>();
  r.length = j.at("length").get<int>();
  r.edited = j.value("edited", false);
  if (j.contains("alpha") && !j.at("alpha").is_null()) r.alpha = j.at("alpha").get<double>();
  return r;
}

inline json round_json(const AugmentationRound& r) {
  return {{"round_id", r.round_id},
          {"parent_id", r.parent_id},
          {"method", to_string(r.method)},
          {"details", r.details},
          {"child_ids", r.child_ids},
          {"deleted", std::vector<SentenceId>(r.deleted.begin(), r.deleted.end())},
          {"created_at", r.created_at}};
}

inline AugmentationRound round_from_json(const json& j) {
  AugmentationRound r;
  r.round_id = j.at("round_id").get<std::int64_t>();
  r.parent_id = j.at("parent_id").get<SentenceId>();
  r.method = method_from_string(j.at("method").get<std::string>());
  r.details = j.value("details", json::object());
  r.child_ids = j.at("child_ids").get<std::vector<SentenceId>>();
  for (auto id : j.value("deleted", std::vector<SentenceId>{})) r.deleted.insert(id);
  r.created_at = j.value("created_at", std::int64_t{0});
  return r;
}

inline json stats_json(const DatasetStats& s) {
  json cats = json::object();
  for (const auto& [k, v] : s.category_counts) cats[k] = v;
  json lens = json::object();
  for (const auto& [k, v] : s.length_counts) lens[std::to_string(k)] = v;
  return {{"total_sentences", s.total_sentences},
          {"total_categories", s.total_categories},
          {"mean_sentences_per_category", s.mean_sentences_per_category},
          {"mean_sentence_length", s.mean_sentence_length},
          {"original_count", s.original_count},
          {"generated_count", s.generated_count},
          {"generated_by_method", s.generated_by_method},
          {"category_counts", cats},
          {"length_counts", lens}};
}

inline json projection_json(const ProjectionModel& m) {
  std::vector<double> comps(m.components.data(), m.components.data() + m.components.size());
  return {{"kind", to_string(m.kind)},
          {"mean", to_std(m.mean)},
          {"components", comps},
          {"explained_variance", to_std(m.explained_variance)},
          {"version", m.version},
          {"fitted_on", m.fitted_on},
          {"degenerate", m.degenerate},
          {"external_token", m.external_token}};
}

inline ProjectionModel projection_from_json(const json& j) {
  ProjectionModel m;
  m.kind = j.at("kind").get<std::string>() == "pca" ? ProjectionKind::Pca : ProjectionKind::External;
  m.mean = to_vector(j.at("mean").get<std::vector<double>>());
  const auto comps = j.at("components").get<std::vector<double>>();
  m.components = RowMatrix::Zero(2, m.mean.size());
  if (static_cast<Eigen::Index>(comps.size()) == m.components.size())
    m.components = Eigen::Map<const RowMatrix>(comps.data(), 2, m.mean.size());
  m.explained_variance = to_vector(j.value("explained_variance", std::vector<double>{0.0, 0.0}));
  m.version = j.at("version").get<int>();
  m.fitted_on = j.value("fitted_on", "");
  m.degenerate = j.value("degenerate", false);
  m.external_token = j.value("external_token", "");
  return m;
}

inline FilterSpec filter_from_json(const json& j) {
  FilterSpec f;
  for (const auto& k : j.value("kinds", std::vector<std::string>{})) f.kinds.insert(kind_from_string(k));
  for (const auto& m : j.value("methods", std::vector<std::string>{})) f.methods.insert(method_from_string(m));
  for (const auto& c : j.value("categories", std::vector<std::string>{})) f.categories.insert(c);
  if (j.contains("min_length") && !j["min_length"].is_null()) f.min_length = j["min_length"].get<int>();
  if (j.contains("max_length") && !j["max_length"].is_null()) f.max_length = j["max_length"].get<int>();
  return f;
}

inline std::int64_t now_millis() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

}  // namespace amplio
