#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amplio/checkpoint.hpp"
#include "amplio/embedding.hpp"
#include "amplio/ingest.hpp"
#include "amplio/kmeans.hpp"
#include "amplio/knn.hpp"
#include "amplio/projection.hpp"
#include "amplio/providers.hpp"
#include "amplio/records.hpp"

namespace amplio {

struct Lineage {
  std::vector<SentenceId> ancestors;  // nearest parent first
  std::vector<SentenceId> children;   // newest first
};

/// Immutable view of one dataset version. Readers hold it via shared_ptr and
/// never block the writer.
struct DatasetSnapshot {
  std::string name;
  std::uint64_t version = 0;
  int dim = 0;
  std::map<SentenceId, std::shared_ptr<const SentenceRecord>> records;
  std::vector<std::shared_ptr<const AugmentationRound>> rounds;  // ascending round_id
  std::map<SentenceId, std::optional<SentenceId>> tombstones;     // deleted id -> its parent
  std::shared_ptr<const ProjectionModel> projection;
  StatsAccumulator accumulator;
  SentenceId next_id = 0;
  std::int64_t next_round_id = 1;
  bool clustered = false;

  const SentenceRecord& get(SentenceId id) const {
    auto it = records.find(id);
    if (it == records.end()) fail(ErrorCode::NotFound, "sentence " + std::to_string(id) + " not found");
    return *it->second;
  }
  bool contains(SentenceId id) const { return records.count(id) > 0; }

  DatasetStats stats() const { return accumulator.stats(); }

  std::vector<SentenceId> filter(const FilterSpec& spec) const {
    std::vector<SentenceId> out;
    for (const auto& [id, r] : records)
      if (spec.matches(*r)) out.push_back(id);
    return out;
  }

  /// Rounds newest first, optionally restricted to one parent.
  std::vector<std::shared_ptr<const AugmentationRound>> history(std::optional<SentenceId> parent = std::nullopt) const {
    std::vector<std::shared_ptr<const AugmentationRound>> out;
    for (auto it = rounds.rbegin(); it != rounds.rend(); ++it)
      if (!parent || (*it)->parent_id == *parent) out.push_back(*it);
    return out;
  }

  /// Live children of `parent`, newest first.
  std::vector<SentenceId> children(SentenceId parent) const {
    std::vector<SentenceId> out;
    for (const auto& r : history(parent))
      for (auto it = r->child_ids.rbegin(); it != r->child_ids.rend(); ++it)
        if (!r->deleted.count(*it)) out.push_back(*it);
    return out;
  }

  Lineage lineage(SentenceId id) const {
    Lineage l;
    std::optional<SentenceId> cur = get(id).parent_id;
    while (cur) {
      l.ancestors.push_back(*cur);
      if (auto it = records.find(*cur); it != records.end()) cur = it->second->parent_id;
      else if (auto t = tombstones.find(*cur); t != tombstones.end()) cur = t->second;
      else cur.reset();
    }
    l.children = children(id);
    return l;
  }

  std::vector<NeighborHit> neighbors(SentenceId id, std::size_t k = 10) const {
    const auto& self = get(id);
    return index().knn(self.embedding, k, {id});
  }

  std::vector<NeighborHit> knn(const Vector& query, std::size_t k, const std::set<SentenceId>& exclude = {}) const {
    return index().knn(query, k, exclude);
  }

  std::vector<SentenceId> same_category(SentenceId id) const {
    const auto& cat = get(id).category;
    std::vector<SentenceId> out;
    for (const auto& [rid, r] : records)
      if (rid != id && r->category == cat) out.push_back(rid);
    return out;
  }

  std::vector<PlacedPoint> placed_points() const {
    std::vector<PlacedPoint> out;
    out.reserve(records.size());
    for (const auto& [id, r] : records) out.push_back({id, r->coords});
    return out;
  }

  /// Unit-norm mean direction of each category's embeddings.
  std::map<std::string, Vector> category_centroids() const {
    std::map<std::string, Vector> sums;
    for (const auto& [id, r] : records) {
      auto [it, inserted] = sums.try_emplace(r->category, Vector::Zero(dim));
      it->second += r->embedding;
    }
    return sums;
  }

  /// Category whose centroid has the highest cosine with `v`; first name wins ties.
  std::string nearest_category(const Vector& v) const {
    std::string best;
    double best_score = -2.0;
    for (const auto& [name, c] : category_centroids()) {
      if (!(c.norm() > 0.0)) continue;
      const double s = cosine(v, c);
      if (s > best_score) {
        best_score = s;
        best = name;
      }
    }
    return best;
  }

  const EmbeddingIndex& index() const {
    std::call_once(index_cache_.once, [this] {
      auto idx = std::make_shared<EmbeddingIndex>();
      for (const auto& [id, r] : records) idx->add(id, r->embedding);
      index_cache_.index = std::move(idx);
    });
    return *index_cache_.index;
  }

 private:
  struct LazyIndex {
    std::once_flag once;
    std::shared_ptr<const EmbeddingIndex> index;
    LazyIndex() = default;
    LazyIndex(const LazyIndex&) {}
    LazyIndex& operator=(const LazyIndex&) { return *this; }
  };
  mutable LazyIndex index_cache_;
};

inline void export_jsonl(const DatasetSnapshot& snap, const FilterSpec& spec, std::ostream& out) {
  for (auto id : snap.filter(spec)) out << record_public_json(snap.get(id)).dump() << '\n';
}

struct DatasetDeps {
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<const LLMClient> llm;
  std::shared_ptr<const ProjectionBackend> projection = std::make_shared<PcaBackend>();
};

struct IngestOptions {
  std::optional<int> clusters;
  std::uint64_t seed = 0;
};

struct IngestReport {
  std::size_t rows = 0;
  bool clustered = false;
  bool fallback_cluster_names = false;
  std::vector<SentenceId> duplicates;  // ids whose exact text appeared earlier in the file
};

/// One dataset: records, lineage, projection and the concept model, with
/// single-writer mutation and an append-only event log on disk.
class Dataset {
 public:
  static constexpr std::size_t kSnapshotEvery = 64;

  using Ptr = std::shared_ptr<Dataset>;

  /// Embed, project and categorize `rows`; ids follow file order.
  static Ptr ingest(const std::string& name, const std::vector<IngestRow>& rows, DatasetDeps deps,
                    const IngestOptions& options = {}, std::optional<std::filesystem::path> dir = std::nullopt,
                    IngestReport* report = nullptr) {
    if (rows.size() < kMinIngestRows) fail(ErrorCode::IngestError, "need at least 3 rows");
    if (name.empty()) fail(ErrorCode::InvalidInput, "dataset name is empty");
    auto ds = Ptr(new Dataset(std::move(deps), std::move(dir)));

    std::vector<std::string> texts;
    for (const auto& r : rows) texts.push_back(r.text);
    const auto vs = ds->deps_.embedder->embed_batch(texts);
    const int d = ds->deps_.embedder->dim();
    Matrix data(d, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < vs.size(); ++i) {
      if (vs[i].size() != d) fail(ErrorCode::DimensionError, "embedder returned a vector of the wrong dimension");
      data.col(static_cast<Eigen::Index>(i)) = normalize(vs[i]);
    }

    IngestReport rep;
    rep.rows = rows.size();
    std::vector<std::string> categories(rows.size());
    bool any_category = false;
    for (const auto& r : rows) any_category |= r.category.has_value();
    if (any_category) {
      for (std::size_t i = 0; i < rows.size(); ++i) categories[i] = rows[i].category.value_or("Uncategorized");
    } else {
      auto cat = categorize(data, texts, options.clusters, *ds->deps_.llm, options.seed);
      categories = std::move(cat.labels);
      rep.clustered = true;
      rep.fallback_cluster_names = cat.fallback_names;
    }

    auto model = ds->deps_.projection->fit(data);
    model.version = 1;
    model.fitted_on = name;
    const auto coords = ds->deps_.projection->project(model, data);

    auto snap = std::make_shared<DatasetSnapshot>();
    snap->name = name;
    snap->version = 1;
    snap->dim = d;
    snap->clustered = rep.clustered;
    snap->projection = std::make_shared<ProjectionModel>(std::move(model));
    std::map<std::string, SentenceId> seen;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto rec = std::make_shared<SentenceRecord>();
      rec->id = static_cast<SentenceId>(i);
      rec->text = rows[i].text;
      rec->embedding = data.col(static_cast<Eigen::Index>(i));
      rec->coords = coords[i];
      rec->category = categories[i];
      rec->length = text::word_count(rec->text);
      if (!seen.emplace(rec->text, rec->id).second) rep.duplicates.push_back(rec->id);
      snap->accumulator.add(*rec);
      snap->records.emplace(rec->id, std::move(rec));
    }
    snap->next_id = static_cast<SentenceId>(rows.size());
    ds->snapshot_ = std::move(snap);
    ds->build_lexicon();
    if (ds->dir_) {
      std::filesystem::create_directories(*ds->dir_);
      ds->write_snapshot_file();
    }
    if (report) *report = std::move(rep);
    return ds;
  }

  /// Load snapshot.json and replay events.jsonl from `dir`.
  static Ptr open(const std::filesystem::path& dir, DatasetDeps deps) {
    auto ds = Ptr(new Dataset(std::move(deps), dir));
    std::ifstream in(dir / "snapshot.json");
    if (!in) fail(ErrorCode::NotFound, "no dataset at " + dir.string(), dir.string());
    ds->snapshot_ = snapshot_from_json(json::parse(in));
    std::ifstream events(dir / "events.jsonl");
    std::string line;
    auto snap = std::make_shared<DatasetSnapshot>(*ds->snapshot_);
    while (std::getline(events, line)) {
      if (text::trim(line).empty()) continue;
      json ev;
      try {
        ev = json::parse(line);
      } catch (const json::parse_error&) {
        break;  // torn final write
      }
      if (ev.at("version").get<std::uint64_t>() <= snap->version) continue;
      apply_event(*snap, ev);
      ++ds->events_since_snapshot_;
    }
    ds->snapshot_ = std::move(snap);
    ds->build_lexicon();
    if (std::filesystem::exists(dir / "sae.bin")) ds->load_concepts();
    return ds;
  }

  std::shared_ptr<const DatasetSnapshot> snapshot() const {
    std::lock_guard lock(publish_mu_);
    return snapshot_;
  }

  const std::string& name() const { return snapshot()->name; }
  const DatasetDeps& deps() const { return deps_; }
  const std::optional<std::filesystem::path>& dir() const { return dir_; }

  /// Nearest-text inversion lexicon over the original sentences.
  const MockInverter& lexicon() const { return *lexicon_; }

  AugmentationRound add_generated(SentenceId parent_id, const std::vector<GeneratedSentence>& outputs, Method method,
                                  json details = json::object()) {
    if (outputs.empty()) fail(ErrorCode::InvalidInput, "no generated sentences to add");
    if (method == Method::None) fail(ErrorCode::InvalidInput, "generated sentences need a method");
    std::lock_guard writer(writer_mu_);
    const auto cur = snapshot();
    cur->get(parent_id);

    Matrix data(cur->dim, static_cast<Eigen::Index>(outputs.size()));
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      require_text(outputs[i].text);
      require_dim(outputs[i].embedding, cur->dim);
      data.col(static_cast<Eigen::Index>(i)) = normalize(outputs[i].embedding);
    }
    const auto coords = deps_.projection->project(*cur->projection, data);

    json records = json::array();
    AugmentationRound round;
    round.round_id = cur->next_round_id;
    round.parent_id = parent_id;
    round.method = method;
    round.details = std::move(details);
    round.created_at = now_millis();
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      SentenceRecord r;
      r.id = cur->next_id + static_cast<SentenceId>(i);
      r.text = outputs[i].text;
      r.embedding = data.col(static_cast<Eigen::Index>(i));
      r.coords = coords[i];
      r.kind = RecordKind::Generated;
      r.method = method;
      r.parent_id = parent_id;
      r.details = outputs[i].details.is_null() ? json::object() : outputs[i].details;
      r.category = cur->nearest_category(r.embedding);
      r.length = text::word_count(r.text);
      r.alpha = outputs[i].alpha;
      round.child_ids.push_back(r.id);
      records.push_back(record_storage_json(r));
    }
    commit(*cur, {{"type", "add"}, {"round", round_json(round)}, {"records", records}});
    return round;
  }

  SentenceRecord edit_sentence(SentenceId id, const std::string& new_text) {
    std::lock_guard writer(writer_mu_);
    const auto cur = snapshot();
    SentenceRecord r = cur->get(id);
    if (r.kind != RecordKind::Generated) fail(ErrorCode::Forbidden, "original sentences cannot be edited");
    if (text::trim(new_text).empty()) fail(ErrorCode::InvalidInput, "edited text is empty");
    r.text = new_text;
    const Vector e = normalize(deps_.embedder->embed(new_text));
    if (e != r.embedding) {
      r.embedding = e;
      Matrix m = e;
      r.coords = deps_.projection->project(*cur->projection, m).front();
    }
    r.length = text::word_count(new_text);
    r.edited = true;
    commit(*cur, {{"type", "edit"}, {"record", record_storage_json(r)}});
    return r;
  }

  /// Remove generated records atomically; any original or unknown id aborts the batch.
  std::size_t delete_sentences(const std::vector<SentenceId>& ids) {
    std::lock_guard writer(writer_mu_);
    const auto cur = snapshot();
    std::set<SentenceId> unique(ids.begin(), ids.end());
    for (auto id : unique) {
      const auto& r = cur->get(id);
      if (r.kind == RecordKind::Original)
        fail(ErrorCode::Forbidden, "sentence " + std::to_string(id) + " is an original and cannot be deleted");
    }
    if (unique.empty()) return 0;
    commit(*cur, {{"type", "delete"}, {"ids", std::vector<SentenceId>(unique.begin(), unique.end())}});
    return unique.size();
  }

  /// Refit the projection on all current records and recompute every coordinate.
  ProjectionModel refit() {
    std::lock_guard writer(writer_mu_);
    const auto cur = snapshot();
    Matrix data(cur->dim, static_cast<Eigen::Index>(cur->records.size()));
    std::vector<SentenceId> ids;
    for (const auto& [id, r] : cur->records) {
      data.col(static_cast<Eigen::Index>(ids.size())) = r->embedding;
      ids.push_back(id);
    }
    auto model = deps_.projection->fit(data);
    model.version = cur->projection->version + 1;
    model.fitted_on = cur->name;
    const auto coords = deps_.projection->project(model, data);
    json cj = json::object();
    for (std::size_t i = 0; i < ids.size(); ++i) cj[std::to_string(ids[i])] = coords_json(coords[i]);
    commit(*cur, {{"type", "refit"}, {"model", projection_json(model)}, {"coords", cj}});
    return model;
  }

  /// Write a full snapshot and truncate the event log.
  void flush() {
    std::lock_guard writer(writer_mu_);
    if (dir_) write_snapshot_file();
  }

  std::shared_ptr<const ConceptModel> concepts() const {
    std::lock_guard lock(publish_mu_);
    return concepts_;
  }

  void set_concepts(std::shared_ptr<const ConceptModel> model) {
    if (dir_ && model) {
      save_checkpoint(*dir_ / "sae.bin", model->params, model->config, model->report);
      save_labels(*dir_ / "concepts.json", model->dictionary);
    }
    std::lock_guard lock(publish_mu_);
    concepts_ = std::move(model);
    ++concepts_generation_;
  }

  /// Bumped whenever the concept model or its labels change.
  std::uint64_t concepts_generation() const {
    std::lock_guard lock(publish_mu_);
    return concepts_generation_;
  }

  /// Corpus for concept labeling: every current record.
  LabelCorpus label_corpus() const {
    const auto snap = snapshot();
    LabelCorpus c;
    c.embeddings.resize(snap->dim, static_cast<Eigen::Index>(snap->records.size()));
    for (const auto& [id, r] : snap->records) {
      c.embeddings.col(static_cast<Eigen::Index>(c.ids.size())) = r->embedding;
      c.ids.push_back(id);
      c.texts.push_back(r->text);
    }
    return c;
  }

  Matrix embedding_matrix() const { return label_corpus().embeddings; }

  // -------------------------------------------------------------------------
  // Event application (shared by live mutation and replay)
  // -------------------------------------------------------------------------

  static void apply_event(DatasetSnapshot& s, const json& ev) {
    const auto type = ev.at("type").get<std::string>();
    if (type == "add") {
      auto round = std::make_shared<AugmentationRound>(round_from_json(ev.at("round")));
      for (const auto& rj : ev.at("records")) {
        auto rec = std::make_shared<SentenceRecord>(record_from_storage_json(rj));
        s.accumulator.add(*rec);
        s.next_id = std::max(s.next_id, rec->id + 1);
        s.records[rec->id] = std::move(rec);
      }
      s.next_round_id = std::max(s.next_round_id, round->round_id + 1);
      s.rounds.push_back(std::move(round));
    } else if (type == "edit") {
      auto rec = std::make_shared<SentenceRecord>(record_from_storage_json(ev.at("record")));
      s.accumulator.remove(s.get(rec->id));
      s.accumulator.add(*rec);
      s.records[rec->id] = std::move(rec);
    } else if (type == "delete") {
      std::set<SentenceId> ids;
      for (auto id : ev.at("ids").get<std::vector<SentenceId>>()) {
        const auto& r = s.get(id);
        s.tombstones[id] = r.parent_id;
        s.accumulator.remove(r);
        s.records.erase(id);
        ids.insert(id);
      }
      for (auto& rp : s.rounds) {
        bool touched = false;
        for (auto c : rp->child_ids) touched |= ids.count(c) > 0;
        if (!touched) continue;
        auto copy = std::make_shared<AugmentationRound>(*rp);
        for (auto c : copy->child_ids)
          if (ids.count(c)) copy->deleted.insert(c);
        rp = std::move(copy);
      }
    } else if (type == "refit") {
      s.projection = std::make_shared<ProjectionModel>(projection_from_json(ev.at("model")));
      for (const auto& [key, cj] : ev.at("coords").items()) {
        const auto id = std::stoll(key);
        auto rec = std::make_shared<SentenceRecord>(s.get(id));
        rec->coords = coords_from_json(cj);
        s.records[id] = std::move(rec);
      }
    } else {
      fail(ErrorCode::IoError, "unknown event type '" + type + "'");
    }
    s.version = ev.at("version").get<std::uint64_t>();
  }

  static json snapshot_json(const DatasetSnapshot& s) {
    json records = json::array();
    for (const auto& [id, r] : s.records) records.push_back(record_storage_json(*r));
    json rounds = json::array();
    for (const auto& r : s.rounds) rounds.push_back(round_json(*r));
    json tomb = json::array();
    for (const auto& [id, parent] : s.tombstones) tomb.push_back({id, parent ? json(*parent) : json(nullptr)});
    return {{"name", s.name},           {"version", s.version},           {"dim", s.dim},
            {"records", records},       {"rounds", rounds},               {"tombstones", tomb},
            {"projection", projection_json(*s.projection)},               {"next_id", s.next_id},
            {"next_round_id", s.next_round_id},                           {"clustered", s.clustered}};
  }

  static std::shared_ptr<DatasetSnapshot> snapshot_from_json(const json& j) {
    auto s = std::make_shared<DatasetSnapshot>();
    s->name = j.at("name").get<std::string>();
    s->version = j.at("version").get<std::uint64_t>();
    s->dim = j.at("dim").get<int>();
    for (const auto& rj : j.at("records")) {
      auto rec = std::make_shared<SentenceRecord>(record_from_storage_json(rj));
      s->accumulator.add(*rec);
      s->records.emplace(rec->id, std::move(rec));
    }
    for (const auto& rj : j.at("rounds")) s->rounds.push_back(std::make_shared<AugmentationRound>(round_from_json(rj)));
    for (const auto& t : j.at("tombstones"))
      s->tombstones[t.at(0).get<SentenceId>()] = t.at(1).is_null() ? std::nullopt : std::optional(t.at(1).get<SentenceId>());
    s->projection = std::make_shared<ProjectionModel>(projection_from_json(j.at("projection")));
    s->next_id = j.at("next_id").get<SentenceId>();
    s->next_round_id = j.at("next_round_id").get<std::int64_t>();
    s->clustered = j.value("clustered", false);
    return s;
  }

 private:
  Dataset(DatasetDeps deps, std::optional<std::filesystem::path> dir) : deps_(std::move(deps)), dir_(std::move(dir)) {
    if (!deps_.embedder || !deps_.llm || !deps_.projection) fail(ErrorCode::InvalidInput, "dataset dependencies are incomplete");
  }

  void commit(const DatasetSnapshot& cur, json ev) {
    ev["version"] = cur.version + 1;
    auto next = std::make_shared<DatasetSnapshot>(cur);
    apply_event(*next, ev);
    if (dir_) {
      std::ofstream log(*dir_ / "events.jsonl", std::ios::app);
      if (!log) fail(ErrorCode::IoError, "cannot append to event log in " + dir_->string(), dir_->string());
      log << ev.dump() << '\n';
      log.flush();
    }
    {
      std::lock_guard lock(publish_mu_);
      snapshot_ = std::move(next);
    }
    if (dir_ && ++events_since_snapshot_ >= kSnapshotEvery) write_snapshot_file();
  }

  void write_snapshot_file() {
    const auto snap = snapshot();
    const auto tmp = *dir_ / "snapshot.json.tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string(), tmp.string());
      out << snapshot_json(*snap).dump();
    }
    std::filesystem::rename(tmp, *dir_ / "snapshot.json");
    std::ofstream(*dir_ / "events.jsonl", std::ios::trunc);
    events_since_snapshot_ = 0;
  }

  void build_lexicon() {
    auto inv = std::make_shared<MockInverter>(std::vector<MockInverter::Entry>{}, snapshot_->name);
    for (const auto& [id, r] : snapshot_->records)
      if (r->kind == RecordKind::Original) inv->add({id, r->text, r->embedding});
    lexicon_ = std::move(inv);
  }

  void load_concepts() {
    auto ck = load_checkpoint(*dir_ / "sae.bin");
    auto model = std::make_shared<ConceptModel>();
    model->dictionary = concept_vectors(ck.params);
    if (std::filesystem::exists(*dir_ / "concepts.json")) load_labels(*dir_ / "concepts.json", model->dictionary);
    model->params = std::move(ck.params);
    model->config = ck.config;
    model->report = std::move(ck.report);
    concepts_ = std::move(model);
  }

  DatasetDeps deps_;
  std::optional<std::filesystem::path> dir_;
  std::mutex writer_mu_;
  mutable std::mutex publish_mu_;
  std::shared_ptr<const DatasetSnapshot> snapshot_;
  std::shared_ptr<const ConceptModel> concepts_;
  std::shared_ptr<const MockInverter> lexicon_;
  std::size_t events_since_snapshot_ = 0;
  std::uint64_t concepts_generation_ = 0;
};

}  // namespace amplio
