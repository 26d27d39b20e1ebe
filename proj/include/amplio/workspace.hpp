#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "amplio/augmentation.hpp"
#include "amplio/checkpoint.hpp"
#include "amplio/concepts.hpp"
#include "amplio/dataset.hpp"
#include "amplio/providers.hpp"

namespace amplio {

/// One "generate" press: method, parent and the method-specific inputs.
struct AugmentRequest {
  Method method = Method::Llm;
  SentenceId parent = 0;
  int n = 1;
  std::vector<ConceptEdit> edits;                                   // concepts
  std::optional<SentenceId> target_id;                              // interpolation
  std::string target_text;                                          // interpolation, user-entered
  std::string prompt;                                               // llm
};

/// Parent reference in a request body: an id or (CLI spec files) an exact text.
using ParentRef = std::variant<SentenceId, std::string>;

inline ParentRef parent_ref_from_json(const json& j) {
  if (j.is_number_integer()) return j.get<SentenceId>();
  if (j.is_string()) return j.get<std::string>();
  fail(ErrorCode::InvalidInput, "parent must be a sentence id or a text");
}

/// An id must exist; a text must match exactly one live record.
inline SentenceId resolve_parent(const DatasetSnapshot& snap, const ParentRef& ref) {
  if (const auto* id = std::get_if<SentenceId>(&ref)) {
    snap.get(*id);
    return *id;
  }
  const auto& want = std::get<std::string>(ref);
  std::optional<SentenceId> found;
  for (const auto& [id, r] : snap.records) {
    if (r->text != want) continue;
    if (found) fail(ErrorCode::InvalidInput, "parent text matches more than one sentence", want);
    found = id;
  }
  if (!found) fail(ErrorCode::NotFound, "no sentence with text '" + want + "'", want);
  return *found;
}

/// Round plus its live child records.
inline json round_with_children_json(const DatasetSnapshot& snap, const AugmentationRound& round) {
  json j = round_json(round);
  json children = json::array();
  for (auto id : round.child_ids)
    if (snap.contains(id)) children.push_back(record_public_json(snap.get(id)));
  j["children"] = std::move(children);
  return j;
}

/// Parse the method-specific part of a request body. The parent is resolved by the caller.
inline AugmentRequest augment_request_from_json(Method method, const json& j) {
  AugmentRequest r;
  r.method = method;
  if (!j.contains("n") || !j["n"].is_number_integer()) fail(ErrorCode::InvalidInput, "'n' (integer) is required");
  r.n = j["n"].get<int>();
  validate_generation_count(r.n);
  switch (method) {
    case Method::Concepts: {
      if (!j.contains("edits") || !j["edits"].is_array() || j["edits"].empty())
        fail(ErrorCode::InvalidInput, "'edits' must be a non-empty array");
      for (const auto& e : j["edits"]) {
        const auto& idx = e.contains("concept") ? e["concept"] : e.at("index");
        r.edits.push_back({idx.get<int>(), e.at("weight").get<double>()});
      }
      break;
    }
    case Method::Interpolation: {
      const json& t = j.contains("target") ? j["target"] : json(nullptr);
      if (t.is_number_integer()) r.target_id = t.get<SentenceId>();
      else if (t.is_object() && t.contains("id") && !t["id"].is_null()) r.target_id = t["id"].get<SentenceId>();
      else if (t.is_object() && t.contains("text")) r.target_text = t["text"].get<std::string>();
      else if (t.is_string()) r.target_text = t.get<std::string>();
      else fail(ErrorCode::InvalidInput, "'target' must be a sentence id or {\"text\": ...}");
      if (!r.target_id && text::trim(r.target_text).empty()) fail(ErrorCode::InvalidInput, "interpolation target text is empty");
      break;
    }
    case Method::Llm: {
      if (!j.contains("prompt") || !j["prompt"].is_string() || text::trim(j["prompt"].get<std::string>()).empty())
        fail(ErrorCode::InvalidInput, "'prompt' must be a non-empty string");
      r.prompt = j["prompt"].get<std::string>();
      break;
    }
    case Method::None: fail(ErrorCode::InvalidInput, "unknown augmentation method");
  }
  return r;
}

inline SourceSentence source_from(const SentenceRecord& r) { return {r.id, r.text, r.embedding, r.category}; }

/// Run one augmentation round end to end and persist it. Any provider failure
/// aborts before anything is written.
inline AugmentationRound run_round(Dataset& ds, const AugmentRequest& req, const ProviderSet& providers) {
  validate_generation_count(req.n);
  const auto snap = ds.snapshot();
  const auto x = source_from(snap->get(req.parent));
  const Inverter* inverter = providers.inverter ? providers.inverter.get() : &ds.lexicon();
  const AugmentationContext ctx{*providers.embedder, *providers.llm, inverter, snap->name};

  std::vector<GeneratedSentence> outputs;
  json details;
  switch (req.method) {
    case Method::Concepts: {
      const auto model = ds.concepts();
      if (!model) fail(ErrorCode::InvalidInput, "dataset has no concept model; train the SAE first");
      outputs = augment_with_concepts(x, req.edits, req.n, model->dictionary, ctx);
      json edits = json::array();
      for (const auto& e : req.edits)
        edits.push_back({{"index", e.concept_index}, {"label", model->dictionary.at(e.concept_index).label}, {"weight", e.weight}});
      details = {{"edits", edits}, {"n", req.n}};
      break;
    }
    case Method::Interpolation: {
      InterpolationTarget y;
      if (req.target_id) {
        const auto& t = snap->get(*req.target_id);
        y = {t.id, t.text, t.embedding};
      } else {
        y.text = req.target_text;
      }
      outputs = augment_by_interpolation(x, y, req.n, ctx);
      json target = {{"text", y.text}, {"id", y.id ? json(*y.id) : json(nullptr)}};
      details = {{"target", target}, {"alphas", interpolation_alphas(req.n)}, {"n", req.n}};
      break;
    }
    case Method::Llm: {
      outputs = augment_with_llm(x, req.prompt, req.n, ctx);
      details = {{"prompt", req.prompt}, {"n", req.n}};
      break;
    }
    case Method::None: fail(ErrorCode::InvalidInput, "unknown augmentation method");
  }
  return ds.add_generated(req.parent, outputs, req.method, std::move(details));
}

struct ConceptView {
  std::vector<ConceptActivation> top;
  ConceptSuggestions suggested;
};

inline constexpr std::size_t kTopConcepts = 10;

/// C_top and C_sug for one sentence. The suggestion seed defaults to the sentence id.
inline ConceptView concepts_for(const Dataset& ds, SentenceId id, std::optional<std::uint64_t> seed = std::nullopt) {
  const auto model = ds.concepts();
  if (!model) fail(ErrorCode::NotFound, "dataset has no concept model; train the SAE first");
  const auto& rec = ds.snapshot()->get(id);
  ConceptView v;
  v.top = top_concepts(model->params, rec.embedding, kTopConcepts);
  if (model->dictionary.size() > v.top.size())
    v.suggested = suggest_concepts(model->dictionary, v.top, kTopConcepts, seed.value_or(static_cast<std::uint64_t>(id)));
  return v;
}

inline std::shared_ptr<const ConceptModel> train_concepts(Dataset& ds, const SAETrainConfig& config,
                                                          const SAEProgress& progress = {}) {
  auto result = sae_train(ds.embedding_matrix(), config, progress);
  auto model = std::make_shared<ConceptModel>();
  model->dictionary = concept_vectors(result.params);
  model->params = std::move(result.params);
  model->config = config;
  model->report = std::move(result.report);
  ds.set_concepts(model);
  return model;
}

inline LabelingReport label_concepts(Dataset& ds, const LLMClient& llm, const SAEProgress& progress = {}) {
  const auto current = ds.concepts();
  if (!current) fail(ErrorCode::NotFound, "dataset has no concept model; train the SAE first");
  auto model = std::make_shared<ConceptModel>(*current);
  const auto report = label_all_concepts(model->dictionary, model->params, ds.label_corpus(), llm, 8, progress);
  ds.set_concepts(model);
  return report;
}

inline bool valid_dataset_name(std::string_view name) {
  if (name.empty() || name.size() > 128 || name.front() == '.') return false;
  for (char c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
  return true;
}

/// All datasets under one data directory, sharing one provider set.
class Workspace {
 public:
  Workspace(std::optional<std::filesystem::path> data_dir, ProviderSet providers,
            std::shared_ptr<const ProjectionBackend> projection = std::make_shared<PcaBackend>())
      : data_dir_(std::move(data_dir)), providers_(std::move(providers)), projection_(std::move(projection)) {
    if (!providers_.embedder || !providers_.llm) fail(ErrorCode::InvalidInput, "workspace needs an embedder and an LLM client");
    if (data_dir_) std::filesystem::create_directories(*data_dir_);
  }

  const ProviderSet& providers() const { return providers_; }
  const std::optional<std::filesystem::path>& data_dir() const { return data_dir_; }

  Dataset::Ptr ingest(const std::string& name, const std::vector<IngestRow>& rows, const IngestOptions& options = {},
                      IngestReport* report = nullptr) {
    if (!valid_dataset_name(name)) fail(ErrorCode::InvalidInput, "dataset name must match [A-Za-z0-9._-]+");
    std::lock_guard lock(mu_);
    if (datasets_.count(name) || (data_dir_ && std::filesystem::exists(*data_dir_ / name / "snapshot.json")))
      fail(ErrorCode::InvalidInput, "dataset '" + name + "' already exists");
    std::optional<std::filesystem::path> dir;
    if (data_dir_) dir = *data_dir_ / name;
    auto ds = Dataset::ingest(name, rows, deps(), options, dir, report);
    datasets_[name] = ds;
    return ds;
  }

  Dataset::Ptr get(const std::string& name) {
    std::lock_guard lock(mu_);
    if (auto it = datasets_.find(name); it != datasets_.end()) return it->second;
    if (data_dir_ && valid_dataset_name(name) && std::filesystem::exists(*data_dir_ / name / "snapshot.json")) {
      auto ds = Dataset::open(*data_dir_ / name, deps());
      datasets_[name] = ds;
      return ds;
    }
    fail(ErrorCode::NotFound, "dataset '" + name + "' not found");
  }

  std::vector<std::string> list() {
    std::set<std::string> names;
    {
      std::lock_guard lock(mu_);
      for (const auto& [n, _] : datasets_) names.insert(n);
    }
    if (data_dir_)
      for (const auto& e : std::filesystem::directory_iterator(*data_dir_))
        if (e.is_directory() && std::filesystem::exists(e.path() / "snapshot.json")) names.insert(e.path().filename().string());
    return {names.begin(), names.end()};
  }

  void flush_all() {
    std::lock_guard lock(mu_);
    for (auto& [_, ds] : datasets_) ds->flush();
  }

 private:
  DatasetDeps deps() const { return {providers_.embedder, providers_.llm, projection_}; }

  std::optional<std::filesystem::path> data_dir_;
  ProviderSet providers_;
  std::shared_ptr<const ProjectionBackend> projection_;
  std::mutex mu_;
  std::map<std::string, Dataset::Ptr> datasets_;
};

}  // namespace amplio
