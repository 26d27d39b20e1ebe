#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "amplio/concepts.hpp"
#include "amplio/embedding.hpp"
#include "amplio/knn.hpp"
#include "amplio/projection.hpp"
#include "amplio/providers.hpp"

namespace amplio {

enum class Method { None, Concepts, Interpolation, Llm };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::None: return "none";
    case Method::Concepts: return "concepts";
    case Method::Interpolation: return "interpolation";
    case Method::Llm: return "llm";
  }
  return "none";
}

inline Method method_from_string(std::string_view s) {
  if (s == "none") return Method::None;
  if (s == "concepts") return Method::Concepts;
  if (s == "interpolation") return Method::Interpolation;
  if (s == "llm") return Method::Llm;
  fail(ErrorCode::InvalidInput, "unknown method '" + std::string(s) + "'");
}

inline constexpr int kMaxGenerated = 10;
inline constexpr std::array<double, 4> kEditWeights{-1.0, -0.5, 0.5, 1.0};

inline void validate_generation_count(int n) {
  if (n < 1 || n > kMaxGenerated) {
    fail(ErrorCode::InvalidInput, "generation count must be between 1 and " + std::to_string(kMaxGenerated) + ", got " +
                                      std::to_string(n));
  }
}

struct ConceptEdit {
  int concept_index = 0;
  double weight = 1.0;

  void validate(const ConceptDictionary& dict) const {
    if (std::find(kEditWeights.begin(), kEditWeights.end(), weight) == kEditWeights.end())
      fail(ErrorCode::InvalidInput, "concept weight must be one of -1, -0.5, 0.5, 1");
    dict.at(concept_index);
  }
};

/// The sentence being augmented.
struct SourceSentence {
  SentenceId id = 0;
  std::string text;
  Vector embedding;
  std::string category;
};

/// Second interpolation endpoint: an existing sentence or user-entered text.
struct InterpolationTarget {
  std::optional<SentenceId> id;
  std::string text;
  Vector embedding;  // filled by the caller for ids; embedded here for free text when empty
};

struct GeneratedSentence {
  std::string text;
  Vector embedding;
  std::optional<double> alpha;
  nlohmann::json details;
};

struct AugmentationContext {
  const Embedder& embedder;
  const LLMClient& llm;
  const Inverter* inverter = nullptr;
  std::string corpus_token = "default";
};

/// s' = normalize(s + sum_j w_j c_j).
inline Vector apply_concept_edits(const Vector& s, const std::vector<ConceptEdit>& edits, const ConceptDictionary& dict) {
  if (edits.empty()) fail(ErrorCode::InvalidInput, "at least one concept edit is required");
  Vector out = s;
  for (const auto& e : edits) {
    e.validate(dict);
    const auto& c = dict.at(e.concept_index).vector;
    require_same_dim(s, c);
    out += e.weight * c;
  }
  return normalize(out);
}

/// alpha_i = i / (n + 1), i = 1..n.
inline std::vector<double> interpolation_alphas(int n) {
  validate_generation_count(n);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) out.push_back(static_cast<double>(i) / static_cast<double>(n + 1));
  return out;
}

struct FixResult {
  std::vector<std::string> texts;
  bool unfixed = false;
};

/// One fix request per text. Any provider failure returns the inputs unchanged.
inline FixResult fix_grammar(const std::vector<std::string>& texts, const LLMClient& llm) {
  if (texts.empty()) fail(ErrorCode::InvalidInput, "nothing to fix");
  FixResult out;
  try {
    for (const auto& t : texts) {
      auto reply = text::squish(llm_complete(llm, prompts::fix(t)));
      out.texts.push_back(std::move(reply));
    }
  } catch (const ProviderError&) {
    return {texts, true};
  }
  return out;
}

namespace detail {

inline std::vector<GeneratedSentence> embed_outputs(const std::vector<std::string>& texts, const Embedder& embedder) {
  std::vector<GeneratedSentence> out;
  const auto vs = embedder.embed_batch(texts);
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back({texts[i], normalize(vs[i]), std::nullopt, {}});
  return out;
}

inline const Inverter& require_inverter(const AugmentationContext& ctx) {
  if (!ctx.inverter) throw ProviderError(ProviderErrorKind::NotConfigured, "no embedding inverter configured");
  return *ctx.inverter;
}

}  // namespace detail

inline std::vector<GeneratedSentence> augment_with_concepts(const SourceSentence& x, const std::vector<ConceptEdit>& edits,
                                                            int n, const ConceptDictionary& dict,
                                                            const AugmentationContext& ctx) {
  validate_generation_count(n);
  const Vector edited = apply_concept_edits(x.embedding, edits, dict);
  const auto inverted = detail::require_inverter(ctx).invert({edited, ctx.corpus_token});
  const auto fixed = fix_grammar({inverted}, ctx.llm);

  std::vector<std::string> texts{fixed.texts.front()};
  if (n > 1) {
    auto more = llm_complete_list(ctx.llm, prompts::variations(texts.front(), n - 1), n - 1);
    texts.insert(texts.end(), more.begin(), more.end());
  }

  nlohmann::json edit_log = nlohmann::json::array();
  for (const auto& e : edits)
    edit_log.push_back({{"index", e.concept_index}, {"label", dict.at(e.concept_index).label}, {"weight", e.weight}});

  auto out = detail::embed_outputs(texts, ctx.embedder);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].details = {{"edits", edit_log}, {"inverted", inverted}, {"variant", i}, {"unfixed", fixed.unfixed}};
  }
  return out;
}

inline std::vector<GeneratedSentence> augment_by_interpolation(const SourceSentence& x, InterpolationTarget y, int n,
                                                               const AugmentationContext& ctx) {
  validate_generation_count(n);
  if (y.embedding.size() == 0) {
    require_text(y.text);
    y.embedding = normalize(ctx.embedder.embed(y.text));
  }
  require_same_dim(x.embedding, y.embedding);
  if (y.id && *y.id == x.id) fail(ErrorCode::DegenerateInterpolation, "source and target are the same sentence");
  const Vector delta = y.embedding - x.embedding;
  // Re-normalizing a unit vector can move its last bits, so compare with a tolerance.
  if (delta.norm() <= 1e-12) fail(ErrorCode::DegenerateInterpolation, "source and target embeddings are identical");

  const auto& inverter = detail::require_inverter(ctx);
  const auto alphas = interpolation_alphas(n);
  std::vector<std::string> inverted;
  for (double a : alphas) {
    const Vector v = x.embedding + a * delta;
    inverted.push_back(inverter.invert({normalize(v), ctx.corpus_token}));
  }
  const auto fixed = fix_grammar(inverted, ctx.llm);

  nlohmann::json target = {{"text", y.text}};
  target["id"] = y.id ? nlohmann::json(*y.id) : nlohmann::json(nullptr);
  auto out = detail::embed_outputs(fixed.texts, ctx.embedder);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].alpha = alphas[i];
    out[i].details = {{"target", target}, {"alpha", alphas[i]}, {"inverted", inverted[i]}, {"unfixed", fixed.unfixed}};
  }
  return out;
}

inline std::vector<GeneratedSentence> augment_with_llm(const SourceSentence& x, const std::string& prompt, int n,
                                                       const AugmentationContext& ctx) {
  validate_generation_count(n);
  if (text::trim(prompt).empty()) fail(ErrorCode::InvalidInput, "prompt is empty");
  const auto texts = llm_complete_list(ctx.llm, prompts::generate(x.text, prompt, n), n);
  auto out = detail::embed_outputs(texts, ctx.embedder);
  for (auto& g : out) g.details = {{"prompt", prompt}};
  return out;
}

struct PlacedPoint {
  SentenceId id = 0;
  Point2D coords;
};

struct InterpolationSuggestions {
  SentenceId arrow_head = 0;
  std::vector<SentenceId> candidates;  // Y_sug, arrow head first
};

inline constexpr std::size_t kInterpolationSuggestions = 20;

/// Arrow head = point nearest the click (excluding the source); Y_sug = the
/// points nearest the arrow head in projection space. Ties go to the lower id.
inline InterpolationSuggestions suggest_interpolation_points(const std::vector<PlacedPoint>& points, SentenceId source,
                                                             Point2D click, std::size_t k = kInterpolationSuggestions) {
  if (points.empty()) fail(ErrorCode::EmptyIndex, "no points to suggest from");
  auto dist2 = [](Point2D a, Point2D b) { return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y); };
  auto nearest = [&](Point2D q, std::vector<PlacedPoint> pool) {
    std::stable_sort(pool.begin(), pool.end(), [&](const PlacedPoint& a, const PlacedPoint& b) {
      const double da = dist2(a.coords, q), db = dist2(b.coords, q);
      return da != db ? da < db : a.id < b.id;
    });
    return pool;
  };
  std::vector<PlacedPoint> others;
  for (const auto& p : points)
    if (p.id != source) others.push_back(p);
  if (others.empty()) fail(ErrorCode::EmptyIndex, "no candidate points besides the source");

  const auto head = nearest(click, others).front();
  InterpolationSuggestions out{head.id, {head.id}};
  for (const auto& p : nearest(head.coords, others)) {
    if (out.candidates.size() >= k) break;
    if (p.id != head.id) out.candidates.push_back(p.id);
  }
  return out;
}

struct PromptSuggestions {
  std::vector<std::string> prompts;
  bool static_fallback = false;
};

inline std::vector<std::string> static_prompt_ideas() {
  return {"Rephrase this sentence in a different tone",
          "Change the main subject of this sentence",
          "Add more specific details to this sentence",
          "Rewrite this sentence as a question",
          "Make this sentence shorter and more direct"};
}

/// P_sug: k distinct prompt ideas conditioned on the sentence and its category.
inline PromptSuggestions suggest_prompts(const std::string& sentence, const std::string& category, const LLMClient& llm,
                                         std::size_t k = 5) {
  try {
    const auto items = llm_complete_list(llm, prompts::prompt_ideas(sentence, category, static_cast<int>(k)),
                                         static_cast<int>(k));
    std::vector<std::string> unique;
    for (const auto& s : items)
      if (std::find(unique.begin(), unique.end(), s) == unique.end()) unique.push_back(s);
    if (unique.size() == k) return {unique, false};
  } catch (const ProviderError&) {
  }
  auto fallback = static_prompt_ideas();
  fallback.resize(std::min(k, fallback.size()));
  return {fallback, true};
}

}  // namespace amplio
