#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "amplio/knn.hpp"
#include "amplio/providers.hpp"
#include "amplio/sae.hpp"
#include "amplio/text.hpp"

namespace amplio {

inline constexpr const char* kUnlabeled = "(unlabeled)";

struct Concept {
  int index = 0;
  Vector vector;  // unit-norm decoder direction
  std::string label = kUnlabeled;
  std::vector<SentenceId> top_examples;
  bool weak = false;       // corpus never activated it; examples chosen by magnitude pre-activation
  bool unlabeled = true;   // labeling has not succeeded yet
};

struct ConceptActivation {
  int concept_index = 0;
  double score = 0.0;

  friend bool operator==(const ConceptActivation&, const ConceptActivation&) = default;
};

class ConceptDictionary {
 public:
  ConceptDictionary() = default;
  explicit ConceptDictionary(std::vector<Concept> concepts) : concepts_(std::move(concepts)) { rebuild(); }

  std::size_t size() const { return concepts_.size(); }
  bool empty() const { return concepts_.empty(); }
  const Concept& at(int j) const {
    if (j < 0 || static_cast<std::size_t>(j) >= concepts_.size())
      fail(ErrorCode::InvalidInput, "concept index " + std::to_string(j) + " out of range");
    return concepts_[static_cast<std::size_t>(j)];
  }
  Concept& at(int j) { return const_cast<Concept&>(std::as_const(*this).at(j)); }
  const std::vector<Concept>& concepts() const { return concepts_; }
  /// d x F matrix of unit concept vectors.
  const Matrix& vectors() const { return vectors_; }

 private:
  void rebuild() {
    if (concepts_.empty()) return;
    vectors_.resize(concepts_.front().vector.size(), static_cast<Eigen::Index>(concepts_.size()));
    for (std::size_t j = 0; j < concepts_.size(); ++j) vectors_.col(static_cast<Eigen::Index>(j)) = concepts_[j].vector;
  }

  std::vector<Concept> concepts_;
  Matrix vectors_;
};

/// c_j = W_dec[:, j] / ||W_dec[:, j]||.
inline ConceptDictionary concept_vectors(const GatedSAEParams& params) {
  std::vector<Concept> out;
  out.reserve(static_cast<std::size_t>(params.features()));
  for (Eigen::Index j = 0; j < params.features(); ++j) {
    const double n = params.w_dec.col(j).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::DegenerateConcept, "decoder column " + std::to_string(j) + " has zero norm",
                  std::to_string(j));
    }
    Concept c;
    c.index = static_cast<int>(j);
    c.vector = params.w_dec.col(j) / n;
    out.push_back(std::move(c));
  }
  return ConceptDictionary(std::move(out));
}

inline bool activation_before(const ConceptActivation& a, const ConceptActivation& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.concept_index < b.concept_index;
}

/// The k most activated concepts for embedding `s`, descending, ties by index.
inline std::vector<ConceptActivation> top_concepts(const GatedSAEParams& params, const Vector& s, std::size_t k = 10) {
  const Vector f = sae_encode(params, s);
  std::vector<ConceptActivation> acts(static_cast<std::size_t>(f.size()));
  for (Eigen::Index j = 0; j < f.size(); ++j) acts[static_cast<std::size_t>(j)] = {static_cast<int>(j), f[j]};
  const auto take = std::min(k, acts.size());
  std::partial_sort(acts.begin(), acts.begin() + static_cast<std::ptrdiff_t>(take), acts.end(), activation_before);
  acts.resize(take);
  return acts;
}

struct ConceptSuggestions {
  std::vector<int> concepts;  // sampled order
  bool short_pool = false;    // candidate pool had fewer than `count` entries
};

inline constexpr std::size_t kConceptNeighbors = 5;

/// Indices of the `k` concepts nearest to concept `j` by cosine, skipping `exclude`.
inline std::vector<int> concept_neighbors(const ConceptDictionary& dict, int j, std::size_t k,
                                          const std::set<int>& exclude) {
  const Vector sims = dict.vectors().transpose() * dict.at(j).vector;
  std::vector<ConceptActivation> cand;
  for (Eigen::Index i = 0; i < sims.size(); ++i) {
    const int idx = static_cast<int>(i);
    if (idx == j || exclude.count(idx)) continue;
    cand.push_back({idx, sims[i]});
  }
  const auto take = std::min(k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(), activation_before);
  std::vector<int> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back(cand[i].concept_index);
  return out;
}

/// C_sug: seeded uniform sample (without replacement) from the union of each
/// top concept's nearest concept-neighbors, never returning a top concept.
inline ConceptSuggestions suggest_concepts(const ConceptDictionary& dict, const std::vector<ConceptActivation>& c_top,
                                           std::size_t count = 10, std::uint64_t seed = 0) {
  std::set<int> top;
  for (const auto& a : c_top) top.insert(a.concept_index);
  if (dict.size() <= top.size()) fail(ErrorCode::InvalidInput, "dictionary must be larger than the top-concept list");

  std::set<int> pool_set;
  for (const auto& a : c_top)
    for (int n : concept_neighbors(dict, a.concept_index, kConceptNeighbors, top)) pool_set.insert(n);
  std::vector<int> pool(pool_set.begin(), pool_set.end());

  std::mt19937_64 rng(seed);
  const auto take = std::min(count, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(take);
  return {std::move(pool), take < count};
}

/// Sentences an SAE concept is described from.
struct LabelCorpus {
  std::vector<SentenceId> ids;
  std::vector<std::string> texts;
  Matrix embeddings;  // d x N

  std::size_t size() const { return ids.size(); }
};

inline constexpr std::size_t kLabelMaxWords = 12;

namespace detail {

inline std::vector<std::size_t> top_rows(const Eigen::Ref<const Eigen::RowVectorXd>& scores, std::size_t n,
                                         bool positive_only) {
  std::vector<std::size_t> idx;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (!positive_only || scores[i] > 0.0) idx.push_back(static_cast<std::size_t>(i));
  const auto take = std::min(n, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto sa = scores[static_cast<Eigen::Index>(a)], sb = scores[static_cast<Eigen::Index>(b)];
    return sa != sb ? sa > sb : a < b;
  });
  idx.resize(take);
  return idx;
}

inline void apply_label(Concept& c, const LabelCorpus& corpus, const std::vector<std::size_t>& rows, bool weak,
                        const LLMClient& llm) {
  c.weak = weak;
  c.top_examples.clear();
  std::vector<std::string> examples;
  for (auto r : rows) {
    c.top_examples.push_back(corpus.ids[r]);
    examples.push_back(corpus.texts[r]);
  }
  try {
    const auto reply = text::squish(text::lines(llm_complete(llm, prompts::label(examples))).front());
    auto words = text::split_whitespace(reply);
    if (words.size() > kLabelMaxWords) words.resize(kLabelMaxWords);
    c.label = words.empty() ? std::string(kUnlabeled) : text::join(words, " ");
    c.unlabeled = words.empty();
  } catch (const ProviderError&) {
    c.label = kUnlabeled;
    c.unlabeled = true;
    throw;
  }
}

}  // namespace detail

/// Label one concept from its most-activating corpus sentences. A concept the
/// corpus never activates falls back to the highest magnitude pre-activations
/// and is flagged weak. On provider failure the label stays "(unlabeled)" and
/// the ProviderError propagates.
inline std::string label_concept(Concept& target, const GatedSAEParams& params, const LabelCorpus& corpus,
                                 const LLMClient& llm, std::size_t examples_n = 8) {
  if (corpus.size() == 0) fail(ErrorCode::InvalidInput, "labeling corpus is empty");
  const Matrix acts = sae_encode_batch(params, corpus.embeddings);
  const auto j = target.index;
  auto rows = detail::top_rows(acts.row(j), examples_n, true);
  bool weak = rows.empty();
  if (weak) {
    const Eigen::RowVectorXd z = params.w_gate.row(j) * (corpus.embeddings.colwise() - params.b_dec);
    const Eigen::RowVectorXd mag = (std::exp(params.r_mag[j]) * z).array() + params.b_mag[j];
    rows = detail::top_rows(mag, examples_n, false);
  }
  detail::apply_label(target, corpus, rows, weak, llm);
  return target.label;
}

struct LabelingReport {
  int labeled = 0;
  int weak = 0;
  int failed = 0;
};

/// Label every concept; provider failures are counted, not thrown.
inline LabelingReport label_all_concepts(ConceptDictionary& dict, const GatedSAEParams& params, const LabelCorpus& corpus,
                                         const LLMClient& llm, std::size_t examples_n = 8,
                                         const SAEProgress& progress = {}) {
  if (corpus.size() == 0) fail(ErrorCode::InvalidInput, "labeling corpus is empty");
  const Matrix acts = sae_encode_batch(params, corpus.embeddings);
  const Matrix z = params.w_gate * (corpus.embeddings.colwise() - params.b_dec);
  LabelingReport report;
  for (std::size_t j = 0; j < dict.size(); ++j) {
    auto& c = dict.at(static_cast<int>(j));
    const auto row = static_cast<Eigen::Index>(j);
    auto rows = detail::top_rows(acts.row(row), examples_n, true);
    const bool weak = rows.empty();
    if (weak) {
      const Eigen::RowVectorXd mag = (std::exp(params.r_mag[row]) * z.row(row)).array() + params.b_mag[row];
      rows = detail::top_rows(mag, examples_n, false);
    }
    try {
      detail::apply_label(c, corpus, rows, weak, llm);
      ++report.labeled;
      report.weak += weak;
    } catch (const ProviderError&) {
      ++report.failed;
    }
    if (progress) progress(static_cast<double>(j + 1) / static_cast<double>(dict.size()));
  }
  return report;
}

/// Case-insensitive token match against labels, ranked by matched-token count then index.
inline std::vector<int> search_concepts(const ConceptDictionary& dict, std::string_view query) {
  const auto q = text::word_tokens(query);
  const std::set<std::string> wanted(q.begin(), q.end());
  if (wanted.empty()) return {};
  std::vector<std::pair<int, int>> scored;  // (-matches, index)
  for (const auto& c : dict.concepts()) {
    const auto toks = text::word_tokens(c.label);
    const std::set<std::string> have(toks.begin(), toks.end());
    int matches = 0;
    for (const auto& w : wanted) matches += static_cast<int>(have.count(w));
    if (matches > 0) scored.emplace_back(-matches, c.index);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<int> out;
  for (const auto& [neg, idx] : scored) out.push_back(idx);
  return out;
}

}  // namespace amplio
