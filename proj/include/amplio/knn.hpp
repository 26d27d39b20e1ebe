#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <vector>

#include "amplio/vector.hpp"

namespace amplio {

using SentenceId = std::int64_t;

struct NeighborHit {
  SentenceId sentence_id = 0;
  double score = 0.0;

  friend bool operator==(const NeighborHit&, const NeighborHit&) = default;
};

/// Descending score, ascending id on ties.
inline bool hit_before(const NeighborHit& a, const NeighborHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.sentence_id < b.sentence_id;
}

/// Exact cosine kNN by full scan. Vectors are stored unit-normalized.
class EmbeddingIndex {
 public:
  void add(SentenceId id, const Vector& v) {
    if (!vectors_.empty()) require_same_dim(vectors_.front(), v);
    ids_.push_back(id);
    vectors_.push_back(normalize(v));
  }

  void clear() {
    ids_.clear();
    vectors_.clear();
  }

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  std::vector<NeighborHit> knn(const Vector& query, std::size_t k, const std::set<SentenceId>& exclude = {}) const {
    if (ids_.empty()) fail(ErrorCode::EmptyIndex, "kNN over an empty index");
    if (k == 0) fail(ErrorCode::InvalidInput, "k must be >= 1");
    require_same_dim(vectors_.front(), query);
    const Vector q = normalize(query);
    std::vector<NeighborHit> hits;
    hits.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (exclude.count(ids_[i])) continue;
      hits.push_back({ids_[i], q.dot(vectors_[i])});
    }
    const auto take = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(), hit_before);
    hits.resize(take);
    return hits;
  }

 private:
  std::vector<SentenceId> ids_;
  std::vector<Vector> vectors_;
};

}  // namespace amplio
