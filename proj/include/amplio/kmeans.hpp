#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "amplio/providers.hpp"
#include "amplio/vector.hpp"

namespace amplio {

struct KMeansResult {
  std::vector<int> assignment;
  Matrix centroids;  // d x k
  int iterations = 0;
};

/// k-means++ seeding over the columns of `data`.
inline Matrix kmeans_plus_plus(const Matrix& data, int k, std::mt19937_64& rng) {
  const auto n = data.cols();
  Matrix centroids(data.rows(), k);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.col(0) = data.col(first(rng));
  Eigen::VectorXd d2 = (data.colwise() - centroids.col(0)).colwise().squaredNorm().transpose();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        r -= d2[pick];
        if (r <= 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    centroids.col(c) = data.col(pick);
    d2 = d2.cwiseMin((data.colwise() - centroids.col(c)).colwise().squaredNorm().transpose());
  }
  return centroids;
}

/// Lloyd iterations from k-means++ seeds. Deterministic for a given seed.
inline KMeansResult kmeans(const Matrix& data, int k, std::uint64_t seed = 0, int max_iterations = 100) {
  const auto n = data.cols();
  if (n == 0) fail(ErrorCode::InvalidInput, "k-means on empty data");
  if (k < 1 || k > n) fail(ErrorCode::InvalidInput, "k must lie in [1, N]");
  std::mt19937_64 rng(seed);
  KMeansResult r{std::vector<int>(static_cast<std::size_t>(n), -1), kmeans_plus_plus(data, k, rng), 0};

  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (r.centroids.colwise() - data.col(i)).colwise().squaredNorm().minCoeff(&best);
      if (r.assignment[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        r.assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    r.iterations = it + 1;
    if (!changed && it > 0) break;

    Matrix sums = Matrix::Zero(data.rows(), k);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = r.assignment[static_cast<std::size_t>(i)];
      sums.col(c) += data.col(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        r.centroids.col(c) = sums.col(c) / counts[static_cast<std::size_t>(c)];
      } else {
        // Empty cluster: move it onto the point farthest from its centroid.
        Eigen::Index far = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double dd = (data.col(i) - r.centroids.col(r.assignment[static_cast<std::size_t>(i)])).squaredNorm();
          if (dd > best) {
            best = dd;
            far = i;
          }
        }
        r.centroids.col(c) = data.col(far);
      }
    }
  }
  return r;
}

inline int default_cluster_count(std::size_t n) {
  const int k = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n) / 2.0)));
  return std::clamp(k, 1, 30);
}

struct Categorization {
  std::vector<std::string> labels;          // per record
  std::vector<std::string> cluster_labels;  // per cluster
  std::vector<int> assignment;
  bool fallback_names = false;              // LLM failed; clusters named "Cluster i"
};

inline constexpr std::size_t kClusterLabelSamples = 8;

/// Cluster embeddings (columns of `data`) and name each cluster from its
/// members nearest the centroid.
inline Categorization categorize(const Matrix& data, const std::vector<std::string>& texts, std::optional<int> k,
                                 const LLMClient& llm, std::uint64_t seed = 0) {
  const int kk = k.value_or(default_cluster_count(static_cast<std::size_t>(data.cols())));
  auto km = kmeans(data, kk, seed);
  Categorization out;
  out.assignment = km.assignment;
  std::set<std::string> used;
  for (int c = 0; c < kk; ++c) {
    std::vector<std::pair<double, std::size_t>> members;
    for (std::size_t i = 0; i < km.assignment.size(); ++i)
      if (km.assignment[i] == c) members.emplace_back((data.col(static_cast<Eigen::Index>(i)) - km.centroids.col(c)).squaredNorm(), i);
    std::sort(members.begin(), members.end());
    std::vector<std::string> samples;
    for (std::size_t m = 0; m < std::min(kClusterLabelSamples, members.size()); ++m) samples.push_back(texts[members[m].second]);

    std::string name;
    if (!samples.empty()) {
      try {
        name = text::squish(text::lines(llm_complete(llm, prompts::label(samples))).front());
      } catch (const ProviderError&) {
        out.fallback_names = true;
      }
    }
    if (name.empty()) name = "Cluster " + std::to_string(c + 1);
    std::string unique = name;
    for (int suffix = 2; used.count(unique); ++suffix) unique = name + " (" + std::to_string(suffix) + ")";
    used.insert(unique);
    out.cluster_labels.push_back(unique);
  }
  for (int a : km.assignment) out.labels.push_back(out.cluster_labels[static_cast<std::size_t>(a)]);
  return out;
}

}  // namespace amplio
