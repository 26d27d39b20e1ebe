#pragma once

// Shared fixtures and independent reference implementations for the unit and
// acceptance suites. Oracles here deliberately avoid the library's own helpers.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "amplio/augmentation.hpp"
#include "amplio/ingest.hpp"
#include "amplio/sae.hpp"

namespace amplio::testing {

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

struct Topic {
  const char* name;
  std::vector<const char*> subjects, verbs, objects, endings;
};

inline const std::vector<Topic>& topics() {
  static const std::vector<Topic> t = {
      {"cooking",
       {"The chef", "My grandmother", "A young baker", "The line cook", "Our neighbor", "The food critic", "A student",
        "The caterer"},
       {"roasted", "seasoned", "simmered", "chopped", "baked", "grilled", "whisked", "plated"},
       {"the garlic", "fresh tomatoes", "a pot of lentils", "the sourdough", "spiced pumpkin", "a tray of peppers",
        "the lamb shoulder", "wild mushrooms"},
       {"before dinner", "for the festival", "with olive oil", "over low heat", "in the old oven", "for the guests",
        "at dawn", "with rosemary"}},
      {"travel",
       {"The pilot", "A backpacker", "Our tour guide", "The ferry captain", "My cousin", "The conductor",
        "A photographer", "The hiker"},
       {"crossed", "explored", "mapped", "visited", "photographed", "circled", "reached", "toured"},
       {"the mountain pass", "a quiet harbor", "the desert highway", "an island village", "the northern fjords",
        "a border town", "the river delta", "the old railway"},
       {"at sunrise", "during the storm", "on a rented bike", "without a map", "before the border closed",
        "with two friends", "in late autumn", "after a long flight"}},
      {"finance",
       {"The analyst", "A small investor", "The central bank", "Our accountant", "The hedge fund", "The treasurer",
        "A startup founder", "The auditor"},
       {"reviewed", "downgraded", "hedged", "audited", "forecast", "rebalanced", "liquidated", "priced"},
       {"the bond portfolio", "quarterly earnings", "the currency risk", "a mortgage loan", "the pension fund",
        "interest rate swaps", "the balance sheet", "emerging market debt"},
       {"after the rate hike", "before the close", "for the board", "amid market turmoil", "with new software",
        "under tight deadlines", "at year end", "despite the losses"}},
      {"sports",
       {"The striker", "Our coach", "The goalkeeper", "A rookie pitcher", "The referee", "The sprinter",
        "The team captain", "A veteran boxer"},
       {"scored", "defended", "trained", "tackled", "blocked", "celebrated", "practiced", "challenged"},
       {"the final penalty", "a fast break", "the league title", "a tough rebound", "the home crowd",
        "a perfect serve", "the winning goal", "a record lap"},
       {"in extra time", "during practice", "under the lights", "against the rivals", "in the rain",
        "after halftime", "on the road", "before the playoffs"}},
      {"weather",
       {"The forecaster", "A sudden squall", "The north wind", "A heavy fog", "The monsoon", "A late frost",
        "The heat wave", "A thunderstorm"},
       {"battered", "covered", "flooded", "chilled", "soaked", "darkened", "swept", "dried"},
       {"the coastal towns", "the wheat fields", "the city streets", "the mountain valleys", "the harbor docks",
        "the orchards", "the highway bridges", "the farm roads"},
       {"overnight", "for three days", "without warning", "early this morning", "all weekend", "despite the warnings",
        "by late afternoon", "once again"}},
  };
  return t;
}

/// `n` distinct sentences drawn from the topic grammars. Returns texts and topic names.
inline std::pair<std::vector<std::string>, std::vector<std::string>> make_sentences(std::size_t n, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> texts, cats;
  auto pick = [&](const std::vector<const char*>& v) {
    return std::string(v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]);
  };
  while (texts.size() < n) {
    const auto& t = topics()[texts.size() % topics().size()];
    std::string s = pick(t.subjects) + " " + pick(t.verbs) + " " + pick(t.objects) + " " + pick(t.endings) + ".";
    if (!seen.insert(s).second) continue;
    texts.push_back(s);
    cats.push_back(t.name);
  }
  return {texts, cats};
}

inline std::vector<IngestRow> rows_from(const std::vector<std::string>& texts,
                                        const std::vector<std::string>& cats = {}) {
  std::vector<IngestRow> rows;
  for (std::size_t i = 0; i < texts.size(); ++i)
    rows.push_back({texts[i], cats.empty() ? std::nullopt : std::optional<std::string>(cats[i])});
  return rows;
}

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("amplio-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Columns of a random d x F dictionary (unit atoms) and d x N samples, each a
/// nonnegative combination of `k` distinct atoms with weights in [0.2, 1.0].
struct SparseData {
  Matrix atoms;
  Matrix samples;
};

inline SparseData make_sparse_data(int d, int F, int N, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  SparseData s{Matrix(d, F), Matrix(d, N)};
  for (int j = 0; j < F; ++j) {
    for (int i = 0; i < d; ++i) s.atoms(i, j) = g(rng);
    s.atoms.col(j).normalize();
  }
  std::vector<int> idx(static_cast<std::size_t>(F));
  std::iota(idx.begin(), idx.end(), 0);
  for (int n = 0; n < N; ++n) {
    std::shuffle(idx.begin(), idx.end(), rng);
    Vector x = Vector::Zero(d);
    for (int m = 0; m < k; ++m) x += u(rng) * s.atoms.col(idx[static_cast<std::size_t>(m)]);
    s.samples.col(n) = x;
  }
  return s;
}

/// True atoms whose best-matching learned decoder direction has cosine >= threshold.
inline int recovered_atoms(const Matrix& atoms, const Matrix& w_dec, double threshold) {
  int hits = 0;
  for (Eigen::Index a = 0; a < atoms.cols(); ++a) {
    double best = -1.0;
    for (Eigen::Index j = 0; j < w_dec.cols(); ++j) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (Eigen::Index i = 0; i < atoms.rows(); ++i) {
        dot += atoms(i, a) * w_dec(i, j);
        na += atoms(i, a) * atoms(i, a);
        nb += w_dec(i, j) * w_dec(i, j);
      }
      best = std::max(best, dot / std::sqrt(na * nb));
    }
    hits += best >= threshold;
  }
  return hits;
}

inline Vector random_unit(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = g(rng);
  return v / v.norm();
}

inline GatedSAEParams random_params(int d, int F, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  auto p = GatedSAEParams::zeros(d, F);
  for (int j = 0; j < F; ++j) {
    for (int i = 0; i < d; ++i) {
      p.w_gate(j, i) = g(rng) / std::sqrt(d);
      p.w_dec(i, j) = g(rng);
    }
    p.b_gate[j] = 0.1 * g(rng);
    p.r_mag[j] = 0.2 * g(rng);
    p.b_mag[j] = 0.1 * g(rng);
    p.w_dec.col(j).normalize();
  }
  for (int i = 0; i < d; ++i) p.b_dec[i] = 0.05 * g(rng);
  return p;
}

// ---------------------------------------------------------------------------
// Scalar-loop oracles
// ---------------------------------------------------------------------------

inline std::vector<double> oracle_encode(const GatedSAEParams& p, const Vector& x) {
  const auto d = p.d(), F = p.features();
  std::vector<double> f(static_cast<std::size_t>(F), 0.0);
  for (Eigen::Index j = 0; j < F; ++j) {
    double z = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) z += p.w_gate(j, i) * (x[i] - p.b_dec[i]);
    const double gate = z + p.b_gate[j];
    const double mag = std::exp(p.r_mag[j]) * z + p.b_mag[j];
    f[static_cast<std::size_t>(j)] = gate > 0.0 ? (mag > 0.0 ? mag : 0.0) : 0.0;
  }
  return f;
}

inline std::vector<double> oracle_decode(const GatedSAEParams& p, const std::vector<double>& f) {
  std::vector<double> x(static_cast<std::size_t>(p.d()));
  for (Eigen::Index i = 0; i < p.d(); ++i) {
    double s = p.b_dec[i];
    for (Eigen::Index j = 0; j < p.features(); ++j) s += p.w_dec(i, j) * f[static_cast<std::size_t>(j)];
    x[static_cast<std::size_t>(i)] = s;
  }
  return x;
}

/// normalize(s + sum w_j * W_dec[:, j] / ||W_dec[:, j]||), by explicit loops.
inline std::vector<double> oracle_edit(const std::vector<double>& s, const std::vector<std::pair<int, double>>& edits,
                                       const Matrix& w_dec) {
  std::vector<double> out = s;
  for (const auto& [j, w] : edits) {
    double n2 = 0.0;
    for (Eigen::Index i = 0; i < w_dec.rows(); ++i) n2 += w_dec(i, j) * w_dec(i, j);
    const double n = std::sqrt(n2);
    for (Eigen::Index i = 0; i < w_dec.rows(); ++i) out[static_cast<std::size_t>(i)] += w * w_dec(i, j) / n;
  }
  double n2 = 0.0;
  for (double v : out) n2 += v * v;
  const double n = std::sqrt(n2);
  for (double& v : out) v /= n;
  return out;
}

/// Full scan: every (id, cosine) sorted by score desc then id asc, top k.
inline std::vector<std::pair<std::int64_t, double>> oracle_knn(const std::vector<std::pair<std::int64_t, Vector>>& items,
                                                               const Vector& q, std::size_t k,
                                                               const std::set<std::int64_t>& exclude = {}) {
  auto unit = [](const Vector& v) {
    double n2 = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) n2 += v[i] * v[i];
    return Vector(v / std::sqrt(n2));
  };
  const Vector uq = unit(q);
  std::vector<std::pair<std::int64_t, double>> all;
  for (const auto& [id, v] : items) {
    if (exclude.count(id)) continue;
    const Vector uv = unit(v);
    double dot = 0.0;
    for (Eigen::Index i = 0; i < uq.size(); ++i) dot += uq[i] * uv[i];
    all.emplace_back(id, dot);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Eigenvalues descending,
/// eigenvectors as columns.
inline std::pair<Vector, Matrix> jacobi_eigen(Matrix a, int sweeps = 100) {
  const auto n = a.rows();
  Matrix v = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
  Vector values(n);
  Matrix vectors(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    values[i] = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return {values, vectors};
}

/// Sign convention shared with the projection: largest |entry| positive, first index on ties.
inline Vector sign_fixed(Vector v) {
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  return v[arg] < 0 ? Vector(-v) : v;
}

inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, long> table;
  std::map<int, long> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++table[{a[i], b[i]}];
    ++ra[a[i]];
    ++rb[b[i]];
  }
  auto c2 = [](long x) { return static_cast<double>(x) * static_cast<double>(x - 1) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [_, n] : table) index += c2(n);
  for (const auto& [_, n] : ra) sa += c2(n);
  for (const auto& [_, n] : rb) sb += c2(n);
  const double expected = sa * sb / c2(static_cast<long>(a.size()));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

/// Three well separated Gaussian blobs in R^d; returns data (d x 3m) and labels.
inline std::pair<Matrix, std::vector<int>> make_blobs(int d, int per_blob, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  Matrix data(d, 3 * per_blob);
  std::vector<int> labels;
  for (int b = 0; b < 3; ++b) {
    Vector center = Vector::Zero(d);
    center[b % d] = 10.0;
    for (int i = 0; i < per_blob; ++i) {
      Vector x = center;
      for (int k = 0; k < d; ++k) x[k] += g(rng);
      data.col(b * per_blob + i) = x;
      labels.push_back(b);
    }
  }
  return {data, labels};
}

}  // namespace amplio::testing
