#include <gtest/gtest.h>

#include "amplio/checkpoint.hpp"
#include "amplio/concepts.hpp"
#include "amplio/embedding.hpp"
#include "amplio/sae.hpp"
#include "support.hpp"

using namespace amplio;
using namespace amplio::testing;

namespace {

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an amplio::Error";
  return ErrorCode::IoError;
}

/// Scalar loss with the auxiliary reconstruction routed through `frozen`'s decoder.
double oracle_loss(const GatedSAEParams& p, const GatedSAEParams& frozen, const Matrix& xb, double lambda) {
  const auto d = p.d(), F = p.features();
  double total = 0.0;
  for (Eigen::Index n = 0; n < xb.cols(); ++n) {
    std::vector<double> f(static_cast<std::size_t>(F)), aux(static_cast<std::size_t>(F));
    for (Eigen::Index j = 0; j < F; ++j) {
      double z = 0.0;
      for (Eigen::Index i = 0; i < d; ++i) z += p.w_gate(j, i) * (xb(i, n) - p.b_dec[i]);
      const double gate = z + p.b_gate[j];
      const double mag = std::exp(p.r_mag[j]) * z + p.b_mag[j];
      f[static_cast<std::size_t>(j)] = gate > 0.0 ? std::max(mag, 0.0) : 0.0;
      aux[static_cast<std::size_t>(j)] = std::max(gate, 0.0);
      total += lambda * aux[static_cast<std::size_t>(j)];
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      double r1 = p.b_dec[i] - xb(i, n), r2 = frozen.b_dec[i] - xb(i, n);
      for (Eigen::Index j = 0; j < F; ++j) {
        r1 += p.w_dec(i, j) * f[static_cast<std::size_t>(j)];
        r2 += frozen.w_dec(i, j) * aux[static_cast<std::size_t>(j)];
      }
      total += (r1 * r1 + r2 * r2) / static_cast<double>(d);
    }
  }
  return total / static_cast<double>(xb.cols());
}

template <class Get>
void expect_gradient(GatedSAEParams p, const Matrix& xb, double lambda, const Matrix& analytic, Get&& get,
                     const char* name) {
  const GatedSAEParams frozen = p;
  const double h = 1e-6;
  Matrix& param = get(p);
  for (Eigen::Index r = 0; r < param.rows(); ++r) {
    for (Eigen::Index c = 0; c < param.cols(); ++c) {
      const double keep = param(r, c);
      param(r, c) = keep + h;
      const double up = oracle_loss(p, frozen, xb, lambda);
      param(r, c) = keep - h;
      const double down = oracle_loss(p, frozen, xb, lambda);
      param(r, c) = keep;
      EXPECT_NEAR(analytic(r, c), (up - down) / (2 * h), 1e-6) << name << "(" << r << "," << c << ")";
    }
  }
}

LabelCorpus corpus_from(const std::vector<std::string>& texts, const Embedder& e) {
  LabelCorpus c;
  c.embeddings.resize(e.dim(), static_cast<Eigen::Index>(texts.size()));
  for (std::size_t i = 0; i < texts.size(); ++i) {
    c.ids.push_back(static_cast<SentenceId>(i));
    c.texts.push_back(texts[i]);
    c.embeddings.col(static_cast<Eigen::Index>(i)) = e.embed(texts[i]);
  }
  return c;
}

class ScriptedLLM final : public LLMClient {
 public:
  explicit ScriptedLLM(std::string reply) : reply_(std::move(reply)) {}
  std::string complete(const LLMRequest&) const override { return reply_; }
  ProviderStatus status() const override { return {}; }

 private:
  std::string reply_;
};

}  // namespace

// ---------------------------------------------------------------------------
// encoder / decoder
// ---------------------------------------------------------------------------

TEST(SAE, EncodeDecodeMatchScalarOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 3 + trial % 7, F = 5 + trial;
    const auto p = random_params(d, F, rng);
    const Vector x = random_unit(d, rng);
    const Vector f = sae_encode(p, x);
    const auto want = oracle_encode(p, x);
    for (int j = 0; j < F; ++j) EXPECT_NEAR(f[j], want[static_cast<std::size_t>(j)], 1e-12);
    const auto xr = oracle_decode(p, want);
    const Vector got = sae_decode(p, f);
    for (int i = 0; i < d; ++i) EXPECT_NEAR(got[i], xr[static_cast<std::size_t>(i)], 1e-12);
  }
}

TEST(SAE, BatchEncodeMatchesColumnwise) {
  std::mt19937_64 rng(2);
  const auto p = random_params(8, 20, rng);
  Matrix x(8, 15);
  for (int c = 0; c < 15; ++c) x.col(c) = random_unit(8, rng);
  const Matrix f = sae_encode_batch(p, x);
  for (int c = 0; c < 15; ++c) EXPECT_LT((f.col(c) - sae_encode(p, x.col(c))).norm(), 1e-12);
}

TEST(SAE, GateClosedMeansZero) {
  auto p = GatedSAEParams::zeros(2, 1);
  p.w_gate << 1.0, 0.0;
  p.b_gate << -10.0;  // gate never opens on unit inputs
  p.b_mag << 5.0;
  EXPECT_EQ(sae_encode(p, Vector::Unit(2, 0))[0], 0.0);
  p.b_gate << 0.0;
  EXPECT_NEAR(sae_encode(p, Vector::Unit(2, 0))[0], 6.0, 1e-15);
  EXPECT_EQ(code_of([&] { sae_encode(p, Vector::Ones(3)); }), ErrorCode::DimensionError);
}

TEST(SAE, LossGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const int d = 5, F = 7;
  const auto p = random_params(d, F, rng);
  Matrix xb(d, 6);
  for (int c = 0; c < 6; ++c) xb.col(c) = random_unit(d, rng);
  const double lambda = 0.03;
  const auto g = detail::sae_loss_grad(p, xb, lambda);
  EXPECT_NEAR(g.loss, oracle_loss(p, p, xb, lambda), 1e-12);
  expect_gradient(p, xb, lambda, g.grad.w_gate, [](GatedSAEParams& q) -> Matrix& { return q.w_gate; }, "w_gate");
  expect_gradient(p, xb, lambda, g.grad.w_dec, [](GatedSAEParams& q) -> Matrix& { return q.w_dec; }, "w_dec");
  auto vec_check = [&](auto member, const Vector& analytic, const char* name) {
    const GatedSAEParams frozen = p;
    GatedSAEParams q = p;
    const double h = 1e-6;
    Vector& v = q.*member;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = oracle_loss(q, frozen, xb, lambda);
      v[i] = keep - h;
      const double down = oracle_loss(q, frozen, xb, lambda);
      v[i] = keep;
      EXPECT_NEAR(analytic[i], (up - down) / (2 * h), 1e-6) << name << "[" << i << "]";
    }
  };
  vec_check(&GatedSAEParams::b_gate, g.grad.b_gate, "b_gate");
  vec_check(&GatedSAEParams::r_mag, g.grad.r_mag, "r_mag");
  vec_check(&GatedSAEParams::b_mag, g.grad.b_mag, "b_mag");
  vec_check(&GatedSAEParams::b_dec, g.grad.b_dec, "b_dec");
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

TEST(SAE, SmallRecoveryRun) {
  const auto data = make_sparse_data(24, 32, 10000, 3, 5);
  SAETrainConfig cfg;
  cfg.features = 32;
  cfg.sparsity_weight = 0.02;
  cfg.learning_rate = 3e-3;
  cfg.epochs = 20;
  cfg.batch_size = 64;
  cfg.seed = 7;
  std::vector<double> seen;
  const auto r = sae_train(data.samples, cfg, [&](double f) { seen.push_back(f); });
  ASSERT_EQ(r.report.epoch_loss.size(), 20u);
  EXPECT_LT(r.report.epoch_loss.back(), r.report.epoch_loss.front());
  EXPECT_GE(recovered_atoms(data.atoms, r.params.w_dec, 0.9), 28);
  EXPECT_LE(r.report.mean_l0, 6.0);
  for (Eigen::Index j = 0; j < r.params.features(); ++j) EXPECT_NEAR(r.params.w_dec.col(j).norm(), 1.0, 1e-12);
  ASSERT_FALSE(seen.empty());
  EXPECT_DOUBLE_EQ(seen.back(), 1.0);
  EXPECT_TRUE(std::is_sorted(seen.begin(), seen.end()));
}

TEST(SAE, TrainingIsDeterministicForASeed) {
  const auto data = make_sparse_data(6, 8, 300, 2, 9);
  SAETrainConfig cfg;
  cfg.features = 10;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.seed = 4;
  EXPECT_EQ(sae_train(data.samples, cfg).params, sae_train(data.samples, cfg).params);
}

TEST(SAE, DivergenceIsReported) {
  const auto data = make_sparse_data(6, 8, 200, 2, 9);
  SAETrainConfig cfg;
  cfg.features = 8;
  cfg.learning_rate = 1e200;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  EXPECT_EQ(code_of([&] { sae_train(data.samples, cfg); }), ErrorCode::TrainingDiverged);
}

TEST(SAE, ConfigValidation) {
  const Matrix data = Matrix::Ones(3, 10);
  SAETrainConfig cfg;
  cfg.features = 0;
  EXPECT_EQ(code_of([&] { sae_train(data, cfg); }), ErrorCode::InvalidInput);
  cfg = {};
  cfg.sparsity_weight = 0.0;
  EXPECT_EQ(code_of([&] { sae_train(data, cfg); }), ErrorCode::InvalidInput);
  cfg = {};
  cfg.features = 4;
  EXPECT_EQ(code_of([&] { sae_train(Matrix(3, 0), cfg); }), ErrorCode::InvalidInput);
  Matrix bad = data;
  bad(0, 0) = std::nan("");
  EXPECT_EQ(code_of([&] { sae_train(bad, cfg); }), ErrorCode::InvalidInput);
}

// ---------------------------------------------------------------------------
// concepts
// ---------------------------------------------------------------------------

TEST(Concepts, VectorsAreNormalizedDecoderColumns) {
  std::mt19937_64 rng(4);
  auto p = random_params(6, 9, rng);
  p.w_dec.col(2) *= 7.0;
  const auto dict = concept_vectors(p);
  ASSERT_EQ(dict.size(), 9u);
  EXPECT_LT((dict.at(2).vector - p.w_dec.col(2).normalized()).norm(), 1e-15);
  EXPECT_EQ(dict.at(2).label, kUnlabeled);
  p.w_dec.col(4).setZero();
  try {
    concept_vectors(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateConcept);
    EXPECT_EQ(e.detail(), "4");
  }
}

TEST(Concepts, TopConceptsMatchBruteForce) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int d = 6, F = 12 + trial;
    const auto p = random_params(d, F, rng);
    const Vector s = random_unit(d, rng);
    const std::size_t k = 1 + static_cast<std::size_t>(trial % 15);
    const auto got = top_concepts(p, s, k);
    const auto f = oracle_encode(p, s);
    std::vector<int> order(static_cast<std::size_t>(F));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return f[static_cast<std::size_t>(a)] > f[static_cast<std::size_t>(b)];
    });
    ASSERT_EQ(got.size(), std::min<std::size_t>(k, static_cast<std::size_t>(F)));
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].concept_index, order[i]);
      EXPECT_NEAR(got[i].score, f[static_cast<std::size_t>(order[i])], 1e-12);
    }
  }
}

TEST(Concepts, SuggestionsAreSeededAndDisjointFromTop) {
  std::mt19937_64 rng(6);
  const auto p = random_params(12, 60, rng);
  const auto dict = concept_vectors(p);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector s = random_unit(12, rng);
    const auto top = top_concepts(p, s, 10);
    const auto a = suggest_concepts(dict, top, 10, 99);
    const auto b = suggest_concepts(dict, top, 10, 99);
    EXPECT_EQ(a.concepts, b.concepts);
    std::set<int> top_set;
    for (const auto& t : top) top_set.insert(t.concept_index);
    std::set<int> pool;
    for (const auto& t : top)
      for (int n : concept_neighbors(dict, t.concept_index, kConceptNeighbors, top_set)) pool.insert(n);
    EXPECT_EQ(a.short_pool, pool.size() < 10);
    EXPECT_EQ(a.concepts.size(), std::min<std::size_t>(10, pool.size()));
    EXPECT_EQ(std::set<int>(a.concepts.begin(), a.concepts.end()).size(), a.concepts.size());
    for (int c : a.concepts) {
      EXPECT_EQ(top_set.count(c), 0u);
      EXPECT_EQ(pool.count(c), 1u);
    }
  }
}

TEST(Concepts, ShortPoolIsFlagged) {
  std::mt19937_64 rng(7);
  const auto dict = concept_vectors(random_params(4, 4, rng));
  const auto s = suggest_concepts(dict, {{0, 1.0}}, 10, 1);
  EXPECT_TRUE(s.short_pool);
  EXPECT_EQ(s.concepts.size(), 3u);
  EXPECT_EQ(code_of([&] { suggest_concepts(dict, {{0, 1}, {1, 1}, {2, 1}, {3, 1}}, 10, 1); }), ErrorCode::InvalidInput);
}

TEST(Concepts, NeighborsRankByCosine) {
  Matrix w(2, 4);
  w << 1.0, 0.9, 0.0, -1.0,  //
      0.0, 0.1, 1.0, 0.0;
  auto p = GatedSAEParams::zeros(2, 4);
  p.w_dec = w;
  const auto dict = concept_vectors(p);
  EXPECT_EQ(concept_neighbors(dict, 0, 3, {}), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(concept_neighbors(dict, 0, 3, {1}), (std::vector<int>{2, 3}));
}

TEST(Concepts, LabelingUsesTopExamplesAndCapsWords) {
  DeskHashEmbedder e(64);
  const auto texts = make_sentences(40, 2).first;
  const auto corpus = corpus_from(texts, e);
  std::mt19937_64 rng(8);
  auto p = random_params(64, 5, rng);
  p.b_gate.setConstant(10.0);  // every gate open
  p.b_mag.setConstant(10.0);
  auto dict = concept_vectors(p);
  MockLLM llm;
  const auto label = label_concept(dict.at(1), p, corpus, llm, 4);
  EXPECT_EQ(label.rfind("theme: ", 0), 0u);
  const auto& c = dict.at(1);
  EXPECT_FALSE(c.weak);
  EXPECT_FALSE(c.unlabeled);
  ASSERT_EQ(c.top_examples.size(), 4u);
  const Matrix acts = sae_encode_batch(p, corpus.embeddings);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_GE(acts(1, c.top_examples[i - 1]), acts(1, c.top_examples[i]));

  ScriptedLLM wordy("one two three four five six seven eight nine ten eleven twelve thirteen\nsecond line");
  label_concept(dict.at(2), p, corpus, wordy, 4);
  EXPECT_EQ(text::word_count(dict.at(2).label), static_cast<int>(kLabelMaxWords));
}

TEST(Concepts, NeverActiveConceptIsWeak) {
  DeskHashEmbedder e(64);
  const auto corpus = corpus_from(make_sentences(20, 3).first, e);
  std::mt19937_64 rng(9);
  auto p = random_params(64, 3, rng);
  p.b_gate[0] = -100.0;
  MockLLM llm;
  auto dict = concept_vectors(p);
  label_concept(dict.at(0), p, corpus, llm, 3);
  EXPECT_TRUE(dict.at(0).weak);
  EXPECT_EQ(dict.at(0).top_examples.size(), 3u);
  EXPECT_FALSE(dict.at(0).unlabeled);
}

TEST(Concepts, ProviderFailureLeavesSentinel) {
  DeskHashEmbedder e(64);
  const auto corpus = corpus_from(make_sentences(20, 3).first, e);
  std::mt19937_64 rng(10);
  const auto p = random_params(64, 6, rng);
  auto dict = concept_vectors(p);
  MockLLM down(MockLLM::Behavior::NetworkDown);
  EXPECT_THROW(label_concept(dict.at(0), p, corpus, down), ProviderError);
  EXPECT_EQ(dict.at(0).label, kUnlabeled);
  EXPECT_TRUE(dict.at(0).unlabeled);
  const auto report = label_all_concepts(dict, p, corpus, down);
  EXPECT_EQ(report.failed, 6);
  EXPECT_EQ(report.labeled, 0);
  MockLLM ok;
  std::vector<double> progress;
  const auto good = label_all_concepts(dict, p, corpus, ok, 8, [&](double f) { progress.push_back(f); });
  EXPECT_EQ(good.labeled, 6);
  EXPECT_EQ(progress.size(), 6u);
}

TEST(Concepts, SearchRanksByMatchedTokens) {
  std::mt19937_64 rng(11);
  auto dict = concept_vectors(random_params(4, 4, rng));
  dict.at(0).label = "Rainy weather";
  dict.at(1).label = "weather forecast, rainy days";
  dict.at(2).label = "cooking";
  EXPECT_EQ(search_concepts(dict, "RAINY weather"), (std::vector<int>{0, 1}));
  EXPECT_EQ(search_concepts(dict, "rainy DAYS"), (std::vector<int>{1, 0}));
  EXPECT_EQ(search_concepts(dict, "weather"), (std::vector<int>{0, 1}));
  EXPECT_TRUE(search_concepts(dict, "  ").empty());
  EXPECT_TRUE(search_concepts(dict, "finance").empty());
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  std::mt19937_64 rng(12);
  const auto p = random_params(7, 11, rng);
  SAETrainConfig cfg;
  cfg.features = 11;
  cfg.seed = 77;
  cfg.sparsity_weight = 0.01;
  SAETrainReport report{{0.5, 0.25}, {3}, 2.5};
  save_checkpoint(dir.path() / "m.ckpt", p, cfg, report);
  const auto back = load_checkpoint(dir.path() / "m.ckpt");
  EXPECT_EQ(back.params, p);
  EXPECT_EQ(back.config.seed, 77u);
  EXPECT_EQ(back.config.sparsity_weight, 0.01);
  EXPECT_EQ(back.report.epoch_loss, report.epoch_loss);
  EXPECT_EQ(back.report.dead_features, report.dead_features);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "m.ckpt.tmp"));
}

TEST(Checkpoint, RejectsBadFiles) {
  TempDir dir;
  EXPECT_EQ(code_of([&] { load_checkpoint(dir.path() / "missing"); }), ErrorCode::IoError);
  {
    std::ofstream out(dir.path() / "bad");
    out << "other/9\n{}\n";
  }
  EXPECT_EQ(code_of([&] { load_checkpoint(dir.path() / "bad"); }), ErrorCode::IoError);
}

TEST(Checkpoint, LabelsRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(13);
  const auto p = random_params(5, 4, rng);
  auto dict = concept_vectors(p);
  dict.at(1).label = "harbor fog";
  dict.at(1).unlabeled = false;
  dict.at(1).weak = true;
  dict.at(1).top_examples = {4, 2};
  save_labels(dir.path() / "labels.json", dict);
  auto fresh = concept_vectors(p);
  load_labels(dir.path() / "labels.json", fresh);
  EXPECT_EQ(fresh.at(1).label, "harbor fog");
  EXPECT_TRUE(fresh.at(1).weak);
  EXPECT_EQ(fresh.at(1).top_examples, (std::vector<SentenceId>{4, 2}));
  EXPECT_TRUE(fresh.at(0).unlabeled);
}
