#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "amplio/error.hpp"
#include "amplio/text.hpp"
#include "amplio/vector.hpp"

namespace amplio {

enum class EmbeddingProvider { DeskHash, ExternalService };

struct EmbeddingConfig {
  int d = 256;
  EmbeddingProvider provider = EmbeddingProvider::DeskHash;

  static EmbeddingConfig desk_hash(int d = 256) { return {d, EmbeddingProvider::DeskHash}; }
  static EmbeddingConfig external(int d = 768) { return {d, EmbeddingProvider::ExternalService}; }

  void validate() const {
    if (d < 2) fail(ErrorCode::InvalidInput, "embedding dimension must be >= 2");
  }
};

struct ProviderStatus {
  bool configured = true;
  bool reachable = true;
  std::string mode = "mock";
};

/// Text -> unit-norm vector. Implementations must be safe for concurrent calls.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  virtual std::string_view mode() const = 0;
  virtual std::vector<Vector> embed_batch(const std::vector<std::string>& texts) const = 0;
  virtual ProviderStatus status() const { return {true, true, std::string(mode())}; }

  Vector embed(std::string_view text) const { return embed_batch({std::string(text)}).front(); }
};

inline void require_text(std::string_view text) {
  if (text::trim(text).empty()) fail(ErrorCode::InvalidInput, "text is empty");
}

/// Feature-hashing embedder: word unigrams plus character trigrams, term-frequency
/// weighted, signed buckets, L2-normalized. Pure function of the input text.
class DeskHashEmbedder final : public Embedder {
 public:
  explicit DeskHashEmbedder(int d = 256) : d_(d) { EmbeddingConfig::desk_hash(d).validate(); }

  int dim() const override { return d_; }
  std::string_view mode() const override { return "mock"; }

  std::vector<Vector> embed_batch(const std::vector<std::string>& texts) const override {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

  Vector embed_one(std::string_view raw) const {
    require_text(raw);
    std::unordered_map<std::string, int> tf;
    for (auto& w : text::word_tokens(raw)) ++tf["w:" + w];
    const std::string padded = " " + text::lower(text::squish(raw)) + " ";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) ++tf["c:" + padded.substr(i, 3)];

    Vector v = Vector::Zero(d_);
    for (const auto& [feature, count] : tf) {
      const std::uint64_t h = text::fnv1a(feature);
      const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(d_));
      const double sign = ((h >> 47) & 1U) ? -1.0 : 1.0;
      v[bucket] += sign * count;
    }
    return normalize(v);
  }

 private:
  int d_;
};

/// Convenience entry point for the deterministic provider.
inline Vector embed(std::string_view text, const EmbeddingConfig& config) {
  config.validate();
  if (config.provider != EmbeddingProvider::DeskHash) {
    throw ProviderError(ProviderErrorKind::NotConfigured, "external embedder requires an endpoint; use make_embedder");
  }
  return DeskHashEmbedder(config.d).embed_one(text);
}

}  // namespace amplio
