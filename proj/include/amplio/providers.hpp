#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "amplio/embedding.hpp"
#include "amplio/error.hpp"
#include "amplio/knn.hpp"
#include "amplio/text.hpp"

namespace amplio {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct LLMRequest {
  std::vector<ChatMessage> messages;
  int max_items = 0;
  double temperature = 0.7;
  std::chrono::milliseconds timeout{30000};

  void validate() const {
    bool has_user = false;
    for (const auto& m : messages) has_user |= (m.role == "user");
    if (!has_user) fail(ErrorCode::InvalidInput, "LLM request needs at least one user message");
    if (timeout.count() <= 0) fail(ErrorCode::InvalidInput, "LLM timeout must be positive");
  }

  const std::string& user_content() const {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it)
      if (it->role == "user") return it->content;
    fail(ErrorCode::InvalidInput, "LLM request has no user message");
  }
};

class LLMClient {
 public:
  virtual ~LLMClient() = default;
  /// Raw completion text. Throws ProviderError on transport failures.
  virtual std::string complete(const LLMRequest& request) const = 0;
  virtual ProviderStatus status() const = 0;
};

struct InversionRequest {
  Vector vector;
  std::string corpus_token;

  void validate() const {
    if (vector.size() == 0 || !vector.allFinite()) fail(ErrorCode::InvalidInput, "inversion vector is empty or non-finite");
    if (std::abs(vector.norm() - 1.0) > 1e-6) fail(ErrorCode::InvalidInput, "inversion vector must be unit-norm");
  }
};

class Inverter {
 public:
  virtual ~Inverter() = default;
  virtual std::string invert(const InversionRequest& request) const = 0;
  virtual ProviderStatus status() const = 0;
};

// ---------------------------------------------------------------------------
// Prompt construction. The first line of every user message is a directive
// (FIX, VARIATIONS n, PROMPT_IDEAS k, LABEL, GENERATE n); the payload follows
// a "---" line as "key: value" records, one per line.
// ---------------------------------------------------------------------------

namespace prompts {

inline std::string one_line(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c == '\n' || c == '\r') c = ' ';
  return out;
}

inline LLMRequest make(std::string directive, std::string instructions,
                       const std::vector<std::pair<std::string, std::string>>& payload, int max_items = 0) {
  std::string body = std::move(directive) + "\n" + std::move(instructions) + "\n---\n";
  for (const auto& [k, v] : payload) body += k + ": " + one_line(v) + "\n";
  LLMRequest req;
  req.messages = {{"system", "You are a careful writing assistant for dataset augmentation."}, {"user", body}};
  req.max_items = max_items;
  return req;
}

inline LLMRequest fix(std::string_view sentence) {
  return make("FIX", "Fix any grammar or syntax problems in the sentence below. Reply with the corrected sentence only.",
              {{"text", std::string(sentence)}});
}

inline LLMRequest variations(std::string_view sentence, int n) {
  return make("VARIATIONS " + std::to_string(n),
              "Write " + std::to_string(n) +
                  " variations of the sentence below that keep its meaning. Reply as a numbered list, one per line.",
              {{"text", std::string(sentence)}}, n);
}

inline LLMRequest prompt_ideas(std::string_view sentence, std::string_view category, int k) {
  return make("PROMPT_IDEAS " + std::to_string(k),
              "Suggest " + std::to_string(k) +
                  " short instructions a user could give to generate useful variations of the sentence below. "
                  "Reply as a numbered list, one per line.",
              {{"category", std::string(category)}, {"text", std::string(sentence)}}, k);
}

inline LLMRequest label(const std::vector<std::string>& examples) {
  std::vector<std::pair<std::string, std::string>> payload;
  for (const auto& e : examples) payload.emplace_back("example", e);
  return make("LABEL",
              "Describe the common theme of the example sentences below in at most 12 words. Reply with the description only.",
              payload);
}

inline LLMRequest generate(std::string_view sentence, std::string_view prompt, int n) {
  return make("GENERATE " + std::to_string(n),
              "Apply the instruction to the sentence and write exactly " + std::to_string(n) +
                  " new sentences. Reply as a numbered list, one per line, with no other text.",
              {{"text", std::string(sentence)}, {"prompt", std::string(prompt)}}, n);
}

struct Parsed {
  std::string directive;
  int count = 0;
  std::vector<std::pair<std::string, std::string>> fields;

  std::string field(std::string_view key) const {
    for (const auto& [k, v] : fields)
      if (k == key) return v;
    return {};
  }
  std::vector<std::string> all(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : fields)
      if (k == key) out.push_back(v);
    return out;
  }
};

inline Parsed parse(std::string_view content) {
  Parsed p;
  auto ls = text::lines(content);
  if (ls.empty()) return p;
  auto head = text::split_whitespace(ls.front());
  if (!head.empty()) p.directive = head[0];
  if (head.size() > 1) {
    try {
      p.count = std::stoi(head[1]);
    } catch (const std::exception&) {
      p.count = 0;
    }
  }
  bool in_payload = false;
  for (std::size_t i = 1; i < ls.size(); ++i) {
    if (!in_payload) {
      in_payload = (text::trim(ls[i]) == "---");
      continue;
    }
    const auto colon = ls[i].find(": ");
    if (colon == std::string::npos) continue;
    p.fields.emplace_back(ls[i].substr(0, colon), ls[i].substr(colon + 2));
  }
  return p;
}

}  // namespace prompts

/// Deterministic LLM stand-in. Output is a pure function of the request.
class MockLLM final : public LLMClient {
 public:
  enum class Behavior { Normal, Refuse, NetworkDown };

  explicit MockLLM(Behavior behavior = Behavior::Normal) : behavior_(behavior) {}

  std::string complete(const LLMRequest& request) const override {
    request.validate();
    {
      std::lock_guard lock(mu_);
      calls_.push_back(request.user_content());
    }
    if (behavior_ == Behavior::NetworkDown) throw ProviderError(ProviderErrorKind::Network, "mock LLM is offline");
    if (behavior_ == Behavior::Refuse) return "I'm sorry, but I can't help with that request.";

    const auto p = prompts::parse(request.user_content());
    const std::string body = p.field("text");
    if (p.directive == "FIX") return text::squish(body);
    if (p.directive == "VARIATIONS") {
      std::string out;
      for (int i = 1; i <= p.count; ++i)
        out += std::to_string(i) + ". " + text::squish(body) + " (variant " + std::to_string(i) + ")\n";
      return out;
    }
    if (p.directive == "PROMPT_IDEAS") return prompt_ideas(body, p.count);
    if (p.directive == "LABEL") {
      const auto examples = p.all("example");
      if (examples.empty()) return "theme: (none)";
      return "theme: " + text::first_words(examples.front(), 3);
    }
    if (p.directive == "GENERATE") {
      std::string out;
      const auto prompt = text::squish(p.field("prompt"));
      for (int i = 1; i <= p.count; ++i)
        out += std::to_string(i) + ". " + text::squish(body) + " [" + prompt + " #" + std::to_string(i) + "]\n";
      return out;
    }
    return text::squish(request.user_content());
  }

  ProviderStatus status() const override { return {true, behavior_ != Behavior::NetworkDown, "mock"}; }

  std::size_t call_count() const {
    std::lock_guard lock(mu_);
    return calls_.size();
  }
  std::size_t call_count(std::string_view directive) const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& c : calls_) n += (prompts::parse(c).directive == directive);
    return n;
  }

 private:
  static std::string prompt_ideas(const std::string& body, int k) {
    static const char* templates[] = {
        "Vary the tone of: ",
        "Change the main subject of: ",
        "Add specific details to: ",
        "Rephrase as a question: ",
        "Make more formal: ",
        "Make more casual: ",
        "Shorten: ",
        "Add a second clause to: ",
    };
    constexpr int n_templates = static_cast<int>(std::size(templates));
    const std::string head = text::first_words(body, 5) + "\xE2\x80\xA6";
    std::string out;
    for (int i = 0; i < k; ++i) {
      out += std::to_string(i + 1) + ". " + templates[i % n_templates] + head;
      if (i >= n_templates) out += " (" + std::to_string(i / n_templates + 1) + ")";
      out += "\n";
    }
    return out;
  }

  Behavior behavior_;
  mutable std::mutex mu_;
  mutable std::vector<std::string> calls_;
};

inline bool looks_like_refusal(std::string_view reply) {
  const auto l = text::lower(text::trim(reply));
  static const char* openers[] = {"i'm sorry", "i am sorry", "sorry, ", "i can't", "i cannot", "i can\xE2\x80\x99t",
                                  "i won't", "i will not", "as an ai", "i'm unable", "i am unable", "i\xE2\x80\x99m sorry"};
  for (const char* o : openers)
    if (l.rfind(o, 0) == 0) return true;
  return false;
}

/// The completion operation: one retry on network errors, none on refusals;
/// empty replies and refusals become ProviderError with the raw reply attached.
inline std::string llm_complete(const LLMClient& client, const LLMRequest& request) {
  request.validate();
  std::string reply;
  try {
    reply = client.complete(request);
  } catch (const ProviderError& e) {
    if (e.kind() != ProviderErrorKind::Network) throw;
    reply = client.complete(request);
  }
  if (text::trim(reply).empty()) throw ProviderError(ProviderErrorKind::Parse, "LLM returned an empty reply", reply);
  if (looks_like_refusal(reply)) throw ProviderError(ProviderErrorKind::Refusal, "LLM declined the request", reply);
  return reply;
}

/// Reply parsed as a numbered list of exactly `n` items.
inline std::vector<std::string> llm_complete_list(const LLMClient& client, const LLMRequest& request, int n) {
  const auto reply = llm_complete(client, request);
  auto items = text::parse_list(reply);
  if (static_cast<int>(items.size()) < n) {
    throw ProviderError(ProviderErrorKind::Parse,
                        "expected " + std::to_string(n) + " list items, got " + std::to_string(items.size()), reply);
  }
  items.resize(static_cast<std::size_t>(n));
  return items;
}

/// Nearest-text inversion over a fixed lexicon: returns the entry with the
/// highest cosine to the query, lowest id on ties.
class MockInverter final : public Inverter {
 public:
  struct Entry {
    SentenceId id;
    std::string text;
    Vector embedding;
  };

  MockInverter() = default;
  MockInverter(std::vector<Entry> entries, std::string token = "default") : token_(std::move(token)) {
    for (auto& e : entries) add(std::move(e));
  }

  static std::shared_ptr<MockInverter> from_texts(const std::vector<std::string>& texts, const Embedder& embedder,
                                                  std::string token = "default") {
    auto inv = std::make_shared<MockInverter>(std::vector<Entry>{}, std::move(token));
    const auto vs = embedder.embed_batch(texts);
    for (std::size_t i = 0; i < texts.size(); ++i) inv->add({static_cast<SentenceId>(i), texts[i], vs[i]});
    return inv;
  }

  void add(Entry e) {
    index_.add(e.id, e.embedding);
    texts_[e.id] = std::move(e.text);
  }

  std::string invert(const InversionRequest& request) const override {
    request.validate();
    {
      std::lock_guard lock(mu_);
      captured_.push_back(request.vector);
    }
    if (index_.empty()) fail(ErrorCode::EmptyIndex, "inversion lexicon is empty");
    const auto hit = index_.knn(request.vector, 1).front();
    return texts_.at(hit.sentence_id);
  }

  ProviderStatus status() const override { return {true, true, "mock"}; }

  const std::string& token() const { return token_; }
  std::size_t size() const { return index_.size(); }

  std::vector<Vector> captured() const {
    std::lock_guard lock(mu_);
    return captured_;
  }

 private:
  EmbeddingIndex index_;
  std::map<SentenceId, std::string> texts_;
  std::string token_ = "default";
  mutable std::mutex mu_;
  mutable std::vector<Vector> captured_;
};

struct ProviderSet {
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<const LLMClient> llm;
  std::shared_ptr<const Inverter> inverter;  // null: use a per-dataset nearest-text lexicon
};

inline ProviderSet mock_providers(int d = 256) {
  return {std::make_shared<DeskHashEmbedder>(d), std::make_shared<MockLLM>(), nullptr};
}

/// Per-provider health. Failures are reported in-band, never thrown.
inline std::map<std::string, ProviderStatus> provider_health(const ProviderSet& providers) {
  std::map<std::string, ProviderStatus> out;
  auto guarded = [](auto&& fn) {
    try {
      return fn();
    } catch (const std::exception&) {
      return ProviderStatus{true, false, "external"};
    }
  };
  out["embedder"] = providers.embedder
                        ? guarded([&] { return providers.embedder->status(); })
                        : ProviderStatus{false, false, "external"};
  out["llm"] = providers.llm ? guarded([&] { return providers.llm->status(); }) : ProviderStatus{false, false, "external"};
  out["inverter"] = providers.inverter ? guarded([&] { return providers.inverter->status(); })
                                       : ProviderStatus{true, true, "mock"};
  return out;
}

}  // namespace amplio
