#pragma once

#include <chrono>
#include <memory>
#include <semaphore>
#include <string>

// Eigen must be parsed before httplib: <resolv.h> defines a `_res` macro.
#include "amplio/config.hpp"
#include "amplio/embedding.hpp"
#include "amplio/projection.hpp"
#include "amplio/providers.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>


namespace amplio {

/// "http://host:port/some/path" split into the client origin and the request path.
struct Endpoint {
  std::string origin;
  std::string path;

  static Endpoint parse(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) fail(ErrorCode::InvalidInput, "endpoint '" + url + "' must include a scheme");
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, ""};
    std::string path = url.substr(slash);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, slash), path};
  }
};

namespace detail {

inline ProviderErrorKind classify(httplib::Error e) {
  switch (e) {
    case httplib::Error::Read:
    case httplib::Error::ConnectionTimeout: return ProviderErrorKind::Timeout;
    default: return ProviderErrorKind::Network;
  }
}

/// Bounded-concurrency JSON POST client.
class JsonHttp {
 public:
  JsonHttp(std::string url, std::chrono::milliseconds timeout, int max_concurrent)
      : endpoint_(Endpoint::parse(url)), timeout_(timeout), slots_(max_concurrent) {}

  nlohmann::json post(const std::string& sub_path, const nlohmann::json& body, const httplib::Headers& headers = {}) const {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<64>& s;
      ~Release() { s.release(); }
    } release{slots_};

    httplib::Client cli(endpoint_.origin);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_write_timeout(timeout_);
    const auto path = endpoint_.path + sub_path;
    auto res = cli.Post(path.empty() ? "/" : path, headers, body.dump(), "application/json");
    if (!res) {
      throw ProviderError(classify(res.error()), "request to " + endpoint_.origin + path + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProviderError(ProviderErrorKind::Http, "HTTP " + std::to_string(res->status) + " from " + endpoint_.origin + path,
                          res->body);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProviderError(ProviderErrorKind::Parse, std::string("unparseable provider reply: ") + e.what(), res->body);
    }
  }

  /// Any HTTP answer at the origin counts as reachable.
  bool reachable() const {
    httplib::Client cli(endpoint_.origin);
    cli.set_connection_timeout(std::chrono::milliseconds(std::min<long>(2000, timeout_.count())));
    cli.set_read_timeout(std::chrono::milliseconds(std::min<long>(2000, timeout_.count())));
    return static_cast<bool>(cli.Get("/"));
  }

 private:
  Endpoint endpoint_;
  std::chrono::milliseconds timeout_;
  mutable std::counting_semaphore<64> slots_;
};

}  // namespace detail

/// Chat-completions style client: POST {model, messages, temperature}; text of the first choice.
class HttpLLMClient final : public LLMClient {
 public:
  HttpLLMClient(std::string endpoint, std::string key, std::string model, std::chrono::milliseconds timeout,
                int max_concurrent = 4)
      : http_(std::move(endpoint), timeout, max_concurrent), key_(std::move(key)), model_(std::move(model)) {}

  std::string complete(const LLMRequest& request) const override {
    request.validate();
    if (key_.empty()) throw ProviderError(ProviderErrorKind::NotConfigured, "LLM key is not configured");
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    const nlohmann::json body = {{"model", model_}, {"messages", messages}, {"temperature", request.temperature}};
    const auto reply = http_.post("", body, {{"Authorization", "Bearer " + key_}});
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ProviderError(ProviderErrorKind::Parse, "LLM reply has no choices[0].message.content", reply.dump());
    }
  }

  ProviderStatus status() const override { return {!key_.empty(), http_.reachable(), "external"}; }

 private:
  detail::JsonHttp http_;
  std::string key_;
  std::string model_;
};

/// POST {base}/invert {"embedding": [...]} -> {"text": "..."}
class HttpInverter final : public Inverter {
 public:
  HttpInverter(std::string endpoint, std::chrono::milliseconds timeout, int max_concurrent = 4)
      : http_(std::move(endpoint), timeout, max_concurrent) {}

  std::string invert(const InversionRequest& request) const override {
    request.validate();
    const auto reply = http_.post("/invert", {{"embedding", to_std(request.vector)}});
    if (!reply.contains("text") || !reply["text"].is_string())
      throw ProviderError(ProviderErrorKind::Parse, "inversion reply has no 'text'", reply.dump());
    return reply["text"].get<std::string>();
  }

  ProviderStatus status() const override { return {true, http_.reachable(), "external"}; }

 private:
  detail::JsonHttp http_;
};

/// POST {"texts": [...]} -> {"embeddings": [[...]]}; vectors are normalized on receipt.
class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(std::string endpoint, int d, std::chrono::milliseconds timeout, int max_concurrent = 4)
      : http_(std::move(endpoint), timeout, max_concurrent), d_(d) {
    EmbeddingConfig::external(d).validate();
  }

  int dim() const override { return d_; }
  std::string_view mode() const override { return "external"; }
  ProviderStatus status() const override { return {true, http_.reachable(), "external"}; }

  std::vector<Vector> embed_batch(const std::vector<std::string>& texts) const override {
    for (const auto& t : texts) require_text(t);
    const auto reply = http_.post("", {{"texts", texts}});
    std::vector<std::vector<double>> raw;
    try {
      raw = reply.at("embeddings").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception&) {
      throw ProviderError(ProviderErrorKind::Parse, "embedding reply has no 'embeddings' array", reply.dump());
    }
    if (raw.size() != texts.size())
      throw ProviderError(ProviderErrorKind::Parse, "embedding reply count does not match request");
    std::vector<Vector> out;
    for (const auto& r : raw) {
      if (static_cast<int>(r.size()) != d_)
        fail(ErrorCode::DimensionError, "embedding service returned dimension " + std::to_string(r.size()) +
                                            ", expected " + std::to_string(d_));
      out.push_back(normalize(to_vector(r)));
    }
    return out;
  }

 private:
  detail::JsonHttp http_;
  int d_;
};

/// POST /fit {"vectors"} -> token; POST /transform {"token", "vectors"} -> [[x, y]].
class HttpProjectionBackend final : public ProjectionBackend {
 public:
  HttpProjectionBackend(std::string endpoint, std::chrono::milliseconds timeout)
      : http_(std::move(endpoint), timeout, 1) {}

  ProjectionModel fit(const Matrix& data) const override {
    const auto reply = http_.post("/fit", {{"vectors", columns(data)}});
    ProjectionModel m;
    m.kind = ProjectionKind::External;
    m.mean = data.rowwise().mean();
    m.components = RowMatrix::Zero(2, data.rows());
    m.explained_variance = Vector::Zero(2);
    if (reply.is_string()) m.external_token = reply.get<std::string>();
    else if (reply.contains("token")) m.external_token = reply["token"].get<std::string>();
    else throw ProviderError(ProviderErrorKind::Parse, "projection fit reply has no token", reply.dump());
    return m;
  }

  std::vector<Point2D> project(const ProjectionModel& model, const Matrix& data) const override {
    if (model.kind != ProjectionKind::External) return PcaBackend().project(model, data);
    const auto reply = http_.post("/transform", {{"token", model.external_token}, {"vectors", columns(data)}});
    const auto& pts = reply.is_array() ? reply : reply.at("points");
    std::vector<Point2D> out;
    for (const auto& p : pts) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    if (static_cast<Eigen::Index>(out.size()) != data.cols())
      throw ProviderError(ProviderErrorKind::Parse, "projection transform returned the wrong number of points");
    return out;
  }

 private:
  static std::vector<std::vector<double>> columns(const Matrix& data) {
    std::vector<std::vector<double>> out;
    for (Eigen::Index i = 0; i < data.cols(); ++i) out.push_back(to_std(data.col(i)));
    return out;
  }

  detail::JsonHttp http_;
};

struct ProviderBundle {
  ProviderSet providers;
  std::shared_ptr<const ProjectionBackend> projection;
};

/// Mock providers unless an endpoint is configured.
inline ProviderBundle make_providers(const Settings& s) {
  const std::chrono::milliseconds timeout(s.timeout_ms);
  ProviderBundle b;
  if (s.embed_endpoint.empty()) b.providers.embedder = std::make_shared<DeskHashEmbedder>(s.effective_embed_dim());
  else b.providers.embedder = std::make_shared<HttpEmbedder>(s.embed_endpoint, s.effective_embed_dim(), timeout, s.max_concurrent);
  if (s.llm_endpoint.empty()) b.providers.llm = std::make_shared<MockLLM>();
  else b.providers.llm = std::make_shared<HttpLLMClient>(s.llm_endpoint, s.llm_key, s.llm_model, timeout, s.max_concurrent);
  if (!s.invert_endpoint.empty()) b.providers.inverter = std::make_shared<HttpInverter>(s.invert_endpoint, timeout, s.max_concurrent);
  if (s.projection_endpoint.empty()) b.projection = std::make_shared<PcaBackend>();
  else b.projection = std::make_shared<HttpProjectionBackend>(s.projection_endpoint, timeout);
  return b;
}

}  // namespace amplio
