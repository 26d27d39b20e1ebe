#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

// Eigen must be parsed before httplib: <resolv.h> defines a `_res` macro.
#include "amplio/ingest.hpp"
#include "amplio/workspace.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>


namespace amplio {

// ---------------------------------------------------------------------------
// Background jobs
// ---------------------------------------------------------------------------

enum class JobState { Queued, Running, Done, Failed };

inline std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "unknown";
}

inline const std::set<std::string>& job_kinds() {
  static const std::set<std::string> kinds = {"sae_train", "concept_labeling", "refit_projection"};
  return kinds;
}

struct Job {
  std::string job_id;
  std::string kind;
  std::string dataset;
  JobState state = JobState::Queued;
  double progress = 0.0;
  std::optional<std::string> error;
  json error_detail;
  json result;
  std::int64_t created_at = 0;
  std::int64_t finished_at = 0;
};

inline json job_json(const Job& j) {
  return {{"job_id", j.job_id},
          {"kind", j.kind},
          {"dataset", j.dataset},
          {"state", to_string(j.state)},
          {"progress", j.progress},
          {"error", j.error ? json(*j.error) : json(nullptr)},
          {"error_detail", j.error_detail},
          {"result", j.result},
          {"created_at", j.created_at},
          {"finished_at", j.finished_at}};
}

/// One worker thread per job kind; jobs of the same kind run in submission order.
class JobRunner {
 public:
  using Progress = std::function<void(double)>;
  using Task = std::function<json(const Progress&)>;

  JobRunner() {
    for (const auto& k : job_kinds()) lanes_[k];
    for (auto& [kind, lane] : lanes_) lane.worker = std::thread([this, k = kind] { run_lane(k); });
  }

  ~JobRunner() { stop(); }

  JobRunner(const JobRunner&) = delete;
  JobRunner& operator=(const JobRunner&) = delete;

  std::string submit(const std::string& kind, const std::string& dataset, Task task) {
    std::lock_guard lock(mu_);
    auto lane = lanes_.find(kind);
    if (lane == lanes_.end()) fail(ErrorCode::InvalidInput, "unknown job kind '" + kind + "'");
    if (stopping_) fail(ErrorCode::InvalidInput, "service is shutting down");
    Job job;
    job.job_id = "job-" + std::to_string(++counter_);
    job.kind = kind;
    job.dataset = dataset;
    job.created_at = now_millis();
    jobs_[job.job_id] = job;
    lane->second.queue.push_back({job.job_id, std::move(task)});
    cv_.notify_all();
    return job.job_id;
  }

  Job get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) fail(ErrorCode::NotFound, "job '" + id + "' not found");
    return it->second;
  }

  /// Let running jobs finish; queued jobs are failed.
  void stop() {
    {
      std::lock_guard lock(mu_);
      if (stopping_ && joined_) return;
      stopping_ = true;
      for (auto& [_, lane] : lanes_) {
        for (auto& [id, task] : lane.queue) {
          auto& job = jobs_[id];
          job.state = JobState::Failed;
          job.error = "service stopped before the job started";
          job.finished_at = now_millis();
        }
        lane.queue.clear();
      }
    }
    cv_.notify_all();
    for (auto& [_, lane] : lanes_)
      if (lane.worker.joinable()) lane.worker.join();
    std::lock_guard lock(mu_);
    joined_ = true;
  }

 private:
  struct Lane {
    std::deque<std::pair<std::string, Task>> queue;
    std::thread worker;
  };

  void run_lane(const std::string& kind) {
    for (;;) {
      std::pair<std::string, Task> item;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !lanes_[kind].queue.empty(); });
        if (lanes_[kind].queue.empty()) return;
        item = std::move(lanes_[kind].queue.front());
        lanes_[kind].queue.pop_front();
        jobs_[item.first].state = JobState::Running;
      }
      const auto& id = item.first;
      auto progress = [&](double p) {
        std::lock_guard lock(mu_);
        auto& job = jobs_[id];
        job.progress = std::clamp(std::max(job.progress, p), 0.0, 1.0);
      };
      json result;
      std::optional<std::string> error;
      json detail;
      try {
        result = item.second(progress);
      } catch (const ProviderError& e) {
        error = e.what();
        detail = {{"code", to_string(e.code())}, {"kind", to_string(e.kind())}};
      } catch (const Error& e) {
        error = e.what();
        detail = {{"code", to_string(e.code())}, {"detail", e.detail()}};
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::lock_guard lock(mu_);
      auto& job = jobs_[id];
      job.finished_at = now_millis();
      if (error) {
        job.state = JobState::Failed;
        job.error = error;
        job.error_detail = detail;
      } else {
        job.state = JobState::Done;
        job.progress = 1.0;
        job.result = std::move(result);
      }
    }
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Lane> lanes_;
  std::map<std::string, Job> jobs_;
  std::uint64_t counter_ = 0;
  bool stopping_ = false;
  bool joined_ = false;
};

// ---------------------------------------------------------------------------
// Idempotent replay of mutating requests
// ---------------------------------------------------------------------------

/// Remembers the response of each keyed mutation. A retry with the same key
/// gets the stored response; a concurrent retry waits for the first to finish.
class DedupTable {
 public:
  struct Stored {
    int status = 200;
    std::string body;
    std::string version;
  };

  explicit DedupTable(std::size_t capacity = 4096) : capacity_(capacity) {}

  template <class Fn>
  Stored run(const std::string& key, Fn&& fn) {
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return !in_flight_.count(key); });
      if (auto it = done_.find(key); it != done_.end()) return it->second;
      in_flight_.insert(key);
    }
    Stored out;
    try {
      out = fn();
    } catch (...) {
      std::lock_guard lock(mu_);
      in_flight_.erase(key);
      cv_.notify_all();
      throw;
    }
    std::lock_guard lock(mu_);
    in_flight_.erase(key);
    if (out.status < 500) {
      done_[key] = out;
      order_.push_back(key);
      while (order_.size() > capacity_) {
        done_.erase(order_.front());
        order_.pop_front();
      }
    }
    cv_.notify_all();
    return out;
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::set<std::string> in_flight_;
  std::map<std::string, Stored> done_;
  std::deque<std::string> order_;
};

// ---------------------------------------------------------------------------
// HTTP service
// ---------------------------------------------------------------------------

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0: pick a free port
  std::string cors_origin = "*";
};

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput:
    case ErrorCode::DimensionError:
    case ErrorCode::IngestError: return 400;
    case ErrorCode::Forbidden: return 403;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::EmptyIndex: return 409;
    case ErrorCode::DegenerateVector:
    case ErrorCode::DegenerateConcept:
    case ErrorCode::DegenerateInterpolation:
    case ErrorCode::DegenerateProjection: return 422;
    case ErrorCode::ProviderError: return 502;
    case ErrorCode::TrainingDiverged:
    case ErrorCode::IoError: return 500;
  }
  return 500;
}

inline json error_envelope(std::string_view code, const std::string& message, json detail = nullptr) {
  return {{"code", code}, {"message", message}, {"detail", std::move(detail)}};
}

class Service {
 public:
  Service(std::shared_ptr<Workspace> workspace, ServiceOptions options = {})
      : ws_(std::move(workspace)), options_(std::move(options)) {
    if (!ws_) fail(ErrorCode::InvalidInput, "service needs a workspace");
    routes();
  }

  ~Service() { stop(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Bind the listening socket; returns the bound port.
  int bind() {
    if (port_ > 0) return port_;
    if (options_.port == 0) {
      port_ = server_.bind_to_any_port(options_.host);
    } else if (server_.bind_to_port(options_.host, options_.port)) {
      port_ = options_.port;
    }
    if (port_ <= 0) {
      port_ = 0;
      fail(ErrorCode::IoError, "cannot listen on " + options_.host + ":" + std::to_string(options_.port) +
                                   " (port busy or address unavailable)");
    }
    return port_;
  }

  /// Blocking accept loop; returns after stop().
  void listen() {
    bind();
    server_.listen_after_bind();
  }

  /// Bind and serve on a background thread.
  int start() {
    const int port = bind();
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port;
  }

  /// Stop accepting, finish running jobs, then flush every dataset.
  void stop() {
    if (stopped_.exchange(true)) return;
    server_.stop();
    if (thread_.joinable()) thread_.join();
    jobs_.stop();
    ws_->flush_all();
  }

  int port() const { return port_; }
  Workspace& workspace() { return *ws_; }
  JobRunner& jobs() { return jobs_; }

 private:
  using Req = httplib::Request;
  using Res = httplib::Response;

  struct Reply {
    int status = 200;
    json body;
    std::optional<std::string> version;
  };

  // -- plumbing -------------------------------------------------------------

  static void send_json(Res& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
  }

  static void send_error(Res& res, const std::exception_ptr& ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const ProviderError& e) {
      send_json(res, 502, error_envelope(to_string(e.code()), e.what(),
                                         {{"kind", to_string(e.kind())}, {"raw", e.raw_reply()}}));
    } catch (const Error& e) {
      send_json(res, http_status(e.code()), error_envelope(to_string(e.code()), e.what(), e.detail().empty() ? json(nullptr) : json(e.detail())));
    } catch (const json::parse_error& e) {
      send_json(res, 400, error_envelope("invalid_json", e.what(), {{"position", e.byte}}));
    } catch (const json::exception& e) {
      send_json(res, 400, error_envelope("invalid_input", e.what()));
    } catch (const std::exception& e) {
      send_json(res, 500, error_envelope("internal", e.what()));
    }
  }

  static json parse_body(const Req& req) {
    if (text::trim(req.body).empty()) return json::object();
    return json::parse(req.body);
  }

  static std::string param(const Req& req, const std::string& key, const std::string& fallback = {}) {
    return req.has_param(key) ? req.get_param_value(key) : fallback;
  }

  static long long int_param(const Req& req, const std::string& key, std::optional<long long> fallback = std::nullopt) {
    if (!req.has_param(key)) {
      if (fallback) return *fallback;
      fail(ErrorCode::InvalidInput, "query parameter '" + key + "' is required");
    }
    const auto v = req.get_param_value(key);
    try {
      std::size_t pos = 0;
      const long long out = std::stoll(v, &pos);
      if (pos == v.size()) return out;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::InvalidInput, "query parameter '" + key + "' must be an integer, got '" + v + "'");
  }

  static double double_param(const Req& req, const std::string& key) {
    if (!req.has_param(key)) fail(ErrorCode::InvalidInput, "query parameter '" + key + "' is required");
    const auto v = req.get_param_value(key);
    try {
      std::size_t pos = 0;
      const double out = std::stod(v, &pos);
      if (pos == v.size() && std::isfinite(out)) return out;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::InvalidInput, "query parameter '" + key + "' must be a number, got '" + v + "'");
  }

  static SentenceId id_from(const std::string& s) {
    try {
      std::size_t pos = 0;
      const auto out = std::stoll(s, &pos);
      if (pos == s.size()) return out;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::InvalidInput, "'" + s + "' is not a sentence id");
  }

  /// Comma-separated list parameters: kinds, methods, categories; plus min/max_length.
  static FilterSpec filter_from_query(const Req& req) {
    json j = json::object();
    for (const char* key : {"kinds", "methods", "categories"}) {
      if (!req.has_param(key)) continue;
      json arr = json::array();
      std::stringstream ss(req.get_param_value(key));
      for (std::string item; std::getline(ss, item, ',');)
        if (!text::trim(item).empty()) arr.push_back(text::trim(item));
      j[key] = arr;
    }
    if (req.has_param("min_length")) j["min_length"] = int_param(req, "min_length");
    if (req.has_param("max_length")) j["max_length"] = int_param(req, "max_length");
    return filter_from_json(j);
  }

  std::string version_tag(const Dataset& ds, const DatasetSnapshot& snap) const {
    return snap.name + ":" + std::to_string(snap.version) + ":" + std::to_string(ds.concepts_generation());
  }

  Reply dataset_reply(const Dataset& ds, const DatasetSnapshot& snap, json body, int status = 200) const {
    return {status, std::move(body), version_tag(ds, snap)};
  }

  /// Wrap a handler: error mapping, version header, idempotent replay for mutations.
  template <class Fn>
  httplib::Server::Handler wrap(Fn fn, bool mutating = false) {
    return [this, fn = std::move(fn), mutating](const Req& req, Res& res) {
      try {
        auto run = [&]() -> DedupTable::Stored {
          Reply r = fn(req);
          return {r.status, r.body.dump(), r.version.value_or("")};
        };
        DedupTable::Stored out;
        std::string key = req.get_header_value("Idempotency-Key");
        if (mutating && key.empty() && !req.body.empty()) {
          const auto j = json::parse(req.body, nullptr, false);
          if (j.is_object() && j.contains("request_id") && j["request_id"].is_string()) key = j["request_id"].get<std::string>();
        }
        out = (mutating && !key.empty()) ? dedup_.run(req.method + " " + req.path + " " + key, run) : run();
        res.status = out.status;
        if (!out.version.empty()) {
          res.set_header("X-Dataset-Version", out.version);
          res.set_header("ETag", "\"" + out.version + "\"");
        }
        res.set_content(out.body, "application/json; charset=utf-8");
      } catch (...) {
        send_error(res, std::current_exception());
      }
    };
  }

  // -- routes ---------------------------------------------------------------

  void routes() {
    const std::string ds = R"(/datasets/([A-Za-z0-9._-]+))";
    const std::string sid = R"((-?\d+))";

    server_.set_post_routing_handler([this](const Req&, Res& res) {
      res.set_header("Access-Control-Allow-Origin", options_.cors_origin);
      res.set_header("Access-Control-Expose-Headers", "X-Dataset-Version, ETag");
    });
    server_.Options(R"(.*)", [](const Req&, Res& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, PATCH, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, Idempotency-Key");
      res.status = 204;
    });
    server_.set_error_handler([](const Req& req, Res& res) {
      if (!res.body.empty()) return;
      if (res.status == 404)
        send_json(res, 404, error_envelope("not_found", "no route for " + req.method + " " + req.path));
      else
        send_json(res, res.status, error_envelope("http_error", httplib::status_message(res.status)));
    });

    server_.Get("/health", wrap([this](const Req&) {
      json providers = json::object();
      for (const auto& [name, st] : provider_health(ws_->providers()))
        providers[name] = {{"configured", st.configured}, {"reachable", st.reachable}, {"mode", st.mode}};
      return Reply{200, {{"status", "ok"}, {"providers", providers}}, std::nullopt};
    }));

    server_.Get("/datasets", wrap([this](const Req&) {
      return Reply{200, {{"datasets", ws_->list()}}, std::nullopt};
    }));

    server_.Post("/datasets", wrap([this](const Req& req) { return ingest(req); }, true));

    server_.Get(ds, wrap([this](const Req& req) {
      auto d = ws_->get(req.matches[1]);
      const auto snap = d->snapshot();
      const auto model = d->concepts();
      json body = {{"name", snap->name},
                   {"version", snap->version},
                   {"dim", snap->dim},
                   {"size", snap->records.size()},
                   {"clustered", snap->clustered},
                   {"projection", {{"id", snap->projection->id()}, {"kind", to_string(snap->projection->kind)},
                                   {"degenerate", snap->projection->degenerate}}},
                   {"concepts", model ? json(model->dictionary.size()) : json(nullptr)}};
      return dataset_reply(*d, *snap, std::move(body));
    }));

    server_.Get(ds + "/points", wrap([this](const Req& req) {
      auto d = ws_->get(req.matches[1]);
      const auto snap = d->snapshot();
      json points = json::array();
      for (auto id : snap->filter(filter_from_query(req))) points.push_back(record_public_json(snap->get(id)));
      json body = {{"version", snap->version}, {"projection", snap->projection->id()}, {"points", std::move(points)}};
      return dataset_reply(*d, *snap, std::move(body));
    }));

    server_.Get(ds + "/stats", wrap([this](const Req& req) {
      auto d = ws_->get(req.matches[1]);
      const auto snap = d->snapshot();
      return dataset_reply(*d, *snap, stats_json(snap->stats()));
    }));

    server_.Get(ds + "/sentences/" + sid, wrap([this](const Req& req) { return sentence(req); }));

    server_.Get(ds + "/sentences/" + sid + "/concepts", wrap([this](const Req& req) {
      auto d = ws_->get(req.matches[1]);
      const auto snap = d->snapshot();
      std::optional<std::uint64_t> seed;
      if (req.has_param("seed")) seed = static_cast<std::uint64_t>(int_param(req, "seed"));
      const auto view = concepts_for(*d, id_from(req.matches[2]), seed);
      const auto model = d->concepts();
      json top = json::array();
      for (const auto& a : view.top)
        top.push_back({{"index", a.concept_index}, {"score", a.score}, {"label", model->dictionary.at(a.concept_index).label}});
      json sug = json::array();
      for (int j : view.suggested.concepts) sug.push_back(concept_json(model->dictionary.at(j)));
      json body = {{"top", top}, {"suggested", sug}, {"short_pool", view.suggested.short_pool}};
      return dataset_reply(*d, *snap, std::move(body));
    }));

    server_.Get(ds + "/concepts", wrap([this](const Req& req) {
      auto d = ws_->get(req.matches[1]);
      const auto model = d->concepts();
      if (!model) fail(ErrorCode::NotFound, "dataset has no concept model; train the SAE first");
      json arr = json::array();
      for (const auto& c : model->dictionary.concepts()) arr.push_back(concept_json(c));
      return dataset_reply(*d, *d->snapshot(), {{"concepts", arr}});
    }));

    auto search = wrap([this](const Req& req) {
      const auto name = req.matches.size() > 1 ? std::string(req.matches[1]) : param(req, "dataset");
      if (name.empty()) fail(ErrorCode::InvalidInput, "query parameter 'dataset' is required");
      auto d = ws_->get(name);
      const auto model = d->concepts();
      if (!model) fail(ErrorCode::NotFound, "dataset has no concept model; train the SAE first");
      json arr = json::array();
      for (int j : search_concepts(model->dictionary, param(req, "q"))) arr.push_back(concept_json(model->dictionary.at(j)));
      return dataset_reply(*d, *d->snapshot(), {{"results", arr}});
    });
    server_.Get("/concepts/search", search);
    server_.Get(ds + "/concepts/search", search);

    server_.Post(ds + R"(/augment/(\w+))", wrap([this](const Req& req) { return augment(req); }, true));

    server_.Get(ds + "/suggest/interpolation", wrap([this](const Req& req) {
      auto d = ws_->get(req.matches[1]);
      const auto snap = d->snapshot();
      const auto source = static_cast<SentenceId>(int_param(req, "source"));
      snap->get(source);
      const Point2D click{double_param(req, "cx"), double_param(req, "cy")};
      const auto k = int_param(req, "k", static_cast<long long>(kInterpolationSuggestions));
      if (k < 1) fail(ErrorCode::InvalidInput, "k must be positive");
      const auto s = suggest_interpolation_points(snap->placed_points(), source, click, static_cast<std::size_t>(k));
      json cands = json::array();
      for (auto id : s.candidates) cands.push_back(record_public_json(snap->get(id)));
      return dataset_reply(*d, *snap, {{"arrow_head", s.arrow_head}, {"candidates", cands}});
    }));

    server_.Get(ds + "/suggest/prompts", wrap([this](const Req& req) {
      auto d = ws_->get(req.matches[1]);
      const auto snap = d->snapshot();
      const auto& rec = snap->get(static_cast<SentenceId>(int_param(req, "sentence")));
      const auto k = int_param(req, "k", 5);
      if (k < 1 || k > 20) fail(ErrorCode::InvalidInput, "k must lie in [1, 20]");
      const auto s = suggest_prompts(rec.text, rec.category, *ws_->providers().llm, static_cast<std::size_t>(k));
      return dataset_reply(*d, *snap, {{"prompts", s.prompts}, {"static_fallback", s.static_fallback}});
    }));

    server_.Get(ds + "/history", wrap([this](const Req& req) {
      auto d = ws_->get(req.matches[1]);
      const auto snap = d->snapshot();
      std::optional<SentenceId> parent;
      if (req.has_param("parent")) parent = static_cast<SentenceId>(int_param(req, "parent"));
      json rounds = json::array();
      for (const auto& r : snap->history(parent)) rounds.push_back(round_with_children_json(*snap, *r));
      return dataset_reply(*d, *snap, {{"rounds", rounds}});
    }));

    auto patch = wrap(
        [this](const Req& req) {
          const auto body = parse_body(req);
          std::string name = req.matches.size() > 2 ? std::string(req.matches[1]) : param(req, "dataset");
          if (name.empty()) name = body.value("dataset", "");
          if (name.empty()) fail(ErrorCode::InvalidInput, "dataset is required (query 'dataset' or body field)");
          if (!body.contains("text") || !body["text"].is_string()) fail(ErrorCode::InvalidInput, "'text' (string) is required");
          auto d = ws_->get(name);
          const auto id = id_from(req.matches[req.matches.size() - 1]);
          const auto rec = d->edit_sentence(id, body["text"].get<std::string>());
          const auto snap = d->snapshot();
          return dataset_reply(*d, *snap, {{"sentence", record_public_json(rec)}, {"version", snap->version}});
        },
        true);
    server_.Patch("/sentences/" + sid, patch);
    server_.Patch(ds + "/sentences/" + sid, patch);

    server_.Delete(ds + "/sentences", wrap(
                                          [this](const Req& req) {
                                            auto d = ws_->get(req.matches[1]);
                                            const auto body = parse_body(req);
                                            if (!body.contains("ids") || !body["ids"].is_array())
                                              fail(ErrorCode::InvalidInput, "'ids' (array of sentence ids) is required");
                                            const auto n = d->delete_sentences(body["ids"].get<std::vector<SentenceId>>());
                                            const auto snap = d->snapshot();
                                            return dataset_reply(*d, *snap, {{"deleted", n}, {"version", snap->version}});
                                          },
                                          true));

    server_.Post(ds + R"(/jobs/(\w+))", wrap([this](const Req& req) { return submit_job(req); }, true));

    server_.Get(R"(/jobs/([A-Za-z0-9-]+))", wrap([this](const Req& req) {
      return Reply{200, job_json(jobs_.get(req.matches[1])), std::nullopt};
    }));

    server_.Get(ds + "/export", [this](const Req& req, Res& res) {
      try {
        auto d = ws_->get(req.matches[1]);
        const auto snap = d->snapshot();
        std::ostringstream out;
        export_jsonl(*snap, filter_from_query(req), out);
        res.set_header("X-Dataset-Version", version_tag(*d, *snap));
        res.set_content(out.str(), "application/x-ndjson; charset=utf-8");
      } catch (...) {
        send_error(res, std::current_exception());
      }
    });
  }

  static json concept_json(const Concept& c) {
    return {{"index", c.index}, {"label", c.label}, {"weak", c.weak}, {"unlabeled", c.unlabeled}};
  }

  // -- handlers -------------------------------------------------------------

  /// {"name", "content", "format"?: "csv"|"jsonl", "clusters"?, "seed"?} or {"name", "rows": [{"text", "category"?}]}
  Reply ingest(const Req& req) {
    const auto body = parse_body(req);
    if (!body.contains("name") || !body["name"].is_string()) fail(ErrorCode::InvalidInput, "'name' (string) is required");
    std::vector<IngestRow> rows;
    if (body.contains("rows")) {
      for (const auto& r : body["rows"]) {
        IngestRow row{r.at("text").get<std::string>(), std::nullopt};
        if (r.contains("category") && !r["category"].is_null()) row.category = r["category"].get<std::string>();
        rows.push_back(std::move(row));
      }
    } else if (body.contains("content") && body["content"].is_string()) {
      const auto content = body["content"].get<std::string>();
      const auto fmt = body.value("format", "");
      const IngestFormat f = fmt == "csv"     ? IngestFormat::Csv
                             : fmt == "jsonl" ? IngestFormat::Jsonl
                                              : sniff_format("", content);
      rows = parse_ingest_text(content, f);
    } else {
      fail(ErrorCode::InvalidInput, "body needs 'rows' or 'content'");
    }
    IngestOptions opts;
    if (body.contains("clusters") && !body["clusters"].is_null()) opts.clusters = body["clusters"].get<int>();
    opts.seed = body.value("seed", std::uint64_t{0});
    IngestReport report;
    auto d = ws_->ingest(body["name"].get<std::string>(), rows, opts, &report);
    const auto snap = d->snapshot();
    json out = {{"dataset", snap->name},
                {"version", snap->version},
                {"rows", report.rows},
                {"clustered", report.clustered},
                {"fallback_cluster_names", report.fallback_cluster_names},
                {"duplicates", report.duplicates},
                {"stats", stats_json(snap->stats())}};
    return dataset_reply(*d, *snap, std::move(out), 201);
  }

  Reply sentence(const Req& req) {
    auto d = ws_->get(req.matches[1]);
    const auto snap = d->snapshot();
    const auto id = id_from(req.matches[2]);
    json body = {{"sentence", record_public_json(snap->get(id))}};
    std::string focus = param(req, "focus");
    long long k = 10;
    if (req.has_param("neighbors")) {
      const auto v = req.get_param_value("neighbors");
      if (v == "cluster" || v == "lineage") {
        focus = v;
      } else {
        focus = "neighbors";
        k = int_param(req, "neighbors");
      }
    }
    if (req.has_param("k")) k = int_param(req, "k");
    if (focus == "neighbors") {
      if (k < 1) fail(ErrorCode::InvalidInput, "neighbor count must be positive");
      json hits = json::array();
      for (const auto& h : snap->neighbors(id, static_cast<std::size_t>(k)))
        hits.push_back({{"id", h.sentence_id}, {"score", h.score}});
      body["neighbors"] = hits;
    } else if (focus == "cluster") {
      body["cluster"] = snap->same_category(id);
    } else if (focus == "lineage") {
      const auto l = snap->lineage(id);
      body["lineage"] = {{"ancestors", l.ancestors}, {"children", l.children}};
    } else if (!focus.empty()) {
      fail(ErrorCode::InvalidInput, "focus must be neighbors, cluster or lineage");
    }
    return dataset_reply(*d, *snap, std::move(body));
  }

  Reply augment(const Req& req) {
    auto d = ws_->get(req.matches[1]);
    const auto method = method_from_string(std::string(req.matches[2]));
    if (method == Method::None) fail(ErrorCode::InvalidInput, "unknown augmentation method");
    const auto body = parse_body(req);
    if (!body.contains("parent")) fail(ErrorCode::InvalidInput, "'parent' is required");
    auto request = augment_request_from_json(method, body);
    request.parent = resolve_parent(*d->snapshot(), parent_ref_from_json(body["parent"]));
    const auto round = run_round(*d, request, ws_->providers());
    const auto snap = d->snapshot();
    json out = round_with_children_json(*snap, round);
    out["version"] = snap->version;
    return dataset_reply(*d, *snap, std::move(out));
  }

  Reply submit_job(const Req& req) {
    auto d = ws_->get(req.matches[1]);
    const std::string kind = req.matches[2];
    const auto body = parse_body(req);
    JobRunner::Task task;
    if (kind == "sae_train") {
      SAETrainConfig cfg = train_config_from_json(body);
      if (body.contains("lambda")) cfg.sparsity_weight = body["lambda"].get<double>();
      task = [d, cfg](const JobRunner::Progress& p) {
        const auto model = train_concepts(*d, cfg, p);
        return json{{"features", model->dictionary.size()},
                    {"epoch_loss", model->report.epoch_loss},
                    {"mean_l0", model->report.mean_l0},
                    {"dead_features", model->report.dead_features.size()}};
      };
    } else if (kind == "concept_labeling") {
      auto llm = ws_->providers().llm;
      task = [d, llm](const JobRunner::Progress& p) {
        const auto r = label_concepts(*d, *llm, p);
        return json{{"labeled", r.labeled}, {"weak", r.weak}, {"failed", r.failed}};
      };
    } else if (kind == "refit_projection") {
      task = [d](const JobRunner::Progress&) {
        const auto m = d->refit();
        return json{{"projection", m.id()}, {"degenerate", m.degenerate}};
      };
    } else {
      fail(ErrorCode::InvalidInput, "unknown job kind '" + kind + "'");
    }
    const auto id = jobs_.submit(kind, d->name(), std::move(task));
    return Reply{202, job_json(jobs_.get(id)), std::nullopt};
  }

  std::shared_ptr<Workspace> ws_;
  ServiceOptions options_;
  httplib::Server server_;
  JobRunner jobs_;
  DedupTable dedup_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<bool> stopped_{false};
};

}  // namespace amplio
