#pragma once

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "amplio/http_providers.hpp"
#include "amplio/service.hpp"
#include "amplio/workspace.hpp"

#include <CLI11.hpp>

namespace amplio {

/// One entry of an augmentation spec file.
struct SpecEntry {
  std::size_t index = 0;
  ParentRef parent;
  AugmentRequest request;
};

/// Parse and resolve every entry before anything runs. Problems are collected
/// per entry; a non-empty `problems` means nothing may execute.
struct ResolvedSpec {
  std::vector<SpecEntry> entries;
  std::vector<std::string> problems;
};

inline ResolvedSpec resolve_spec(const json& spec, const DatasetSnapshot& snap) {
  const json& list = spec.is_object() && spec.contains("rounds") ? spec["rounds"] : spec;
  if (!list.is_array()) fail(ErrorCode::InvalidInput, "spec must be a JSON array of entries or {\"rounds\": [...]}");
  ResolvedSpec out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& e = list[i];
    try {
      if (!e.is_object()) fail(ErrorCode::InvalidInput, "entry is not an object");
      if (!e.contains("method") || !e["method"].is_string()) fail(ErrorCode::InvalidInput, "'method' is required");
      const auto method = method_from_string(e["method"].get<std::string>());
      if (method == Method::None) fail(ErrorCode::InvalidInput, "method must be concepts, interpolation or llm");
      if (!e.contains("parent")) fail(ErrorCode::InvalidInput, "'parent' is required");
      SpecEntry entry{i, parent_ref_from_json(e["parent"]), augment_request_from_json(method, e)};
      entry.request.parent = resolve_parent(snap, entry.parent);
      out.entries.push_back(std::move(entry));
    } catch (const Error& err) {
      std::string what = "entry " + std::to_string(i) + ": " + err.what();
      out.problems.push_back(std::move(what));
    } catch (const json::exception& err) {
      out.problems.push_back("entry " + std::to_string(i) + ": " + err.what());
    }
  }
  return out;
}

namespace detail {

inline std::atomic<bool>& serve_stop_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline void on_stop_signal(int) { serve_stop_flag().store(true); }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string(), path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Entry point shared by the `amplio` binary and in-process tests.
/// Returns 0 on success and 1 on any error.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"amplio: human-in-the-loop text data augmentation"};
  app.require_subcommand(1);

  std::optional<std::string> config_file;
  std::optional<std::string> data_dir;
  bool as_json = false;
  app.add_option("--config", config_file, "key=value config file");
  app.add_option("--data-dir", data_dir, "dataset storage directory");
  app.add_flag("--json", as_json, "machine-readable JSON on stdout");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "ingest a CSV or JSONL file as a new dataset");
  std::string ingest_file, name;
  std::optional<int> clusters;
  std::uint64_t ingest_seed = 0;
  ingest->add_option("file", ingest_file, "input file (.csv or .jsonl)")->required();
  ingest->add_option("--name", name, "dataset name")->required();
  ingest->add_option("--clusters", clusters, "k-means cluster count when rows carry no category");
  ingest->add_option("--seed", ingest_seed, "clustering seed");

  std::string dataset;
  auto dataset_opt = [&](CLI::App* sub) { sub->add_option("--dataset", dataset, "dataset name")->required(); };

  // train-sae
  auto* train = app.add_subcommand("train-sae", "train the gated SAE concept model");
  dataset_opt(train);
  SAETrainConfig tcfg;
  train->add_option("--features", tcfg.features, "dictionary size F")->capture_default_str();
  train->add_option("--lambda", tcfg.sparsity_weight, "sparsity weight")->capture_default_str();
  train->add_option("--seed", tcfg.seed, "training seed")->capture_default_str();
  train->add_option("--epochs", tcfg.epochs, "training epochs")->capture_default_str();
  train->add_option("--batch-size", tcfg.batch_size, "minibatch size")->capture_default_str();
  train->add_option("--lr", tcfg.learning_rate, "Adam learning rate")->capture_default_str();

  auto* label = app.add_subcommand("label-concepts", "label every concept with the LLM");
  dataset_opt(label);

  auto* augment = app.add_subcommand("augment", "run the augmentation rounds listed in a spec file");
  dataset_opt(augment);
  std::string spec_file;
  augment->add_option("--spec", spec_file, "JSON spec file")->required();

  auto* stats = app.add_subcommand("stats", "print dataset statistics");
  dataset_opt(stats);

  auto* exportc = app.add_subcommand("export", "write the dataset as JSONL");
  dataset_opt(exportc);
  std::string out_file;
  std::vector<std::string> kinds, methods, categories;
  exportc->add_option("--out", out_file, "output path ('-' for stdout)")->required();
  exportc->add_option("--kind", kinds, "keep only these kinds (original, generated)");
  exportc->add_option("--method", methods, "keep only these methods");
  exportc->add_option("--category", categories, "keep only these categories");

  auto* refit = app.add_subcommand("refit", "refit the 2-D projection on all sentences");
  dataset_opt(refit);

  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  std::optional<int> port;
  std::optional<std::string> host;
  serve->add_option("--port", port, "listen port (0 picks a free one)");
  serve->add_option("--host", host, "listen address");
  serve->add_option("--data-dir", data_dir, "dataset storage directory");

  try {
    std::vector<const char*> argv{"amplio"};
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  auto report = [&](const json& j, const std::string& human) {
    if (as_json) out << j.dump() << '\n';
    else out << human << '\n';
  };

  try {
    Settings settings = load_settings(config_file ? std::optional<std::filesystem::path>(*config_file) : std::nullopt);
    if (data_dir) settings.data_dir = *data_dir;
    if (port) settings.port = *port;
    if (host) settings.host = *host;
    settings.validate();
    auto bundle = make_providers(settings);
    auto ws = std::make_shared<Workspace>(settings.data_dir, bundle.providers, bundle.projection);

    if (*ingest) {
      const auto rows = parse_ingest_file(ingest_file);
      IngestOptions opts;
      opts.clusters = clusters;
      opts.seed = ingest_seed;
      IngestReport rep;
      auto ds = ws->ingest(name, rows, opts, &rep);
      const auto snap = ds->snapshot();
      report({{"dataset", name}, {"rows", rep.rows}, {"clustered", rep.clustered}, {"duplicates", rep.duplicates},
              {"version", snap->version}, {"stats", stats_json(snap->stats())}},
             "ingested " + std::to_string(rep.rows) + " sentences into '" + name + "'" +
                 (rep.clustered ? " (categories from k-means)" : ""));
    } else if (*train) {
      auto ds = ws->get(dataset);
      const auto model = train_concepts(*ds, tcfg);
      const auto& r = model->report;
      report({{"dataset", dataset}, {"features", model->dictionary.size()}, {"epoch_loss", r.epoch_loss},
              {"mean_l0", r.mean_l0}, {"dead_features", r.dead_features.size()}},
             "trained " + std::to_string(model->dictionary.size()) + " concepts; final loss " +
                 (r.epoch_loss.empty() ? std::string("n/a") : std::to_string(r.epoch_loss.back())) + ", mean L0 " +
                 std::to_string(r.mean_l0));
    } else if (*label) {
      auto ds = ws->get(dataset);
      const auto r = label_concepts(*ds, *bundle.providers.llm);
      report({{"dataset", dataset}, {"labeled", r.labeled}, {"weak", r.weak}, {"failed", r.failed}},
             "labeled " + std::to_string(r.labeled) + " concepts (" + std::to_string(r.weak) + " weak, " +
                 std::to_string(r.failed) + " failed)");
      if (r.failed > 0 && r.labeled == 0) return 1;
    } else if (*augment) {
      auto ds = ws->get(dataset);
      const auto spec = json::parse(detail::read_file(spec_file));
      const auto resolved = resolve_spec(spec, *ds->snapshot());
      if (!resolved.problems.empty()) {
        if (as_json) out << json{{"error", "unresolved spec entries"}, {"entries", resolved.problems}}.dump() << '\n';
        err << "spec rejected; nothing was executed:\n";
        for (const auto& p : resolved.problems) err << "  " << p << '\n';
        return 1;
      }
      json rounds = json::array();
      std::ostringstream human;
      for (const auto& e : resolved.entries) {
        const auto round = run_round(*ds, e.request, ws->providers());
        rounds.push_back(round_json(round));
        human << "round " << round.round_id << ": " << to_string(round.method) << " on " << round.parent_id << " -> "
              << round.child_ids.size() << " sentences\n";
      }
      ds->flush();
      auto text_out = human.str();
      if (!text_out.empty()) text_out.pop_back();
      report({{"dataset", dataset}, {"rounds", rounds}}, text_out);
    } else if (*stats) {
      auto ds = ws->get(dataset);
      const auto s = ds->snapshot()->stats();
      std::ostringstream human;
      human << "total " << s.total_sentences << " (original " << s.original_count << ", generated "
            << s.generated_count << "), categories " << s.total_categories << ", mean length "
            << s.mean_sentence_length;
      report(stats_json(s), human.str());
    } else if (*exportc) {
      auto ds = ws->get(dataset);
      FilterSpec f = filter_from_json({{"kinds", kinds}, {"methods", methods}, {"categories", categories}});
      const auto snap = ds->snapshot();
      std::size_t count = snap->filter(f).size();
      if (out_file == "-") {
        export_jsonl(*snap, f, out);
      } else {
        std::ofstream file(out_file, std::ios::binary | std::ios::trunc);
        if (!file) fail(ErrorCode::IoError, "cannot write " + out_file, out_file);
        export_jsonl(*snap, f, file);
        report({{"dataset", dataset}, {"out", out_file}, {"records", count}},
               "exported " + std::to_string(count) + " sentences to " + out_file);
      }
    } else if (*refit) {
      auto ds = ws->get(dataset);
      const auto m = ds->refit();
      ds->flush();
      report({{"dataset", dataset}, {"projection", m.id()}, {"degenerate", m.degenerate}}, "projection " + m.id());
    } else if (*serve) {
      Service service(ws, {settings.host, settings.port, "*"});
      const int bound = service.bind();
      err << "listening on http://" << settings.host << ":" << bound << '\n';
      detail::serve_stop_flag().store(false);
      std::signal(SIGINT, detail::on_stop_signal);
      std::signal(SIGTERM, detail::on_stop_signal);
      std::thread loop([&] { service.listen(); });
      while (!detail::serve_stop_flag().load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      service.stop();
      loop.join();
      err << "stopped; datasets flushed\n";
    }
    ws->flush_all();
    return 0;
  } catch (const ProviderError& e) {
    if (as_json) out << json{{"error", e.what()}, {"code", to_string(e.code())}, {"kind", to_string(e.kind())}}.dump() << '\n';
    err << "error: " << e.what() << " [" << to_string(e.kind()) << "]\n";
  } catch (const Error& e) {
    if (as_json) out << json{{"error", e.what()}, {"code", to_string(e.code())}, {"detail", e.detail()}}.dump() << '\n';
    err << "error: " << e.what();
    if (!e.detail().empty()) err << " (" << e.detail() << ")";
    err << '\n';
  } catch (const std::exception& e) {
    if (as_json) out << json{{"error", e.what()}, {"code", "internal"}}.dump() << '\n';
    err << "error: " << e.what() << '\n';
  }
  return 1;
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace amplio
