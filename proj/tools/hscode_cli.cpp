// Command-line front end: ingest, train, classify, eval, serve and a few
// inspection commands. Failures print {"error", "detail"} JSON on stderr
// and exit with status 1.

#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "hscode/bundle.hpp"
#include "hscode/ensemble.hpp"
#include "hscode/error.hpp"
#include "hscode/nomenclature.hpp"
#include "hscode/service.hpp"
#include "hscode/text_util.hpp"

using namespace hscode;

namespace {

int fail(std::string_view code, const std::string &detail) {
  std::cerr << nlohmann::json({{"error", code}, {"detail", detail}}).dump() << std::endl;
  return 1;
}

EngineConfig load_config(const std::string &config_path) {
  if (!config_path.empty()) {
    return engine_config_from_json(nlohmann::json::parse(read_file(config_path)));
  }
  return EngineConfig{};
}

void print_candidates(const std::vector<CandidateCode> &candidates) {
  std::cout << std::left << std::setw(6) << "rank" << std::setw(12) << "code" << std::setw(18)
            << "source" << "score\n";
  for (const auto &c : candidates) {
    std::cout << std::left << std::setw(6) << c.rank << std::setw(12) << c.code.display()
              << std::setw(18) << source_name(c.source) << std::fixed << std::setprecision(4)
              << c.score << " (raw " << c.raw_score << ")\n";
  }
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"HS code classifier"};
  app.require_subcommand(1);

  // ingest
  auto *ingest_cmd = app.add_subcommand("ingest", "Parse a schedule and prepare training data");
  std::string schedule_path, data_path, out_dir, abbreviations_path, created_at;
  double others_fraction = 0.001;
  char delimiter = ',';
  bool strict = false;
  ingest_cmd->add_option("--schedule", schedule_path, "Schedule text or JSON")->required();
  ingest_cmd->add_option("--data", data_path, "Labeled rows (.csv, .tsv, .jsonl)")->required();
  ingest_cmd->add_option("--out", out_dir, "Bundle directory")->required();
  ingest_cmd->add_option("--abbreviations", abbreviations_path, "Abbreviation table");
  ingest_cmd->add_option("--others-min-fraction", others_fraction,
                         "Classes below this share of rows become OTHERS");
  ingest_cmd->add_option("--created-at", created_at, "Dataset timestamp to record");
  ingest_cmd->add_option("--delimiter", delimiter, "Field delimiter for delimited files");
  ingest_cmd->add_flag("--strict", strict, "Reject schedule lines outside the grammar");

  // train
  auto *train_cmd = app.add_subcommand("train", "Train models and build the similarity stores");
  std::string bundle, config_path, mode_text;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  train_cmd->add_option("--bundle", bundle)->required();
  train_cmd->add_option("--mode", mode_text, "conditional or per-branch")
      ->check(CLI::IsMember({"conditional", "per-branch", "per_branch"}));
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--config", config_path, "Engine config JSON");

  // classify
  auto *classify_cmd = app.add_subcommand("classify", "Classify one description");
  std::string text, explain, classify_mode;
  std::optional<double> weight, value;
  std::size_t top_k = 3;
  bool flat = false, as_json = false;
  classify_cmd->add_option("--bundle", bundle)->required();
  classify_cmd->add_option("--text", text)->required();
  classify_cmd->add_option("--weight", weight);
  classify_cmd->add_option("--value", value);
  classify_cmd->add_option("--top-k", top_k)->check(CLI::PositiveNumber);
  classify_cmd->add_option("--mode", classify_mode)
      ->check(CLI::IsMember({"conditional", "per-branch", "per_branch"}));
  classify_cmd->add_option("--explain", explain, "dot or json")
      ->check(CLI::IsMember({"dot", "json"}));
  classify_cmd->add_flag("--flat", flat, "Use the flat HS6 model");
  classify_cmd->add_flag("--json", as_json, "Print candidates as JSON");

  // eval
  auto *eval_cmd = app.add_subcommand("eval", "Compare flat and hierarchical pipelines");
  std::string test_path;
  eval_cmd->add_option("--bundle", bundle)->required();
  eval_cmd->add_option("--test", test_path)->required();
  eval_cmd->add_option("--delimiter", delimiter);
  eval_cmd->add_flag("--json", as_json);

  // serve
  auto *serve_cmd = app.add_subcommand("serve", "Start the HTTP API");
  int port = 8080;
  std::string host = "127.0.0.1", audit_path;
  std::size_t retention = 10000;
  serve_cmd->add_option("--bundle", bundle)->required();
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--audit-store", audit_path, "Defaults to <bundle>.audit.jsonl");
  serve_cmd->add_option("--retention", retention)->check(CLI::PositiveNumber);

  // schedule validate
  auto *schedule_cmd = app.add_subcommand("schedule", "Schedule utilities");
  schedule_cmd->require_subcommand(1);
  auto *validate_cmd = schedule_cmd->add_subcommand("validate", "Check a schedule file");
  std::string validate_path;
  bool dump_json = false;
  validate_cmd->add_option("path", validate_path)->required();
  validate_cmd->add_flag("--strict", strict);
  validate_cmd->add_flag("--json", dump_json, "Print the canonical JSON tree");

  // model inspect
  auto *model_cmd = app.add_subcommand("model", "Model utilities");
  model_cmd->require_subcommand(1);
  auto *inspect_cmd = model_cmd->add_subcommand("inspect", "Print model shape and classes");
  std::string model_name;
  inspect_cmd->add_option("--bundle", bundle)->required();
  inspect_cmd->add_option("--model", model_name, "hs2, hs4_<chapter>, hs4_joint or flat");

  // kg export
  auto *kg_cmd = app.add_subcommand("kg", "Knowledge-graph utilities");
  kg_cmd->require_subcommand(1);
  auto *export_cmd = kg_cmd->add_subcommand("export", "Export a subheading graph");
  std::string kg_code, query;
  bool dot = false;
  export_cmd->add_option("--bundle", bundle)->required();
  export_cmd->add_option("--code", kg_code)->required();
  export_cmd->add_option("--query", query, "Color elements by similarity to this text");
  export_cmd->add_flag("--dot", dot, "Graphviz output (default JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    return fail("InvalidArgument", e.what());
  }

  try {
    if (*ingest_cmd) {
      IngestOptions options;
      options.prepare.others_min_fraction = others_fraction;
      options.created_at = created_at;
      if (!abbreviations_path.empty()) {
        options.prepare.abbreviations = load_abbreviations(abbreviations_path);
      }
      const auto schedule = load_schedule_file(schedule_path, {strict});
      const auto data = ingest(schedule, read_records(data_path, delimiter), options);
      save_ingest(data, out_dir);
      nlohmann::json summary = {{"bundle", out_dir},
                                {"schedule_codes", schedule.size()},
                                {"schedule_warnings", schedule.warnings().size()},
                                {"classes", data.prepared.dataset.class_stats.size()},
                                {"grouped_classes", data.prepared.dataset.grouped_classes.size()},
                                {"report", ingest_report_to_json(data.prepared.report)}};
      std::cout << summary.dump(2) << std::endl;
      return 0;
    }

    if (*train_cmd) {
      auto config = load_config(config_path);
      if (!mode_text.empty()) config.mode = parse_mode(mode_text);
      if (seed) config.train.seed = *seed;
      if (epochs) config.train.epochs = *epochs;
      auto engine = train_bundle(bundle, config);
      const auto manifest = read_manifest(bundle);
      std::cout << nlohmann::json({{"bundle", bundle},
                                   {"fingerprint", manifest.fingerprint},
                                   {"models", manifest.models},
                                   {"graphs", engine.graphs.size()},
                                   {"index_rows", engine.knn.size()}})
                       .dump(2)
                << std::endl;
      return 0;
    }

    if (*classify_cmd) {
      const auto engine = load_engine(bundle);
      ClassificationRequest request{text, weight, value, top_k, std::nullopt, std::nullopt,
                                    std::nullopt};
      if (!classify_mode.empty()) request.mode = parse_mode(classify_mode);
      const auto result = flat ? flat_classify(engine, request) : classify(engine, request);
      if (as_json) {
        std::cout << nlohmann::json({{"candidates", candidates_to_json(result.candidates)},
                                     {"unassignable", result.audit.unassignable}})
                         .dump(2)
                  << std::endl;
      } else {
        if (result.audit.unassignable) std::cout << "unassignable (OTHERS)\n";
        print_candidates(result.candidates);
      }
      if (explain == "json") {
        std::cout << audit_to_json(result.audit).dump(2) << std::endl;
      } else if (explain == "dot") {
        for (std::size_t i = 0; i < result.audit.kg_matches.size(); ++i) {
          std::cout << to_annotated_graph(result.audit.kg_graphs[i], result.audit.kg_matches[i]);
        }
      }
      return 0;
    }

    if (*eval_cmd) {
      const auto engine = load_engine(bundle);
      const auto report = evaluate(engine, read_records(test_path, delimiter));
      if (as_json) {
        std::cout << report_to_json(report).dump(2) << std::endl;
      } else {
        std::cout << format_report(report);
      }
      return 0;
    }

    if (*serve_cmd) {
      auto store = std::make_shared<AuditStore>(
          audit_path.empty() ? bundle + ".audit.jsonl" : audit_path, retention);
      auto service = ClassificationService::from_bundle(bundle, store);
      HttpServer server(service);
      std::cerr << "serving " << bundle << " on http://" << host << ":" << port << std::endl;
      server.run(host, port);
      return 0;
    }

    if (*validate_cmd) {
      const auto schedule = load_schedule_file(validate_path, {strict});
      if (dump_json) {
        std::cout << schedule_to_json(schedule).dump(2) << std::endl;
      } else {
        nlohmann::json warnings = nlohmann::json::array();
        for (const auto &w : schedule.warnings()) {
          warnings.push_back({{"line", w.line}, {"message", w.message}});
        }
        std::cout << nlohmann::json({{"valid", true},
                                     {"codes", schedule.size()},
                                     {"headings", schedule.headings().size()},
                                     {"warnings", warnings}})
                         .dump(2)
                  << std::endl;
      }
      return 0;
    }

    if (*inspect_cmd) {
      const auto manifest = read_manifest(bundle);
      nlohmann::json out = nlohmann::json::array();
      for (const auto &name : manifest.models) {
        if (!model_name.empty() && name != model_name) continue;
        const auto m = load_model(bundle + "/models", name);
        out.push_back({{"name", name},
                       {"level", m.level()},
                       {"parent", m.parent() ? nlohmann::json(m.parent()->digits())
                                             : nlohmann::json()},
                       {"rows", m.num_classes()},
                       {"cols", m.row_stride()},
                       {"feature_dim", m.feature_dim()},
                       {"degenerate", m.degenerate()},
                       {"final_loss", m.final_loss()},
                       {"classes", m.classes()}});
      }
      if (out.empty()) throw Error(ErrorCode::NotFound, "no model named '" + model_name + "'");
      std::cout << (model_name.empty() ? out : out[0]).dump(2) << std::endl;
      return 0;
    }

    if (*export_cmd) {
      const auto engine = load_engine(bundle);
      const auto code = HsCode::parse(kg_code);
      auto it = engine.graphs.find(code.digits());
      if (it == engine.graphs.end()) {
        throw Error(ErrorCode::UnknownCode, "no graph for " + code.display());
      }
      std::optional<MatchResult> match;
      if (!query.empty()) {
        const auto tokens = preprocess_text(query, engine.lexicon);
        if (tokens.empty()) throw Error(ErrorCode::EmptyAfterCleaning, "query has no tokens");
        match = score(engine.embedder->embed(tokens), it->second, engine.config.colors);
      }
      if (dot) {
        std::cout << to_annotated_graph(it->second, match);
      } else {
        auto j = graph_to_json(it->second);
        if (match) j["match"] = match_to_json(*match);
        std::cout << j.dump(2) << std::endl;
      }
      return 0;
    }
  } catch (const Error &e) {
    return fail(e.name(), e.detail());
  } catch (const nlohmann::json::exception &e) {
    return fail("FormatError", e.what());
  } catch (const std::exception &e) {
    return fail("Internal", e.what());
  }
  return 0;
}
