#include "hscode/bundle.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "hscode/error.hpp"
#include "hscode/text_util.hpp"

namespace fs = std::filesystem;

namespace hscode {

namespace {

std::string utc_timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

nlohmann::json parse_json_file(const std::string &path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::FormatError, path + ": " + e.what());
  }
}

void write_json(const std::string &path, const nlohmann::json &j) {
  write_file(path, j.dump(2) + "\n");
}

std::vector<std::string> schedule_texts(const TariffSchedule &schedule) {
  std::vector<std::string> out;
  std::vector<const TariffNode *> stack;
  for (const auto &r : schedule.roots()) stack.push_back(&r);
  while (!stack.empty()) {
    const auto *n = stack.back();
    stack.pop_back();
    out.push_back(n->description);
    for (const auto &c : n->children) stack.push_back(&c);
  }
  return out;
}

}  // namespace

nlohmann::json ingest_report_to_json(const IngestReport &r) {
  return {{"rows_read", r.rows_read},
          {"bad_code", r.bad_code},
          {"empty_after_cleaning", r.empty_after_cleaning},
          {"ambiguous_dropped", r.ambiguous_dropped},
          {"kept", r.kept}};
}

IngestedData ingest(const TariffSchedule &schedule, const std::vector<RawRecord> &rows,
                    const IngestOptions &options) {
  IngestedData out;
  out.schedule = schedule;
  out.prepared = prepare_training_data(rows, options.prepare, schedule_texts(schedule));
  out.created_at = options.created_at.empty() ? utc_timestamp() : options.created_at;
  out.others_min_fraction = options.prepare.others_min_fraction;
  return out;
}

void save_ingest(const IngestedData &data, const std::string &dir) {
  fs::create_directories(dir);
  write_json(dir + "/schedule.json", schedule_to_json(data.schedule));
  std::string lines;
  for (const auto &r : data.prepared.dataset.records) lines += record_to_json(r).dump() + "\n";
  write_file(dir + "/dataset.jsonl", lines);
  write_json(dir + "/lexicon.json", lexicon_to_json(data.prepared.lexicon));
  const auto &ds = data.prepared.dataset;
  write_json(dir + "/dataset_meta.json",
             {{"created_at", data.created_at},
              {"others_min_fraction", data.others_min_fraction},
              {"numeric_stats", stats_to_json(ds.numeric_stats)},
              {"class_stats", ds.class_stats},
              {"grouped_classes", ds.grouped_classes},
              {"report", ingest_report_to_json(data.prepared.report)}});
}

IngestedData load_ingest(const std::string &dir) {
  if (!fs::exists(dir + "/dataset_meta.json")) {
    throw Error(ErrorCode::IoError, dir + " is not an ingested bundle");
  }
  IngestedData out;
  out.schedule = schedule_from_json(parse_json_file(dir + "/schedule.json"));
  out.prepared.lexicon = lexicon_from_json(parse_json_file(dir + "/lexicon.json"));
  const auto meta = parse_json_file(dir + "/dataset_meta.json");
  out.created_at = meta.value("created_at", std::string());
  out.others_min_fraction = meta.value("others_min_fraction", 0.0);

  std::vector<CleanRecord> records;
  std::istringstream in(read_file(dir + "/dataset.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception &e) {
      throw Error(ErrorCode::FormatError, std::string("dataset.jsonl: ") + e.what());
    }
  }
  auto &ds = out.prepared.dataset;
  ds = make_dataset(std::move(records));
  ds.numeric_stats = stats_from_json(meta.at("numeric_stats"));
  ds.grouped_classes = meta.value("grouped_classes", std::set<std::string>{});
  const auto &rep = meta.at("report");
  out.prepared.report = {rep.value("rows_read", std::size_t{0}), rep.value("bad_code", std::size_t{0}),
                         rep.value("empty_after_cleaning", std::size_t{0}),
                         rep.value("ambiguous_dropped", std::size_t{0}),
                         rep.value("kept", std::size_t{0})};
  return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

nlohmann::json EngineManifest::to_json() const {
  return {{"format", format},
          {"version", version},
          {"created_at", created_at},
          {"embedder_fingerprint", embedder_fingerprint},
          {"models", models},
          {"files", files},
          {"fingerprint", fingerprint}};
}

EngineManifest EngineManifest::from_json(const nlohmann::json &j) {
  EngineManifest m;
  try {
    m.format = j.at("format").get<std::string>();
    m.version = j.at("version").get<int>();
    m.created_at = j.value("created_at", std::string());
    m.embedder_fingerprint = j.at("embedder_fingerprint").get<std::string>();
    m.models = j.at("models").get<std::vector<std::string>>();
    m.files = j.at("files").get<std::map<std::string, std::string>>();
    m.fingerprint = j.at("fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::ManifestMismatch, std::string("manifest: ") + e.what());
  }
  if (m.format != "hscode-engine" || m.version != 1) {
    throw Error(ErrorCode::ManifestMismatch, "unsupported manifest format");
  }
  return m;
}

namespace {

std::string table_fingerprint(const std::map<std::string, std::string> &files) {
  std::string blob;
  for (const auto &[path, hash] : files) blob += path + " " + hash + "\n";
  return sha256_hex(blob);
}

constexpr const char *kIngestFiles[] = {"schedule.json", "dataset.jsonl", "lexicon.json",
                                        "dataset_meta.json"};

}  // namespace

EngineManifest read_manifest(const std::string &dir) {
  const auto path = dir + "/manifest.json";
  if (!fs::exists(path)) throw Error(ErrorCode::NotTrained, dir + " has no trained engine");
  try {
    return EngineManifest::from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::ManifestMismatch, std::string("manifest.json: ") + e.what());
  }
}

EngineManifest save_engine(Engine &engine, const std::string &dir) {
  if (!engine.trained()) throw Error(ErrorCode::NotTrained, "engine has no trained models");
  for (const char *sub : {"models", "knn", "kg"}) fs::remove_all(dir + "/" + sub);
  fs::create_directories(dir + "/models");
  fs::create_directories(dir + "/knn");
  fs::create_directories(dir + "/kg");

  EngineManifest manifest;
  manifest.created_at = engine.config.created_at;
  if (manifest.created_at.empty() && fs::exists(dir + "/dataset_meta.json")) {
    manifest.created_at =
        parse_json_file(dir + "/dataset_meta.json").value("created_at", std::string());
  }
  manifest.embedder_fingerprint = engine.embedder->fingerprint();

  write_json(dir + "/config.json", engine_config_to_json(engine.config));

  const std::string models_dir = dir + "/models";
  auto put_model = [&](const SoftmaxModel &m, const std::string &name) {
    save_model(m, models_dir, name, "dataset_meta.json#numeric_stats");
    manifest.models.push_back(name);
  };
  put_model(*engine.hs2, "hs2");
  for (const auto &[chapter, m] : engine.hs4_branches) put_model(m, "hs4_" + chapter);
  if (engine.hs4_joint) put_model(*engine.hs4_joint, "hs4_joint");
  if (engine.flat) put_model(*engine.flat, "flat");

  std::vector<double> blob;
  std::string entries;
  for (const auto &e : engine.knn) {
    blob.insert(blob.end(), e.embedding.values().begin(), e.embedding.values().end());
    entries += nlohmann::json({{"code", e.code.digits()}, {"text", e.text}}).dump() + "\n";
  }
  write_file(dir + "/knn/index.bin", encode_weights(blob));
  write_file(dir + "/knn/entries.jsonl", entries);
  write_json(dir + "/knn/meta.json", {{"rows", engine.knn.size()},
                                      {"dimension", engine.embedder->dimension()},
                                      {"dtype", "float64-le"}});

  for (const auto &[code, g] : engine.graphs) {
    write_json(dir + "/kg/" + code + ".json", graph_to_json(g));
  }
  nlohmann::json kg_index = nlohmann::json::object();
  for (const auto &[heading, codes] : engine.graphs_by_heading) kg_index[heading] = codes;
  write_json(dir + "/kg/index.json", kg_index);

  auto hash = [&](const std::string &rel) {
    manifest.files[rel] = sha256_hex(read_file(dir + "/" + rel));
  };
  for (const char *f : kIngestFiles) hash(f);
  hash("config.json");
  for (const char *sub : {"models", "knn", "kg"}) {
    for (const auto &entry : fs::directory_iterator(dir + "/" + sub)) {
      if (entry.is_regular_file()) {
        hash(std::string(sub) + "/" + entry.path().filename().string());
      }
    }
  }
  manifest.fingerprint = table_fingerprint(manifest.files);
  write_json(dir + "/manifest.json", manifest.to_json());

  engine.fingerprint = manifest.fingerprint;
  engine.created_at = manifest.created_at;
  return manifest;
}

Engine load_engine(const std::string &dir) {
  const auto manifest = read_manifest(dir);
  if (table_fingerprint(manifest.files) != manifest.fingerprint) {
    throw Error(ErrorCode::ManifestMismatch, "manifest fingerprint does not match its file table");
  }
  for (const char *f : kIngestFiles) {
    if (!manifest.files.count(f)) {
      throw Error(ErrorCode::ManifestMismatch, std::string("manifest does not cover ") + f);
    }
  }
  for (const auto &[rel, hash] : manifest.files) {
    const auto path = dir + "/" + rel;
    if (!fs::exists(path)) throw Error(ErrorCode::ManifestMismatch, rel + " is missing");
    if (sha256_hex(read_file(path)) != hash) {
      throw Error(ErrorCode::ManifestMismatch, rel + " does not match its recorded hash");
    }
  }

  Engine engine;
  engine.config = engine_config_from_json(parse_json_file(dir + "/config.json"));
  engine.embedder = std::shared_ptr<const Embedder>(make_embedder(engine.config.embedder));
  if (engine.embedder->fingerprint() != manifest.embedder_fingerprint) {
    throw Error(ErrorCode::ManifestMismatch, "embedder config does not match the manifest");
  }
  engine.schedule = schedule_from_json(parse_json_file(dir + "/schedule.json"));
  engine.lexicon = lexicon_from_json(parse_json_file(dir + "/lexicon.json"));
  engine.stats =
      stats_from_json(parse_json_file(dir + "/dataset_meta.json").at("numeric_stats"));

  const std::string models_dir = dir + "/models";
  for (const auto &name : manifest.models) {
    auto m = load_model(models_dir, name);
    if (name == "hs2") {
      engine.hs2 = std::move(m);
    } else if (name == "hs4_joint") {
      engine.hs4_joint = std::move(m);
    } else if (name == "flat") {
      engine.flat = std::move(m);
    } else if (name.starts_with("hs4_")) {
      engine.hs4_branches.emplace(name.substr(4), std::move(m));
    } else {
      throw Error(ErrorCode::ManifestMismatch, "unknown model '" + name + "'");
    }
  }
  if (!engine.hs2) throw Error(ErrorCode::ManifestMismatch, "bundle has no chapter model");

  const auto d = engine.embedder->dimension();
  const auto blob = decode_weights(read_file(dir + "/knn/index.bin"));
  std::istringstream in(read_file(dir + "/knn/entries.jsonl"));
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if ((row + 1) * d > blob.size()) {
      throw Error(ErrorCode::ManifestMismatch, "similarity index is shorter than its entries");
    }
    std::vector<double> v(blob.begin() + static_cast<std::ptrdiff_t>(row * d),
                          blob.begin() + static_cast<std::ptrdiff_t>((row + 1) * d));
    KnnEntry entry{j.at("text").get<std::string>(), HsCode::parse(j.at("code").get<std::string>()),
                   Embedding(std::move(v))};
    engine.knn_by_heading[entry.code.truncate(Level::Heading).digits()].push_back(row);
    engine.knn.push_back(std::move(entry));
    ++row;
  }
  if (row * d != blob.size()) {
    throw Error(ErrorCode::ManifestMismatch, "similarity index size does not match its entries");
  }

  const auto kg_index = parse_json_file(dir + "/kg/index.json");
  for (const auto &[heading, codes] : kg_index.items()) {
    auto &list = engine.graphs_by_heading[heading];
    for (const auto &c : codes) {
      const auto code = c.get<std::string>();
      auto g = graph_from_json(parse_json_file(dir + "/kg/" + code + ".json"));
      if (g.embedder_fingerprint != manifest.embedder_fingerprint) {
        throw Error(ErrorCode::ManifestMismatch,
                    "graph " + code + " was embedded with a different embedder");
      }
      engine.graphs.emplace(code, std::move(g));
      list.push_back(code);
    }
  }
  engine.fingerprint = manifest.fingerprint;
  engine.created_at = manifest.created_at;
  return engine;
}

Engine train_bundle(const std::string &dir, const EngineConfig &config) {
  const auto data = load_ingest(dir);
  auto engine = build_engine(data.schedule, data.prepared.dataset, data.prepared.lexicon, config);
  save_engine(engine, dir);
  return engine;
}

}  // namespace hscode
