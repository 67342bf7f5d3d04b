#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hscode/ensemble.hpp"
#include "hscode/nomenclature.hpp"
#include "hscode/preprocess.hpp"
#include "json.hpp"

namespace hscode {

// Bundle directory layout:
//   schedule.json  dataset.jsonl  lexicon.json  dataset_meta.json   (ingest)
//   config.json  models/  knn/  kg/  manifest.json                  (train)

struct IngestOptions {
  PrepareOptions prepare;
  // Stored as the dataset timestamp; defaults to the current UTC time.
  std::string created_at;
};

struct IngestedData {
  TariffSchedule schedule;
  PreparedData prepared;
  std::string created_at;
  double others_min_fraction = 0.0;
};

IngestedData ingest(const TariffSchedule &schedule, const std::vector<RawRecord> &rows,
                    const IngestOptions &options);
void save_ingest(const IngestedData &data, const std::string &bundle_dir);
IngestedData load_ingest(const std::string &bundle_dir);

nlohmann::json ingest_report_to_json(const IngestReport &report);

struct EngineManifest {
  std::string format = "hscode-engine";
  int version = 1;
  std::string created_at;
  std::string embedder_fingerprint;
  std::map<std::string, std::string> files;  // relative path -> sha256
  std::vector<std::string> models;
  std::string fingerprint;  // sha256 over the file table

  nlohmann::json to_json() const;
  static EngineManifest from_json(const nlohmann::json &json);
};

// Writes config, models, the similarity index, the graph store and the
// manifest. Returns the manifest (also recorded on `engine`).
EngineManifest save_engine(Engine &engine, const std::string &bundle_dir);

// Verifies every hash in the manifest before loading. Throws NotTrained
// when the bundle has no manifest and ManifestMismatch on any
// inconsistency.
Engine load_engine(const std::string &bundle_dir);

EngineManifest read_manifest(const std::string &bundle_dir);

// Trains from an ingested bundle and saves the result into it.
Engine train_bundle(const std::string &bundle_dir, const EngineConfig &config);

}  // namespace hscode
