#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hscode/classify.hpp"
#include "hscode/embed.hpp"
#include "hscode/extract.hpp"
#include "hscode/kgraph.hpp"
#include "hscode/nomenclature.hpp"
#include "hscode/preprocess.hpp"
#include "json.hpp"

namespace hscode {

struct EngineConfig {
  EmbedderConfig embedder;
  TrainConfig train;
  CompositionMode mode = CompositionMode::PerBranch;
  std::size_t top_k = 3;
  std::size_t knn_neighbors = 5;  // neighbors kept in the audit trail
  double knn_weight = 1.0;
  double kg_weight = 1.0;
  ColorThresholds colors;
  Extractor extractor;
  // Recorded in the manifest. Left empty, the dataset's ingest time is used.
  std::string created_at;

  void validate() const;
};

nlohmann::json engine_config_to_json(const EngineConfig &config);
EngineConfig engine_config_from_json(const nlohmann::json &json);

// One deduplicated training description in the similarity index.
struct KnnEntry {
  std::string text;
  HsCode code;
  Embedding embedding;
};

// Immutable once built or loaded; all queries are const.
struct Engine {
  EngineConfig config;
  TariffSchedule schedule;
  Lexicon lexicon;
  NumericStats stats;
  std::shared_ptr<const Embedder> embedder;

  std::optional<SoftmaxModel> hs2;
  std::map<std::string, SoftmaxModel> hs4_branches;  // chapter -> model
  std::optional<SoftmaxModel> hs4_joint;
  std::optional<SoftmaxModel> flat;

  std::vector<KnnEntry> knn;
  std::map<std::string, std::vector<std::size_t>> knn_by_heading;

  std::map<std::string, KnowledgeGraph> graphs;  // subheading digits -> graph
  std::map<std::string, std::vector<std::string>> graphs_by_heading;

  // Filled from the manifest when the engine is saved or loaded.
  std::string fingerprint;
  std::string created_at;

  bool trained() const { return hs2.has_value() && embedder != nullptr; }
  // sha256 prefix of each model's classes and weights, keyed by model name.
  std::map<std::string, std::string> model_fingerprints() const;
};

// Trains every model and builds both similarity stores. Throws SingleClass
// when the data covers fewer than two chapters; heading branches with a
// single class get a constant model instead.
Engine build_engine(const TariffSchedule &schedule, const Dataset &dataset,
                    const Lexicon &lexicon, const EngineConfig &config);

struct ClassificationRequest {
  std::string description;
  std::optional<double> weight;
  std::optional<double> value;
  std::optional<std::size_t> top_k;
  std::optional<CompositionMode> mode;
  std::optional<double> knn_weight;
  std::optional<double> kg_weight;
};

nlohmann::json request_to_json(const ClassificationRequest &request);
// Throws InvalidArgument on wrong field types or a missing description.
ClassificationRequest request_from_json(const nlohmann::json &json);

enum class CandidateSource { TrainKnn, KnowledgeGraph, Flat };

std::string_view source_name(CandidateSource source);

struct CandidateCode {
  HsCode code;
  CandidateSource source = CandidateSource::KnowledgeGraph;
  double score = 0.0;      // weighted score, normalized within its source
  double raw_score = 0.0;  // cosine, average cosine or probability
  std::size_t rank = 0;
};

struct KnnNeighbor {
  HsCode code;
  std::string text;
  double cosine = 0.0;
};

struct AuditTrail {
  std::string id;
  std::string pipeline;  // "hierarchical" or "flat"
  std::string created_at;
  ClassificationRequest request;
  std::vector<std::string> tokens;
  double weight_z = 0.0;
  double value_z = 0.0;

  std::optional<HierarchicalPrediction> hierarchy;
  bool branch_degenerate = false;
  std::vector<KnnNeighbor> knn_neighbors;
  std::optional<HsCode> knn_best;
  std::vector<MatchResult> kg_matches;
  std::vector<KnowledgeGraph> kg_graphs;  // parallel to kg_matches

  std::optional<ClassDistribution> flat_distribution;
  bool unassignable = false;

  std::vector<CandidateCode> candidates;
  std::map<std::string, std::string> fingerprints;
};

nlohmann::json audit_to_json(const AuditTrail &trail);

struct ClassificationResult {
  std::vector<CandidateCode> candidates;
  AuditTrail audit;
};

nlohmann::json candidates_to_json(const std::vector<CandidateCode> &candidates);

// Throws NotTrained, EmptyAfterCleaning or UnknownHeading.
ClassificationResult classify(const Engine &engine, const ClassificationRequest &request);
// Flat HS6 softmax; an OTHERS argmax marks the result unassignable.
ClassificationResult flat_classify(const Engine &engine, const ClassificationRequest &request);

struct PipelineMetrics {
  std::size_t rows = 0;
  double accuracy_at_1 = 0.0;
  double accuracy_at_3 = 0.0;
  double coverage = 0.0;  // rows given a concrete 6-digit code
  double others_rate = 0.0;
  double chapter_accuracy = 0.0;
  double heading_accuracy = 0.0;
  double subheading_accuracy = 0.0;
  std::size_t errors = 0;  // rows whose classification raised
};

struct EvaluationReport {
  PipelineMetrics hierarchical;
  PipelineMetrics flat;
};

// Throws EmptyTestSet when there are no usable rows.
EvaluationReport evaluate(const Engine &engine, const std::vector<CleanRecord> &rows);
EvaluationReport evaluate(const Engine &engine, const std::vector<RawRecord> &rows);

nlohmann::json report_to_json(const EvaluationReport &report);
std::string format_report(const EvaluationReport &report);

}  // namespace hscode
