#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hscode/embed.hpp"
#include "hscode/extract.hpp"
#include "hscode/nomenclature.hpp"
#include "json.hpp"

namespace hscode {

struct GraphNode {
  std::size_t id = 0;
  std::string text;
  Embedding embedding;
};

struct GraphEdge {
  std::size_t id = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  std::string link;
  bool optional = false;
  Embedding embedding;
};

// Knowledge graph of one subheading description: noun-phrase nodes and
// linking-phrase edges, every element embedded.
struct KnowledgeGraph {
  HsCode code = HsCode::parse("00");
  std::string description;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  std::string embedder_fingerprint;
  // Built from the whole description because extraction found no entity.
  bool fallback = false;

  // S: nodes plus edges.
  std::size_t element_count() const { return nodes.size() + edges.size(); }
  // Element ids are "n<k>" for nodes and "e<k>" for edges.
  std::vector<std::pair<std::string, const Embedding *>> elements() const;
};

enum class ColorBucket { Green, LightGreen, Yellow, Blue };

std::string_view color_name(ColorBucket color);

struct ColorThresholds {
  double green = 0.75;
  double light_green = 0.5;
  double yellow = 0.25;

  void validate() const;
  ColorBucket bucket(double cosine) const;
};

struct ElementMatch {
  std::string id;
  double cosine = 0.0;
  ColorBucket color = ColorBucket::Blue;
};

struct MatchResult {
  HsCode code = HsCode::parse("00");
  double average_similarity = 0.0;
  std::vector<ElementMatch> per_element;
};

// Elements are embedded from their cleaned text (same normalization as
// queries). Throws NoEntities when `allow_fallback` is false and extraction
// finds nothing; otherwise falls back to a single node holding the whole
// description.
KnowledgeGraph build_graph(const HsCode &code, const std::string &description,
                           const Extractor &extractor, const Embedder &embedder,
                           bool allow_fallback = false);

// Average cosine between the query and every node and edge of the graph.
MatchResult score(const Embedding &query, const KnowledgeGraph &graph,
                  const ColorThresholds &colors = {});

// Sorted by average similarity descending, ties by code ascending.
std::vector<MatchResult> rank_top_k(const Embedding &query,
                                    const std::vector<KnowledgeGraph> &graphs, std::size_t k = 3,
                                    const ColorThresholds &colors = {});
std::vector<MatchResult> rank_top_k(const Embedding &query,
                                    const std::vector<const KnowledgeGraph *> &graphs,
                                    std::size_t k = 3, const ColorThresholds &colors = {});

// Graphviz digraph with node/edge colors from the match (blue without one).
std::string to_annotated_graph(const KnowledgeGraph &graph,
                               const std::optional<MatchResult> &match = std::nullopt);

nlohmann::json graph_to_json(const KnowledgeGraph &graph);
KnowledgeGraph graph_from_json(const nlohmann::json &json);
nlohmann::json match_to_json(const MatchResult &match);

}  // namespace hscode
