#include "hscode/kgraph.hpp"

#include <algorithm>
#include <sstream>

#include "hscode/error.hpp"
#include "hscode/preprocess.hpp"
#include "hscode/text_util.hpp"

namespace hscode {

std::vector<std::pair<std::string, const Embedding *>> KnowledgeGraph::elements() const {
  std::vector<std::pair<std::string, const Embedding *>> out;
  out.reserve(element_count());
  for (const auto &n : nodes) out.emplace_back("n" + std::to_string(n.id), &n.embedding);
  for (const auto &e : edges) out.emplace_back("e" + std::to_string(e.id), &e.embedding);
  return out;
}

std::string_view color_name(ColorBucket color) {
  switch (color) {
    case ColorBucket::Green: return "green";
    case ColorBucket::LightGreen: return "light-green";
    case ColorBucket::Yellow: return "yellow";
    case ColorBucket::Blue: return "blue";
  }
  return "blue";
}

void ColorThresholds::validate() const {
  if (!(green > light_green && light_green > yellow)) {
    throw Error(ErrorCode::InvalidArgument, "color thresholds must be strictly decreasing");
  }
}

ColorBucket ColorThresholds::bucket(double c) const {
  if (c >= green) return ColorBucket::Green;
  if (c >= light_green) return ColorBucket::LightGreen;
  if (c >= yellow) return ColorBucket::Yellow;
  return ColorBucket::Blue;
}

namespace {

Embedding embed_phrase(const std::string &phrase, const Embedder &embedder) {
  auto tokens = clean_text(phrase);
  if (tokens.empty()) {
    throw Error(ErrorCode::EmptyEmbedding, "phrase '" + phrase + "' is empty after cleaning");
  }
  return embedder.embed(tokens);
}

}  // namespace

KnowledgeGraph build_graph(const HsCode &code, const std::string &description,
                           const Extractor &extractor, const Embedder &embedder,
                           bool allow_fallback) {
  if (trim(description).empty()) {
    throw Error(ErrorCode::NoEntities, code.display() + " has an empty description");
  }
  KnowledgeGraph g;
  g.code = code;
  g.description = description;
  g.embedder_fingerprint = embedder.fingerprint();

  ExtractionResult ex;
  try {
    ex = extractor.run(description);
  } catch (const Error &e) {
    if (e.code() != ErrorCode::NoEntities || !allow_fallback) throw;
    g.fallback = true;
    g.nodes.push_back({0, collapse_whitespace(to_lower(description)),
                       embed_phrase(description, embedder)});
    return g;
  }
  for (std::size_t i = 0; i < ex.entities.size(); ++i) {
    g.nodes.push_back({i, ex.entities[i].text, embed_phrase(ex.entities[i].text, embedder)});
  }
  for (std::size_t i = 0; i < ex.relations.size(); ++i) {
    const auto &r = ex.relations[i];
    g.edges.push_back({i, r.subject, r.object, r.link, r.optional, embed_phrase(r.link, embedder)});
  }
  return g;
}

MatchResult score(const Embedding &query, const KnowledgeGraph &graph,
                  const ColorThresholds &colors) {
  MatchResult m;
  m.code = graph.code;
  const auto elements = graph.elements();
  if (elements.empty()) throw Error(ErrorCode::NoEntities, "graph has no elements");
  double sum = 0.0;
  for (const auto &[id, emb] : elements) {
    const double c = cosine(query, *emb);
    sum += c;
    m.per_element.push_back({id, c, colors.bucket(c)});
  }
  m.average_similarity = sum / static_cast<double>(elements.size());
  return m;
}

std::vector<MatchResult> rank_top_k(const Embedding &query,
                                    const std::vector<const KnowledgeGraph *> &graphs,
                                    std::size_t k, const ColorThresholds &colors) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  std::vector<MatchResult> out;
  out.reserve(graphs.size());
  for (const auto *g : graphs) out.push_back(score(query, *g, colors));
  std::sort(out.begin(), out.end(), [](const MatchResult &a, const MatchResult &b) {
    if (a.average_similarity != b.average_similarity) {
      return a.average_similarity > b.average_similarity;
    }
    return a.code < b.code;
  });
  if (out.size() > k) out.erase(out.begin() + static_cast<std::ptrdiff_t>(k), out.end());
  return out;
}

std::vector<MatchResult> rank_top_k(const Embedding &query,
                                    const std::vector<KnowledgeGraph> &graphs, std::size_t k,
                                    const ColorThresholds &colors) {
  std::vector<const KnowledgeGraph *> ptrs;
  ptrs.reserve(graphs.size());
  for (const auto &g : graphs) ptrs.push_back(&g);
  return rank_top_k(query, ptrs, k, colors);
}

// ---------------------------------------------------------------------------
// Graphviz export
// ---------------------------------------------------------------------------

namespace {

std::string dot_escape(const std::string &s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

// X11 color names understood by Graphviz.
std::string_view dot_color(ColorBucket c) {
  switch (c) {
    case ColorBucket::Green: return "green";
    case ColorBucket::LightGreen: return "palegreen";
    case ColorBucket::Yellow: return "yellow";
    case ColorBucket::Blue: return "lightblue";
  }
  return "lightblue";
}

std::string fmt_cos(double c) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(4);
  ss << c;
  return ss.str();
}

}  // namespace

std::string to_annotated_graph(const KnowledgeGraph &graph,
                               const std::optional<MatchResult> &match) {
  if (match) {
    if (match->code != graph.code || match->per_element.size() != graph.element_count()) {
      throw Error(ErrorCode::MatchGraphMismatch,
                  "match for " + match->code.display() + " does not belong to graph " +
                      graph.code.display());
    }
  }
  std::map<std::string, const ElementMatch *> by_id;
  if (match) {
    for (const auto &em : match->per_element) by_id[em.id] = &em;
  }
  auto attrs = [&](const std::string &id) {
    std::string out;
    auto it = by_id.find(id);
    const auto color = it == by_id.end() ? ColorBucket::Blue : it->second->color;
    out += "color=\"" + std::string(dot_color(color)) + "\"";
    if (it != by_id.end()) out += ", tooltip=\"cosine " + fmt_cos(it->second->cosine) + "\"";
    return std::pair{out, color};
  };

  std::ostringstream dot;
  dot << "digraph \"hs_" << graph.code.digits() << "\" {\n";
  dot << "  label=\"" << graph.code.display();
  if (match) dot << " avg cosine " << fmt_cos(match->average_similarity);
  dot << "\";\n";
  dot << "  node [shape=box, style=filled];\n";
  for (const auto &n : graph.nodes) {
    const std::string id = "n" + std::to_string(n.id);
    auto [a, color] = attrs(id);
    dot << "  " << id << " [label=\"" << dot_escape(n.text) << "\", fill" << a
        << ", class=\"" << color_name(color) << "\"];\n";
  }
  for (const auto &e : graph.edges) {
    const std::string id = "e" + std::to_string(e.id);
    auto [a, color] = attrs(id);
    dot << "  n" << e.from << " -> n" << e.to << " [label=\"" << dot_escape(e.link) << "\", "
        << a << ", class=\"" << color_name(color) << "\"";
    if (e.optional) dot << ", style=dashed";
    dot << "];\n";
  }
  dot << "}\n";
  return dot.str();
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

nlohmann::json graph_to_json(const KnowledgeGraph &g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto &n : g.nodes) {
    nodes.push_back({{"id", n.id}, {"text", n.text}, {"vector", n.embedding.values()}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto &e : g.edges) {
    edges.push_back({{"id", e.id},
                     {"from", e.from},
                     {"to", e.to},
                     {"link", e.link},
                     {"optional", e.optional},
                     {"vector", e.embedding.values()}});
  }
  return {{"code", g.code.digits()},        {"description", g.description},
          {"nodes", nodes},                 {"edges", edges},
          {"fallback", g.fallback},         {"embedder_fingerprint", g.embedder_fingerprint}};
}

KnowledgeGraph graph_from_json(const nlohmann::json &j) {
  KnowledgeGraph g;
  g.code = HsCode::parse(j.at("code").get<std::string>());
  g.description = j.value("description", std::string());
  g.fallback = j.value("fallback", false);
  g.embedder_fingerprint = j.value("embedder_fingerprint", std::string());
  for (const auto &n : j.at("nodes")) {
    g.nodes.push_back({n.at("id").get<std::size_t>(), n.at("text").get<std::string>(),
                       Embedding(n.at("vector").get<std::vector<double>>())});
  }
  for (const auto &e : j.at("edges")) {
    GraphEdge edge{e.at("id").get<std::size_t>(),   e.at("from").get<std::size_t>(),
                   e.at("to").get<std::size_t>(),   e.at("link").get<std::string>(),
                   e.value("optional", false),      Embedding(e.at("vector").get<std::vector<double>>())};
    if (edge.from >= g.nodes.size() || edge.to >= g.nodes.size()) {
      throw Error(ErrorCode::FormatError, "edge endpoint out of range in graph " + g.code.display());
    }
    g.edges.push_back(std::move(edge));
  }
  if (g.element_count() == 0) throw Error(ErrorCode::FormatError, "graph without elements");
  return g;
}

nlohmann::json match_to_json(const MatchResult &m) {
  nlohmann::json elements = nlohmann::json::array();
  for (const auto &e : m.per_element) {
    elements.push_back({{"id", e.id}, {"cosine", e.cosine}, {"color", color_name(e.color)}});
  }
  return {{"code", m.code.digits()},
          {"average_similarity", m.average_similarity},
          {"elements", elements}};
}

}  // namespace hscode
