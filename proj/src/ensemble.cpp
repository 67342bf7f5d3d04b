#include "hscode/ensemble.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <set>
#include <sstream>

#include "hscode/error.hpp"
#include "hscode/text_util.hpp"

namespace hscode {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void EngineConfig::validate() const {
  embedder.validate();
  train.validate();
  colors.validate();
  if (top_k < 1) throw Error(ErrorCode::InvalidArgument, "top_k must be >= 1");
  if (!(knn_weight >= 0.0) || !(kg_weight >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "resolver weights must be non-negative");
  }
}

nlohmann::json engine_config_to_json(const EngineConfig &c) {
  auto extractor = c.extractor.lexicon.to_json();
  extractor["rules"] = c.extractor.rules.to_json();
  return {{"embedder", embedder_config_to_json(c.embedder)},
          {"train", train_config_to_json(c.train)},
          {"mode", mode_name(c.mode)},
          {"top_k", c.top_k},
          {"knn_neighbors", c.knn_neighbors},
          {"knn_weight", c.knn_weight},
          {"kg_weight", c.kg_weight},
          {"colors",
           {{"green", c.colors.green},
            {"light_green", c.colors.light_green},
            {"yellow", c.colors.yellow}}},
          {"extractor", extractor},
          {"created_at", c.created_at}};
}

EngineConfig engine_config_from_json(const nlohmann::json &j) {
  EngineConfig c;
  try {
    if (j.contains("embedder")) c.embedder = embedder_config_from_json(j["embedder"]);
    if (j.contains("train")) c.train = train_config_from_json(j["train"]);
    if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
    c.top_k = j.value("top_k", c.top_k);
    c.knn_neighbors = j.value("knn_neighbors", c.knn_neighbors);
    c.knn_weight = j.value("knn_weight", c.knn_weight);
    c.kg_weight = j.value("kg_weight", c.kg_weight);
    if (j.contains("colors")) {
      const auto &col = j["colors"];
      c.colors.green = col.value("green", c.colors.green);
      c.colors.light_green = col.value("light_green", c.colors.light_green);
      c.colors.yellow = col.value("yellow", c.colors.yellow);
    }
    if (j.contains("extractor")) c.extractor = Extractor::from_json(j["extractor"]);
    c.created_at = j.value("created_at", std::string());
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::FormatError, std::string("engine config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Build
// ---------------------------------------------------------------------------

namespace {

FeatureVector make_features(const Embedding &embedding, double weight_z, double value_z) {
  FeatureVector x = embedding.values();
  x.push_back(weight_z);
  x.push_back(value_z);
  return x;
}

SoftmaxModel fit_level(const std::vector<LabeledExample> &examples, const TrainConfig &config,
                       int level, std::optional<HsCode> parent, std::size_t feature_dim) {
  std::set<std::string> labels;
  for (const auto &e : examples) labels.insert(e.label);
  if (labels.size() == 1) {
    return SoftmaxModel::constant(*labels.begin(), feature_dim, level, std::move(parent));
  }
  return train(examples, config, level, std::move(parent));
}

std::string model_hash(const SoftmaxModel &m) {
  std::string blob = join(m.classes(), "\n");
  blob += '\0';
  blob += encode_weights(m.weights());
  return sha256_hex(blob).substr(0, 16);
}

}  // namespace

std::map<std::string, std::string> Engine::model_fingerprints() const {
  std::map<std::string, std::string> out;
  if (hs2) out["hs2"] = model_hash(*hs2);
  for (const auto &[ch, m] : hs4_branches) out["hs4_" + ch] = model_hash(m);
  if (hs4_joint) out["hs4_joint"] = model_hash(*hs4_joint);
  if (flat) out["flat"] = model_hash(*flat);
  return out;
}

Engine build_engine(const TariffSchedule &schedule, const Dataset &dataset,
                    const Lexicon &lexicon, const EngineConfig &config) {
  config.validate();
  Engine engine;
  engine.config = config;
  engine.schedule = schedule;
  engine.lexicon = lexicon;
  engine.stats = dataset.numeric_stats;
  engine.created_at = config.created_at;
  engine.embedder = std::shared_ptr<const Embedder>(make_embedder(config.embedder));
  const auto &embedder = *engine.embedder;
  const std::size_t feature_dim = embedder.dimension() + 2;

  // One embedding per distinct cleaned text.
  std::map<std::string, Embedding> by_text;
  for (const auto &r : dataset.records) {
    auto text = r.text();
    if (!by_text.count(text)) by_text.emplace(std::move(text), embedder.embed(r.tokens));
  }

  std::vector<LabeledExample> chapters, headings, flat;
  std::map<std::string, std::vector<LabeledExample>> per_chapter;
  for (const auto &r : dataset.records) {
    auto x = make_features(by_text.at(r.text()), r.weight_z, r.value_z);
    const auto chapter = r.hs_code.truncate(Level::Chapter).digits();
    const auto heading = r.hs_code.truncate(Level::Heading).digits();
    chapters.push_back({x, chapter});
    headings.push_back({x, heading});
    per_chapter[chapter].push_back({x, heading});
    flat.push_back({std::move(x), r.label});
  }
  if (chapters.empty()) throw Error(ErrorCode::SingleClass, "dataset has no records");

  engine.hs2 = train(chapters, config.train, 2);
  for (const auto &[chapter, examples] : per_chapter) {
    engine.hs4_branches.emplace(chapter, fit_level(examples, config.train, 4,
                                                   HsCode::parse(chapter), feature_dim));
  }
  engine.hs4_joint = fit_level(headings, config.train, 4, std::nullopt, feature_dim);
  engine.flat = fit_level(flat, config.train, 6, std::nullopt, feature_dim);

  // After ambiguity resolution each text carries a single code.
  std::map<std::string, HsCode> text_code;
  for (const auto &r : dataset.records) text_code.emplace(r.text(), r.hs_code);
  for (auto &[text, code] : text_code) {
    engine.knn_by_heading[code.truncate(Level::Heading).digits()].push_back(engine.knn.size());
    engine.knn.push_back({text, code, by_text.at(text)});
  }

  for (const auto &heading : schedule.headings()) {
    auto &codes = engine.graphs_by_heading[heading.digits()];
    for (const auto &cd : codes_under(schedule, heading, Level::Subheading)) {
      engine.graphs.emplace(cd.code.digits(), build_graph(cd.code, cd.description,
                                                          config.extractor, embedder, true));
      codes.push_back(cd.code.digits());
    }
  }
  return engine;
}

// ---------------------------------------------------------------------------
// Requests and audit JSON
// ---------------------------------------------------------------------------

std::string_view source_name(CandidateSource s) {
  switch (s) {
    case CandidateSource::TrainKnn: return "train_knn";
    case CandidateSource::KnowledgeGraph: return "knowledge_graph";
    case CandidateSource::Flat: return "flat";
  }
  return "flat";
}

nlohmann::json request_to_json(const ClassificationRequest &r) {
  nlohmann::json j = {{"description", r.description}};
  if (r.weight) j["weight"] = *r.weight;
  if (r.value) j["value"] = *r.value;
  if (r.top_k) j["top_k"] = *r.top_k;
  if (r.mode) j["mode"] = mode_name(*r.mode);
  if (r.knn_weight) j["knn_weight"] = *r.knn_weight;
  if (r.kg_weight) j["kg_weight"] = *r.kg_weight;
  return j;
}

ClassificationRequest request_from_json(const nlohmann::json &j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "request must be a JSON object");
  if (!j.contains("description") || !j["description"].is_string()) {
    throw Error(ErrorCode::InvalidArgument, "'description' must be a string");
  }
  ClassificationRequest r;
  r.description = j["description"].get<std::string>();
  auto number = [&](const char *key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_number()) {
      throw Error(ErrorCode::InvalidArgument, std::string("'") + key + "' must be a number");
    }
    return j[key].get<double>();
  };
  r.weight = number("weight");
  r.value = number("value");
  r.knn_weight = number("knn_weight");
  r.kg_weight = number("kg_weight");
  if (j.contains("top_k") && !j["top_k"].is_null()) {
    if (!j["top_k"].is_number_integer() || j["top_k"].get<long long>() < 1) {
      throw Error(ErrorCode::InvalidArgument, "'top_k' must be a positive integer");
    }
    r.top_k = j["top_k"].get<std::size_t>();
  }
  if (j.contains("mode") && !j["mode"].is_null()) {
    if (!j["mode"].is_string()) throw Error(ErrorCode::InvalidArgument, "'mode' must be a string");
    r.mode = parse_mode(j["mode"].get<std::string>());
  }
  return r;
}

nlohmann::json candidates_to_json(const std::vector<CandidateCode> &candidates) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto &c : candidates) {
    out.push_back({{"code", c.code.digits()},
                   {"display", c.code.display()},
                   {"source", source_name(c.source)},
                   {"score", c.score},
                   {"raw_score", c.raw_score},
                   {"rank", c.rank}});
  }
  return out;
}

namespace {

nlohmann::json annotated_graph_json(const KnowledgeGraph &g, const MatchResult &m) {
  std::map<std::string, const ElementMatch *> by_id;
  for (const auto &e : m.per_element) by_id[e.id] = &e;
  auto decorate = [&](nlohmann::json item, const std::string &id) {
    const auto *em = by_id.at(id);
    item["cosine"] = em->cosine;
    item["color"] = color_name(em->color);
    return item;
  };
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto &n : g.nodes) {
    const auto id = "n" + std::to_string(n.id);
    nodes.push_back(decorate({{"id", id}, {"text", n.text}}, id));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto &e : g.edges) {
    const auto id = "e" + std::to_string(e.id);
    edges.push_back(decorate({{"id", id},
                              {"from", "n" + std::to_string(e.from)},
                              {"to", "n" + std::to_string(e.to)},
                              {"text", e.link},
                              {"optional", e.optional}},
                             id));
  }
  return {{"code", g.code.digits()},
          {"display", g.code.display()},
          {"description", g.description},
          {"fallback", g.fallback},
          {"average_similarity", m.average_similarity},
          {"element_count", g.element_count()},
          {"nodes", nodes},
          {"edges", edges}};
}

}  // namespace

nlohmann::json audit_to_json(const AuditTrail &t) {
  nlohmann::json j = {{"id", t.id},
                      {"pipeline", t.pipeline},
                      {"created_at", t.created_at},
                      {"request", request_to_json(t.request)},
                      {"cleaned_text", join(t.tokens, " ")},
                      {"tokens", t.tokens},
                      {"weight_z", t.weight_z},
                      {"value_z", t.value_z},
                      {"candidates", candidates_to_json(t.candidates)},
                      {"fingerprints", t.fingerprints}};
  if (t.hierarchy) {
    const auto &h = *t.hierarchy;
    j["hs2"] = {{"distribution", distribution_to_json(h.chapter_dist)},
                {"chosen", h.chapter},
                {"probability", h.chapter_prob}};
    j["hs4"] = {{"distribution", distribution_to_json(h.heading_dist)},
                {"chosen", h.heading},
                {"probability", h.heading_prob},
                {"mode", mode_name(h.mode)},
                {"degenerate_branch", t.branch_degenerate}};
    if (!h.raw_conditional.empty()) j["hs4"]["raw_conditional"] = h.raw_conditional;
    nlohmann::json neighbors = nlohmann::json::array();
    for (const auto &n : t.knn_neighbors) {
      neighbors.push_back({{"code", n.code.digits()}, {"text", n.text}, {"cosine", n.cosine}});
    }
    j["knn"] = {{"neighbors", neighbors},
                {"best", t.knn_best ? nlohmann::json(t.knn_best->digits()) : nlohmann::json()}};
    nlohmann::json matches = nlohmann::json::array();
    for (std::size_t i = 0; i < t.kg_matches.size(); ++i) {
      matches.push_back(annotated_graph_json(t.kg_graphs[i], t.kg_matches[i]));
    }
    j["kg"] = {{"matches", matches}};
  }
  if (t.flat_distribution) {
    j["flat"] = {{"distribution", distribution_to_json(*t.flat_distribution)},
                 {"unassignable", t.unassignable}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms
     << 'Z';
  return ss.str();
}

struct Query {
  std::vector<std::string> tokens;
  double weight_z = 0.0;
  double value_z = 0.0;
};

// Missing numerics sit at the training mean.
Query prepare_query(const Engine &engine, const ClassificationRequest &request) {
  Query q;
  q.tokens = preprocess_text(request.description, engine.lexicon);
  if (q.tokens.empty()) {
    throw Error(ErrorCode::EmptyAfterCleaning, "description has no usable tokens");
  }
  const double w = request.weight.value_or(engine.stats.weight_mean);
  const double v = request.value.value_or(engine.stats.value_mean);
  std::tie(q.weight_z, q.value_z) = engine.stats.standardize(w, v);
  return q;
}

void require_trained(const Engine &engine) {
  if (!engine.trained()) throw Error(ErrorCode::NotTrained, "engine has no trained models");
}

AuditTrail start_trail(const Engine &engine, const ClassificationRequest &request,
                       const Query &q, std::string pipeline) {
  AuditTrail t;
  t.pipeline = std::move(pipeline);
  t.created_at = utc_now();
  t.request = request;
  t.tokens = q.tokens;
  t.weight_z = q.weight_z;
  t.value_z = q.value_z;
  t.fingerprints = engine.model_fingerprints();
  t.fingerprints["embedder"] = engine.embedder->fingerprint();
  if (!engine.fingerprint.empty()) t.fingerprints["engine"] = engine.fingerprint;
  return t;
}

struct Scored {
  HsCode code;
  double score;
};

// Scales a resolver's list so its best entry scores `weight`.
std::vector<Scored> normalize(std::vector<Scored> list, double weight) {
  double best = 0.0;
  for (const auto &s : list) best = std::max(best, s.score);
  for (auto &s : list) s.score = weight * (best > 0.0 ? s.score / best : s.score);
  return list;
}

struct ResolveResult {
  std::vector<KnnNeighbor> neighbors;
  std::vector<Scored> knn_codes;  // best cosine per code, descending
  std::vector<MatchResult> kg;
  std::vector<const KnowledgeGraph *> kg_graphs;
};

ResolveResult resolve_subheading(const Engine &engine, const std::string &heading,
                                 const Embedding &query, std::size_t top_k) {
  ResolveResult out;
  if (auto it = engine.knn_by_heading.find(heading); it != engine.knn_by_heading.end()) {
    for (auto idx : it->second) {
      const auto &entry = engine.knn[idx];
      out.neighbors.push_back({entry.code, entry.text, cosine(query, entry.embedding)});
    }
  }
  std::sort(out.neighbors.begin(), out.neighbors.end(),
            [](const KnnNeighbor &a, const KnnNeighbor &b) {
              if (a.cosine != b.cosine) return a.cosine > b.cosine;
              if (a.code != b.code) return a.code < b.code;
              return a.text < b.text;
            });
  std::set<std::string> seen;
  for (const auto &n : out.neighbors) {
    if (seen.insert(n.code.digits()).second) out.knn_codes.push_back({n.code, n.cosine});
  }

  if (auto it = engine.graphs_by_heading.find(heading); it != engine.graphs_by_heading.end()) {
    std::vector<const KnowledgeGraph *> graphs;
    for (const auto &code : it->second) graphs.push_back(&engine.graphs.at(code));
    if (!graphs.empty()) {
      out.kg = rank_top_k(query, graphs, top_k, engine.config.colors);
      for (const auto &m : out.kg) out.kg_graphs.push_back(&engine.graphs.at(m.code.digits()));
    }
  }
  return out;
}

std::vector<CandidateCode> merge_candidates(const std::vector<Scored> &kg,
                                            const std::vector<Scored> &knn, double kg_weight,
                                            double knn_weight, std::size_t top_k) {
  std::map<std::string, CandidateCode> best;
  auto offer = [&](const std::vector<Scored> &raw, double weight, CandidateSource source) {
    const auto scaled = normalize(raw, weight);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CandidateCode c{raw[i].code, source, scaled[i].score, raw[i].score, 0};
      auto [it, inserted] = best.emplace(raw[i].code.digits(), c);
      // Offered KG first, so an equal kNN score never displaces it.
      if (!inserted && c.score > it->second.score) it->second = c;
    }
  };
  offer(kg, kg_weight, CandidateSource::KnowledgeGraph);
  offer(knn, knn_weight, CandidateSource::TrainKnn);

  std::vector<CandidateCode> out;
  for (auto &[code, c] : best) out.push_back(c);
  std::sort(out.begin(), out.end(), [](const CandidateCode &a, const CandidateCode &b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.source != b.source) return a.source == CandidateSource::KnowledgeGraph;
    return a.code < b.code;
  });
  if (out.size() > top_k) out.erase(out.begin() + static_cast<std::ptrdiff_t>(top_k), out.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
  return out;
}

ClassificationResult classify_query(const Engine &engine, const ClassificationRequest &request,
                                    const Query &q) {
  const auto &cfg = engine.config;
  const auto top_k = request.top_k.value_or(cfg.top_k);
  const auto mode = request.mode.value_or(cfg.mode);
  if (top_k < 1) throw Error(ErrorCode::InvalidArgument, "top_k must be >= 1");

  const auto embedding = engine.embedder->embed(q.tokens);
  const auto x = make_features(embedding, q.weight_z, q.value_z);
  auto h = hierarchical_predict(x, *engine.hs2, engine.hs4_branches,
                                engine.hs4_joint ? &*engine.hs4_joint : nullptr, mode);

  const auto heading = HsCode::parse(h.heading);
  if (!engine.schedule.contains(heading)) {
    throw Error(ErrorCode::UnknownHeading,
                "heading " + heading.display() + " is not in the schedule");
  }

  auto resolved = resolve_subheading(engine, h.heading, embedding, top_k);

  AuditTrail trail = start_trail(engine, request, q, "hierarchical");
  if (mode == CompositionMode::PerBranch) {
    trail.branch_degenerate = engine.hs4_branches.at(h.chapter).degenerate();
  }
  trail.hierarchy = std::move(h);
  const auto keep = std::max(top_k, cfg.knn_neighbors);
  trail.knn_neighbors.assign(resolved.neighbors.begin(),
                             resolved.neighbors.begin() +
                                 static_cast<std::ptrdiff_t>(std::min(keep, resolved.neighbors.size())));
  if (!resolved.knn_codes.empty()) trail.knn_best = resolved.knn_codes.front().code;
  trail.kg_matches = resolved.kg;
  for (const auto *g : resolved.kg_graphs) trail.kg_graphs.push_back(*g);

  std::vector<Scored> kg_scored;
  for (const auto &m : resolved.kg) kg_scored.push_back({m.code, m.average_similarity});
  auto knn_scored = resolved.knn_codes;
  if (knn_scored.size() > top_k) {
    knn_scored.erase(knn_scored.begin() + static_cast<std::ptrdiff_t>(top_k), knn_scored.end());
  }
  trail.candidates =
      merge_candidates(kg_scored, knn_scored, request.kg_weight.value_or(cfg.kg_weight),
                       request.knn_weight.value_or(cfg.knn_weight), top_k);

  ClassificationResult result;
  result.candidates = trail.candidates;
  result.audit = std::move(trail);
  return result;
}

ClassificationResult flat_query(const Engine &engine, const ClassificationRequest &request,
                                const Query &q) {
  if (!engine.flat) throw Error(ErrorCode::NotTrained, "no flat model");
  const auto top_k = request.top_k.value_or(engine.config.top_k);
  const auto embedding = engine.embedder->embed(q.tokens);
  const auto x = make_features(embedding, q.weight_z, q.value_z);
  auto dist = predict_proba(*engine.flat, x);

  AuditTrail trail = start_trail(engine, request, q, "flat");
  const auto ranked = dist.ranked();
  trail.unassignable = !ranked.empty() && ranked.front().first == kOthersLabel;
  for (std::size_t i = 0; i < ranked.size() && i < top_k; ++i) {
    if (ranked[i].first == kOthersLabel) continue;
    trail.candidates.push_back({HsCode::parse(ranked[i].first), CandidateSource::Flat,
                                ranked[i].second, ranked[i].second, 0});
  }
  for (std::size_t i = 0; i < trail.candidates.size(); ++i) trail.candidates[i].rank = i + 1;
  trail.flat_distribution = std::move(dist);

  ClassificationResult result;
  result.candidates = trail.candidates;
  result.audit = std::move(trail);
  return result;
}

}  // namespace

ClassificationResult classify(const Engine &engine, const ClassificationRequest &request) {
  require_trained(engine);
  return classify_query(engine, request, prepare_query(engine, request));
}

ClassificationResult flat_classify(const Engine &engine, const ClassificationRequest &request) {
  require_trained(engine);
  return flat_query(engine, request, prepare_query(engine, request));
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

struct Tally {
  std::size_t rows = 0, top1 = 0, top3 = 0, covered = 0, others = 0;
  std::size_t chapter = 0, heading = 0, errors = 0;

  PipelineMetrics metrics() const {
    PipelineMetrics m;
    m.rows = rows;
    m.errors = errors;
    if (rows == 0) return m;
    const auto n = static_cast<double>(rows);
    m.accuracy_at_1 = static_cast<double>(top1) / n;
    m.accuracy_at_3 = static_cast<double>(top3) / n;
    m.coverage = static_cast<double>(covered) / n;
    m.others_rate = static_cast<double>(others) / n;
    m.chapter_accuracy = static_cast<double>(chapter) / n;
    m.heading_accuracy = static_cast<double>(heading) / n;
    m.subheading_accuracy = m.accuracy_at_1;
    return m;
  }
};

bool in_top(const std::vector<CandidateCode> &c, const HsCode &truth, std::size_t n) {
  for (std::size_t i = 0; i < c.size() && i < n; ++i) {
    if (c[i].code == truth) return true;
  }
  return false;
}

}  // namespace

EvaluationReport evaluate(const Engine &engine, const std::vector<CleanRecord> &rows) {
  require_trained(engine);
  if (rows.empty()) throw Error(ErrorCode::EmptyTestSet, "test set has no usable rows");
  Tally hier, flat;
  ClassificationRequest request;
  request.top_k = std::max<std::size_t>(3, engine.config.top_k);
  for (const auto &row : rows) {
    const Query q{row.tokens, row.weight_z, row.value_z};
    const auto &truth = row.hs_code;
    const auto chapter = truth.truncate(Level::Chapter).digits();
    const auto heading = truth.truncate(Level::Heading).digits();

    ++hier.rows;
    try {
      auto r = classify_query(engine, request, q);
      const auto &h = *r.audit.hierarchy;
      hier.chapter += h.chapter == chapter;
      hier.heading += h.heading == heading;
      hier.covered += !r.candidates.empty();
      hier.top1 += in_top(r.candidates, truth, 1);
      hier.top3 += in_top(r.candidates, truth, 3);
    } catch (const Error &) {
      ++hier.errors;
    }

    ++flat.rows;
    try {
      auto r = flat_query(engine, request, q);
      const auto ranked = r.audit.flat_distribution->ranked();
      if (r.audit.unassignable) {
        ++flat.others;
      } else {
        ++flat.covered;
        const auto top = HsCode::parse(ranked.front().first);
        flat.top1 += top == truth;
        flat.chapter += top.truncate(Level::Chapter).digits() == chapter;
        flat.heading += top.truncate(Level::Heading).digits() == heading;
      }
      for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) {
        if (ranked[i].first == truth.digits()) ++flat.top3;
      }
    } catch (const Error &) {
      ++flat.errors;
    }
  }
  return {hier.metrics(), flat.metrics()};
}

EvaluationReport evaluate(const Engine &engine, const std::vector<RawRecord> &rows) {
  require_trained(engine);
  return evaluate(engine, prepare_eval_rows(rows, engine.lexicon, engine.stats));
}

nlohmann::json report_to_json(const EvaluationReport &r) {
  auto one = [](const PipelineMetrics &m) {
    return nlohmann::json{{"rows", m.rows},
                          {"accuracy_at_1", m.accuracy_at_1},
                          {"accuracy_at_3", m.accuracy_at_3},
                          {"coverage", m.coverage},
                          {"others_rate", m.others_rate},
                          {"chapter_accuracy", m.chapter_accuracy},
                          {"heading_accuracy", m.heading_accuracy},
                          {"subheading_accuracy", m.subheading_accuracy},
                          {"errors", m.errors}};
  };
  return {{"hierarchical", one(r.hierarchical)}, {"flat", one(r.flat)}};
}

std::string format_report(const EvaluationReport &r) {
  std::ostringstream ss;
  ss << std::left << std::setw(14) << "pipeline" << std::right << std::setw(8) << "rows"
     << std::setw(8) << "acc@1" << std::setw(8) << "acc@3" << std::setw(10) << "coverage"
     << std::setw(9) << "others" << std::setw(8) << "hs2" << std::setw(8) << "hs4" << '\n';
  auto line = [&](const char *name, const PipelineMetrics &m) {
    ss << std::left << std::setw(14) << name << std::right << std::setw(8) << m.rows
       << std::fixed << std::setprecision(4) << std::setw(8) << m.accuracy_at_1 << std::setw(8)
       << m.accuracy_at_3 << std::setw(10) << m.coverage << std::setw(9) << m.others_rate
       << std::setw(8) << m.chapter_accuracy << std::setw(8) << m.heading_accuracy << '\n';
  };
  line("hierarchical", r.hierarchical);
  line("flat", r.flat);
  return ss.str();
}

}  // namespace hscode
