#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "hscode/bundle.hpp"
#include "hscode/ensemble.hpp"
#include "hscode/error.hpp"
#include "hscode/text_util.hpp"
#include "synthetic.hpp"

using namespace hscode;
namespace ht = hscode::testing;
namespace fs = std::filesystem;

namespace {

template <typename F>
ErrorCode error_of(F &&f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an hscode::Error";
  return ErrorCode::FormatError;
}

// Structural equality with numbers compared to a tolerance.
void expect_json_near(const nlohmann::json &a, const nlohmann::json &b, double tol,
                      const std::string &path = "$") {
  if (a.is_number() && b.is_number()) {
    EXPECT_NEAR(a.get<double>(), b.get<double>(), tol) << path;
    return;
  }
  ASSERT_EQ(a.type(), b.type()) << path;
  if (a.is_object()) {
    ASSERT_EQ(a.size(), b.size()) << path;
    for (auto it = a.begin(); it != a.end(); ++it) {
      ASSERT_TRUE(b.contains(it.key())) << path << "." << it.key();
      expect_json_near(it.value(), b.at(it.key()), tol, path + "." + it.key());
    }
  } else if (a.is_array()) {
    ASSERT_EQ(a.size(), b.size()) << path;
    for (std::size_t i = 0; i < a.size(); ++i) {
      expect_json_near(a[i], b[i], tol, path + "[" + std::to_string(i) + "]");
    }
  } else {
    EXPECT_EQ(a, b) << path;
  }
}

ht::SyntheticSpec small_spec() {
  ht::SyntheticSpec spec;
  spec.chapters = 3;
  spec.headings_per_chapter = 2;
  spec.subheadings_per_heading = 3;
  spec.rows_per_class = 30;
  spec.test_rows_per_class = 5;
  spec.seed = 5;
  return spec;
}

class SyntheticEngine : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = new ht::SyntheticCorpus(ht::make_corpus(small_spec()));
    data_ = new IngestedData(ht::ingest_corpus(*corpus_));
    engine_ = new Engine(ht::train_engine(*data_));
  }
  static void TearDownTestSuite() {
    delete engine_;
    delete data_;
    delete corpus_;
  }
  static ht::SyntheticCorpus *corpus_;
  static IngestedData *data_;
  static Engine *engine_;
};

ht::SyntheticCorpus *SyntheticEngine::corpus_ = nullptr;
IngestedData *SyntheticEngine::data_ = nullptr;
Engine *SyntheticEngine::engine_ = nullptr;

}  // namespace

// ---- build -----------------------------------------------------------------

TEST_F(SyntheticEngine, BuildsEveryComponent) {
  const auto &e = *engine_;
  ASSERT_TRUE(e.trained());
  EXPECT_EQ(e.hs2->classes(), (std::vector<std::string>{"10", "11", "12"}));
  EXPECT_EQ(e.hs4_branches.size(), 3u);
  for (const auto &[ch, model] : e.hs4_branches) {
    for (const auto &c : model.classes()) EXPECT_EQ(c.substr(0, 2), ch);
  }
  ASSERT_TRUE(e.hs4_joint.has_value());
  EXPECT_EQ(e.hs4_joint->num_classes(), 6u);
  ASSERT_TRUE(e.flat.has_value());
  EXPECT_EQ(e.flat->num_classes(), corpus_->subheadings.size());
  EXPECT_EQ(e.graphs.size(), corpus_->subheadings.size());

  std::set<std::string> unique;
  for (const auto &r : data_->prepared.dataset.records) unique.insert(r.text());
  EXPECT_EQ(e.knn.size(), unique.size());
  for (const auto &[heading, idx] : e.knn_by_heading) {
    for (auto i : idx) EXPECT_EQ(e.knn[i].code.digits().substr(0, 4), heading);
  }
  EXPECT_EQ(e.created_at, ht::kFixedTimestamp);
}

TEST(BuildEngine, SingleChapterRaises) {
  auto spec = small_spec();
  spec.chapters = 1;
  const auto corpus = ht::make_corpus(spec);
  EXPECT_EQ(error_of([&] { ht::train_engine(ht::ingest_corpus(corpus)); }), ErrorCode::SingleClass);
}

TEST(BuildEngine, SingleClassBranchGetsConstantModel) {
  auto spec = small_spec();
  spec.headings_per_chapter = 1;
  spec.chapters = 2;
  const auto engine = ht::train_engine(ht::ingest_corpus(ht::make_corpus(spec)));
  for (const auto &[ch, m] : engine.hs4_branches) EXPECT_TRUE(m.degenerate()) << ch;
  const auto r = classify(engine, {ht::make_corpus(spec).test.front().description});
  EXPECT_TRUE(r.audit.branch_degenerate);
  EXPECT_FALSE(r.candidates.empty());
}

// ---- classification --------------------------------------------------------

TEST_F(SyntheticEngine, CandidatesAreConcreteAndUnderChosenHeading) {
  for (const auto &row : corpus_->test) {
    ClassificationRequest req{row.description, row.weight, row.value};
    const auto r = classify(*engine_, req);
    ASSERT_FALSE(r.candidates.empty()) << row.description;
    ASSERT_TRUE(r.audit.hierarchy.has_value());
    const auto &heading = r.audit.hierarchy->heading;
    EXPECT_LE(r.candidates.size(), engine_->config.top_k);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
      const auto &c = r.candidates[i];
      EXPECT_EQ(c.code.level(), Level::Subheading);
      EXPECT_NE(c.code.digits(), "OTHERS");
      EXPECT_EQ(c.code.digits().substr(0, 4), heading);
      EXPECT_TRUE(engine_->schedule.contains(c.code) ||
                  engine_->graphs.count(c.code.digits()));
      EXPECT_EQ(c.rank, i + 1);
      EXPECT_TRUE(seen.insert(c.code.digits()).second) << "duplicate candidate";
      if (i > 0) EXPECT_GE(r.candidates[i - 1].score, c.score);
    }
    EXPECT_NEAR(r.audit.hierarchy->chapter_dist.sum(), 1.0, 1e-9);
    EXPECT_NEAR(r.audit.hierarchy->heading_dist.sum(), 1.0, 1e-9);
  }
}

TEST_F(SyntheticEngine, AccurateOnSeparableData) {
  std::size_t hit = 0;
  for (const auto &row : corpus_->test) {
    const auto r = classify(*engine_, {row.description, row.weight, row.value});
    hit += r.candidates.front().code.digits() == row.hs_code;
  }
  EXPECT_GE(static_cast<double>(hit) / corpus_->test.size(), 0.9);
}

TEST_F(SyntheticEngine, AuditIsReproducible) {
  const ClassificationRequest req{corpus_->test[3].description, 12.0, 40.0};
  auto a = audit_to_json(classify(*engine_, req).audit);
  auto b = audit_to_json(classify(*engine_, req).audit);
  for (auto *j : {&a, &b}) {
    j->erase("id");
    j->erase("created_at");
  }
  expect_json_near(a, b, 1e-9);
  for (const char *key : {"hs2", "hs4", "knn", "kg", "candidates", "fingerprints", "cleaned_text"}) {
    EXPECT_TRUE(a.contains(key)) << key;
  }
  EXPECT_EQ(a["fingerprints"].size(), engine_->model_fingerprints().size() + 1);
}

TEST_F(SyntheticEngine, TrainingTextMatchesItselfInKnn) {
  const auto &record = data_->prepared.dataset.records[7];
  const auto r = classify(*engine_, {record.text()});
  ASSERT_TRUE(r.audit.hierarchy.has_value());
  if (r.audit.hierarchy->heading != record.hs_code.digits().substr(0, 4)) {
    GTEST_SKIP() << "heading model routed the training text elsewhere";
  }
  ASSERT_FALSE(r.audit.knn_neighbors.empty());
  EXPECT_EQ(r.audit.knn_neighbors.front().code, record.hs_code);
  EXPECT_NEAR(r.audit.knn_neighbors.front().cosine, 1.0, 1e-9);
  EXPECT_EQ(r.audit.knn_best, record.hs_code);
}

TEST_F(SyntheticEngine, SourceWeightsSteerTheMerge) {
  const auto &row = corpus_->test[0];
  ClassificationRequest only_kg{row.description};
  only_kg.knn_weight = 0.0;
  for (const auto &c : classify(*engine_, only_kg).candidates) {
    if (c.source == CandidateSource::TrainKnn) EXPECT_EQ(c.score, 0.0);
  }
  ClassificationRequest only_knn{row.description};
  only_knn.kg_weight = 0.0;
  const auto r = classify(*engine_, only_knn);
  EXPECT_EQ(r.candidates.front().source, CandidateSource::TrainKnn);
  EXPECT_DOUBLE_EQ(r.candidates.front().score, 1.0);
  ClassificationRequest narrow{row.description};
  narrow.top_k = 1;
  EXPECT_EQ(classify(*engine_, narrow).candidates.size(), 1u);
}

TEST_F(SyntheticEngine, ConditionalModeAgreesOnSeparableData) {
  std::size_t same = 0;
  for (const auto &row : corpus_->test) {
    ClassificationRequest a{row.description};
    ClassificationRequest b{row.description};
    b.mode = CompositionMode::Conditional;
    const auto ra = classify(*engine_, a);
    const auto rb = classify(*engine_, b);
    EXPECT_EQ(rb.audit.hierarchy->mode, CompositionMode::Conditional);
    EXPECT_NEAR(rb.audit.hierarchy->heading_dist.sum(), 1.0, 1e-9);
    same += ra.audit.hierarchy->heading == rb.audit.hierarchy->heading;
  }
  EXPECT_GE(same, corpus_->test.size() * 9 / 10);
}

TEST_F(SyntheticEngine, RejectsEmptyText) {
  EXPECT_EQ(error_of([&] { classify(*engine_, {"!!! ###"}); }), ErrorCode::EmptyAfterCleaning);
  EXPECT_EQ(error_of([&] { classify(*engine_, {""}); }), ErrorCode::EmptyAfterCleaning);
}

TEST(Classify, UntrainedEngineRaises) {
  const Engine empty;
  EXPECT_EQ(error_of([&] { classify(empty, {"steel bolts"}); }), ErrorCode::NotTrained);
  EXPECT_EQ(error_of([&] { flat_classify(empty, {"steel bolts"}); }), ErrorCode::NotTrained);
}

TEST(Classify, HeadingMissingFromScheduleRaises) {
  const auto corpus = ht::make_corpus(small_spec());
  const auto data = ht::ingest_corpus(corpus);
  auto engine = ht::train_engine(data);
  // Serve with a schedule that lost one chapter: the model still predicts it.
  std::vector<TariffNode> kept;
  for (const auto &root : engine.schedule.roots()) {
    if (root.code->digits() != corpus.test.front().hs_code.substr(0, 2)) kept.push_back(root);
  }
  engine.schedule = TariffSchedule(kept);
  EXPECT_EQ(error_of([&] { classify(engine, {corpus.test.front().description}); }),
            ErrorCode::UnknownHeading);
}

TEST(RequestJson, ValidatesFields) {
  const auto r = request_from_json({{"description", "steel"}, {"weight", 2.5}, {"top_k", 2},
                                    {"mode", "conditional"}});
  EXPECT_EQ(r.description, "steel");
  EXPECT_EQ(r.weight, 2.5);
  EXPECT_EQ(r.top_k, 2u);
  EXPECT_EQ(r.mode, CompositionMode::Conditional);
  EXPECT_EQ(request_from_json(request_to_json(r)).top_k, 2u);
  for (const auto &bad : {nlohmann::json::object(), nlohmann::json{{"description", 5}},
                          nlohmann::json{{"description", "x"}, {"weight", "heavy"}},
                          nlohmann::json{{"description", "x"}, {"top_k", 0}},
                          nlohmann::json{{"description", "x"}, {"mode", "sideways"}},
                          nlohmann::json::array()}) {
    EXPECT_EQ(error_of([&] { request_from_json(bad); }), ErrorCode::InvalidArgument) << bad.dump();
  }
}

// ---- flat model and coverage -----------------------------------------------

TEST(FlatModel, ThinClassesBecomeUnassignable) {
  auto spec = small_spec();
  spec.thin_classes = {1, 4, 7, 10, 13};
  spec.thin_rows = 2;
  const auto corpus = ht::make_corpus(spec);
  const auto data = ht::ingest_corpus(corpus, 0.02);
  ASSERT_EQ(data.prepared.dataset.grouped_classes.size(), 5u);
  const auto engine = ht::train_engine(data);
  ASSERT_TRUE(engine.flat->class_index("OTHERS").has_value());

  std::size_t unassignable = 0, thin_rows = 0;
  for (const auto &row : corpus.test) {
    const bool thin = data.prepared.dataset.grouped_classes.count(row.hs_code) > 0;
    const auto flat = flat_classify(engine, {row.description, row.weight, row.value});
    for (const auto &c : flat.candidates) EXPECT_NE(c.code.digits(), "OTHERS");
    if (thin) {
      ++thin_rows;
      unassignable += flat.audit.unassignable;
    }
    const auto hier = classify(engine, {row.description, row.weight, row.value});
    EXPECT_FALSE(hier.candidates.empty());
  }
  EXPECT_GT(thin_rows, 0u);
  EXPECT_GT(unassignable, 0u);

  const auto report = evaluate(engine, corpus.test);
  EXPECT_EQ(report.hierarchical.coverage, 1.0);
  EXPECT_EQ(report.hierarchical.others_rate, 0.0);
  EXPECT_GT(report.flat.others_rate, 0.0);
  EXPECT_LT(report.flat.coverage, 1.0);
}

// ---- evaluation ------------------------------------------------------------

TEST_F(SyntheticEngine, EvaluationMetrics) {
  const auto report = evaluate(*engine_, corpus_->test);
  EXPECT_EQ(report.hierarchical.rows, corpus_->test.size());
  EXPECT_GE(report.hierarchical.accuracy_at_1, 0.9);
  EXPECT_GE(report.hierarchical.accuracy_at_3, report.hierarchical.accuracy_at_1);
  EXPECT_GE(report.hierarchical.chapter_accuracy, report.hierarchical.heading_accuracy);
  EXPECT_EQ(report.hierarchical.coverage, 1.0);
  EXPECT_EQ(report.hierarchical.errors, 0u);
  EXPECT_GE(report.flat.accuracy_at_1, 0.9);
  const auto j = report_to_json(report);
  EXPECT_TRUE(j.contains("hierarchical"));
  EXPECT_TRUE(j.contains("flat"));
  EXPECT_NE(format_report(report).find("acc@1"), std::string::npos);
}

TEST_F(SyntheticEngine, EvaluationEdgeCases) {
  EXPECT_EQ(error_of([&] { evaluate(*engine_, std::vector<CleanRecord>{}); }), ErrorCode::EmptyTestSet);
  EXPECT_EQ(error_of([&] { evaluate(*engine_, std::vector<RawRecord>{{"!!!", "101010", 0, 0}}); }),
            ErrorCode::EmptyTestSet);
  // Labels the engine has never seen: scored, never matched.
  std::vector<RawRecord> foreign;
  for (const auto &row : corpus_->test) foreign.push_back({row.description, "990110", 0, 0});
  const auto report = evaluate(*engine_, foreign);
  EXPECT_EQ(report.hierarchical.accuracy_at_1, 0.0);
  EXPECT_EQ(report.flat.accuracy_at_1, 0.0);
  EXPECT_EQ(report.hierarchical.coverage, 1.0);
}

// ---- bundle ----------------------------------------------------------------

TEST_F(SyntheticEngine, SaveLoadPreservesBehaviour) {
  const auto dir = ht::fresh_dir("ensemble_bundle");
  save_ingest(*data_, dir);
  Engine copy = ht::train_engine(*data_);
  const auto manifest = save_engine(copy, dir);
  EXPECT_EQ(manifest.created_at, ht::kFixedTimestamp);
  EXPECT_EQ(read_manifest(dir).fingerprint, manifest.fingerprint);
  EXPECT_TRUE(manifest.files.count("config.json"));
  EXPECT_TRUE(manifest.files.count("schedule.json"));

  const auto loaded = load_engine(dir);
  EXPECT_EQ(loaded.fingerprint, manifest.fingerprint);
  EXPECT_EQ(loaded.model_fingerprints(), engine_->model_fingerprints());
  for (std::size_t i = 0; i < corpus_->test.size(); i += 7) {
    const ClassificationRequest req{corpus_->test[i].description, 3.0, 9.0};
    auto a = audit_to_json(classify(*engine_, req).audit);
    auto b = audit_to_json(classify(loaded, req).audit);
    for (auto *j : {&a, &b}) {
      j->erase("id");
      j->erase("created_at");
      j->erase("fingerprints");
    }
    expect_json_near(a, b, 1e-12);
  }
  fs::remove_all(dir);
}

TEST_F(SyntheticEngine, TamperedBundleIsRejected) {
  const auto dir = ht::fresh_dir("ensemble_tamper");
  save_ingest(*data_, dir);
  Engine copy = ht::train_engine(*data_);
  save_engine(copy, dir);
  ASSERT_NO_THROW(load_engine(dir));

  const auto victim = dir + "/kg/" + corpus_->subheadings[2] + ".json";
  ASSERT_TRUE(fs::exists(victim));
  const auto original = read_file(victim);
  write_file(victim, original + " ");
  EXPECT_EQ(error_of([&] { load_engine(dir); }), ErrorCode::ManifestMismatch);
  write_file(victim, original);
  ASSERT_NO_THROW(load_engine(dir));

  fs::remove(dir + "/models/hs2.bin");
  EXPECT_EQ(error_of([&] { load_engine(dir); }), ErrorCode::ManifestMismatch);
  fs::remove(dir + "/manifest.json");
  EXPECT_EQ(error_of([&] { load_engine(dir); }), ErrorCode::NotTrained);
  fs::remove_all(dir);
}

TEST(Bundle, EmbedderMismatchIsRejected) {
  const auto data = ht::ingest_fixture(HSCODE_TEST_DATA);
  const auto dir = ht::fresh_dir("ensemble_embedder");
  save_ingest(data, dir);
  Engine engine = ht::train_engine(data);
  save_engine(engine, dir);
  auto manifest = nlohmann::json::parse(read_file(dir + "/manifest.json"));
  manifest["embedder_fingerprint"] = "0000000000000000";
  write_file(dir + "/manifest.json", manifest.dump(2));
  EXPECT_EQ(error_of([&] { load_engine(dir); }), ErrorCode::ManifestMismatch);
  fs::remove_all(dir);
}

TEST(Bundle, IdenticalInputsGiveIdenticalManifests) {
  const auto data = ht::ingest_fixture(HSCODE_TEST_DATA);
  std::vector<std::string> manifests;
  for (const char *name : {"det_a", "det_b"}) {
    const auto dir = ht::fresh_dir(name);
    save_ingest(data, dir);
    Engine engine = ht::train_engine(data);
    save_engine(engine, dir);
    manifests.push_back(read_file(dir + "/manifest.json"));
    fs::remove_all(dir);
  }
  EXPECT_EQ(manifests[0], manifests[1]);
}

TEST(Bundle, TrainBundleUsesIngestTimestamp) {
  const auto data = ht::ingest_fixture(HSCODE_TEST_DATA);
  const auto dir = ht::fresh_dir("train_bundle");
  save_ingest(data, dir);
  const auto reloaded = load_ingest(dir);
  EXPECT_EQ(reloaded.schedule, data.schedule);
  EXPECT_EQ(reloaded.prepared.dataset.records.size(), data.prepared.dataset.records.size());
  EXPECT_EQ(reloaded.created_at, ht::kFixedTimestamp);
  const auto engine = train_bundle(dir, EngineConfig{});
  EXPECT_EQ(read_manifest(dir).created_at, ht::kFixedTimestamp);
  EXPECT_EQ(engine.created_at, ht::kFixedTimestamp);
  fs::remove_all(dir);
}

TEST(EngineConfig, JsonRoundTripAndValidation) {
  EngineConfig c;
  c.top_k = 5;
  c.mode = CompositionMode::Conditional;
  c.kg_weight = 0.5;
  c.train.seed = 7;
  c.created_at = "2023-05-01T00:00:00Z";
  const auto back = engine_config_from_json(engine_config_to_json(c));
  EXPECT_EQ(engine_config_to_json(back), engine_config_to_json(c));
  EngineConfig bad;
  bad.top_k = 0;
  EXPECT_EQ(error_of([&] { bad.validate(); }), ErrorCode::InvalidArgument);
  bad = EngineConfig{};
  bad.knn_weight = -1;
  EXPECT_EQ(error_of([&] { bad.validate(); }), ErrorCode::InvalidArgument);
}

// ---- fixture ---------------------------------------------------------------

TEST(FixtureEngine, ConicalBearingsRankConeAboveBalls) {
  const auto engine = ht::train_engine(ht::ingest_fixture(HSCODE_TEST_DATA));
  const auto r = classify(engine, {"package stc conical roller bearings"});
  ASSERT_EQ(r.audit.hierarchy->heading, "8482");
  std::map<std::string, double> rho;
  for (const auto &m : r.audit.kg_matches) rho[m.code.digits()] = m.average_similarity;
  ASSERT_TRUE(rho.count("848250") && rho.count("848251") && rho.count("848291"));
  EXPECT_GT(rho["848250"], rho["848291"]);
  EXPECT_GT(rho["848251"], rho["848291"]);
  ASSERT_EQ(r.audit.kg_graphs.size(), r.audit.kg_matches.size());
  const auto j = audit_to_json(r.audit);
  for (const auto &m : j["kg"]["matches"]) {
    EXPECT_TRUE(m.contains("nodes"));
    for (const auto &n : m["nodes"]) EXPECT_TRUE(n.contains("color"));
  }
}
