#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "hscode/bundle.hpp"
#include "hscode/error.hpp"
#include "hscode/service.hpp"
#include "hscode/text_util.hpp"
#include "httplib.h"
#include "synthetic.hpp"

using namespace hscode;
namespace ht = hscode::testing;
namespace fs = std::filesystem;

namespace {

std::size_t line_count(const std::string &path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

AuditTrail dummy_trail(const std::string &tag) {
  AuditTrail t;
  t.pipeline = "hierarchical";
  t.request.description = tag;
  t.tokens = {tag};
  t.candidates.push_back({HsCode::parse("848250"), CandidateSource::KnowledgeGraph, 1.0, 0.3, 1});
  return t;
}

// Serves the fixture engine on a free port for the whole suite.
class HttpApi : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new std::string(ht::fresh_dir("service"));
    const auto data = ht::ingest_fixture(HSCODE_TEST_DATA);
    save_ingest(data, *dir_);
    train_bundle(*dir_, EngineConfig{});
    auto audit = std::make_shared<AuditStore>(*dir_ + ".audit.jsonl");
    service_ = new std::shared_ptr<ClassificationService>(
        ClassificationService::from_bundle(*dir_, audit));
    server_ = new HttpServer(*service_);
    port_ = server_->start("127.0.0.1", 0);
  }
  static void TearDownTestSuite() {
    server_->stop();
    delete server_;
    delete service_;
    fs::remove(*dir_ + ".audit.jsonl");
    fs::remove_all(*dir_);
    delete dir_;
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(std::chrono::seconds(30));
    return c;
  }
  static nlohmann::json body(const httplib::Result &r) { return nlohmann::json::parse(r->body); }

  nlohmann::json classify_ok(const std::string &text) {
    auto c = client();
    auto r = c.Post("/classify", nlohmann::json{{"description", text}}.dump(), "application/json");
    EXPECT_TRUE(r);
    EXPECT_EQ(r->status, 200) << r->body;
    return body(r);
  }

  static std::string *dir_;
  static std::shared_ptr<ClassificationService> *service_;
  static HttpServer *server_;
  static int port_;
};

std::string *HttpApi::dir_ = nullptr;
std::shared_ptr<ClassificationService> *HttpApi::service_ = nullptr;
HttpServer *HttpApi::server_ = nullptr;
int HttpApi::port_ = 0;

}  // namespace

// ---- audit store -----------------------------------------------------------

TEST(AuditStore, PersistsTrailsAndDecisions) {
  const auto dir = ht::fresh_dir("audit_persist");
  const auto path = dir + "/audit.jsonl";
  std::string id;
  {
    AuditStore store(path);
    auto t = dummy_trail("roller");
    id = store.append(t);
    EXPECT_EQ(t.id, id);
    store.record_decision(id, {{"action", "accept"}, {"code", "848250"}});
  }
  AuditStore reopened(path);
  const auto trail = reopened.get(id);
  ASSERT_TRUE(trail.has_value());
  EXPECT_EQ((*trail)["request"]["description"], "roller");
  ASSERT_EQ((*trail)["decisions"].size(), 1u);
  EXPECT_EQ((*trail)["decisions"][0]["code"], "848250");
  EXPECT_EQ((*trail)["decisions"][0]["audit_id"], id);
  EXPECT_FALSE(reopened.get("missing").has_value());
  try {
    reopened.record_decision("missing", {{"action", "accept"}});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownAudit);
  }
  fs::remove_all(dir);
}

TEST(AuditStore, IdsAreUniqueAcrossReopen) {
  const auto dir = ht::fresh_dir("audit_ids");
  const auto path = dir + "/audit.jsonl";
  std::set<std::string> ids;
  for (int round = 0; round < 3; ++round) {
    AuditStore store(path);
    for (int i = 0; i < 20; ++i) {
      auto t = dummy_trail("t");
      EXPECT_TRUE(ids.insert(store.append(t)).second);
    }
  }
  EXPECT_EQ(AuditStore(path).size(), 60u);
  fs::remove_all(dir);
}

TEST(AuditStore, RetentionEvictsOldestAndCompacts) {
  const auto dir = ht::fresh_dir("audit_retention");
  const auto path = dir + "/audit.jsonl";
  std::vector<std::string> ids;
  {
    AuditStore store(path, 3);
    for (int i = 0; i < 10; ++i) {
      auto t = dummy_trail("t" + std::to_string(i));
      ids.push_back(store.append(t));
      EXPECT_LE(line_count(path), 2u * 3u + 1u);
    }
    EXPECT_EQ(store.size(), 3u);
    EXPECT_FALSE(store.get(ids[6]).has_value());
    EXPECT_TRUE(store.get(ids[7]).has_value());
  }
  AuditStore reopened(path, 3);
  EXPECT_EQ(reopened.size(), 3u);
  EXPECT_TRUE(reopened.get(ids[9]).has_value());
  EXPECT_FALSE(reopened.get(ids[0]).has_value());
  EXPECT_THROW(AuditStore(path, 0), Error);
  fs::remove_all(dir);
}

TEST(AuditStore, ToleratesTornLastLine) {
  const auto dir = ht::fresh_dir("audit_torn");
  const auto path = dir + "/audit.jsonl";
  std::string id;
  {
    AuditStore store(path);
    auto t = dummy_trail("ok");
    id = store.append(t);
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "{\"kind\":\"trail\",\"id\":\"x\",\"tra";
  }
  AuditStore reopened(path);
  EXPECT_EQ(reopened.size(), 1u);
  EXPECT_TRUE(reopened.get(id).has_value());
  auto t = dummy_trail("after");
  EXPECT_TRUE(reopened.get(reopened.append(t)).has_value());
  EXPECT_EQ(AuditStore(path).size(), 2u);
  fs::remove_all(dir);
}

TEST(HttpStatus, Mapping) {
  EXPECT_EQ(http_status(ErrorCode::EmptyAfterCleaning), 400);
  EXPECT_EQ(http_status(ErrorCode::InvalidArgument), 400);
  EXPECT_EQ(http_status(ErrorCode::InvalidCode), 400);
  EXPECT_EQ(http_status(ErrorCode::UnknownAudit), 404);
  EXPECT_EQ(http_status(ErrorCode::UnknownCode), 404);
  EXPECT_EQ(http_status(ErrorCode::NotTrained), 409);
  EXPECT_EQ(http_status(ErrorCode::ManifestMismatch), 500);
  const auto j = error_json(Error(ErrorCode::NotTrained, "nothing loaded"));
  EXPECT_EQ(j["error"], "NotTrained");
  EXPECT_EQ(j["detail"], "nothing loaded");
}

// ---- HTTP ------------------------------------------------------------------

TEST_F(HttpApi, ClassifyThenFetchAudit) {
  const auto reply = classify_ok("package stc conical roller bearings");
  ASSERT_TRUE(reply.contains("audit_id"));
  ASSERT_FALSE(reply["candidates"].empty());
  for (const auto &c : reply["candidates"]) {
    EXPECT_EQ(c["code"].get<std::string>().size(), 6u);
    EXPECT_TRUE(c.contains("source"));
    EXPECT_TRUE(c.contains("score"));
  }

  auto c = client();
  auto r = c.Get("/audit/" + reply["audit_id"].get<std::string>());
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const auto audit = body(r);
  for (const char *level : {"hs2", "hs4"}) {
    double sum = 0;
    for (const auto &e : audit[level]["distribution"]) sum += e["probability"].get<double>();
    EXPECT_NEAR(sum, 1.0, 1e-9) << level;
  }
  EXPECT_EQ(audit["hs4"]["chosen"], "8482");
  EXPECT_FALSE(audit["kg"]["matches"].empty());
  for (const auto &m : audit["kg"]["matches"]) {
    for (const auto &n : m["nodes"]) {
      const auto color = n["color"].get<std::string>();
      EXPECT_TRUE(color == "green" || color == "light-green" || color == "yellow" || color == "blue");
    }
  }
  EXPECT_EQ(audit["candidates"], reply["candidates"]);
  EXPECT_TRUE(audit["decisions"].empty());
}

TEST_F(HttpApi, BadRequests) {
  auto c = client();
  auto r = c.Post("/classify", "{not json", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(body(r)["error"], "FormatError");

  r = c.Post("/classify", R"({"description": "!!! ###"})", "application/json");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(body(r)["error"], "EmptyAfterCleaning");

  r = c.Post("/classify", R"({"text": "bolts"})", "application/json");
  EXPECT_EQ(r->status, 400);

  r = c.Get("/audit/does-not-exist");
  EXPECT_EQ(r->status, 404);
  EXPECT_EQ(body(r)["error"], "UnknownAudit");

  r = c.Get("/nowhere");
  EXPECT_EQ(r->status, 404);
  EXPECT_TRUE(body(r).contains("error"));
}

TEST_F(HttpApi, ScheduleLookup) {
  auto c = client();
  auto r = c.Get("/schedule/8414");
  ASSERT_EQ(r->status, 200);
  auto j = body(r);
  EXPECT_EQ(j["code"], "8414");
  EXPECT_EQ(j["children"].size(), 4u);

  r = c.Get("/schedule/841410");
  ASSERT_EQ(r->status, 200) << r->body;
  j = body(r);
  EXPECT_EQ(j["code"], "841410");
  EXPECT_NE(j["composed_description"].get<std::string>().find("Vacuum pumps"), std::string::npos);

  r = c.Get("/schedule/8414.30");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body(r)["children"].size(), 2u);

  EXPECT_EQ(c.Get("/schedule/999999")->status, 404);
  EXPECT_EQ(c.Get("/schedule/84x")->status, 400);
}

TEST_F(HttpApi, Decisions) {
  const auto reply = classify_ok("package stc conical roller bearings");
  const auto id = reply["audit_id"].get<std::string>();
  const auto top = reply["candidates"][0]["code"].get<std::string>();
  auto c = client();
  const auto path = "/audit/" + id + "/decision";

  auto r = c.Post(path, R"({"action": "accept"})", "application/json");
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(body(r)["code"], top);
  EXPECT_EQ(body(r)["outside_heading"], false);

  r = c.Post(path, R"({"action": "override", "code": "8482.91"})", "application/json");
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(body(r)["code"], "848291");

  // Leaving the predicted heading is allowed and flagged.
  r = c.Post(path, R"({"action": "override", "code": "731815"})", "application/json");
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(body(r)["outside_heading"], true);

  EXPECT_EQ(c.Post(path, R"({"action": "override"})", "application/json")->status, 400);
  EXPECT_EQ(c.Post(path, R"({"action": "maybe"})", "application/json")->status, 400);
  EXPECT_EQ(c.Post(path, R"({"action": "override", "code": "848299"})", "application/json")->status,
            400);
  EXPECT_EQ(c.Post(path, R"({"action": "override", "code": "8482"})", "application/json")->status,
            400);
  EXPECT_EQ(c.Post("/audit/nope/decision", R"({"action": "accept"})", "application/json")->status,
            404);

  const auto audit = body(c.Get("/audit/" + id));
  ASSERT_EQ(audit["decisions"].size(), 3u);
  EXPECT_EQ(audit["decisions"][0]["action"], "accept");
  EXPECT_EQ(audit["decisions"][2]["code"], "731815");

  // Decisions survive a restart of the store.
  AuditStore reopened(*dir_ + ".audit.jsonl");
  EXPECT_EQ((*reopened.get(id))["decisions"].size(), 3u);
}

TEST_F(HttpApi, Health) {
  auto c = client();
  auto r = c.Get("/healthz");
  ASSERT_EQ(r->status, 200);
  const auto j = body(r);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["trained"], true);
  EXPECT_EQ(j["fingerprint"], read_manifest(*dir_).fingerprint);
  EXPECT_EQ(j["created_at"], ht::kFixedTimestamp);
}

TEST_F(HttpApi, ConcurrentRequests) {
  std::atomic<int> ok{0};
  std::mutex ids_mutex;
  std::set<std::string> ids;
  std::vector<std::thread> workers;
  const std::vector<std::string> texts{"package stc conical roller bearings", "stainless steel hex bolts",
                                       "air compressor on wheeled chassis", "vacuum pump"};
  for (int w = 0; w < 10; ++w) {
    workers.emplace_back([&, w] {
      auto c = client();
      for (int i = 0; i < 10; ++i) {
        const auto &text = texts[(w + i) % texts.size()];
        auto r = c.Post("/classify", nlohmann::json{{"description", text}}.dump(), "application/json");
        if (!r || r->status != 200) continue;
        const auto j = nlohmann::json::parse(r->body);
        if (j["candidates"].empty()) continue;
        std::lock_guard lock(ids_mutex);
        ids.insert(j["audit_id"].get<std::string>());
        ++ok;
      }
    });
  }
  for (auto &t : workers) t.join();
  EXPECT_EQ(ok.load(), 100);
  EXPECT_EQ(ids.size(), 100u);
}

TEST_F(HttpApi, EngineSwapKeepsServing) {
  auto service = *service_;
  const auto before = service->engine();
  service->swap_engine(std::make_shared<const Engine>(load_engine(*dir_)));
  EXPECT_NE(service->engine(), before);
  classify_ok("vacuum pump");
  service->swap_engine(before);
}

TEST(HttpUntrained, ClassifyReturnsConflict) {
  const auto dir = ht::fresh_dir("service_untrained");
  save_ingest(ht::ingest_fixture(HSCODE_TEST_DATA), dir);
  auto service = ClassificationService::from_bundle(
      dir, std::make_shared<AuditStore>(dir + "/audit.jsonl"));
  HttpServer server(service);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client c("127.0.0.1", port);
  auto r = c.Post("/classify", R"({"description": "roller bearings"})", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 409);
  EXPECT_EQ(nlohmann::json::parse(r->body)["error"], "NotTrained");
  r = c.Get("/healthz");
  EXPECT_EQ(nlohmann::json::parse(r->body)["trained"], false);
  EXPECT_EQ(c.Get("/schedule/8482")->status, 200);
  server.stop();
  fs::remove_all(dir);
}
