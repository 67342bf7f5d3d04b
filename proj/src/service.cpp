#include "hscode/service.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "hscode/bundle.hpp"
#include "hscode/text_util.hpp"
#include "httplib.h"

namespace fs = std::filesystem;

namespace hscode {

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// AuditStore
// ---------------------------------------------------------------------------

AuditStore::AuditStore(std::string path, std::size_t retention)
    : path_(std::move(path)), retention_(retention) {
  if (retention_ < 1) throw Error(ErrorCode::InvalidArgument, "audit retention must be >= 1");
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
  std::ostringstream prefix;
  prefix << std::hex << ms;
  id_prefix_ = prefix.str();

  if (const auto parent = fs::path(path_).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  if (!fs::exists(path_)) return;

  std::ifstream in(path_);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  bool torn = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception &) {
      // A torn final line from an interrupted write is dropped.
      if (i + 1 == lines.size()) {
        torn = true;
        break;
      }
      throw Error(ErrorCode::FormatError, path_ + ": unreadable audit line " + std::to_string(i + 1));
    }
    ++lines_on_disk_;
    const auto id = j.value("id", std::string());
    if (j.value("kind", std::string()) == "trail") {
      if (!entries_.count(id)) order_.push_back(id);
      entries_[id].trail = j.at("trail");
    } else if (auto it = entries_.find(id); it != entries_.end()) {
      it->second.decisions.push_back(j.at("decision"));
    }
  }
  evict();
  // Rewrite so later appends do not land on the fragment's line.
  if (torn) compact();
}

std::string AuditStore::next_id() {
  std::string id;
  do {
    std::ostringstream ss;
    ss << id_prefix_ << '-' << std::setw(6) << std::setfill('0') << ++counter_;
    id = ss.str();
  } while (entries_.count(id));
  return id;
}

void AuditStore::write_line(const nlohmann::json &line) {
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path_);
  out << line.dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write to " + path_ + " failed");
  ++lines_on_disk_;
}

void AuditStore::evict() {
  while (order_.size() > retention_) {
    entries_.erase(order_.front());
    order_.erase(order_.begin());
  }
}

void AuditStore::compact() {
  const auto tmp = path_ + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
    lines_on_disk_ = 0;
    for (const auto &id : order_) {
      const auto &e = entries_.at(id);
      out << nlohmann::json({{"kind", "trail"}, {"id", id}, {"trail", e.trail}}).dump() << '\n';
      ++lines_on_disk_;
      for (const auto &d : e.decisions) {
        out << nlohmann::json({{"kind", "decision"}, {"id", id}, {"decision", d}}).dump() << '\n';
        ++lines_on_disk_;
      }
    }
  }
  fs::rename(tmp, path_);
}

std::string AuditStore::append(AuditTrail &trail) {
  std::lock_guard lock(mutex_);
  trail.id = next_id();
  auto json = audit_to_json(trail);
  write_line({{"kind", "trail"}, {"id", trail.id}, {"trail", json}});
  entries_[trail.id].trail = std::move(json);
  order_.push_back(trail.id);
  evict();
  if (lines_on_disk_ > 2 * retention_) compact();
  return trail.id;
}

std::optional<nlohmann::json> AuditStore::get(const std::string &id) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  auto out = it->second.trail;
  out["decisions"] = it->second.decisions;
  return out;
}

nlohmann::json AuditStore::record_decision(const std::string &id, nlohmann::json decision) {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(id);
  if (it == entries_.end()) throw Error(ErrorCode::UnknownAudit, "no audit trail '" + id + "'");
  decision["audit_id"] = id;
  write_line({{"kind", "decision"}, {"id", id}, {"decision", decision}});
  it->second.decisions.push_back(decision);
  return decision;
}

std::size_t AuditStore::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Error mapping
// ---------------------------------------------------------------------------

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyAfterCleaning:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidCode:
    case ErrorCode::FormatError:
      return 400;
    case ErrorCode::UnknownCode:
    case ErrorCode::UnknownAudit:
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::NotTrained:
      return 409;
    default:
      return 500;
  }
}

nlohmann::json error_json(const Error &e) {
  return {{"error", e.name()}, {"detail", e.detail()}};
}

// ---------------------------------------------------------------------------
// ClassificationService
// ---------------------------------------------------------------------------

ClassificationService::ClassificationService(TariffSchedule schedule,
                                             std::shared_ptr<const Engine> engine,
                                             std::shared_ptr<AuditStore> audit)
    : schedule_(std::move(schedule)), engine_(std::move(engine)), audit_(std::move(audit)) {}

std::shared_ptr<ClassificationService> ClassificationService::from_bundle(
    const std::string &dir, std::shared_ptr<AuditStore> audit) {
  std::shared_ptr<const Engine> engine;
  try {
    engine = std::make_shared<const Engine>(load_engine(dir));
  } catch (const Error &e) {
    if (e.code() != ErrorCode::NotTrained) throw;
  }
  TariffSchedule schedule = engine ? engine->schedule : load_ingest(dir).schedule;
  return std::make_shared<ClassificationService>(std::move(schedule), std::move(engine),
                                                 std::move(audit));
}

std::shared_ptr<const Engine> ClassificationService::engine() const {
  std::lock_guard lock(engine_mutex_);
  return engine_;
}

void ClassificationService::swap_engine(std::shared_ptr<const Engine> engine) {
  std::lock_guard lock(engine_mutex_);
  engine_ = std::move(engine);
}

namespace {

template <typename F>
std::pair<int, nlohmann::json> guarded(F &&f) {
  try {
    return f();
  } catch (const Error &e) {
    return {http_status(e.code()), error_json(e)};
  } catch (const nlohmann::json::exception &e) {
    return {400, {{"error", "FormatError"}, {"detail", e.what()}}};
  } catch (const std::exception &e) {
    return {500, {{"error", "Internal"}, {"detail", e.what()}}};
  }
}

nlohmann::json parse_body(const std::string &body) {
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::FormatError, std::string("malformed JSON body: ") + e.what());
  }
}

nlohmann::json line_json(const TariffNode &n) {
  nlohmann::json j = {{"code", n.code ? nlohmann::json(n.code->digits()) : nlohmann::json()},
                      {"display", n.code ? n.code->display() : n.code_text},
                      {"description", n.description},
                      {"grouping", n.is_grouping()}};
  if (n.statistical_suffix) j["statistical_suffix"] = *n.statistical_suffix;
  return j;
}

}  // namespace

std::pair<int, nlohmann::json> ClassificationService::classify(const std::string &body) {
  return guarded([&]() -> std::pair<int, nlohmann::json> {
    const auto request = request_from_json(parse_body(body));
    const auto engine = this->engine();
    if (!engine) throw Error(ErrorCode::NotTrained, "no trained engine is loaded");
    auto result = hscode::classify(*engine, request);
    const auto id = audit_->append(result.audit);
    return {200, {{"candidates", candidates_to_json(result.candidates)}, {"audit_id", id}}};
  });
}

std::pair<int, nlohmann::json> ClassificationService::audit(const std::string &id) const {
  return guarded([&]() -> std::pair<int, nlohmann::json> {
    auto trail = audit_->get(id);
    if (!trail) throw Error(ErrorCode::UnknownAudit, "no audit trail '" + id + "'");
    return {200, *trail};
  });
}

std::pair<int, nlohmann::json> ClassificationService::decision(const std::string &id,
                                                               const std::string &body) {
  return guarded([&]() -> std::pair<int, nlohmann::json> {
    const auto j = parse_body(body);
    if (!j.is_object() || !j.contains("action") || !j["action"].is_string()) {
      throw Error(ErrorCode::InvalidArgument, "'action' must be \"accept\" or \"override\"");
    }
    const auto action = j["action"].get<std::string>();
    if (action != "accept" && action != "override") {
      throw Error(ErrorCode::InvalidArgument, "'action' must be \"accept\" or \"override\"");
    }
    const auto trail = audit_->get(id);
    if (!trail) throw Error(ErrorCode::UnknownAudit, "no audit trail '" + id + "'");

    std::string code;
    if (j.contains("code") && !j["code"].is_null()) {
      if (!j["code"].is_string()) throw Error(ErrorCode::InvalidArgument, "'code' must be a string");
      code = j["code"].get<std::string>();
    } else if (action == "override") {
      throw Error(ErrorCode::InvalidArgument, "an override needs a 'code'");
    } else if (!(*trail)["candidates"].empty()) {
      code = (*trail)["candidates"][0]["code"].get<std::string>();
    } else {
      throw Error(ErrorCode::InvalidArgument, "trail has no candidate to accept");
    }
    const auto parsed = HsCode::parse(code);
    if (parsed.level() != Level::Subheading) {
      throw Error(ErrorCode::InvalidCode, "decision code must have 6 digits");
    }
    const auto heading = parsed.truncate(Level::Heading);
    bool known = false;
    if (schedule_.contains(heading)) {
      for (const auto &cd : codes_under(schedule_, heading, Level::Subheading)) {
        known = known || cd.code == parsed;
      }
    }
    if (!known) {
      throw Error(ErrorCode::InvalidCode, parsed.display() + " is not a subheading in the schedule");
    }
    nlohmann::json decision = {{"action", action},
                               {"code", parsed.digits()},
                               {"recorded_at", utc_now()}};
    // Reviewers may leave the predicted heading; such decisions are flagged.
    if (trail->contains("hs4")) {
      decision["outside_heading"] = (*trail)["hs4"]["chosen"].get<std::string>() != heading.digits();
    }
    return {200, audit_->record_decision(id, std::move(decision))};
  });
}

std::pair<int, nlohmann::json> ClassificationService::schedule_node(const std::string &text) const {
  return guarded([&]() -> std::pair<int, nlohmann::json> {
    const auto code = HsCode::parse(text);
    nlohmann::json children = nlohmann::json::array();
    if (const auto *node = schedule_.find(code)) {
      auto out = line_json(*node);
      out["composed_description"] = composed_description(schedule_, code);
      for (const auto &c : node->children) children.push_back(line_json(c));
      out["children"] = children;
      return {200, out};
    }
    // Subheadings that exist only through their 8-digit lines.
    if (code.level() == Level::Subheading) {
      const auto heading = code.truncate(Level::Heading);
      if (schedule_.contains(heading)) {
        for (const auto &cd : codes_under(schedule_, heading, Level::Subheading)) {
          if (cd.code != code) continue;
          for (const auto &full : schedule_.codes()) {
            if (full.level() == Level::Full && code.is_ancestor_of(full)) {
              children.push_back(line_json(schedule_.at(full)));
            }
          }
          return {200, {{"code", code.digits()},
                        {"display", code.display()},
                        {"description", cd.description},
                        {"composed_description", cd.description},
                        {"grouping", false},
                        {"children", children}}};
        }
      }
    }
    throw Error(ErrorCode::UnknownCode, code.display() + " is not in the schedule");
  });
}

std::pair<int, nlohmann::json> ClassificationService::health() const {
  const auto engine = this->engine();
  nlohmann::json j = {{"status", "ok"}, {"trained", engine != nullptr}};
  if (engine) {
    j["version"] = engine->fingerprint.substr(0, 16);
    j["fingerprint"] = engine->fingerprint;
    j["created_at"] = engine->created_at;
  } else {
    j["version"] = nullptr;
  }
  return {200, j};
}

// ---------------------------------------------------------------------------
// HttpServer
// ---------------------------------------------------------------------------

HttpServer::HttpServer(std::shared_ptr<ClassificationService> service)
    : service_(std::move(service)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::install_routes() {
  auto reply = [](httplib::Response &res, const std::pair<int, nlohmann::json> &r) {
    res.status = r.first;
    res.set_content(r.second.dump(), "application/json");
  };
  auto svc = service_;
  server_->Post("/classify", [svc, reply](const httplib::Request &req, httplib::Response &res) {
    reply(res, svc->classify(req.body));
  });
  server_->Get(R"(/audit/([^/]+))", [svc, reply](const httplib::Request &req,
                                                httplib::Response &res) {
    reply(res, svc->audit(req.matches[1]));
  });
  server_->Post(R"(/audit/([^/]+)/decision)",
                [svc, reply](const httplib::Request &req, httplib::Response &res) {
                  reply(res, svc->decision(req.matches[1], req.body));
                });
  server_->Get(R"(/schedule/([^/]+))", [svc, reply](const httplib::Request &req,
                                                   httplib::Response &res) {
    reply(res, svc->schedule_node(req.matches[1]));
  });
  server_->Get("/healthz", [svc, reply](const httplib::Request &, httplib::Response &res) {
    reply(res, svc->health());
  });
  server_->set_exception_handler(
      [](const httplib::Request &, httplib::Response &res, std::exception_ptr ep) {
        std::string detail = "unknown error";
        try {
          if (ep) std::rethrow_exception(ep);
        } catch (const std::exception &e) {
          detail = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(nlohmann::json({{"error", "Internal"}, {"detail", detail}}).dump(),
                        "application/json");
      });
  // Unrouted paths and methods still answer with a JSON body.
  server_->set_error_handler([](const httplib::Request &req, httplib::Response &res) {
    if (!res.body.empty()) return;
    const std::string name = res.status == 404 ? "NotFound" : "HttpError";
    res.set_content(nlohmann::json({{"error", name}, {"detail", req.method + " " + req.path}}).dump(),
                    "application/json");
  });
}

int HttpServer::start(const std::string &host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else if (server_->bind_to_port(host, port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void HttpServer::run(const std::string &host, int port) {
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  }
  port_ = port;
  server_->listen_after_bind();
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace hscode
