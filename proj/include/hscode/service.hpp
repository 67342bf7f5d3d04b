#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hscode/ensemble.hpp"
#include "hscode/error.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace hscode {

// Append-only JSON-lines store of audit trails and reviewer decisions.
// Only the newest `retention` trails are kept; once the file holds twice
// that many, it is compacted in place.
class AuditStore {
 public:
  explicit AuditStore(std::string path, std::size_t retention = 10000);

  // Assigns a fresh id, persists the trail and returns the id.
  std::string append(AuditTrail &trail);
  std::optional<nlohmann::json> get(const std::string &id) const;
  // Throws UnknownAudit when the audit id is unknown.
  nlohmann::json record_decision(const std::string &id, nlohmann::json decision);

  std::size_t size() const;
  const std::string &path() const { return path_; }

 private:
  struct Entry {
    nlohmann::json trail;
    std::vector<nlohmann::json> decisions;
  };

  std::string next_id();
  void write_line(const nlohmann::json &line);
  void evict();
  void compact();

  std::string path_;
  std::size_t retention_;
  mutable std::mutex mutex_;
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;  // insertion order of live ids
  std::size_t lines_on_disk_ = 0;
  std::string id_prefix_;
  std::uint64_t counter_ = 0;
};

// HTTP status for an error code.
int http_status(ErrorCode code);
nlohmann::json error_json(const Error &error);

// Shared state behind the HTTP API. The engine is an immutable snapshot;
// `swap_engine` replaces it without disturbing in-flight requests.
class ClassificationService {
 public:
  ClassificationService(TariffSchedule schedule, std::shared_ptr<const Engine> engine,
                        std::shared_ptr<AuditStore> audit);

  // Loads the bundle's schedule and, when present, its trained engine.
  static std::shared_ptr<ClassificationService> from_bundle(const std::string &bundle_dir,
                                                            std::shared_ptr<AuditStore> audit);

  std::shared_ptr<const Engine> engine() const;
  void swap_engine(std::shared_ptr<const Engine> engine);

  // Each returns (status, body).
  std::pair<int, nlohmann::json> classify(const std::string &body);
  std::pair<int, nlohmann::json> audit(const std::string &id) const;
  std::pair<int, nlohmann::json> decision(const std::string &id, const std::string &body);
  std::pair<int, nlohmann::json> schedule_node(const std::string &code) const;
  std::pair<int, nlohmann::json> health() const;

 private:
  TariffSchedule schedule_;
  mutable std::mutex engine_mutex_;
  std::shared_ptr<const Engine> engine_;
  std::shared_ptr<AuditStore> audit_;
};

class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<ClassificationService> service);
  ~HttpServer();

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string &host, int port);
  // Binds and serves on the calling thread until stopped.
  void run(const std::string &host, int port);
  void stop();
  int port() const { return port_; }

 private:
  void install_routes();

  std::shared_ptr<ClassificationService> service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace hscode
