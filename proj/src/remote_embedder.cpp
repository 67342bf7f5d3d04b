#include <algorithm>
#include <chrono>
#include <semaphore>
#include <thread>

#include "hscode/embed.hpp"
#include "hscode/error.hpp"
#include "hscode/text_util.hpp"
#include "httplib.h"

namespace hscode {

struct RemoteEmbedder::State {
  explicit State(int cap) : in_flight(cap) {}
  std::counting_semaphore<1024> in_flight;
};

namespace {

struct SlotGuard {
  explicit SlotGuard(std::counting_semaphore<1024> &s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
  std::counting_semaphore<1024> &sem;
};

}  // namespace

RemoteEmbedder::RemoteEmbedder(EmbedderConfig config) : config_(std::move(config)) {
  config_.kind = EmbedderKind::RemoteService;
  config_.validate();
  const int cap = std::clamp(config_.max_in_flight, 1, 1024);
  state_ = std::make_unique<State>(cap);
}

RemoteEmbedder::~RemoteEmbedder() = default;

Embedding RemoteEmbedder::embed(std::span<const std::string> tokens) const {
  std::vector<std::vector<std::string>> batch{{tokens.begin(), tokens.end()}};
  return embed_batch(batch).front();
}

std::vector<Embedding> RemoteEmbedder::embed_batch(
    const std::vector<std::vector<std::string>> &batch) const {
  nlohmann::json texts = nlohmann::json::array();
  for (const auto &tokens : batch) {
    if (tokens.empty()) throw Error(ErrorCode::EmptyEmbedding, "empty text");
    texts.push_back(join(tokens, " "));
  }
  const std::string body = nlohmann::json{{"texts", texts}}.dump();

  SlotGuard slot(state_->in_flight);
  httplib::Client client(config_.endpoint);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
    auto res = client.Post("/embed", body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(ErrorCode::ServiceUnavailable,
                  "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception &e) {
      throw Error(ErrorCode::ServiceUnavailable, std::string("bad JSON: ") + e.what());
    }
    if (!reply.contains("vectors") || !reply["vectors"].is_array() ||
        reply["vectors"].size() != batch.size()) {
      throw Error(ErrorCode::ServiceUnavailable, "reply lacks one vector per text");
    }
    std::vector<Embedding> out;
    for (const auto &v : reply["vectors"]) {
      auto values = v.get<std::vector<double>>();
      if (values.size() != config_.dimension) {
        throw Error(ErrorCode::DimensionMismatch,
                    "service returned " + std::to_string(values.size()) +
                        " values, expected " + std::to_string(config_.dimension));
      }
      Embedding e(std::move(values));
      if (e.is_zero()) throw Error(ErrorCode::EmptyEmbedding, "service returned zero vector");
      out.push_back(e.normalized());
    }
    return out;
  }
  throw Error(ErrorCode::ServiceUnavailable, config_.endpoint + ": " + last_error);
}

}  // namespace hscode
