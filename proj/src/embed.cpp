#include "hscode/embed.hpp"

#include <cmath>
#include <sstream>

#include "hscode/error.hpp"
#include "hscode/text_util.hpp"

namespace hscode {

Embedding::Embedding(std::vector<double> values) : values_(std::move(values)) {
  double sum = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::InvalidArgument, "embedding entry is not finite");
    }
    sum += v * v;
  }
  norm_ = std::sqrt(sum);
}

Embedding Embedding::scaled(double factor) const {
  std::vector<double> out(values_);
  for (auto &v : out) v *= factor;
  return Embedding(std::move(out));
}

Embedding Embedding::normalized() const {
  if (is_zero()) throw Error(ErrorCode::ZeroVector, "cannot normalize zero vector");
  return scaled(1.0 / norm_);
}

double cosine(const Embedding &a, const Embedding &b) {
  if (a.dimension() != b.dimension()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.dimension()) + " vs " + std::to_string(b.dimension()));
  }
  if (a.is_zero() || b.is_zero()) {
    throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  }
  double dot = 0.0;
  const auto &x = a.values();
  const auto &y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
  const double c = dot / (a.norm() * b.norm());
  return std::clamp(c, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void EmbedderConfig::validate() const {
  if (dimension < 8) {
    throw Error(ErrorCode::InvalidArgument, "embedding dimension must be >= 8");
  }
  if (kind == EmbedderKind::HashedNgram) {
    if (orders.empty()) {
      throw Error(ErrorCode::InvalidArgument, "hashed embedder needs n-gram orders");
    }
    for (const auto &o : orders) {
      if (o.n < 1) throw Error(ErrorCode::InvalidArgument, "n-gram order must be >= 1");
    }
  } else if (endpoint.empty()) {
    throw Error(ErrorCode::InvalidArgument, "remote embedder needs an endpoint");
  }
}

nlohmann::json embedder_config_to_json(const EmbedderConfig &c) {
  nlohmann::json orders = nlohmann::json::array();
  for (const auto &o : c.orders) {
    orders.push_back({{"unit", o.unit == GramUnit::Word ? "word" : "char"},
                      {"n", o.n},
                      {"weight", o.weight}});
  }
  nlohmann::json j = {
      {"kind", c.kind == EmbedderKind::HashedNgram ? "hashed_ngram" : "remote"},
      {"dimension", c.dimension},
      {"seed", c.seed},
  };
  if (c.kind == EmbedderKind::HashedNgram) {
    j["orders"] = orders;
  } else {
    j["endpoint"] = c.endpoint;
    j["timeout_ms"] = c.timeout_ms;
    j["retries"] = c.retries;
    j["max_in_flight"] = c.max_in_flight;
  }
  return j;
}

EmbedderConfig embedder_config_from_json(const nlohmann::json &j) {
  EmbedderConfig c;
  const auto kind = j.value("kind", std::string("hashed_ngram"));
  if (kind == "hashed_ngram") {
    c.kind = EmbedderKind::HashedNgram;
  } else if (kind == "remote") {
    c.kind = EmbedderKind::RemoteService;
  } else {
    throw Error(ErrorCode::FormatError, "unknown embedder kind '" + kind + "'");
  }
  c.dimension = j.value("dimension", c.dimension);
  c.seed = j.value("seed", c.seed);
  if (j.contains("orders")) {
    c.orders.clear();
    for (const auto &o : j["orders"]) {
      const auto unit = o.at("unit").get<std::string>();
      c.orders.push_back({unit == "char" ? GramUnit::Char : GramUnit::Word,
                          o.at("n").get<int>(), o.value("weight", 1.0)});
    }
  }
  c.endpoint = j.value("endpoint", std::string());
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  c.retries = j.value("retries", c.retries);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.validate();
  return c;
}

std::string EmbedderConfig::fingerprint() const {
  // Transport settings do not change vectors.
  auto j = embedder_config_to_json(*this);
  j.erase("timeout_ms");
  j.erase("retries");
  j.erase("max_in_flight");
  return sha256_hex(j.dump()).substr(0, 16);
}

// ---------------------------------------------------------------------------
// Embedder base
// ---------------------------------------------------------------------------

std::vector<Embedding> Embedder::embed_batch(
    const std::vector<std::vector<std::string>> &batch) const {
  std::vector<Embedding> out;
  out.reserve(batch.size());
  for (const auto &tokens : batch) out.push_back(embed(tokens));
  return out;
}

Embedding Embedder::embed_text(std::string_view text) const {
  const auto tokens = split_whitespace(to_lower(text));
  return embed(tokens);
}

// ---------------------------------------------------------------------------
// Hashed n-grams
// ---------------------------------------------------------------------------

std::uint64_t stable_hash(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

HashedNgramEmbedder::HashedNgramEmbedder(EmbedderConfig config)
    : config_(std::move(config)) {
  config_.kind = EmbedderKind::HashedNgram;
  config_.validate();
}

std::vector<std::pair<std::string, double>> HashedNgramEmbedder::features(
    std::span<const std::string> tokens) const {
  std::vector<std::pair<std::string, double>> out;
  for (const auto &order : config_.orders) {
    const auto n = static_cast<std::size_t>(order.n);
    if (order.unit == GramUnit::Word) {
      if (tokens.size() < n) continue;
      for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string f = "w" + std::to_string(n) + ":";
        for (std::size_t k = 0; k < n; ++k) {
          if (k) f.push_back(' ');
          f += tokens[i + k];
        }
        out.emplace_back(std::move(f), order.weight);
      }
    } else {
      for (const auto &tok : tokens) {
        const std::string padded = "#" + tok + "#";
        if (padded.size() < n) continue;
        for (std::size_t i = 0; i + n <= padded.size(); ++i) {
          out.emplace_back("c" + std::to_string(n) + ":" + padded.substr(i, n),
                           order.weight);
        }
      }
    }
  }
  return out;
}

std::pair<std::size_t, double> HashedNgramEmbedder::bucket(
    std::string_view feature) const {
  const auto h = stable_hash(feature, config_.seed);
  // Low bits pick the bucket, the top bit the sign.
  const auto index = static_cast<std::size_t>(h % config_.dimension);
  const double sign = (h >> 63) ? -1.0 : 1.0;
  return {index, sign};
}

Embedding HashedNgramEmbedder::embed(std::span<const std::string> tokens) const {
  const auto feats = features(tokens);
  if (feats.empty()) throw Error(ErrorCode::EmptyEmbedding, "no n-grams in input");
  std::vector<double> acc(config_.dimension, 0.0);
  for (const auto &[f, w] : feats) {
    const auto [index, sign] = bucket(f);
    acc[index] += sign * w;
  }
  Embedding raw(std::move(acc));
  if (raw.is_zero()) {
    throw Error(ErrorCode::EmptyEmbedding, "n-gram contributions cancel to zero");
  }
  return raw.normalized();
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig &config) {
  if (config.kind == EmbedderKind::RemoteService) {
    return std::make_unique<RemoteEmbedder>(config);
  }
  return std::make_unique<HashedNgramEmbedder>(config);
}

}  // namespace hscode
