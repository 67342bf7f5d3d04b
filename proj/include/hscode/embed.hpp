#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace hscode {

// Dense text vector with its Euclidean norm cached at construction.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<double> values);

  const std::vector<double> &values() const { return values_; }
  std::size_t dimension() const { return values_.size(); }
  double norm() const { return norm_; }
  bool is_zero() const { return norm_ == 0.0; }

  Embedding scaled(double factor) const;
  Embedding normalized() const;

  friend bool operator==(const Embedding &, const Embedding &) = default;

 private:
  std::vector<double> values_;
  double norm_ = 0.0;
};

// cos(a, b) = a.b / (|a||b|). Throws DimensionMismatch or ZeroVector.
double cosine(const Embedding &a, const Embedding &b);

enum class EmbedderKind { HashedNgram, RemoteService };

enum class GramUnit { Word, Char };

struct NgramOrder {
  GramUnit unit = GramUnit::Word;
  int n = 1;
  double weight = 1.0;

  friend bool operator==(const NgramOrder &, const NgramOrder &) = default;
};

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::HashedNgram;
  std::size_t dimension = 256;
  std::vector<NgramOrder> orders = {
      {GramUnit::Word, 1, 1.0}, {GramUnit::Word, 2, 1.0}, {GramUnit::Char, 3, 1.0}};
  std::uint64_t seed = 0x5eed5eedULL;
  // Remote service only.
  std::string endpoint;  // e.g. "http://127.0.0.1:8500"
  int timeout_ms = 5000;
  int retries = 2;
  int max_in_flight = 4;

  // Throws InvalidArgument when d < 8 or a hashed embedder has no orders.
  void validate() const;
  // Stable identifier of everything that affects produced vectors.
  std::string fingerprint() const;

  friend bool operator==(const EmbedderConfig &, const EmbedderConfig &) = default;
};

nlohmann::json embedder_config_to_json(const EmbedderConfig &config);
EmbedderConfig embedder_config_from_json(const nlohmann::json &json);

class Embedder {
 public:
  virtual ~Embedder() = default;

  // Tokens are joined with single spaces for embedders that want text.
  virtual Embedding embed(std::span<const std::string> tokens) const = 0;
  virtual std::vector<Embedding> embed_batch(
      const std::vector<std::vector<std::string>> &batch) const;

  Embedding embed_text(std::string_view text) const;

  virtual const EmbedderConfig &config() const = 0;
  std::size_t dimension() const { return config().dimension; }
  std::string fingerprint() const { return config().fingerprint(); }
};

// Signed feature hashing of word and character n-grams, L2-normalized.
class HashedNgramEmbedder final : public Embedder {
 public:
  explicit HashedNgramEmbedder(EmbedderConfig config = {});

  Embedding embed(std::span<const std::string> tokens) const override;
  const EmbedderConfig &config() const override { return config_; }

  // The n-gram strings fed to the hash for `tokens`, with their weights.
  // Exposed so tests can reason about collisions.
  std::vector<std::pair<std::string, double>> features(
      std::span<const std::string> tokens) const;
  // Bucket index and sign for one feature string.
  std::pair<std::size_t, double> bucket(std::string_view feature) const;

 private:
  EmbedderConfig config_;
};

// Client for an external sentence encoder speaking
//   POST /embed {"texts": [...]} -> {"vectors": [[...], ...]}
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(EmbedderConfig config);
  ~RemoteEmbedder() override;

  Embedding embed(std::span<const std::string> tokens) const override;
  std::vector<Embedding> embed_batch(
      const std::vector<std::vector<std::string>> &batch) const override;
  const EmbedderConfig &config() const override { return config_; }

 private:
  struct State;
  EmbedderConfig config_;
  std::unique_ptr<State> state_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig &config);

// 64-bit FNV-1a followed by a splitmix64 finalizer; stable across
// platforms and runs.
std::uint64_t stable_hash(std::string_view data, std::uint64_t seed);

}  // namespace hscode
