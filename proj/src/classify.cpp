#include "hscode/classify.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "hscode/error.hpp"
#include "hscode/text_util.hpp"

namespace hscode {

// ---------------------------------------------------------------------------
// ClassDistribution
// ---------------------------------------------------------------------------

double ClassDistribution::prob(const std::string &label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return probs[i];
  }
  return 0.0;
}

double ClassDistribution::sum() const {
  return std::accumulate(probs.begin(), probs.end(), 0.0);
}

std::vector<std::pair<std::string, double>> ClassDistribution::ranked() const {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out.emplace_back(labels[i], probs[i]);
  std::sort(out.begin(), out.end(), [](const auto &a, const auto &b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

nlohmann::json distribution_to_json(const ClassDistribution &dist) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto &[label, p] : dist.ranked()) {
    out.push_back({{"label", label}, {"probability", p}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// TrainConfig
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "learning rate must be > 0");
  }
  if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be >= 1");
  if (l2 < 0.0) throw Error(ErrorCode::InvalidArgument, "l2 must be >= 0");
}

nlohmann::json train_config_to_json(const TrainConfig &c) {
  return {{"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"l2", c.l2},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json &j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.l2 = j.value("l2", c.l2);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// SoftmaxModel
// ---------------------------------------------------------------------------

SoftmaxModel::SoftmaxModel(std::vector<std::string> classes, std::size_t feature_dim,
                           int level, std::optional<HsCode> parent)
    : classes_(std::move(classes)),
      feature_dim_(feature_dim),
      level_(level),
      parent_(std::move(parent)) {
  if (classes_.size() < 2) {
    throw Error(ErrorCode::SingleClass, "a softmax model needs at least two classes");
  }
  if (std::set<std::string>(classes_.begin(), classes_.end()).size() != classes_.size()) {
    throw Error(ErrorCode::InvalidArgument, "class labels must be distinct");
  }
  for (const auto &c : classes_) {
    if (c != "OTHERS" && c.size() != static_cast<std::size_t>(level_)) {
      throw Error(ErrorCode::InvalidArgument,
                  "label '" + c + "' does not match level " + std::to_string(level_));
    }
  }
  weights_.assign(classes_.size() * row_stride(), 0.0);
}

SoftmaxModel SoftmaxModel::constant(std::string label, std::size_t feature_dim, int level,
                                    std::optional<HsCode> parent) {
  SoftmaxModel m;
  m.classes_ = {std::move(label)};
  m.feature_dim_ = feature_dim;
  m.level_ = level;
  m.parent_ = std::move(parent);
  m.degenerate_ = true;
  m.weights_.assign(m.row_stride(), 0.0);
  return m;
}

std::vector<double> SoftmaxModel::logits(std::span<const double> x) const {
  if (x.size() != feature_dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                    std::to_string(feature_dim_));
  }
  const auto stride = row_stride();
  std::vector<double> z(classes_.size());
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    const double *w = weights_.data() + k * stride;
    double s = w[feature_dim_];
    for (std::size_t i = 0; i < feature_dim_; ++i) s += w[i] * x[i];
    z[k] = s;
  }
  return z;
}

std::optional<std::size_t> SoftmaxModel::class_index(const std::string &label) const {
  auto it = std::lower_bound(classes_.begin(), classes_.end(), label);
  if (it != classes_.end() && *it == label) {
    return static_cast<std::size_t>(it - classes_.begin());
  }
  // Classes loaded from disk are sorted too, but fall back to a scan.
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i] == label) return i;
  }
  return std::nullopt;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    total += p[i];
  }
  for (auto &v : p) v /= total;
  return p;
}

ClassDistribution predict_proba(const SoftmaxModel &model, std::span<const double> x) {
  const auto z = model.logits(x);
  return {model.classes(), softmax(z)};
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

LossGradient loss_and_gradient(const SoftmaxModel &model, std::span<const FeatureVector> xs,
                               std::span<const std::size_t> ys, double l2) {
  if (xs.size() != ys.size() || xs.empty()) {
    throw Error(ErrorCode::InvalidArgument, "batch needs matching, non-empty x and y");
  }
  const auto K = model.num_classes();
  const auto D = model.feature_dim();
  const auto stride = model.row_stride();
  const auto &W = model.weights();

  LossGradient out;
  out.gradient.assign(W.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(xs.size());

  for (std::size_t n = 0; n < xs.size(); ++n) {
    const auto &x = xs[n];
    const auto z = model.logits(x);
    const double mx = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - mx);
    const double log_total = std::log(total) + mx;
    out.loss += (log_total - z[ys[n]]) * inv_n;
    for (std::size_t k = 0; k < K; ++k) {
      const double p = std::exp(z[k] - log_total);
      const double delta = (p - (k == ys[n] ? 1.0 : 0.0)) * inv_n;
      double *g = out.gradient.data() + k * stride;
      for (std::size_t i = 0; i < D; ++i) g[i] += delta * x[i];
      g[D] += delta;
    }
  }
  if (l2 > 0.0) {
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < D; ++i) {
        const double w = W[k * stride + i];
        out.loss += 0.5 * l2 * w * w;
        out.gradient[k * stride + i] += l2 * w;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

// Fisher-Yates driven directly by mt19937_64 output so the permutation is
// identical across standard library implementations.
void shuffle_indices(std::vector<std::size_t> &idx, std::mt19937_64 &rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

SoftmaxModel train(std::span<const LabeledExample> examples, const TrainConfig &config,
                   int level, std::optional<HsCode> parent, TrainTrace *trace) {
  config.validate();
  std::set<std::string> label_set;
  for (const auto &e : examples) label_set.insert(e.label);
  if (label_set.size() < 2) {
    throw Error(ErrorCode::SingleClass,
                "training data has " + std::to_string(label_set.size()) + " class(es)");
  }
  const auto D = examples.front().x.size();
  for (const auto &e : examples) {
    if (e.x.size() != D) throw Error(ErrorCode::DimensionMismatch, "ragged feature vectors");
  }

  SoftmaxModel model(std::vector<std::string>(label_set.begin(), label_set.end()), D, level,
                     std::move(parent));
  std::vector<FeatureVector> xs;
  std::vector<std::size_t> ys;
  xs.reserve(examples.size());
  ys.reserve(examples.size());
  for (const auto &e : examples) {
    xs.push_back(e.x);
    ys.push_back(*model.class_index(e.label));
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = std::min(config.batch_size, xs.size());
  std::vector<FeatureVector> bx;
  std::vector<std::size_t> by;
  auto &W = model.weights();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto stop = std::min(order.size(), start + batch);
      bx.clear();
      by.clear();
      for (std::size_t i = start; i < stop; ++i) {
        bx.push_back(xs[order[i]]);
        by.push_back(ys[order[i]]);
      }
      const auto lg = loss_and_gradient(model, bx, by, config.l2);
      if (!std::isfinite(lg.loss)) {
        throw Error(ErrorCode::NonFiniteLoss,
                    "loss diverged in epoch " + std::to_string(epoch + 1) +
                        "; lower the learning rate");
      }
      epoch_loss += lg.loss * static_cast<double>(stop - start);
      seen += stop - start;
      for (std::size_t i = 0; i < W.size(); ++i) W[i] -= config.learning_rate * lg.gradient[i];
    }
    epoch_loss /= static_cast<double>(seen);
    if (trace) trace->epoch_losses.push_back(epoch_loss);
  }

  const double final_loss = loss_and_gradient(model, xs, ys, config.l2).loss;
  if (!std::isfinite(final_loss)) {
    throw Error(ErrorCode::NonFiniteLoss, "final loss is not finite");
  }
  model.set_final_loss(final_loss);
  return model;
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

std::pair<std::string, double> argmax_class(const ClassDistribution &dist) {
  if (dist.labels.empty()) throw Error(ErrorCode::InvalidArgument, "empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.labels.size(); ++i) {
    if (dist.probs[i] > dist.probs[best] ||
        (dist.probs[i] == dist.probs[best] && dist.labels[i] < dist.labels[best])) {
      best = i;
    }
  }
  return {dist.labels[best], dist.probs[best]};
}

ClassDistribution conditional_proba(const ClassDistribution &p4_joint,
                                    const ClassDistribution &p2, const std::string &l_star,
                                    std::vector<double> *raw) {
  const double parent = p2.prob(l_star);
  if (!(parent > 0.0)) {
    throw Error(ErrorCode::ZeroParentProbability, "p(" + l_star + ") is zero");
  }
  ClassDistribution out;
  std::vector<double> ratios;
  for (std::size_t i = 0; i < p4_joint.labels.size(); ++i) {
    const auto &m = p4_joint.labels[i];
    if (m.size() > l_star.size() && m.compare(0, l_star.size(), l_star) == 0) {
      out.labels.push_back(m);
      ratios.push_back(p4_joint.probs[i] / parent);
    }
  }
  if (out.labels.empty()) throw Error(ErrorCode::NoChildren, "no headings under " + l_star);
  const double total = std::accumulate(ratios.begin(), ratios.end(), 0.0);
  if (!(total > 0.0)) throw Error(ErrorCode::NoChildren, "zero joint mass under " + l_star);
  out.probs.reserve(ratios.size());
  for (double r : ratios) out.probs.push_back(r / total);
  if (raw) *raw = std::move(ratios);
  return out;
}

std::string_view mode_name(CompositionMode mode) {
  return mode == CompositionMode::PerBranch ? "per-branch" : "conditional";
}

CompositionMode parse_mode(std::string_view text) {
  if (text == "per-branch" || text == "per_branch") return CompositionMode::PerBranch;
  if (text == "conditional") return CompositionMode::Conditional;
  throw Error(ErrorCode::InvalidArgument, "unknown composition mode '" + std::string(text) + "'");
}

HierarchicalPrediction hierarchical_predict(
    std::span<const double> x, const SoftmaxModel &hs2,
    const std::map<std::string, SoftmaxModel> &hs4_branches, const SoftmaxModel *hs4_joint,
    CompositionMode mode) {
  HierarchicalPrediction out;
  out.mode = mode;
  out.chapter_dist = predict_proba(hs2, x);
  std::tie(out.chapter, out.chapter_prob) = argmax_class(out.chapter_dist);

  if (mode == CompositionMode::PerBranch) {
    auto it = hs4_branches.find(out.chapter);
    if (it == hs4_branches.end()) {
      throw Error(ErrorCode::MissingBranchModel, "no heading model for chapter " + out.chapter);
    }
    out.heading_dist = predict_proba(it->second, x);
  } else {
    if (!hs4_joint) throw Error(ErrorCode::MissingJointModel, "no joint heading model");
    const auto joint = predict_proba(*hs4_joint, x);
    out.heading_dist = conditional_proba(joint, out.chapter_dist, out.chapter,
                                         &out.raw_conditional);
  }
  std::tie(out.heading, out.heading_prob) = argmax_class(out.heading_dist);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

std::string encode_weights(const std::vector<double> &weights) {
  std::string out;
  out.reserve(weights.size() * 8);
  for (double w : weights) {
    auto bits = std::bit_cast<std::uint64_t>(w);
    for (int b = 0; b < 8; ++b) {
      out.push_back(static_cast<char>(bits & 0xff));
      bits >>= 8;
    }
  }
  return out;
}

std::vector<double> decode_weights(std::string_view bytes) {
  if (bytes.size() % 8 != 0) throw Error(ErrorCode::FormatError, "weight blob size not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) {
      bits = (bits << 8) | static_cast<unsigned char>(bytes[i * 8 + static_cast<std::size_t>(b)]);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

nlohmann::json model_metadata(const SoftmaxModel &model, const std::string &name,
                              const std::string &numeric_stats_ref) {
  nlohmann::json j = {
      {"format", "hscode-softmax"},
      {"version", 1},
      {"level", model.level()},
      {"parent", model.parent() ? nlohmann::json(model.parent()->digits()) : nlohmann::json()},
      {"classes", model.classes()},
      {"feature_dim", model.feature_dim()},
      {"embedding_dim", model.feature_dim() >= 2 ? model.feature_dim() - 2 : 0},
      {"degenerate", model.degenerate()},
      {"final_loss", model.final_loss()},
      {"numeric_stats", numeric_stats_ref},
      {"weights",
       {{"file", name + ".bin"},
        {"rows", model.num_classes()},
        {"cols", model.row_stride()},
        {"dtype", "float64-le"}}},
  };
  return j;
}

void save_model(const SoftmaxModel &model, const std::string &dir, const std::string &name,
                const std::string &numeric_stats_ref) {
  std::filesystem::create_directories(dir);
  const auto meta = model_metadata(model, name, numeric_stats_ref);
  write_file(dir + "/" + name + ".json", meta.dump(2) + "\n");
  write_file(dir + "/" + name + ".bin", encode_weights(model.weights()));
}

SoftmaxModel load_model(const std::string &dir, const std::string &name) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir + "/" + name + ".json"));
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::FormatError, name + ".json: " + e.what());
  }
  if (meta.value("format", std::string()) != "hscode-softmax" || meta.value("version", 0) != 1) {
    throw Error(ErrorCode::FormatError, name + ".json: unsupported model format");
  }
  auto classes = meta.at("classes").get<std::vector<std::string>>();
  const auto dim = meta.at("feature_dim").get<std::size_t>();
  const int level = meta.at("level").get<int>();
  std::optional<HsCode> parent;
  if (!meta["parent"].is_null()) parent = HsCode::parse(meta["parent"].get<std::string>());

  SoftmaxModel model = meta.value("degenerate", false)
                           ? SoftmaxModel::constant(classes.at(0), dim, level, parent)
                           : SoftmaxModel(std::move(classes), dim, level, parent);
  auto weights = decode_weights(read_file(dir + "/" + meta["weights"]["file"].get<std::string>()));
  if (weights.size() != model.weights().size()) {
    throw Error(ErrorCode::FormatError, name + ": weight blob has wrong size");
  }
  model.weights() = std::move(weights);
  model.set_final_loss(meta.value("final_loss", 0.0));
  return model;
}

}  // namespace hscode
