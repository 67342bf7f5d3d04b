#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hscode/nomenclature.hpp"
#include "json.hpp"

namespace hscode {

// Embedding entries followed by the standardized weight and value.
using FeatureVector = std::vector<double>;

struct ClassDistribution {
  std::vector<std::string> labels;
  std::vector<double> probs;

  std::size_t size() const { return labels.size(); }
  // 0 for labels outside the support.
  double prob(const std::string &label) const;
  double sum() const;
  // Labels ordered by probability descending, ties by label.
  std::vector<std::pair<std::string, double>> ranked() const;
};

nlohmann::json distribution_to_json(const ClassDistribution &dist);

struct TrainConfig {
  double learning_rate = 0.5;
  int epochs = 40;
  std::size_t batch_size = 32;
  double l2 = 1e-4;
  std::uint64_t seed = 42;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig &config);
TrainConfig train_config_from_json(const nlohmann::json &json);

struct LabeledExample {
  FeatureVector x;
  std::string label;
};

// Multinomial logistic regression: p = softmax(W x + b). Weights are stored
// row-major as K rows of (D + 1) entries, the bias in the last column.
class SoftmaxModel {
 public:
  SoftmaxModel() = default;
  SoftmaxModel(std::vector<std::string> classes, std::size_t feature_dim, int level,
               std::optional<HsCode> parent = std::nullopt);

  // Single-class stand-in for branches with one observed class; always
  // predicts that class with probability 1.
  static SoftmaxModel constant(std::string label, std::size_t feature_dim, int level,
                               std::optional<HsCode> parent = std::nullopt);

  const std::vector<std::string> &classes() const { return classes_; }
  std::size_t num_classes() const { return classes_.size(); }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t row_stride() const { return feature_dim_ + 1; }
  int level() const { return level_; }
  const std::optional<HsCode> &parent() const { return parent_; }
  bool degenerate() const { return degenerate_; }

  std::vector<double> &weights() { return weights_; }
  const std::vector<double> &weights() const { return weights_; }

  double final_loss() const { return final_loss_; }
  void set_final_loss(double loss) { final_loss_ = loss; }

  std::vector<double> logits(std::span<const double> x) const;
  std::optional<std::size_t> class_index(const std::string &label) const;

  friend bool operator==(const SoftmaxModel &, const SoftmaxModel &) = default;

 private:
  std::vector<std::string> classes_;
  std::size_t feature_dim_ = 0;
  int level_ = 0;
  std::optional<HsCode> parent_;
  bool degenerate_ = false;
  std::vector<double> weights_;
  double final_loss_ = 0.0;
};

// Max-shifted softmax over raw logits.
std::vector<double> softmax(std::span<const double> logits);

ClassDistribution predict_proba(const SoftmaxModel &model, std::span<const double> x);

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as the weights
};

// Mean cross-entropy of the true classes over the batch plus
// (l2 / 2) * |W|^2 on the non-bias weights, and its gradient.
LossGradient loss_and_gradient(const SoftmaxModel &model,
                               std::span<const FeatureVector> xs,
                               std::span<const std::size_t> ys, double l2);

struct TrainTrace {
  std::vector<double> epoch_losses;  // loss observed during each epoch
};

SoftmaxModel train(std::span<const LabeledExample> examples, const TrainConfig &config,
                   int level, std::optional<HsCode> parent = std::nullopt,
                   TrainTrace *trace = nullptr);

// Highest-probability label; ties go to the lexicographically smallest.
std::pair<std::string, double> argmax_class(const ClassDistribution &dist);

// p(m | l*) for every heading m under chapter l*: the joint heading
// probability divided by p2(l*), renormalized over the children.
ClassDistribution conditional_proba(const ClassDistribution &p4_joint,
                                    const ClassDistribution &p2,
                                    const std::string &l_star,
                                    std::vector<double> *raw = nullptr);

enum class CompositionMode { PerBranch, Conditional };

std::string_view mode_name(CompositionMode mode);
CompositionMode parse_mode(std::string_view text);

struct HierarchicalPrediction {
  ClassDistribution chapter_dist;
  std::string chapter;
  double chapter_prob = 0.0;
  ClassDistribution heading_dist;
  std::string heading;
  double heading_prob = 0.0;
  CompositionMode mode = CompositionMode::PerBranch;
  // Conditional mode: p4_joint(m) / p2(l*) before renormalization.
  std::vector<double> raw_conditional;
};

HierarchicalPrediction hierarchical_predict(
    std::span<const double> x, const SoftmaxModel &hs2,
    const std::map<std::string, SoftmaxModel> &hs4_branches,
    const SoftmaxModel *hs4_joint, CompositionMode mode);

// Writes <name>.json metadata and <name>.bin little-endian float64 weights.
void save_model(const SoftmaxModel &model, const std::string &dir, const std::string &name,
                const std::string &numeric_stats_ref = "");
SoftmaxModel load_model(const std::string &dir, const std::string &name);
nlohmann::json model_metadata(const SoftmaxModel &model, const std::string &name,
                              const std::string &numeric_stats_ref);

std::string encode_weights(const std::vector<double> &weights);
std::vector<double> decode_weights(std::string_view bytes);

}  // namespace hscode
