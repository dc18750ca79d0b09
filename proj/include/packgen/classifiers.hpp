#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "packgen/featurizer.hpp"
#include "packgen/nn.hpp"

namespace packgen {

enum class ModelKind { LR, DT, RF, MLP, DNN };

std::string_view to_string(ModelKind k) noexcept;
std::optional<ModelKind> parse_model_kind(std::string_view text) noexcept;

/// Design matrix with one sample per row.
struct TrainingData {
  Eigen::MatrixXd x;
  std::vector<int> y;

  static TrainingData from_features(std::span<const FeatureVector> rows);
  std::size_t size() const { return y.size(); }
  std::string hash() const;
};

inline constexpr int kMaxFeaturesAll = 0;
inline constexpr int kMaxFeaturesSqrt = -1;

struct LinearParams {
  int epochs = 100;
  int batch_size = 200;
  double learning_rate = 0.01;
  double l2 = 1e-4;
};

struct TreeParams {
  int max_depth = 1500;
  int min_samples_split = 1;  // values below 2 act as 2
  int min_samples_leaf = 1;
  int max_features = 39;  // or kMaxFeaturesAll / kMaxFeaturesSqrt
  double ccp_alpha = 0.05;  // minimal cost-complexity pruning strength
};

struct ForestParams {
  int n_estimators = 200;
  bool bootstrap = true;
  TreeParams tree{100, 2, 1, kMaxFeaturesSqrt, 0.04};
};

struct NetworkParams {
  std::vector<int> hidden{100};
  int batch_size = 200;
  double learning_rate = 1e-3;
  int max_epochs = 50;
  double l2 = 1e-4;
  double tol = 1e-4;
  int n_iter_no_change = 10;
};

struct Hyperparams {
  ModelKind kind = ModelKind::LR;
  LinearParams linear;
  TreeParams tree;
  ForestParams forest;
  NetworkParams network;

  /// Defaults for each kind (MLP hidden (100), DNN (256,128,32), ...).
  static Hyperparams defaults(ModelKind kind);
  nlohmann::json to_json() const;
  static Hyperparams from_json(const nlohmann::json& j);
};

/// Trained decision function over a fixed-width input.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual ModelKind kind() const = 0;
  virtual std::size_t input_dim() const = 0;
  /// Probability of the malicious class; x.size() == input_dim().
  virtual double predict_proba(std::span<const double> x) const = 0;
  virtual Eigen::VectorXd predict_proba_batch(const Eigen::MatrixXd& x) const;
  virtual nlohmann::json parameters() const = 0;
};

class LogisticRegression final : public Classifier {
 public:
  LogisticRegression(Eigen::VectorXd weights, double bias) : w_(std::move(weights)), b_(bias) {}
  ModelKind kind() const override { return ModelKind::LR; }
  std::size_t input_dim() const override { return static_cast<std::size_t>(w_.size()); }
  double predict_proba(std::span<const double> x) const override;
  Eigen::VectorXd predict_proba_batch(const Eigen::MatrixXd& x) const override;
  nlohmann::json parameters() const override;
  static std::shared_ptr<LogisticRegression> from_parameters(const nlohmann::json& j);

  const Eigen::VectorXd& weights() const { return w_; }
  double bias() const { return b_; }

 private:
  Eigen::VectorXd w_;
  double b_;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // fraction of malicious samples
  double impurity = 0.0;
  int samples = 0;
};

/// CART tree with gini impurity; x[feature] <= threshold goes left.
class DecisionTree final : public Classifier {
 public:
  DecisionTree(std::vector<TreeNode> nodes, std::size_t input_dim) : nodes_(std::move(nodes)), dim_(input_dim) {}
  ModelKind kind() const override { return ModelKind::DT; }
  std::size_t input_dim() const override { return dim_; }
  double predict_proba(std::span<const double> x) const override;
  nlohmann::json parameters() const override;
  static std::shared_ptr<DecisionTree> from_parameters(const nlohmann::json& j, std::size_t input_dim);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int depth() const;

 private:
  std::vector<TreeNode> nodes_;
  std::size_t dim_;
};

/// Majority vote over trees; probability = fraction of trees voting malicious.
class RandomForest final : public Classifier {
 public:
  explicit RandomForest(std::vector<DecisionTree> trees) : trees_(std::move(trees)) {}
  ModelKind kind() const override { return ModelKind::RF; }
  std::size_t input_dim() const override { return trees_.empty() ? 0 : trees_.front().input_dim(); }
  double predict_proba(std::span<const double> x) const override;
  nlohmann::json parameters() const override;
  static std::shared_ptr<RandomForest> from_parameters(const nlohmann::json& j, std::size_t input_dim);

  std::vector<int> tree_votes(std::span<const double> x) const;
  const std::vector<DecisionTree>& trees() const { return trees_; }

 private:
  std::vector<DecisionTree> trees_;
};

/// Feed-forward network with a single logit output (MLP or DNN).
class NeuralClassifier final : public Classifier {
 public:
  NeuralClassifier(ModelKind kind, nn::FeedForward net) : kind_(kind), net_(std::move(net)) {}
  ModelKind kind() const override { return kind_; }
  std::size_t input_dim() const override { return static_cast<std::size_t>(net_.input_dim()); }
  double predict_proba(std::span<const double> x) const override;
  Eigen::VectorXd predict_proba_batch(const Eigen::MatrixXd& x) const override;
  nlohmann::json parameters() const override;

  const nn::FeedForward& network() const { return net_; }

 private:
  ModelKind kind_;
  nn::FeedForward net_;
};

/// Mean binary cross-entropy on logits plus 0.5 * l2 * ||W||^2. Samples are
/// columns of `x`. Fills `grad` when given.
double bce_loss(const nn::FeedForward& net, const nn::Matrix& x, std::span<const int> y, double l2,
                nn::Gradients* grad);

struct ModelMetadata {
  std::uint64_t seed = 0;
  Hyperparams hyperparams;
  std::string data_hash;
  std::optional<double> train_accuracy;
  std::optional<double> eval_accuracy;
  std::vector<std::string> notes;
  nlohmann::json provenance = nlohmann::json::object();  // config hash, data split, role
};

struct Prediction {
  int label = 0;
  double probability = 0.0;
};

/// Immutable trained model plus provenance. Cheap to copy.
class ClassifierModel {
 public:
  ClassifierModel(std::shared_ptr<const Classifier> impl, ModelMetadata meta = {});

  ModelKind kind() const { return impl_->kind(); }
  std::size_t input_dim() const { return impl_->input_dim(); }
  /// Label is 1 iff probability >= 0.5. Throws Error(InvalidArgument) on a
  /// dimension mismatch.
  Prediction predict(std::span<const double> x) const;
  int predict_label(std::span<const double> x) const { return predict(x).label; }
  std::vector<int> predict_labels(const Eigen::MatrixXd& x) const;
  double accuracy(const TrainingData& data) const;

  const Classifier& impl() const { return *impl_; }
  const ModelMetadata& metadata() const { return meta_; }
  void set_provenance(nlohmann::json p) { meta_.provenance = std::move(p); }

  nlohmann::json to_json() const;
  static ClassifierModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static ClassifierModel load(const std::filesystem::path& path);

 private:
  std::shared_ptr<const Classifier> impl_;
  ModelMetadata meta_;
};

/// Fits a model. Throws Error(Training) on a single-class dataset or a
/// non-finite loss. When `eval` is given its accuracy is recorded.
ClassifierModel train(const TrainingData& data, const Hyperparams& params, std::uint64_t seed,
                      const TrainingData* eval = nullptr);

class Ensemble {
 public:
  explicit Ensemble(std::vector<ClassifierModel> members);

  const std::vector<ClassifierModel>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  /// One label per member, in member order.
  std::vector<int> classify_all(std::span<const double> x) const;

 private:
  std::vector<ClassifierModel> members_;
};

struct Candidate {
  ClassifierModel model;
  double accuracy = 0.0;
};

/// Best candidate of each designated kind by held-out accuracy; ties go to
/// the lower candidate index. Throws Error(Config) when a kind is missing.
Ensemble select_ensemble(const std::vector<Candidate>& candidates,
                         const std::vector<ModelKind>& kinds = {ModelKind::LR, ModelKind::DT, ModelKind::MLP});

}  // namespace packgen
