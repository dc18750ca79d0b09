#include "packgen/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "packgen/hashing.hpp"

namespace packgen {

namespace {

constexpr std::string_view kModelFormat = "packgen-classifier";
constexpr int kModelVersion = 1;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void require_both_classes(const TrainingData& data) {
  if (data.size() == 0) throw Error(ErrorCode::Training, "empty training set");
  if (static_cast<std::size_t>(data.x.rows()) != data.size()) {
    throw Error(ErrorCode::InvalidArgument, "design matrix rows disagree with label count");
  }
  const auto pos = std::count(data.y.begin(), data.y.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(data.size())) {
    throw Error(ErrorCode::Training, "training set contains a single class");
  }
}

// ---------------------------------------------------------------- trees

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const std::vector<int>& y, const TreeParams& p, std::uint64_t seed)
      : x_(x), y_(y), p_(p), rng_(seed) {
    const auto d = static_cast<int>(x.cols());
    if (p.max_features == kMaxFeaturesAll) {
      max_features_ = d;
    } else if (p.max_features == kMaxFeaturesSqrt) {
      max_features_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(d))));
    } else {
      max_features_ = std::clamp(p.max_features, 1, d);
    }
    order_.resize(static_cast<std::size_t>(d));
    std::iota(order_.begin(), order_.end(), 0);
  }

  DecisionTree build(std::vector<int> samples) {
    grow(samples, 0);
    if (p_.ccp_alpha > 0.0) prune();
    return DecisionTree(std::move(nodes_), static_cast<std::size_t>(x_.cols()));
  }

 private:
  static double gini(double pos, double n) {
    if (n <= 0) return 0.0;
    const double q = pos / n;
    return 2.0 * q * (1.0 - q);
  }

  /// Weakest-link pruning: repeatedly collapses the internal node with the
  /// smallest effective alpha while that alpha is <= ccp_alpha.
  void prune() {
    const double total = nodes_.front().samples;
    const auto count = nodes_.size();
    std::vector<double> subtree_risk(count);
    std::vector<int> leaves(count);
    for (;;) {
      // children always have larger indices than their parent
      for (std::size_t i = count; i-- > 0;) {
        const auto& n = nodes_[i];
        if (n.feature < 0) {
          subtree_risk[i] = n.samples / total * n.impurity;
          leaves[i] = 1;
        } else {
          const auto l = static_cast<std::size_t>(n.left), r = static_cast<std::size_t>(n.right);
          subtree_risk[i] = subtree_risk[l] + subtree_risk[r];
          leaves[i] = leaves[l] + leaves[r];
        }
      }
      std::size_t weakest = count;
      double weakest_alpha = 0.0;
      std::vector<std::size_t> stack{0};
      while (!stack.empty()) {
        const auto i = stack.back();
        stack.pop_back();
        const auto& n = nodes_[i];
        if (n.feature < 0) continue;
        const double alpha = (n.samples / total * n.impurity - subtree_risk[i]) / (leaves[i] - 1);
        if (weakest == count || alpha < weakest_alpha || (alpha == weakest_alpha && i < weakest)) {
          weakest = i;
          weakest_alpha = alpha;
        }
        stack.push_back(static_cast<std::size_t>(n.right));
        stack.push_back(static_cast<std::size_t>(n.left));
      }
      if (weakest == count || weakest_alpha > p_.ccp_alpha) break;
      nodes_[weakest].feature = -1;
      nodes_[weakest].threshold = 0.0;
    }
    // drop unreachable nodes, keeping parent-before-child order
    std::vector<int> remap(count, -1);
    std::vector<TreeNode> kept;
    std::vector<std::size_t> order{0};
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& n = nodes_[order[k]];
      if (n.feature >= 0) {
        order.push_back(static_cast<std::size_t>(n.left));
        order.push_back(static_cast<std::size_t>(n.right));
      }
    }
    std::sort(order.begin(), order.end());
    for (auto i : order) {
      remap[i] = static_cast<int>(kept.size());
      kept.push_back(nodes_[i]);
    }
    for (auto& n : kept) {
      if (n.feature >= 0) {
        n.left = remap[static_cast<std::size_t>(n.left)];
        n.right = remap[static_cast<std::size_t>(n.right)];
      } else {
        n.left = n.right = -1;
      }
    }
    nodes_ = std::move(kept);
  }

  int grow(std::vector<int>& samples, int depth) {
    const auto n = static_cast<int>(samples.size());
    int pos = 0;
    for (int i : samples) pos += y_[static_cast<std::size_t>(i)];
    const double impurity = gini(pos, n);

    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{-1, 0.0, -1, -1, static_cast<double>(pos) / n, impurity, n});
    if (depth >= p_.max_depth || n < std::max(2, p_.min_samples_split) || pos == 0 || pos == n) return id;

    int best_feature = -1;
    double best_threshold = 0.0, best_gain = 1e-12;
    std::vector<std::pair<double, int>> column(static_cast<std::size_t>(n));
    std::shuffle(order_.begin(), order_.end(), rng_);
    int visited = 0;
    for (int f : order_) {
      if (visited >= max_features_) break;
      double lo = x_(samples[0], f), hi = lo;
      for (int i : samples) {
        const double v = x_(i, f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (lo == hi) continue;  // constant features do not count towards max_features
      ++visited;
      for (int k = 0; k < n; ++k) column[static_cast<std::size_t>(k)] = {x_(samples[static_cast<std::size_t>(k)], f), y_[static_cast<std::size_t>(samples[static_cast<std::size_t>(k)])]};
      std::sort(column.begin(), column.end());
      int left_pos = 0;
      for (int k = 0; k + 1 < n; ++k) {
        left_pos += column[static_cast<std::size_t>(k)].second;
        const double v = column[static_cast<std::size_t>(k)].first;
        const double next = column[static_cast<std::size_t>(k) + 1].first;
        if (v == next) continue;
        const int nl = k + 1, nr = n - nl;
        if (nl < p_.min_samples_leaf || nr < p_.min_samples_leaf) continue;
        const double child = (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
        const double gain = impurity - child;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = v + (next - v) / 2.0;
          if (best_threshold == next) best_threshold = v;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<int> left, right;
    for (int i : samples) (x_(i, best_feature) <= best_threshold ? left : right).push_back(i);
    samples.clear();
    samples.shrink_to_fit();
    nodes_[static_cast<std::size_t>(id)].feature = best_feature;
    nodes_[static_cast<std::size_t>(id)].threshold = best_threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const Eigen::MatrixXd& x_;
  const std::vector<int>& y_;
  TreeParams p_;
  nn::Rng rng_;
  int max_features_ = 1;
  std::vector<int> order_;
  std::vector<TreeNode> nodes_;
};

DecisionTree fit_tree(const TrainingData& data, const TreeParams& p, std::uint64_t seed, std::vector<int> samples) {
  return TreeBuilder(data.x, data.y, p, seed).build(std::move(samples));
}

// ---------------------------------------------------------------- linear

std::shared_ptr<LogisticRegression> fit_logistic(const TrainingData& data, const LinearParams& p, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto d = data.x.cols();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  Eigen::VectorXd mw = Eigen::VectorXd::Zero(d), vw = Eigen::VectorXd::Zero(d);
  double mb = 0.0, vb = 0.0;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t t = 0;
  nn::Rng rng(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv[i] = data.y[static_cast<std::size_t>(i)];
  const Eigen::Index batch = std::max(1, p.batch_size);

  for (int epoch = 0; epoch < p.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index m = std::min(batch, n - start);
      std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + m);
      const Eigen::MatrixXd xb = data.x(idx, Eigen::all);
      const Eigen::VectorXd yb = yv(idx);
      const Eigen::VectorXd z = (xb * w).array() + b;
      Eigen::VectorXd residual(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        residual[i] = sigmoid(z[i]) - yb[i];
        epoch_loss += std::max(z[i], 0.0) - z[i] * yb[i] + std::log1p(std::exp(-std::abs(z[i])));
      }
      const Eigen::VectorXd gw = xb.transpose() * residual / static_cast<double>(m) + p.l2 * w;
      const double gb = residual.mean();
      ++t;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
      mw = beta1 * mw + (1 - beta1) * gw;
      vw = beta2 * vw + (1 - beta2) * gw.cwiseProduct(gw);
      mb = beta1 * mb + (1 - beta1) * gb;
      vb = beta2 * vb + (1 - beta2) * gb * gb;
      w.array() -= p.learning_rate * (mw.array() / c1) / ((vw.array() / c2).sqrt() + eps);
      b -= p.learning_rate * (mb / c1) / (std::sqrt(vb / c2) + eps);
    }
    if (!std::isfinite(epoch_loss)) {
      throw Error(ErrorCode::Training, "logistic regression loss became non-finite at epoch " + std::to_string(epoch));
    }
  }
  return std::make_shared<LogisticRegression>(std::move(w), b);
}

// ---------------------------------------------------------------- networks

std::shared_ptr<NeuralClassifier> fit_network(ModelKind kind, const TrainingData& data, const NetworkParams& p,
                                              std::uint64_t seed) {
  nn::Rng rng(seed);
  std::vector<int> sizes{static_cast<int>(data.x.cols())};
  sizes.insert(sizes.end(), p.hidden.begin(), p.hidden.end());
  sizes.push_back(1);
  nn::FeedForward net(sizes, nn::Init::GlorotUniform, rng);
  nn::Adam opt(net, p.learning_rate);

  const auto n = static_cast<Eigen::Index>(data.size());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index batch = std::max(1, p.batch_size);
  double best_loss = std::numeric_limits<double>::infinity();
  int stale = 0;

  for (int epoch = 0; epoch < p.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index m = std::min(batch, n - start);
      std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + m);
      const nn::Matrix xb = data.x(idx, Eigen::all).transpose();
      std::vector<int> yb(static_cast<std::size_t>(m));
      for (Eigen::Index i = 0; i < m; ++i) yb[static_cast<std::size_t>(i)] = data.y[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      nn::Gradients g;
      const double loss = bce_loss(net, xb, yb, p.l2, &g);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::Training, std::string(to_string(kind)) + " loss became non-finite at epoch " +
                                             std::to_string(epoch) + ", batch starting at " + std::to_string(start));
      }
      epoch_loss += loss * static_cast<double>(m);
      opt.step(net, g);
    }
    epoch_loss /= static_cast<double>(n);
    if (epoch_loss > best_loss - p.tol) {
      if (++stale >= p.n_iter_no_change) break;
    } else {
      stale = 0;
    }
    best_loss = std::min(best_loss, epoch_loss);
  }
  return std::make_shared<NeuralClassifier>(kind, std::move(net));
}

nlohmann::json tree_json(const DecisionTree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes()) {
    nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.impurity, n.samples});
  }
  return {{"nodes", std::move(nodes)}};
}

DecisionTree tree_from_json(const nlohmann::json& j, std::size_t input_dim) {
  std::vector<TreeNode> nodes;
  for (const auto& e : j.at("nodes")) {
    nodes.push_back(TreeNode{e.at(0), e.at(1), e.at(2), e.at(3), e.at(4), e.at(5), e.at(6)});
  }
  const auto count = static_cast<int>(nodes.size());
  for (const auto& n : nodes) {
    if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count ||
                           static_cast<std::size_t>(n.feature) >= input_dim)) {
      throw Error(ErrorCode::UnsupportedFormat, "corrupt decision tree node");
    }
  }
  if (nodes.empty()) throw Error(ErrorCode::UnsupportedFormat, "decision tree has no nodes");
  return DecisionTree(std::move(nodes), input_dim);
}

}  // namespace

std::string_view to_string(ModelKind k) noexcept {
  switch (k) {
    case ModelKind::LR: return "LR";
    case ModelKind::DT: return "DT";
    case ModelKind::RF: return "RF";
    case ModelKind::MLP: return "MLP";
    case ModelKind::DNN: return "DNN";
  }
  return "LR";
}

std::optional<ModelKind> parse_model_kind(std::string_view text) noexcept {
  for (auto k : {ModelKind::LR, ModelKind::DT, ModelKind::RF, ModelKind::MLP, ModelKind::DNN})
    if (to_string(k) == text) return k;
  return std::nullopt;
}

TrainingData TrainingData::from_features(std::span<const FeatureVector> rows) {
  TrainingData d;
  d.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kFeatureCount));
  d.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto bytes = rows[i].bytes();
    for (std::size_t j = 0; j < kFeatureCount; ++j) d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = bytes[j] / 255.0;
    d.y.push_back(rows[i].label);
  }
  return d;
}

std::string TrainingData::hash() const {
  Sha256 h;
  h.update(std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + ";");
  h.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(x.data()),
                                         static_cast<std::size_t>(x.size()) * sizeof(double)));
  for (int v : y) h.update(v ? "1" : "0");
  return h.hex();
}

Hyperparams Hyperparams::defaults(ModelKind kind) {
  Hyperparams h;
  h.kind = kind;
  if (kind == ModelKind::DNN) h.network.hidden = {256, 128, 32};
  return h;
}

nlohmann::json Hyperparams::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}};
  auto tree_j = [](const TreeParams& t) {
    nlohmann::json mf = t.max_features == kMaxFeaturesAll    ? nlohmann::json("all")
                        : t.max_features == kMaxFeaturesSqrt ? nlohmann::json("sqrt")
                                                             : nlohmann::json(t.max_features);
    return nlohmann::json{{"criterion", "gini"},
                          {"max_depth", t.max_depth},
                          {"min_samples_split", t.min_samples_split},
                          {"min_samples_leaf", t.min_samples_leaf},
                          {"max_features", mf},
                          {"ccp_alpha", t.ccp_alpha}};
  };
  switch (kind) {
    case ModelKind::LR:
      j["linear"] = {{"epochs", linear.epochs}, {"batch_size", linear.batch_size},
                     {"learning_rate", linear.learning_rate}, {"l2", linear.l2}};
      break;
    case ModelKind::DT: j["tree"] = tree_j(tree); break;
    case ModelKind::RF:
      j["forest"] = {{"n_estimators", forest.n_estimators}, {"bootstrap", forest.bootstrap}, {"tree", tree_j(forest.tree)}};
      break;
    case ModelKind::MLP:
    case ModelKind::DNN:
      j["network"] = {{"hidden", network.hidden},       {"activation", "relu"},      {"solver", "adam"},
                      {"batch_size", network.batch_size}, {"learning_rate", network.learning_rate},
                      {"max_epochs", network.max_epochs}, {"l2", network.l2},        {"tol", network.tol},
                      {"n_iter_no_change", network.n_iter_no_change}};
      break;
  }
  return j;
}

Hyperparams Hyperparams::from_json(const nlohmann::json& j) {
  auto kind = parse_model_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error(ErrorCode::UnsupportedFormat, "unknown model kind in hyperparameters");
  Hyperparams h = defaults(*kind);
  auto tree_from = [](const nlohmann::json& t) {
    TreeParams p;
    p.max_depth = t.at("max_depth");
    p.min_samples_split = t.at("min_samples_split");
    p.min_samples_leaf = t.at("min_samples_leaf");
    p.ccp_alpha = t.at("ccp_alpha");
    const auto& mf = t.at("max_features");
    if (mf.is_string()) {
      p.max_features = mf.get<std::string>() == "sqrt" ? kMaxFeaturesSqrt : kMaxFeaturesAll;
    } else {
      p.max_features = mf.get<int>();
    }
    return p;
  };
  if (j.contains("linear")) {
    const auto& l = j["linear"];
    h.linear = {l.at("epochs"), l.at("batch_size"), l.at("learning_rate"), l.at("l2")};
  }
  if (j.contains("tree")) h.tree = tree_from(j["tree"]);
  if (j.contains("forest")) {
    h.forest.n_estimators = j["forest"].at("n_estimators");
    h.forest.bootstrap = j["forest"].at("bootstrap");
    h.forest.tree = tree_from(j["forest"].at("tree"));
  }
  if (j.contains("network")) {
    const auto& n = j["network"];
    h.network.hidden = n.at("hidden").get<std::vector<int>>();
    h.network.batch_size = n.at("batch_size");
    h.network.learning_rate = n.at("learning_rate");
    h.network.max_epochs = n.at("max_epochs");
    h.network.l2 = n.at("l2");
    h.network.tol = n.at("tol");
    h.network.n_iter_no_change = n.at("n_iter_no_change");
  }
  return h;
}

Eigen::VectorXd Classifier::predict_proba_batch(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) row[static_cast<std::size_t>(j)] = x(i, j);
    out[i] = predict_proba(row);
  }
  return out;
}

double LogisticRegression::predict_proba(std::span<const double> x) const {
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  return sigmoid(w_.dot(v) + b_);
}

Eigen::VectorXd LogisticRegression::predict_proba_batch(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd z = (x * w_).array() + b_;
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

nlohmann::json LogisticRegression::parameters() const {
  return {{"weights", std::vector<double>(w_.data(), w_.data() + w_.size())}, {"bias", b_}};
}

std::shared_ptr<LogisticRegression> LogisticRegression::from_parameters(const nlohmann::json& j) {
  const auto w = j.at("weights").get<std::vector<double>>();
  return std::make_shared<LogisticRegression>(Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())),
                                              j.at("bias").get<double>());
}

double DecisionTree::predict_proba(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const auto& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes_[i].value;
}

int DecisionTree::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes_[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return best;
}

nlohmann::json DecisionTree::parameters() const { return tree_json(*this); }

std::shared_ptr<DecisionTree> DecisionTree::from_parameters(const nlohmann::json& j, std::size_t input_dim) {
  return std::make_shared<DecisionTree>(tree_from_json(j, input_dim));
}

std::vector<int> RandomForest::tree_votes(std::span<const double> x) const {
  std::vector<int> votes;
  votes.reserve(trees_.size());
  for (const auto& t : trees_) votes.push_back(t.predict_proba(x) >= 0.5 ? 1 : 0);
  return votes;
}

double RandomForest::predict_proba(std::span<const double> x) const {
  if (trees_.empty()) return 0.0;
  const auto votes = tree_votes(x);
  return static_cast<double>(std::count(votes.begin(), votes.end(), 1)) / static_cast<double>(votes.size());
}

nlohmann::json RandomForest::parameters() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) trees.push_back(tree_json(t));
  return {{"trees", std::move(trees)}};
}

std::shared_ptr<RandomForest> RandomForest::from_parameters(const nlohmann::json& j, std::size_t input_dim) {
  std::vector<DecisionTree> trees;
  for (const auto& t : j.at("trees")) trees.push_back(tree_from_json(t, input_dim));
  return std::make_shared<RandomForest>(std::move(trees));
}

double NeuralClassifier::predict_proba(std::span<const double> x) const {
  const nn::Matrix col = Eigen::Map<const nn::Matrix>(x.data(), static_cast<Eigen::Index>(x.size()), 1);
  return sigmoid(net_.forward(col)(0, 0));
}

Eigen::VectorXd NeuralClassifier::predict_proba_batch(const Eigen::MatrixXd& x) const {
  const nn::Matrix z = net_.forward(x.transpose());
  Eigen::VectorXd out(z.cols());
  for (Eigen::Index i = 0; i < z.cols(); ++i) out[i] = sigmoid(z(0, i));
  return out;
}

nlohmann::json NeuralClassifier::parameters() const { return net_.to_json(); }

double bce_loss(const nn::FeedForward& net, const nn::Matrix& x, std::span<const int> y, double l2,
                nn::Gradients* grad) {
  nn::Tape tape;
  const nn::Matrix z = net.forward(x, tape);
  const auto m = static_cast<double>(z.cols());
  double loss = 0.0;
  nn::Matrix dz(1, z.cols());
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    const double zi = z(0, i);
    const double yi = y[static_cast<std::size_t>(i)];
    loss += std::max(zi, 0.0) - zi * yi + std::log1p(std::exp(-std::abs(zi)));
    dz(0, i) = (sigmoid(zi) - yi) / m;
  }
  loss /= m;
  double sq = 0.0;
  for (const auto& l : net.layers()) sq += l.weight.squaredNorm();
  loss += 0.5 * l2 * sq;
  if (grad) {
    *grad = net.backward(tape, dz);
    nn::add_l2(*grad, net, l2);
  }
  return loss;
}

ClassifierModel::ClassifierModel(std::shared_ptr<const Classifier> impl, ModelMetadata meta)
    : impl_(std::move(impl)), meta_(std::move(meta)) {
  if (!impl_) throw Error(ErrorCode::InvalidArgument, "null classifier");
}

Prediction ClassifierModel::predict(std::span<const double> x) const {
  if (x.size() != impl_->input_dim()) {
    throw Error(ErrorCode::InvalidArgument, "input has " + std::to_string(x.size()) + " features, model expects " +
                                                std::to_string(impl_->input_dim()));
  }
  const double p = impl_->predict_proba(x);
  return {p >= 0.5 ? 1 : 0, p};
}

std::vector<int> ClassifierModel::predict_labels(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.cols()) != impl_->input_dim()) {
    throw Error(ErrorCode::InvalidArgument, "batch width does not match model input");
  }
  const Eigen::VectorXd p = impl_->predict_proba_batch(x);
  std::vector<int> out(static_cast<std::size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(i)] = p[i] >= 0.5 ? 1 : 0;
  return out;
}

double ClassifierModel::accuracy(const TrainingData& data) const {
  if (data.size() == 0) return 0.0;
  const auto labels = predict_labels(data.x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += labels[i] == data.y[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

nlohmann::json ClassifierModel::to_json() const {
  nlohmann::json j{{"format", kModelFormat},
                   {"version", kModelVersion},
                   {"kind", to_string(kind())},
                   {"input_dim", input_dim()},
                   {"seed", meta_.seed},
                   {"hyperparams", meta_.hyperparams.to_json()},
                   {"data_hash", meta_.data_hash},
                   {"notes", meta_.notes},
                   {"provenance", meta_.provenance},
                   {"parameters", impl_->parameters()}};
  j["train_accuracy"] = meta_.train_accuracy ? nlohmann::json(*meta_.train_accuracy) : nlohmann::json(nullptr);
  j["eval_accuracy"] = meta_.eval_accuracy ? nlohmann::json(*meta_.eval_accuracy) : nlohmann::json(nullptr);
  return j;
}

ClassifierModel ClassifierModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kModelFormat) throw Error(ErrorCode::UnsupportedFormat, "not a packgen classifier file");
  if (j.at("version").get<int>() != kModelVersion) {
    throw Error(ErrorCode::UnsupportedFormat, "unsupported classifier file version");
  }
  auto kind = parse_model_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error(ErrorCode::UnsupportedFormat, "unknown classifier kind");
  const auto dim = j.at("input_dim").get<std::size_t>();
  const auto& params = j.at("parameters");
  std::shared_ptr<const Classifier> impl;
  switch (*kind) {
    case ModelKind::LR: impl = LogisticRegression::from_parameters(params); break;
    case ModelKind::DT: impl = DecisionTree::from_parameters(params, dim); break;
    case ModelKind::RF: impl = RandomForest::from_parameters(params, dim); break;
    case ModelKind::MLP:
    case ModelKind::DNN: impl = std::make_shared<NeuralClassifier>(*kind, nn::FeedForward::from_json(params)); break;
  }
  if (impl->input_dim() != dim) throw Error(ErrorCode::UnsupportedFormat, "classifier input width mismatch");
  ModelMetadata meta;
  meta.seed = j.at("seed");
  meta.hyperparams = Hyperparams::from_json(j.at("hyperparams"));
  meta.data_hash = j.at("data_hash");
  meta.notes = j.at("notes").get<std::vector<std::string>>();
  meta.provenance = j.value("provenance", nlohmann::json::object());
  if (!j.at("train_accuracy").is_null()) meta.train_accuracy = j["train_accuracy"].get<double>();
  if (!j.at("eval_accuracy").is_null()) meta.eval_accuracy = j["eval_accuracy"].get<double>();
  return ClassifierModel(std::move(impl), std::move(meta));
}

void ClassifierModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write model: " + path.string());
  out << to_json().dump();
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "model file not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UnsupportedFormat, "cannot parse model " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

ClassifierModel train(const TrainingData& data, const Hyperparams& params, std::uint64_t seed,
                      const TrainingData* eval) {
  require_both_classes(data);
  ModelMetadata meta;
  meta.seed = seed;
  meta.hyperparams = params;
  meta.data_hash = data.hash();

  std::shared_ptr<const Classifier> impl;
  switch (params.kind) {
    case ModelKind::LR: impl = fit_logistic(data, params.linear, seed); break;
    case ModelKind::DT: {
      std::vector<int> all(data.size());
      std::iota(all.begin(), all.end(), 0);
      impl = std::make_shared<DecisionTree>(fit_tree(data, params.tree, seed, std::move(all)));
      if (params.tree.min_samples_split < 2) meta.notes.push_back("min_samples_split below 2 is treated as 2");
      break;
    }
    case ModelKind::RF: {
      nn::Rng rng(seed);
      std::uniform_int_distribution<int> pick(0, static_cast<int>(data.size()) - 1);
      std::vector<DecisionTree> trees;
      trees.reserve(static_cast<std::size_t>(params.forest.n_estimators));
      for (int t = 0; t < params.forest.n_estimators; ++t) {
        std::vector<int> sample(data.size());
        if (params.forest.bootstrap) {
          for (auto& s : sample) s = pick(rng);
        } else {
          std::iota(sample.begin(), sample.end(), 0);
        }
        trees.push_back(fit_tree(data, params.forest.tree, rng(), std::move(sample)));
      }
      impl = std::make_shared<RandomForest>(std::move(trees));
      break;
    }
    case ModelKind::MLP:
    case ModelKind::DNN: impl = fit_network(params.kind, data, params.network, seed); break;
  }
  const ClassifierModel unscored(impl, meta);
  meta.train_accuracy = unscored.accuracy(data);
  if (eval && eval->size() > 0) meta.eval_accuracy = unscored.accuracy(*eval);
  return ClassifierModel(std::move(impl), std::move(meta));
}

Ensemble::Ensemble(std::vector<ClassifierModel> members) : members_(std::move(members)) {
  if (members_.empty()) throw Error(ErrorCode::Config, "ensemble needs at least one member");
  const auto dim = members_.front().input_dim();
  for (const auto& m : members_)
    if (m.input_dim() != dim) throw Error(ErrorCode::Config, "ensemble members disagree on input width");
}

std::vector<int> Ensemble::classify_all(std::span<const double> x) const {
  std::vector<int> out;
  out.reserve(members_.size());
  for (const auto& m : members_) out.push_back(m.predict_label(x));
  return out;
}

Ensemble select_ensemble(const std::vector<Candidate>& candidates, const std::vector<ModelKind>& kinds) {
  std::vector<ClassifierModel> chosen;
  for (auto kind : kinds) {
    const Candidate* best = nullptr;
    for (const auto& c : candidates) {
      if (c.model.kind() == kind && (!best || c.accuracy > best->accuracy)) best = &c;
    }
    if (!best) {
      throw Error(ErrorCode::Config, "no candidate of kind " + std::string(to_string(kind)) + " for the ensemble");
    }
    chosen.push_back(best->model);
  }
  return Ensemble(std::move(chosen));
}

}  // namespace packgen
