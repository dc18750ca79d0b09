#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace packgen::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

enum class Init { KaimingNormal, GlorotUniform };

struct Layer {
  Matrix weight;  // out x in
  Vector bias;
};

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

/// Activations kept by the training forward pass.
struct Tape {
  std::vector<Matrix> activations;  // [0] = (gathered) input, [l] = post-ReLU output of layer l
  std::vector<int> active_inputs;   // input rows that are non-zero somewhere in the batch
  bool gathered = false;
};

/// Fully connected network, ReLU between layers and a linear output. Samples
/// are columns. Inputs are mostly zero padding, so the first layer only
/// multiplies the input rows that are non-zero somewhere in the batch.
class FeedForward {
 public:
  FeedForward() = default;
  /// sizes = {input, hidden..., output}
  FeedForward(const std::vector<int>& sizes, Init init, Rng& rng);

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Tape& tape) const;
  /// d_out = dLoss/dOutput (already scaled by the caller's batch reduction).
  Gradients backward(const Tape& tape, const Matrix& d_out) const;

  int input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
  int output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }
  std::vector<int> sizes() const;
  std::size_t parameter_count() const;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Flat parameter views, used by finite-difference checks.
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(const std::vector<double>& flat);
  static std::vector<double> flatten(const Gradients& g);

  nlohmann::json to_json() const;
  static FeedForward from_json(const nlohmann::json& j);

  bool operator==(const FeedForward& other) const;

 private:
  Matrix first_layer(const Matrix& x, Tape* tape) const;

  std::vector<Layer> layers_;
};

void add_l2(Gradients& g, const FeedForward& net, double coeff);

/// Adaptive-moment optimiser with bias correction.
class Adam {
 public:
  Adam() = default;
  Adam(const FeedForward& net, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(FeedForward& net, const Gradients& g);
  std::uint64_t steps() const { return t_; }
  double learning_rate() const { return lr_; }

  nlohmann::json to_json() const;
  static Adam from_json(const nlohmann::json& j);

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::uint64_t t_ = 0;
  Gradients m_, v_;
};

}  // namespace packgen::nn
