#include "packgen/nn.hpp"

#include <cmath>

#include "packgen/error.hpp"

namespace packgen::nn {

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  std::vector<double> data(m.data(), m.data() + m.size());  // column-major
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error(ErrorCode::UnsupportedFormat, "matrix payload size mismatch");
  }
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

Gradients zeros_like(const FeedForward& net) {
  Gradients g;
  for (const auto& l : net.layers()) {
    g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

}  // namespace

FeedForward::FeedForward(const std::vector<int>& sizes, Init init, Rng& rng) {
  if (sizes.size() < 2) throw Error(ErrorCode::InvalidArgument, "network needs at least input and output sizes");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l], fan_out = sizes[l + 1];
    if (fan_in <= 0 || fan_out <= 0) throw Error(ErrorCode::InvalidArgument, "layer sizes must be positive");
    Layer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    if (init == Init::KaimingNormal) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
    } else {
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = dist(rng);
    }
    layers_.push_back(std::move(layer));
  }
}

std::vector<int> FeedForward::sizes() const {
  std::vector<int> out;
  if (layers_.empty()) return out;
  out.push_back(input_dim());
  for (const auto& l : layers_) out.push_back(static_cast<int>(l.weight.rows()));
  return out;
}

std::size_t FeedForward::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Matrix FeedForward::first_layer(const Matrix& x, Tape* tape) const {
  const auto& l0 = layers_.front();
  if (x.rows() != l0.weight.cols()) {
    throw Error(ErrorCode::InvalidArgument, "input has " + std::to_string(x.rows()) + " rows, network expects " +
                                                std::to_string(l0.weight.cols()));
  }
  std::vector<char> used(static_cast<std::size_t>(x.rows()), 0);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double* col = x.col(c).data();
    for (Eigen::Index r = 0; r < x.rows(); ++r) used[static_cast<std::size_t>(r)] |= col[r] != 0.0;
  }
  std::vector<int> active;
  for (std::size_t r = 0; r < used.size(); ++r)
    if (used[r]) active.push_back(static_cast<int>(r));

  Matrix z;
  const bool gather = active.size() * 4 < static_cast<std::size_t>(x.rows()) * 3;
  if (gather) {
    Matrix xa = x(active, Eigen::all);
    z.noalias() = l0.weight(Eigen::all, active) * xa;
    if (tape) {
      tape->activations.push_back(std::move(xa));
      tape->active_inputs = std::move(active);
      tape->gathered = true;
    }
  } else {
    z.noalias() = l0.weight * x;
    if (tape) {
      tape->activations.push_back(x);
      tape->gathered = false;
    }
  }
  z.colwise() += l0.bias;
  return z;
}

Matrix FeedForward::forward(const Matrix& x) const {
  Matrix a = first_layer(x, nullptr);
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    a = a.cwiseMax(0.0);
    Matrix z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    a = std::move(z);
  }
  return a;
}

Matrix FeedForward::forward(const Matrix& x, Tape& tape) const {
  tape = Tape{};
  Matrix a = first_layer(x, &tape);
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    a = a.cwiseMax(0.0);
    tape.activations.push_back(a);
    Matrix z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    a = std::move(z);
  }
  return a;
}

Gradients FeedForward::backward(const Tape& tape, const Matrix& d_out) const {
  Gradients g;
  g.weight.resize(layers_.size());
  g.bias.resize(layers_.size());
  Matrix dz = d_out;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Matrix& a_in = tape.activations[l];
    g.bias[l] = dz.rowwise().sum();
    if (l == 0 && tape.gathered) {
      g.weight[0] = Matrix::Zero(layers_[0].weight.rows(), layers_[0].weight.cols());
      g.weight[0](Eigen::all, tape.active_inputs) = dz * a_in.transpose();
    } else {
      g.weight[l].noalias() = dz * a_in.transpose();
    }
    if (l > 0) {
      Matrix da = layers_[l].weight.transpose() * dz;
      dz = (a_in.array() > 0.0).select(da, 0.0);
    }
  }
  return g;
}

std::vector<double> FeedForward::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

void FeedForward::set_flat_parameters(const std::vector<double>& flat) {
  if (flat.size() != parameter_count()) throw Error(ErrorCode::InvalidArgument, "parameter count mismatch");
  std::size_t k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = flat[k++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = flat[k++];
  }
}

std::vector<double> FeedForward::flatten(const Gradients& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    out.insert(out.end(), g.weight[l].data(), g.weight[l].data() + g.weight[l].size());
    out.insert(out.end(), g.bias[l].data(), g.bias[l].data() + g.bias[l].size());
  }
  return out;
}

nlohmann::json FeedForward::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) {
    layers.push_back({{"weight", matrix_json(l.weight)}, {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"sizes", sizes()}, {"layers", std::move(layers)}};
}

FeedForward FeedForward::from_json(const nlohmann::json& j) {
  FeedForward net;
  for (const auto& lj : j.at("layers")) {
    Layer l;
    l.weight = matrix_from_json(lj.at("weight"));
    const auto bias = lj.at("bias").get<std::vector<double>>();
    l.bias = Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    if (l.bias.size() != l.weight.rows()) throw Error(ErrorCode::UnsupportedFormat, "bias size mismatch");
    if (!net.layers_.empty() && net.layers_.back().weight.rows() != l.weight.cols()) {
      throw Error(ErrorCode::UnsupportedFormat, "layer shapes do not chain");
    }
    net.layers_.push_back(std::move(l));
  }
  if (net.sizes() != j.at("sizes").get<std::vector<int>>()) {
    throw Error(ErrorCode::UnsupportedFormat, "declared sizes disagree with layers");
  }
  return net;
}

bool FeedForward::operator==(const FeedForward& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weight.rows() != other.layers_[l].weight.rows() ||
        layers_[l].weight.cols() != other.layers_[l].weight.cols() || layers_[l].weight != other.layers_[l].weight ||
        layers_[l].bias != other.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

void add_l2(Gradients& g, const FeedForward& net, double coeff) {
  if (coeff == 0.0) return;
  for (std::size_t l = 0; l < g.weight.size(); ++l) g.weight[l] += coeff * net.layers()[l].weight;
}

Adam::Adam(const FeedForward& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(zeros_like(net)), v_(zeros_like(net)) {}

void Adam::step(FeedForward& net, const Gradients& g) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const double step = lr_ * std::sqrt(c2) / c1;
  const double eps_hat = eps_ * std::sqrt(c2);
  const double b1 = beta1_, b2 = beta2_;
  auto update = [&](auto& w, auto& m, auto& v, const auto& grad) {
    m.array() = b1 * m.array() + (1.0 - b1) * grad.array();
    v.array() = b2 * v.array() + (1.0 - b2) * grad.array().square();
    w.array() -= step * m.array() / (v.array().sqrt() + eps_hat);
  };
  auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, m_.weight[l], v_.weight[l], g.weight[l]);
    update(layers[l].bias, m_.bias[l], v_.bias[l], g.bias[l]);
  }
}

nlohmann::json Adam::to_json() const {
  auto grads = [](const Gradients& g) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t l = 0; l < g.weight.size(); ++l) {
      arr.push_back({{"weight", matrix_json(g.weight[l])},
                     {"bias", std::vector<double>(g.bias[l].data(), g.bias[l].data() + g.bias[l].size())}});
    }
    return arr;
  };
  return {{"lr", lr_}, {"beta1", beta1_}, {"beta2", beta2_}, {"eps", eps_}, {"t", t_}, {"m", grads(m_)}, {"v", grads(v_)}};
}

Adam Adam::from_json(const nlohmann::json& j) {
  Adam a;
  a.lr_ = j.at("lr");
  a.beta1_ = j.at("beta1");
  a.beta2_ = j.at("beta2");
  a.eps_ = j.at("eps");
  a.t_ = j.at("t");
  auto grads = [](const nlohmann::json& arr) {
    Gradients g;
    for (const auto& e : arr) {
      g.weight.push_back(matrix_from_json(e.at("weight")));
      const auto b = e.at("bias").get<std::vector<double>>();
      g.bias.push_back(Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size())));
    }
    return g;
  };
  a.m_ = grads(j.at("m"));
  a.v_ = grads(j.at("v"));
  return a;
}

}  // namespace packgen::nn
