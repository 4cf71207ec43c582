#include <cmath>
#include <string>

#include "dmrac/nn.hpp"

namespace dmrac::nn {
namespace {

Matrix activate(Activation kind, const Matrix& z) {
  switch (kind) {
    case Activation::Tanh: return z.array().tanh().matrix();
    case Activation::Relu: return z.cwiseMax(0.0);
    case Activation::Identity: return z;
  }
  return z;
}

// Derivative expressed through the pre-activation and activation values.
Matrix activate_grad(Activation kind, const Matrix& z, const Matrix& a) {
  switch (kind) {
    case Activation::Tanh: return (1.0 - a.array().square()).matrix();
    case Activation::Relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::Identity: return Matrix::Ones(z.rows(), z.cols());
  }
  return Matrix::Ones(z.rows(), z.cols());
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng) {
  const double keep = 1.0 - rate;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix mask(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = unit(rng) < keep ? 1.0 / keep : 0.0;
  return mask;
}

struct BatchPass {
  std::vector<Matrix> activations;  // a_0 = X ... a_L = Y
  std::vector<Matrix> pre;
  std::vector<Matrix> masks;        // empty matrix when no dropout on that layer
};

BatchPass run_batch(const MlpSpec& spec, const MlpParams& params, const Matrix& inputs,
                    std::mt19937_64* rng, std::size_t layer_limit) {
  BatchPass pass;
  pass.activations.push_back(inputs);
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t l = 0; l < layer_limit; ++l) {
    const DenseLayer& layer = params.layers[l];
    Matrix z = layer.weights * pass.activations.back();
    z.colwise() += layer.bias;
    if (l == last) {
      pass.pre.push_back(z);
      pass.activations.push_back(z);
      pass.masks.emplace_back();
      continue;
    }
    Matrix a = activate(spec.activations[l], z);
    Matrix mask;
    if (rng != nullptr && spec.dropout[l] > 0.0) {
      mask = dropout_mask(a.rows(), a.cols(), spec.dropout[l], *rng);
      a = a.cwiseProduct(mask);
    }
    pass.pre.push_back(std::move(z));
    pass.activations.push_back(std::move(a));
    pass.masks.push_back(std::move(mask));
  }
  return pass;
}

}  // namespace

MlpSpec MlpSpec::make_default(int n_in, int n_out, int feature_dim, std::uint64_t seed) {
  MlpSpec spec;
  spec.widths = {n_in, 64, 64, feature_dim, n_out};
  spec.activations.assign(3, Activation::Tanh);
  spec.dropout.assign(3, 0.1);
  spec.seed = seed;
  return spec;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw Error(Errc::InvalidArgument, "MlpSpec: need at least input and output widths");
  for (int w : widths)
    if (w < 1) throw Error(Errc::InvalidArgument, "MlpSpec: layer widths must be positive");
  const std::size_t hidden = widths.size() - 2;
  if (activations.size() != hidden || dropout.size() != hidden) {
    throw Error(Errc::InvalidArgument, "MlpSpec: one activation and dropout rate per hidden layer");
  }
  for (double p : dropout)
    if (!(p >= 0.0 && p < 1.0)) throw Error(Errc::InvalidArgument, "MlpSpec: dropout must lie in [0, 1)");
}

MlpParams MlpParams::inner() const {
  MlpParams out;
  out.layers.assign(layers.begin(), layers.end() - 1);
  out.version = version;
  return out;
}

bool MlpParams::matches(const MlpSpec& spec, bool inner_only) const {
  const std::size_t expected = static_cast<std::size_t>(spec.layer_count()) - (inner_only ? 1 : 0);
  if (layers.size() != expected) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weights.rows() != spec.widths[l + 1] || layers[l].weights.cols() != spec.widths[l] ||
        layers[l].bias.size() != spec.widths[l + 1]) {
      return false;
    }
  }
  return true;
}

bool MlpParams::all_finite() const {
  for (const auto& layer : layers)
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
  return true;
}

MlpParams init(const MlpSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  MlpParams params;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const int fan_in = spec.widths[l];
    const int fan_out = spec.widths[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.weights(r, c) = dist(rng);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

ForwardResult forward(const MlpSpec& spec, const MlpParams& params, const Vector& x, Mode mode,
                      std::mt19937_64* rng) {
  if (!x.allFinite()) throw Error(Errc::InvalidArgument, "forward: non-finite input");
  if (mode == Mode::Train && rng == nullptr) throw Error(Errc::InvalidArgument, "forward: train mode needs an rng");
  BatchPass pass = run_batch(spec, params, x, mode == Mode::Train ? rng : nullptr, params.layers.size());
  ForwardResult out;
  out.y = pass.activations.back().col(0);
  if (!out.y.allFinite()) throw Error(Errc::NonFiniteOutput, "forward: non-finite output");
  for (auto& a : pass.activations) out.cache.activations.emplace_back(a.col(0));
  for (auto& z : pass.pre) out.cache.pre.emplace_back(z.col(0));
  for (std::size_t l = 0; l + 1 < pass.masks.size(); ++l) {
    out.cache.masks.push_back(pass.masks[l].size() > 0 ? Vector(pass.masks[l].col(0))
                                                       : Vector::Ones(pass.activations[l + 1].rows()));
  }
  return out;
}

Vector inner_features(const MlpSpec& spec, const MlpParams& inner, const Vector& x) {
  Vector a = x;
  for (std::size_t l = 0; l < inner.layers.size(); ++l) {
    const DenseLayer& layer = inner.layers[l];
    a = activate(spec.activations[l], layer.weights * a + layer.bias);
  }
  return a;
}

Vector features(const MlpSpec& spec, const MlpParams& params, const Vector& x) {
  Vector a = x;
  for (std::size_t l = 0; l + 1 < params.layers.size(); ++l) {
    const DenseLayer& layer = params.layers[l];
    a = activate(spec.activations[l], layer.weights * a + layer.bias);
  }
  return a;
}

Gradients backprop(const MlpSpec& spec, const MlpParams& params, const Batch& batch, std::mt19937_64* rng) {
  const Eigen::Index m = batch.size();
  if (m < 1) throw Error(Errc::InvalidArgument, "backprop: empty batch");
  const BatchPass pass = run_batch(spec, params, batch.inputs, rng, params.layers.size());
  const Matrix residual = pass.activations.back() - batch.targets;

  Gradients grads;
  grads.loss = residual.squaredNorm() / static_cast<double>(m);
  grads.layers.resize(params.layers.size());

  Matrix delta = (2.0 / static_cast<double>(m)) * residual;  // dL/dz for the linear output layer
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    grads.layers[l].weights = delta * pass.activations[l].transpose();
    grads.layers[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Matrix upstream = params.layers[l].weights.transpose() * delta;
    // Hidden layer l-1 produced activations[l] = act(pre[l-1]) * mask.
    const std::size_t h = l - 1;
    Matrix local;
    if (pass.masks[h].size() > 0) {
      const Matrix unmasked = activate(spec.activations[h], pass.pre[h]);
      local = activate_grad(spec.activations[h], pass.pre[h], unmasked).cwiseProduct(pass.masks[h]);
    } else {
      local = activate_grad(spec.activations[h], pass.pre[h], pass.activations[l]);
    }
    delta = upstream.cwiseProduct(local);
  }

  for (const auto& g : grads.layers) {
    if (!g.weights.allFinite() || !g.bias.allFinite()) {
      throw Error(Errc::NonFiniteGradient, "backprop: non-finite gradient");
    }
  }
  if (!std::isfinite(grads.loss)) throw Error(Errc::NonFiniteGradient, "backprop: non-finite loss");
  return grads;
}

double loss(const MlpSpec& spec, const MlpParams& params, const Batch& batch) {
  if (batch.size() < 1) return 0.0;
  const BatchPass pass = run_batch(spec, params, batch.inputs, nullptr, params.layers.size());
  return (pass.activations.back() - batch.targets).squaredNorm() / static_cast<double>(batch.size());
}

MlpParams sgd_step(const MlpParams& params, const Gradients& grads, double eta) {
  if (!(eta >= 0.0)) throw Error(Errc::InvalidArgument, "sgd_step: learning rate must be non-negative");
  if (grads.layers.size() != params.layers.size()) {
    throw Error(Errc::ShapeMismatch, "sgd_step: gradient layer count mismatch");
  }
  MlpParams next = params;
  for (std::size_t l = 0; l < next.layers.size(); ++l) {
    next.layers[l].weights -= eta * grads.layers[l].weights;
    next.layers[l].bias -= eta * grads.layers[l].bias;
  }
  return next;
}

}  // namespace dmrac::nn
