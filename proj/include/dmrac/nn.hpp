#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dmrac/core_math.hpp"

namespace dmrac::nn {

enum class Activation { Tanh, Relu, Identity };
enum class InitScheme { GlorotUniform };

/// Layer widths [n_in, h1, ..., k, m]. The penultimate width k is the feature
/// dimension consumed by the fast adaptive layer; the last layer is linear.
struct MlpSpec {
  std::vector<int> widths;
  std::vector<Activation> activations;  // one per hidden layer
  std::vector<double> dropout;          // one per hidden layer, in [0, 1)
  InitScheme init = InitScheme::GlorotUniform;
  std::uint64_t seed = 0;

  /// Default architecture [n, 64, 64, k, m], tanh hidden layers, dropout 0.1.
  static MlpSpec make_default(int n_in, int n_out, int feature_dim = 20,
                              std::uint64_t seed = 0);

  void validate() const;
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int feature_dim() const { return widths[widths.size() - 2]; }
  int layer_count() const { return static_cast<int>(widths.size()) - 1; }
  int hidden_count() const { return layer_count() - 1; }
};

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out

  bool operator==(const DenseLayer&) const = default;
};

/// Network parameters. Treated as an immutable value once built; training
/// produces new values.
struct MlpParams {
  std::vector<DenseLayer> layers;
  std::uint32_t version = 0;

  bool operator==(const MlpParams&) const = default;

  /// Copy of the first `layers.size() - 1` layers (the feature network).
  MlpParams inner() const;
  /// Check that layer shapes match the spec (or its inner part).
  bool matches(const MlpSpec& spec, bool inner_only = false) const;
  bool all_finite() const;
};

MlpParams init(const MlpSpec& spec);

enum class Mode { Eval, Train };

struct ForwardCache {
  std::vector<Vector> activations;  // [x, a_1, ..., a_{L-1}, y]
  std::vector<Vector> pre;          // z_1 ... z_L
  std::vector<Vector> masks;        // scaled dropout masks for hidden layers
};

struct ForwardResult {
  Vector y;
  ForwardCache cache;
};

/// Train mode draws inverted-dropout masks from `rng`; eval mode applies none.
ForwardResult forward(const MlpSpec& spec, const MlpParams& params, const Vector& x,
                      Mode mode, std::mt19937_64* rng = nullptr);

/// Eval-mode activation of the penultimate layer.
Vector features(const MlpSpec& spec, const MlpParams& params, const Vector& x);

/// Features from a feature-only network (the inner layers without the output layer).
Vector inner_features(const MlpSpec& spec, const MlpParams& inner, const Vector& x);

struct Batch {
  Matrix inputs;   // n_in x M
  Matrix targets;  // m x M
  Eigen::Index size() const { return inputs.cols(); }
};

struct Gradients {
  std::vector<DenseLayer> layers;
  double loss = 0.0;
};

/// Mean squared-l2 loss (1/M) sum ||y_i - f(x_i)||^2 and its exact gradient.
/// Dropout masks are drawn from `rng` when non-null and any rate is positive.
Gradients backprop(const MlpSpec& spec, const MlpParams& params, const Batch& batch,
                   std::mt19937_64* rng = nullptr);

/// Eval-mode loss on a batch.
double loss(const MlpSpec& spec, const MlpParams& params, const Batch& batch);

/// theta - eta * g. The version counter is left unchanged.
MlpParams sgd_step(const MlpParams& params, const Gradients& grads, double eta);

// MLPS snapshot: "MLPS" | u16 format | u16 layer count | per layer (u32 rows,
// u32 cols, rows*cols f64 weights row-major, rows f64 biases) | u32 CRC-32.
inline constexpr std::uint16_t kSnapshotFormat = 1;

std::vector<std::uint8_t> encode_snapshot(const MlpParams& params);
/// Throws BadFormat on malformed input and BadCrc on checksum mismatch.
MlpParams decode_snapshot(std::span<const std::uint8_t> bytes);

}  // namespace dmrac::nn
