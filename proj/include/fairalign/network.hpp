// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairalign/tape.hpp"
#include "fairalign/types.hpp"

namespace fairalign::network {

using autodiff::NodeHandle;
using autodiff::Tape;

enum class Activation { kRelu };

/// Fully connected binary classifier: input -> hidden... -> 1 (sigmoid).
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  Activation activation = Activation::kRelu;

  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  std::size_t fan_in(std::size_t layer) const;
  std::size_t fan_out(std::size_t layer) const;
  void validate() const;
  /// "13-200-200-1" style shape string.
  std::string shape() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Half-open range [begin, end) of flat weight indices owned by one layer.
struct LayerRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool contains(std::size_t k) const { return k >= begin && k < end; }
  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

/// Network parameters.
///
/// Multiplicative weights form one flat vector indexed by k. Layer l owns the
/// contiguous range `layers[l]`, stored row-major as (fan_out, fan_in), so
/// weight (l, out j, in i) sits at layers[l].begin + j * fan_in + i. Biases
/// live apart and are never part of parity, importance, or alignment.
struct MlpParams {
  MlpSpec spec;
  std::vector<double> weights;
  std::vector<std::vector<double>> biases;
  std::vector<LayerRange> layers;
  std::uint64_t seed = 0;

  static MlpParams zeros(const MlpSpec& spec);

  std::size_t num_weights() const { return weights.size(); }
  std::size_t num_biases() const;
  std::size_t num_parameters() const { return num_weights() + num_biases(); }
  std::size_t layer_of(std::size_t k) const;

  /// Weights followed by biases, layer by layer.
  std::vector<double> flat() const;
  void assign_flat(std::span<const double> values);
};

/// Glorot-uniform weights, zero biases; deterministic per seed.
MlpParams init(const MlpSpec& spec, std::uint64_t seed);

/// Copy of `params` with weight k set to zero. Throws std::out_of_range.
MlpParams zero_weight(const MlpParams& params, std::size_t k);

// --- Tape evaluation -------------------------------------------------------

inline constexpr double kProbabilityClamp = 1e-7;

/// Tape leaves for every parameter of one network.
struct ParamNodes {
  std::vector<NodeHandle> weights;
  std::vector<std::vector<NodeHandle>> biases;

  /// Same order as MlpParams::flat().
  std::vector<NodeHandle> flat() const;
};

ParamNodes bind(const MlpParams& params, Tape& tape);

/// Probability of class 1 for one sample; throws std::invalid_argument on a
/// dimension mismatch.
NodeHandle forward(const MlpParams& params, const ParamNodes& nodes,
                   std::span<const double> x, Tape& tape);
/// Binds fresh parameter leaves and evaluates one sample.
NodeHandle forward(const MlpParams& params, std::span<const double> x,
                   Tape& tape);

struct BatchNodes {
  std::vector<NodeHandle> outputs;
  /// Mean clamped binary cross-entropy.
  NodeHandle loss;
  NodeHandle mean_output;
};

BatchNodes batch_classification_loss(const MlpParams& params,
                                     const ParamNodes& nodes,
                                     const RowMatrix& features,
                                     std::span<const int> labels, Tape& tape);

// --- Batched numeric evaluation ----------------------------------------------

/// Per-layer activations of a batch, kept for the backward sweep.
struct ForwardCache {
  RowMatrix input;
  std::vector<RowMatrix> pre;   // z_l
  std::vector<RowMatrix> post;  // relu(z_l) for hidden layers
  Eigen::VectorXd output;       // sigmoid(z_last)
};

using ConstWeightMap = Eigen::Map<const RowMatrix, Eigen::Unaligned>;

/// Weights of layer l viewed as a (fan_out, fan_in) matrix.
ConstWeightMap layer_matrix(const MlpParams& params, std::size_t l);
/// Overflow-free logistic function.
double sigmoid(double z);

ForwardCache forward_batch(const MlpParams& params, const RowMatrix& features);
Eigen::VectorXd predict(const MlpParams& params, const RowMatrix& features);

/// Gradient of sum_s adjoint[s] * output[s], flattened like MlpParams::flat().
std::vector<double> backward_batch(const MlpParams& params,
                                   const ForwardCache& cache,
                                   const Eigen::VectorXd& output_adjoint);

/// Hessian of the batch's mean cross-entropy applied to `direction`, both
/// flattened like MlpParams::flat(). Forward-over-reverse pass on the cache;
/// agrees with double backward on the tape, clamp and relu kinks included.
std::vector<double> cross_entropy_hvp(const MlpParams& params, const ForwardCache& cache,
                                      std::span<const int> labels,
                                      std::span<const double> direction);

/// eps + relu(p - eps) - relu(p - (1 - eps)); same arithmetic as the tape.
double clamp_probability(double p);
double cross_entropy(double p, int label);
/// d cross_entropy / dp, zero where the clamp is active.
double cross_entropy_derivative(double p, int label);
double mean_cross_entropy(const Eigen::VectorXd& probabilities,
                          std::span<const int> labels);
double mean_classification_loss(const MlpParams& params,
                                const RowMatrix& features,
                                std::span<const int> labels);

// --- Serialization -------------------------------------------------------------

/// {"spec": {...}, "weights": [...], "biases": [[...]], "seed": n}; doubles
/// round-trip exactly.
std::string to_json(const MlpParams& params);
MlpParams from_json(std::string_view text);
void save_model(const MlpParams& params, const std::filesystem::path& path);
MlpParams load_model(const std::filesystem::path& path);

}  // namespace fairalign::network
