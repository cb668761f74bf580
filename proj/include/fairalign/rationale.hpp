// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "fairalign/network.hpp"
#include "fairalign/tape.hpp"
#include "fairalign/types.hpp"

namespace fairalign::rationale {

using autodiff::NodeHandle;
using autodiff::Tape;
using network::MlpParams;

/// Loss of a model as a function of its weight vector.
using LossFunction = std::function<double(std::span<const double>)>;

// --- Exact leave-one-out loss changes --------------------------------------------

/// |J(w) - J(w with w_k = 0)|^2. Throws std::out_of_range for a bad index.
double exact_loss_change(const LossFunction& loss, std::span<const double> weights,
                         std::size_t k);
/// Same, with J the mean classification loss of `batch` under `params`.
double exact_loss_change(const MlpParams& params, std::size_t k,
                         const LabeledBatch& batch);
/// Every weight at once; reuses the cached forward pass and only recomputes
/// the layers downstream of each ablated weight.
std::vector<double> exact_loss_changes(const MlpParams& params,
                                       const LabeledBatch& batch);

/// |c_k(P0) - c_k(P1)|^2.
double exact_parity(const LossFunction& loss0, const LossFunction& loss1,
                    std::span<const double> weights, std::size_t k);
double exact_parity(const MlpParams& params, std::size_t k,
                    const LabeledBatch& group0, const LabeledBatch& group1);

// --- Taylor importance ------------------------------------------------------------

/// Per-layer scores, one entry per multiplicative weight.
struct Importance {
  std::vector<std::vector<double>> layers;

  std::vector<double> flat() const;
};

/// Tape nodes for per-layer scores, so they can be differentiated again.
struct ImportanceNodes {
  std::vector<std::vector<NodeHandle>> layers;
};

/// (g_k * w_k)^2 with g the tape gradient of `loss` w.r.t. each weight leaf.
ImportanceNodes taylor_importance(Tape& tape, const MlpParams& params,
                                  std::span<const NodeHandle> weight_nodes,
                                  NodeHandle loss);
/// Value form with g from the batched backward pass of the mean
/// classification loss.
Importance taylor_importance(const MlpParams& params, const LabeledBatch& batch);
/// Value form from an explicit weight gradient.
Importance taylor_importance(const MlpParams& params,
                             std::span<const double> weight_gradient);

Importance layer_normalize(const Importance& raw);

// --- Alignment ------------------------------------------------------------------

/// Per-layer cosine similarities; a layer where either vector is all-zero
/// counts as perfectly aligned (1) and is tallied in `degenerate`.
struct Similarity {
  std::vector<double> per_layer;
  double sum = 0.0;
  std::size_t degenerate = 0;
};

Similarity similarity(const Importance& imp0, const Importance& imp1,
                      std::size_t first_layer = 0);

/// -sum_l cos over layers >= first_layer with its gradient with respect to
/// each importance vector; degenerate layers contribute zero gradient.
struct AlignmentGradient {
  Similarity similarity;
  Importance wrt0;
  Importance wrt1;
};

AlignmentGradient alignment_gradient(const Importance& imp0, const Importance& imp1,
                                     std::size_t first_layer = 0);

struct AlignmentNodes {
  /// -sum_l cos(imp0_l, imp1_l) over layers >= first_layer.
  NodeHandle loss;
  std::vector<NodeHandle> per_layer;
  std::size_t degenerate = 0;
};

/// Throws std::invalid_argument on mismatched layer shapes or first_layer
/// past the last layer.
AlignmentNodes alignment_loss(Tape& tape, const ImportanceNodes& imp0,
                              const ImportanceNodes& imp1,
                              std::size_t first_layer = 0);

// --- Network-level reports --------------------------------------------------------

struct ParityReport {
  std::vector<network::LayerRange> layers;
  std::vector<double> c0;
  std::vector<double> c1;
  std::vector<double> d;
  /// Sum of d_k.
  double d_f = 0.0;
  /// Sum of |c0_k - c1_k|.
  double d_f_l1 = 0.0;
  /// Cosine similarity of the Taylor importances of the two groups.
  Similarity taylor;
  std::size_t rows0 = 0;
  std::size_t rows1 = 0;
};

/// Parity scores for an arbitrary model given its two subgroup losses; the
/// report holds a single layer and no Taylor similarity.
ParityReport parity_scores(const LossFunction& loss0, const LossFunction& loss1,
                           std::span<const double> weights);

ParityReport network_parity(const MlpParams& params, const LabeledBatch& group0,
                            const LabeledBatch& group1);

/// Layer,param_index,c0,c1,d_k rows followed by a key,value summary block.
void write_parity_csv(const ParityReport& report, const std::filesystem::path& path);

// --- Prediction gap and top-k characterization --------------------------------------

/// Model score for one sample given a weight vector.
using ScoreFunction =
    std::function<double(std::span<const double>, std::span<const double>)>;

/// |E_P0 F(x; w_k = 0) - E_P1 F(x; w_k = 0)|^2.
double prediction_gap(const ScoreFunction& score, std::span<const double> weights,
                      std::size_t k, const RowMatrix& group0,
                      const RowMatrix& group1);
double prediction_gap(const MlpParams& params, std::size_t k,
                      const RowMatrix& group0, const RowMatrix& group1);

/// Indices of the k largest values; ties go to the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k);

/// Per-layer Jaccard overlap of the top-k sets. Throws std::invalid_argument
/// when k is zero or exceeds a layer's width.
std::vector<double> top_k_overlap(const Importance& imp0, const Importance& imp1,
                                  std::size_t k);

}  // namespace fairalign::rationale
