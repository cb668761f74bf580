// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fairalign/data.hpp"
#include "fairalign/metrics.hpp"
#include "fairalign/network.hpp"

namespace fairalign::training {

using metrics::FairMetric;
using network::MlpParams;

enum class Method { kErm, kOversample, kFairReg, kDrAlign };
enum class OptimizerKind { kSgd, kAdam };
/// How minibatches are drawn: one shuffled pass over all rows, or a fixed
/// number of rows per subgroup cell with replacement.
enum class Sampling { kPooled, kPaired };
enum class Selection { kLastEpoch, kBestValidationAp };

std::string to_string(Method method);
Method parse_method(std::string_view name);
std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);
std::string to_string(Selection selection);
Selection parse_selection(std::string_view name);

struct TrainConfig {
  Method method = Method::kErm;
  FairMetric metric = FairMetric::kDp;
  double lambda = 0.0;
  double beta = 0.0;
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 1000;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden_dims = {200, 200};
  /// Align only the last n layers; all layers when unset.
  std::optional<std::size_t> align_last_layers;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Only read by erm; fairreg and dralign always pair.
  Sampling erm_sampling = Sampling::kPooled;
  Selection selection = Selection::kLastEpoch;
  /// Evaluate the objective on the expression tape instead of the batched
  /// matrix path. Both give the same loss and gradient; the tape is slower
  /// and far more memory hungry.
  bool force_tape = false;

  /// Throws std::invalid_argument on non-positive rates or sizes, negative
  /// weights, or a layer suffix longer than the network.
  void validate() const;
  bool uses_pairs() const;
  bool uses_tape() const;
};

/// Subgroup cells drawn per step and the pairs whose importances are aligned.
/// DP uses cells (a=0, a=1); the label-conditioned metrics use the four (a, y)
/// cells in 2a + y order.
struct CellLayout {
  std::vector<SubgroupKey> cells;
  std::vector<std::pair<std::size_t, std::size_t>> align_pairs;
};

CellLayout layout_for(FairMetric metric);

/// First layer included in alignment.
std::size_t first_aligned_layer(const TrainConfig& config, std::size_t num_layers);

// --- Sampling ---------------------------------------------------------------------

/// `count` rows drawn uniformly with replacement from the view.
LabeledBatch sample_view(const data::SubgroupView& view, std::size_t count,
                         std::mt19937_64& rng);
LabeledBatch sample_subgroup(const data::DatasetTable& table, int a,
                             std::size_t count, std::mt19937_64& rng);
LabeledBatch sample_subgroup_labeled(const data::DatasetTable& table, int a, int y,
                                     std::size_t count, std::mt19937_64& rng);
/// Each row picks attribute 0 or 1 with probability 1/2, then a row of that
/// subgroup uniformly. Returns the batch and its attribute values.
std::pair<LabeledBatch, std::vector<int>> sample_balanced(
    const data::SubgroupView& group0, const data::SubgroupView& group1,
    std::size_t count, std::mt19937_64& rng);

std::size_t steps_per_epoch(std::size_t data_size, std::size_t batch_size);

// --- Objective and steps ------------------------------------------------------------

struct StepRecord {
  double total = 0.0;
  double classification = 0.0;
  double fairness = 0.0;
  /// -sum of cosines; zero when the alignment term is off.
  double alignment = 0.0;
  std::size_t degenerate_layers = 0;
};

struct Objective {
  StepRecord record;
  /// Flattened like MlpParams::flat().
  std::vector<double> gradient;
};

/// Loss and gradient for one step. With `pooled` a single batch gives the
/// mean cross-entropy. Otherwise `cells` follows layout_for(config.metric)
/// and the loss is sum of cell means + lambda * penalty + beta * alignment.
/// `counts` are the training cell counts (read by PP only).
Objective evaluate_objective(const MlpParams& params, std::span<const LabeledBatch> cells,
                             const TrainConfig& config, std::span<const double> counts,
                             bool pooled = false);

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, std::size_t num_parameters);
  void step(MlpParams& params, std::span<const double> gradient);
  std::size_t steps() const { return steps_; }

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, epsilon_;
  std::vector<double> m_, v_;
  std::size_t steps_ = 0;
};

/// One update on paired cell batches. Throws std::runtime_error on a
/// non-finite loss.
StepRecord train_step(MlpParams& params, Optimizer& optimizer,
                      std::span<const LabeledBatch> cells, const TrainConfig& config,
                      std::span<const double> counts);
StepRecord train_step_dp(MlpParams& params, Optimizer& optimizer,
                         const LabeledBatch& group0, const LabeledBatch& group1,
                         const TrainConfig& config);
/// Cells in (a, y) -> 2a + y order.
StepRecord train_step_eo(MlpParams& params, Optimizer& optimizer,
                         const std::array<LabeledBatch, 4>& cells,
                         const TrainConfig& config);

// --- Full runs ------------------------------------------------------------------

struct EvalMetrics {
  double ap = 0.0;
  double hard_dp = 0.0;
  double soft_dp = 0.0;
  double hard_eo = 0.0;
  double soft_eo = 0.0;
  /// NaN when undefined on the evaluated rows.
  double eop_ratio = 0.0;
  double pp_diff = 0.0;
  /// Taylor similarity between the aligned subgroup pairs of the metric.
  double similarity_sum = 0.0;
  std::vector<double> similarity;
};

EvalMetrics evaluate(const MlpParams& params, const data::DatasetTable& table,
                     FairMetric metric);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double classification = 0.0;
  double fairness = 0.0;
  double alignment = 0.0;
  /// Degenerate (all-zero importance) layers summed over the epoch's steps.
  std::size_t degenerate_layers = 0;
  EvalMetrics validation;
};

struct RunHistory {
  std::vector<EpochRecord> epochs;
  std::size_t selected_epoch = 0;

  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  MlpParams params;
  RunHistory history;
};

/// Throws std::invalid_argument when a required subgroup cell is empty.
TrainResult train(const data::DatasetTable& train_set,
                  const data::DatasetTable& validation, const TrainConfig& config);
TrainResult train(const data::DatasetTable& train_set, const TrainConfig& config);

}  // namespace fairalign::training
