// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairalign/tape.hpp"

namespace fairalign::metrics {

using autodiff::NodeHandle;
using autodiff::Tape;

enum class FairMetric { kDp, kEo, kEop, kPp };

std::string to_string(FairMetric metric);
/// Accepts "dp", "eo", "eop", "pp". Throws std::invalid_argument.
FairMetric parse_metric(std::string_view name);

/// Index of the (a, y) cell in four-element arrays: 2 * a + y.
constexpr std::size_t cell_index(int a, int y) {
  return static_cast<std::size_t>(2 * a + y);
}

/// Scored samples with their labels and sensitive attributes.
struct Predictions {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<int> attributes;

  void validate() const;
};

// --- Thresholded evaluation metrics ------------------------------------------

inline constexpr double kDefaultThreshold = 0.5;

/// |P(yhat=1 | a=0) - P(yhat=1 | a=1)|.
double hard_dp(const Predictions& preds, double threshold = kDefaultThreshold);
/// Sum over y of |P(yhat=1 | a=0, y) - P(yhat=1 | a=1, y)|.
double hard_eo(const Predictions& preds, double threshold = kDefaultThreshold);
/// TPR(a=0) / TPR(a=1). Throws std::domain_error when TPR(a=1) is zero.
double eop_ratio(const Predictions& preds, double threshold = kDefaultThreshold);
/// |precision(a=0) - precision(a=1)| among predicted positives.
double pp_diff(const Predictions& preds, double threshold = kDefaultThreshold);

/// Ranked precision sum over a descending, stable ordering of scores.
/// Throws std::invalid_argument without positives.
double average_precision(std::span<const double> scores,
                         std::span<const int> labels);

// --- Relaxed (mean-output) metrics on the tape ---------------------------------

NodeHandle relaxed_dp(Tape& tape, NodeHandle mean0, NodeHandle mean1);
/// `means` in cell order (a, y) -> 2a + y.
NodeHandle relaxed_eo(Tape& tape, std::span<const NodeHandle> means);
NodeHandle relaxed_eop(Tape& tape, NodeHandle mean01, NodeHandle mean11);
/// Count-weighted group means; `counts` in cell order.
NodeHandle relaxed_pp(Tape& tape, std::span<const NodeHandle> means,
                      std::span<const double> counts);

/// Dispatches on `metric`. DP takes two means (a=0, a=1); the others take four
/// cell means. `counts` is only read for PP.
NodeHandle relaxed_penalty(Tape& tape, FairMetric metric,
                           std::span<const NodeHandle> means,
                           std::span<const double> counts = {});

// --- Relaxed metrics as plain values ---------------------------------------------

/// Penalty value and its partial derivatives with respect to each mean, using
/// the same conventions as the tape version (|.| has slope 0 at 0).
struct Penalty {
  double value = 0.0;
  std::vector<double> partials;
};

Penalty relaxed_penalty_value(FairMetric metric, std::span<const double> means,
                              std::span<const double> counts = {});

/// Relaxed metrics computed directly on scored samples.
double soft_dp(const Predictions& preds);
double soft_eo(const Predictions& preds);
double soft_eop(const Predictions& preds);
double soft_pp(const Predictions& preds);

/// Per-cell sample counts in cell order.
std::array<double, 4> cell_counts(std::span<const int> labels,
                                  std::span<const int> attributes);

}  // namespace fairalign::metrics
