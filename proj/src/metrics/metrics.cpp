// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fairalign::metrics {
namespace {

struct Tally {
  double total = 0.0;
  double hits = 0.0;

  double rate(const char* what) const {
    if (total == 0.0) {
      throw std::invalid_argument(std::string("empty subgroup for ") + what);
    }
    return hits / total;
  }
};

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_size(std::span<const double> means, std::size_t expected,
                FairMetric metric) {
  if (means.size() != expected) {
    throw std::invalid_argument(to_string(metric) + " expects " +
                                std::to_string(expected) + " subgroup means");
  }
}

void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("threshold must lie in (0, 1)");
  }
}

// Weighted group mean of two cells; throws when both counts are zero.
double weighted(double m0, double n0, double m1, double n1) {
  if (n0 + n1 <= 0.0) throw std::invalid_argument("pp: empty attribute group");
  return (m0 * n0 + m1 * n1) / (n0 + n1);
}

}  // namespace

std::string to_string(FairMetric metric) {
  switch (metric) {
    case FairMetric::kDp: return "dp";
    case FairMetric::kEo: return "eo";
    case FairMetric::kEop: return "eop";
    case FairMetric::kPp: return "pp";
  }
  return "?";
}

FairMetric parse_metric(std::string_view name) {
  if (name == "dp") return FairMetric::kDp;
  if (name == "eo") return FairMetric::kEo;
  if (name == "eop") return FairMetric::kEop;
  if (name == "pp") return FairMetric::kPp;
  throw std::invalid_argument("unknown fairness metric: " + std::string(name));
}

void Predictions::validate() const {
  if (scores.size() != labels.size() || scores.size() != attributes.size()) {
    throw std::invalid_argument("predictions: mismatched lengths");
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if ((labels[i] != 0 && labels[i] != 1) ||
        (attributes[i] != 0 && attributes[i] != 1)) {
      throw std::invalid_argument("predictions: labels and attributes must be 0/1");
    }
  }
}

double hard_dp(const Predictions& preds, double threshold) {
  preds.validate();
  check_threshold(threshold);
  Tally group[2];
  for (std::size_t i = 0; i < preds.scores.size(); ++i) {
    Tally& t = group[preds.attributes[i]];
    t.total += 1.0;
    t.hits += preds.scores[i] >= threshold ? 1.0 : 0.0;
  }
  return std::fabs(group[0].rate("dp") - group[1].rate("dp"));
}

double hard_eo(const Predictions& preds, double threshold) {
  preds.validate();
  check_threshold(threshold);
  Tally cell[4];
  for (std::size_t i = 0; i < preds.scores.size(); ++i) {
    Tally& t = cell[cell_index(preds.attributes[i], preds.labels[i])];
    t.total += 1.0;
    t.hits += preds.scores[i] >= threshold ? 1.0 : 0.0;
  }
  double eo = 0.0;
  for (int y = 0; y < 2; ++y) {
    eo += std::fabs(cell[cell_index(0, y)].rate("eo") -
                    cell[cell_index(1, y)].rate("eo"));
  }
  return eo;
}

double eop_ratio(const Predictions& preds, double threshold) {
  preds.validate();
  check_threshold(threshold);
  Tally positives[2];
  for (std::size_t i = 0; i < preds.scores.size(); ++i) {
    if (preds.labels[i] != 1) continue;
    Tally& t = positives[preds.attributes[i]];
    t.total += 1.0;
    t.hits += preds.scores[i] >= threshold ? 1.0 : 0.0;
  }
  const double tpr0 = positives[0].rate("eop");
  const double tpr1 = positives[1].rate("eop");
  if (tpr1 == 0.0) throw std::domain_error("eop: TPR of group a=1 is zero");
  return tpr0 / tpr1;
}

double pp_diff(const Predictions& preds, double threshold) {
  preds.validate();
  check_threshold(threshold);
  Tally predicted[2];
  for (std::size_t i = 0; i < preds.scores.size(); ++i) {
    if (preds.scores[i] < threshold) continue;
    Tally& t = predicted[preds.attributes[i]];
    t.total += 1.0;
    t.hits += preds.labels[i] == 1 ? 1.0 : 0.0;
  }
  if (predicted[0].total == 0.0 || predicted[1].total == 0.0) {
    throw std::domain_error("pp: a group has no predicted positives");
  }
  return std::fabs(predicted[0].rate("pp") - predicted[1].rate("pp"));
}

double average_precision(std::span<const double> scores,
                         std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("average_precision: mismatched lengths");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return scores[i] > scores[j];
  });
  double positives = 0.0;
  double precision_sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 1) {
      positives += 1.0;
      precision_sum += positives / static_cast<double>(rank + 1);
    }
  }
  if (positives == 0.0) {
    throw std::invalid_argument("average_precision: no positive labels");
  }
  return precision_sum / positives;
}

NodeHandle relaxed_dp(Tape& tape, NodeHandle mean0, NodeHandle mean1) {
  return tape.abs(tape.sub(mean0, mean1));
}

NodeHandle relaxed_eo(Tape& tape, std::span<const NodeHandle> means) {
  if (means.size() != 4) throw std::invalid_argument("eo expects 4 cell means");
  return tape.add(relaxed_dp(tape, means[cell_index(0, 0)], means[cell_index(1, 0)]),
                  relaxed_dp(tape, means[cell_index(0, 1)], means[cell_index(1, 1)]));
}

NodeHandle relaxed_eop(Tape& tape, NodeHandle mean01, NodeHandle mean11) {
  return tape.abs(tape.sub(mean01, mean11));
}

NodeHandle relaxed_pp(Tape& tape, std::span<const NodeHandle> means,
                      std::span<const double> counts) {
  if (means.size() != 4 || counts.size() != 4) {
    throw std::invalid_argument("pp expects 4 cell means and 4 counts");
  }
  auto group = [&](int a) {
    const double n0 = counts[cell_index(a, 0)];
    const double n1 = counts[cell_index(a, 1)];
    if (n0 + n1 <= 0.0) throw std::invalid_argument("pp: empty attribute group");
    const NodeHandle w0 = tape.constant(n0 / (n0 + n1));
    const NodeHandle w1 = tape.constant(n1 / (n0 + n1));
    return tape.add(tape.mul(means[cell_index(a, 0)], w0),
                    tape.mul(means[cell_index(a, 1)], w1));
  };
  return tape.abs(tape.sub(group(0), group(1)));
}

NodeHandle relaxed_penalty(Tape& tape, FairMetric metric,
                           std::span<const NodeHandle> means,
                           std::span<const double> counts) {
  switch (metric) {
    case FairMetric::kDp:
      if (means.size() != 2) throw std::invalid_argument("dp expects 2 means");
      return relaxed_dp(tape, means[0], means[1]);
    case FairMetric::kEo:
      return relaxed_eo(tape, means);
    case FairMetric::kEop:
      if (means.size() != 4) throw std::invalid_argument("eop expects 4 cell means");
      return relaxed_eop(tape, means[cell_index(0, 1)], means[cell_index(1, 1)]);
    case FairMetric::kPp:
      return relaxed_pp(tape, means, counts);
  }
  throw std::invalid_argument("unknown metric");
}

Penalty relaxed_penalty_value(FairMetric metric, std::span<const double> means,
                              std::span<const double> counts) {
  Penalty out;
  switch (metric) {
    case FairMetric::kDp: {
      check_size(means, 2, metric);
      const double diff = means[0] - means[1];
      out.value = std::fabs(diff);
      out.partials = {sign(diff), -sign(diff)};
      return out;
    }
    case FairMetric::kEo: {
      check_size(means, 4, metric);
      out.partials.assign(4, 0.0);
      for (int y = 0; y < 2; ++y) {
        const double diff = means[cell_index(0, y)] - means[cell_index(1, y)];
        out.value += std::fabs(diff);
        out.partials[cell_index(0, y)] = sign(diff);
        out.partials[cell_index(1, y)] = -sign(diff);
      }
      return out;
    }
    case FairMetric::kEop: {
      check_size(means, 4, metric);
      const double diff = means[cell_index(0, 1)] - means[cell_index(1, 1)];
      out.value = std::fabs(diff);
      out.partials.assign(4, 0.0);
      out.partials[cell_index(0, 1)] = sign(diff);
      out.partials[cell_index(1, 1)] = -sign(diff);
      return out;
    }
    case FairMetric::kPp: {
      check_size(means, 4, metric);
      if (counts.size() != 4) throw std::invalid_argument("pp expects 4 counts");
      const double g0 = weighted(means[0], counts[0], means[1], counts[1]);
      const double g1 = weighted(means[2], counts[2], means[3], counts[3]);
      const double s = sign(g0 - g1);
      out.value = std::fabs(g0 - g1);
      const double n0 = counts[0] + counts[1];
      const double n1 = counts[2] + counts[3];
      out.partials = {s * counts[0] / n0, s * counts[1] / n0,
                      -s * counts[2] / n1, -s * counts[3] / n1};
      return out;
    }
  }
  throw std::invalid_argument("unknown metric");
}

namespace {

std::array<double, 4> cell_means(const Predictions& preds) {
  preds.validate();
  std::array<double, 4> sum{};
  const std::array<double, 4> n = cell_counts(preds.labels, preds.attributes);
  for (std::size_t i = 0; i < preds.scores.size(); ++i) {
    sum[cell_index(preds.attributes[i], preds.labels[i])] += preds.scores[i];
  }
  for (std::size_t c = 0; c < 4; ++c) sum[c] = n[c] > 0.0 ? sum[c] / n[c] : 0.0;
  return sum;
}

void require_cells(const Predictions& preds, std::initializer_list<std::size_t> cells) {
  const auto n = cell_counts(preds.labels, preds.attributes);
  for (std::size_t c : cells) {
    if (n[c] == 0.0) throw std::invalid_argument("empty (a, y) cell");
  }
}

}  // namespace

double soft_dp(const Predictions& preds) {
  preds.validate();
  double sum[2] = {0.0, 0.0};
  double n[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < preds.scores.size(); ++i) {
    sum[preds.attributes[i]] += preds.scores[i];
    n[preds.attributes[i]] += 1.0;
  }
  if (n[0] == 0.0 || n[1] == 0.0) throw std::invalid_argument("empty subgroup for dp");
  return std::fabs(sum[0] / n[0] - sum[1] / n[1]);
}

double soft_eo(const Predictions& preds) {
  require_cells(preds, {0, 1, 2, 3});
  const auto m = cell_means(preds);
  return relaxed_penalty_value(FairMetric::kEo, m).value;
}

double soft_eop(const Predictions& preds) {
  require_cells(preds, {cell_index(0, 1), cell_index(1, 1)});
  const auto m = cell_means(preds);
  return relaxed_penalty_value(FairMetric::kEop, m).value;
}

double soft_pp(const Predictions& preds) {
  const auto m = cell_means(preds);
  const auto n = cell_counts(preds.labels, preds.attributes);
  return relaxed_penalty_value(FairMetric::kPp, m, n).value;
}

std::array<double, 4> cell_counts(std::span<const int> labels,
                                  std::span<const int> attributes) {
  if (labels.size() != attributes.size()) {
    throw std::invalid_argument("cell_counts: mismatched lengths");
  }
  std::array<double, 4> n{};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    n[cell_index(attributes[i], labels[i])] += 1.0;
  }
  return n;
}

}  // namespace fairalign::metrics
