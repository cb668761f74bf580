// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "fairalign/rationale.hpp"

namespace fairalign::rationale {
namespace {

void check_batch(const LabeledBatch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("empty subgroup");
  if (static_cast<std::size_t>(batch.features.rows()) != batch.size()) {
    throw std::invalid_argument("subgroup features and labels disagree");
  }
}

void check_index(std::size_t k, std::size_t count) {
  if (k >= count) {
    throw std::out_of_range("weight index " + std::to_string(k) + " out of range");
  }
}

}  // namespace

double exact_loss_change(const LossFunction& loss, std::span<const double> weights,
                         std::size_t k) {
  check_index(k, weights.size());
  std::vector<double> ablated(weights.begin(), weights.end());
  ablated[k] = 0.0;
  const double diff = loss(weights) - loss(ablated);
  return diff * diff;
}

double exact_loss_change(const MlpParams& params, std::size_t k,
                         const LabeledBatch& batch) {
  check_batch(batch);
  const double before =
      network::mean_classification_loss(params, batch.features, batch.labels);
  const double after = network::mean_classification_loss(
      network::zero_weight(params, k), batch.features, batch.labels);
  return (before - after) * (before - after);
}

std::vector<double> exact_loss_changes(const MlpParams& params,
                                       const LabeledBatch& batch) {
  check_batch(batch);
  using network::cross_entropy;
  const network::ForwardCache cache = network::forward_batch(params, batch.features);
  const auto n = static_cast<Eigen::Index>(batch.size());
  const std::size_t last = params.spec.num_layers() - 1;
  Eigen::VectorXd base(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    base[s] = cross_entropy(cache.output[s], batch.labels[static_cast<std::size_t>(s)]);
  }

  std::vector<double> out(params.num_weights(), 0.0);
  std::vector<Eigen::Index> rows;
  std::vector<double> shifts;
  for (std::size_t l = 0; l <= last; ++l) {
    const RowMatrix& h_prev = l == 0 ? cache.input : cache.post[l - 1];
    const std::size_t fan_in = params.spec.fan_in(l);
    for (std::size_t j = 0; j < params.spec.fan_out(l); ++j) {
      for (std::size_t i = 0; i < fan_in; ++i) {
        const std::size_t k = params.layers[l].begin + j * fan_in + i;
        const double w = params.weights[k];
        if (w == 0.0) continue;
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        double change = 0.0;
        if (l == last) {
          for (Eigen::Index s = 0; s < n; ++s) {
            const double x = h_prev(s, ii);
            if (x == 0.0) continue;
            const double p = network::sigmoid(cache.pre[l](s, 0) - w * x);
            change += cross_entropy(p, batch.labels[static_cast<std::size_t>(s)]) - base[s];
          }
        } else {
          // Rows whose hidden unit j actually moves; the rest are unaffected.
          rows.clear();
          shifts.clear();
          for (Eigen::Index s = 0; s < n; ++s) {
            const double x = h_prev(s, ii);
            if (x == 0.0) continue;
            const double moved = std::max(cache.pre[l](s, jj) - w * x, 0.0);
            const double shift = moved - cache.post[l](s, jj);
            if (shift != 0.0) {
              rows.push_back(s);
              shifts.push_back(shift);
            }
          }
          if (rows.empty()) continue;
          const Eigen::Map<const Eigen::VectorXd> shift(
              shifts.data(), static_cast<Eigen::Index>(shifts.size()));
          RowMatrix z = cache.pre[l + 1](rows, Eigen::all);
          z.noalias() +=
              shift * network::layer_matrix(params, l + 1).col(jj).transpose();
          for (std::size_t m = l + 1; m < last; ++m) {
            const RowMatrix h = z.cwiseMax(0.0);
            z = h * network::layer_matrix(params, m + 1).transpose();
            z.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(
                params.biases[m + 1].data(),
                static_cast<Eigen::Index>(params.biases[m + 1].size()));
          }
          for (std::size_t r = 0; r < rows.size(); ++r) {
            const double p = network::sigmoid(z(static_cast<Eigen::Index>(r), 0));
            change += cross_entropy(p, batch.labels[static_cast<std::size_t>(rows[r])]) -
                      base[rows[r]];
          }
        }
        change /= static_cast<double>(n);
        out[k] = change * change;
      }
    }
  }
  return out;
}

double exact_parity(const LossFunction& loss0, const LossFunction& loss1,
                    std::span<const double> weights, std::size_t k) {
  const double diff =
      exact_loss_change(loss0, weights, k) - exact_loss_change(loss1, weights, k);
  return diff * diff;
}

double exact_parity(const MlpParams& params, std::size_t k,
                    const LabeledBatch& group0, const LabeledBatch& group1) {
  check_batch(group1);
  const double diff =
      exact_loss_change(params, k, group0) - exact_loss_change(params, k, group1);
  return diff * diff;
}

namespace {

void fill_differences(ParityReport& report) {
  report.d.resize(report.c0.size());
  for (std::size_t k = 0; k < report.d.size(); ++k) {
    const double diff = report.c0[k] - report.c1[k];
    report.d[k] = diff * diff;
    report.d_f += report.d[k];
    report.d_f_l1 += std::fabs(diff);
  }
}

}  // namespace

ParityReport parity_scores(const LossFunction& loss0, const LossFunction& loss1,
                           std::span<const double> weights) {
  ParityReport report;
  report.layers = {network::LayerRange{0, weights.size()}};
  for (std::size_t k = 0; k < weights.size(); ++k) {
    report.c0.push_back(exact_loss_change(loss0, weights, k));
    report.c1.push_back(exact_loss_change(loss1, weights, k));
  }
  fill_differences(report);
  return report;
}

ParityReport network_parity(const MlpParams& params, const LabeledBatch& group0,
                            const LabeledBatch& group1) {
  ParityReport report;
  report.layers = params.layers;
  report.c0 = exact_loss_changes(params, group0);
  report.c1 = exact_loss_changes(params, group1);
  fill_differences(report);
  report.taylor = similarity(taylor_importance(params, group0),
                             taylor_importance(params, group1));
  report.rows0 = group0.size();
  report.rows1 = group1.size();
  return report;
}

void write_parity_csv(const ParityReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char line[160];
  out << "layer,param_index,c0,c1,d_k\n";
  for (std::size_t l = 0; l < report.layers.size(); ++l) {
    for (std::size_t k = report.layers[l].begin; k < report.layers[l].end; ++k) {
      std::snprintf(line, sizeof line, "%zu,%zu,%.17g,%.17g,%.17g\n", l, k,
                    report.c0[k], report.c1[k], report.d[k]);
      out << line;
    }
  }
  out << "\nkey,value\n";
  std::snprintf(line, sizeof line, "d_F,%.17g\nd_F_l1,%.17g\n", report.d_f,
                report.d_f_l1);
  out << line;
  for (std::size_t l = 0; l < report.taylor.per_layer.size(); ++l) {
    std::snprintf(line, sizeof line, "S_%zu,%.17g\n", l, report.taylor.per_layer[l]);
    out << line;
  }
  std::snprintf(line, sizeof line, "similarity_sum,%.17g\n", report.taylor.sum);
  out << line;
  out << "degenerate_layers," << report.taylor.degenerate << '\n'
      << "rows_a0," << report.rows0 << '\n'
      << "rows_a1," << report.rows1 << '\n';
}

double prediction_gap(const ScoreFunction& score, std::span<const double> weights,
                      std::size_t k, const RowMatrix& group0,
                      const RowMatrix& group1) {
  check_index(k, weights.size());
  if (group0.rows() == 0 || group1.rows() == 0) {
    throw std::invalid_argument("prediction_gap: empty subgroup");
  }
  std::vector<double> ablated(weights.begin(), weights.end());
  ablated[k] = 0.0;
  auto mean_score = [&](const RowMatrix& x) {
    double sum = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      sum += score(ablated, std::span<const double>(x.row(r).data(),
                                                    static_cast<std::size_t>(x.cols())));
    }
    return sum / static_cast<double>(x.rows());
  };
  const double diff = mean_score(group0) - mean_score(group1);
  return diff * diff;
}

double prediction_gap(const MlpParams& params, std::size_t k,
                      const RowMatrix& group0, const RowMatrix& group1) {
  if (group0.rows() == 0 || group1.rows() == 0) {
    throw std::invalid_argument("prediction_gap: empty subgroup");
  }
  const MlpParams ablated = network::zero_weight(params, k);
  const double diff =
      network::predict(ablated, group0).mean() - network::predict(ablated, group1).mean();
  return diff * diff;
}

}  // namespace fairalign::rationale
