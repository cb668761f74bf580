// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fairalign/rationale.hpp"
#include "fairalign/training.hpp"

namespace fairalign::training {
namespace {

using autodiff::NodeHandle;
using autodiff::Tape;

bool fairness_on(const TrainConfig& c) {
  return (c.method == Method::kFairReg || c.method == Method::kDrAlign) && c.lambda > 0.0;
}

bool alignment_on(const TrainConfig& c) {
  return c.method == Method::kDrAlign && c.beta > 0.0;
}

void check_cells(std::span<const LabeledBatch> cells, bool pooled,
                 const CellLayout& layout) {
  const std::size_t expected = pooled ? 1 : layout.cells.size();
  if (cells.size() != expected) {
    throw std::invalid_argument("objective expects " + std::to_string(expected) +
                                " batches, got " + std::to_string(cells.size()));
  }
  for (const auto& c : cells) {
    if (c.size() == 0) throw std::invalid_argument("objective: empty batch");
  }
}

Objective value_objective(const MlpParams& params, std::span<const LabeledBatch> cells,
                          const TrainConfig& config, std::span<const double> counts,
                          bool pooled, const CellLayout& layout) {
  Objective out;
  out.gradient.assign(params.num_parameters(), 0.0);
  std::vector<network::ForwardCache> caches;
  std::vector<double> means;
  caches.reserve(cells.size());
  for (const auto& cell : cells) {
    caches.push_back(network::forward_batch(params, cell.features));
    out.record.classification +=
        network::mean_cross_entropy(caches.back().output, cell.labels);
    means.push_back(caches.back().output.mean());
  }
  metrics::Penalty penalty;
  const bool fair = !pooled && fairness_on(config);
  const bool align = !pooled && alignment_on(config);
  if (fair) {
    penalty = metrics::relaxed_penalty_value(config.metric, means, counts);
    out.record.fairness = penalty.value;
  }
  auto accumulate = [&](const std::vector<double>& g, double scale) {
    for (std::size_t k = 0; k < g.size(); ++k) out.gradient[k] += scale * g[k];
  };

  // Per-cell classification gradients are kept apart when the alignment term
  // needs them; otherwise one backward pass covers both loss terms.
  std::vector<std::vector<double>> cell_gradients(align ? cells.size() : 0);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto n = static_cast<Eigen::Index>(cells[c].size());
    const double inv_n = 1.0 / static_cast<double>(n);
    const double shift = fair ? config.lambda * penalty.partials[c] * inv_n : 0.0;
    Eigen::VectorXd adjoint(n);
    for (Eigen::Index s = 0; s < n; ++s) {
      adjoint[s] = network::cross_entropy_derivative(
                       caches[c].output[s], cells[c].labels[static_cast<std::size_t>(s)]) *
                       inv_n +
                   (align ? 0.0 : shift);
    }
    if (!align) {
      accumulate(network::backward_batch(params, caches[c], adjoint), 1.0);
      continue;
    }
    cell_gradients[c] = network::backward_batch(params, caches[c], adjoint);
    accumulate(cell_gradients[c], 1.0);
    if (shift != 0.0) {
      accumulate(network::backward_batch(params, caches[c], Eigen::VectorXd::Constant(n, shift)),
                 1.0);
    }
  }

  if (align) {
    const std::size_t first = first_aligned_layer(config, params.spec.num_layers());
    std::vector<rationale::Importance> importance;
    for (const auto& g : cell_gradients) importance.push_back(rationale::taylor_importance(params, g));
    std::vector<std::vector<double>> upstream(cells.size(),
                                              std::vector<double>(params.num_weights(), 0.0));
    auto add_upstream = [&](std::size_t c, const rationale::Importance& d) {
      for (std::size_t l = 0; l < d.layers.size(); ++l) {
        const std::size_t begin = params.layers[l].begin;
        for (std::size_t i = 0; i < d.layers[l].size(); ++i) upstream[c][begin + i] += d.layers[l][i];
      }
    };
    for (const auto& [i, j] : layout.align_pairs) {
      const auto aligned = rationale::alignment_gradient(importance[i], importance[j], first);
      out.record.alignment -= aligned.similarity.sum;
      out.record.degenerate_layers += aligned.similarity.degenerate;
      add_upstream(i, aligned.wrt0);
      add_upstream(j, aligned.wrt1);
    }
    // c_k = (g_k w_k)^2 depends on w_k directly and through g = dJ/dw, whose
    // derivative is the Hessian of the cell loss.
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::vector<double> direction(params.num_parameters(), 0.0);
      bool any = false;
      for (std::size_t k = 0; k < params.num_weights(); ++k) {
        const double u = upstream[c][k];
        if (u == 0.0) continue;
        any = true;
        const double g = cell_gradients[c][k];
        const double w = params.weights[k];
        out.gradient[k] += config.beta * u * 2.0 * g * g * w;
        direction[k] = u * 2.0 * g * w * w;
      }
      if (!any) continue;
      accumulate(network::cross_entropy_hvp(params, caches[c], cells[c].labels, direction),
                 config.beta);
    }
  }
  out.record.total = out.record.classification +
                     (fair ? config.lambda * out.record.fairness : 0.0) +
                     (align ? config.beta * out.record.alignment : 0.0);
  return out;
}

Objective tape_objective(const MlpParams& params, std::span<const LabeledBatch> cells,
                         const TrainConfig& config, std::span<const double> counts,
                         bool pooled, const CellLayout& layout) {
  Tape tape;
  const network::ParamNodes nodes = network::bind(params, tape);
  std::vector<NodeHandle> losses;
  std::vector<NodeHandle> means;
  for (const auto& cell : cells) {
    const auto batch =
        network::batch_classification_loss(params, nodes, cell.features, cell.labels, tape);
    losses.push_back(batch.loss);
    means.push_back(batch.mean_output);
  }
  Objective out;
  NodeHandle total = losses.size() == 1 ? losses[0] : tape.sum(losses);
  out.record.classification = tape.value(total);

  if (!pooled && fairness_on(config)) {
    const NodeHandle penalty = metrics::relaxed_penalty(tape, config.metric, means, counts);
    out.record.fairness = tape.value(penalty);
    total = tape.add(total, tape.mul(tape.constant(config.lambda), penalty));
  }
  if (!pooled && alignment_on(config)) {
    const std::size_t first = first_aligned_layer(config, params.spec.num_layers());
    std::vector<std::optional<rationale::ImportanceNodes>> importance(cells.size());
    auto importance_of = [&](std::size_t c) -> const rationale::ImportanceNodes& {
      if (!importance[c]) {
        importance[c] =
            rationale::taylor_importance(tape, params, nodes.weights, losses[c]);
      }
      return *importance[c];
    };
    std::vector<NodeHandle> terms;
    for (const auto& [i, j] : layout.align_pairs) {
      const auto aligned = rationale::alignment_loss(tape, importance_of(i),
                                                     importance_of(j), first);
      terms.push_back(aligned.loss);
      out.record.degenerate_layers += aligned.degenerate;
    }
    const NodeHandle alignment = terms.size() == 1 ? terms[0] : tape.sum(terms);
    out.record.alignment = tape.value(alignment);
    total = tape.add(total, tape.mul(tape.constant(config.beta), alignment));
  }
  out.record.total = tape.value(total);
  out.gradient = tape.gradient_values(total, nodes.flat());
  return out;
}

}  // namespace

Objective evaluate_objective(const MlpParams& params, std::span<const LabeledBatch> cells,
                             const TrainConfig& config, std::span<const double> counts,
                             bool pooled) {
  const CellLayout layout = layout_for(config.metric);
  check_cells(cells, pooled, layout);
  if (config.uses_tape()) {
    return tape_objective(params, cells, config, counts, pooled, layout);
  }
  return value_objective(params, cells, config, counts, pooled, layout);
}

Optimizer::Optimizer(const TrainConfig& config, std::size_t num_parameters)
    : kind_(config.optimizer),
      lr_(config.learning_rate),
      beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      epsilon_(config.adam_epsilon),
      m_(num_parameters, 0.0),
      v_(num_parameters, 0.0) {}

void Optimizer::step(MlpParams& params, std::span<const double> gradient) {
  if (gradient.size() != m_.size()) {
    throw std::invalid_argument("optimizer: gradient size mismatch");
  }
  std::vector<double> flat = params.flat();
  ++steps_;
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t k = 0; k < flat.size(); ++k) flat[k] -= lr_ * gradient[k];
  } else {
    const double t = static_cast<double>(steps_);
    const double correction1 = 1.0 - std::pow(beta1_, t);
    const double correction2 = 1.0 - std::pow(beta2_, t);
    for (std::size_t k = 0; k < flat.size(); ++k) {
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * gradient[k];
      v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * gradient[k] * gradient[k];
      const double m_hat = m_[k] / correction1;
      const double v_hat = v_[k] / correction2;
      flat[k] -= lr_ * m_hat / (std::sqrt(v_hat) + epsilon_);
    }
  }
  params.assign_flat(flat);
}

StepRecord train_step(MlpParams& params, Optimizer& optimizer,
                      std::span<const LabeledBatch> cells, const TrainConfig& config,
                      std::span<const double> counts) {
  const Objective objective = evaluate_objective(params, cells, config, counts);
  const StepRecord& r = objective.record;
  if (!std::isfinite(r.total)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << optimizer.steps() + 1
        << ": classification=" << r.classification << " fairness=" << r.fairness
        << " alignment=" << r.alignment;
    throw std::runtime_error(msg.str());
  }
  optimizer.step(params, objective.gradient);
  return r;
}

StepRecord train_step_dp(MlpParams& params, Optimizer& optimizer,
                         const LabeledBatch& group0, const LabeledBatch& group1,
                         const TrainConfig& config) {
  if (config.metric != FairMetric::kDp) {
    throw std::invalid_argument("train_step_dp requires the dp metric");
  }
  const LabeledBatch cells[] = {group0, group1};
  return train_step(params, optimizer, cells, config, {});
}

StepRecord train_step_eo(MlpParams& params, Optimizer& optimizer,
                         const std::array<LabeledBatch, 4>& cells,
                         const TrainConfig& config) {
  if (config.metric != FairMetric::kEo) {
    throw std::invalid_argument("train_step_eo requires the eo metric");
  }
  return train_step(params, optimizer, cells, config, {});
}

}  // namespace fairalign::training
