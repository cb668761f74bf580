// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fairalign/rationale.hpp"

namespace fairalign::rationale {
namespace {

void check_layers(std::size_t n0, std::size_t n1, std::size_t first_layer) {
  if (n0 != n1) throw std::invalid_argument("importance layer counts differ");
  if (first_layer >= n0) {
    throw std::invalid_argument("alignment must cover at least one layer");
  }
}

}  // namespace

std::vector<double> Importance::flat() const {
  std::vector<double> out;
  for (const auto& layer : layers) out.insert(out.end(), layer.begin(), layer.end());
  return out;
}

ImportanceNodes taylor_importance(Tape& tape, const MlpParams& params,
                                  std::span<const NodeHandle> weight_nodes,
                                  NodeHandle loss) {
  if (weight_nodes.size() != params.num_weights()) {
    throw std::invalid_argument("taylor_importance: one node per weight expected");
  }
  const std::vector<NodeHandle> grads = tape.gradient(loss, weight_nodes);
  ImportanceNodes out;
  for (const auto& range : params.layers) {
    std::vector<NodeHandle>& layer = out.layers.emplace_back();
    layer.reserve(range.size());
    for (std::size_t k = range.begin; k < range.end; ++k) {
      layer.push_back(tape.square(tape.mul(grads[k], weight_nodes[k])));
    }
  }
  return out;
}

Importance taylor_importance(const MlpParams& params,
                             std::span<const double> weight_gradient) {
  if (weight_gradient.size() < params.num_weights()) {
    throw std::invalid_argument("taylor_importance: gradient too short");
  }
  Importance out;
  for (const auto& range : params.layers) {
    std::vector<double>& layer = out.layers.emplace_back();
    layer.reserve(range.size());
    for (std::size_t k = range.begin; k < range.end; ++k) {
      const double gw = weight_gradient[k] * params.weights[k];
      layer.push_back(gw * gw);
    }
  }
  return out;
}

Importance taylor_importance(const MlpParams& params, const LabeledBatch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("empty subgroup");
  const network::ForwardCache cache = network::forward_batch(params, batch.features);
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::VectorXd adjoint(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    adjoint[s] = network::cross_entropy_derivative(
                     cache.output[s], batch.labels[static_cast<std::size_t>(s)]) /
                 static_cast<double>(n);
  }
  return taylor_importance(params, network::backward_batch(params, cache, adjoint));
}

Importance layer_normalize(const Importance& raw) {
  Importance out = raw;
  for (auto& layer : out.layers) {
    const double norm = std::sqrt(
        std::inner_product(layer.begin(), layer.end(), layer.begin(), 0.0));
    if (norm == 0.0) continue;
    for (double& v : layer) v /= norm;
  }
  return out;
}

Similarity similarity(const Importance& imp0, const Importance& imp1,
                      std::size_t first_layer) {
  check_layers(imp0.layers.size(), imp1.layers.size(), first_layer);
  Similarity out;
  for (std::size_t l = first_layer; l < imp0.layers.size(); ++l) {
    const auto& u = imp0.layers[l];
    const auto& v = imp1.layers[l];
    if (u.size() != v.size()) throw std::invalid_argument("importance layer sizes differ");
    const double uu = std::inner_product(u.begin(), u.end(), u.begin(), 0.0);
    const double vv = std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
    double s = 1.0;
    if (uu == 0.0 || vv == 0.0) {
      ++out.degenerate;
    } else {
      s = std::inner_product(u.begin(), u.end(), v.begin(), 0.0) /
          (std::sqrt(uu) * std::sqrt(vv));
    }
    out.per_layer.push_back(s);
    out.sum += s;
  }
  return out;
}

AlignmentGradient alignment_gradient(const Importance& imp0, const Importance& imp1,
                                     std::size_t first_layer) {
  AlignmentGradient out;
  out.similarity = similarity(imp0, imp1, first_layer);
  out.wrt0.layers.resize(imp0.layers.size());
  out.wrt1.layers.resize(imp1.layers.size());
  for (std::size_t l = 0; l < imp0.layers.size(); ++l) {
    const auto& u = imp0.layers[l];
    const auto& v = imp1.layers[l];
    auto& du = out.wrt0.layers[l];
    auto& dv = out.wrt1.layers[l];
    du.assign(u.size(), 0.0);
    dv.assign(v.size(), 0.0);
    if (l < first_layer) continue;
    const double uu = std::inner_product(u.begin(), u.end(), u.begin(), 0.0);
    const double vv = std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
    if (uu == 0.0 || vv == 0.0) continue;
    const double cos = out.similarity.per_layer[l - first_layer];
    const double scale = 1.0 / (std::sqrt(uu) * std::sqrt(vv));
    // d(-cos)/du = -(v / (|u||v|) - cos u / |u|^2), symmetric in v.
    for (std::size_t i = 0; i < u.size(); ++i) {
      du[i] = -(v[i] * scale - cos * u[i] / uu);
      dv[i] = -(u[i] * scale - cos * v[i] / vv);
    }
  }
  return out;
}

AlignmentNodes alignment_loss(Tape& tape, const ImportanceNodes& imp0,
                              const ImportanceNodes& imp1, std::size_t first_layer) {
  check_layers(imp0.layers.size(), imp1.layers.size(), first_layer);
  AlignmentNodes out;
  for (std::size_t l = first_layer; l < imp0.layers.size(); ++l) {
    const auto& u = imp0.layers[l];
    const auto& v = imp1.layers[l];
    if (u.size() != v.size()) throw std::invalid_argument("importance layer sizes differ");
    const NodeHandle uu = tape.dot(u, u);
    const NodeHandle vv = tape.dot(v, v);
    if (tape.value(uu) == 0.0 || tape.value(vv) == 0.0) {
      ++out.degenerate;
      out.per_layer.push_back(tape.constant(1.0));
      continue;
    }
    out.per_layer.push_back(
        tape.div(tape.dot(u, v), tape.mul(tape.sqrt(uu), tape.sqrt(vv))));
  }
  out.loss = tape.neg(tape.sum(out.per_layer));
  return out;
}

std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
  if (k == 0 || k > values.size()) {
    throw std::invalid_argument("top-k size must lie in [1, layer width]");
  }
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      return values[a] != values[b] ? values[a] > values[b] : a < b;
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<double> top_k_overlap(const Importance& imp0, const Importance& imp1,
                                  std::size_t k) {
  check_layers(imp0.layers.size(), imp1.layers.size(), 0);
  std::vector<double> out;
  for (std::size_t l = 0; l < imp0.layers.size(); ++l) {
    if (imp0.layers[l].size() != imp1.layers[l].size()) {
      throw std::invalid_argument("importance layer sizes differ");
    }
    const auto a = top_k_indices(imp0.layers[l], k);
    const auto b = top_k_indices(imp1.layers[l], k);
    std::vector<std::size_t> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(common));
    const double shared = static_cast<double>(common.size());
    out.push_back(shared / (2.0 * static_cast<double>(k) - shared));
  }
  return out;
}

}  // namespace fairalign::rationale
