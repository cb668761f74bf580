// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "fairalign/network.hpp"

namespace fairalign::network {

std::size_t MlpSpec::fan_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_dims.at(layer - 1);
}

std::size_t MlpSpec::fan_out(std::size_t layer) const {
  return layer < hidden_dims.size() ? hidden_dims[layer] : 1;
}

void MlpSpec::validate() const {
  if (input_dim == 0) throw std::invalid_argument("input_dim must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw std::invalid_argument("hidden sizes must be >= 1");
  }
}

std::string MlpSpec::shape() const {
  std::string s = std::to_string(input_dim);
  for (std::size_t h : hidden_dims) s += "-" + std::to_string(h);
  return s + "-1";
}

MlpParams MlpParams::zeros(const MlpSpec& spec) {
  spec.validate();
  MlpParams p;
  p.spec = spec;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t n = spec.fan_in(l) * spec.fan_out(l);
    p.layers.push_back(LayerRange{offset, offset + n});
    p.biases.emplace_back(spec.fan_out(l), 0.0);
    offset += n;
  }
  p.weights.assign(offset, 0.0);
  return p;
}

std::size_t MlpParams::num_biases() const {
  std::size_t n = 0;
  for (const auto& b : biases) n += b.size();
  return n;
}

std::size_t MlpParams::layer_of(std::size_t k) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].contains(k)) return l;
  }
  throw std::out_of_range("weight index " + std::to_string(k) +
                          " out of range");
}

std::vector<double> MlpParams::flat() const {
  std::vector<double> out(weights);
  out.reserve(num_parameters());
  for (const auto& b : biases) out.insert(out.end(), b.begin(), b.end());
  return out;
}

void MlpParams::assign_flat(std::span<const double> values) {
  if (values.size() != num_parameters()) {
    throw std::invalid_argument("assign_flat: expected " +
                                std::to_string(num_parameters()) +
                                " values, got " + std::to_string(values.size()));
  }
  std::copy_n(values.begin(), weights.size(), weights.begin());
  std::size_t at = weights.size();
  for (auto& b : biases) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(at), b.size(),
                b.begin());
    at += b.size();
  }
}

MlpParams init(const MlpSpec& spec, std::uint64_t seed) {
  MlpParams p = MlpParams::zeros(spec);
  p.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(spec.fan_in(l) + spec.fan_out(l)));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t k = p.layers[l].begin; k < p.layers[l].end; ++k) {
      p.weights[k] = dist(rng);
    }
  }
  return p;
}

MlpParams zero_weight(const MlpParams& params, std::size_t k) {
  if (k >= params.weights.size()) {
    throw std::out_of_range("weight index " + std::to_string(k) +
                            " out of range [0, " +
                            std::to_string(params.weights.size()) + ")");
  }
  MlpParams copy = params;
  copy.weights[k] = 0.0;
  return copy;
}

// --- Tape evaluation ---------------------------------------------------------

std::vector<NodeHandle> ParamNodes::flat() const {
  std::vector<NodeHandle> out(weights);
  for (const auto& b : biases) out.insert(out.end(), b.begin(), b.end());
  return out;
}

ParamNodes bind(const MlpParams& params, Tape& tape) {
  ParamNodes nodes;
  nodes.weights.reserve(params.weights.size());
  for (double w : params.weights) nodes.weights.push_back(tape.variable(w));
  for (const auto& layer : params.biases) {
    auto& out = nodes.biases.emplace_back();
    out.reserve(layer.size());
    for (double b : layer) out.push_back(tape.variable(b));
  }
  return nodes;
}

NodeHandle forward(const MlpParams& params, const ParamNodes& nodes,
                   std::span<const double> x, Tape& tape) {
  const MlpSpec& spec = params.spec;
  if (x.size() != spec.input_dim) {
    throw std::invalid_argument("forward: expected " +
                                std::to_string(spec.input_dim) +
                                " features, got " + std::to_string(x.size()));
  }
  std::vector<NodeHandle> h;
  h.reserve(x.size());
  for (double v : x) h.push_back(tape.constant(v));

  const std::size_t last = spec.num_layers() - 1;
  std::vector<NodeHandle> next;
  for (std::size_t l = 0; l <= last; ++l) {
    const std::size_t fan_in = spec.fan_in(l);
    const std::size_t fan_out = spec.fan_out(l);
    next.clear();
    for (std::size_t j = 0; j < fan_out; ++j) {
      std::span<const NodeHandle> row(
          nodes.weights.data() + params.layers[l].begin + j * fan_in, fan_in);
      const NodeHandle z = tape.add(tape.dot(row, h), nodes.biases[l][j]);
      next.push_back(l == last ? tape.sigmoid(z) : tape.relu(z));
    }
    h.swap(next);
  }
  return h.front();
}

NodeHandle forward(const MlpParams& params, std::span<const double> x,
                   Tape& tape) {
  return forward(params, bind(params, tape), x, tape);
}

BatchNodes batch_classification_loss(const MlpParams& params,
                                     const ParamNodes& nodes,
                                     const RowMatrix& features,
                                     std::span<const int> labels, Tape& tape) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (n == 0) throw std::invalid_argument("empty batch");
  if (labels.size() != n) {
    throw std::invalid_argument("batch: feature rows and labels differ");
  }
  const NodeHandle eps = tape.constant(kProbabilityClamp);
  const NodeHandle upper = tape.constant(1.0 - kProbabilityClamp);
  const NodeHandle one = tape.constant(1.0);
  const NodeHandle count = tape.constant(static_cast<double>(n));

  BatchNodes out;
  out.outputs.reserve(n);
  std::vector<NodeHandle> losses;
  losses.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::span<const double> x(features.row(static_cast<Eigen::Index>(s)).data(),
                              static_cast<std::size_t>(features.cols()));
    const NodeHandle p = forward(params, nodes, x, tape);
    out.outputs.push_back(p);
    const NodeHandle clamped =
        tape.sub(tape.add(eps, tape.relu(tape.sub(p, eps))),
                 tape.relu(tape.sub(p, upper)));
    if (labels[s] != 0 && labels[s] != 1) {
      throw std::invalid_argument("labels must be 0 or 1");
    }
    const NodeHandle likelihood =
        labels[s] == 1 ? clamped : tape.sub(one, clamped);
    losses.push_back(tape.neg(tape.log(likelihood)));
  }
  out.loss = tape.div(tape.sum(losses), count);
  out.mean_output = tape.div(tape.sum(out.outputs), count);
  return out;
}

// --- Batched numeric evaluation ----------------------------------------------

ConstWeightMap layer_matrix(const MlpParams& params, std::size_t l) {
  return ConstWeightMap(params.weights.data() + params.layers[l].begin,
                        static_cast<Eigen::Index>(params.spec.fan_out(l)),
                        static_cast<Eigen::Index>(params.spec.fan_in(l)));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

ForwardCache forward_batch(const MlpParams& params, const RowMatrix& features) {
  const MlpSpec& spec = params.spec;
  if (static_cast<std::size_t>(features.cols()) != spec.input_dim) {
    throw std::invalid_argument("forward_batch: expected " +
                                std::to_string(spec.input_dim) +
                                " features, got " +
                                std::to_string(features.cols()));
  }
  ForwardCache cache;
  cache.input = features;
  const std::size_t last = spec.num_layers() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    const RowMatrix& h = l == 0 ? cache.input : cache.post.back();
    RowMatrix z = h * layer_matrix(params, l).transpose();
    const Eigen::Map<const Eigen::RowVectorXd> bias(
        params.biases[l].data(), static_cast<Eigen::Index>(params.biases[l].size()));
    z.rowwise() += bias;
    if (l < last) {
      cache.post.push_back(z.cwiseMax(0.0));
      cache.pre.push_back(std::move(z));
    } else {
      cache.output = z.col(0).unaryExpr([](double v) { return sigmoid(v); });
      cache.pre.push_back(std::move(z));
    }
  }
  return cache;
}

Eigen::VectorXd predict(const MlpParams& params, const RowMatrix& features) {
  return forward_batch(params, features).output;
}

std::vector<double> backward_batch(const MlpParams& params,
                                   const ForwardCache& cache,
                                   const Eigen::VectorXd& output_adjoint) {
  const MlpSpec& spec = params.spec;
  if (output_adjoint.size() != cache.output.size()) {
    throw std::invalid_argument("backward_batch: adjoint size mismatch");
  }
  std::vector<double> grad(params.num_parameters(), 0.0);
  std::vector<std::size_t> bias_offset(spec.num_layers());
  std::size_t at = params.num_weights();
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    bias_offset[l] = at;
    at += params.biases[l].size();
  }

  const Eigen::VectorXd& p = cache.output;
  RowMatrix delta =
      output_adjoint.cwiseProduct(p - p.cwiseProduct(p));
  for (std::size_t l = spec.num_layers(); l-- > 0;) {
    const RowMatrix& h = l == 0 ? cache.input : cache.post[l - 1];
    Eigen::Map<RowMatrix> gw(grad.data() + params.layers[l].begin,
                             static_cast<Eigen::Index>(spec.fan_out(l)),
                             static_cast<Eigen::Index>(spec.fan_in(l)));
    gw.noalias() = delta.transpose() * h;
    Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + bias_offset[l],
                                      static_cast<Eigen::Index>(spec.fan_out(l)));
    gb = delta.colwise().sum();
    if (l > 0) {
      RowMatrix back = delta * layer_matrix(params, l);
      const RowMatrix& z = cache.pre[l - 1];
      delta = back.cwiseProduct(
          z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
    }
  }
  return grad;
}

std::vector<double> cross_entropy_hvp(const MlpParams& params, const ForwardCache& cache,
                                      std::span<const int> labels,
                                      std::span<const double> direction) {
  const MlpSpec& spec = params.spec;
  const Eigen::Index n = cache.output.size();
  if (labels.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("cross_entropy_hvp: label count mismatch");
  }
  if (direction.size() != params.num_parameters()) {
    throw std::invalid_argument("cross_entropy_hvp: direction size mismatch");
  }
  const std::size_t layers = spec.num_layers();
  std::vector<std::size_t> bias_offset(layers);
  std::size_t at = params.num_weights();
  for (std::size_t l = 0; l < layers; ++l) {
    bias_offset[l] = at;
    at += params.biases[l].size();
  }
  auto dir_weights = [&](std::size_t l) {
    return ConstWeightMap(direction.data() + params.layers[l].begin,
                          static_cast<Eigen::Index>(spec.fan_out(l)),
                          static_cast<Eigen::Index>(spec.fan_in(l)));
  };
  auto dir_bias = [&](std::size_t l) {
    return Eigen::Map<const Eigen::RowVectorXd>(direction.data() + bias_offset[l],
                                                static_cast<Eigen::Index>(spec.fan_out(l)));
  };
  auto relu_mask = [](const RowMatrix& z) {
    return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }).eval();
  };

  // Directional derivatives of every pre- and post-activation.
  std::vector<RowMatrix> r_pre(layers), r_post(layers - 1);
  for (std::size_t l = 0; l < layers; ++l) {
    const RowMatrix& h = l == 0 ? cache.input : cache.post[l - 1];
    RowMatrix rz = h * dir_weights(l).transpose();
    if (l > 0) rz.noalias() += r_post[l - 1] * layer_matrix(params, l).transpose();
    rz.rowwise() += dir_bias(l);
    if (l + 1 < layers) r_post[l] = rz.cwiseProduct(relu_mask(cache.pre[l]));
    r_pre[l] = std::move(rz);
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  RowMatrix delta(n, 1), r_delta(n, 1);
  for (Eigen::Index s = 0; s < n; ++s) {
    const double p = cache.output[s];
    const double slope = p - p * p;
    const double dce = cross_entropy_derivative(p, labels[static_cast<std::size_t>(s)]);
    delta(s, 0) = dce * slope * inv_n;
    // d/dz of ce'(p) p (1 - p) is p (1 - p) inside the clamp and 0 outside.
    r_delta(s, 0) = dce == 0.0 ? 0.0 : slope * inv_n * r_pre[layers - 1](s, 0);
  }

  std::vector<double> out(params.num_parameters(), 0.0);
  for (std::size_t l = layers; l-- > 0;) {
    const RowMatrix& h = l == 0 ? cache.input : cache.post[l - 1];
    Eigen::Map<RowMatrix> hw(out.data() + params.layers[l].begin,
                             static_cast<Eigen::Index>(spec.fan_out(l)),
                             static_cast<Eigen::Index>(spec.fan_in(l)));
    hw.noalias() = r_delta.transpose() * h;
    if (l > 0) hw.noalias() += delta.transpose() * r_post[l - 1];
    Eigen::Map<Eigen::RowVectorXd> hb(out.data() + bias_offset[l],
                                      static_cast<Eigen::Index>(spec.fan_out(l)));
    hb = r_delta.colwise().sum();
    if (l > 0) {
      const RowMatrix mask = relu_mask(cache.pre[l - 1]);
      RowMatrix r_back = r_delta * layer_matrix(params, l);
      r_back.noalias() += delta * dir_weights(l);
      r_delta = r_back.cwiseProduct(mask);
      delta = (delta * layer_matrix(params, l)).cwiseProduct(mask);
    }
  }
  return out;
}

double clamp_probability(double p) {
  constexpr double eps = kProbabilityClamp;
  constexpr double upper = 1.0 - kProbabilityClamp;
  const double lo = p - eps;
  const double hi = p - upper;
  return (eps + (lo > 0.0 ? lo : 0.0)) - (hi > 0.0 ? hi : 0.0);
}

double cross_entropy(double p, int label) {
  const double c = clamp_probability(p);
  return -std::log(label == 1 ? c : 1.0 - c);
}

double cross_entropy_derivative(double p, int label) {
  const double inside =
      (p - kProbabilityClamp > 0.0 ? 1.0 : 0.0) -
      (p - (1.0 - kProbabilityClamp) > 0.0 ? 1.0 : 0.0);
  if (inside == 0.0) return 0.0;
  const double c = clamp_probability(p);
  return label == 1 ? -inside / c : inside / (1.0 - c);
}

double mean_cross_entropy(const Eigen::VectorXd& probabilities,
                          std::span<const int> labels) {
  if (probabilities.size() == 0) throw std::invalid_argument("empty batch");
  if (labels.size() != static_cast<std::size_t>(probabilities.size())) {
    throw std::invalid_argument("probabilities and labels differ in size");
  }
  double total = 0.0;
  for (Eigen::Index s = 0; s < probabilities.size(); ++s) {
    total += cross_entropy(probabilities[s], labels[static_cast<std::size_t>(s)]);
  }
  return total / static_cast<double>(probabilities.size());
}

double mean_classification_loss(const MlpParams& params,
                                const RowMatrix& features,
                                std::span<const int> labels) {
  return mean_cross_entropy(predict(params, features), labels);
}

}  // namespace fairalign::network
