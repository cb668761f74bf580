// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "fairalign/finite_difference.hpp"
#include "fairalign/rationale.hpp"

namespace fairalign::rationale {
namespace {

using network::MlpSpec;

// Squared-error linear scorer over samples (x, y) with one weight per input.
LossFunction squared_loss(std::vector<std::vector<double>> xs, std::vector<double> ys) {
  return [xs, ys](std::span<const double> w) {
    double total = 0.0;
    for (std::size_t s = 0; s < xs.size(); ++s) {
      double f = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) f += w[i] * xs[s][i];
      total += (f - ys[s]) * (f - ys[s]);
    }
    return total / static_cast<double>(xs.size());
  };
}

LabeledBatch random_batch(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.5);
  LabeledBatch b;
  b.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < b.features.size(); ++i) b.features.data()[i] = normal(rng);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(coin(rng) ? 1 : 0);
  return b;
}

MlpParams random_params(const MlpSpec& spec, std::uint64_t seed) {
  MlpParams p = network::init(spec, seed);
  std::mt19937_64 rng(seed * 7 + 1);
  std::normal_distribution<double> small(0.0, 0.2);
  for (auto& b : p.biases) {
    for (double& v : b) v = small(rng);
  }
  return p;
}

TEST(ExactLossChange, LinearScorerExamples) {
  const std::vector<double> w = {0.5};
  const LossFunction p0 = squared_loss({{1.0}}, {1.0});
  const LossFunction p1 = squared_loss({{1.0}}, {0.0});
  EXPECT_DOUBLE_EQ(exact_loss_change(p0, w, 0), 0.5625);
  EXPECT_DOUBLE_EQ(exact_loss_change(p1, w, 0), 0.0625);
  const std::vector<double> zero = {0.0};
  EXPECT_EQ(exact_loss_change(p0, zero, 0), 0.0);
  EXPECT_THROW(exact_loss_change(p0, w, 1), std::out_of_range);
}

TEST(ExactParity, LinearScorerExamples) {
  const std::vector<double> w = {0.5};
  const LossFunction p0 = squared_loss({{1.0}}, {1.0});
  const LossFunction p1 = squared_loss({{1.0}}, {0.0});
  EXPECT_DOUBLE_EQ(exact_parity(p0, p1, w, 0), 0.25);
  EXPECT_DOUBLE_EQ(exact_parity(p1, p0, w, 0), 0.25);
  EXPECT_EQ(exact_parity(p0, p0, w, 0), 0.0);
}

TEST(ParityScores, TwoParameterFixtureSums) {
  // Separable losses: weight 0 reproduces the single-weight fixture, weight 1
  // has loss changes (1 - 2t)^2 = 0.36 and 0.16.
  const LossFunction loss0 = [](std::span<const double> w) {
    return (w[0] - 1.0) * (w[0] - 1.0) + (w[1] - 0.2) * (w[1] - 0.2);
  };
  const LossFunction loss1 = [](std::span<const double> w) {
    return w[0] * w[0] + (w[1] - 0.3) * (w[1] - 0.3);
  };
  const std::vector<double> w = {0.5, 1.0};
  const ParityReport r = parity_scores(loss0, loss1, w);
  EXPECT_NEAR(r.d[0], 0.25, 1e-12);
  EXPECT_NEAR(r.d[1], 0.04, 1e-12);
  EXPECT_NEAR(r.d_f, 0.29, 1e-12);
  EXPECT_NEAR(r.d_f_l1, 0.5 + 0.2, 1e-12);
}

TEST(NetworkParity, IdenticalSubgroupsGiveZeroAndOrderIsIrrelevant) {
  std::mt19937_64 rng(3);
  const MlpParams p = network::init(MlpSpec{3, {5, 4}, network::Activation::kRelu}, 2);
  const LabeledBatch g = random_batch(30, 3, rng);
  const ParityReport same = network_parity(p, g, g);
  EXPECT_EQ(same.d_f, 0.0);
  for (double s : same.taylor.per_layer) EXPECT_NEAR(s, 1.0, 1e-12);

  const LabeledBatch h = random_batch(25, 3, rng);
  const ParityReport ab = network_parity(p, g, h);
  const ParityReport ba = network_parity(p, h, g);
  EXPECT_EQ(ab.d, ba.d);
  EXPECT_EQ(ab.d_f, ba.d_f);
  EXPECT_GT(ab.d_f, 0.0);
  double sum = 0.0;
  for (double d : ab.d) {
    EXPECT_GE(d, 0.0);
    sum += d;
  }
  EXPECT_DOUBLE_EQ(ab.d_f, sum);
}

// The incremental all-weights sweep against brute-force zeroing.
TEST(ExactLossChangesProperty, MatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpSpec spec{4, {6, 5}, network::Activation::kRelu};
    const MlpParams p = random_params(spec, 40 + trial);
    LabeledBatch batch = random_batch(25, 4, rng);
    // One-hot style zeros exercise the sparse row path.
    for (Eigen::Index r = 0; r < batch.features.rows(); r += 2) batch.features(r, 1) = 0.0;
    const auto fast = exact_loss_changes(p, batch);
    ASSERT_EQ(fast.size(), p.num_weights());
    for (std::size_t k = 0; k < p.num_weights(); ++k) {
      const double brute = exact_loss_change(p, k, batch);
      EXPECT_NEAR(std::sqrt(fast[k]), std::sqrt(brute), 1e-12) << "k=" << k;
      EXPECT_NEAR(exact_parity(p, k, batch, batch), 0.0, 0.0);
    }
  }
}

TEST(ExactLossChange, DeadUnitGivesZero) {
  MlpParams p = network::init(MlpSpec{2, {3}, network::Activation::kRelu}, 5);
  p.biases[0][1] = -100.0;  // hidden unit 1 never fires
  std::mt19937_64 rng(1);
  const LabeledBatch batch = random_batch(20, 2, rng);
  const auto all = exact_loss_changes(p, batch);
  for (std::size_t k : {2u, 3u}) {  // incoming weights of unit 1
    EXPECT_EQ(exact_loss_change(p, k, batch), 0.0);
    EXPECT_EQ(all[k], 0.0);
  }
  EXPECT_EQ(all[p.layers[1].begin + 1], 0.0);  // outgoing weight, input always 0
  EXPECT_THROW(exact_loss_change(p, 0, LabeledBatch{}), std::invalid_argument);
}

TEST(TaylorImportance, LinearScorerOnTape) {
  MlpParams p = MlpParams::zeros(MlpSpec{1, {}, network::Activation::kRelu});
  p.weights[0] = 0.5;
  Tape t;
  const NodeHandle w = t.variable(0.5);
  const NodeHandle loss = t.square(t.sub(t.mul(w, t.constant(1.0)), t.constant(1.0)));
  const NodeHandle weights[] = {w};
  const ImportanceNodes imp = taylor_importance(t, p, weights, loss);
  ASSERT_EQ(imp.layers.size(), 1u);
  EXPECT_DOUBLE_EQ(t.value(imp.layers[0][0]), 0.25);

  const NodeHandle w0 = t.variable(0.0);
  const NodeHandle loss0 = t.square(t.sub(t.mul(w0, t.constant(1.0)), t.constant(1.0)));
  const NodeHandle zero_weight[] = {w0};
  EXPECT_EQ(t.value(taylor_importance(t, p, zero_weight, loss0).layers[0][0]), 0.0);
}

TEST(TaylorImportance, ZeroWeightOrGradientGivesZero) {
  MlpParams p = network::init(MlpSpec{2, {3}, network::Activation::kRelu}, 6);
  p.weights[1] = 0.0;
  std::vector<double> grad(p.num_parameters(), 0.7);
  grad[4] = 0.0;
  const Importance imp = taylor_importance(p, grad);
  EXPECT_EQ(imp.layers[0][1], 0.0);
  EXPECT_EQ(imp.layers[0][4], 0.0);
  for (double v : imp.flat()) EXPECT_GE(v, 0.0);
}

TEST(TaylorImportanceProperty, TapeAndValueFormsAgree) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpParams p = random_params(MlpSpec{3, {4, 3}, network::Activation::kRelu}, trial);
    const LabeledBatch b = random_batch(12, 3, rng);
    Tape t;
    const auto nodes = network::bind(p, t);
    const auto loss = network::batch_classification_loss(p, nodes, b.features, b.labels, t);
    const ImportanceNodes on_tape = taylor_importance(t, p, nodes.weights, loss.loss);
    const Importance values = taylor_importance(p, b);
    for (std::size_t l = 0; l < values.layers.size(); ++l) {
      for (std::size_t i = 0; i < values.layers[l].size(); ++i) {
        const double v = values.layers[l][i];
        EXPECT_NEAR(t.value(on_tape.layers[l][i]), v, 1e-12 * std::max(1.0, v));
      }
    }
  }
}

TEST(LayerNormalize, Examples) {
  const Importance raw{{{3.0, 4.0}, {0.0, 0.0}, {1.0, 2.0, 2.0}}};
  const Importance n = layer_normalize(raw);
  EXPECT_DOUBLE_EQ(n.layers[0][0], 0.6);
  EXPECT_DOUBLE_EQ(n.layers[0][1], 0.8);
  EXPECT_EQ(n.layers[1], (std::vector<double>{0.0, 0.0}));
  double norm = 0.0;
  for (double v : n.layers[2]) norm += v * v;
  EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-12);
}

TEST(Alignment, IdenticalImportancesReachLayerCount) {
  const Importance imp{{{1.0, 2.0}, {0.5, 0.1, 3.0}, {4.0}}};
  const Similarity s = similarity(imp, imp);
  EXPECT_NEAR(s.sum, 3.0, 1e-12);
  Tape t;
  ImportanceNodes nodes;
  for (const auto& layer : imp.layers) {
    auto& out = nodes.layers.emplace_back();
    for (double v : layer) out.push_back(t.variable(v));
  }
  const AlignmentNodes a = alignment_loss(t, nodes, nodes);
  EXPECT_NEAR(t.value(a.loss), -3.0, 1e-12);
  EXPECT_EQ(a.per_layer.size(), 3u);
  const AlignmentNodes last_two = alignment_loss(t, nodes, nodes, 1);
  EXPECT_NEAR(t.value(last_two.loss), -2.0, 1e-12);
  EXPECT_THROW(alignment_loss(t, nodes, nodes, 3), std::invalid_argument);
}

TEST(Alignment, CosineExampleAndShapeErrors) {
  const Importance a{{{1.0, 2.0}}};
  const Importance b{{{2.0, 1.0}}};
  EXPECT_NEAR(similarity(a, b).sum, 0.8, 1e-15);
  const Importance wrong{{{1.0, 2.0, 3.0}}};
  EXPECT_THROW(similarity(a, wrong), std::invalid_argument);
  const Importance two_layers{{{1.0, 2.0}, {1.0}}};
  EXPECT_THROW(similarity(a, two_layers), std::invalid_argument);
}

TEST(Alignment, ZeroLayerCountsAsAligned) {
  const Importance a{{{0.0, 0.0}, {1.0, 0.0}}};
  const Importance b{{{1.0, 3.0}, {0.0, 1.0}}};
  const Similarity s = similarity(a, b);
  EXPECT_EQ(s.per_layer[0], 1.0);
  EXPECT_EQ(s.per_layer[1], 0.0);
  EXPECT_EQ(s.degenerate, 1u);
}

TEST(AlignmentProperty, ScaleInvariantAndBounded) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    Importance a, b;
    for (std::size_t width : {3u, 7u, 2u}) {
      auto& la = a.layers.emplace_back();
      auto& lb = b.layers.emplace_back();
      for (std::size_t i = 0; i < width; ++i) {
        la.push_back(u(rng));
        lb.push_back(u(rng));
      }
    }
    const Similarity raw = similarity(a, b);
    const Similarity normalized = similarity(layer_normalize(a), layer_normalize(b));
    EXPECT_NEAR(raw.sum, normalized.sum, 1e-10);
    for (double s : raw.per_layer) {
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0 + 1e-12);
    }
    EXPECT_LE(raw.sum, 3.0 + 1e-12);
  }
}

// Alignment loss on Taylor importances, differentiated through the double
// backward pass, against central differences of the value-form loss.
TEST(AlignmentProperty, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpParams p = random_params(MlpSpec{2, {4}, network::Activation::kRelu}, 300 + trial);
    const LabeledBatch g0 = random_batch(10, 2, rng);
    const LabeledBatch g1 = random_batch(10, 2, rng);

    Tape t;
    const auto nodes = network::bind(p, t);
    const auto l0 = network::batch_classification_loss(p, nodes, g0.features, g0.labels, t);
    const auto l1 = network::batch_classification_loss(p, nodes, g1.features, g1.labels, t);
    const ImportanceNodes i0 = taylor_importance(t, p, nodes.weights, l0.loss);
    const ImportanceNodes i1 = taylor_importance(t, p, nodes.weights, l1.loss);
    const AlignmentNodes align = alignment_loss(t, i0, i1);
    const auto analytic = t.gradient_values(align.loss, nodes.flat());

    const auto fd = autodiff::finite_difference(
        [&](std::span<const double> flat) {
          MlpParams q = p;
          q.assign_flat(flat);
          return -similarity(taylor_importance(q, g0), taylor_importance(q, g1)).sum;
        },
        p.flat(), 1e-6);
    EXPECT_NEAR(t.value(align.loss),
                -similarity(taylor_importance(p, g0), taylor_importance(p, g1)).sum, 1e-12);
    EXPECT_LT(autodiff::relative_error(analytic, fd), 1e-3) << "trial " << trial;
  }
}

TEST(AlignmentProperty, ImportanceGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t first : {0u, 1u}) {
    Importance a, b;
    for (std::size_t width : {4u, 3u, 2u}) {
      a.layers.emplace_back(width);
      b.layers.emplace_back(width);
      for (double& v : a.layers.back()) v = unit(rng);
      for (double& v : b.layers.back()) v = unit(rng);
    }
    b.layers[2].assign(2, 0.0);
    const AlignmentGradient g = alignment_gradient(a, b, first);
    EXPECT_EQ(g.similarity.degenerate, 1u);
    EXPECT_NEAR(g.similarity.sum, similarity(a, b, first).sum, 0.0);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
      for (std::size_t i = 0; i < a.layers[l].size(); ++i) {
        for (int side = 0; side < 2; ++side) {
          if (side == 1 && l == 2) {
            // The all-zero layer sits on the degenerate convention, which is
            // discontinuous; its gradient is defined as zero.
            EXPECT_EQ(g.wrt1.layers[l][i], 0.0);
            continue;
          }
          Importance lo = side == 0 ? a : b, hi = lo;
          lo.layers[l][i] -= 1e-6;
          hi.layers[l][i] += 1e-6;
          const double fd =
              side == 0 ? -(similarity(hi, b, first).sum - similarity(lo, b, first).sum) / 2e-6
                        : -(similarity(a, hi, first).sum - similarity(a, lo, first).sum) / 2e-6;
          const double analytic = side == 0 ? g.wrt0.layers[l][i] : g.wrt1.layers[l][i];
          EXPECT_NEAR(analytic, fd, 1e-7) << "layer " << l << " index " << i;
        }
      }
    }
  }
}

TEST(PredictionGap, Examples) {
  const ScoreFunction linear = [](std::span<const double> w, std::span<const double> x) {
    return w[0] * x[0] + w[1] * x[1];
  };
  const std::vector<double> w = {1.0, 1.0};
  RowMatrix g0(1, 2), g1(1, 2);
  g0 << 1.0, 2.0;
  g1 << 1.0, 3.0;
  EXPECT_DOUBLE_EQ(prediction_gap(linear, w, 0, g0, g1), 1.0);
  EXPECT_EQ(prediction_gap(linear, w, 0, g0, g0), 0.0);

  // Weight 1 reads a feature that is zero in both groups.
  RowMatrix h0(1, 2), h1(1, 2);
  h0 << 2.0, 0.0;
  h1 << 2.0, 0.0;
  EXPECT_EQ(prediction_gap(linear, w, 1, h0, h1), 0.0);

  const MlpParams p = network::init(MlpSpec{2, {3}, network::Activation::kRelu}, 1);
  EXPECT_EQ(prediction_gap(p, 2, g0, g0), 0.0);
  EXPECT_GE(prediction_gap(p, 2, g0, g1), 0.0);
}

TEST(TopK, OverlapExamples) {
  const Importance a{{{9.0, 5.0, 1.0, 0.0}}};
  const Importance b{{{9.0, 0.0, 1.0, 5.0}}};
  EXPECT_NEAR(top_k_overlap(a, b, 2)[0], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(top_k_overlap(a, a, 2)[0], 1.0);
  const Importance c{{{0.0, 0.0, 7.0, 8.0}}};
  const Importance d{{{7.0, 8.0, 0.0, 0.0}}};
  EXPECT_EQ(top_k_overlap(c, d, 2)[0], 0.0);
  EXPECT_THROW(top_k_overlap(a, b, 5), std::invalid_argument);
  EXPECT_THROW(top_k_overlap(a, b, 0), std::invalid_argument);
}

TEST(TopK, TiesGoToLowerIndex) {
  const std::vector<double> v = {1.0, 3.0, 3.0, 3.0};
  EXPECT_EQ(top_k_indices(v, 2), (std::vector<std::size_t>{1, 2}));
}

TEST(ParityCsv, WritesRowsAndSummary) {
  std::mt19937_64 rng(2);
  const MlpParams p = network::init(MlpSpec{2, {2}, network::Activation::kRelu}, 3);
  const LabeledBatch g = random_batch(8, 2, rng);
  const ParityReport r = network_parity(p, g, random_batch(8, 2, rng));
  const auto path = std::filesystem::temp_directory_path() / "fairalign_parity.csv";
  write_parity_csv(r, path);
  std::ifstream in(path);
  std::stringstream text;
  text << in.rdbuf();
  std::filesystem::remove(path);
  const std::string s = text.str();
  EXPECT_EQ(s.rfind("layer,param_index,c0,c1,d_k\n", 0), 0u);
  EXPECT_NE(s.find("\nd_F,"), std::string::npos);
  EXPECT_NE(s.find("\nS_1,"), std::string::npos);
  EXPECT_NE(s.find("\nsimilarity_sum,"), std::string::npos);
  std::size_t rows = 0;
  std::istringstream lines(s);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line) && !line.empty()) ++rows;
  EXPECT_EQ(rows, p.num_weights());
}

}  // namespace
}  // namespace fairalign::rationale
