// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fairalign/finite_difference.hpp"
#include "fairalign/rationale.hpp"
#include "fairalign/stats.hpp"
#include "fairalign/training.hpp"

namespace fairalign::training {
namespace {

using network::MlpSpec;

LabeledBatch random_batch(std::size_t rows, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  LabeledBatch b;
  b.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      b.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = gauss(rng);
    }
    b.labels.push_back(coin(rng) ? 1 : 0);
  }
  return b;
}

std::vector<LabeledBatch> random_cells(std::size_t count, std::size_t rows,
                                       std::size_t dim, std::mt19937_64& rng) {
  std::vector<LabeledBatch> cells;
  for (std::size_t i = 0; i < count; ++i) cells.push_back(random_batch(rows, dim, rng));
  return cells;
}

LabeledBatch concat(const std::vector<LabeledBatch>& parts) {
  LabeledBatch out;
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.features.rows();
  out.features.resize(rows, parts.front().features.cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.features.middleRows(at, p.features.rows()) = p.features;
    at += p.features.rows();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

/// Max norm-wise relative error of the analytic gradient against central
/// differences.
double gradient_error(const MlpParams& params, const std::vector<LabeledBatch>& cells,
                      const TrainConfig& config, std::span<const double> counts) {
  const Objective objective = evaluate_objective(params, cells, config, counts);
  MlpParams probe = params;
  const auto loss = [&](std::span<const double> flat) {
    probe.assign_flat(flat);
    return evaluate_objective(probe, cells, config, counts).record.total;
  };
  const std::vector<double> point = params.flat();
  const auto fd = autodiff::finite_difference(loss, point, 1e-6);
  return autodiff::relative_error(objective.gradient, fd);
}

TrainConfig small_config(Method method, FairMetric metric, double lambda, double beta) {
  TrainConfig c;
  c.method = method;
  c.metric = metric;
  c.lambda = lambda;
  c.beta = beta;
  c.hidden_dims = {8};
  c.batch_size = 64;
  c.epochs = 3;
  c.seed = 11;
  return c;
}

TEST(StepsPerEpoch, Ceiling) {
  EXPECT_EQ(steps_per_epoch(1000, 1000), 1u);
  EXPECT_EQ(steps_per_epoch(1001, 1000), 2u);
  EXPECT_EQ(steps_per_epoch(48842, 1000), 49u);
  EXPECT_THROW(steps_per_epoch(10, 0), std::invalid_argument);
}

TEST(Sampling, SubgroupContracts) {
  const auto table = data::synth_biased(200, 4, 0.5, 0.3, 1);
  const auto a1 = data::subgroup(table, 1);
  std::mt19937_64 rng(5);
  const LabeledBatch big = sample_subgroup(table, 1, a1.size() * 3, rng);
  EXPECT_EQ(big.size(), a1.size() * 3);
  const Eigen::Index last = big.features.cols() - 1;
  for (Eigen::Index r = 0; r < big.features.rows(); ++r) {
    EXPECT_EQ(big.features(r, last), 1.0);
  }

  std::mt19937_64 first(9), second(9);
  const LabeledBatch x = sample_subgroup_labeled(table, 0, 1, 50, first);
  const LabeledBatch y = sample_subgroup_labeled(table, 0, 1, 50, second);
  EXPECT_EQ(x.features, y.features);
  EXPECT_EQ(x.labels, y.labels);
  for (Eigen::Index r = 0; r < x.features.rows(); ++r) {
    EXPECT_EQ(x.features(r, last), 0.0);
    EXPECT_EQ(x.labels[static_cast<std::size_t>(r)], 1);
  }
}

TEST(Sampling, EmptySubgroupThrows) {
  auto table = data::synth_biased(100, 3, 0.5, 0.3, 2);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    if (table.attributes[i] == 0) keep.push_back(i);
  }
  const auto only0 = data::select_rows(table, keep);
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_subgroup(only0, 1, 10, rng), std::invalid_argument);
  TrainConfig c = small_config(Method::kFairReg, FairMetric::kDp, 0.1, 0.0);
  EXPECT_THROW(train(only0, c), std::invalid_argument);
}

TEST(Sampling, BalancedDrawsHalfFromEachGroup) {
  // Heavily skewed table: the balanced sampler must still draw about B/2
  // rows of the rare attribute.
  auto table = data::synth_biased(2000, 3, 0.5, 0.3, 3);
  std::vector<std::size_t> keep;
  std::size_t rare = 0;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    if (table.attributes[i] == 0 || rare++ < 40) keep.push_back(i);
  }
  const auto skewed = data::select_rows(table, keep);
  const auto g0 = data::subgroup(skewed, 0);
  const auto g1 = data::subgroup(skewed, 1);
  std::mt19937_64 rng(4);
  const std::size_t batch = 1000, draws = 50;
  double ones = 0.0;
  for (std::size_t t = 0; t < draws; ++t) {
    const auto [rows, groups] = sample_balanced(g0, g1, batch, rng);
    ASSERT_EQ(rows.size(), batch);
    const Eigen::Index last = rows.features.cols() - 1;
    for (std::size_t i = 0; i < batch; ++i) {
      EXPECT_EQ(rows.features(static_cast<Eigen::Index>(i), last), groups[i]);
      ones += groups[i];
    }
  }
  // Five standard errors of a fair coin over 50000 draws.
  EXPECT_NEAR(ones / draws, batch / 2.0, 5.0 * std::sqrt(batch * draws * 0.25) / draws);
}

TEST(Layout, CellsAndPairs) {
  const auto dp = layout_for(FairMetric::kDp);
  ASSERT_EQ(dp.cells.size(), 2u);
  EXPECT_FALSE(dp.cells[0].y.has_value());
  EXPECT_EQ(dp.align_pairs.size(), 1u);
  const auto eo = layout_for(FairMetric::kEo);
  ASSERT_EQ(eo.cells.size(), 4u);
  EXPECT_EQ(eo.cells[metrics::cell_index(1, 0)], (SubgroupKey{1, 0}));
  EXPECT_EQ(eo.align_pairs.size(), 2u);
  EXPECT_EQ(layout_for(FairMetric::kEop).align_pairs.size(), 1u);
  EXPECT_EQ(layout_for(FairMetric::kPp).align_pairs.size(), 2u);
}

TEST(Config, ValidationAndNames) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda = -0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.align_last_layers = 4;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.align_last_layers = 3;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(first_aligned_layer(c, 3), 0u);
  c.align_last_layers = 1;
  EXPECT_EQ(first_aligned_layer(c, 3), 2u);

  for (Method m : {Method::kErm, Method::kOversample, Method::kFairReg, Method::kDrAlign}) {
    EXPECT_EQ(parse_method(to_string(m)), m);
  }
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::kSgd);
  EXPECT_EQ(parse_selection("best_ap"), Selection::kBestValidationAp);
  EXPECT_THROW(parse_method("mixup"), std::invalid_argument);
}

TEST(Objective, ZeroWeightsReduceToConcatenatedCrossEntropy) {
  std::mt19937_64 rng(21);
  const auto params = network::init(MlpSpec{3, {5}}, 2);
  for (FairMetric metric : {FairMetric::kDp, FairMetric::kEo}) {
    const std::size_t n = metric == FairMetric::kDp ? 2 : 4;
    const auto cells = random_cells(n, 12, 3, rng);
    const TrainConfig config = small_config(Method::kDrAlign, metric, 0.0, 0.0);
    const Objective paired = evaluate_objective(params, cells, config, {});
    const LabeledBatch all[] = {concat(cells)};
    const Objective pooled = evaluate_objective(params, all, config, {}, true);
    // Sum of per-cell means equals n times the pooled mean for equal cells.
    EXPECT_NEAR(paired.record.total, n * pooled.record.total, 1e-12);
    ASSERT_EQ(paired.gradient.size(), pooled.gradient.size());
    for (std::size_t k = 0; k < paired.gradient.size(); ++k) {
      EXPECT_NEAR(paired.gradient[k], n * pooled.gradient[k], 1e-12);
    }
  }
}

TEST(Objective, ZeroWeightStepMatchesConcatenatedStep) {
  std::mt19937_64 rng(22);
  const auto start = network::init(MlpSpec{3, {5}}, 3);
  const auto cells = random_cells(2, 10, 3, rng);
  TrainConfig config = small_config(Method::kFairReg, FairMetric::kDp, 0.0, 0.0);
  config.optimizer = OptimizerKind::kSgd;
  config.learning_rate = 0.05;

  MlpParams paired = start;
  Optimizer opt_a(config, paired.num_parameters());
  train_step_dp(paired, opt_a, cells[0], cells[1], config);

  // Plain cross-entropy on the concatenation; the sum convention doubles it.
  MlpParams pooled = start;
  TrainConfig doubled = config;
  doubled.learning_rate = 2.0 * config.learning_rate;
  Optimizer opt_b(doubled, pooled.num_parameters());
  const LabeledBatch all[] = {concat(cells)};
  opt_b.step(pooled, evaluate_objective(pooled, all, doubled, {}, true).gradient);

  const auto a = paired.flat(), b = pooled.flat();
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-14);
}

TEST(Objective, TapeAndValueEnginesAgree) {
  std::mt19937_64 rng(23);
  const auto params = network::init(MlpSpec{3, {4, 3}}, 4);
  for (FairMetric metric :
       {FairMetric::kDp, FairMetric::kEo, FairMetric::kEop, FairMetric::kPp}) {
    const std::size_t n = metric == FairMetric::kDp ? 2 : 4;
    const auto cells = random_cells(n, 9, 3, rng);
    const std::vector<double> counts = {120, 80, 90, 110};
    for (double beta : {0.0, 0.3}) {
      for (std::size_t suffix : {3u, 2u}) {
        TrainConfig config = small_config(Method::kDrAlign, metric, 0.7, beta);
        config.hidden_dims = {4, 3};
        config.align_last_layers = suffix;
        const Objective value = evaluate_objective(params, cells, config, counts);
        config.force_tape = true;
        const Objective tape = evaluate_objective(params, cells, config, counts);
        EXPECT_NEAR(value.record.total, tape.record.total, 1e-12);
        EXPECT_NEAR(value.record.fairness, tape.record.fairness, 1e-12);
        EXPECT_NEAR(value.record.alignment, tape.record.alignment, 1e-12);
        EXPECT_EQ(value.record.degenerate_layers, tape.record.degenerate_layers);
        EXPECT_LT(autodiff::relative_error(value.gradient, tape.gradient), 1e-10)
            << metrics::to_string(metric) << " beta " << beta << " suffix " << suffix;
      }
    }
  }
}

TEST(Objective, RejectsWrongCellCount) {
  std::mt19937_64 rng(24);
  const auto params = network::init(MlpSpec{2, {3}}, 1);
  const auto cells = random_cells(3, 4, 2, rng);
  const TrainConfig config = small_config(Method::kFairReg, FairMetric::kEo, 0.1, 0.0);
  EXPECT_THROW(evaluate_objective(params, cells, config, {}), std::invalid_argument);
}

TEST(ObjectiveProperty, GradientMatchesFiniteDifferences) {
  // 2-4-1 fixtures over five seeds, for every metric with both terms on.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const auto params = network::init(MlpSpec{2, {4}}, seed);
    const std::vector<double> counts = {30, 20, 25, 35};
    for (FairMetric metric :
         {FairMetric::kDp, FairMetric::kEo, FairMetric::kEop, FairMetric::kPp}) {
      const std::size_t n = metric == FairMetric::kDp ? 2 : 4;
      const auto cells = random_cells(n, 6, 2, rng);
      TrainConfig full = small_config(Method::kDrAlign, metric, 0.5, 0.3);
      EXPECT_LT(gradient_error(params, cells, full, counts), 1e-3)
          << "seed " << seed << " metric " << metrics::to_string(metric);
      full.force_tape = true;
      EXPECT_LT(gradient_error(params, cells, full, counts), 1e-3)
          << "seed " << seed << " metric " << metrics::to_string(metric);
      const TrainConfig fair = small_config(Method::kFairReg, metric, 0.5, 0.0);
      EXPECT_LT(gradient_error(params, cells, fair, counts), 1e-4)
          << "seed " << seed << " metric " << metrics::to_string(metric);
    }
  }
}

TEST(Objective, IdenticalBatchesGiveMaximalAlignment) {
  std::mt19937_64 rng(25);
  const auto params = network::init(MlpSpec{2, {4}}, 7);
  const LabeledBatch b = random_batch(8, 2, rng);
  const std::vector<LabeledBatch> dp_cells = {b, b};
  const TrainConfig dp = small_config(Method::kDrAlign, FairMetric::kDp, 0.0, 1.0);
  const Objective dp_obj = evaluate_objective(params, dp_cells, dp, {});
  EXPECT_NEAR(dp_obj.record.alignment, -2.0, 1e-12);
  EXPECT_LT(gradient_error(params, dp_cells, dp, {}), 1e-3);

  const std::vector<LabeledBatch> eo_cells = {b, b, b, b};
  const TrainConfig eo = small_config(Method::kDrAlign, FairMetric::kEo, 0.0, 1.0);
  const Objective eo_obj = evaluate_objective(params, eo_cells, eo, {});
  EXPECT_NEAR(eo_obj.record.alignment, -4.0, 1e-12);

  // Directional derivative of the alignment value along a random direction.
  MlpParams probe = params;
  const std::vector<double> point = params.flat();
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> dir(point.size());
  for (double& v : dir) v = gauss(rng);
  const auto along = [&](double h) {
    std::vector<double> p = point;
    for (std::size_t k = 0; k < p.size(); ++k) p[k] += h * dir[k];
    probe.assign_flat(p);
    return evaluate_objective(probe, dp_cells, dp, {}).record.total;
  };
  const double h = 1e-6;
  const double fd = (along(h) - along(-h)) / (2.0 * h);
  double analytic = 0.0;
  for (std::size_t k = 0; k < dir.size(); ++k) analytic += dp_obj.gradient[k] * dir[k];
  EXPECT_NEAR(analytic, fd, 1e-5 * std::max(1.0, std::abs(fd)));
}

TEST(Objective, ThreeLayerMaximaAreThreeAndSix) {
  std::mt19937_64 rng(26);
  const auto params = network::init(MlpSpec{4, {6, 5}}, 8);
  const LabeledBatch b = random_batch(10, 4, rng);
  const std::vector<LabeledBatch> dp_cells = {b, b};
  const std::vector<LabeledBatch> eo_cells = {b, b, b, b};
  EXPECT_NEAR(evaluate_objective(params, dp_cells,
                                 small_config(Method::kDrAlign, FairMetric::kDp, 0.2, 1.0), {})
                  .record.alignment,
              -3.0, 1e-9);
  EXPECT_NEAR(evaluate_objective(params, eo_cells,
                                 small_config(Method::kDrAlign, FairMetric::kEo, 0.2, 1.0), {})
                  .record.alignment,
              -6.0, 1e-9);
}

TEST(TrainStep, SmallStepDescends) {
  std::mt19937_64 rng(27);
  for (Method method : {Method::kFairReg, Method::kDrAlign}) {
    auto params = network::init(MlpSpec{2, {4}}, 9);
    const auto cells = random_cells(2, 16, 2, rng);
    TrainConfig config = small_config(method, FairMetric::kDp, 0.5, 0.1);
    config.optimizer = OptimizerKind::kSgd;
    config.learning_rate = 1e-3;
    const double before = evaluate_objective(params, cells, config, {}).record.total;
    Optimizer opt(config, params.num_parameters());
    const StepRecord r = train_step_dp(params, opt, cells[0], cells[1], config);
    EXPECT_DOUBLE_EQ(r.total, before);
    EXPECT_LT(evaluate_objective(params, cells, config, {}).record.total, before);
  }
}

TEST(TrainStep, MetricMismatchAndNonFiniteAbort) {
  std::mt19937_64 rng(28);
  auto params = network::init(MlpSpec{2, {4}}, 10);
  const auto cells = random_cells(4, 5, 2, rng);
  const TrainConfig eo = small_config(Method::kFairReg, FairMetric::kEo, 0.1, 0.0);
  Optimizer opt(eo, params.num_parameters());
  EXPECT_THROW(train_step_dp(params, opt, cells[0], cells[1], eo), std::invalid_argument);
  const std::array<LabeledBatch, 4> four = {cells[0], cells[1], cells[2], cells[3]};
  EXPECT_NO_THROW(train_step_eo(params, opt, four, eo));

  params.weights[0] = std::numeric_limits<double>::quiet_NaN();
  const auto before = params.flat();
  try {
    train_step_eo(params, opt, four, eo);
    FAIL() << "expected an abort";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
  const auto after = params.flat();
  for (std::size_t k = 1; k < after.size(); ++k) EXPECT_EQ(before[k], after[k]);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  TrainConfig config;
  config.learning_rate = 0.01;
  auto params = network::init(MlpSpec{2, {2}}, 1);
  const auto before = params.flat();
  std::vector<double> grad(before.size());
  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = (k % 2 ? -1.0 : 1.0) * (k + 1.0);
  Optimizer opt(config, grad.size());
  opt.step(params, grad);
  const auto after = params.flat();
  for (std::size_t k = 0; k < grad.size(); ++k) {
    EXPECT_NEAR(before[k] - after[k], (grad[k] > 0 ? 1.0 : -1.0) * 0.01, 1e-8);
  }
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Train, ErmOnSeparableDataReachesHighAp) {
  const auto table = data::synth_biased(2000, 5, 0.0, 0.0, 31);
  const auto parts = data::split_and_standardize(table, {0.8, 0.1, 0.1}, 31);
  TrainConfig config;
  config.hidden_dims = {16};
  config.batch_size = 100;
  config.epochs = 20;
  config.learning_rate = 1e-2;
  const auto result = train(parts.train, parts.validation, config);
  ASSERT_EQ(result.history.epochs.size(), 20u);
  EXPECT_GT(result.history.epochs.back().validation.ap, 0.95);
  EXPECT_EQ(result.history.selected_epoch, 20u);
}

TEST(Train, ReductionsAreTrajectoryExact) {
  const auto table = data::synth_biased(600, 4, 0.8, 0.5, 32);
  for (FairMetric metric : {FairMetric::kDp, FairMetric::kEo}) {
    TrainConfig fairreg = small_config(Method::kFairReg, metric, 0.4, 0.0);
    TrainConfig dralign = fairreg;
    dralign.method = Method::kDrAlign;
    const auto a = train(table, fairreg);
    const auto b = train(table, dralign);
    EXPECT_EQ(a.params.flat(), b.params.flat());

    fairreg.lambda = 0.0;
    TrainConfig erm = fairreg;
    erm.method = Method::kErm;
    erm.erm_sampling = Sampling::kPaired;
    EXPECT_EQ(train(table, fairreg).params.flat(), train(table, erm).params.flat());
  }
}

TEST(Train, DeterministicPerSeed) {
  const auto table = data::synth_biased(500, 4, 0.8, 0.5, 33);
  for (Method method :
       {Method::kErm, Method::kOversample, Method::kFairReg, Method::kDrAlign}) {
    TrainConfig config = small_config(method, FairMetric::kDp, 0.3, 0.03);
    config.epochs = 2;
    const auto a = train(table, config);
    const auto b = train(table, config);
    EXPECT_EQ(a.params.flat(), b.params.flat()) << to_string(method);
    config.seed += 1;
    EXPECT_NE(train(table, config).params.flat(), a.params.flat()) << to_string(method);
  }
}

TEST(Train, LoggedSimilarityWithinBounds) {
  const auto table = data::synth_biased(400, 4, 0.8, 0.5, 34);
  for (FairMetric metric : {FairMetric::kDp, FairMetric::kEo}) {
    TrainConfig config = small_config(Method::kDrAlign, metric, 0.2, 0.05);
    config.hidden_dims = {6, 5};
    const auto result = train(table, config);
    const double layers = 3.0 * (metric == FairMetric::kDp ? 1.0 : 2.0);
    for (const auto& e : result.history.epochs) {
      EXPECT_GE(-e.alignment, 0.0);
      EXPECT_LE(-e.alignment, layers + 1e-12);
      EXPECT_GE(e.validation.similarity_sum, 0.0);
      EXPECT_LE(e.validation.similarity_sum, layers + 1e-12);
    }
  }
}

TEST(Train, BestApSelectionAndHistoryCsv) {
  const auto table = data::synth_biased(400, 4, 0.5, 0.5, 35);
  TrainConfig config = small_config(Method::kErm, FairMetric::kDp, 0.0, 0.0);
  config.epochs = 4;
  config.selection = Selection::kBestValidationAp;
  const auto result = train(table, config);
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& e : result.history.epochs) {
    if (e.validation.ap > best) best = e.validation.ap, best_epoch = e.epoch;
  }
  EXPECT_EQ(result.history.selected_epoch, best_epoch);
  EXPECT_NEAR(evaluate(result.params, table, FairMetric::kDp).ap, best, 1e-15);

  const auto path = std::filesystem::temp_directory_path() / "fairalign_history_test.csv";
  result.history.write_csv(path);
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0, selected = 0;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("epoch,train_loss", 0), 0u);
  while (std::getline(in, line)) {
    ++lines;
    selected += line.back() == '1';
  }
  EXPECT_EQ(lines, 4u);
  EXPECT_EQ(selected, 1u);
  std::filesystem::remove(path);
}

TEST(TaylorFidelity, RanksMatchExactLossChanges) {
  const auto table = data::synth_biased(2000, 2, 0.8, 0.5, 36);
  TrainConfig config;
  config.hidden_dims = {8};
  config.batch_size = 100;
  config.epochs = 10;
  config.learning_rate = 1e-2;
  const auto result = train(table, config);
  for (int a = 0; a < 2; ++a) {
    const LabeledBatch group = data::subgroup(table, a).batch();
    const auto exact = rationale::exact_loss_changes(result.params, group);
    const auto approx = rationale::taylor_importance(result.params, group).flat();
    EXPECT_GE(stats::spearman(exact, approx), 0.8) << "group " << a;
  }
}

}  // namespace
}  // namespace fairalign::training
