// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "fairalign/rationale.hpp"
#include "fairalign/training.hpp"

namespace fairalign::training {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Sampling draws from its own stream so that initialization and sampling
// stay independent.
constexpr std::uint64_t kSamplingStream = 0x9E3779B97F4A7C15ULL;

template <typename F>
double or_nan(F&& f) {
  try {
    return f();
  } catch (const std::exception&) {
    return kNaN;
  }
}

LabeledBatch gather(const data::DatasetTable& table, std::span<const std::size_t> rows) {
  LabeledBatch b;
  b.features.resize(static_cast<Eigen::Index>(rows.size()), table.features.cols());
  b.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    b.features.row(static_cast<Eigen::Index>(r)) =
        table.features.row(static_cast<Eigen::Index>(rows[r]));
    b.labels.push_back(table.labels[rows[r]]);
  }
  return b;
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::kErm: return "erm";
    case Method::kOversample: return "oversample";
    case Method::kFairReg: return "fairreg";
    case Method::kDrAlign: return "dralign";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "erm") return Method::kErm;
  if (name == "oversample") return Method::kOversample;
  if (name == "fairreg") return Method::kFairReg;
  if (name == "dralign") return Method::kDrAlign;
  throw std::invalid_argument("unknown method: " + std::string(name));
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer: " + std::string(name));
}

std::string to_string(Selection selection) {
  return selection == Selection::kLastEpoch ? "last" : "best_ap";
}

Selection parse_selection(std::string_view name) {
  if (name == "last") return Selection::kLastEpoch;
  if (name == "best_ap") return Selection::kBestValidationAp;
  throw std::invalid_argument("unknown selection rule: " + std::string(name));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(lambda >= 0.0) || !(beta >= 0.0)) {
    throw std::invalid_argument("lambda and beta must be >= 0");
  }
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw std::invalid_argument("hidden sizes must be positive");
  }
  if (align_last_layers &&
      (*align_last_layers == 0 || *align_last_layers > hidden_dims.size() + 1)) {
    throw std::invalid_argument("align_last_layers must lie in [1, number of layers]");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
}

bool TrainConfig::uses_pairs() const {
  return method == Method::kFairReg || method == Method::kDrAlign ||
         (method == Method::kErm && erm_sampling == Sampling::kPaired);
}

bool TrainConfig::uses_tape() const {
  return force_tape;
}

CellLayout layout_for(FairMetric metric) {
  CellLayout layout;
  if (metric == FairMetric::kDp) {
    layout.cells = {SubgroupKey{0, std::nullopt}, SubgroupKey{1, std::nullopt}};
    layout.align_pairs = {{0, 1}};
    return layout;
  }
  for (int a = 0; a < 2; ++a) {
    for (int y = 0; y < 2; ++y) layout.cells.push_back(SubgroupKey{a, y});
  }
  const std::size_t c00 = metrics::cell_index(0, 0), c01 = metrics::cell_index(0, 1);
  const std::size_t c10 = metrics::cell_index(1, 0), c11 = metrics::cell_index(1, 1);
  if (metric == FairMetric::kEop) {
    layout.align_pairs = {{c01, c11}};
  } else {
    layout.align_pairs = {{c00, c10}, {c01, c11}};
  }
  return layout;
}

std::size_t first_aligned_layer(const TrainConfig& config, std::size_t num_layers) {
  if (!config.align_last_layers) return 0;
  return num_layers - std::min(*config.align_last_layers, num_layers);
}

LabeledBatch sample_view(const data::SubgroupView& view, std::size_t count,
                         std::mt19937_64& rng) {
  if (view.size() == 0) throw std::invalid_argument("cannot sample an empty subgroup");
  std::uniform_int_distribution<std::size_t> pick(0, view.size() - 1);
  std::vector<std::size_t> rows(count);
  for (auto& r : rows) r = view.indices[pick(rng)];
  return gather(*view.table, rows);
}

LabeledBatch sample_subgroup(const data::DatasetTable& table, int a, std::size_t count,
                             std::mt19937_64& rng) {
  return sample_view(data::subgroup(table, a), count, rng);
}

LabeledBatch sample_subgroup_labeled(const data::DatasetTable& table, int a, int y,
                                     std::size_t count, std::mt19937_64& rng) {
  return sample_view(data::subgroup(table, a, y), count, rng);
}

std::pair<LabeledBatch, std::vector<int>> sample_balanced(
    const data::SubgroupView& group0, const data::SubgroupView& group1,
    std::size_t count, std::mt19937_64& rng) {
  if (group0.size() == 0 || group1.size() == 0) {
    throw std::invalid_argument("cannot sample an empty subgroup");
  }
  std::bernoulli_distribution coin(0.5);
  std::vector<std::size_t> rows(count);
  std::vector<int> groups(count);
  for (std::size_t i = 0; i < count; ++i) {
    const data::SubgroupView& view = coin(rng) ? group1 : group0;
    std::uniform_int_distribution<std::size_t> pick(0, view.size() - 1);
    rows[i] = view.indices[pick(rng)];
    groups[i] = view.key.a;
  }
  return {gather(*group0.table, rows), std::move(groups)};
}

std::size_t steps_per_epoch(std::size_t data_size, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  return (data_size + batch_size - 1) / batch_size;
}

EvalMetrics evaluate(const MlpParams& params, const data::DatasetTable& table,
                     FairMetric metric) {
  EvalMetrics out;
  metrics::Predictions preds;
  const Eigen::VectorXd scores = network::predict(params, table.features);
  preds.scores.assign(scores.data(), scores.data() + scores.size());
  preds.labels = table.labels;
  preds.attributes = table.attributes;
  out.ap = or_nan([&] { return metrics::average_precision(preds.scores, preds.labels); });
  out.hard_dp = or_nan([&] { return metrics::hard_dp(preds); });
  out.soft_dp = or_nan([&] { return metrics::soft_dp(preds); });
  out.hard_eo = or_nan([&] { return metrics::hard_eo(preds); });
  out.soft_eo = or_nan([&] { return metrics::soft_eo(preds); });
  out.eop_ratio = or_nan([&] { return metrics::eop_ratio(preds); });
  out.pp_diff = or_nan([&] { return metrics::pp_diff(preds); });

  try {
    const CellLayout layout = layout_for(metric);
    std::vector<rationale::Importance> importance;
    for (const auto& key : layout.cells) {
      importance.push_back(rationale::taylor_importance(
          params, data::subgroup(table, key.a, key.y).batch()));
    }
    for (const auto& [i, j] : layout.align_pairs) {
      const auto s = rationale::similarity(importance[i], importance[j]);
      out.similarity.insert(out.similarity.end(), s.per_layer.begin(), s.per_layer.end());
      out.similarity_sum += s.sum;
    }
  } catch (const std::invalid_argument&) {
    out.similarity_sum = kNaN;
  }
  return out;
}

void RunHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,classification,fairness,alignment,val_ap,val_hard_dp,"
         "val_soft_dp,val_hard_eo,val_soft_eo,val_similarity_sum,degenerate_layers,selected\n";
  char line[400];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line,
                  "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%d\n",
                  e.epoch, e.train_loss, e.classification, e.fairness, e.alignment,
                  e.validation.ap, e.validation.hard_dp, e.validation.soft_dp,
                  e.validation.hard_eo, e.validation.soft_eo,
                  e.validation.similarity_sum, e.degenerate_layers,
                  e.epoch == selected_epoch ? 1 : 0);
    out << line;
  }
}

TrainResult train(const data::DatasetTable& train_set, const data::DatasetTable& validation,
                  const TrainConfig& config) {
  config.validate();
  train_set.validate();
  if (train_set.rows() == 0) throw std::invalid_argument("empty training set");

  const CellLayout layout = layout_for(config.metric);
  std::vector<data::SubgroupView> cells;
  if (config.uses_pairs()) {
    for (const auto& key : layout.cells) cells.push_back(data::subgroup(train_set, key.a, key.y));
  }
  std::vector<data::SubgroupView> groups;
  if (config.method == Method::kOversample) {
    groups = {data::subgroup(train_set, 0), data::subgroup(train_set, 1)};
  }
  const auto sizes = data::cell_sizes(train_set);
  const std::vector<double> counts(sizes.begin(), sizes.end());

  const network::MlpSpec spec{train_set.dim(), config.hidden_dims,
                              network::Activation::kRelu};
  TrainResult result{network::init(spec, config.seed), {}};
  MlpParams& params = result.params;
  Optimizer optimizer(config, params.num_parameters());
  std::mt19937_64 rng(config.seed ^ kSamplingStream);

  const std::size_t steps = steps_per_epoch(train_set.rows(), config.batch_size);
  std::vector<std::size_t> order(train_set.rows());
  MlpParams best = params;
  double best_ap = -std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    if (config.method == Method::kErm && !config.uses_pairs()) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
    }
    for (std::size_t step = 0; step < steps; ++step) {
      StepRecord r;
      if (config.uses_pairs()) {
        std::vector<LabeledBatch> batches;
        for (const auto& view : cells) batches.push_back(sample_view(view, config.batch_size, rng));
        r = train_step(params, optimizer, batches, config, counts);
      } else {
        LabeledBatch batch;
        if (config.method == Method::kOversample) {
          batch = sample_balanced(groups[0], groups[1], config.batch_size, rng).first;
        } else {
          const std::size_t begin = step * config.batch_size;
          const std::size_t end = std::min(begin + config.batch_size, order.size());
          batch = gather(train_set, std::span<const std::size_t>(order).subspan(begin, end - begin));
        }
        const LabeledBatch one[] = {std::move(batch)};
        const Objective objective = evaluate_objective(params, one, config, counts, true);
        r = objective.record;
        if (!std::isfinite(r.total)) {
          throw std::runtime_error("non-finite loss in epoch " + std::to_string(epoch));
        }
        optimizer.step(params, objective.gradient);
      }
      record.train_loss += r.total / static_cast<double>(steps);
      record.classification += r.classification / static_cast<double>(steps);
      record.fairness += r.fairness / static_cast<double>(steps);
      record.alignment += r.alignment / static_cast<double>(steps);
      record.degenerate_layers += r.degenerate_layers;
    }
    if (validation.rows() > 0) record.validation = evaluate(params, validation, config.metric);
    if (config.selection == Selection::kBestValidationAp && record.validation.ap > best_ap) {
      best_ap = record.validation.ap;
      best = params;
      result.history.selected_epoch = epoch;
    }
    result.history.epochs.push_back(std::move(record));
  }
  if (config.selection == Selection::kBestValidationAp && result.history.selected_epoch > 0) {
    params = best;
  } else {
    result.history.selected_epoch = config.epochs;
  }
  return result;
}

TrainResult train(const data::DatasetTable& train_set, const TrainConfig& config) {
  return train(train_set, train_set, config);
}

}  // namespace fairalign::training
