// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fairalign/data.hpp"
#include "fairalign/rationale.hpp"
#include "fairalign/training.hpp"

namespace fairalign::harness {

using training::FairMetric;
using training::Method;

struct SynthParams {
  std::size_t n = 10000;
  std::size_t dim = 8;
  double bias = 0.8;
  double noise = 0.5;
  std::uint64_t seed = 0;
};

/// Where rows come from. `kind` is "synth", "adult" (a directory holding
/// adult.data and adult.test) or "csv" (the canonical write_csv layout).
struct DatasetSource {
  std::string kind = "synth";
  std::filesystem::path path;
  SynthParams synth;
  std::array<double, 3> fractions = {0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;
};

/// Loads, splits and standardizes.
data::Split load_dataset(const DatasetSource& source);

struct ExperimentConfig {
  DatasetSource dataset;
  /// Shared settings; the grid overrides method, metric, lambda, beta,
  /// hidden_dims and seed.
  training::TrainConfig base;
  std::vector<Method> methods = {Method::kErm};
  std::vector<FairMetric> metrics = {FairMetric::kDp};
  std::vector<double> lambdas = {0.0};
  std::vector<double> betas = {0.0};
  /// When set, dralign uses beta = ratio * lambda and `betas` is ignored.
  std::optional<double> beta_ratio;
  std::vector<std::vector<std::size_t>> hidden = {{200, 200}};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::filesystem::path output_dir = "results";
  std::size_t workers = 1;
  /// Rows per subgroup for the exact parity analysis.
  std::size_t audit_cap = 512;
  bool save_models = true;

  /// Throws std::invalid_argument on empty grids or invalid grid points.
  void validate() const;
};

ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_json(const ExperimentConfig& config);

/// One training run of the grid.
struct RunSpec {
  std::string id;
  /// Index of the grid point the run belongs to; seeds share it.
  std::size_t point = 0;
  training::TrainConfig config;
};

/// Cartesian product in (method, metric, lambda, beta, hidden, seed) order.
/// Methods without a fairness term collapse to lambda = 0 and those without
/// alignment to beta = 0, so duplicated points are emitted once.
std::vector<RunSpec> expand_grid(const ExperimentConfig& config);

std::string hidden_label(const std::vector<std::size_t>& hidden);

struct ResultRow {
  std::string run_id;
  std::size_t point = 0;
  Method method = Method::kErm;
  FairMetric metric = FairMetric::kDp;
  double lambda = 0.0;
  double beta = 0.0;
  std::vector<std::size_t> hidden;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double ap = 0.0;
  double hard_dp = 0.0;
  double soft_dp = 0.0;
  double hard_eo = 0.0;
  double soft_eo = 0.0;
  double eop_ratio = 0.0;
  double pp_diff = 0.0;
  double d_f = 0.0;
  double d_f_l1 = 0.0;
  double similarity_sum = 0.0;
  std::vector<double> similarity;
  double seconds = 0.0;
};

/// Test-split metrics of a trained model; d_F uses at most `cap` rows per
/// attribute group.
ResultRow score_model(const network::MlpParams& params, const data::DatasetTable& test,
                      FairMetric metric, std::size_t cap);

/// Trains every grid run on `workers` threads and writes results.csv,
/// timing.csv, summary.csv, tradeoff.csv and per-run history, model, metric
/// and parity files. Metrics are measured on the test split and d_F on the
/// training subgroups. A failing run keeps its row with ok = false.
std::vector<ResultRow> run(const ExperimentConfig& config);
/// Same, on an already split dataset.
std::vector<ResultRow> run(const ExperimentConfig& config, const data::Split& split);

/// Run coordinates and test metrics; wall-clock time lives in timing.csv so
/// that this file is reproducible.
void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);

struct SummaryRow {
  std::size_t point = 0;
  Method method = Method::kErm;
  FairMetric metric = FairMetric::kDp;
  double lambda = 0.0;
  double beta = 0.0;
  std::vector<std::size_t> hidden;
  std::size_t runs = 0;
  std::size_t failed = 0;
  double ap_mean = 0.0, ap_std = 0.0;
  double hard_dp_mean = 0.0, hard_dp_std = 0.0;
  double hard_eo_mean = 0.0, hard_eo_std = 0.0;
  double d_f_mean = 0.0, d_f_std = 0.0;
  double similarity_mean = 0.0, similarity_std = 0.0;
  /// Negated fairness value of the row's metric: -hard_dp, -hard_eo,
  /// -|1 - eop_ratio| or -|pp_diff|.
  double neg_fairness_mean = 0.0, neg_fairness_std = 0.0;
};

/// Successful rows grouped by grid point, sorted by (method, metric, lambda,
/// beta, hidden). Standard deviations divide by n. Throws on no rows.
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

/// Every summary statistic.
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);
/// Mean and std of AP and of the negated fairness metric per grid point.
void emit_tradeoff_table(const std::vector<ResultRow>& rows, const std::filesystem::path& path);

// --- Audit ------------------------------------------------------------------------

struct AuditOptions {
  std::size_t cap = 512;
  std::size_t top_k = 10;
};

struct AuditReport {
  rationale::ParityReport parity;
  rationale::Importance importance0;
  rationale::Importance importance1;
  /// Per-layer Jaccard overlap of the top-k Taylor sets; k is clipped to the
  /// layer width.
  std::vector<double> top_k_overlap;
  /// Flat weight indices of the top-k exact parity scores, largest first,
  /// and their prediction gaps.
  std::vector<std::size_t> top_parameters;
  std::vector<double> prediction_gaps;
};

/// Parity analysis of a trained model on the attribute groups of `table`,
/// each truncated to its first `cap` rows.
AuditReport audit(const network::MlpParams& params, const data::DatasetTable& table,
                  const AuditOptions& options);
/// Loads the model, audits it and writes parity_<stem>.csv,
/// importance_<stem>.csv, topk_<stem>.csv and gaps_<stem>.csv into
/// `output_dir`.
AuditReport audit(const std::filesystem::path& model_path, const data::DatasetTable& table,
                  const AuditOptions& options, const std::filesystem::path& output_dir);

}  // namespace fairalign::harness
