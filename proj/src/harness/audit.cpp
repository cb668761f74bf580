// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "fairalign/harness.hpp"

namespace fairalign::harness {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

AuditReport audit(const network::MlpParams& params, const data::DatasetTable& table,
                  const AuditOptions& options) {
  if (options.cap == 0 || options.top_k == 0) {
    throw std::invalid_argument("audit: cap and top_k must be positive");
  }
  if (table.dim() != params.spec.input_dim) {
    throw std::invalid_argument("audit: dataset has " + std::to_string(table.dim()) +
                                " features, model expects " +
                                std::to_string(params.spec.input_dim));
  }
  const LabeledBatch g0 = data::head(data::subgroup(table, 0), options.cap).batch();
  const LabeledBatch g1 = data::head(data::subgroup(table, 1), options.cap).batch();

  AuditReport report;
  report.parity = rationale::network_parity(params, g0, g1);
  report.importance0 = rationale::taylor_importance(params, g0);
  report.importance1 = rationale::taylor_importance(params, g1);
  for (std::size_t l = 0; l < report.importance0.layers.size(); ++l) {
    const rationale::Importance a{{report.importance0.layers[l]}};
    const rationale::Importance b{{report.importance1.layers[l]}};
    const std::size_t k = std::min(options.top_k, a.layers[0].size());
    report.top_k_overlap.push_back(rationale::top_k_overlap(a, b, k)[0]);
  }
  report.top_parameters = rationale::top_k_indices(
      report.parity.d, std::min(options.top_k, report.parity.d.size()));
  const auto& d = report.parity.d;
  std::stable_sort(report.top_parameters.begin(), report.top_parameters.end(),
                   [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
  for (std::size_t k : report.top_parameters) {
    report.prediction_gaps.push_back(
        rationale::prediction_gap(params, k, g0.features, g1.features));
  }
  return report;
}

AuditReport audit(const std::filesystem::path& model_path, const data::DatasetTable& table,
                  const AuditOptions& options, const std::filesystem::path& output_dir) {
  const network::MlpParams params = network::load_model(model_path);
  AuditReport report = audit(params, table, options);
  std::filesystem::create_directories(output_dir);
  const std::string stem = model_path.stem().string();

  const auto parity_path = output_dir / ("parity_" + stem + ".csv");
  rationale::write_parity_csv(report.parity, parity_path);
  {
    std::ofstream out(parity_path, std::ios::app);
    out << "cap," << options.cap << '\n';
  }

  auto importance = open_out(output_dir / ("importance_" + stem + ".csv"));
  importance << "layer,index,param_index,taylor_a0,taylor_a1\n";
  for (std::size_t l = 0; l < report.importance0.layers.size(); ++l) {
    const std::size_t begin = params.layers[l].begin;
    for (std::size_t i = 0; i < report.importance0.layers[l].size(); ++i) {
      importance << l << ',' << i << ',' << begin + i << ','
                 << num(report.importance0.layers[l][i]) << ','
                 << num(report.importance1.layers[l][i]) << '\n';
    }
  }

  auto topk = open_out(output_dir / ("topk_" + stem + ".csv"));
  topk << "layer,k,jaccard,cosine\n";
  for (std::size_t l = 0; l < report.top_k_overlap.size(); ++l) {
    topk << l << ',' << std::min(options.top_k, report.importance0.layers[l].size()) << ','
         << num(report.top_k_overlap[l]) << ',' << num(report.parity.taylor.per_layer[l])
         << '\n';
  }

  auto gaps = open_out(output_dir / ("gaps_" + stem + ".csv"));
  gaps << "rank,param_index,layer,d_k,prediction_gap\n";
  for (std::size_t r = 0; r < report.top_parameters.size(); ++r) {
    const std::size_t k = report.top_parameters[r];
    gaps << r + 1 << ',' << k << ',' << params.layer_of(k) << ',' << num(report.parity.d[k])
         << ',' << num(report.prediction_gaps[r]) << '\n';
  }
  return report;
}

}  // namespace fairalign::harness
