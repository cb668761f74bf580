// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment runner. Trains a grid from a JSON config (flags override single
// fields) or audits a saved model.
//
//   fairalign --dataset synth --method fairreg --lambda 0.2 0.4 --out results
//   fairalign --dataset /data/adult --audit results/model_x.json --topk 20

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fairalign/harness.hpp"

namespace fs = std::filesystem;
using namespace fairalign;

namespace {

harness::DatasetSource dataset_from_flag(const std::string& value,
                                         harness::DatasetSource source) {
  if (value == "synth") {
    source.kind = "synth";
  } else if (fs::is_directory(value)) {
    source.kind = "adult";
    source.path = value;
  } else {
    source.kind = "csv";
    source.path = value;
  }
  return source;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware training and decision-rationale analysis"};
  std::string config_path, dataset, audit_path, out_dir;
  std::vector<std::string> methods, metric_names;
  std::vector<double> lambdas, betas;
  std::vector<std::uint64_t> seeds;
  std::size_t epochs = 0, workers = 0, top_k = 10, cap = 0;

  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--dataset", dataset,
                 "synth, a directory with adult.data/adult.test, or a canonical CSV");
  app.add_option("--method", methods, "erm, oversample, fairreg or dralign");
  app.add_option("--metric", metric_names, "dp, eo, eop or pp");
  app.add_option("--lambda", lambdas, "fairness weights");
  app.add_option("--beta", betas, "alignment weights");
  app.add_option("--epochs", epochs, "training epochs");
  app.add_option("--seed", seeds, "training seeds");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--workers", workers, "concurrent runs");
  app.add_option("--audit", audit_path, "audit this saved model instead of training")
      ->check(CLI::ExistingFile);
  app.add_option("--topk", top_k, "parameters per layer in the audit top-k report");
  app.add_option("--cap", cap, "rows per subgroup for exact parity");
  CLI11_PARSE(app, argc, argv);

  try {
    harness::ExperimentConfig config =
        config_path.empty() ? harness::ExperimentConfig{} : harness::load_config(config_path);
    if (!dataset.empty()) config.dataset = dataset_from_flag(dataset, config.dataset);
    if (!methods.empty()) {
      config.methods.clear();
      for (const auto& m : methods) config.methods.push_back(training::parse_method(m));
    }
    if (!metric_names.empty()) {
      config.metrics.clear();
      for (const auto& m : metric_names) config.metrics.push_back(metrics::parse_metric(m));
    }
    if (!lambdas.empty()) config.lambdas = lambdas;
    if (!betas.empty()) {
      config.betas = betas;
      config.beta_ratio.reset();
    }
    if (epochs) config.base.epochs = epochs;
    if (!seeds.empty()) config.seeds = seeds;
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (workers) config.workers = workers;
    if (cap) config.audit_cap = cap;

    if (!audit_path.empty()) {
      const data::Split split = harness::load_dataset(config.dataset);
      const auto report = harness::audit(audit_path, split.test,
                                         harness::AuditOptions{config.audit_cap, top_k},
                                         config.output_dir);
      std::printf("d_F %.6g  d_F(l1) %.6g  similarity sum %.6g  rows %zu/%zu\n",
                  report.parity.d_f, report.parity.d_f_l1, report.parity.taylor.sum,
                  report.parity.rows0, report.parity.rows1);
      return 0;
    }

    config.validate();
    const auto rows = harness::run(config);
    std::size_t failed = 0;
    for (const auto& r : rows) {
      if (!r.ok) ++failed;
    }
    for (const auto& s : harness::summarize(rows)) {
      std::printf("%-10s %-3s lambda=%-5g beta=%-6g hidden=%-8s AP %.4f+-%.4f  "
                  "DP %.4f  EO %.4f  sim %.3f\n",
                  training::to_string(s.method).c_str(), metrics::to_string(s.metric).c_str(),
                  s.lambda, s.beta, harness::hidden_label(s.hidden).c_str(), s.ap_mean,
                  s.ap_std, s.hard_dp_mean, s.hard_eo_mean, s.similarity_mean);
    }
    std::printf("%zu runs, %zu failed; outputs in %s\n", rows.size(), failed,
                config.output_dir.string().c_str());
    return failed ? 2 : 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
