// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "fairalign/harness.hpp"
#include "fairalign/stats.hpp"
#include "json.hpp"

namespace fairalign::harness {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

double negated_fairness(const ResultRow& r) {
  switch (r.metric) {
    case FairMetric::kDp: return -r.hard_dp;
    case FairMetric::kEo: return -r.hard_eo;
    case FairMetric::kEop: return -std::abs(1.0 - r.eop_ratio);
    case FairMetric::kPp: return -std::abs(r.pp_diff);
  }
  return 0.0;
}

void append_cap(const std::filesystem::path& path, std::size_t cap) {
  std::ofstream out(path, std::ios::app);
  out << "cap," << cap << '\n';
}

void write_run_metrics(const ResultRow& r, const std::filesystem::path& path) {
  nlohmann::json doc = {{"run_id", r.run_id},
                        {"ap", r.ap},
                        {"hard_dp", r.hard_dp},
                        {"soft_dp", r.soft_dp},
                        {"hard_eo", r.hard_eo},
                        {"soft_eo", r.soft_eo},
                        {"eop_ratio", r.eop_ratio},
                        {"pp_diff", r.pp_diff},
                        {"d_f", r.d_f},
                        {"d_f_l1", r.d_f_l1},
                        {"similarity_sum", r.similarity_sum},
                        {"similarity", r.similarity}};
  // JSON has no NaN; undefined metrics become null.
  for (auto& [key, value] : doc.items()) {
    if (value.is_number_float() && !std::isfinite(value.get<double>())) value = nullptr;
  }
  open_out(path) << doc.dump(2) << '\n';
}

// Metrics come from `test`; the parity analysis runs on `parity_rows`.
ResultRow score(const network::MlpParams& params, const data::DatasetTable& test,
                const data::DatasetTable& parity_rows, FairMetric metric, std::size_t cap,
                rationale::ParityReport& parity) {
  ResultRow row;
  row.metric = metric;
  const training::EvalMetrics m = training::evaluate(params, test, metric);
  row.ap = m.ap;
  row.hard_dp = m.hard_dp;
  row.soft_dp = m.soft_dp;
  row.hard_eo = m.hard_eo;
  row.soft_eo = m.soft_eo;
  row.eop_ratio = m.eop_ratio;
  row.pp_diff = m.pp_diff;
  row.similarity_sum = m.similarity_sum;
  row.similarity = m.similarity;
  const auto g0 = data::head(data::subgroup(parity_rows, 0), cap).batch();
  const auto g1 = data::head(data::subgroup(parity_rows, 1), cap).batch();
  parity = rationale::network_parity(params, g0, g1);
  row.d_f = parity.d_f;
  row.d_f_l1 = parity.d_f_l1;
  row.ok = true;
  return row;
}

ResultRow coordinates(const RunSpec& spec) {
  ResultRow row;
  row.run_id = spec.id;
  row.point = spec.point;
  row.method = spec.config.method;
  row.metric = spec.config.metric;
  row.lambda = spec.config.lambda;
  row.beta = spec.config.beta;
  row.hidden = spec.config.hidden_dims;
  row.seed = spec.config.seed;
  return row;
}

ResultRow execute(const RunSpec& spec, const data::Split& split,
                  const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  ResultRow row = coordinates(spec);
  try {
    const training::TrainResult trained =
        training::train(split.train, split.validation, spec.config);
    const data::DatasetTable& test = split.test.rows() > 0 ? split.test : split.validation;
    rationale::ParityReport parity;
    ResultRow scored =
        score(trained.params, test, split.train, spec.config.metric, config.audit_cap, parity);
    scored.run_id = row.run_id;
    scored.point = row.point;
    scored.method = row.method;
    scored.metric = row.metric;
    scored.lambda = row.lambda;
    scored.beta = row.beta;
    scored.hidden = row.hidden;
    scored.seed = row.seed;
    row = std::move(scored);
    row.ok = true;

    const auto& dir = config.output_dir;
    trained.history.write_csv(dir / ("history_" + spec.id + ".csv"));
    if (config.save_models) {
      network::save_model(trained.params, dir / ("model_" + spec.id + ".json"));
    }
    write_run_metrics(row, dir / ("metrics_" + spec.id + ".json"));
    const auto parity_path = dir / ("parity_" + spec.id + ".csv");
    rationale::write_parity_csv(parity, parity_path);
    append_cap(parity_path, config.audit_cap);
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
  }
  row.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

template <typename F>
std::pair<double, double> mean_std(const std::vector<const ResultRow*>& rows, F&& field) {
  std::vector<double> v;
  for (const ResultRow* r : rows) v.push_back(field(*r));
  if (v.empty()) return {std::nan(""), std::nan("")};
  return {stats::mean(v), stats::population_std(v)};
}

}  // namespace

ResultRow score_model(const network::MlpParams& params, const data::DatasetTable& test,
                      FairMetric metric, std::size_t cap) {
  rationale::ParityReport parity;
  return score(params, test, test, metric, cap, parity);
}

std::vector<ResultRow> run(const ExperimentConfig& config) {
  config.validate();
  return run(config, load_dataset(config.dataset));
}

std::vector<ResultRow> run(const ExperimentConfig& config, const data::Split& split) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);
  const std::vector<RunSpec> specs = expand_grid(config);
  std::vector<ResultRow> rows(specs.size());

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      rows[i] = execute(specs[i], split, config);
      if (!rows[i].ok) {
        std::lock_guard lock(log_mutex);
        std::fprintf(stderr, "run %s failed: %s\n", rows[i].run_id.c_str(),
                     rows[i].error.c_str());
      }
    }
  };
  const std::size_t threads = std::min(config.workers, specs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  const auto& dir = config.output_dir;
  write_results_csv(rows, dir / "results.csv");
  auto timing = open_out(dir / "timing.csv");
  timing << "run_id,seconds\n";
  for (const auto& r : rows) timing << r.run_id << ',' << num(r.seconds) << '\n';
  write_summary_csv(summarize(rows), dir / "summary.csv");
  emit_tradeoff_table(rows, dir / "tradeoff.csv");
  open_out(dir / "config.json") << to_json(config) << '\n';
  return rows;
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "run_id,point,method,metric,lambda,beta,hidden,seed,status,ap,hard_dp,soft_dp,"
         "hard_eo,soft_eo,eop_ratio,pp_diff,d_f,d_f_l1,similarity_sum,similarity,error\n";
  for (const auto& r : rows) {
    std::string layers;
    for (std::size_t l = 0; l < r.similarity.size(); ++l) {
      if (l) layers += ';';
      layers += num(r.similarity[l]);
    }
    std::string error = r.error;
    std::replace(error.begin(), error.end(), '"', '\'');
    out << r.run_id << ',' << r.point << ',' << training::to_string(r.method) << ','
        << metrics::to_string(r.metric) << ',' << num(r.lambda) << ',' << num(r.beta) << ','
        << hidden_label(r.hidden) << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ','
        << num(r.ap) << ',' << num(r.hard_dp) << ',' << num(r.soft_dp) << ','
        << num(r.hard_eo) << ',' << num(r.soft_eo) << ',' << num(r.eop_ratio) << ','
        << num(r.pp_diff) << ',' << num(r.d_f) << ',' << num(r.d_f_l1) << ','
        << num(r.similarity_sum) << ',' << layers << ",\"" << error << "\"\n";
  }
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("summarize: no result rows");
  std::map<std::size_t, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) groups[r.point].push_back(&r);

  std::vector<SummaryRow> out;
  for (const auto& [point, members] : groups) {
    SummaryRow s;
    const ResultRow& first = *members.front();
    s.point = point;
    s.method = first.method;
    s.metric = first.metric;
    s.lambda = first.lambda;
    s.beta = first.beta;
    s.hidden = first.hidden;
    std::vector<const ResultRow*> ok;
    for (const ResultRow* r : members) {
      if (r->ok) {
        ok.push_back(r);
      } else {
        ++s.failed;
      }
    }
    s.runs = ok.size();
    std::tie(s.ap_mean, s.ap_std) = mean_std(ok, [](const ResultRow& r) { return r.ap; });
    std::tie(s.hard_dp_mean, s.hard_dp_std) =
        mean_std(ok, [](const ResultRow& r) { return r.hard_dp; });
    std::tie(s.hard_eo_mean, s.hard_eo_std) =
        mean_std(ok, [](const ResultRow& r) { return r.hard_eo; });
    std::tie(s.d_f_mean, s.d_f_std) = mean_std(ok, [](const ResultRow& r) { return r.d_f; });
    std::tie(s.similarity_mean, s.similarity_std) =
        mean_std(ok, [](const ResultRow& r) { return r.similarity_sum; });
    std::tie(s.neg_fairness_mean, s.neg_fairness_std) = mean_std(ok, negated_fairness);
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const SummaryRow& a, const SummaryRow& b) {
    return std::tie(a.method, a.metric, a.lambda, a.beta, a.hidden) <
           std::tie(b.method, b.metric, b.lambda, b.beta, b.hidden);
  });
  return out;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "point,method,metric,lambda,beta,hidden,runs,failed,ap_mean,ap_std_population,"
         "hard_dp_mean,hard_dp_std_population,hard_eo_mean,hard_eo_std_population,"
         "d_f_mean,d_f_std_population,similarity_sum_mean,similarity_sum_std_population,"
         "neg_fairness_mean,neg_fairness_std_population\n";
  for (const auto& s : rows) {
    out << s.point << ',' << training::to_string(s.method) << ','
        << metrics::to_string(s.metric) << ',' << num(s.lambda) << ',' << num(s.beta) << ','
        << hidden_label(s.hidden) << ',' << s.runs << ',' << s.failed << ','
        << num(s.ap_mean) << ',' << num(s.ap_std) << ',' << num(s.hard_dp_mean) << ','
        << num(s.hard_dp_std) << ',' << num(s.hard_eo_mean) << ',' << num(s.hard_eo_std)
        << ',' << num(s.d_f_mean) << ',' << num(s.d_f_std) << ','
        << num(s.similarity_mean) << ',' << num(s.similarity_std) << ','
        << num(s.neg_fairness_mean) << ',' << num(s.neg_fairness_std) << '\n';
  }
}

void emit_tradeoff_table(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  const auto summary = summarize(rows);
  auto out = open_out(path);
  out << "method,metric,lambda,beta,hidden,runs,ap_mean,ap_std_population,"
         "neg_fairness_mean,neg_fairness_std_population\n";
  for (const auto& s : summary) {
    out << training::to_string(s.method) << ',' << metrics::to_string(s.metric) << ','
        << num(s.lambda) << ',' << num(s.beta) << ',' << hidden_label(s.hidden) << ','
        << s.runs << ',' << num(s.ap_mean) << ',' << num(s.ap_std) << ','
        << num(s.neg_fairness_mean) << ',' << num(s.neg_fairness_std) << '\n';
  }
}

}  // namespace fairalign::harness
