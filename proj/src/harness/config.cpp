// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "fairalign/harness.hpp"
#include "json.hpp"

namespace fairalign::harness {
namespace {

using nlohmann::json;

void reject_unknown(const json& object, std::initializer_list<const char*> known,
                    const std::string& where) {
  if (!object.is_object()) throw std::invalid_argument(where + " must be an object");
  for (const auto& [key, value] : object.items()) {
    bool found = false;
    for (const char* k : known) found = found || key == k;
    if (!found) throw std::invalid_argument("unknown key in " + where + ": " + key);
  }
}

template <typename T>
void read(const json& object, const char* key, T& out) {
  if (object.contains(key)) out = object.at(key).get<T>();
}

void read_train(const json& j, training::TrainConfig& c) {
  reject_unknown(j,
                 {"learning_rate", "epochs", "batch_size", "optimizer", "adam_beta1",
                  "adam_beta2", "adam_epsilon", "align_last_layers", "erm_sampling",
                  "selection", "force_tape"},
                 "train");
  read(j, "learning_rate", c.learning_rate);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "adam_beta1", c.adam_beta1);
  read(j, "adam_beta2", c.adam_beta2);
  read(j, "adam_epsilon", c.adam_epsilon);
  read(j, "force_tape", c.force_tape);
  if (j.contains("optimizer")) {
    c.optimizer = training::parse_optimizer(j.at("optimizer").get<std::string>());
  }
  if (j.contains("selection")) {
    c.selection = training::parse_selection(j.at("selection").get<std::string>());
  }
  if (j.contains("erm_sampling")) {
    const auto s = j.at("erm_sampling").get<std::string>();
    if (s == "pooled") {
      c.erm_sampling = training::Sampling::kPooled;
    } else if (s == "paired") {
      c.erm_sampling = training::Sampling::kPaired;
    } else {
      throw std::invalid_argument("unknown erm_sampling: " + s);
    }
  }
  if (j.contains("align_last_layers") && !j.at("align_last_layers").is_null()) {
    c.align_last_layers = j.at("align_last_layers").get<std::size_t>();
  }
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

data::Split load_dataset(const DatasetSource& source) {
  data::DatasetTable table;
  if (source.kind == "synth") {
    const SynthParams& s = source.synth;
    table = data::synth_biased(s.n, s.dim, s.bias, s.noise, s.seed);
  } else if (source.kind == "adult") {
    table = data::load_adult(source.path);
  } else if (source.kind == "csv") {
    table = data::load_csv(source.path, data::canonical_schema());
  } else {
    throw std::invalid_argument("unknown dataset kind: " + source.kind);
  }
  return data::split_and_standardize(table, source.fractions, source.split_seed);
}

void ExperimentConfig::validate() const {
  if (methods.empty() || metrics.empty() || lambdas.empty() || betas.empty() ||
      hidden.empty() || seeds.empty()) {
    throw std::invalid_argument("experiment grids must be non-empty");
  }
  if (workers == 0) throw std::invalid_argument("workers must be positive");
  if (audit_cap == 0) throw std::invalid_argument("audit_cap must be positive");
  for (double v : lambdas) {
    if (!(v >= 0.0)) throw std::invalid_argument("lambdas must be >= 0");
  }
  for (double v : betas) {
    if (!(v >= 0.0)) throw std::invalid_argument("betas must be >= 0");
  }
  if (beta_ratio && !(*beta_ratio >= 0.0)) {
    throw std::invalid_argument("beta_ratio must be >= 0");
  }
  for (const auto& spec : expand_grid(*this)) spec.config.validate();
}

std::string hidden_label(const std::vector<std::size_t>& hidden) {
  std::string out;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(hidden[i]);
  }
  return out.empty() ? "linear" : out;
}

std::vector<RunSpec> expand_grid(const ExperimentConfig& config) {
  std::vector<RunSpec> runs;
  std::set<std::tuple<int, int, double, double, std::vector<std::size_t>>> seen;
  std::size_t point = 0;
  for (Method method : config.methods) {
    const bool fair = method == Method::kFairReg || method == Method::kDrAlign;
    for (FairMetric metric : config.metrics) {
      for (double lambda_value : config.lambdas) {
        const double lambda = fair ? lambda_value : 0.0;
        std::vector<double> betas = {0.0};
        if (method == Method::kDrAlign) {
          betas = config.beta_ratio ? std::vector<double>{*config.beta_ratio * lambda}
                                    : config.betas;
        }
        for (double beta : betas) {
          for (const auto& hidden : config.hidden) {
            const auto key = std::make_tuple(static_cast<int>(method),
                                             static_cast<int>(metric), lambda, beta, hidden);
            if (!seen.insert(key).second) continue;
            for (std::uint64_t seed : config.seeds) {
              RunSpec spec;
              spec.point = point;
              spec.config = config.base;
              spec.config.method = method;
              spec.config.metric = metric;
              spec.config.lambda = lambda;
              spec.config.beta = beta;
              spec.config.hidden_dims = hidden;
              spec.config.seed = seed;
              spec.id = training::to_string(method) + "-" + metrics::to_string(metric) +
                        "-l" + format_number(lambda) + "-b" + format_number(beta) + "-h" +
                        hidden_label(hidden) + "-s" + std::to_string(seed);
              runs.push_back(std::move(spec));
            }
            ++point;
          }
        }
      }
    }
  }
  return runs;
}

ExperimentConfig parse_config(std::string_view json_text) {
  const json doc = json::parse(json_text);
  reject_unknown(doc, {"dataset", "train", "grid", "output_dir", "workers", "audit_cap",
                       "save_models"},
                 "config");
  ExperimentConfig c;
  if (doc.contains("dataset")) {
    const json& d = doc.at("dataset");
    reject_unknown(d, {"kind", "path", "synth", "fractions", "split_seed"}, "dataset");
    read(d, "kind", c.dataset.kind);
    if (d.contains("path")) c.dataset.path = d.at("path").get<std::string>();
    read(d, "fractions", c.dataset.fractions);
    read(d, "split_seed", c.dataset.split_seed);
    if (d.contains("synth")) {
      const json& s = d.at("synth");
      reject_unknown(s, {"n", "dim", "bias", "noise", "seed"}, "dataset.synth");
      read(s, "n", c.dataset.synth.n);
      read(s, "dim", c.dataset.synth.dim);
      read(s, "bias", c.dataset.synth.bias);
      read(s, "noise", c.dataset.synth.noise);
      read(s, "seed", c.dataset.synth.seed);
    }
  }
  if (doc.contains("train")) read_train(doc.at("train"), c.base);
  if (doc.contains("grid")) {
    const json& g = doc.at("grid");
    reject_unknown(g, {"methods", "metrics", "lambdas", "betas", "beta_ratio", "hidden",
                       "seeds"},
                   "grid");
    if (g.contains("methods")) {
      c.methods.clear();
      for (const auto& m : g.at("methods")) {
        c.methods.push_back(training::parse_method(m.get<std::string>()));
      }
    }
    if (g.contains("metrics")) {
      c.metrics.clear();
      for (const auto& m : g.at("metrics")) {
        c.metrics.push_back(metrics::parse_metric(m.get<std::string>()));
      }
    }
    read(g, "lambdas", c.lambdas);
    read(g, "betas", c.betas);
    read(g, "hidden", c.hidden);
    read(g, "seeds", c.seeds);
    if (g.contains("beta_ratio") && !g.at("beta_ratio").is_null()) {
      c.beta_ratio = g.at("beta_ratio").get<double>();
    }
  }
  if (doc.contains("output_dir")) c.output_dir = doc.at("output_dir").get<std::string>();
  read(doc, "workers", c.workers);
  read(doc, "audit_cap", c.audit_cap);
  read(doc, "save_models", c.save_models);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string to_json(const ExperimentConfig& c) {
  json doc;
  doc["dataset"] = {{"kind", c.dataset.kind},
                    {"path", c.dataset.path.string()},
                    {"fractions", c.dataset.fractions},
                    {"split_seed", c.dataset.split_seed},
                    {"synth",
                     {{"n", c.dataset.synth.n},
                      {"dim", c.dataset.synth.dim},
                      {"bias", c.dataset.synth.bias},
                      {"noise", c.dataset.synth.noise},
                      {"seed", c.dataset.synth.seed}}}};
  const training::TrainConfig& t = c.base;
  doc["train"] = {{"learning_rate", t.learning_rate},
                  {"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"optimizer", training::to_string(t.optimizer)},
                  {"adam_beta1", t.adam_beta1},
                  {"adam_beta2", t.adam_beta2},
                  {"adam_epsilon", t.adam_epsilon},
                  {"erm_sampling",
                   t.erm_sampling == training::Sampling::kPaired ? "paired" : "pooled"},
                  {"selection", training::to_string(t.selection)},
                  {"force_tape", t.force_tape}};
  doc["train"]["align_last_layers"] =
      t.align_last_layers ? json(*t.align_last_layers) : json(nullptr);
  json methods = json::array(), metric_names = json::array();
  for (Method m : c.methods) methods.push_back(training::to_string(m));
  for (FairMetric m : c.metrics) metric_names.push_back(metrics::to_string(m));
  doc["grid"] = {{"methods", methods}, {"metrics", metric_names}, {"lambdas", c.lambdas},
                 {"betas", c.betas},     {"hidden", c.hidden},        {"seeds", c.seeds}};
  doc["grid"]["beta_ratio"] = c.beta_ratio ? json(*c.beta_ratio) : json(nullptr);
  doc["output_dir"] = c.output_dir.string();
  doc["workers"] = c.workers;
  doc["audit_cap"] = c.audit_cap;
  doc["save_models"] = c.save_models;
  return doc.dump(2);
}

}  // namespace fairalign::harness
