// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fairalign/network.hpp"
#include "json.hpp"

namespace fairalign::network {

using nlohmann::json;

std::string to_json(const MlpParams& params) {
  json doc;
  doc["spec"] = {{"input_dim", params.spec.input_dim},
                 {"hidden_dims", params.spec.hidden_dims},
                 {"activation", "relu"},
                 {"output", "sigmoid"}};
  doc["weights"] = params.weights;
  doc["biases"] = params.biases;
  doc["seed"] = params.seed;
  return doc.dump();
}

MlpParams from_json(std::string_view text) {
  const json doc = json::parse(text);
  MlpSpec spec;
  spec.input_dim = doc.at("spec").at("input_dim").get<std::size_t>();
  spec.hidden_dims =
      doc.at("spec").at("hidden_dims").get<std::vector<std::size_t>>();
  if (doc.at("spec").value("activation", "relu") != "relu") {
    throw std::invalid_argument("only relu activations are supported");
  }
  MlpParams params = MlpParams::zeros(spec);
  auto weights = doc.at("weights").get<std::vector<double>>();
  auto biases = doc.at("biases").get<std::vector<std::vector<double>>>();
  if (weights.size() != params.weights.size() ||
      biases.size() != params.biases.size()) {
    throw std::invalid_argument("model file does not match its spec " +
                                spec.shape());
  }
  for (std::size_t l = 0; l < biases.size(); ++l) {
    if (biases[l].size() != params.biases[l].size()) {
      throw std::invalid_argument("bias vector size mismatch in layer " +
                                  std::to_string(l));
    }
  }
  params.weights = std::move(weights);
  params.biases = std::move(biases);
  params.seed = doc.value("seed", std::uint64_t{0});
  return params;
}

void save_model(const MlpParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(params) << '\n';
}

MlpParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

}  // namespace fairalign::network
