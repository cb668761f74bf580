// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fairalign/data.hpp"

namespace fairalign::data {

void DatasetTable::validate() const {
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (attributes.size() != labels.size() || features.rows() != n) {
    throw std::invalid_argument("dataset: row counts disagree");
  }
  if (!columns.empty() && columns.size() != dim()) {
    throw std::invalid_argument("dataset: column metadata does not match width");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((labels[i] != 0 && labels[i] != 1) ||
        (attributes[i] != 0 && attributes[i] != 1)) {
      throw std::invalid_argument("dataset: labels and attributes must be 0/1");
    }
  }
  if (!features.allFinite()) throw std::invalid_argument("dataset: non-finite feature");
}

RowMatrix SubgroupView::features() const {
  RowMatrix out(static_cast<Eigen::Index>(indices.size()), table->features.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) =
        table->features.row(static_cast<Eigen::Index>(indices[r]));
  }
  return out;
}

std::vector<int> SubgroupView::labels() const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(table->labels[i]);
  return out;
}

SubgroupView subgroup(const DatasetTable& table, int a, std::optional<int> y) {
  SubgroupView view{&table, SubgroupKey{a, y}, {}};
  for (std::size_t i = 0; i < table.rows(); ++i) {
    if (table.attributes[i] == a && (!y || table.labels[i] == *y)) {
      view.indices.push_back(i);
    }
  }
  if (view.indices.empty()) {
    throw std::invalid_argument("empty subgroup " + view.key.to_string());
  }
  return view;
}

SubgroupView head(const SubgroupView& view, std::size_t cap) {
  SubgroupView out = view;
  if (cap > 0 && out.indices.size() > cap) out.indices.resize(cap);
  return out;
}

std::array<std::size_t, 4> cell_sizes(const DatasetTable& table) {
  std::array<std::size_t, 4> n{};
  for (std::size_t i = 0; i < table.rows(); ++i) {
    ++n[static_cast<std::size_t>(2 * table.attributes[i] + table.labels[i])];
  }
  return n;
}

DatasetTable select_rows(const DatasetTable& table,
                         std::span<const std::size_t> rows) {
  DatasetTable out;
  out.columns = table.columns;
  out.dropped_rows = table.dropped_rows;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), table.features.cols());
  out.labels.reserve(rows.size());
  out.attributes.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= table.rows()) throw std::out_of_range("select_rows: bad index");
    out.features.row(static_cast<Eigen::Index>(r)) =
        table.features.row(static_cast<Eigen::Index>(rows[r]));
    out.labels.push_back(table.labels[rows[r]]);
    out.attributes.push_back(table.attributes[rows[r]]);
  }
  return out;
}

Standardizer Standardizer::fit(const DatasetTable& table) {
  Standardizer s;
  const std::size_t d = table.dim();
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  if (table.rows() == 0) return s;
  for (std::size_t j = 0; j < d; ++j) {
    if (!table.columns.empty() && table.columns[j].kind != ColumnKind::kNumeric) {
      continue;
    }
    const auto col = table.features.col(static_cast<Eigen::Index>(j));
    const double mu = col.mean();
    const double var = (col.array() - mu).square().mean();
    s.mean[j] = mu;
    s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

void Standardizer::apply(DatasetTable& table) const {
  if (mean.size() != table.dim()) {
    throw std::invalid_argument("standardizer width does not match table");
  }
  for (Eigen::Index r = 0; r < table.features.rows(); ++r) {
    for (std::size_t j = 0; j < mean.size(); ++j) {
      double& v = table.features(r, static_cast<Eigen::Index>(j));
      v = (v - mean[j]) / scale[j];
    }
  }
}

Split split(const DatasetTable& table, std::array<double, 3> fractions,
            std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split fractions must be positive");
  }
  if (std::fabs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
  std::mt19937_64 rng(seed);
  std::array<std::vector<std::size_t>, 4> cells;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    cells[static_cast<std::size_t>(2 * table.attributes[i] + table.labels[i])]
        .push_back(i);
  }
  std::vector<std::size_t> parts[3];
  for (auto& cell : cells) {
    std::shuffle(cell.begin(), cell.end(), rng);
    const std::size_t n = cell.size();
    auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * double(n)));
    auto n_test = static_cast<std::size_t>(std::llround(fractions[2] * double(n)));
    if (n >= 3) {
      n_val = std::max<std::size_t>(n_val, 1);
      n_test = std::max<std::size_t>(n_test, 1);
    }
    n_val = std::min(n_val, n);
    n_test = std::min(n_test, n - n_val);
    const std::size_t n_train = n - n_val - n_test;
    parts[0].insert(parts[0].end(), cell.begin(), cell.begin() + n_train);
    parts[1].insert(parts[1].end(), cell.begin() + n_train,
                    cell.begin() + n_train + n_val);
    parts[2].insert(parts[2].end(), cell.begin() + n_train + n_val, cell.end());
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return Split{select_rows(table, parts[0]), select_rows(table, parts[1]),
               select_rows(table, parts[2])};
}

Split split_and_standardize(const DatasetTable& table,
                            std::array<double, 3> fractions, std::uint64_t seed) {
  Split s = split(table, fractions, seed);
  const Standardizer scaler = Standardizer::fit(s.train);
  scaler.apply(s.train);
  scaler.apply(s.validation);
  scaler.apply(s.test);
  return s;
}

DatasetTable synth_biased(std::size_t n, std::size_t d, double bias,
                          double noise, std::uint64_t seed) {
  if (n < 40 || d < 2) {
    throw std::invalid_argument("synth_biased requires n >= 40 and d >= 2");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.5);

  Eigen::VectorXd direction(static_cast<Eigen::Index>(d - 1));
  for (Eigen::Index j = 0; j < direction.size(); ++j) direction[j] = normal(rng);
  direction.normalize();

  DatasetTable table;
  table.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  table.labels.resize(n);
  table.attributes.resize(n);
  const auto last = static_cast<Eigen::Index>(d - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const int a = coin(rng) ? 1 : 0;
    double score = 0.0;
    for (Eigen::Index j = 0; j < last; ++j) {
      const double x = normal(rng);
      table.features(r, j) = x;
      score += direction[j] * x;
    }
    table.features(r, last) = a;
    score += bias * (2.0 * a - 1.0) + noise * normal(rng);
    table.attributes[i] = a;
    table.labels[i] = score > 0.0 ? 1 : 0;
  }
  for (std::size_t j = 0; j + 1 < d; ++j) {
    const std::string name = "x" + std::to_string(j);
    table.columns.push_back({name, ColumnKind::kNumeric, name, ""});
  }
  table.columns.push_back({"a=1", ColumnKind::kCategorical, "a", "1"});
  return table;
}

}  // namespace fairalign::data
