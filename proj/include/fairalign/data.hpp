// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairalign/types.hpp"

namespace fairalign::data {

enum class ColumnKind { kNumeric, kCategorical };

/// One column of the feature matrix. Categorical source columns expand into
/// one indicator column per observed category.
struct FeatureColumn {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  std::string source;
  std::string category;

  friend bool operator==(const FeatureColumn&, const FeatureColumn&) = default;
};

/// Features, binary labels, and a binary sensitive attribute per row.
struct DatasetTable {
  RowMatrix features;
  std::vector<int> labels;
  std::vector<int> attributes;
  std::vector<FeatureColumn> columns;
  std::size_t dropped_rows = 0;

  std::size_t rows() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  /// Throws std::invalid_argument on inconsistent sizes, non-binary values,
  /// or non-finite features.
  void validate() const;
};

/// Row indices of one (a) or (a, y) cell of a table.
struct SubgroupView {
  const DatasetTable* table = nullptr;
  SubgroupKey key;
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
  RowMatrix features() const;
  std::vector<int> labels() const;
  LabeledBatch batch() const { return {features(), labels()}; }
};

/// Throws std::invalid_argument when the cell is empty.
SubgroupView subgroup(const DatasetTable& table, int a,
                      std::optional<int> y = std::nullopt);

/// Cell sizes in (a, y) -> 2a + y order.
std::array<std::size_t, 4> cell_sizes(const DatasetTable& table);

/// The first `cap` rows of a view (all of them when cap is zero).
SubgroupView head(const SubgroupView& view, std::size_t cap);

DatasetTable select_rows(const DatasetTable& table,
                         std::span<const std::size_t> rows);

// --- CSV ingestion ---------------------------------------------------------------

struct CsvSchema {
  std::string label;
  std::vector<std::string> positive_labels;
  /// When non-empty, label values outside both lists are an error.
  std::vector<std::string> negative_labels;
  std::string sensitive;
  std::vector<std::string> sensitive_group1;
  std::vector<std::string> sensitive_group0;
  /// Columns forced to one-hot even when their values parse as numbers.
  std::vector<std::string> categorical;
  std::vector<std::string> drop;
  bool sensitive_as_feature = true;
  bool has_header = true;
  /// Column names for header-less files.
  std::vector<std::string> names;
  /// Lines starting with this prefix are skipped.
  std::string comment_prefix;
  std::vector<std::string> missing_tokens = {"", "?", "NA"};
};

/// Parses one or more files sharing a schema (one-hot categories are
/// collected across all of them). Rows with a missing value are dropped and
/// counted. Numeric columns are left unscaled; see Standardizer.
DatasetTable load_csv(std::span<const std::filesystem::path> paths,
                      const CsvSchema& schema);
DatasetTable load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Canonical form: one column per feature, then "label" and "sensitive".
void write_csv(const DatasetTable& table, const std::filesystem::path& path);
/// Schema that reads write_csv output back.
CsvSchema canonical_schema();

/// Public census income files: adult.data and adult.test.
CsvSchema adult_schema();
DatasetTable load_adult(const std::filesystem::path& directory);

// --- Preprocessing ----------------------------------------------------------------

/// Zero-mean unit-variance scaling of numeric columns, fit on one table.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const DatasetTable& table);
  void apply(DatasetTable& table) const;
};

struct Split {
  DatasetTable train;
  DatasetTable validation;
  DatasetTable test;
};

/// Stratified by (a, y) cell; every split receives at least one row of each
/// cell that has three or more rows. Deterministic per seed.
Split split(const DatasetTable& table, std::array<double, 3> fractions,
            std::uint64_t seed);

/// split() followed by a Standardizer fit on train and applied to all three.
Split split_and_standardize(const DatasetTable& table,
                            std::array<double, 3> fractions, std::uint64_t seed);

// --- Synthetic data ---------------------------------------------------------------

/// a ~ Bernoulli(0.5); d - 1 standard normal features plus the attribute as
/// the last feature; y = 1[v . x + bias * (2a - 1) + noise * e > 0] with v a
/// seeded unit vector and e standard normal.
DatasetTable synth_biased(std::size_t n, std::size_t d, double bias,
                          double noise, std::uint64_t seed);

}  // namespace fairalign::data
