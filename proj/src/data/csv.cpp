// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "fairalign/data.hpp"

namespace fairalign::data {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one line on commas; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
      current = trim(current);
    } else if (c == ',') {
      fields.push_back(was_quoted ? current : trim(current));
      current.clear();
      was_quoted = false;
    } else {
      current += c;
    }
  }
  if (quoted) throw std::invalid_argument("csv: unterminated quote");
  fields.push_back(was_quoted ? current : trim(current));
  return fields;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

bool parse_double(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  const auto result = std::from_chars(s.data(), end, out);
  return result.ec == std::errc() && result.ptr == end && std::isfinite(out);
}

bool contains(const std::vector<std::string>& list, const std::string& v) {
  return std::find(list.begin(), list.end(), v) != list.end();
}

struct RawTable {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> rows;
  std::size_t dropped = 0;
};

RawTable read_raw(std::span<const std::filesystem::path> paths,
                  const CsvSchema& schema) {
  RawTable raw;
  if (!schema.has_header) raw.names = schema.names;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    bool header_pending = schema.has_header;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      if (!schema.comment_prefix.empty() && line.starts_with(schema.comment_prefix)) {
        continue;
      }
      auto fields = split_record(line);
      if (header_pending) {
        header_pending = false;
        if (raw.names.empty()) {
          raw.names = std::move(fields);
        } else if (fields != raw.names) {
          throw std::invalid_argument("csv: header of " + path.string() +
                                      " differs from the first file");
        }
        continue;
      }
      if (fields.size() != raw.names.size()) {
        throw std::invalid_argument("csv: " + path.string() + ":" +
                                    std::to_string(line_no) + " has " +
                                    std::to_string(fields.size()) + " fields, expected " +
                                    std::to_string(raw.names.size()));
      }
      raw.rows.push_back(std::move(fields));
    }
  }
  if (raw.rows.empty()) throw std::invalid_argument("csv: no data rows");
  return raw;
}

std::size_t column_index(const RawTable& raw, const std::string& name) {
  const auto it = std::find(raw.names.begin(), raw.names.end(), name);
  if (it == raw.names.end()) throw std::invalid_argument("unknown column: " + name);
  return static_cast<std::size_t>(it - raw.names.begin());
}

// Maps a binary column to 0/1 from explicit value lists.
int map_binary(const std::string& value, const std::vector<std::string>& ones,
               const std::vector<std::string>& zeros, std::set<std::string>& other,
               const std::string& column) {
  if (contains(ones, value)) return 1;
  if (!zeros.empty()) {
    if (contains(zeros, value)) return 0;
    throw std::invalid_argument("non-binary value '" + value + "' in column " + column);
  }
  other.insert(value);
  if (other.size() > 1) {
    throw std::invalid_argument("column " + column + " is not binary");
  }
  return 0;
}

}  // namespace

DatasetTable load_csv(std::span<const std::filesystem::path> paths,
                      const CsvSchema& schema) {
  if (schema.positive_labels.empty() || schema.sensitive_group1.empty()) {
    throw std::invalid_argument("schema needs positive labels and a sensitive group");
  }
  RawTable raw = read_raw(paths, schema);
  const std::size_t label_col = column_index(raw, schema.label);
  const std::size_t sensitive_col = column_index(raw, schema.sensitive);
  for (const auto& name : schema.categorical) column_index(raw, name);
  for (const auto& name : schema.drop) column_index(raw, name);

  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < raw.names.size(); ++c) {
    if (c == label_col || contains(schema.drop, raw.names[c])) continue;
    if (c == sensitive_col && !schema.sensitive_as_feature) continue;
    feature_cols.push_back(c);
  }

  // Drop rows with a missing value in any used column.
  std::vector<std::vector<std::string>> kept;
  kept.reserve(raw.rows.size());
  for (auto& row : raw.rows) {
    bool missing = contains(schema.missing_tokens, row[label_col]) ||
                   contains(schema.missing_tokens, row[sensitive_col]);
    for (std::size_t c : feature_cols) missing = missing || contains(schema.missing_tokens, row[c]);
    if (missing) {
      ++raw.dropped;
    } else {
      kept.push_back(std::move(row));
    }
  }
  if (kept.empty()) throw std::invalid_argument("csv: every row has a missing value");

  // Column kinds and category sets.
  std::vector<FeatureColumn> columns;
  std::vector<std::map<std::string, std::size_t>> category_slot(feature_cols.size());
  std::vector<std::size_t> first_slot(feature_cols.size());
  std::vector<bool> numeric(feature_cols.size());
  for (std::size_t f = 0; f < feature_cols.size(); ++f) {
    const std::size_t c = feature_cols[f];
    bool is_numeric = !contains(schema.categorical, raw.names[c]);
    double scratch = 0.0;
    for (std::size_t r = 0; is_numeric && r < kept.size(); ++r) {
      is_numeric = parse_double(kept[r][c], scratch);
    }
    numeric[f] = is_numeric;
    first_slot[f] = columns.size();
    if (is_numeric) {
      columns.push_back({raw.names[c], ColumnKind::kNumeric, raw.names[c], ""});
      continue;
    }
    std::set<std::string> values;
    for (const auto& row : kept) values.insert(row[c]);
    for (const auto& v : values) {
      category_slot[f][v] = columns.size() - first_slot[f];
      columns.push_back({raw.names[c] + "=" + v, ColumnKind::kCategorical, raw.names[c], v});
    }
  }

  DatasetTable table;
  table.dropped_rows = raw.dropped;
  table.columns = columns;
  table.features = RowMatrix::Zero(static_cast<Eigen::Index>(kept.size()),
                                   static_cast<Eigen::Index>(columns.size()));
  table.labels.reserve(kept.size());
  table.attributes.reserve(kept.size());
  std::set<std::string> other_labels;
  std::set<std::string> other_groups;
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const auto& row = kept[r];
    const auto ri = static_cast<Eigen::Index>(r);
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
      const std::string& v = row[feature_cols[f]];
      if (numeric[f]) {
        parse_double(v, table.features(ri, static_cast<Eigen::Index>(first_slot[f])));
      } else {
        table.features(ri, static_cast<Eigen::Index>(first_slot[f] +
                                                     category_slot[f].at(v))) = 1.0;
      }
    }
    table.labels.push_back(map_binary(row[label_col], schema.positive_labels,
                                      schema.negative_labels, other_labels,
                                      schema.label));
    table.attributes.push_back(map_binary(row[sensitive_col], schema.sensitive_group1,
                                          schema.sensitive_group0, other_groups,
                                          schema.sensitive));
  }
  table.validate();
  return table;
}

DatasetTable load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  return load_csv(std::span<const std::filesystem::path>(&path, 1), schema);
}

void write_csv(const DatasetTable& table, const std::filesystem::path& path) {
  table.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t j = 0; j < table.dim(); ++j) {
    out << quote_if_needed(table.columns.empty() ? "f" + std::to_string(j)
                                                 : table.columns[j].name)
        << ',';
  }
  out << "label,sensitive\n";
  char buffer[32];
  for (std::size_t i = 0; i < table.rows(); ++i) {
    for (std::size_t j = 0; j < table.dim(); ++j) {
      std::snprintf(buffer, sizeof buffer, "%.17g",
                    table.features(static_cast<Eigen::Index>(i),
                                   static_cast<Eigen::Index>(j)));
      out << buffer << ',';
    }
    out << table.labels[i] << ',' << table.attributes[i] << '\n';
  }
}

CsvSchema canonical_schema() {
  CsvSchema s;
  s.label = "label";
  s.positive_labels = {"1"};
  s.negative_labels = {"0"};
  s.sensitive = "sensitive";
  s.sensitive_group1 = {"1"};
  s.sensitive_group0 = {"0"};
  s.sensitive_as_feature = false;
  return s;
}

CsvSchema adult_schema() {
  CsvSchema s;
  s.has_header = false;
  s.names = {"age",          "workclass",      "fnlwgt",         "education",
             "education-num", "marital-status", "occupation",     "relationship",
             "race",          "sex",            "capital-gain",   "capital-loss",
             "hours-per-week", "native-country", "income"};
  s.label = "income";
  s.positive_labels = {">50K", ">50K."};
  s.negative_labels = {"<=50K", "<=50K."};
  s.sensitive = "sex";
  s.sensitive_group1 = {"Male"};
  s.sensitive_group0 = {"Female"};
  s.drop = {"fnlwgt"};
  s.comment_prefix = "|";
  return s;
}

DatasetTable load_adult(const std::filesystem::path& directory) {
  const std::filesystem::path files[] = {directory / "adult.data",
                                         directory / "adult.test"};
  return load_csv(files, adult_schema());
}

}  // namespace fairalign::data
