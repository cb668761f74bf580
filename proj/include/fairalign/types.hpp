// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fairalign {

/// Samples are rows; row-major so that gathering a batch copies contiguous
/// memory.
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Feature rows with their binary labels.
struct LabeledBatch {
  RowMatrix features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

/// Identifies a subgroup: attribute value a, optionally refined by label y.
struct SubgroupKey {
  int a = 0;
  std::optional<int> y;

  std::string to_string() const {
    return y ? "a" + std::to_string(a) + "y" + std::to_string(*y)
             : "a" + std::to_string(a);
  }
  friend bool operator==(const SubgroupKey&, const SubgroupKey&) = default;
};

}  // namespace fairalign
