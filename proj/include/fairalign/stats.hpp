// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

namespace fairalign::stats {

double mean(std::span<const double> values);
/// Population (divide by n) standard deviation.
double population_std(std::span<const double> values);
/// Unbiased (divide by n - 1) variance.
double sample_variance(std::span<const double> values);

/// Ranks starting at 1; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> values);
double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
};

/// Welch's unequal-variance t-test, two-sided. Each sample needs two or more
/// values. When both variances vanish, equal means give t = 0, p = 1 and
/// unequal means give t = +-inf, p = 0.
TTest welch_ttest(std::span<const double> a, std::span<const double> b);

}  // namespace fairalign::stats
