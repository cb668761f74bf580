// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

namespace fairalign::autodiff {

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient estimate (f(p + h e_i) - f(p - h e_i)) / 2h.
/// Throws std::invalid_argument unless step > 0.
std::vector<double> finite_difference(const ScalarFunction& f,
                                      std::span<const double> point,
                                      double step);

/// ||a - b||_2 / max(||a||_2, ||b||_2); zero when both vectors vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace fairalign::autodiff
