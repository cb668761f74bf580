// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairalign/finite_difference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fairalign::autodiff {

std::vector<double> finite_difference(const ScalarFunction& f,
                                      std::span<const double> point,
                                      double step) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("finite_difference step must be positive");
  }
  std::vector<double> probe(point.begin(), point.end());
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = f(probe);
    probe[i] = point[i] - step;
    const double down = f(probe);
    probe[i] = point[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("relative_error: size mismatch");
  }
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / scale;
}

}  // namespace fairalign::autodiff
