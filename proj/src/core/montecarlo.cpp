// Copyright 2026 The errcalc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "errcalc/montecarlo.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "errcalc/errors.hpp"

namespace errcalc::mc {

namespace {

unsigned initial_thread_count() {
  if (const char* env = std::getenv("ERRCALC_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<unsigned>& threads() {
  static std::atomic<unsigned> n{initial_thread_count()};
  return n;
}

}  // namespace

void set_thread_count(unsigned n) { threads().store(std::max(1u, n)); }

unsigned thread_count() { return threads().load(); }

Estimate mean_estimate(std::span<const double> xs) {
  if (xs.empty()) return {};
  const double n = static_cast<double>(xs.size());
  const double mean = pairwise_sum(xs) / n;
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double d = xs[i] - mean;
    sq[i] = d * d;
  }
  const double var = xs.size() > 1 ? pairwise_sum(std::span<const double>(sq)) / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

LinearExtrapolation::LinearExtrapolation(std::vector<double> eps_grid)
    : eps(std::move(eps_grid)) {
  const std::size_t k = eps.size();
  if (k < 2) throw ValidationError("extrapolation needs at least two eps values");
  for (std::size_t i = 0; i < k; ++i) {
    if (!(eps[i] > 0.0)) throw ValidationError("eps values must be positive");
    if (i > 0 && !(eps[i] < eps[i - 1])) {
      throw ValidationError("eps grid must be strictly decreasing");
    }
  }
  Eigen::MatrixXd design(static_cast<Eigen::Index>(k), 2);
  for (std::size_t i = 0; i < k; ++i) {
    design(static_cast<Eigen::Index>(i), 0) = 1.0;
    design(static_cast<Eigen::Index>(i), 1) = eps[i];
  }
  // (X^T X)^-1 X^T, rows give intercept and slope weights.
  const Eigen::MatrixXd pinv =
      (design.transpose() * design).ldlt().solve(design.transpose());
  intercept_weights.resize(k);
  slope_weights.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    intercept_weights[i] = pinv(0, static_cast<Eigen::Index>(i));
    slope_weights[i] = pinv(1, static_cast<Eigen::Index>(i));
  }
  const Eigen::MatrixXd hat = design * pinv;
  residual_weights.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      residual_weights[r][c] = (r == c ? 1.0 : 0.0) -
                               hat(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
}

double LinearExtrapolation::intercept(std::span<const double> y) const {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += intercept_weights[i] * y[i];
  return s;
}

double LinearExtrapolation::slope(std::span<const double> y) const {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += slope_weights[i] * y[i];
  return s;
}

}  // namespace errcalc::mc
