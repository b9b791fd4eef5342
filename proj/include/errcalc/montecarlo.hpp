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

// Seeded, thread-count independent Monte-Carlo plumbing.
//
// Work is cut into fixed-size blocks. Block b draws from its own generator
// seeded by (seed, stream, b), and partial results are reduced in block order,
// so the output depends only on the seed and the sample count.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace errcalc::mc {

using Rng = std::mt19937_64;

inline constexpr std::size_t kBlockSize = 4096;

/// Independent generator for (seed, stream, block).
inline Rng substream(std::uint64_t seed, std::uint64_t stream,
                     std::uint64_t block = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(block),
                    static_cast<std::uint32_t>(block >> 32)};
  return Rng(seq);
}

/// Worker threads used by block loops. Never affects results.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs fn(b) for b in [0, n) across worker threads and returns the results
/// indexed by b. Exceptions thrown by fn are rethrown (lowest index first).
template <typename Fn>
auto run_indexed(std::size_t n, Fn&& fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
  auto body = [&](unsigned w) {
    for (std::size_t b = w; b < n; b += std::max(1u, workers)) {
      try {
        out[b] = fn(b);
      } catch (...) {
        errors[b] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    body(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

inline std::size_t block_count(std::size_t samples) {
  return (samples + kBlockSize - 1) / kBlockSize;
}

/// Pairwise (cascade) summation in index order.
template <typename T>
T pairwise_sum(std::span<const T> xs) {
  if (xs.empty()) return T{};
  if (xs.size() == 1) return xs[0];
  if (xs.size() <= 8) {
    T s = xs[0];
    for (std::size_t i = 1; i < xs.size(); ++i) s = s + xs[i];
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

template <typename T>
T pairwise_sum(const std::vector<T>& xs) {
  return pairwise_sum(std::span<const T>(xs));
}

/// Sample mean with its standard error.
struct Estimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// First and second raw sums of a scalar sample stream.
struct Moments {
  double n = 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double x) {
    n += 1.0;
    sum += x;
    sum_sq += x * x;
  }
  Moments operator+(const Moments& o) const {
    return {n + o.n, sum + o.sum, sum_sq + o.sum_sq};
  }
  Estimate estimate() const {
    if (n < 1.0) return {};
    const double mean = sum / n;
    const double var = n > 1.0 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
    return {mean, std::sqrt(var / n)};
  }
};

/// Mean and standard error of a stored sample, with pairwise summation.
Estimate mean_estimate(std::span<const double> xs);

/// Least-squares fit of y = a + b*eps over a grid of eps values.
///
/// The intercept and slope are linear in y with the returned weights, so a
/// per-sample combination `sum_k w_k y_k(sample)` extrapolates sample by
/// sample and keeps common-random-number correlations in the error bars.
struct LinearExtrapolation {
  std::vector<double> eps;
  std::vector<double> intercept_weights;
  std::vector<double> slope_weights;
  /// Weights giving the residual at each grid point (y_k - fit_k).
  std::vector<std::vector<double>> residual_weights;

  explicit LinearExtrapolation(std::vector<double> eps_grid);

  double intercept(std::span<const double> y) const;
  double slope(std::span<const double> y) const;
};

/// Standard normal draws, one per entry.
inline void fill_normal(Rng& rng, std::span<double> out) {
  std::normal_distribution<double> n01;
  for (double& v : out) v = n01(rng);
}

}  // namespace errcalc::mc
