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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errcalc/montecarlo.hpp"

namespace errcalc::process {

/// K independent standard normal increments xi_k on the grid t_k = k / K,
/// each carrying the unit Ornstein-Uhlenbeck weight Gamma[xi_k] = 1. A linear
/// functional sum_k c_k xi_k then has Gamma = |c|^2.
struct DiscretizedWienerStructure {
  int steps = 0;

  explicit DiscretizedWienerStructure(int k);

  double time(int k) const { return static_cast<double>(k) / steps; }
  /// Coefficients of the walk W_t = sum_{t_k < t} xi_k / sqrt(K).
  Eigen::VectorXd walk(double t) const;
  /// Coefficients (1{t_k < s} - s) / sqrt(K) of the bridge B_s - s B_1.
  Eigen::VectorXd bridge(double s) const;
  /// Gamma[c . xi, d . xi] under the unit weights.
  static double gamma(const Eigen::VectorXd& c, const Eigen::VectorXd& d);
};

/// The discrete sum (1/K) sum_k (1{t_k < s} - s)(1{t_k < t} - t). Arguments
/// are ordered internally; both must lie in [0, 1].
double bridge_gamma_analytic(double s, double t, int k);

/// s ^ t - s t.
double bridge_gamma_continuum(double s, double t);

/// Gamma[a X_s + b X_t] of the discrete bridge.
double bridge_gamma_combination(double a, double s, double b, double t, int k);

enum class BridgeMethod { kSharpSampling, kCluster };

std::string to_string(BridgeMethod m);
BridgeMethod parse_bridge_method(const std::string& name);

/// Monte-Carlo value of Gamma[X_s, X_t] on the K-step structure: either
/// E[X_s# X_t#] over draws of the sharp gradient, or the clusters method on
/// the pair (X_s, X_t) as a function of the K increments. Requires N >= 1e4.
mc::Estimate bridge_gamma_estimated(double s, double t, int k, BridgeMethod method,
                                    std::size_t samples, std::uint64_t seed);

struct BridgeComparison {
  double analytic = 0.0;
  mc::Estimate sharp;
  mc::Estimate cluster;
};

/// Runs both methods; throws NumericalError if they differ by more than 5
/// combined standard errors.
BridgeComparison compare_bridge_methods(double s, double t, int k, std::size_t samples,
                                        std::uint64_t seed);

struct StringModel {
  double length = 1.0;
  double tension = 1.0;
  double temperature = 1.0;
  double x = 0.5;

  void validate() const;
};

struct StringDeflection {
  /// T x (l - x) / (F l).
  double closed_form = 0.0;
  /// (T l / F) Gamma_bridge(x / l, x / l) on K steps.
  double bridge_value = 0.0;
  int steps = 0;
  /// (T l / F) * 2 / K.
  double tolerance = 0.0;
};

/// Throws NumericalError if the two routes differ by more than `tolerance`.
StringDeflection string_mean_square_deflection(const StringModel& m, int k = 1024);

struct DonskerEstimate {
  std::vector<double> times;
  /// Gamma[W_s, W_t] estimated from the perturbed walk.
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd standard_error;
  /// #{k : t_k < s ^ t} / K, the exact value on the grid.
  Eigen::MatrixXd discrete;
  /// s ^ t.
  Eigen::MatrixXd continuum;
  std::vector<double> eps;
};

/// Perturbs the increments by xi -> sqrt(1 - eps) xi + sqrt(eps) xi' (and the
/// antithetic -xi') and extrapolates E[dW_s dW_t] / eps to eps = 0.
DonskerEstimate donsker_erroneous_walk(int k, const std::vector<double>& times,
                                       std::size_t samples, std::uint64_t seed,
                                       std::vector<double> eps = {1e-2, 5e-3, 2.5e-3});

}  // namespace errcalc::process
