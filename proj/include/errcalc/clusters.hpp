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

// Cluster estimation of Gamma and bias.
//
// A model X(lambda) is evaluated over a cloud of M points with covariance
// s * D around a center lambda0 (plus an optional drift s * b). Then
//
//   gamma_hat = cov(X over the cloud) / s        -> J D J^T
//   bias_hat  = (mean(X) - X(lambda0)) / (s / 2) -> 2 (J b + 1/2 H : D)
//
// so bias_hat / 2 is directly comparable with propagate().

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errcalc/error_core.hpp"
#include "errcalc/errors.hpp"
#include "errcalc/smooth_map.hpp"

namespace errcalc::clusters {

enum class CloudDistribution { kGaussian, kUniformEllipsoid };

std::string to_string(CloudDistribution d);
/// "gaussian" or "uniform-ellipsoid"; throws ValidationError otherwise.
CloudDistribution parse_distribution(const std::string& name);

struct ClusterConfig {
  Eigen::VectorXd center;
  /// Covariance of the cloud.
  Eigen::MatrixXd dispersion;
  /// Normalizing scale s. Zero means the spectral norm of `dispersion`.
  double scale = 0.0;
  /// Optional offset of the cloud mean, in units of `scale`.
  Eigen::VectorXd drift;
  std::size_t points = 0;
  CloudDistribution distribution = CloudDistribution::kGaussian;
  std::uint64_t seed = 0;

  /// Cloud of covariance s * shape around `center`.
  static ClusterConfig scaled(Eigen::VectorXd center, const Eigen::MatrixXd& shape,
                              double s, std::size_t points, std::uint64_t seed,
                              CloudDistribution distribution = CloudDistribution::kGaussian);

  /// Throws ValidationError unless M >= d + 2, the dispersion is symmetric
  /// PSD with positive spectral norm, and the drift has dimension d or 0.
  void validate() const;
  double effective_scale() const;
};

/// A black-box model, R^d -> R^m.
struct BlackBox {
  Eigen::Index input_dimension = 0;
  Eigen::Index output_dimension = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> evaluate;

  /// Expression-built maps are compiled; other maps use SmoothMap::evaluate.
  static BlackBox from_map(const SmoothMap& map);
};

/// The model failed (threw or returned a non-finite value) at a cloud point.
class ClusterEvaluationError : public NumericalError {
 public:
  ClusterEvaluationError(std::size_t index, Eigen::VectorXd point,
                         const std::string& reason);

  std::size_t index() const noexcept { return index_; }
  const Eigen::VectorXd& point() const noexcept { return point_; }

 private:
  std::size_t index_;
  Eigen::VectorXd point_;
};

struct CloudDiagnostics {
  /// Extreme eigenvalues of the sample covariance of the cloud over s.
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  /// max / min, infinite when the cloud is flat in some direction.
  double condition_number = 0.0;
  /// Largest |sample cloud covariance - dispersion| / s over the entries.
  double dispersion_error = 0.0;
  /// False above kFullDiagnostics dimensions, where only the coordinate
  /// variances are examined.
  bool full = true;
};

inline constexpr Eigen::Index kFullDiagnostics = 64;

struct ClusterEstimate {
  Eigen::MatrixXd gamma_hat;
  Eigen::MatrixXd gamma_se;
  Eigen::VectorXd bias_hat;
  Eigen::VectorXd bias_se;
  Eigen::VectorXd center_value;
  std::size_t points = 0;
  double scale = 0.0;
  CloudDiagnostics cloud;
  /// M below kSmallCluster: the estimate exists but its error bars are wide.
  bool small_cluster = false;

  /// bias_hat / 2, on the scale of propagate()'s bias.
  Eigen::VectorXd bias() const { return 0.5 * bias_hat; }
  Eigen::VectorXd bias_standard_error() const { return 0.5 * bias_se; }
};

inline constexpr std::size_t kSmallCluster = 100;

/// Evaluates the model at every cloud point; any failure aborts the run with
/// ClusterEvaluationError naming the point. Throws NumericalError when all
/// cloud points coincide.
ClusterEstimate run_cluster(const BlackBox& model, const ClusterConfig& cfg);
ClusterEstimate run_cluster(const SmoothMap& model, const ClusterConfig& cfg);

/// X(omega, lambda) with input [omega; lambda]. Each cloud moves its own
/// block with the other block held at its center; the normalized estimates
/// add. A cloud with zero dispersion (or zero dimension) contributes nothing.
/// The two seeds must differ.
ClusterEstimate run_cluster_erroneous_model(const BlackBox& model,
                                            const ClusterConfig& omega,
                                            const ClusterConfig& lambda);

struct ConvergencePoint {
  std::size_t points = 0;
  double scale = 0.0;
  /// Root mean square over replicates and entries of gamma_hat - reference.
  double gamma_rms = 0.0;
  /// Same for bias_hat / 2.
  double bias_rms = 0.0;
};

/// log(rms) = intercept + exponent * log(x).
struct PowerLaw {
  double exponent = 0.0;
  double intercept = 0.0;
};

struct ConvergenceStudy {
  std::vector<ConvergencePoint> table;
  /// One fit over M per scale, in the order of `scales`.
  std::vector<PowerLaw> gamma_vs_points;
  std::vector<PowerLaw> bias_vs_points;
  /// One fit over the scale per M, in the order of `point_counts`.
  std::vector<PowerLaw> gamma_vs_scale;
  std::vector<PowerLaw> bias_vs_scale;
  /// Per M, the scale with the smallest gamma_rms + bias_rms.
  std::vector<double> best_scale;
};

struct ConvergenceOptions {
  std::vector<std::size_t> point_counts;
  std::vector<double> scales;
  std::size_t replicates = 16;
  CloudDistribution distribution = CloudDistribution::kGaussian;
  std::uint64_t seed = 0;
};

/// Sweeps (M, s) with the cloud shape `reference_input.gamma()` and drift
/// `reference_input.bias()` around `reference_input.value()`, against the
/// analytic propagation of the same input.
ConvergenceStudy convergence_study(const BlackBox& model,
                                   const ErroneousQuantity& reference_input,
                                   const ErroneousQuantity& reference,
                                   const ConvergenceOptions& options);

PowerLaw fit_power_law(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace errcalc::clusters
