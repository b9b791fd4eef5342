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

// Error-structure calculus on R^n.
//
// An erroneous quantity carries, per unit of an infinitesimal error scale,
// a bias vector A[V] and an error covariance Gamma[V, V]. Smooth maps
// transport them by
//
//   Gamma[F] = J Gamma J^T
//   A[F_k]   = sum_i dF_k/dV_i A[V_i] + 1/2 sum_ij d2F_k/dV_i dV_j Gamma_ij
//
// which is coherent: the result does not depend on how F is written or
// factored.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errcalc/montecarlo.hpp"
#include "errcalc/smooth_map.hpp"

namespace errcalc {

/// Relative threshold below which negative eigenvalues count as round-off.
inline constexpr double kPsdTolerance = 1e-12;

struct SpectrumCheck {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  bool symmetric = true;

  /// min >= -kPsdTolerance * max (with max taken as at least 0).
  bool within_tolerance() const;
};

SpectrumCheck check_spectrum(const Eigen::MatrixXd& m);

/// Returns `m` unchanged when PSD, clips round-off sized negative eigenvalues
/// to zero, and throws ValidationError (naming the eigenvalue) otherwise.
Eigen::MatrixXd repair_psd(const Eigen::MatrixXd& m);

/// Value, bias and error covariance of a vector of erroneous quantities.
class ErroneousQuantity {
 public:
  ErroneousQuantity(Eigen::VectorXd value, Eigen::VectorXd bias,
                    Eigen::MatrixXd gamma);

  /// Independent errors with the given variances and zero bias.
  static ErroneousQuantity independent(Eigen::VectorXd value,
                                       const Eigen::VectorXd& variances);

  const Eigen::VectorXd& value() const { return value_; }
  const Eigen::VectorXd& bias() const { return bias_; }
  const Eigen::MatrixXd& gamma() const { return gamma_; }
  Eigen::Index dimension() const { return value_.size(); }

 private:
  Eigen::VectorXd value_;
  Eigen::VectorXd bias_;
  Eigen::MatrixXd gamma_;
};

/// J * gamma * J^T with each (i, j), i <= j, computed once and mirrored.
///
/// This is the single congruence used for both error covariances and Fisher
/// information.
Eigen::MatrixXd congruence(const Eigen::MatrixXd& jacobian,
                           const Eigen::MatrixXd& gamma);

/// Propagation before the output covariance is repaired to PSD.
struct Propagation {
  Eigen::VectorXd value;
  Eigen::VectorXd bias;
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd jacobian;
  std::vector<std::string> warnings;
};

Propagation propagate_detailed(const ErroneousQuantity& x, const SmoothMap& f);

ErroneousQuantity propagate(const ErroneousQuantity& x, const SmoothMap& f);

/// grad_f^T gamma grad_g for scalar-output maps.
double gamma_bilinear(const ErroneousQuantity& x, const SmoothMap& f,
                      const SmoothMap& g);

/// Second-order operator L = sum_i b_i d/dV_i + 1/2 sum_i sigma_i^2 d2/dV_i^2.
struct GeneratorL {
  Eigen::VectorXd variances;
  Eigen::VectorXd drift;

  explicit GeneratorL(Eigen::VectorXd variances);
  GeneratorL(Eigen::VectorXd variances, Eigen::VectorXd drift);

  double apply(const Jet& f) const;
};

/// Gamma(F) computed as L(F^2) - 2 F L(F), with the jet of F^2 built from the
/// jet of F by the product rule. Drift terms cancel.
double carre_du_champ(const GeneratorL& generator, const SmoothMap& f,
                      const Eigen::VectorXd& point);

/// Gamma(f, g) = (Gamma(f + g) - Gamma(f - g)) / 4.
double polarize(const ErroneousQuantity& x, const SmoothMap& f,
                const SmoothMap& g);

/// The l1 formula sigma_F = sum_i |dF/dV_i| sigma_i. Not coherent; provided
/// to exhibit the dependence on how a model is factored.
double ugly_propagate(const Eigen::VectorXd& sigmas, const SmoothMap& f,
                      const Eigen::VectorXd& point);

/// A model written as a chain of stages, stage k mapping the outputs of stage
/// k-1. Compares the stage-by-stage result with the one-shot result on the
/// composite Jacobian.
struct PipelineComparison {
  Eigen::VectorXd stepwise;
  Eigen::VectorXd direct;

  /// max_k |stepwise_k - direct_k| / |direct_k|, or the absolute difference
  /// where direct_k is 0.
  double relative_discrepancy() const;
};

PipelineComparison ugly_pipeline(const Eigen::VectorXd& sigmas,
                                 const Eigen::VectorXd& point,
                                 const std::vector<SmoothMap>& stages);

/// Same comparison for the quadratic calculus, on the output variances.
PipelineComparison gauss_pipeline(const ErroneousQuantity& x,
                                  const std::vector<SmoothMap>& stages);

/// f# = sum_i c_i xi_i for independent standard normals xi.
struct SharpRepresentation {
  Eigen::VectorXd coefficients;

  double squared_norm() const { return coefficients.squaredNorm(); }

  /// Empirical E[(f#)^2] from `samples` draws.
  mc::Estimate sample_second_moment(std::size_t samples,
                                    std::uint64_t seed) const;
};

/// Symmetric square root of a PSD matrix.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

SharpRepresentation sharp(const ErroneousQuantity& x, const SmoothMap& f);

/// E|V| for V ~ N(0, sigma^2): sqrt(2 / pi) * sigma.
double gaussian_mean_absolute(double sigma);

/// E|e_F| = sqrt(sum_i F_i'^2 (E|e_i|)^2) for small Gaussian errors.
double laplace_first_moment(const Eigen::VectorXd& mean_absolute_errors,
                            const SmoothMap& f, const Eigen::VectorXd& point);

struct FisherTransport {
  /// Gamma(phi), the inverse Fisher information of the new parameter.
  Eigen::MatrixXd precision;
  Eigen::Index jacobian_rank = 0;
  /// Jacobian rank below the parameter dimension: g is not locally
  /// injective and the transported information is degenerate.
  bool degenerate = false;
};

/// Transports the precision Gamma(theta) = I(theta)^-1 of a regular
/// statistical model to the parameter phi = g(theta).
FisherTransport fisher_transport(const Eigen::MatrixXd& precision,
                                 const SmoothMap& g,
                                 const Eigen::VectorXd& point);

enum class Dichotomy { kWeaklyStochastic, kStronglyStochastic };

/// Exponents p, q with bias ~ eps^p and variance ~ eps^q under the error
/// scale eps.
struct ScaleOrders {
  double bias_order = 1.0;
  double gamma_order = 1.0;
};

/// Weakly stochastic when the variance is of strictly higher order than the
/// bias (or vanishes); strongly stochastic otherwise.
Dichotomy classify_dichotomy(const ErroneousQuantity& x, ScaleOrders orders);

std::string to_string(Dichotomy d);

}  // namespace errcalc
