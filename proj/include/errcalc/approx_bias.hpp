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

// Bias operators of an approximation Y_eps of a scalar random variable Y.
//
// For test functions phi, chi the four operators are the eps -> 0 limits of
//
//   <Abar phi, chi>   =  E[(phi(Y_eps) - phi(Y)) chi(Y)] / eps
//   <Aund phi, chi>   = -E[(phi(Y_eps) - phi(Y)) chi(Y_eps)] / eps
//   <Atilde phi, chi> = (Abar + Aund) / 2
//   <Asing phi, chi>  = (Abar - Aund) / 2
//
// Limits are taken by a least-squares fit a + b eps over a decreasing eps
// grid, sample by sample, with common random numbers across the grid.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "errcalc/montecarlo.hpp"

namespace errcalc::bias {

/// A scalar test function with its first two derivatives.
struct TestFunction {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> d1;
  std::function<double(double)> d2;

  static TestFunction constant(double c);
  /// y^k.
  static TestFunction monomial(int k);
  /// exp(1 - 1 / (1 - (y/2)^2)) on |y| < 2, zero elsewhere.
  static TestFunction bump();
  static TestFunction product(const TestFunction& a, const TestFunction& b);
};

/// {1, y, y^2, y^3, bump}.
std::vector<TestFunction> default_bank();

/// Law of Y.
struct Marginal {
  enum class Kind { kNormal, kUniform };
  Kind kind = Kind::kNormal;
  double a = 0.0;  // mean, or lower end
  double b = 1.0;  // standard deviation, or upper end

  static Marginal normal(double mean, double sd) { return {Kind::kNormal, mean, sd}; }
  static Marginal uniform(double lo, double hi) { return {Kind::kUniform, lo, hi}; }
  double sample(mc::Rng& rng) const;
};

/// A variable defined jointly with Y: a constant, an affine function of Y, or
/// an independent normal / uniform draw.
struct Coupling {
  enum class Kind { kConstant, kAffineInY, kNormal, kUniform };
  Kind kind = Kind::kConstant;
  double a = 0.0;
  double b = 0.0;

  static Coupling constant(double c) { return {Kind::kConstant, c, 0.0}; }
  /// a * Y + b.
  static Coupling affine(double a, double b) { return {Kind::kAffineInY, a, b}; }
  static Coupling normal(double mean, double sd) { return {Kind::kNormal, mean, sd}; }
  static Coupling uniform(double lo, double hi) { return {Kind::kUniform, lo, hi}; }

  double sample(mc::Rng& rng, double y) const;
  double conditional_mean(double y) const;
  double conditional_second_moment(double y) const;
  bool is_zero() const { return kind == Kind::kConstant && a == 0.0; }
};

enum class NoiseLaw { kNormal, kRademacher, kUniform };

/// Either Y_eps = Y + eps Z + sqrt(eps) T G (diffusion), or
/// Y_eps = Y + J 1{U < eps} with U uniform on (0, 1) (jump).
struct PerturbationScheme {
  enum class Kind { kDiffusion, kJump };
  Kind kind = Kind::kDiffusion;
  Marginal y;
  Coupling z = Coupling::constant(0.0);
  Coupling t = Coupling::constant(1.0);
  NoiseLaw g = NoiseLaw::kNormal;
  Coupling jump = Coupling::constant(1.0);
  std::vector<double> eps{1e-2, 5e-3, 2.5e-3};

  static PerturbationScheme diffusion(Marginal y, Coupling z, Coupling t);
  static PerturbationScheme jumps(Marginal y, Coupling jump);

  /// Throws ValidationError on a bad eps grid or degenerate law.
  void validate() const;
  double sample_noise(mc::Rng& rng) const;
};

struct NoiseCheck {
  double mean = 0.0;
  double variance = 0.0;
  /// |mean| <= 3 / sqrt(N) and |variance - 1| <= 5%.
  bool passed = false;
};

NoiseCheck check_noise(const PerturbationScheme& scheme, std::size_t samples,
                       std::uint64_t seed);

struct PairingEstimate {
  mc::Estimate theoretical;
  mc::Estimate practical;
  mc::Estimate symmetric;
  mc::Estimate singular;
  /// Monte-Carlo moments of the theoretical and practical pairings at each eps.
  std::vector<double> theoretical_by_eps;
  std::vector<double> practical_by_eps;
  /// Fitted d/d eps of the theoretical and practical pairings.
  double theoretical_slope = 0.0;
  double practical_slope = 0.0;
  /// Largest |fit residual| over the eps grid, in standard errors of the
  /// extrapolated pairing.
  double residual_ratio = 0.0;
};

struct GridOperators {
  std::string function;
  std::vector<double> theoretical, practical, symmetric, singular;
  std::vector<double> theoretical_se, practical_se, symmetric_se, singular_se;
};

struct BiasOperatorEstimates {
  std::vector<double> grid;
  double bandwidth = 0.0;
  std::size_t samples = 0;
  std::vector<double> eps;
  std::vector<GridOperators> operators;  // one per test function
  /// pairings[i][j] pairs operator-on-function-i with function j.
  std::vector<std::vector<PairingEstimate>> pairings;
  /// <Atilde f_i, f_j> - <f_i, Atilde f_j>, per-sample difference estimate.
  std::vector<std::vector<mc::Estimate>> symmetry_residual;
};

struct EstimateOptions {
  std::size_t grid_points = 21;
  /// Grid spans these sample quantiles of Y.
  double lower_quantile = 0.025;
  double upper_quantile = 0.975;
  /// Residual of the eps fit beyond this many standard errors is an error.
  double residual_limit = 5.0;
};

/// Grid-wise operator estimates for every function in `bank` and pairings for
/// every ordered pair of bank functions. Requires samples >= 1e4.
BiasOperatorEstimates estimate_bias_operators(const PerturbationScheme& scheme,
                                              const std::vector<TestFunction>& bank,
                                              std::size_t samples, std::uint64_t seed,
                                              const EstimateOptions& options = {});

/// E[Z | Y=y] phi'(y) + 1/2 E[T^2 | Y=y] phi''(y) from the scheme's known
/// conditionals.
double theoretical_bias_closed_form(const PerturbationScheme& scheme,
                                    const TestFunction& phi, double y);

struct KernelClosedForm {
  double value = 0.0;
  double bandwidth = 0.0;
  double effective_neighbors = 0.0;
};

/// Same formula with E[Z | Y=y] and E[T^2 | Y=y] taken from local-cubic
/// Gaussian-kernel regression on `samples` draws.
KernelClosedForm theoretical_bias_kernel(const PerturbationScheme& scheme,
                                         const TestFunction& phi, double y,
                                         std::size_t samples, std::uint64_t seed);

struct DirichletFormEstimate {
  /// E[T^2 phi'(Y) chi'(Y)].
  mc::Estimate plug_in;
  /// lim E[(phi(Y_eps) - phi(Y)) (chi(Y_eps) - chi(Y))] / eps.
  mc::Estimate increments;
  /// Per-sample difference of the two routes.
  mc::Estimate difference;
};

/// Throws NumericalError when the routes differ by more than 5 standard errors.
DirichletFormEstimate dirichlet_form_estimate(const PerturbationScheme& scheme,
                                              const TestFunction& phi,
                                              const TestFunction& chi,
                                              std::size_t samples, std::uint64_t seed);

enum class Locality { kLocal, kNonLocal, kInconclusive };
std::string to_string(Locality l);

struct LocalityResult {
  Locality verdict = Locality::kInconclusive;
  /// lim E[(phi(Y_eps) - phi(Y))^4] / eps.
  mc::Estimate fourth_moment;
  double threshold = 0.0;
};

/// Local when the 3 s.e. interval of the limit lies below `threshold`,
/// non-local when it lies above, inconclusive otherwise.
LocalityResult locality_test(const PerturbationScheme& scheme, const TestFunction& phi,
                             std::size_t samples, std::uint64_t seed,
                             double threshold = 1e-3);

enum class Operator { kTheoretical, kPractical, kSymmetric, kSingular };

struct DerivationCheck {
  std::vector<double> grid;
  /// Op[phi chi] - Op[phi] chi - phi Op[chi] at each grid point.
  std::vector<double> residual;
  std::vector<double> standard_error;
  double fraction_within = 0.0;
  /// At least 95% of grid points within 3 s.e. of zero.
  bool passed = false;
};

DerivationCheck derivation_property_check(const PerturbationScheme& scheme,
                                          const TestFunction& phi,
                                          const TestFunction& chi,
                                          std::size_t samples, std::uint64_t seed,
                                          Operator op = Operator::kSingular);

}  // namespace errcalc::bias
