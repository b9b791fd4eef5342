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

#include <cmath>

#include <gtest/gtest.h>

#include "errcalc/clusters.hpp"
#include "errcalc/error_core.hpp"
#include "errcalc/errors.hpp"
#include "errcalc/montecarlo.hpp"

namespace errcalc::clusters {
namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Eigen::MatrixXd scalar_matrix(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

struct ThreadGuard {
  unsigned saved = mc::thread_count();
  ~ThreadGuard() { mc::set_thread_count(saved); }
};

void expect_agrees_with_propagate(const SmoothMap& f, const ErroneousQuantity& x,
                                  const ClusterEstimate& e, double k) {
  const ErroneousQuantity ref = propagate(x, f);
  for (Eigen::Index i = 0; i < ref.dimension(); ++i) {
    for (Eigen::Index j = 0; j < ref.dimension(); ++j) {
      EXPECT_LE(std::abs(e.gamma_hat(i, j) - ref.gamma()(i, j)), k * e.gamma_se(i, j))
          << "gamma(" << i << "," << j << ") " << e.gamma_hat(i, j) << " vs "
          << ref.gamma()(i, j);
    }
    EXPECT_LE(std::abs(e.bias()(i) - ref.bias()(i)), k * e.bias_standard_error()(i))
        << "bias(" << i << ") " << e.bias()(i) << " vs " << ref.bias()(i);
  }
}

TEST(RunCluster, IdentityMap) {
  const double s = 1e-3;
  const auto cfg = ClusterConfig::scaled(vec({0.7}), scalar_matrix(1.0), s, 20000, 1);
  const auto e = run_cluster(SmoothMap::parse({"x"}, {"x"}), cfg);
  EXPECT_LE(std::abs(e.gamma_hat(0, 0) - 1.0), 5 * e.gamma_se(0, 0));
  EXPECT_LE(std::abs(e.bias_hat(0)), 5 * e.bias_se(0));
  EXPECT_NEAR(e.gamma_se(0, 0), std::sqrt(2.0 / 20000.0), 0.1 * std::sqrt(2.0 / 20000.0));
}

TEST(RunCluster, SquareAtTwoMatchesPropagate) {
  const auto f = SmoothMap::parse({"x^2"}, {"x"});
  const auto cfg = ClusterConfig::scaled(vec({2.0}), scalar_matrix(1.0), 1e-4, 1000000, 2);
  const auto e = run_cluster(f, cfg);
  EXPECT_LE(std::abs(e.gamma_hat(0, 0) - 16.0), 5 * e.gamma_se(0, 0));
  // bias_hat -> f'' = 2, half of it is the propagated bias per unit variance.
  EXPECT_LE(std::abs(e.bias_hat(0) - 2.0), 5 * e.bias_se(0));
  expect_agrees_with_propagate(f, ErroneousQuantity(vec({2.0}), vec({0.0}), scalar_matrix(1.0)),
                               e, 5.0);
}

TEST(RunCluster, ConstantModelIsExactlyZero) {
  const auto cfg = ClusterConfig::scaled(vec({1.0, 2.0}), Eigen::MatrixXd::Identity(2, 2),
                                         1e-2, 5000, 3);
  const auto e = run_cluster(SmoothMap::parse({"3"}, {"x", "y"}), cfg);
  EXPECT_EQ(e.gamma_hat(0, 0), 0.0);
  EXPECT_EQ(e.bias_hat(0), 0.0);
  EXPECT_EQ(e.gamma_se(0, 0), 0.0);
}

struct OracleCase {
  std::vector<std::string> outputs;
  std::vector<std::string> vars;
  Eigen::VectorXd point;
  Eigen::MatrixXd gamma;
};

std::vector<OracleCase> oracle_bank() {
  Eigen::MatrixXd g2(2, 2);
  g2 << 1.0, 0.3, 0.3, 0.5;
  Eigen::MatrixXd g3(3, 3);
  g3 << 0.5, 0.1, 0.0, 0.1, 0.4, -0.1, 0.0, -0.1, 0.3;
  return {
      {{"x^2"}, {"x"}, vec({2.0}), scalar_matrix(1.0)},
      {{"exp(x)*y"}, {"x", "y"}, vec({0.3, 1.2}), g2},
      {{"log(x+y)", "sin(x)*cos(y)"}, {"x", "y"}, vec({1.1, 0.8}), g2},
      {{"x*y", "x/y", "sqrt(x^2+y^2)"}, {"x", "y"}, vec({1.5, 0.7}), g2},
      {{"x*y*z + exp(z)", "x - 2*y + z"}, {"x", "y", "z"}, vec({0.4, -0.9, 0.2}), g3},
      {{"sqrt(x)*exp(-y)"}, {"x", "y"}, vec({2.0, 0.5}), Eigen::MatrixXd::Identity(2, 2)},
  };
}

TEST(RunCluster, AgreesWithPropagateOnBank) {
  std::uint64_t seed = 10;
  for (const auto& c : oracle_bank()) {
    SCOPED_TRACE(c.outputs.front());
    const auto f = SmoothMap::parse(c.outputs, c.vars);
    const auto cfg = ClusterConfig::scaled(c.point, c.gamma, 1e-3, 100000, seed++);
    const auto e = run_cluster(f, cfg);
    expect_agrees_with_propagate(f, ErroneousQuantity(c.point, Eigen::VectorXd::Zero(c.point.size()), c.gamma), e, 5.0);
    EXPECT_TRUE(e.gamma_hat.isApprox(e.gamma_hat.transpose(), 0.0));
    EXPECT_FALSE(e.small_cluster);
  }
}

TEST(RunCluster, UniformEllipsoidAgreesWithPropagate) {
  const auto c = oracle_bank()[3];
  const auto f = SmoothMap::parse(c.outputs, c.vars);
  const auto cfg = ClusterConfig::scaled(c.point, c.gamma, 1e-3, 100000, 77,
                                         CloudDistribution::kUniformEllipsoid);
  const auto e = run_cluster(f, cfg);
  EXPECT_LT(e.cloud.dispersion_error, 0.02);
  expect_agrees_with_propagate(f, ErroneousQuantity(c.point, Eigen::VectorXd::Zero(2), c.gamma), e, 5.0);
}

TEST(RunCluster, DriftEntersTheBias) {
  const auto f = SmoothMap::parse({"exp(x) + y^2"}, {"x", "y"});
  const Eigen::VectorXd b = vec({0.5, -1.0});
  const ErroneousQuantity x(vec({0.2, 0.6}), b, Eigen::MatrixXd::Identity(2, 2));
  auto cfg = ClusterConfig::scaled(x.value(), x.gamma(), 1e-3, 200000, 5);
  cfg.drift = b;
  expect_agrees_with_propagate(f, x, run_cluster(f, cfg), 5.0);
}

TEST(RunCluster, EntrywiseSymmetryAndNonNegativeDiagonal) {
  for (const auto& c : oracle_bank()) {
    const auto e = run_cluster(SmoothMap::parse(c.outputs, c.vars),
                               ClusterConfig::scaled(c.point, c.gamma, 1e-2, 500, 9));
    EXPECT_EQ(e.gamma_hat, e.gamma_hat.transpose());
    EXPECT_EQ(e.gamma_se, e.gamma_se.transpose());
    for (Eigen::Index i = 0; i < e.gamma_hat.rows(); ++i) {
      EXPECT_GE(e.gamma_hat(i, i), -e.gamma_se(i, i));
    }
  }
}

TEST(Jackknife, ClosedFormMatchesBruteForce) {
  const auto c = oracle_bank()[3];
  const std::size_t M = 50;
  const double s = 0.05;
  const auto cfg = ClusterConfig::scaled(c.point, c.gamma, s, M, 21);
  const auto f = SmoothMap::parse(c.outputs, c.vars);
  // One block, so the model sees the center and then the cloud in order.
  std::vector<Eigen::VectorXd> seen;
  BlackBox box{2, 3, [&](const Eigen::VectorXd& p) {
                 seen.push_back(f.evaluate(p));
                 return seen.back();
               }};
  const auto e = run_cluster(box, cfg);
  ASSERT_EQ(seen.size(), M + 1);
  seen.erase(seen.begin());

  // Leave-one-out covariances computed directly.
  Eigen::MatrixXd values(3, static_cast<Eigen::Index>(M));
  for (std::size_t i = 0; i < M; ++i) values.col(static_cast<Eigen::Index>(i)) = seen[i];
  std::vector<Eigen::MatrixXd> loo;
  Eigen::MatrixXd loo_mean = Eigen::MatrixXd::Zero(3, 3);
  for (std::size_t j = 0; j < M; ++j) {
    Eigen::MatrixXd rest(3, static_cast<Eigen::Index>(M - 1));
    for (std::size_t i = 0, k = 0; i < M; ++i) {
      if (i != j) rest.col(static_cast<Eigen::Index>(k++)) = values.col(static_cast<Eigen::Index>(i));
    }
    const Eigen::MatrixXd d = rest.colwise() - rest.rowwise().mean();
    loo.push_back(d * d.transpose() / static_cast<double>(M - 2) / s);
    loo_mean += loo.back() / static_cast<double>(M);
  }
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(3, 3);
  for (const auto& t : loo) var += (t - loo_mean).cwiseAbs2();
  var *= static_cast<double>(M - 1) / static_cast<double>(M);
  const Eigen::MatrixXd se = var.cwiseSqrt();
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      EXPECT_NEAR(e.gamma_se(i, j), se(i, j), 1e-8 * se(i, j)) << i << "," << j;
    }
  }
  // The full-sample estimate reproduces too.
  const Eigen::MatrixXd d = values.colwise() - values.rowwise().mean();
  EXPECT_TRUE(e.gamma_hat.isApprox(d * d.transpose() / static_cast<double>(M - 1) / s, 1e-12));
}

TEST(Jackknife, StandardErrorsAreCalibrated) {
  // Replicate spread of gamma_hat against the average jackknife s.e.
  const auto f = SmoothMap::parse({"exp(x)*y"}, {"x", "y"});
  const auto c = oracle_bank()[1];
  mc::Moments spread, se;
  for (std::uint64_t r = 0; r < 300; ++r) {
    const auto e = run_cluster(f, ClusterConfig::scaled(c.point, c.gamma, 1e-3, 2000, 1000 + r));
    spread.add(e.gamma_hat(0, 0));
    se.add(e.gamma_se(0, 0));
  }
  const double sd = spread.estimate().standard_error * std::sqrt(spread.n);
  const double ratio = sd / se.estimate().value;
  EXPECT_GT(ratio, 0.85);
  EXPECT_LT(ratio, 1.15);
}

TEST(RunCluster, DeterministicAcrossRerunsAndThreads) {
  ThreadGuard guard;
  const auto c = oracle_bank()[4];
  const auto f = SmoothMap::parse(c.outputs, c.vars);
  const auto cfg = ClusterConfig::scaled(c.point, c.gamma, 1e-3, 30000, 99);
  mc::set_thread_count(1);
  const auto a = run_cluster(f, cfg);
  const auto b = run_cluster(f, cfg);
  mc::set_thread_count(4);
  const auto d = run_cluster(f, cfg);
  for (const auto* x : {&b, &d}) {
    EXPECT_EQ(a.gamma_hat, x->gamma_hat);
    EXPECT_EQ(a.gamma_se, x->gamma_se);
    EXPECT_EQ(a.bias_hat, x->bias_hat);
    EXPECT_EQ(a.bias_se, x->bias_se);
    EXPECT_EQ(a.cloud.condition_number, x->cloud.condition_number);
  }
}

TEST(RunCluster, MinimalClusterIsFlagged) {
  const auto c = oracle_bank()[1];
  const auto e = run_cluster(SmoothMap::parse(c.outputs, c.vars),
                             ClusterConfig::scaled(c.point, c.gamma, 1e-3, 4, 4));
  EXPECT_TRUE(e.small_cluster);
  EXPECT_EQ(e.points, 4u);
  EXPECT_TRUE(e.gamma_hat.allFinite());
  EXPECT_TRUE(e.gamma_se.allFinite());
  EXPECT_GT(e.gamma_se(0, 0), 0.0);
}

TEST(RunCluster, EvaluationFailureNamesThePoint) {
  const auto cfg = ClusterConfig::scaled(vec({0.05}), scalar_matrix(1.0), 1e-2, 10000, 6);
  try {
    run_cluster(SmoothMap::parse({"log(x)"}, {"x"}), cfg);
    FAIL() << "expected ClusterEvaluationError";
  } catch (const ClusterEvaluationError& e) {
    EXPECT_LE(e.point()(0), 0.0);
    EXPECT_NE(std::string(e.what()).find("cloud point " + std::to_string(e.index())),
              std::string::npos);
  }

  BlackBox box{1, 1, [](const Eigen::VectorXd& p) -> Eigen::VectorXd {
                 if (p(0) > 0.1) throw std::runtime_error("out of range");
                 return p;
               }};
  EXPECT_THROW(run_cluster(box, cfg), ClusterEvaluationError);
}

TEST(RunCluster, SingularCloudIsRejected) {
  const auto cfg = ClusterConfig::scaled(vec({1.0}), scalar_matrix(1.0), 1e-40, 100, 7);
  EXPECT_THROW(run_cluster(SmoothMap::parse({"x"}, {"x"}), cfg), NumericalError);
}

TEST(ClusterConfig, Validation) {
  const auto f = SmoothMap::parse({"x + y"}, {"x", "y"});
  auto good = ClusterConfig::scaled(vec({0.0, 0.0}), Eigen::MatrixXd::Identity(2, 2), 1.0, 10, 1);
  EXPECT_NO_THROW(good.validate());

  auto small = good;
  small.points = 3;
  EXPECT_THROW(run_cluster(f, small), ValidationError);

  auto indefinite = good;
  indefinite.dispersion(0, 0) = -1.0;
  EXPECT_THROW(run_cluster(f, indefinite), ValidationError);

  auto zero = good;
  zero.dispersion.setZero();
  EXPECT_THROW(run_cluster(f, zero), ValidationError);

  auto drift = good;
  drift.drift = vec({1.0});
  EXPECT_THROW(run_cluster(f, drift), DimensionError);

  EXPECT_THROW(run_cluster(SmoothMap::parse({"x"}, {"x"}), good), DimensionError);
  EXPECT_THROW(parse_distribution("cauchy"), ValidationError);
  EXPECT_EQ(parse_distribution(to_string(CloudDistribution::kUniformEllipsoid)),
            CloudDistribution::kUniformEllipsoid);
}

TEST(ErroneousModel, DegenerateLambdaCloudReducesToOmega) {
  const auto f = BlackBox::from_map(SmoothMap::parse({"w^2 * l"}, {"w", "l"}));
  const auto omega = ClusterConfig::scaled(vec({1.5}), scalar_matrix(1.0), 1e-3, 20000, 11);
  auto lambda = ClusterConfig::scaled(vec({2.0}), scalar_matrix(0.0), 1.0, 20000, 12);
  const auto both = run_cluster_erroneous_model(f, omega, lambda);
  const auto only = run_cluster(SmoothMap::parse({"w^2 * 2"}, {"w"}), omega);
  EXPECT_EQ(both.gamma_hat, only.gamma_hat);
  EXPECT_EQ(both.bias_hat, only.bias_hat);
}

TEST(ErroneousModel, SumOfUnitCloudsGivesTwo) {
  const auto f = BlackBox::from_map(SmoothMap::parse({"w + l"}, {"w", "l"}));
  const auto omega = ClusterConfig::scaled(vec({0.0}), scalar_matrix(1.0), 1.0, 50000, 13);
  const auto lambda = ClusterConfig::scaled(vec({0.0}), scalar_matrix(1.0), 1.0, 50000, 14);
  const auto e = run_cluster_erroneous_model(f, omega, lambda);
  EXPECT_LE(std::abs(e.gamma_hat(0, 0) - 2.0), 5 * e.gamma_se(0, 0));
  EXPECT_LE(std::abs(e.bias_hat(0)), 5 * e.bias_se(0));
  EXPECT_EQ(e.points, 100000u);

  auto same = lambda;
  same.seed = omega.seed;
  EXPECT_THROW(run_cluster_erroneous_model(f, omega, same), ValidationError);
}

TEST(ErroneousModel, AbsentLambdaMatchesRunCluster) {
  const auto map = SmoothMap::parse({"w^2"}, {"w"});
  const auto omega = ClusterConfig::scaled(vec({0.8}), scalar_matrix(1.0), 1e-2, 8000, 15);
  ClusterConfig lambda;
  const auto a = run_cluster_erroneous_model(BlackBox::from_map(map), omega, lambda);
  const auto b = run_cluster(map, omega);
  EXPECT_EQ(a.gamma_hat, b.gamma_hat);
  EXPECT_EQ(a.gamma_se, b.gamma_se);
  EXPECT_EQ(a.bias_hat, b.bias_hat);
  EXPECT_EQ(a.scale, b.scale);
}

TEST(Convergence, LinearModelDecaysAtTheSquareRootRate) {
  const auto map = SmoothMap::parse({"2*x - y"}, {"x", "y"});
  Eigen::MatrixXd g(2, 2);
  g << 1.0, 0.2, 0.2, 0.5;
  const ErroneousQuantity x(vec({0.3, -0.4}), Eigen::VectorXd::Zero(2), g);
  ConvergenceOptions opt;
  opt.point_counts = {256, 1024, 4096, 16384};
  opt.scales = {1e-3, 1.0};
  opt.replicates = 24;
  opt.seed = 17;
  const auto study = convergence_study(BlackBox::from_map(map), x, propagate(x, map), opt);
  ASSERT_EQ(study.table.size(), 8u);
  for (const auto& fit : study.gamma_vs_points) {
    EXPECT_GE(fit.exponent, -0.6);
    EXPECT_LE(fit.exponent, -0.4);
  }
  for (const auto& fit : study.bias_vs_points) {
    EXPECT_GE(fit.exponent, -0.6);
    EXPECT_LE(fit.exponent, -0.4);
  }
}

TEST(Convergence, ExponentialShowsTheScaleTradeOff) {
  // Large clouds pick up curvature in gamma_hat; small clouds leave the
  // mean discrepancy buried in sampling noise.
  const auto map = SmoothMap::parse({"exp(x)"}, {"x"});
  const ErroneousQuantity x(vec({0.0}), vec({0.0}), scalar_matrix(1.0));
  ConvergenceOptions opt;
  opt.point_counts = {10000};
  opt.scales = {1e-1, 1e-2, 1e-3};
  opt.replicates = 16;
  opt.seed = 19;
  const auto study = convergence_study(BlackBox::from_map(map), x, propagate(x, map), opt);
  const auto& t = study.table;
  EXPECT_GT(t[0].gamma_rms, 3.0 * t[2].gamma_rms);
  EXPECT_GT(t[2].bias_rms, 3.0 * t[0].bias_rms);
  EXPECT_GT(study.gamma_vs_scale[0].exponent, 0.0);
  EXPECT_LT(study.bias_vs_scale[0].exponent, 0.0);
  ASSERT_EQ(study.best_scale.size(), 1u);
}

TEST(Convergence, AffineModelHasNoScaleDependence) {
  // Weighted least-squares slope of gamma_hat against log10(scale).
  const auto map = SmoothMap::parse({"3*x + 0.5*y - 1"}, {"x", "y"});
  Eigen::MatrixXd g(2, 2);
  g << 1.0, -0.4, -0.4, 2.0;
  const double exact = propagate(ErroneousQuantity(vec({1.0, 1.0}), Eigen::VectorXd::Zero(2), g), map)
                           .gamma()(0, 0);
  double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
  std::uint64_t seed = 200;
  for (double s : {1e-6, 1e-4, 1e-2, 1.0, 1e2}) {
    const auto e = run_cluster(map, ClusterConfig::scaled(vec({1.0, 1.0}), g, s, 20000, seed++));
    EXPECT_LE(std::abs(e.gamma_hat(0, 0) - exact), 5 * e.gamma_se(0, 0));
    const double w = 1.0 / (e.gamma_se(0, 0) * e.gamma_se(0, 0));
    const double lx = std::log10(s);
    sw += w;
    swx += w * lx;
    swy += w * e.gamma_hat(0, 0);
    swxx += w * lx * lx;
    swxy += w * lx * e.gamma_hat(0, 0);
  }
  const double sxx = swxx - swx * swx / sw;
  const double slope = (swxy - swx * swy / sw) / sxx;
  EXPECT_LE(std::abs(slope), 3.0 / std::sqrt(sxx));
}

TEST(Convergence, PowerLawFit) {
  const auto fit = fit_power_law({1, 10, 100}, {3, 0.3, 0.03});
  EXPECT_NEAR(fit.exponent, -1.0, 1e-12);
  EXPECT_NEAR(std::exp(fit.intercept), 3.0, 1e-12);
  EXPECT_THROW(fit_power_law({1}, {1}), ValidationError);
}

}  // namespace
}  // namespace errcalc::clusters
