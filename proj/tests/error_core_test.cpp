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
#include <numbers>

#include <gtest/gtest.h>

#include "errcalc/error_core.hpp"
#include "errcalc/errors.hpp"
#include "support/random_expressions.hpp"

namespace errcalc {
namespace {

SmoothMap map_of(const std::vector<std::string>& sources,
                 const std::vector<std::string>& vars) {
  return SmoothMap::parse(sources, vars);
}

Eigen::MatrixXd random_psd(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> rank(1, static_cast<int>(n));
  Eigen::MatrixXd a(n, rank(rng));
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = 0.3 * g(rng);
  Eigen::MatrixXd m = a * a.transpose();
  return (m + m.transpose()) / 2.0;
}

// L(F^2) - 2 F L(F) cancels terms of size |F| |L F|; round-off is measured
// against those operands rather than against the (possibly tiny) difference.
double cancellation_scale(const Jet& j, const GeneratorL& l) {
  double terms = 0.0;
  for (Eigen::Index i = 0; i < j.gradient.size(); ++i) {
    terms += l.variances(i) * (std::abs(j.value * j.hessian(i, i)) +
                               j.gradient(i) * j.gradient(i));
    if (l.drift.size() > 0) terms += std::abs(l.drift(i) * j.value * j.gradient(i));
  }
  return terms;
}

TEST(Propagate, SquareAtTwo) {
  const auto x = ErroneousQuantity(Eigen::VectorXd::Constant(1, 2.0),
                                   Eigen::VectorXd::Zero(1),
                                   Eigen::MatrixXd::Constant(1, 1, 0.01));
  const auto y = propagate(x, map_of({"x^2"}, {"x"}));
  EXPECT_DOUBLE_EQ(y.value()(0), 4.0);
  EXPECT_NEAR(y.gamma()(0, 0), 0.16, 1e-15);
  EXPECT_NEAR(y.bias()(0), 0.01, 1e-15);
}

TEST(Propagate, IdentityReturnsInput) {
  Eigen::Matrix2d g;
  g << 2.0, 0.5, 0.5, 1.0;
  const ErroneousQuantity x(Eigen::Vector2d(1, -3), Eigen::Vector2d(0.1, 0.2), g);
  const auto y = propagate(x, map_of({"a", "b"}, {"a", "b"}));
  EXPECT_EQ(y.value(), x.value());
  EXPECT_EQ(y.bias(), x.bias());
  EXPECT_EQ(y.gamma(), x.gamma());
}

TEST(Propagate, ConstantMapHasNoError) {
  const auto x = ErroneousQuantity::independent(Eigen::Vector2d(1, 2), Eigen::Vector2d(3, 4));
  const auto y = propagate(x, map_of({"7"}, {"a", "b"}));
  EXPECT_EQ(y.gamma()(0, 0), 0.0);
  EXPECT_EQ(y.bias()(0), 0.0);
}

TEST(Propagate, DimensionMismatch) {
  const auto x = ErroneousQuantity::independent(Eigen::Vector2d(1, 2), Eigen::Vector2d(3, 4));
  EXPECT_THROW(propagate(x, map_of({"a"}, {"a"})), DimensionError);
  EXPECT_THROW(ErroneousQuantity(Eigen::Vector2d(1, 2), Eigen::VectorXd::Zero(1),
                                 Eigen::Matrix2d::Identity()),
               DimensionError);
}

TEST(Propagate, DomainViolationPropagates) {
  const auto x = ErroneousQuantity::independent(Eigen::VectorXd::Constant(1, -1.0),
                                                Eigen::VectorXd::Ones(1));
  EXPECT_THROW(propagate(x, map_of({"log(x)"}, {"x"})), DomainError);
}

TEST(ErroneousQuantityTest, PsdRepairAndRejection) {
  Eigen::Matrix2d tiny;
  tiny << 1.0, 1.0, 1.0, 1.0 - 1e-15;
  EXPECT_NO_THROW(ErroneousQuantity(Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), tiny));
  Eigen::Matrix2d bad;
  bad << 1.0, 2.0, 2.0, 1.0;
  try {
    ErroneousQuantity(Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), bad);
    FAIL() << "expected rejection";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("eigenvalue -0.99999999999999"), std::string::npos) << e.what();
  }
}

TEST(BiasChainRule, ScalarCaseIsExact) {
  testing::ExpressionGenerator gen(1, 8);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    const Expression e = gen.expression(3);
    const double v = gen.point()(0);
    const double b = u(gen.rng()) - 1.0;
    const double s2 = u(gen.rng());
    const ErroneousQuantity x(Eigen::VectorXd::Constant(1, v), Eigen::VectorXd::Constant(1, b),
                              Eigen::MatrixXd::Constant(1, 1, s2));
    const auto y = propagate(x, SmoothMap::from_expression(e));
    const Jet j = jet(e, x.value());
    ASSERT_EQ(y.bias()(0), j.gradient(0) * b + 0.5 * j.hessian(0, 0) * s2);
    ASSERT_EQ(y.gamma()(0, 0), j.gradient(0) * s2 * j.gradient(0));
  }
}

TEST(Coherence, CompositionMatchesStepwise) {
  testing::ExpressionGenerator inner_gen(3, 31);
  testing::ExpressionGenerator outer_gen(2, 32);
  for (int i = 0; i < 200; ++i) {
    const std::vector<Expression> inner{inner_gen.expression(2), inner_gen.expression(2)};
    const Expression outer = outer_gen.expression(2);
    const Eigen::VectorXd p = inner_gen.point();
    const ErroneousQuantity x(p, 0.1 * inner_gen.point(), random_psd(inner_gen.rng(), 3));

    const auto stepwise =
        propagate(propagate(x, SmoothMap::from_expressions(inner)),
                  SmoothMap::from_expression(outer));
    const auto direct =
        propagate(x, SmoothMap::from_expression(substitute(outer, inner)));
    ASSERT_LE(testing::scaled_error(stepwise.value(), direct.value()), 1e-9);
    ASSERT_LE(testing::scaled_error(stepwise.gamma(), direct.gamma()), 1e-9);
    ASSERT_LE(testing::scaled_error(stepwise.bias(), direct.bias()), 1e-9);
  }
}

TEST(Coherence, RewriteInvariance) {
  testing::ExpressionGenerator gen(3, 77);
  for (int i = 0; i < 500; ++i) {
    const auto [lhs, rhs] = gen.equivalent_pair(1 + i % 3);
    ASSERT_NE(lhs, rhs);
    const ErroneousQuantity x(gen.point(), gen.point(), random_psd(gen.rng(), 3));
    const auto a = propagate(x, SmoothMap::from_expression(lhs));
    const auto b = propagate(x, SmoothMap::from_expression(rhs));
    ASSERT_LE(testing::scaled_error(a.gamma(), b.gamma()), 1e-9) << lhs.to_string();
    ASSERT_LE(testing::scaled_error(a.bias(), b.bias()), 1e-9) << lhs.to_string();
  }
}

TEST(Coherence, UglyPipelineCounterexample) {
  const std::vector<std::string> v{"v1", "v2"};
  const std::vector<std::string> u{"u1", "u2"};
  const std::vector<SmoothMap> stages{map_of({"v1 + v2", "v1 - v2"}, v),
                                      map_of({"u1 + u2"}, u)};
  const Eigen::Vector2d point(0.3, -1.2);
  const auto ugly = ugly_pipeline(Eigen::Vector2d(1, 1), point, stages);
  EXPECT_EQ(ugly.stepwise(0), 4.0);
  EXPECT_EQ(ugly.direct(0), 2.0);
  EXPECT_GT(ugly.relative_discrepancy(), 0.5);
  EXPECT_EQ(ugly_propagate(Eigen::Vector2d(1, 1), map_of({"2*v1"}, v), point), 2.0);

  const auto gauss = gauss_pipeline(
      ErroneousQuantity::independent(point, Eigen::Vector2d(1, 1)), stages);
  EXPECT_EQ(gauss.stepwise(0), 4.0);
  EXPECT_EQ(gauss.direct(0), 4.0);
  EXPECT_EQ(gauss.relative_discrepancy(), 0.0);
}

TEST(Ugly, SingleInputAgreesWithGauss) {
  const auto f = map_of({"-3*x"}, {"x"});
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 1.0);
  const double ugly = ugly_propagate(Eigen::VectorXd::Constant(1, 0.5), f, p);
  const auto gauss = propagate(
      ErroneousQuantity::independent(p, Eigen::VectorXd::Constant(1, 0.25)), f);
  EXPECT_DOUBLE_EQ(ugly, std::sqrt(gauss.gamma()(0, 0)));
}

TEST(CarreDuChamp, Examples) {
  EXPECT_DOUBLE_EQ(carre_du_champ(GeneratorL(Eigen::VectorXd::Constant(1, 4.0)),
                                  map_of({"v"}, {"v"}), Eigen::VectorXd::Constant(1, 1.3)),
                   4.0);
  EXPECT_DOUBLE_EQ(carre_du_champ(GeneratorL(Eigen::Vector2d(1, 1)),
                                  map_of({"v1*v2"}, {"v1", "v2"}), Eigen::Vector2d(3, 5)),
                   34.0);
  EXPECT_EQ(carre_du_champ(GeneratorL(Eigen::Vector2d::Zero()),
                           map_of({"exp(v1)*sin(v2)"}, {"v1", "v2"}), Eigen::Vector2d(3, 5)),
            0.0);
  EXPECT_THROW(GeneratorL(Eigen::Vector2d(1, -1)), ValidationError);
}

TEST(CarreDuChamp, GeneratorIdentityAndDriftInvariance) {
  testing::ExpressionGenerator gen(3, 404);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 500; ++i) {
    const Expression e = gen.expression(1 + i % 4);
    const SmoothMap f = SmoothMap::from_expression(e);
    const Eigen::VectorXd p = gen.point();
    Eigen::Vector3d s2;
    for (int k = 0; k < 3; ++k) s2(k) = u(gen.rng());
    const Jet j = jet(e, p);
    const double expected = (s2.array() * j.gradient.array().square()).sum();
    const GeneratorL plain_l(s2);
    const GeneratorL drift_l(s2, 3.0 * gen.point());
    const double plain = carre_du_champ(plain_l, f, p);
    const double drifted = carre_du_champ(drift_l, f, p);
    ASSERT_LE(std::abs(plain - expected),
              1e-10 * std::max(expected, cancellation_scale(j, plain_l)))
        << e.to_string();
    ASSERT_LE(std::abs(drifted - expected),
              1e-10 * std::max(expected, cancellation_scale(j, drift_l)))
        << e.to_string();
  }
}

TEST(Polarize, Examples) {
  const std::vector<std::string> v{"v1", "v2"};
  const auto x = ErroneousQuantity::independent(Eigen::Vector2d(0.5, 2), Eigen::Vector2d(1, 4));
  EXPECT_NEAR(polarize(x, map_of({"v1 + v2"}, v), map_of({"v1 - v2"}, v)), -3.0, 1e-14);
  EXPECT_EQ(polarize(x, map_of({"v1"}, v), map_of({"v2"}, v)), 0.0);
  const auto f = map_of({"v1*exp(v2)"}, v);
  EXPECT_NEAR(polarize(x, f, f), propagate(x, f).gamma()(0, 0),
              1e-12 * propagate(x, f).gamma()(0, 0));
}

TEST(Polarize, MatchesBilinearForm) {
  testing::ExpressionGenerator gen(3, 5150);
  for (int i = 0; i < 300; ++i) {
    const auto f = SmoothMap::from_expression(gen.expression(2));
    const auto g = SmoothMap::from_expression(gen.expression(2));
    const ErroneousQuantity x(gen.point(), Eigen::Vector3d::Zero(), random_psd(gen.rng(), 3));
    const double bilinear = gamma_bilinear(x, f, g);
    const double pol = polarize(x, f, g);
    const double scale = std::sqrt(gamma_bilinear(x, f, f) * gamma_bilinear(x, g, g));
    ASSERT_LE(std::abs(pol - bilinear), 1e-10 * std::max(scale, 1e-300));
  }
}

TEST(Psd, PropagatedGammaStaysPsd) {
  testing::ExpressionGenerator gen(3, 1717);
  for (int i = 0; i < 1000; ++i) {
    const SmoothMap f = SmoothMap::from_expressions(
        {gen.expression(2), gen.expression(2), gen.expression(2), gen.expression(1)});
    const ErroneousQuantity x(gen.point(), Eigen::Vector3d::Zero(), random_psd(gen.rng(), 3));
    const Propagation p = propagate_detailed(x, f);
    const SpectrumCheck s = check_spectrum(p.gamma);
    ASSERT_TRUE(s.symmetric);
    ASSERT_GE(s.min_eigenvalue, -1e-12 * std::max(0.0, s.max_eigenvalue));
  }
}

TEST(Sharp, Examples) {
  const std::vector<std::string> v{"v1", "v2", "v3"};
  const auto id = ErroneousQuantity::independent(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d::Ones());
  const auto c = sharp(id, map_of({"v1"}, v));
  EXPECT_EQ(c.coefficients, Eigen::Vector3d(1, 0, 0));
  EXPECT_EQ(c.squared_norm(), 1.0);

  const auto x = ErroneousQuantity::independent(Eigen::Vector2d(1, 2), Eigen::Vector2d(4, 9));
  const auto s = sharp(x, map_of({"v1 + v2"}, {"v1", "v2"}));
  EXPECT_NEAR(s.squared_norm(), 13.0, 1e-12);

  const mc::Estimate m = s.sample_second_moment(1'000'000, 42);
  EXPECT_LE(std::abs(m.value - 13.0), 3.0 * m.standard_error)
      << m.value << " +- " << m.standard_error;
}

TEST(Sharp, NormMatchesCarreDuChamp) {
  testing::ExpressionGenerator gen(3, 606);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 300; ++i) {
    const Expression e = gen.expression(3);
    const SmoothMap f = SmoothMap::from_expression(e);
    Eigen::Vector3d s2;
    for (int k = 0; k < 3; ++k) s2(k) = u(gen.rng());
    const Eigen::VectorXd p = gen.point();
    const GeneratorL l(s2);
    const double cdc = carre_du_champ(l, f, p);
    const auto x = ErroneousQuantity::independent(p, s2);
    const double norm = sharp(x, f).squared_norm();
    const double g = propagate(x, f).gamma()(0, 0);
    ASSERT_LE(std::abs(norm - g), 1e-12 * g) << e.to_string();
    ASSERT_LE(std::abs(norm - cdc),
              1e-12 * std::max(cdc, cancellation_scale(jet(e, p), l)))
        << e.to_string();
  }
}

TEST(Sharp, CorrelatedGammaUsesSquareRoot) {
  testing::ExpressionGenerator gen(3, 607);
  for (int i = 0; i < 100; ++i) {
    const SmoothMap f = SmoothMap::from_expression(gen.expression(3));
    const ErroneousQuantity x(gen.point(), Eigen::Vector3d::Zero(), random_psd(gen.rng(), 3));
    const double g = propagate(x, f).gamma()(0, 0);
    ASSERT_LE(std::abs(sharp(x, f).squared_norm() - g), 1e-12 * std::max(g, 1e-300) + 1e-300);
  }
}

TEST(Laplace, FirstMoment) {
  EXPECT_NEAR(gaussian_mean_absolute(1.0), std::sqrt(2.0 / std::numbers::pi), 1e-15);
  EXPECT_NEAR(gaussian_mean_absolute(1.0), 0.79788, 1e-5);
  EXPECT_DOUBLE_EQ(laplace_first_moment(Eigen::VectorXd::Constant(1, 0.7),
                                        map_of({"x"}, {"x"}), Eigen::VectorXd::Zero(1)),
                   0.7);
  EXPECT_DOUBLE_EQ(laplace_first_moment(Eigen::Vector2d(0.3, 0.3),
                                        map_of({"v1 + v2"}, {"v1", "v2"}),
                                        Eigen::Vector2d(1, 1)),
                   std::sqrt(2.0) * 0.3);
}

TEST(Laplace, SmallGaussianErrorsOracle) {
  // E|e_1 + e_2| for independent N(0, s^2): sqrt(2/pi) * sqrt(2) * s.
  const double s = 1e-3;
  auto rng = mc::substream(9, 0);
  std::normal_distribution<double> g;
  mc::Moments m;
  for (int i = 0; i < 400'000; ++i) m.add(std::abs(s * g(rng) + s * g(rng)));
  const mc::Estimate e = m.estimate();
  const double formula = laplace_first_moment(
      Eigen::Vector2d::Constant(gaussian_mean_absolute(s)),
      map_of({"v1 + v2"}, {"v1", "v2"}), Eigen::Vector2d(1, 1));
  EXPECT_LE(std::abs(e.value - formula), 3.0 * e.standard_error);
}

TEST(Fisher, Examples) {
  const auto doubled = fisher_transport(Eigen::MatrixXd::Constant(1, 1, 0.7),
                                        map_of({"2*t"}, {"t"}), Eigen::VectorXd::Ones(1));
  EXPECT_DOUBLE_EQ(doubled.precision(0, 0), 2.8);
  EXPECT_FALSE(doubled.degenerate);

  Eigen::Matrix2d p;
  p << 2.0, 0.3, 0.3, 1.0;
  const std::vector<std::string> t{"t1", "t2"};
  EXPECT_EQ(fisher_transport(p, map_of({"t1", "t2"}, t), Eigen::Vector2d(1, 2)).precision, p);

  const auto rot = fisher_transport(Eigen::Matrix2d::Identity(),
                                    map_of({"t1 + t2", "t1 - t2"}, t), Eigen::Vector2d(1, 2));
  EXPECT_EQ(rot.precision, Eigen::Matrix2d(2.0 * Eigen::Matrix2d::Identity()));

  const auto flat = fisher_transport(Eigen::Matrix2d::Identity(),
                                     map_of({"t1 + t2", "2*t1 + 2*t2"}, t), Eigen::Vector2d(1, 2));
  EXPECT_TRUE(flat.degenerate);
  EXPECT_EQ(flat.jacobian_rank, 1);
}

TEST(Fisher, SharesPropagationCodePath) {
  testing::ExpressionGenerator gen(3, 3030);
  for (int i = 0; i < 200; ++i) {
    const SmoothMap g = SmoothMap::from_expressions(
        {gen.expression(2), gen.expression(2), gen.expression(2)});
    const Eigen::VectorXd point = gen.point();
    const ErroneousQuantity x(point, Eigen::Vector3d::Zero(), random_psd(gen.rng(), 3));
    const Propagation prop = propagate_detailed(x, g);
    const FisherTransport fisher = fisher_transport(x.gamma(), g, point);
    ASSERT_TRUE(fisher.precision == prop.gamma);
  }
}

TEST(Dichotomy, Examples) {
  const auto x = ErroneousQuantity::independent(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1));
  EXPECT_EQ(classify_dichotomy(x, {1.0, 2.0}), Dichotomy::kWeaklyStochastic);
  EXPECT_EQ(classify_dichotomy(x, {1.0, 1.0}), Dichotomy::kStronglyStochastic);
  const auto zero = ErroneousQuantity::independent(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1));
  EXPECT_EQ(classify_dichotomy(zero, {1.0, 1.0}), Dichotomy::kWeaklyStochastic);
  EXPECT_EQ(to_string(Dichotomy::kWeaklyStochastic), "weakly_stochastic");
}

TEST(SmoothMapTest, FiniteDifferenceFallback) {
  const auto fd = SmoothMap::finite_difference(
      2, {[](const Eigen::VectorXd& v) { return v(0) * v(0) * v(1); }});
  const auto x = ErroneousQuantity::independent(Eigen::Vector2d(2, 3), Eigen::Vector2d(0.1, 0.2));
  const auto exact = propagate(x, map_of({"a^2*b"}, {"a", "b"}));
  const auto approx = propagate(x, fd);
  EXPECT_NEAR(approx.gamma()(0, 0), exact.gamma()(0, 0), 1e-6);
  EXPECT_NEAR(approx.bias()(0), exact.bias()(0), 1e-5);
}

TEST(SmoothMapTest, RejectsAsymmetricHessian) {
  const auto bad = SmoothMap::analytic(2, {[](const Eigen::VectorXd& v) {
                                         Jet j = Jet::variable(v(0), 0, 2);
                                         j.hessian(0, 1) = 1.0;
                                         return j;
                                       }});
  EXPECT_THROW(bad.jet(0, Eigen::Vector2d(1, 1)), ValidationError);
}

}  // namespace
}  // namespace errcalc
