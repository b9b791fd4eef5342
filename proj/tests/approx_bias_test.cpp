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

#include "errcalc/approx_bias.hpp"
#include "errcalc/errors.hpp"

namespace errcalc::bias {
namespace {

PerturbationScheme gaussian(Coupling z, Coupling t) {
  return PerturbationScheme::diffusion(Marginal::normal(0.0, 1.0), z, t);
}

::testing::AssertionResult within(const mc::Estimate& e, double target, double k) {
  if (std::abs(e.value - target) <= k * e.standard_error) {
    return ::testing::AssertionSuccess();
  }
  return ::testing::AssertionFailure() << e.value << " +- " << e.standard_error
                                       << " vs " << target;
}

TEST(TestFunctions, DerivativesMatchDifferences) {
  for (const TestFunction& f : default_bank()) {
    for (double y : {-1.7, -0.4, 0.0, 0.3, 1.1, 1.9}) {
      const double h = 1e-5;
      EXPECT_NEAR(f.d1(y), (f.f(y + h) - f.f(y - h)) / (2 * h), 1e-6) << f.name << " " << y;
      EXPECT_NEAR(f.d2(y), (f.d1(y + h) - f.d1(y - h)) / (2 * h), 1e-5) << f.name << " " << y;
    }
  }
  EXPECT_EQ(TestFunction::bump().f(2.5), 0.0);
  EXPECT_EQ(TestFunction::bump().f(0.0), 1.0);
  const TestFunction p = TestFunction::product(TestFunction::monomial(1), TestFunction::monomial(2));
  EXPECT_DOUBLE_EQ(p.d2(1.5), 6.0 * 1.5);
}

TEST(Scheme, NoiseLaws) {
  for (NoiseLaw g : {NoiseLaw::kNormal, NoiseLaw::kRademacher, NoiseLaw::kUniform}) {
    PerturbationScheme s = gaussian(Coupling::constant(0), Coupling::constant(1));
    s.g = g;
    const NoiseCheck c = check_noise(s, 100'000, 3);
    EXPECT_TRUE(c.passed) << c.mean << " " << c.variance;
  }
}

TEST(Scheme, Validation) {
  PerturbationScheme s = gaussian(Coupling::constant(0), Coupling::constant(1));
  s.eps = {1e-2, 1e-2};
  EXPECT_THROW(s.validate(), ValidationError);
  s.eps = {1e-2};
  EXPECT_THROW(s.validate(), ValidationError);
  s.eps = {1e-2, -1e-3};
  EXPECT_THROW(s.validate(), ValidationError);
  const PerturbationScheme ok = gaussian(Coupling::constant(0), Coupling::constant(1));
  EXPECT_THROW(estimate_bias_operators(ok, default_bank(), 5000, 1), ValidationError);
}

TEST(Pairings, SecondMomentIncrement) {
  const auto s = gaussian(Coupling::constant(0), Coupling::constant(1));
  const auto est = estimate_bias_operators(
      s, {TestFunction::monomial(2), TestFunction::monomial(0)}, 100'000, 11);
  EXPECT_TRUE(within(est.pairings[0][1].theoretical, 1.0, 3.0));
  EXPECT_TRUE(std::isfinite(est.pairings[0][1].theoretical_slope));
  EXPECT_TRUE(std::isfinite(est.pairings[0][1].practical_slope));
}

TEST(Pairings, DriftMeanVanishes) {
  const auto s = gaussian(Coupling::affine(1, 0), Coupling::constant(1));
  const auto est = estimate_bias_operators(
      s, {TestFunction::monomial(1), TestFunction::monomial(0)}, 100'000, 12);
  EXPECT_TRUE(within(est.pairings[0][1].theoretical, 0.0, 3.0));
}

TEST(Pairings, UnperturbedSchemeIsNull) {
  const auto s = gaussian(Coupling::constant(0), Coupling::constant(0));
  const auto est = estimate_bias_operators(s, default_bank(), 20'000, 13);
  for (const auto& row : est.pairings) {
    for (const auto& p : row) {
      EXPECT_EQ(p.theoretical.value, 0.0);
      EXPECT_EQ(p.practical.value, 0.0);
      EXPECT_EQ(p.symmetric.value, 0.0);
      EXPECT_EQ(p.singular.value, 0.0);
    }
  }
  for (const auto& g : est.operators) {
    for (std::size_t i = 0; i < est.grid.size(); ++i) {
      EXPECT_EQ(g.theoretical[i], 0.0);
      EXPECT_EQ(g.practical[i], 0.0);
      EXPECT_EQ(g.symmetric[i], 0.0);
      EXPECT_EQ(g.singular[i], 0.0);
    }
  }
}

TEST(Pairings, RelationsAndSymmetry) {
  const auto s = gaussian(Coupling::affine(1, 0), Coupling::constant(1));
  const auto bank = default_bank();
  const auto est = estimate_bias_operators(s, bank, 50'000, 14);
  for (std::size_t a = 0; a < bank.size(); ++a) {
    for (std::size_t b = 0; b < bank.size(); ++b) {
      const PairingEstimate& p = est.pairings[a][b];
      EXPECT_EQ(p.symmetric.value, (p.theoretical.value + p.practical.value) / 2.0);
      EXPECT_EQ(p.singular.value, (p.theoretical.value - p.practical.value) / 2.0);
      const mc::Estimate& r = est.symmetry_residual[a][b];
      EXPECT_LE(std::abs(r.value), 3.0 * r.standard_error + 1e-12)
          << bank[a].name << ", " << bank[b].name;
    }
  }
  // Positivity of the form: -<Atilde f, f> >= 0.
  for (std::size_t a = 0; a < bank.size(); ++a) {
    EXPECT_LE(est.pairings[a][a].symmetric.value, 3.0 * est.pairings[a][a].symmetric.standard_error);
  }
}

TEST(ClosedForm, Examples) {
  const auto y2 = TestFunction::monomial(2);
  const auto plain = gaussian(Coupling::constant(0), Coupling::constant(1));
  const auto drift = gaussian(Coupling::affine(1, 0), Coupling::constant(1));
  for (double y : {-1.0, 0.0, 0.5, 2.0}) {
    EXPECT_DOUBLE_EQ(theoretical_bias_closed_form(plain, y2, y), 1.0);
    EXPECT_DOUBLE_EQ(theoretical_bias_closed_form(drift, y2, y), 2 * y * y + 1);
    EXPECT_EQ(theoretical_bias_closed_form(drift, TestFunction::constant(3), y), 0.0);
  }
}

TEST(ClosedForm, KernelVariant) {
  // E[Z | y] = y and E[T^2 | y] = 1: phi = y^2 gives 2 y^2 + 1.
  const auto s = gaussian(Coupling::affine(1, 0), Coupling::normal(0, 1));
  const auto k = theoretical_bias_kernel(s, TestFunction::monomial(2), 0.5, 100'000, 21);
  EXPECT_NEAR(k.value, 1.5, 0.05);
  EXPECT_GT(k.bandwidth, 0.0);
  EXPECT_GE(k.effective_neighbors, 50.0);
  EXPECT_THROW(theoretical_bias_kernel(s, TestFunction::monomial(2), 9.0, 100'000, 21),
               NumericalError);
}

TEST(Grid, TheoreticalOperatorMatchesClosedForm) {
  const auto s = gaussian(Coupling::affine(1, 0), Coupling::constant(1));
  const std::vector<TestFunction> bank{TestFunction::monomial(1), TestFunction::monomial(2),
                                       TestFunction::monomial(3)};
  const auto est = estimate_bias_operators(s, bank, 200'000, 22);
  ASSERT_EQ(est.grid.size(), 21u);
  for (std::size_t f = 0; f < bank.size(); ++f) {
    const GridOperators& g = est.operators[f];
    std::size_t ok = 0;
    for (std::size_t i = 0; i < est.grid.size(); ++i) {
      const double exact = theoretical_bias_closed_form(s, bank[f], est.grid[i]);
      // Round-off floor for noise-free cases such as phi = y, where s.e. = 0.
      const double floor = 1e-9 * (1.0 + std::abs(exact));
      if (std::abs(g.theoretical[i] - exact) <= 3.0 * g.theoretical_se[i] + floor) ++ok;
      EXPECT_EQ(g.symmetric[i], (g.theoretical[i] + g.practical[i]) / 2.0);
      EXPECT_EQ(g.singular[i], (g.theoretical[i] - g.practical[i]) / 2.0);
    }
    EXPECT_GE(ok, 20u) << bank[f].name;
  }
}

TEST(Grid, SingularOperatorIsFirstOrder) {
  // For Y ~ N(0,1), T = 1, Z = 0 the singular operator is y phi' / 2 and the
  // symmetric one is (phi'' - y phi') / 2.
  const auto s = gaussian(Coupling::constant(0), Coupling::constant(1));
  const std::vector<TestFunction> bank{TestFunction::monomial(1), TestFunction::monomial(2)};
  const auto est = estimate_bias_operators(s, bank, 200'000, 23);
  std::size_t ok_sing = 0, ok_sym = 0, total = 0;
  for (std::size_t f = 0; f < bank.size(); ++f) {
    const GridOperators& g = est.operators[f];
    for (std::size_t i = 0; i < est.grid.size(); ++i) {
      const double y = est.grid[i];
      const double sing = 0.5 * y * bank[f].d1(y);
      const double sym = 0.5 * (bank[f].d2(y) - y * bank[f].d1(y));
      ok_sing += std::abs(g.singular[i] - sing) <= 3.0 * g.singular_se[i];
      ok_sym += std::abs(g.symmetric[i] - sym) <= 3.0 * g.symmetric_se[i];
      ++total;
    }
  }
  EXPECT_GE(ok_sing, total * 9 / 10);
  EXPECT_GE(ok_sym, total * 9 / 10);
}

TEST(Grid, DeterministicAcrossThreadCounts) {
  const auto s = gaussian(Coupling::affine(0.5, 0), Coupling::constant(1));
  const std::vector<TestFunction> bank{TestFunction::monomial(2), TestFunction::bump()};
  const unsigned before = mc::thread_count();
  mc::set_thread_count(1);
  const auto a = estimate_bias_operators(s, bank, 30'000, 24);
  mc::set_thread_count(3);
  const auto b = estimate_bias_operators(s, bank, 30'000, 24);
  mc::set_thread_count(before);
  for (std::size_t f = 0; f < bank.size(); ++f) {
    EXPECT_EQ(a.operators[f].theoretical, b.operators[f].theoretical);
    EXPECT_EQ(a.operators[f].practical_se, b.operators[f].practical_se);
    EXPECT_EQ(a.pairings[f][0].practical.value, b.pairings[f][0].practical.value);
    EXPECT_EQ(a.pairings[f][0].practical.standard_error,
              b.pairings[f][0].practical.standard_error);
  }
}

TEST(Grid, StandardErrorScaling) {
  const auto s = gaussian(Coupling::affine(1, 0), Coupling::constant(1));
  const std::vector<TestFunction> bank{TestFunction::monomial(2), TestFunction::monomial(0)};
  const auto small = estimate_bias_operators(s, bank, 25'000, 25);
  const auto large = estimate_bias_operators(s, bank, 100'000, 26);
  const double ratio = large.pairings[0][1].theoretical.standard_error /
                       small.pairings[0][1].theoretical.standard_error;
  EXPECT_NEAR(ratio, 0.5, 0.1);
}

TEST(Dirichlet, Examples) {
  const auto s = gaussian(Coupling::constant(0), Coupling::constant(1));
  const auto y = TestFunction::monomial(1);
  const auto y2 = TestFunction::monomial(2);
  const auto lin = dirichlet_form_estimate(s, y, y, 100'000, 31);
  EXPECT_TRUE(within(lin.plug_in, 1.0, 3.0));
  EXPECT_TRUE(within(lin.increments, 1.0, 3.0));
  const auto quad = dirichlet_form_estimate(s, y2, y2, 100'000, 32);
  EXPECT_TRUE(within(quad.plug_in, 4.0, 3.0));
  EXPECT_TRUE(within(quad.increments, 4.0, 3.0));
  const auto flat = dirichlet_form_estimate(s, TestFunction::constant(2), y2, 20'000, 33);
  EXPECT_EQ(flat.plug_in.value, 0.0);
  EXPECT_EQ(flat.increments.value, 0.0);
}

TEST(Dirichlet, IncrementsMatchSymmetricPairing) {
  const auto s = gaussian(Coupling::affine(1, 0), Coupling::uniform(0.5, 1.5));
  const auto y2 = TestFunction::monomial(2);
  const auto form = dirichlet_form_estimate(s, y2, y2, 50'000, 34);
  const auto est = estimate_bias_operators(s, {y2}, 50'000, 34);
  // Same draws: E = -2 <Atilde phi, phi> up to round-off.
  EXPECT_NEAR(form.increments.value, -2.0 * est.pairings[0][0].symmetric.value,
              1e-9 * std::abs(form.increments.value));
}

TEST(Locality, Verdicts) {
  const auto y = TestFunction::monomial(1);
  const auto diff = locality_test(gaussian(Coupling::constant(0), Coupling::constant(1)), y,
                                  100'000, 41);
  EXPECT_EQ(diff.verdict, Locality::kLocal);
  EXPECT_NEAR(diff.fourth_moment.value, 0.0, 1e-9);

  const auto jump = locality_test(
      PerturbationScheme::jumps(Marginal::normal(0, 1), Coupling::constant(1)), y, 100'000, 42);
  EXPECT_EQ(jump.verdict, Locality::kNonLocal);
  EXPECT_TRUE(within(jump.fourth_moment, 1.0, 3.0));

  const auto drift = locality_test(gaussian(Coupling::constant(1), Coupling::constant(0)), y,
                                   20'000, 43);
  EXPECT_EQ(drift.verdict, Locality::kLocal);
  EXPECT_EQ(to_string(Locality::kNonLocal), "non_local");
}

TEST(Derivation, SingularOperatorIsADerivation) {
  const auto s = gaussian(Coupling::affine(1, 0), Coupling::constant(1));
  const auto y = TestFunction::monomial(1);
  const auto check = derivation_property_check(s, y, y, 200'000, 51);
  EXPECT_TRUE(check.passed) << check.fraction_within;

  const auto flat = derivation_property_check(s, TestFunction::constant(1),
                                              TestFunction::monomial(2), 20'000, 52);
  for (double r : flat.residual) EXPECT_EQ(r, 0.0);
  EXPECT_TRUE(flat.passed);
}

TEST(Derivation, SymmetricOperatorIsNot) {
  // Atilde[y^2] - 2 y Atilde[y] = 1 for this scheme.
  const auto s = gaussian(Coupling::affine(1, 0), Coupling::constant(1));
  const auto y = TestFunction::monomial(1);
  const auto check = derivation_property_check(s, y, y, 200'000, 53, Operator::kSymmetric);
  EXPECT_FALSE(check.passed);
  const std::size_t mid = check.grid.size() / 2;
  EXPECT_NEAR(check.residual[mid], 1.0, 5.0 * check.standard_error[mid]);
}

}  // namespace
}  // namespace errcalc::bias
