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

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "errcalc/errors.hpp"
#include "errcalc/jet.hpp"

namespace errcalc {

/// Central-difference steps balancing truncation and round-off:
/// eps^(1/3) for first derivatives, eps^(1/4) for second derivatives, both
/// scaled by max(1, |x_i|).
template <typename Scalar>
struct DefaultSteps {
  static Scalar gradient(Scalar x) {
    return std::cbrt(std::numeric_limits<Scalar>::epsilon()) *
           std::max(Scalar(1), std::abs(x));
  }
  static Scalar hessian(Scalar x) {
    return std::sqrt(std::sqrt(std::numeric_limits<Scalar>::epsilon())) *
           std::max(Scalar(1), std::abs(x));
  }
};

/// Second-order jet of `f` at `x` from central differences.
///
/// A fixed `step` is used for every coordinate and both orders when given.
/// The off-diagonal stencil is evaluated once per pair and written to both
/// (i, j) and (j, i). Throws NumericalError if `f` fails or returns a
/// non-finite value at any stencil point.
template <typename Scalar, typename F>
SecondOrderJet<Scalar> finite_difference_jet(
    F&& f, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x,
    std::optional<Scalar> step = std::nullopt) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = x.size();

  auto call = [&](const Vector& p) -> Scalar {
    Scalar v;
    try {
      v = f(p);
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "finite_difference_jet: evaluation failed at ["
         << p.transpose() << "]: " << e.what();
      throw NumericalError(os.str());
    }
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "finite_difference_jet: non-finite value at [" << p.transpose() << "]";
      throw NumericalError(os.str());
    }
    return v;
  };

  SecondOrderJet<Scalar> out{call(x), Vector::Zero(n), Matrix::Zero(n, n)};
  Vector hg(n), hh(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    hg(i) = step ? *step : DefaultSteps<Scalar>::gradient(x(i));
    hh(i) = step ? *step : DefaultSteps<Scalar>::hessian(x(i));
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    Vector p = x;
    p(i) = x(i) + hg(i);
    const Scalar fp = call(p);
    p(i) = x(i) - hg(i);
    const Scalar fm = call(p);
    out.gradient(i) = (fp - fm) / (2 * hg(i));

    p(i) = x(i) + hh(i);
    const Scalar fpp = call(p);
    p(i) = x(i) - hh(i);
    const Scalar fmm = call(p);
    out.hessian(i, i) = (fpp - 2 * out.value + fmm) / (hh(i) * hh(i));
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      Vector p = x;
      auto at = [&](Scalar si, Scalar sj) {
        p(i) = x(i) + si * hh(i);
        p(j) = x(j) + sj * hh(j);
        return call(p);
      };
      const Scalar v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) /
                       (4 * hh(i) * hh(j));
      out.hessian(i, j) = v;
      out.hessian(j, i) = v;
    }
  }
  return out;
}

}  // namespace errcalc
