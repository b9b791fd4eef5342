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

#include <Eigen/Dense>

namespace errcalc {

/// Value, gradient and Hessian of a scalar function at a point.
///
/// Every operation below builds the Hessian from sums of scaled symmetric
/// matrices and of `u v^T + v u^T` pairs, so the result is symmetric entry for
/// entry without any after-the-fact symmetrization.
template <typename Scalar>
struct SecondOrderJet {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Scalar value{};
  Vector gradient;
  Matrix hessian;

  Eigen::Index dimension() const { return gradient.size(); }

  static SecondOrderJet constant(Scalar c, Eigen::Index n) {
    return {c, Vector::Zero(n), Matrix::Zero(n, n)};
  }

  static SecondOrderJet variable(Scalar v, Eigen::Index index, Eigen::Index n) {
    SecondOrderJet j = constant(v, n);
    j.gradient(index) = Scalar(1);
    return j;
  }

  bool has_zero_derivatives() const {
    return (gradient.array() == Scalar(0)).all() &&
           (hessian.array() == Scalar(0)).all();
  }
};

using Jet = SecondOrderJet<double>;

template <typename Scalar>
SecondOrderJet<Scalar> operator+(const SecondOrderJet<Scalar>& a,
                                 const SecondOrderJet<Scalar>& b) {
  return {a.value + b.value, a.gradient + b.gradient, a.hessian + b.hessian};
}

template <typename Scalar>
SecondOrderJet<Scalar> operator-(const SecondOrderJet<Scalar>& a,
                                 const SecondOrderJet<Scalar>& b) {
  return {a.value - b.value, a.gradient - b.gradient, a.hessian - b.hessian};
}

template <typename Scalar>
SecondOrderJet<Scalar> operator-(const SecondOrderJet<Scalar>& a) {
  return {-a.value, -a.gradient, -a.hessian};
}

template <typename Scalar>
SecondOrderJet<Scalar> operator*(const SecondOrderJet<Scalar>& a,
                                 const SecondOrderJet<Scalar>& b) {
  using Matrix = typename SecondOrderJet<Scalar>::Matrix;
  const Matrix cross = a.gradient * b.gradient.transpose();
  return {a.value * b.value,
          a.gradient * b.value + b.gradient * a.value,
          a.hessian * b.value + b.hessian * a.value +
              (cross + cross.transpose())};
}

template <typename Scalar>
SecondOrderJet<Scalar> operator*(Scalar c, const SecondOrderJet<Scalar>& a) {
  return {c * a.value, c * a.gradient, c * a.hessian};
}

/// Chain rule for a scalar function phi applied to a jet, given phi(a),
/// phi'(a) and phi''(a).
template <typename Scalar>
SecondOrderJet<Scalar> compose(const SecondOrderJet<Scalar>& a, Scalar value,
                               Scalar d1, Scalar d2) {
  using Matrix = typename SecondOrderJet<Scalar>::Matrix;
  // Materialized first: Eigen would otherwise fold d2 into one factor of the
  // outer product, and (d2 g_i) g_j is not bitwise equal to (d2 g_j) g_i.
  const Matrix outer = a.gradient * a.gradient.transpose();
  return {value, d1 * a.gradient, d1 * a.hessian + d2 * outer};
}

}  // namespace errcalc
