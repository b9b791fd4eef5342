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

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errcalc/expr.hpp"
#include "errcalc/jet.hpp"

namespace errcalc {

/// A map R^n -> R^m that can report value, gradient and Hessian per output.
///
/// Built from parsed expressions (exact jets), from analytic jet providers,
/// or from plain value functions (central finite differences).
class SmoothMap {
 public:
  using JetProvider = std::function<Jet(const Eigen::VectorXd&)>;
  using ValueFunction = std::function<double(const Eigen::VectorXd&)>;

  static SmoothMap from_expressions(std::vector<Expression> outputs);
  static SmoothMap from_expression(Expression output);
  /// Parses each source against `variables`.
  static SmoothMap parse(const std::vector<std::string>& sources,
                         const std::vector<std::string>& variables);
  static SmoothMap analytic(Eigen::Index input_dimension,
                            std::vector<JetProvider> outputs);
  static SmoothMap finite_difference(Eigen::Index input_dimension,
                                     std::vector<ValueFunction> outputs);

  Eigen::Index input_dimension() const { return n_; }
  Eigen::Index output_dimension() const {
    return static_cast<Eigen::Index>(jets_.size());
  }

  /// Jet of output k. Checks the gradient length and Hessian shape and
  /// symmetry.
  Jet jet(Eigen::Index k, const Eigen::VectorXd& point,
          std::vector<std::string>* warnings = nullptr) const;

  Eigen::VectorXd evaluate(const Eigen::VectorXd& point) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& point) const;

  /// Expressions the map was built from, when it was built from expressions.
  const std::vector<Expression>* expressions() const {
    return expressions_ ? &*expressions_ : nullptr;
  }

 private:
  SmoothMap() = default;

  Eigen::Index n_ = 0;
  std::vector<std::function<Jet(const Eigen::VectorXd&, std::vector<std::string>*)>> jets_;
  std::vector<ValueFunction> values_;
  std::optional<std::vector<Expression>> expressions_;
};

}  // namespace errcalc
