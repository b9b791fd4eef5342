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

#include "errcalc/smooth_map.hpp"

#include "errcalc/errors.hpp"
#include "errcalc/finite_difference.hpp"

namespace errcalc {

SmoothMap SmoothMap::from_expressions(std::vector<Expression> outputs) {
  if (outputs.empty()) throw ValidationError("SmoothMap needs at least one output");
  SmoothMap m;
  m.n_ = static_cast<Eigen::Index>(outputs.front().arity());
  for (const auto& e : outputs) {
    if (e.variables() != outputs.front().variables()) {
      throw DimensionError("SmoothMap outputs must share one variable list");
    }
    m.jets_.push_back([e](const Eigen::VectorXd& p, std::vector<std::string>* w) {
      return errcalc::jet(e, p, w);
    });
    m.values_.push_back([e](const Eigen::VectorXd& p) { return e.evaluate(p); });
  }
  m.expressions_ = std::move(outputs);
  return m;
}

SmoothMap SmoothMap::from_expression(Expression output) {
  std::vector<Expression> v;
  v.push_back(std::move(output));
  return from_expressions(std::move(v));
}

SmoothMap SmoothMap::parse(const std::vector<std::string>& sources,
                           const std::vector<std::string>& variables) {
  std::vector<Expression> outputs;
  outputs.reserve(sources.size());
  for (const auto& s : sources) outputs.push_back(errcalc::parse(s, variables));
  return from_expressions(std::move(outputs));
}

SmoothMap SmoothMap::analytic(Eigen::Index input_dimension,
                              std::vector<JetProvider> outputs) {
  if (outputs.empty()) throw ValidationError("SmoothMap needs at least one output");
  SmoothMap m;
  m.n_ = input_dimension;
  for (auto& f : outputs) {
    m.jets_.push_back([f](const Eigen::VectorXd& p, std::vector<std::string>*) {
      return f(p);
    });
    m.values_.push_back([f](const Eigen::VectorXd& p) { return f(p).value; });
  }
  return m;
}

SmoothMap SmoothMap::finite_difference(Eigen::Index input_dimension,
                                       std::vector<ValueFunction> outputs) {
  if (outputs.empty()) throw ValidationError("SmoothMap needs at least one output");
  SmoothMap m;
  m.n_ = input_dimension;
  for (auto& f : outputs) {
    m.jets_.push_back([f](const Eigen::VectorXd& p, std::vector<std::string>*) {
      return finite_difference_jet<double>(f, p);
    });
    m.values_.push_back(f);
  }
  return m;
}

Jet SmoothMap::jet(Eigen::Index k, const Eigen::VectorXd& point,
                   std::vector<std::string>* warnings) const {
  if (point.size() != n_) {
    throw DimensionError("SmoothMap expects " + std::to_string(n_) +
                         " inputs, got " + std::to_string(point.size()));
  }
  Jet j = jets_.at(static_cast<std::size_t>(k))(point, warnings);
  if (j.gradient.size() != n_ || j.hessian.rows() != n_ || j.hessian.cols() != n_) {
    throw DimensionError("jet provider returned wrong derivative shapes");
  }
  if (j.hessian != j.hessian.transpose()) {
    throw ValidationError("jet provider returned a non-symmetric Hessian");
  }
  return j;
}

Eigen::VectorXd SmoothMap::evaluate(const Eigen::VectorXd& point) const {
  if (point.size() != n_) {
    throw DimensionError("SmoothMap expects " + std::to_string(n_) +
                         " inputs, got " + std::to_string(point.size()));
  }
  Eigen::VectorXd out(output_dimension());
  for (Eigen::Index k = 0; k < output_dimension(); ++k) {
    out(k) = values_[static_cast<std::size_t>(k)](point);
  }
  return out;
}

Eigen::MatrixXd SmoothMap::jacobian(const Eigen::VectorXd& point) const {
  Eigen::MatrixXd J(output_dimension(), n_);
  for (Eigen::Index k = 0; k < output_dimension(); ++k) {
    J.row(k) = jet(k, point).gradient.transpose();
  }
  return J;
}

}  // namespace errcalc
