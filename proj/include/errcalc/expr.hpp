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

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "errcalc/jet.hpp"

namespace errcalc {

enum class UnaryOp { kNeg, kExp, kLog, kSin, kCos, kSqrt, kAbs };
enum class BinaryOp { kAdd, kSub, kMul, kDiv, kPow };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  enum class Kind { kConstant, kVariable, kUnary, kBinary };

  Kind kind = Kind::kConstant;
  double constant = 0.0;         // kConstant; always finite and >= 0
  std::string name;              // kVariable
  std::size_t index = 0;         // kVariable: position in the variable list
  UnaryOp unary = UnaryOp::kNeg;
  BinaryOp binary = BinaryOp::kAdd;
  NodePtr lhs;                   // operand of kUnary, left of kBinary
  NodePtr rhs;                   // right of kBinary
};

namespace ast {

NodePtr constant(double value);
NodePtr variable(std::string name, std::size_t index);
NodePtr unary(UnaryOp op, NodePtr operand);
NodePtr binary(BinaryOp op, NodePtr lhs, NodePtr rhs);

/// Structural equality, node for node.
bool equal(const Node& a, const Node& b);

std::string_view function_name(UnaryOp op);
std::optional<UnaryOp> function_from_name(std::string_view name);

}  // namespace ast

/// A parsed model expression bound to an ordered list of variables.
///
/// Immutable; copies share the tree.
class Expression {
 public:
  Expression(NodePtr root, std::vector<std::string> variables);

  const Node& root() const { return *root_; }
  const NodePtr& root_ptr() const { return root_; }
  const std::vector<std::string>& variables() const { return *variables_; }
  std::size_t arity() const { return variables_->size(); }

  /// Fully parenthesized source text; `parse(e.to_string(), e.variables())`
  /// reproduces the tree exactly.
  std::string to_string() const;

  /// Value only. Throws DomainError outside the domain of a node.
  double evaluate(std::span<const double> point) const;
  double evaluate(const Eigen::VectorXd& point) const {
    return evaluate(std::span<const double>(point.data(), point.size()));
  }

  friend bool operator==(const Expression& a, const Expression& b);

 private:
  NodePtr root_;
  std::shared_ptr<const std::vector<std::string>> variables_;
};

/// Parses `source`, collecting variables in order of first appearance.
Expression parse(std::string_view source);

/// Parses `source` against a declared variable list; any other identifier is
/// an UnknownIdentifierError.
Expression parse(std::string_view source,
                 const std::vector<std::string>& variables);

std::string print(const Node& node);

/// Exact forward second-order differentiation at `point`.
///
/// abs at exactly zero contributes zero gradient and Hessian; such kinks are
/// appended to `warnings` when provided.
Jet jet(const Expression& expr, const Eigen::VectorXd& point,
        std::vector<std::string>* warnings = nullptr);

Jet jet(const Expression& expr, const std::map<std::string, double>& point,
        std::vector<std::string>* warnings = nullptr);

/// Replaces variable i of `outer` by `inner[i]`. All inner expressions must
/// share one variable list, which becomes the result's.
Expression substitute(const Expression& outer,
                      const std::vector<Expression>& inner);

/// Flat postfix form of an expression for repeated value evaluation in
/// Monte-Carlo loops. Domain violations produce NaN instead of throwing.
class CompiledExpression {
 public:
  explicit CompiledExpression(const Expression& expr);

  double operator()(const double* point) const;
  double operator()(const Eigen::VectorXd& point) const {
    return (*this)(point.data());
  }
  std::size_t arity() const { return arity_; }

 private:
  enum class Op : unsigned char {
    kConst, kVar, kNeg, kExp, kLog, kSin, kCos, kSqrt, kAbs,
    kAdd, kSub, kMul, kDiv, kPow
  };
  struct Instr {
    Op op;
    std::size_t index;
    double value;
  };

  void emit(const Node& node, std::size_t depth);

  std::vector<Instr> code_;
  std::size_t max_depth_ = 0;
  std::size_t arity_ = 0;
};

}  // namespace errcalc
