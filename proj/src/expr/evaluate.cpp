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
#include <limits>

#include "errcalc/errors.hpp"
#include "errcalc/expr.hpp"

namespace errcalc {

namespace {

bool is_integer(double v) { return std::isfinite(v) && v == std::floor(v); }

double checked(double v, const Node& node) {
  if (!std::isfinite(v)) {
    throw DomainError("non-finite result", print(node), v);
  }
  return v;
}

double eval_node(const Node& node, std::span<const double> point) {
  switch (node.kind) {
    case Node::Kind::kConstant:
      return node.constant;
    case Node::Kind::kVariable:
      return point[node.index];
    case Node::Kind::kUnary: {
      const double a = eval_node(*node.lhs, point);
      switch (node.unary) {
        case UnaryOp::kNeg: return -a;
        case UnaryOp::kExp: return checked(std::exp(a), node);
        case UnaryOp::kLog:
          if (!(a > 0.0)) throw DomainError("log of non-positive value", print(node), a);
          return std::log(a);
        case UnaryOp::kSin: return std::sin(a);
        case UnaryOp::kCos: return std::cos(a);
        case UnaryOp::kSqrt:
          if (a < 0.0) throw DomainError("sqrt of negative value", print(node), a);
          return std::sqrt(a);
        case UnaryOp::kAbs: return std::abs(a);
      }
      break;
    }
    case Node::Kind::kBinary: {
      const double a = eval_node(*node.lhs, point);
      const double b = eval_node(*node.rhs, point);
      switch (node.binary) {
        case BinaryOp::kAdd: return a + b;
        case BinaryOp::kSub: return a - b;
        case BinaryOp::kMul: return a * b;
        case BinaryOp::kDiv:
          if (b == 0.0) throw DomainError("division by zero", print(node), b);
          return a / b;
        case BinaryOp::kPow:
          if (a < 0.0 && !is_integer(b)) {
            throw DomainError("negative base with non-integer exponent", print(node), a);
          }
          if (a == 0.0 && b < 0.0) {
            throw DomainError("zero base with negative exponent", print(node), a);
          }
          return checked(std::pow(a, b), node);
      }
      break;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// Power rule for a^c with c constant. Handles non-positive bases for integer
// exponents, where c(c-1)a^(c-2) would otherwise produce 0*inf.
Jet power_rule(const Jet& a, double c, const Node& node) {
  const double x = a.value;
  if (x > 0.0) {
    return compose(a, checked(std::pow(x, c), node), c * std::pow(x, c - 1.0),
                   c * (c - 1.0) * std::pow(x, c - 2.0));
  }
  if (!is_integer(c)) {
    throw DomainError("non-positive base with non-integer exponent", print(node), x);
  }
  if (x == 0.0) {
    if (c < 0.0) throw DomainError("zero base with negative exponent", print(node), x);
    if (c == 0.0) return compose(a, 1.0, 0.0, 0.0);
    if (c == 1.0) return compose(a, 0.0, 1.0, 0.0);
    if (c == 2.0) return compose(a, 0.0, 0.0, 2.0);
    return compose(a, 0.0, 0.0, 0.0);
  }
  return compose(a, checked(std::pow(x, c), node), c * std::pow(x, c - 1.0),
                 c * (c - 1.0) * std::pow(x, c - 2.0));
}

class JetEvaluator {
 public:
  JetEvaluator(const Eigen::VectorXd& point, std::vector<std::string>* warnings)
      : point_(point), warnings_(warnings) {}

  Jet eval(const Node& node) {
    const Eigen::Index n = point_.size();
    switch (node.kind) {
      case Node::Kind::kConstant:
        return Jet::constant(node.constant, n);
      case Node::Kind::kVariable:
        return Jet::variable(point_(static_cast<Eigen::Index>(node.index)),
                             static_cast<Eigen::Index>(node.index), n);
      case Node::Kind::kUnary:
        return unary(node, eval(*node.lhs));
      case Node::Kind::kBinary:
        return binary(node, eval(*node.lhs), eval(*node.rhs));
    }
    return Jet::constant(0.0, n);
  }

 private:
  Jet unary(const Node& node, const Jet& a) {
    const double x = a.value;
    switch (node.unary) {
      case UnaryOp::kNeg:
        return -a;
      case UnaryOp::kExp: {
        const double e = checked(std::exp(x), node);
        return compose(a, e, e, e);
      }
      case UnaryOp::kLog:
        if (!(x > 0.0)) throw DomainError("log of non-positive value", print(node), x);
        return compose(a, std::log(x), 1.0 / x, -1.0 / (x * x));
      case UnaryOp::kSin:
        return compose(a, std::sin(x), std::cos(x), -std::sin(x));
      case UnaryOp::kCos:
        return compose(a, std::cos(x), -std::sin(x), -std::cos(x));
      case UnaryOp::kSqrt: {
        if (!(x > 0.0)) {
          throw DomainError("sqrt is not differentiable at non-positive value",
                            print(node), x);
        }
        const double r = std::sqrt(x);
        return compose(a, r, 0.5 / r, -0.25 / (r * x));
      }
      case UnaryOp::kAbs:
        if (x == 0.0) {
          if (warnings_) {
            warnings_->push_back("non-differentiable point: '" + print(node) +
                                 "' evaluated at 0; derivative taken as 0");
          }
          return compose(a, 0.0, 0.0, 0.0);
        }
        return compose(a, std::abs(x), x > 0.0 ? 1.0 : -1.0, 0.0);
    }
    return a;
  }

  Jet binary(const Node& node, const Jet& a, const Jet& b) {
    switch (node.binary) {
      case BinaryOp::kAdd:
        return a + b;
      case BinaryOp::kSub:
        return a - b;
      case BinaryOp::kMul:
        return a * b;
      case BinaryOp::kDiv: {
        const double y = b.value;
        if (y == 0.0) throw DomainError("division by zero", print(node), y);
        return a * compose(b, 1.0 / y, -1.0 / (y * y), 2.0 / (y * y * y));
      }
      case BinaryOp::kPow: {
        if (b.has_zero_derivatives()) return power_rule(a, b.value, node);
        if (!(a.value > 0.0)) {
          throw DomainError("variable exponent requires a positive base",
                            print(node), a.value);
        }
        // a^b = exp(b log a)
        const double la = std::log(a.value);
        const Jet log_a = compose(a, la, 1.0 / a.value, -1.0 / (a.value * a.value));
        const Jet p = b * log_a;
        const double v = checked(std::pow(a.value, b.value), node);
        Jet out = compose(p, v, v, v);
        return out;
      }
    }
    return a;
  }

  const Eigen::VectorXd& point_;
  std::vector<std::string>* warnings_;
};

}  // namespace

double Expression::evaluate(std::span<const double> point) const {
  if (point.size() != arity()) {
    throw DimensionError("expression expects " + std::to_string(arity()) +
                         " variables, got " + std::to_string(point.size()));
  }
  return eval_node(*root_, point);
}

Jet jet(const Expression& expr, const Eigen::VectorXd& point,
        std::vector<std::string>* warnings) {
  if (static_cast<std::size_t>(point.size()) != expr.arity()) {
    throw DimensionError("expression expects " + std::to_string(expr.arity()) +
                         " variables, got " + std::to_string(point.size()));
  }
  return JetEvaluator(point, warnings).eval(expr.root());
}

Jet jet(const Expression& expr, const std::map<std::string, double>& point,
        std::vector<std::string>* warnings) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(expr.arity()));
  for (std::size_t i = 0; i < expr.arity(); ++i) {
    auto it = point.find(expr.variables()[i]);
    if (it == point.end()) {
      throw ValidationError("variable '" + expr.variables()[i] + "' is not bound");
    }
    x(static_cast<Eigen::Index>(i)) = it->second;
  }
  return jet(expr, x, warnings);
}

CompiledExpression::CompiledExpression(const Expression& expr)
    : arity_(expr.arity()) {
  emit(expr.root(), 1);
}

void CompiledExpression::emit(const Node& node, std::size_t depth) {
  max_depth_ = std::max(max_depth_, depth);
  switch (node.kind) {
    case Node::Kind::kConstant:
      code_.push_back({Op::kConst, 0, node.constant});
      return;
    case Node::Kind::kVariable:
      code_.push_back({Op::kVar, node.index, 0.0});
      return;
    case Node::Kind::kUnary: {
      emit(*node.lhs, depth);
      static constexpr Op kMap[] = {Op::kNeg, Op::kExp,  Op::kLog, Op::kSin,
                                    Op::kCos, Op::kSqrt, Op::kAbs};
      code_.push_back({kMap[static_cast<int>(node.unary)], 0, 0.0});
      return;
    }
    case Node::Kind::kBinary: {
      emit(*node.lhs, depth);
      emit(*node.rhs, depth + 1);
      static constexpr Op kMap[] = {Op::kAdd, Op::kSub, Op::kMul, Op::kDiv,
                                    Op::kPow};
      code_.push_back({kMap[static_cast<int>(node.binary)], 0, 0.0});
      return;
    }
  }
}

double CompiledExpression::operator()(const double* point) const {
  constexpr std::size_t kInline = 64;
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  double inline_stack[kInline];
  inline_stack[0] = kNaN;
  std::vector<double> heap;
  double* stack = inline_stack;
  if (max_depth_ > kInline) {
    heap.resize(max_depth_);
    stack = heap.data();
  }
  std::size_t top = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::kConst: stack[top++] = in.value; break;
      case Op::kVar: stack[top++] = point[in.index]; break;
      case Op::kNeg: stack[top - 1] = -stack[top - 1]; break;
      case Op::kExp: stack[top - 1] = std::exp(stack[top - 1]); break;
      case Op::kLog: {
        const double a = stack[top - 1];
        stack[top - 1] = a > 0.0 ? std::log(a) : kNaN;
        break;
      }
      case Op::kSin: stack[top - 1] = std::sin(stack[top - 1]); break;
      case Op::kCos: stack[top - 1] = std::cos(stack[top - 1]); break;
      case Op::kSqrt: {
        const double a = stack[top - 1];
        stack[top - 1] = a >= 0.0 ? std::sqrt(a) : kNaN;
        break;
      }
      case Op::kAbs: stack[top - 1] = std::abs(stack[top - 1]); break;
      case Op::kAdd: --top; stack[top - 1] += stack[top]; break;
      case Op::kSub: --top; stack[top - 1] -= stack[top]; break;
      case Op::kMul: --top; stack[top - 1] *= stack[top]; break;
      case Op::kDiv:
        --top;
        stack[top - 1] = stack[top] != 0.0 ? stack[top - 1] / stack[top] : kNaN;
        break;
      case Op::kPow: {
        --top;
        const double a = stack[top - 1];
        const double b = stack[top];
        stack[top - 1] = (a == 0.0 && b < 0.0) ? kNaN : std::pow(a, b);
        break;
      }
    }
  }
  return stack[0];
}

}  // namespace errcalc
