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

#include <array>
#include <charconv>
#include <cmath>
#include <utility>

#include "errcalc/errors.hpp"
#include "errcalc/expr.hpp"

namespace errcalc {
namespace ast {

namespace {

constexpr std::array<std::pair<std::string_view, UnaryOp>, 6> kFunctions{{
    {"exp", UnaryOp::kExp},
    {"log", UnaryOp::kLog},
    {"sin", UnaryOp::kSin},
    {"cos", UnaryOp::kCos},
    {"sqrt", UnaryOp::kSqrt},
    {"abs", UnaryOp::kAbs},
}};

}  // namespace

NodePtr constant(double value) {
  if (!std::isfinite(value) || value < 0.0 || std::signbit(value)) {
    throw ValidationError("expression constants must be finite and >= 0");
  }
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::kConstant;
  n->constant = value;
  return n;
}

NodePtr variable(std::string name, std::size_t index) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::kVariable;
  n->name = std::move(name);
  n->index = index;
  return n;
}

NodePtr unary(UnaryOp op, NodePtr operand) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::kUnary;
  n->unary = op;
  n->lhs = std::move(operand);
  return n;
}

NodePtr binary(BinaryOp op, NodePtr lhs, NodePtr rhs) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::kBinary;
  n->binary = op;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

bool equal(const Node& a, const Node& b) {
  if (&a == &b) return true;
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Node::Kind::kConstant:
      return a.constant == b.constant;
    case Node::Kind::kVariable:
      return a.name == b.name && a.index == b.index;
    case Node::Kind::kUnary:
      return a.unary == b.unary && equal(*a.lhs, *b.lhs);
    case Node::Kind::kBinary:
      return a.binary == b.binary && equal(*a.lhs, *b.lhs) &&
             equal(*a.rhs, *b.rhs);
  }
  return false;
}

std::string_view function_name(UnaryOp op) {
  for (const auto& [name, f] : kFunctions) {
    if (f == op) return name;
  }
  return "-";
}

std::optional<UnaryOp> function_from_name(std::string_view name) {
  for (const auto& [n, f] : kFunctions) {
    if (n == name) return f;
  }
  return std::nullopt;
}

}  // namespace ast

namespace {

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

char binary_symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::kAdd: return '+';
    case BinaryOp::kSub: return '-';
    case BinaryOp::kMul: return '*';
    case BinaryOp::kDiv: return '/';
    case BinaryOp::kPow: return '^';
  }
  return '?';
}

}  // namespace

std::string print(const Node& node) {
  switch (node.kind) {
    case Node::Kind::kConstant:
      return format_number(node.constant);
    case Node::Kind::kVariable:
      return node.name;
    case Node::Kind::kUnary:
      if (node.unary == UnaryOp::kNeg) return "(-" + print(*node.lhs) + ")";
      return std::string(ast::function_name(node.unary)) + "(" +
             print(*node.lhs) + ")";
    case Node::Kind::kBinary:
      return "(" + print(*node.lhs) + " " + binary_symbol(node.binary) + " " +
             print(*node.rhs) + ")";
  }
  return {};
}

Expression::Expression(NodePtr root, std::vector<std::string> variables)
    : root_(std::move(root)),
      variables_(std::make_shared<const std::vector<std::string>>(
          std::move(variables))) {
  if (!root_) throw ValidationError("expression has no root");
}

std::string Expression::to_string() const { return print(*root_); }

bool operator==(const Expression& a, const Expression& b) {
  return a.variables() == b.variables() && ast::equal(a.root(), b.root());
}

namespace {

NodePtr substitute_node(const NodePtr& node, const std::vector<NodePtr>& with) {
  switch (node->kind) {
    case Node::Kind::kConstant:
      return node;
    case Node::Kind::kVariable:
      return with.at(node->index);
    case Node::Kind::kUnary:
      return ast::unary(node->unary, substitute_node(node->lhs, with));
    case Node::Kind::kBinary:
      return ast::binary(node->binary, substitute_node(node->lhs, with),
                         substitute_node(node->rhs, with));
  }
  return node;
}

}  // namespace

Expression substitute(const Expression& outer,
                      const std::vector<Expression>& inner) {
  if (inner.size() != outer.arity()) {
    throw DimensionError("substitute: expected " +
                         std::to_string(outer.arity()) + " inner expressions, got " +
                         std::to_string(inner.size()));
  }
  if (inner.empty()) return outer;
  std::vector<NodePtr> roots;
  roots.reserve(inner.size());
  for (const auto& e : inner) {
    if (e.variables() != inner.front().variables()) {
      throw DimensionError("substitute: inner expressions disagree on variables");
    }
    roots.push_back(e.root_ptr());
  }
  return Expression(substitute_node(outer.root_ptr(), roots),
                    inner.front().variables());
}

}  // namespace errcalc
