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

// Recursive-descent parser for the model expression language.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | ident | ident '(' expr ')' | '(' expr ')'
//
// '^' binds tighter than unary minus (-x^2 is -(x^2)) and is right
// associative; its right operand may itself be negated (2^-1).

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "errcalc/errors.hpp"
#include "errcalc/expr.hpp"

namespace errcalc {

namespace {

struct Token {
  enum class Kind { kNumber, kIdent, kSymbol, kEnd };
  Kind kind = Kind::kEnd;
  std::string text;
  double number = 0.0;
  std::size_t line = 1;
  std::size_t column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.line = line_;
      t.column = column_;
      if (pos_ >= src_.size()) {
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        lex_number(t);
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        t.kind = Token::Kind::kIdent;
        std::size_t end = pos_;
        while (end < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[end])) ||
                src_[end] == '_')) {
          ++end;
        }
        t.text = std::string(src_.substr(pos_, end - pos_));
        advance(end - pos_);
      } else if (std::string_view("+-*/^(),").find(c) != std::string_view::npos) {
        t.kind = Token::Kind::kSymbol;
        t.text = std::string(1, c);
        advance(1);
      } else {
        throw SyntaxError(std::string("unexpected character '") + c + "'",
                          t.line, t.column);
      }
      out.push_back(std::move(t));
    }
  }

 private:
  void skip_space() {
    while (pos_ < src_.size() &&
           std::isspace(static_cast<unsigned char>(src_[pos_]))) {
      advance(1);
    }
  }

  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i, ++pos_) {
      if (src_[pos_] == '\n') {
        ++line_;
        column_ = 1;
      } else {
        ++column_;
      }
    }
  }

  void lex_number(Token& t) {
    std::size_t end = pos_;
    auto digits = [&] {
      const std::size_t start = end;
      while (end < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[end]))) {
        ++end;
      }
      return end - start;
    };
    std::size_t mantissa = digits();
    if (end < src_.size() && src_[end] == '.') {
      ++end;
      mantissa += digits();
    }
    if (mantissa == 0) throw SyntaxError("malformed number", t.line, t.column);
    if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
      std::size_t save = end;
      ++end;
      if (end < src_.size() && (src_[end] == '+' || src_[end] == '-')) ++end;
      if (digits() == 0) {
        end = save;
        throw SyntaxError("malformed exponent", t.line, t.column + (save - pos_));
      }
    }
    const char* first = src_.data() + pos_;
    const char* last = src_.data() + end;
    // from_chars rejects a leading '.', so prefix a zero in that case.
    std::string buf;
    if (*first == '.') {
      buf = "0" + std::string(first, last);
      first = buf.data();
      last = buf.data() + buf.size();
    }
    auto [ptr, ec] = std::from_chars(first, last, t.number);
    if (ec != std::errc() || ptr != last || !std::isfinite(t.number)) {
      throw SyntaxError("number out of range", t.line, t.column);
    }
    t.kind = Token::Kind::kNumber;
    t.text = std::string(src_.substr(pos_, end - pos_));
    advance(end - pos_);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

class Parser {
 public:
  Parser(std::vector<Token> tokens, const std::vector<std::string>* declared)
      : tokens_(std::move(tokens)), declared_(declared) {
    if (declared_) variables_ = *declared_;
  }

  Expression run() {
    NodePtr root = expr();
    if (peek().kind != Token::Kind::kEnd) {
      throw SyntaxError("unexpected '" + peek().text + "'", peek().line,
                        peek().column);
    }
    return Expression(std::move(root), std::move(variables_));
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  bool at_symbol(char c) const {
    return peek().kind == Token::Kind::kSymbol && peek().text[0] == c;
  }
  Token take() { return tokens_[pos_++]; }

  [[noreturn]] void unexpected() const {
    const Token& t = peek();
    if (t.kind == Token::Kind::kEnd) {
      throw SyntaxError("unexpected end of input", t.line, t.column);
    }
    throw SyntaxError("unexpected '" + t.text + "'", t.line, t.column);
  }

  void expect(char c) {
    if (!at_symbol(c)) {
      if (c == ')' && at_symbol(',')) {
        throw ArityError("functions take exactly one argument", peek().line,
                         peek().column);
      }
      unexpected();
    }
    ++pos_;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    while (at_symbol('+') || at_symbol('-')) {
      const BinaryOp op = take().text[0] == '+' ? BinaryOp::kAdd : BinaryOp::kSub;
      lhs = ast::binary(op, lhs, term());
    }
    return lhs;
  }

  NodePtr term() {
    NodePtr lhs = unary();
    while (at_symbol('*') || at_symbol('/')) {
      const BinaryOp op = take().text[0] == '*' ? BinaryOp::kMul : BinaryOp::kDiv;
      lhs = ast::binary(op, lhs, unary());
    }
    return lhs;
  }

  NodePtr unary() {
    if (at_symbol('-')) {
      ++pos_;
      return ast::unary(UnaryOp::kNeg, unary());
    }
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (at_symbol('^')) {
      ++pos_;
      return ast::binary(BinaryOp::kPow, base, unary());
    }
    return base;
  }

  NodePtr primary() {
    const Token& t = peek();
    switch (t.kind) {
      case Token::Kind::kNumber:
        ++pos_;
        return ast::constant(t.number);
      case Token::Kind::kIdent:
        return identifier();
      case Token::Kind::kSymbol:
        if (t.text[0] == '(') {
          ++pos_;
          NodePtr inner = expr();
          expect(')');
          return inner;
        }
        unexpected();
      case Token::Kind::kEnd:
        unexpected();
    }
    unexpected();
  }

  NodePtr identifier() {
    const Token t = take();
    const bool call = at_symbol('(');
    if (auto f = ast::function_from_name(t.text)) {
      if (!call) {
        throw ArityError("function '" + t.text + "' requires one argument",
                         t.line, t.column);
      }
      ++pos_;
      NodePtr arg = expr();
      expect(')');
      return ast::unary(*f, arg);
    }
    auto it = std::find(variables_.begin(), variables_.end(), t.text);
    if (it == variables_.end()) {
      if (declared_ || call) {
        throw UnknownIdentifierError("unknown identifier '" + t.text + "'",
                                     t.line, t.column);
      }
      variables_.push_back(t.text);
      it = variables_.end() - 1;
    }
    if (call) {
      throw ArityError("'" + t.text + "' is a variable, not a function", t.line,
                       t.column);
    }
    return ast::variable(t.text,
                         static_cast<std::size_t>(it - variables_.begin()));
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  const std::vector<std::string>* declared_;
  std::vector<std::string> variables_;
};

}  // namespace

Expression parse(std::string_view source) {
  return Parser(Lexer(source).run(), nullptr).run();
}

Expression parse(std::string_view source,
                 const std::vector<std::string>& variables) {
  return Parser(Lexer(source).run(), &variables).run();
}

}  // namespace errcalc
