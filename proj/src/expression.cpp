#include "cbob/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cbob {

namespace detail {

enum class Op {
  Number,
  Coord,
  AllCoords,  // bare `x`, legal only directly inside sum/prod
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Neg,
  Cos,
  Sin,
  Exp,
  Sqrt,
  Abs,
  Sum,
  Prod,
};

struct ExprNode {
  Op op;
  double number = 0.0;
  Eigen::Index coord = 0;
  std::vector<std::shared_ptr<const ExprNode>> children;
};

}  // namespace detail

namespace {

using detail::ExprNode;
using detail::Op;
using NodePtr = std::shared_ptr<const ExprNode>;

[[noreturn]] void fail(const std::string& text, std::size_t pos,
                       const std::string& what) {
  throw std::invalid_argument("expression: " + what + " at position " +
                              std::to_string(pos) + " in \"" + text + "\"");
}

struct Token {
  enum class Kind { Number, Ident, Symbol, End } kind;
  std::string ident;
  double number = 0.0;
  char symbol = 0;
  std::size_t pos = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) { advance(); }

  const Token& peek() const { return current_; }

  Token take() {
    Token t = current_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
    current_.pos = pos_;
    if (pos_ >= text_.size()) {
      current_.kind = Token::Kind::End;
      return;
    }
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < text_.size() &&
         std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
      const char* begin = text_.c_str() + pos_;
      char* end = nullptr;
      current_.number = std::strtod(begin, &end);
      if (end == begin) fail(text_, pos_, "malformed number");
      current_.kind = Token::Kind::Number;
      pos_ += static_cast<std::size_t>(end - begin);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
              text_[pos_] == '_'))
        ++pos_;
      current_.kind = Token::Kind::Ident;
      current_.ident = text_.substr(start, pos_ - start);
      return;
    }
    if (std::string("+-*/^(),").find(c) != std::string::npos) {
      current_.kind = Token::Kind::Symbol;
      current_.symbol = c;
      ++pos_;
      return;
    }
    fail(text_, pos_, std::string("unexpected character '") + c + "'");
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  Token current_;
};

NodePtr make_node(Op op, std::vector<NodePtr> children = {}) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->children = std::move(children);
  return n;
}

class Parser {
 public:
  Parser(const std::string& text, Eigen::Index dim)
      : text_(text), dim_(dim), lex_(text) {}

  NodePtr parse() {
    NodePtr e = parse_expr();
    const Token& t = lex_.peek();
    if (t.kind != Token::Kind::End) fail(text_, t.pos, "trailing input");
    return e;
  }

 private:
  bool at_symbol(char c) const {
    return lex_.peek().kind == Token::Kind::Symbol && lex_.peek().symbol == c;
  }

  void expect_symbol(char c, const char* what) {
    if (!at_symbol(c)) fail(text_, lex_.peek().pos, what);
    lex_.take();
  }

  NodePtr parse_expr() {
    NodePtr left = parse_term();
    while (at_symbol('+') || at_symbol('-')) {
      const std::size_t pos = lex_.peek().pos;
      const char op = lex_.take().symbol;
      NodePtr right = parse_term();
      if (left->op == Op::AllCoords || right->op == Op::AllCoords)
        fail(text_, pos, "`x` is only valid directly inside sum/prod");
      left = make_node(op == '+' ? Op::Add : Op::Sub, {left, right});
    }
    return left;
  }

  NodePtr parse_term() {
    NodePtr left = parse_unary();
    while (at_symbol('*') || at_symbol('/')) {
      const std::size_t pos = lex_.peek().pos;
      const char op = lex_.take().symbol;
      NodePtr right = parse_unary();
      if (left->op == Op::AllCoords || right->op == Op::AllCoords)
        fail(text_, pos, "`x` is only valid directly inside sum/prod");
      left = make_node(op == '*' ? Op::Mul : Op::Div, {left, right});
    }
    return left;
  }

  // Unary minus binds looser than '^': -x_1^2 is -(x_1^2).
  NodePtr parse_unary() {
    if (at_symbol('-')) {
      const std::size_t pos = lex_.peek().pos;
      lex_.take();
      NodePtr inner = parse_unary();
      if (inner->op == Op::AllCoords)
        fail(text_, pos, "`x` is only valid directly inside sum/prod");
      return make_node(Op::Neg, {inner});
    }
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    if (at_symbol('^')) {
      const std::size_t pos = lex_.peek().pos;
      lex_.take();
      NodePtr exponent = parse_unary();  // right-associative
      if (base->op == Op::AllCoords || exponent->op == Op::AllCoords)
        fail(text_, pos, "`x` is only valid directly inside sum/prod");
      return make_node(Op::Pow, {base, exponent});
    }
    return base;
  }

  NodePtr parse_primary() {
    const Token t = lex_.take();
    switch (t.kind) {
      case Token::Kind::Number: {
        auto n = std::make_shared<ExprNode>();
        n->op = Op::Number;
        n->number = t.number;
        return n;
      }
      case Token::Kind::Symbol:
        if (t.symbol == '(') {
          NodePtr inner = parse_expr();
          if (inner->op == Op::AllCoords)
            fail(text_, t.pos, "`x` is only valid directly inside sum/prod");
          expect_symbol(')', "expected ')'");
          return inner;
        }
        fail(text_, t.pos, "unexpected symbol");
      case Token::Kind::Ident:
        return parse_ident(t);
      case Token::Kind::End:
        fail(text_, t.pos, "unexpected end of expression");
    }
    fail(text_, t.pos, "unexpected token");
  }

  NodePtr parse_ident(const Token& t) {
    if (t.ident == "x" && !at_symbol('(')) return make_node(Op::AllCoords);
    if (t.ident.size() > 2 && t.ident.rfind("x_", 0) == 0) {
      for (std::size_t i = 2; i < t.ident.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(t.ident[i])))
          fail(text_, t.pos, "unknown identifier '" + t.ident + "'");
      const long k = std::strtol(t.ident.c_str() + 2, nullptr, 10);
      if (k < 1 || k > dim_)
        fail(text_, t.pos,
             "coordinate '" + t.ident + "' out of range for dimension " +
                 std::to_string(dim_));
      auto n = std::make_shared<ExprNode>();
      n->op = Op::Coord;
      n->coord = static_cast<Eigen::Index>(k - 1);
      return n;
    }

    Op op;
    bool reduction = false;
    if (t.ident == "cos") op = Op::Cos;
    else if (t.ident == "sin") op = Op::Sin;
    else if (t.ident == "exp") op = Op::Exp;
    else if (t.ident == "sqrt") op = Op::Sqrt;
    else if (t.ident == "abs") op = Op::Abs;
    else if (t.ident == "sum") { op = Op::Sum; reduction = true; }
    else if (t.ident == "prod") { op = Op::Prod; reduction = true; }
    else fail(text_, t.pos, "unknown identifier '" + t.ident + "'");

    expect_symbol('(', "expected '(' after function name");
    std::vector<NodePtr> args;
    args.push_back(parse_expr());
    while (at_symbol(',')) {
      lex_.take();
      args.push_back(parse_expr());
    }
    expect_symbol(')', "expected ')'");

    if (!reduction) {
      if (args.size() != 1)
        fail(text_, t.pos, "'" + t.ident + "' takes exactly one argument");
      if (args[0]->op == Op::AllCoords)
        fail(text_, t.pos, "`x` is only valid directly inside sum/prod");
    }
    return make_node(op, std::move(args));
  }

  const std::string& text_;
  Eigen::Index dim_;
  Lexer lex_;
};

double eval_node(const ExprNode& n, const Eigen::Ref<const Eigen::VectorXd>& x);

double eval_reduction(const ExprNode& n,
                      const Eigen::Ref<const Eigen::VectorXd>& x) {
  const bool is_sum = n.op == Op::Sum;
  double acc = is_sum ? 0.0 : 1.0;
  for (const NodePtr& child : n.children) {
    if (child->op == Op::AllCoords) {
      for (Eigen::Index i = 0; i < x.size(); ++i)
        acc = is_sum ? acc + x(i) : acc * x(i);
    } else {
      const double v = eval_node(*child, x);
      acc = is_sum ? acc + v : acc * v;
    }
  }
  return acc;
}

double eval_node(const ExprNode& n,
                 const Eigen::Ref<const Eigen::VectorXd>& x) {
  switch (n.op) {
    case Op::Number: return n.number;
    case Op::Coord: return x(n.coord);
    case Op::AllCoords: break;  // unreachable, rejected at parse time
    case Op::Add: return eval_node(*n.children[0], x) + eval_node(*n.children[1], x);
    case Op::Sub: return eval_node(*n.children[0], x) - eval_node(*n.children[1], x);
    case Op::Mul: return eval_node(*n.children[0], x) * eval_node(*n.children[1], x);
    case Op::Div: return eval_node(*n.children[0], x) / eval_node(*n.children[1], x);
    case Op::Pow:
      return std::pow(eval_node(*n.children[0], x),
                      eval_node(*n.children[1], x));
    case Op::Neg: return -eval_node(*n.children[0], x);
    case Op::Cos: return std::cos(eval_node(*n.children[0], x));
    case Op::Sin: return std::sin(eval_node(*n.children[0], x));
    case Op::Exp: return std::exp(eval_node(*n.children[0], x));
    case Op::Sqrt: return std::sqrt(eval_node(*n.children[0], x));
    case Op::Abs: return std::abs(eval_node(*n.children[0], x));
    case Op::Sum:
    case Op::Prod: return eval_reduction(n, x);
  }
  throw std::logic_error("expression: corrupt node");
}

}  // namespace

Expression Expression::parse(const std::string& text, Eigen::Index dim) {
  if (dim < 1)
    throw std::invalid_argument("expression: dimension must be positive");
  Expression e;
  e.text_ = text;
  e.dim_ = dim;
  e.root_ = Parser(text, dim).parse();
  if (e.root_->op == detail::Op::AllCoords)
    fail(text, 0, "`x` is only valid directly inside sum/prod");
  return e;
}

double Expression::operator()(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != dim_)
    throw std::invalid_argument("expression: point dimension mismatch");
  return eval_node(*root_, x);
}

}  // namespace cbob
