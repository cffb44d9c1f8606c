#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>

namespace cbob {

namespace detail {
struct ExprNode;
}

// A scalar function of a point, compiled from text. Supported syntax:
//   numbers            1, 2.5, 1e-3
//   coordinates        x_1 .. x_n (1-based)
//   operators          + - * / ^ (power, right-associative), unary minus
//   functions          cos sin exp sqrt abs (one argument)
//   reductions         sum(...), prod(...) over any number of arguments;
//                      the bare name `x` inside them stands for all
//                      coordinates, e.g. sum(x) or prod(x)
// Parse errors throw std::invalid_argument with the offending position.
class Expression {
 public:
  static Expression parse(const std::string& text, Eigen::Index dim);

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  [[nodiscard]] const std::string& text() const { return text_; }
  [[nodiscard]] Eigen::Index dim() const { return dim_; }

 private:
  Expression() = default;

  std::shared_ptr<const detail::ExprNode> root_;
  std::string text_;
  Eigen::Index dim_ = 0;
};

}  // namespace cbob
