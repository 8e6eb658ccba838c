#pragma once

#include <memory>
#include <string>
#include <vector>

#include "deepteam/types.hpp"

namespace deepteam {

// Arithmetic over the joint state-action distribution:
//   numbers, + - * /, unary -, parentheses,
//   D[k,x,u]   mass of (state x, action u) in sub-population k (indices, 0-based)
//   d[k,x]     sum over u of D[k,x,u]
//   t          time step
//   clamp(e) clamp(e,lo,hi) min(a,b) max(a,b) abs(e)
class Expr {
 public:
  Expr() = default;
  // Throws ValidationError naming `where` and the offending column on a syntax error.
  static Expr parse(const std::string& text, const std::string& where = "expression");

  double eval(int t, const StateActionDist& D) const;
  bool uses_distribution() const { return uses_D_; }
  bool uses_time() const { return uses_t_; }
  // Checks that every index is within the given shape; throws ValidationError otherwise.
  void check_indices(const std::vector<int>& states, const std::vector<int>& actions, const std::string& where) const;
  const std::string& text() const { return text_; }

  struct Node {
    enum Kind { Num, Add, Sub, Mul, Div, Neg, Dxu, Dx, Time, Clamp, Clamp3, Min, Max, Abs } kind = Num;
    double value = 0.0;
    int a = -1, b = -1, c = -1;  // child nodes
    int k = 0, x = 0, u = 0;
  };

 private:
  std::vector<Node> nodes_;
  int root_ = -1;
  bool uses_D_ = false, uses_t_ = false;
  std::string text_;
  double eval_node(int i, int t, const StateActionDist& D) const;
  friend class ExprParser;
};

}  // namespace deepteam
