#include "deepteam/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include "deepteam/error.hpp"

namespace deepteam {

class ExprParser {
 public:
  ExprParser(const std::string& s, const std::string& where, Expr& out) : s_(s), where_(where), e_(out) {}

  int parse() {
    int n = sum();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

 private:
  const std::string& s_;
  const std::string& where_;
  Expr& e_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ValidationError(where_ + ": " + msg + " at column " + std::to_string(pos_ + 1) + " in \"" + s_ + "\"");
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!eat(c)) fail(std::string("expected '") + c + "'");
  }
  int add(Expr::Node n) {
    e_.nodes_.push_back(n);
    return static_cast<int>(e_.nodes_.size()) - 1;
  }
  int binary(Expr::Node::Kind k, int a, int b) {
    Expr::Node n;
    n.kind = k;
    n.a = a;
    n.b = b;
    return add(n);
  }
  int sum() {
    int l = product();
    for (;;) {
      if (eat('+')) l = binary(Expr::Node::Add, l, product());
      else if (eat('-')) l = binary(Expr::Node::Sub, l, product());
      else return l;
    }
  }
  int product() {
    int l = unary();
    for (;;) {
      if (eat('*')) l = binary(Expr::Node::Mul, l, unary());
      else if (eat('/')) l = binary(Expr::Node::Div, l, unary());
      else return l;
    }
  }
  int unary() {
    if (eat('-')) {
      Expr::Node n;
      n.kind = Expr::Node::Neg;
      n.a = unary();
      return add(n);
    }
    if (eat('+')) return unary();
    return primary();
  }
  int integer() {
    skip();
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) fail("expected an index");
    return std::atoi(s_.substr(start, pos_ - start).c_str());
  }
  int primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    const char c = s_[pos_];
    if (eat('(')) {
      int n = sum();
      expect(')');
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      Expr::Node n;
      n.value = v;
      return add(n);
    }
    if (!std::isalpha(static_cast<unsigned char>(c))) fail("unexpected '" + std::string(1, c) + "'");
    std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    const std::string id = s_.substr(start, pos_ - start);
    Expr::Node n;
    if (id == "D" || id == "d") {
      expect('[');
      n.k = integer();
      expect(',');
      n.x = integer();
      if (id == "D") {
        expect(',');
        n.u = integer();
      }
      expect(']');
      n.kind = id == "D" ? Expr::Node::Dxu : Expr::Node::Dx;
      e_.uses_D_ = true;
      return add(n);
    }
    if (id == "t") {
      n.kind = Expr::Node::Time;
      e_.uses_t_ = true;
      return add(n);
    }
    if (id == "clamp" || id == "min" || id == "max" || id == "abs") {
      expect('(');
      n.a = sum();
      if (id == "abs") {
        n.kind = Expr::Node::Abs;
      } else if (id == "clamp") {
        n.kind = Expr::Node::Clamp;
        if (eat(',')) {
          n.b = sum();
          expect(',');
          n.c = sum();
          n.kind = Expr::Node::Clamp3;
        }
      } else {
        expect(',');
        n.b = sum();
        n.kind = id == "min" ? Expr::Node::Min : Expr::Node::Max;
      }
      expect(')');
      return add(n);
    }
    pos_ = start;
    fail("unknown identifier '" + id + "'");
  }
};

Expr Expr::parse(const std::string& text, const std::string& where) {
  Expr e;
  e.text_ = text;
  ExprParser p(text, where, e);
  e.root_ = p.parse();
  return e;
}

double Expr::eval(int t, const StateActionDist& D) const {
  if (root_ < 0) return 0.0;
  return eval_node(root_, t, D);
}

double Expr::eval_node(int i, int t, const StateActionDist& D) const {
  const Node& n = nodes_[static_cast<std::size_t>(i)];
  switch (n.kind) {
    case Node::Num: return n.value;
    case Node::Add: return eval_node(n.a, t, D) + eval_node(n.b, t, D);
    case Node::Sub: return eval_node(n.a, t, D) - eval_node(n.b, t, D);
    case Node::Mul: return eval_node(n.a, t, D) * eval_node(n.b, t, D);
    case Node::Div: return eval_node(n.a, t, D) / eval_node(n.b, t, D);
    case Node::Neg: return -eval_node(n.a, t, D);
    case Node::Dxu: return D(static_cast<std::size_t>(n.k), n.x, n.u);
    case Node::Dx: {
      double s = 0.0;
      for (int u = 0; u < D.num_actions[static_cast<std::size_t>(n.k)]; ++u) s += D(static_cast<std::size_t>(n.k), n.x, u);
      return s;
    }
    case Node::Time: return t;
    case Node::Clamp: return std::clamp(eval_node(n.a, t, D), 0.0, 1.0);
    case Node::Clamp3: return std::clamp(eval_node(n.a, t, D), eval_node(n.b, t, D), eval_node(n.c, t, D));
    case Node::Min: return std::min(eval_node(n.a, t, D), eval_node(n.b, t, D));
    case Node::Max: return std::max(eval_node(n.a, t, D), eval_node(n.b, t, D));
    case Node::Abs: return std::fabs(eval_node(n.a, t, D));
  }
  return 0.0;
}

void Expr::check_indices(const std::vector<int>& states, const std::vector<int>& actions, const std::string& where) const {
  for (const auto& n : nodes_) {
    if (n.kind != Node::Dxu && n.kind != Node::Dx) continue;
    const bool bad = n.k < 0 || static_cast<std::size_t>(n.k) >= states.size() || n.x >= states[static_cast<std::size_t>(n.k)] ||
                     (n.kind == Node::Dxu && n.u >= actions[static_cast<std::size_t>(n.k)]);
    if (bad)
      throw ValidationError(where + ": index out of range in \"" + text_ + "\" (" + (n.kind == Node::Dxu ? "D[" : "d[") +
                            std::to_string(n.k) + "," + std::to_string(n.x) +
                            (n.kind == Node::Dxu ? "," + std::to_string(n.u) : std::string()) + "])");
  }
}

}  // namespace deepteam
