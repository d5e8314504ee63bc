#ifndef AREX_TAPE_HPP
#define AREX_TAPE_HPP

#include <functional>
#include <vector>

#include "arex/common.hpp"

// Reverse-mode autodiff on a scalar tape. Supported primitives: affine
// combinations, multiplication, rectifier, logistic, square, natural log,
// smoothed absolute value and sums. The rectifier uses subgradient 0 at 0.
//
// This engine favors flexibility over speed; the dense network kernels in
// mlp.hpp carry the training load and are cross-checked against this tape
// and against finite differences.

namespace arex::numkit {

class Tape {
 public:
  // Creates a leaf variable.
  int input(double v) { return push(v, -1, 0.0, -1, 0.0); }

  double value(int id) const { return val_[static_cast<size_t>(id)]; }
  size_t size() const { return val_.size(); }

  int add(int a, int b) { return push(val(a) + val(b), a, 1.0, b, 1.0); }
  int sub(int a, int b) { return push(val(a) - val(b), a, 1.0, b, -1.0); }
  int mul(int a, int b) { return push(val(a) * val(b), a, val(b), b, val(a)); }
  int neg(int a) { return push(-val(a), a, -1.0); }
  int scale(double k, int a) { return push(k * val(a), a, k); }
  int shift(double k, int a) { return push(k + val(a), a, 1.0); }

  int relu(int a) {
    double x = val(a);
    return push(x > 0.0 ? x : 0.0, a, x > 0.0 ? 1.0 : 0.0);
  }

  int logistic(int a) {
    double x = val(a);
    double p = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return push(p, a, p * (1.0 - p));
  }

  int square(int a) { return push(val(a) * val(a), a, 2.0 * val(a)); }

  int log_(int a) {
    double x = val(a);
    if (x <= 0.0) throw NumericError("tape log of non-positive value");
    return push(std::log(x), a, 1.0 / x);
  }

  // sqrt(x^2 + eps^2): smooth stand-in for |x| with bounded curvature.
  int abs_smooth(int a, double eps = 1e-8) {
    double x = val(a);
    double r = std::sqrt(x * x + eps * eps);
    return push(r, a, r > 0.0 ? x / r : 0.0);
  }

  int sum(const std::vector<int>& ids) {
    if (ids.empty()) return input(0.0);
    int acc = ids[0];
    for (size_t i = 1; i < ids.size(); ++i) acc = add(acc, ids[i]);
    return acc;
  }

  // Adjoints of every node with respect to the scalar at `out`.
  Vec backward(int out) const;

 private:
  struct Node {
    int p0, p1;
    double d0, d1;
  };

  double val(int id) const { return val_[static_cast<size_t>(id)]; }

  int push(double v, int p0 = -1, double d0 = 0.0, int p1 = -1, double d1 = 0.0) {
    if (!std::isfinite(v)) throw NumericError("tape produced non-finite value");
    nodes_.push_back({p0, p1, d0, d1});
    val_.push_back(v);
    return static_cast<int>(val_.size()) - 1;
  }

  std::vector<Node> nodes_;
  Vec val_;
};

// Convenience handle so expressions read naturally in call sites and tests.
struct Ad {
  Tape* t = nullptr;
  int id = -1;
  double v() const { return t->value(id); }
};

inline Ad make_input(Tape& t, double v) { return {&t, t.input(v)}; }
inline Ad operator+(Ad a, Ad b) { return {a.t, a.t->add(a.id, b.id)}; }
inline Ad operator-(Ad a, Ad b) { return {a.t, a.t->sub(a.id, b.id)}; }
inline Ad operator*(Ad a, Ad b) { return {a.t, a.t->mul(a.id, b.id)}; }
inline Ad operator-(Ad a) { return {a.t, a.t->neg(a.id)}; }
inline Ad operator*(double k, Ad a) { return {a.t, a.t->scale(k, a.id)}; }
inline Ad operator+(double k, Ad a) { return {a.t, a.t->shift(k, a.id)}; }
inline Ad operator+(Ad a, double k) { return {a.t, a.t->shift(k, a.id)}; }
inline Ad operator-(Ad a, double k) { return {a.t, a.t->shift(-k, a.id)}; }
inline Ad relu(Ad a) { return {a.t, a.t->relu(a.id)}; }
inline Ad logistic(Ad a) { return {a.t, a.t->logistic(a.id)}; }
inline Ad square(Ad a) { return {a.t, a.t->square(a.id)}; }
inline Ad log_(Ad a) { return {a.t, a.t->log_(a.id)}; }
inline Ad abs_smooth(Ad a, double eps = 1e-8) { return {a.t, a.t->abs_smooth(a.id, eps)}; }

// Gradient of a scalar function built from tape primitives, evaluated at `at`.
Vec grad(const std::function<Ad(Tape&, const std::vector<Ad>&)>& f, const Vec& at);

// Central finite differences, the independent oracle for every gradient path.
Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& at,
                       double h = 1e-5);

}  // namespace arex::numkit

#endif
