#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "arex/mlp.hpp"
#include "arex/optim.hpp"
#include "arex/rng.hpp"
#include "arex/tape.hpp"

using namespace arex;
using namespace arex::numkit;

namespace {

// Straight-line reference forward pass, written independently of the library
// layout code: slices theta into explicit matrices and runs nested loops.
double naive_forward(const MlpParams& p, const Vec& x) {
  size_t h = static_cast<size_t>(p.hidden), in = static_cast<size_t>(p.in_dim);
  size_t pos = 0;
  auto take_matrix = [&](size_t rows, size_t cols) {
    std::vector<Vec> m(rows, Vec(cols));
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < cols; ++c) m[r][c] = p.theta[pos++];
    return m;
  };
  auto take_vec = [&](size_t n) {
    Vec v(n);
    for (size_t i = 0; i < n; ++i) v[i] = p.theta[pos++];
    return v;
  };
  auto w1 = take_matrix(h, in);
  auto b1 = take_vec(h);
  auto w2 = take_matrix(h, h);
  auto b2 = take_vec(h);
  auto w3 = take_matrix(h, h);
  auto b3 = take_vec(h);
  auto w4 = take_matrix(1, h);
  auto b4 = take_vec(1);

  auto apply = [](const std::vector<Vec>& w, const Vec& b, const Vec& v, bool rect) {
    Vec out(w.size());
    for (size_t r = 0; r < w.size(); ++r) {
      double s = b[r];
      for (size_t c = 0; c < v.size(); ++c) s += w[r][c] * v[c];
      out[r] = rect && s < 0.0 ? 0.0 : s;
    }
    return out;
  };
  Vec v = apply(w1, b1, x, true);
  v = apply(w2, b2, v, true);
  v = apply(w3, b3, v, true);
  v = apply(w4, b4, v, false);
  double y = v[0];
  if (p.logistic_out) y = 1.0 / (1.0 + std::exp(-y));
  return y;
}

double rel_err(double a, double b) {
  double scale = std::max({std::fabs(a), std::fabs(b), 1e-6});
  return std::fabs(a - b) / scale;
}

// True when some hidden pre-activation sits close enough to the rectifier kink
// that finite differences would step across it.
bool near_kink(const MlpParams& p, const Vec& x, double margin) {
  MlpTrace t;
  mlp_forward(p, x, t);
  for (const Vec* pre : {&t.pre1, &t.pre2, &t.pre3})
    for (double v : *pre)
      if (std::fabs(v) < margin) return true;
  return false;
}

}  // namespace

TEST_CASE("rng streams are deterministic and distinct") {
  Rng a(42, 7), b(42, 7), c(42, 8);
  for (int i = 0; i < 100; ++i) {
    uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
  }
  int differs = 0;
  Rng a2(42, 7);
  for (int i = 0; i < 100; ++i)
    if (a2.next_u64() != c.next_u64()) ++differs;
  CHECK(differs > 90);
}

TEST_CASE("rng moments are sane") {
  Rng r(5, 0);
  double sum = 0.0, sumsq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double g = r.gaussian();
    sum += g;
    sumsq += g * g;
  }
  CHECK(std::fabs(sum / n) < 0.01);
  CHECK(std::fabs(sumsq / n - 1.0) < 0.02);

  double u = 0.0;
  for (int i = 0; i < n; ++i) u += r.uniform(2.0, 5.0);
  CHECK(std::fabs(u / n - 3.5) < 0.01);
}

TEST_CASE("tape: analytic derivative spot values") {
  auto sq = [](Tape&, const std::vector<Ad>& xs) { return square(xs[0]); };
  CHECK(grad(sq, {3.0})[0] == doctest::Approx(6.0).epsilon(1e-12));

  // x^4 - x^2 + 1 via supported primitives: square(square(x)) - square(x) + 1.
  auto quartic = [](Tape&, const std::vector<Ad>& xs) {
    return square(square(xs[0])) - square(xs[0]) + 1.0;
  };
  CHECK(grad(quartic, {1.0})[0] == doctest::Approx(2.0).epsilon(1e-12));

  // relu(x)^2: 2x on the positive side, 0 on the negative, 0 at the kink.
  auto f = [](Tape&, const std::vector<Ad>& xs) { return square(relu(xs[0])); };
  CHECK(grad(f, {2.0})[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(grad(f, {-1.0})[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(grad(f, {0.0})[0] == 0.0);
}

TEST_CASE("tape primitives match finite differences at random probes") {
  Rng rng(11, 0);
  auto check_unary = [&](auto op, auto host, double lo, double hi) {
    for (int trial = 0; trial < 100; ++trial) {
      double x = rng.uniform(lo, hi);
      auto f = [&](Tape&, const std::vector<Ad>& xs) { return op(xs[0]); };
      double ad = grad(f, {x})[0];
      double fd = central_difference([&](const Vec& v) { return host(v[0]); }, {x})[0];
      CHECK(rel_err(ad, fd) < 1e-4);
    }
  };
  check_unary([](Ad a) { return logistic(a); },
              [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, -4.0, 4.0);
  check_unary([](Ad a) { return square(a); }, [](double x) { return x * x; }, -3.0, 3.0);
  check_unary([](Ad a) { return log_(a); }, [](double x) { return std::log(x); }, 0.1, 5.0);
  check_unary([](Ad a) { return abs_smooth(a, 1e-3); },
              [](double x) { return std::sqrt(x * x + 1e-6); }, -2.0, 2.0);
  // Rectifier away from the kink.
  for (int trial = 0; trial < 100; ++trial) {
    double x = rng.uniform(0.01, 3.0) * (trial % 2 == 0 ? 1.0 : -1.0);
    auto f = [](Tape&, const std::vector<Ad>& xs) { return relu(xs[0]); };
    double ad = grad(f, {x})[0];
    double fd = central_difference(
        [](const Vec& v) { return v[0] > 0.0 ? v[0] : 0.0; }, {x}, 1e-5)[0];
    CHECK(rel_err(ad, fd) < 1e-4);
  }
  // Products and affine mixes of two variables.
  for (int trial = 0; trial < 100; ++trial) {
    Vec at = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    auto f = [](Tape&, const std::vector<Ad>& xs) {
      return 3.0 * xs[0] * xs[1] + square(xs[0]) + (-2.0) * xs[1] + 1.5;
    };
    auto host = [](const Vec& v) {
      return 3.0 * v[0] * v[1] + v[0] * v[0] - 2.0 * v[1] + 1.5;
    };
    Vec ad = grad(f, at);
    Vec fd = central_difference(host, at);
    CHECK(rel_err(ad[0], fd[0]) < 1e-4);
    CHECK(rel_err(ad[1], fd[1]) < 1e-4);
  }
}

TEST_CASE("mlp: hand-frozen tiny network values") {
  MlpParams p;
  p.in_dim = 1;
  p.hidden = 1;
  p.out_dim = 1;
  p.theta = {2.0, 0.5, -1.0, 1.0, 3.0, -2.0, 1.0, 0.25};
  CHECK(mlp_value(p, {1.0}) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(mlp_value(p, {-1.0}) == doctest::Approx(1.25).epsilon(1e-15));
}

TEST_CASE("mlp: zero parameters map everything to zero pre-logistic") {
  MlpParams p;
  p.in_dim = 4;
  p.hidden = 16;
  p.out_dim = 1;
  p.theta.assign(p.n_params(), 0.0);
  Rng rng(3, 1);
  for (int i = 0; i < 10; ++i) CHECK(mlp_value(p, rng.gaussian_vec(4)) == 0.0);
}

TEST_CASE("mlp forward agrees with naive reference on random nets") {
  Rng rng(21, 0);
  for (int trial = 0; trial < 20; ++trial) {
    int in = 1 + static_cast<int>(rng.uniform_index(5));
    MlpParams p = mlp_init(in, 8, 1, trial % 2 == 1, rng);
    for (int k = 0; k < 10; ++k) {
      Vec x = rng.gaussian_vec(static_cast<size_t>(in), 0.0, 2.0);
      CHECK(mlp_value(p, x) == doctest::Approx(naive_forward(p, x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("mlp hand-rolled reverse pass matches tape and finite differences") {
  Rng rng(31, 0);
  int checked = 0;
  for (int trial = 0; trial < 120 && checked < 100; ++trial) {
    MlpParams p = mlp_init(3, 6, 1, false, rng);
    Vec x = rng.gaussian_vec(3, 0.0, 1.5);
    if (near_kink(p, x, 1e-3)) continue;
    ++checked;

    // Hand-rolled reverse pass.
    MlpTrace t;
    mlp_forward(p, x, t);
    Vec dtheta(p.theta.size(), 0.0);
    Vec dx = mlp_vjp(p, x, t, {1.0}, dtheta);

    // Tape over (theta, x) jointly.
    Tape tape;
    std::vector<Ad> th;
    th.reserve(p.theta.size());
    for (double v : p.theta) th.push_back(make_input(tape, v));
    Ad out = mlp_forward_tape(tape, p, th, x);
    Vec adj = tape.backward(out.id);
    for (size_t i = 0; i < p.theta.size(); ++i)
      CHECK(rel_err(dtheta[i], adj[static_cast<size_t>(th[i].id)]) < 1e-10);

    // Finite differences over the parameters (spot-checked) and the input.
    Vec fdx = central_difference([&](const Vec& v) { return mlp_value(p, v); }, x);
    for (size_t i = 0; i < x.size(); ++i) CHECK(rel_err(dx[i], fdx[i]) < 1e-4);
    for (size_t i = 0; i < p.theta.size(); i += 17) {
      MlpParams q = p;
      auto f = [&](const Vec& v) {
        q.theta[i] = v[0];
        return mlp_value(q, x);
      };
      double fd = central_difference(f, {p.theta[i]})[0];
      CHECK(rel_err(dtheta[i], fd) < 1e-4);
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("mlp logistic head gradient paths") {
  Rng rng(77, 0);
  MlpParams p = mlp_init(4, 6, 1, true, rng);
  Vec x = rng.gaussian_vec(4);
  MlpTrace t;
  mlp_forward(p, x, t);
  CHECK(t.out[0] > 0.0);
  CHECK(t.out[0] < 1.0);

  Vec dtheta(p.theta.size(), 0.0);
  mlp_vjp(p, x, t, {1.0}, dtheta);
  for (size_t i = 0; i < p.theta.size(); i += 23) {
    MlpParams q = p;
    auto f = [&](const Vec& v) {
      q.theta[i] = v[0];
      return mlp_value(q, x);
    };
    double fd = central_difference(f, {p.theta[i]})[0];
    CHECK(rel_err(dtheta[i], fd) < 1e-4);
  }

  // Adjoint on the logit equals the post-logistic adjoint divided by s(1-s).
  Vec dtheta_logit(p.theta.size(), 0.0);
  mlp_vjp(p, x, t, {1.0}, dtheta_logit, true);
  double s = t.out[0];
  for (size_t i = 0; i < p.theta.size(); i += 101)
    CHECK(dtheta[i] == doctest::Approx(dtheta_logit[i] * s * (1.0 - s)).epsilon(1e-12));
}

TEST_CASE("mlp shape errors") {
  Rng rng(1, 0);
  MlpParams p = mlp_init(3, 4, 1, false, rng);
  CHECK_THROWS_AS(mlp_value(p, {1.0, 2.0}), ShapeError);
  p.theta.pop_back();
  CHECK_THROWS_AS(mlp_value(p, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(mlp_init(0, 4, 1, false, rng), ShapeError);
}

TEST_CASE("adam reaches a fixed quadratic optimum within the frozen budget") {
  AdamState st(1, 1e-3);
  Vec x = {0.0};
  for (int i = 0; i < 20000; ++i) {
    Vec g = {x[0] - 3.0};
    adam_step(st, x, g);
  }
  CHECK(std::fabs(x[0] - 3.0) < 1e-3);
}

TEST_CASE("adam rejects non-finite gradients") {
  AdamState st(1, 1e-3);
  Vec x = {0.0};
  CHECK_THROWS_AS(adam_step(st, x, {std::numeric_limits<double>::quiet_NaN()}),
                  NumericError);
}

TEST_CASE("parameter files round-trip bitwise and reject mismatched shapes") {
  Rng rng(9, 4);
  MlpParams p = mlp_init(5, 7, 2, true, rng);
  auto dir = std::filesystem::temp_directory_path() / "arex_numkit_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "net.txt").string();
  save_mlp(p, path);
  MlpParams q = load_mlp(path);
  CHECK(q.in_dim == p.in_dim);
  CHECK(q.hidden == p.hidden);
  CHECK(q.out_dim == p.out_dim);
  CHECK(q.logistic_out == p.logistic_out);
  REQUIRE(q.theta.size() == p.theta.size());
  for (size_t i = 0; i < p.theta.size(); ++i) CHECK(q.theta[i] == p.theta[i]);

  // Clipping one number off the end must be caught by the shape check.
  MlpParams bad = p;
  bad.theta.pop_back();
  bad.out_dim = 2;
  auto bad_path = (dir / "bad.txt").string();
  {
    std::FILE* f = std::fopen(bad_path.c_str(), "w");
    std::fputs("# mlp\n# in 5\n# hidden 7\n# out 2\n# logistic 1\n", f);
    for (double v : bad.theta) std::fprintf(f, "%.17g\n", v);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_mlp(bad_path), ShapeError);
}
