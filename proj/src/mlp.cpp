#include "arex/mlp.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace arex::numkit {

namespace {

struct Layout {
  size_t w1, b1, w2, b2, w3, b3, w4, b4;
};

Layout layout_of(const MlpParams& p) {
  size_t h = static_cast<size_t>(p.hidden), in = static_cast<size_t>(p.in_dim),
         out = static_cast<size_t>(p.out_dim);
  Layout l{};
  l.w1 = 0;
  l.b1 = l.w1 + h * in;
  l.w2 = l.b1 + h;
  l.b2 = l.w2 + h * h;
  l.w3 = l.b2 + h;
  l.b3 = l.w3 + h * h;
  l.w4 = l.b3 + h;
  l.b4 = l.w4 + out * h;
  return l;
}

void check_shape(const MlpParams& p) {
  if (p.in_dim <= 0 || p.hidden <= 0 || p.out_dim <= 0)
    throw ShapeError("mlp: non-positive dimension");
  if (p.theta.size() != p.n_params()) throw ShapeError("mlp: parameter count mismatch");
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// y = W x + b with W rows contiguous.
inline void affine(const double* w, const double* b, const double* x, int rows,
                   int cols, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* wr = w + static_cast<size_t>(r) * cols;
    double s = b[r];
    for (int c = 0; c < cols; ++c) s += wr[c] * x[c];
    y[r] = s;
  }
}

inline void relu_vec(const Vec& pre, Vec& post) {
  post.resize(pre.size());
  for (size_t i = 0; i < pre.size(); ++i) post[i] = pre[i] > 0.0 ? pre[i] : 0.0;
}

}  // namespace

MlpParams mlp_init(int in_dim, int hidden, int out_dim, bool logistic_out, Rng& rng) {
  MlpParams p;
  p.in_dim = in_dim;
  p.hidden = hidden;
  p.out_dim = out_dim;
  p.logistic_out = logistic_out;
  if (in_dim <= 0 || hidden <= 0 || out_dim <= 0)
    throw ShapeError("mlp_init: non-positive dimension");
  p.theta.assign(p.n_params(), 0.0);
  Layout l = layout_of(p);
  size_t h = static_cast<size_t>(hidden);
  double s1 = std::sqrt(2.0 / in_dim), sh = std::sqrt(2.0 / hidden),
         so = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (size_t i = 0; i < h * static_cast<size_t>(in_dim); ++i)
    p.theta[l.w1 + i] = rng.gaussian(0.0, s1);
  for (size_t i = 0; i < h * h; ++i) p.theta[l.w2 + i] = rng.gaussian(0.0, sh);
  for (size_t i = 0; i < h * h; ++i) p.theta[l.w3 + i] = rng.gaussian(0.0, sh);
  for (size_t i = 0; i < static_cast<size_t>(out_dim) * h; ++i)
    p.theta[l.w4 + i] = rng.gaussian(0.0, so);
  return p;
}

void mlp_forward(const MlpParams& p, const Vec& x, MlpTrace& t) {
  check_shape(p);
  if (static_cast<int>(x.size()) != p.in_dim) throw ShapeError("mlp_forward: input dim");
  Layout l = layout_of(p);
  const double* th = p.theta.data();
  int h = p.hidden, o = p.out_dim;

  t.pre1.resize(static_cast<size_t>(h));
  affine(th + l.w1, th + l.b1, x.data(), h, p.in_dim, t.pre1.data());
  relu_vec(t.pre1, t.h1);

  t.pre2.resize(static_cast<size_t>(h));
  affine(th + l.w2, th + l.b2, t.h1.data(), h, h, t.pre2.data());
  relu_vec(t.pre2, t.h2);

  t.pre3.resize(static_cast<size_t>(h));
  affine(th + l.w3, th + l.b3, t.h2.data(), h, h, t.pre3.data());
  relu_vec(t.pre3, t.h3);

  t.logit.resize(static_cast<size_t>(o));
  affine(th + l.w4, th + l.b4, t.h3.data(), o, h, t.logit.data());

  t.out.resize(static_cast<size_t>(o));
  for (int i = 0; i < o; ++i)
    t.out[static_cast<size_t>(i)] =
        p.logistic_out ? sigmoid(t.logit[static_cast<size_t>(i)])
                       : t.logit[static_cast<size_t>(i)];
}

double mlp_value(const MlpParams& p, const Vec& x) {
  if (p.out_dim != 1) throw ShapeError("mlp_value: head is not scalar");
  thread_local MlpTrace t;
  mlp_forward(p, x, t);
  return t.out[0];
}

Vec mlp_vjp(const MlpParams& p, const Vec& x, const MlpTrace& t, const Vec& dy,
            Vec& dtheta, bool on_logit) {
  check_shape(p);
  if (dtheta.size() != p.theta.size()) throw ShapeError("mlp_vjp: dtheta size");
  if (static_cast<int>(dy.size()) != p.out_dim) throw ShapeError("mlp_vjp: dy size");
  Layout l = layout_of(p);
  const double* th = p.theta.data();
  double* dth = dtheta.data();
  int h = p.hidden, o = p.out_dim, in = p.in_dim;

  // Head adjoint.
  Vec dlogit(static_cast<size_t>(o));
  for (int i = 0; i < o; ++i) {
    double a = dy[static_cast<size_t>(i)];
    if (p.logistic_out && !on_logit) {
      double s = t.out[static_cast<size_t>(i)];
      a *= s * (1.0 - s);
    }
    dlogit[static_cast<size_t>(i)] = a;
  }

  Vec dh3(static_cast<size_t>(h), 0.0);
  for (int r = 0; r < o; ++r) {
    double a = dlogit[static_cast<size_t>(r)];
    dth[l.b4 + static_cast<size_t>(r)] += a;
    const double* wr = th + l.w4 + static_cast<size_t>(r) * h;
    double* gw = dth + l.w4 + static_cast<size_t>(r) * h;
    for (int c = 0; c < h; ++c) {
      gw[c] += a * t.h3[static_cast<size_t>(c)];
      dh3[static_cast<size_t>(c)] += a * wr[c];
    }
  }

  auto backprop_hidden = [&](const Vec& dpost, const Vec& pre, const Vec& below,
                             size_t w_off, size_t b_off, int cols, Vec& dbelow) {
    dbelow.assign(static_cast<size_t>(cols), 0.0);
    for (int r = 0; r < h; ++r) {
      double a = pre[static_cast<size_t>(r)] > 0.0 ? dpost[static_cast<size_t>(r)] : 0.0;
      if (a == 0.0) continue;
      dth[b_off + static_cast<size_t>(r)] += a;
      const double* wr = th + w_off + static_cast<size_t>(r) * cols;
      double* gw = dth + w_off + static_cast<size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) {
        gw[c] += a * below[static_cast<size_t>(c)];
        dbelow[static_cast<size_t>(c)] += a * wr[c];
      }
    }
  };

  Vec dh2, dh1, dx;
  backprop_hidden(dh3, t.pre3, t.h2, l.w3, l.b3, h, dh2);
  backprop_hidden(dh2, t.pre2, t.h1, l.w2, l.b2, h, dh1);
  backprop_hidden(dh1, t.pre1, x, l.w1, l.b1, in, dx);
  return dx;
}

Vec mlp_input_grad(const MlpParams& p, const Vec& x) {
  if (p.out_dim != 1) throw ShapeError("mlp_input_grad: head is not scalar");
  thread_local MlpTrace t;
  mlp_forward(p, x, t);
  thread_local Vec scratch;
  scratch.assign(p.theta.size(), 0.0);
  return mlp_vjp(p, x, t, Vec{1.0}, scratch);
}

Ad mlp_forward_tape(Tape& tape, const MlpParams& shape, const std::vector<Ad>& theta,
                    const Vec& x) {
  if (shape.out_dim != 1) throw ShapeError("mlp_forward_tape: head is not scalar");
  if (theta.size() != shape.n_params()) throw ShapeError("mlp_forward_tape: theta size");
  Layout l = layout_of(shape);
  int h = shape.hidden, in = shape.in_dim;

  auto layer = [&](const std::vector<Ad>& below, size_t w_off, size_t b_off, int cols,
                   bool rectify) {
    std::vector<Ad> out;
    out.reserve(static_cast<size_t>(h));
    int rows = rectify ? h : 1;
    for (int r = 0; r < rows; ++r) {
      Ad acc = theta[b_off + static_cast<size_t>(r)];
      for (int c = 0; c < cols; ++c) {
        Ad w = theta[w_off + static_cast<size_t>(r) * cols + static_cast<size_t>(c)];
        acc = acc + w * below[static_cast<size_t>(c)];
      }
      out.push_back(rectify ? relu(acc) : acc);
    }
    return out;
  };

  std::vector<Ad> xs;
  xs.reserve(static_cast<size_t>(in));
  for (double v : x) xs.push_back(make_input(tape, v));
  std::vector<Ad> h1 = layer(xs, l.w1, l.b1, in, true);
  std::vector<Ad> h2 = layer(h1, l.w2, l.b2, h, true);
  std::vector<Ad> h3 = layer(h2, l.w3, l.b3, h, true);
  std::vector<Ad> head = layer(h3, l.w4, l.b4, h, false);
  return shape.logistic_out ? logistic(head[0]) : head[0];
}

void save_mlp(const MlpParams& p, const std::string& path) {
  check_shape(p);
  std::ofstream out(path);
  if (!out) throw ConfigError("save_mlp: cannot open " + path);
  out << "# mlp\n";
  out << "# in " << p.in_dim << "\n";
  out << "# hidden " << p.hidden << "\n";
  out << "# out " << p.out_dim << "\n";
  out << "# logistic " << (p.logistic_out ? 1 : 0) << "\n";
  char buf[64];
  for (double v : p.theta) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    out << buf;
  }
  if (!out) throw ConfigError("save_mlp: write failed for " + path);
}

MlpParams load_mlp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_mlp: cannot open " + path);
  MlpParams p;
  p.in_dim = p.hidden = p.out_dim = -1;
  std::string line;
  bool logistic_seen = false;
  while (in.peek() == '#') {
    std::getline(in, line);
    std::istringstream ls(line);
    std::string hash, key;
    ls >> hash >> key;
    if (key == "in")
      ls >> p.in_dim;
    else if (key == "hidden")
      ls >> p.hidden;
    else if (key == "out")
      ls >> p.out_dim;
    else if (key == "logistic") {
      int v = 0;
      ls >> v;
      p.logistic_out = v != 0;
      logistic_seen = true;
    } else if (key != "mlp") {
      throw ParseError("load_mlp: unknown header key '" + key + "' in " + path);
    }
  }
  if (p.in_dim <= 0 || p.hidden <= 0 || p.out_dim <= 0 || !logistic_seen)
    throw ShapeError("load_mlp: incomplete shape header in " + path);
  p.theta.reserve(p.n_params());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const char* s = line.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end == s) throw ParseError("load_mlp: bad number '" + line + "' in " + path);
    if (!std::isfinite(v)) throw NumericError("load_mlp: non-finite parameter in " + path);
    p.theta.push_back(v);
  }
  if (p.theta.size() != p.n_params())
    throw ShapeError("load_mlp: parameter count does not match header in " + path);
  return p;
}

}  // namespace arex::numkit
