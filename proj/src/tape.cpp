#include "arex/tape.hpp"

namespace arex::numkit {

Vec Tape::backward(int out) const {
  if (out < 0 || static_cast<size_t>(out) >= val_.size())
    throw ShapeError("tape backward: bad output id");
  Vec adj(val_.size(), 0.0);
  adj[static_cast<size_t>(out)] = 1.0;
  for (int id = out; id >= 0; --id) {
    double a = adj[static_cast<size_t>(id)];
    if (a == 0.0) continue;
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.p0 >= 0) adj[static_cast<size_t>(n.p0)] += a * n.d0;
    if (n.p1 >= 0) adj[static_cast<size_t>(n.p1)] += a * n.d1;
  }
  return adj;
}

Vec grad(const std::function<Ad(Tape&, const std::vector<Ad>&)>& f, const Vec& at) {
  Tape tape;
  std::vector<Ad> xs;
  xs.reserve(at.size());
  for (double v : at) xs.push_back(make_input(tape, v));
  Ad out = f(tape, xs);
  Vec adj = tape.backward(out.id);
  Vec g(at.size());
  for (size_t i = 0; i < at.size(); ++i) g[i] = adj[static_cast<size_t>(xs[i].id)];
  return g;
}

Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& at,
                       double h) {
  Vec g(at.size());
  Vec p = at;
  for (size_t i = 0; i < at.size(); ++i) {
    double keep = p[i];
    p[i] = keep + h;
    double up = f(p);
    p[i] = keep - h;
    double down = f(p);
    p[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace arex::numkit
