#include "arex/model.hpp"

#include "arex/tape.hpp"

namespace arex {

Vec ScalarModel::grad_at(const Vec& x) const {
  if (gradient) return gradient(x);
  return numkit::central_difference(value, x);
}

std::vector<Vec> ScalarModel::hess_at(const Vec& x) const {
  if (hessian) return hessian(x);
  // Value-based central second differences; symmetric by construction.
  const double h = 1e-4;
  size_t d = x.size();
  std::vector<Vec> H(d, Vec(d, 0.0));
  double f0 = value(x);
  Vec p = x;
  for (size_t i = 0; i < d; ++i) {
    p[i] = x[i] + h;
    double up = value(p);
    p[i] = x[i] - h;
    double down = value(p);
    p[i] = x[i];
    H[i][i] = (up - 2.0 * f0 + down) / (h * h);
    for (size_t j = i + 1; j < d; ++j) {
      p[i] = x[i] + h;
      p[j] = x[j] + h;
      double pp = value(p);
      p[j] = x[j] - h;
      double pm = value(p);
      p[i] = x[i] - h;
      double mm = value(p);
      p[j] = x[j] + h;
      double mp = value(p);
      p[i] = x[i];
      p[j] = x[j];
      H[i][j] = H[j][i] = (pp - pm - mp + mm) / (4.0 * h * h);
    }
  }
  for (const Vec& row : H) require_finite(row, "hess_at");
  return H;
}

double poly1d_value(const Vec& coeffs, double x) {
  double acc = 0.0;
  for (size_t k = coeffs.size(); k-- > 0;) acc = acc * x + coeffs[k];
  return acc;
}

ScalarModel poly1d_model(Vec coeffs) {
  auto c = std::make_shared<Vec>(std::move(coeffs));
  ScalarModel m;
  m.value = [c](const Vec& x) {
    if (x.size() != 1) throw ShapeError("poly1d: expects 1-D input");
    return poly1d_value(*c, x[0]);
  };
  m.gradient = [c](const Vec& x) {
    if (x.size() != 1) throw ShapeError("poly1d: expects 1-D input");
    double acc = 0.0;
    for (size_t k = c->size(); k-- > 1;)
      acc = acc * x[0] + static_cast<double>(k) * (*c)[k];
    return Vec{acc};
  };
  m.hessian = [c](const Vec& x) {
    if (x.size() != 1) throw ShapeError("poly1d: expects 1-D input");
    double acc = 0.0;
    for (size_t k = c->size(); k-- > 2;)
      acc = acc * x[0] + static_cast<double>(k) * static_cast<double>(k - 1) * (*c)[k];
    return std::vector<Vec>{Vec{acc}};
  };
  return m;
}

ScalarModel mlp_model(std::shared_ptr<const numkit::MlpParams> params) {
  if (!params) throw ConfigError("mlp_model: null parameters");
  if (params->out_dim != 1) throw ShapeError("mlp_model: head is not scalar");
  ScalarModel m;
  m.value = [params](const Vec& x) { return numkit::mlp_value(*params, x); };
  m.gradient = [params](const Vec& x) { return numkit::mlp_input_grad(*params, x); };
  return m;
}

ScalarModel constant_model(double c) {
  ScalarModel m;
  m.value = [c](const Vec&) { return c; };
  m.gradient = [](const Vec& x) { return Vec(x.size(), 0.0); };
  m.hessian = [](const Vec& x) {
    return std::vector<Vec>(x.size(), Vec(x.size(), 0.0));
  };
  return m;
}

ScalarModel affine_model(Vec w, double b) {
  auto wp = std::make_shared<Vec>(std::move(w));
  ScalarModel m;
  m.value = [wp, b](const Vec& x) { return dot(*wp, x) + b; };
  m.gradient = [wp](const Vec& x) {
    require_same_dim(*wp, x, "affine_model");
    return *wp;
  };
  m.hessian = [](const Vec& x) {
    return std::vector<Vec>(x.size(), Vec(x.size(), 0.0));
  };
  return m;
}

}  // namespace arex
