#ifndef AREX_MODEL_HPP
#define AREX_MODEL_HPP

#include <functional>
#include <memory>
#include <vector>

#include "arex/common.hpp"
#include "arex/mlp.hpp"

// Scalar-output predictive models. One wrapper covers both analytic functions
// (polynomials, tangents, quadratic expansions) and trained networks, so the
// strategic-response and audit code paths never branch on the model family.
// Derivatives fall back to central finite differences when no analytic form
// is attached.

namespace arex {

struct ScalarModel {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;                 // optional
  std::function<std::vector<Vec>(const Vec&)> hessian;     // optional

  double operator()(const Vec& x) const {
    if (!value) throw ConfigError("ScalarModel: no value function attached");
    return value(x);
  }
  Vec grad_at(const Vec& x) const;
  std::vector<Vec> hess_at(const Vec& x) const;
};

// c[0] + c[1] x + c[2] x^2 + ... on 1-D inputs; exact derivatives.
ScalarModel poly1d_model(Vec coeffs);

double poly1d_value(const Vec& coeffs, double x);

// Network-backed model; parameters are shared, not copied per call.
ScalarModel mlp_model(std::shared_ptr<const numkit::MlpParams> params);
inline ScalarModel mlp_model(numkit::MlpParams params) {
  return mlp_model(std::make_shared<const numkit::MlpParams>(std::move(params)));
}

ScalarModel constant_model(double c);

// w·x + b with exact derivatives.
ScalarModel affine_model(Vec w, double b);

}  // namespace arex

#endif
