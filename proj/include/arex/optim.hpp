#ifndef AREX_OPTIM_HPP
#define AREX_OPTIM_HPP

#include "arex/common.hpp"

// Adam with bias correction. One state per flat parameter vector; step order
// is part of the replayable run state, so there is no hidden global.

namespace arex::numkit {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  Vec m, v;

  explicit AdamState(size_t n = 0, double lr_ = 1e-3)
      : lr(lr_), m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(AdamState& st, Vec& params, const Vec& grads) {
  if (st.m.size() != params.size() || grads.size() != params.size())
    throw ShapeError("adam_step: size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  st.step += 1;
  double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
    double mhat = st.m[i] / c1;
    double vhat = st.v[i] / c2;
    params[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

}  // namespace arex::numkit

#endif
