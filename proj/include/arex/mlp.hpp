#ifndef AREX_MLP_HPP
#define AREX_MLP_HPP

#include <string>
#include <vector>

#include "arex/common.hpp"
#include "arex/rng.hpp"
#include "arex/tape.hpp"

// Dense feed-forward network with exactly three rectifier hidden layers and a
// linear (optionally logistic) head. Parameters live in one flat vector so the
// optimizer, serialization and gradient checks all see the same layout:
//   [W1 (h x in) | b1 | W2 (h x h) | b2 | W3 (h x h) | b3 | W4 (out x h) | b4]
// Weight rows are contiguous per output unit.

namespace arex::numkit {

struct MlpParams {
  int in_dim = 0;
  int hidden = 32;
  int out_dim = 1;
  bool logistic_out = false;
  Vec theta;

  size_t n_params() const {
    size_t h = static_cast<size_t>(hidden), i = static_cast<size_t>(in_dim),
           o = static_cast<size_t>(out_dim);
    return h * i + h + 2 * (h * h + h) + o * h + o;
  }
};

// He-style initialization for the rectifier stack, small fan-in scaling on the
// head, zero biases. Deterministic for a given stream.
MlpParams mlp_init(int in_dim, int hidden, int out_dim, bool logistic_out, Rng& rng);

// Forward-pass scratch. Reusable across calls to avoid reallocation in loops.
struct MlpTrace {
  Vec pre1, h1, pre2, h2, pre3, h3, logit, out;
};

// Returns the network output in trace.out (post-logistic when configured);
// trace.logit keeps the pre-logistic head values.
void mlp_forward(const MlpParams& p, const Vec& x, MlpTrace& trace);

// Scalar-head convenience.
double mlp_value(const MlpParams& p, const Vec& x);

// Reverse pass. dy is the adjoint of the network output (or of the head
// pre-activation when on_logit is true, which is the stable path for
// cross-entropy losses). Accumulates parameter adjoints into dtheta (size
// n_params, caller-zeroed) and returns the input adjoint.
Vec mlp_vjp(const MlpParams& p, const Vec& x, const MlpTrace& trace, const Vec& dy,
            Vec& dtheta, bool on_logit = false);

// d output / d input for a scalar-head network, without parameter adjoints.
Vec mlp_input_grad(const MlpParams& p, const Vec& x);

// Builds the same forward computation on the autodiff tape with the parameters
// as tape inputs. Scalar head only. Used to cross-check the hand-rolled
// reverse pass.
Ad mlp_forward_tape(Tape& tape, const MlpParams& shape, const std::vector<Ad>& theta,
                    const Vec& x);

// Plain-text parameter files: '#'-prefixed shape header, then one number per
// line in layout order. Round-trips bitwise.
void save_mlp(const MlpParams& p, const std::string& path);
MlpParams load_mlp(const std::string& path);

}  // namespace arex::numkit

#endif
