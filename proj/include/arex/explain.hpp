#ifndef AREX_EXPLAIN_HPP
#define AREX_EXPLAIN_HPP

#include <string>
#include <vector>

#include "arex/agents.hpp"
#include "arex/mlp.hpp"
#include "arex/model.hpp"
#include "arex/rng.hpp"

namespace arex::explain {

using agents::ArexRec;
using agents::BenefitSign;

// Local polynomial surrogate around an expansion point:
//   f(x) = c0 + lin.(x - x0) + (x - x0)' quad (x - x0)
// where quad holds HALF the Hessian, so order-2 expansions are exact for
// quadratics. order == 1 leaves quad empty.
struct Surrogate {
  Vec x0;
  double c0 = 0.0;
  Vec lin;
  std::vector<Vec> quad;
  int order = 2;

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  ScalarModel model() const;
};

Surrogate taylor_surrogate(const ScalarModel& g, const Vec& x0, int order = 2);

// A single disclosed explanation, in any of the three shapes the library
// produces. Exactly one payload is meaningful, selected by `kind`.
struct Explanation {
  enum class Kind { Surrogate, Arex, Attribution };
  Kind kind = Kind::Arex;
  struct Surrogate surrogate;
  ArexRec arex;
  Vec scores;
};

std::string explanation_to_text(const Explanation& e);
Explanation explanation_from_text(const std::string& text);

// Feasibility data for recommendation generation: box bounds, which features
// an agent may change at all, and which ones only take integer levels.
struct CeConstraints {
  Vec lower, upper;               // empty = unconstrained
  std::vector<int> modifiable;    // empty = every feature
  std::vector<int> categorical;   // rounded to the nearest level at the end

  bool empty() const {
    return lower.empty() && upper.empty() && modifiable.empty() && categorical.empty();
  }
};

// Clip to bounds, freeze non-modifiable coordinates at `base`, round
// categorical entries. Used on every recommendation that leaves the library.
Vec project_to_constraints(const Vec& x, const Vec& base, const CeConstraints& cons);

struct CeConfig {
  double lambda = 1.0;
  int steps = 500;
  double lr = 0.05;
  BenefitSign sign = BenefitSign::LowerIsBetter;  // which way "better" points
};

// Proximity-regularized counterfactual: approximately minimizes
//   dir * g(x) + lambda * ||x - base||^2      (dir = +1 lower-is-better, -1 otherwise)
// by proximal gradient steps, keeping the best projected iterate. The start
// point always competes, so the result is never worse than staying put.
ArexRec counterfactual_explain(const ScalarModel& g, const Vec& base, const CeConfig& cfg,
                               const CeConstraints& cons = {});

double ce_objective(const ScalarModel& g, const Vec& base, const CeConfig& cfg,
                    const Vec& x);

// x-check = policy network applied to the base point; disclosed value is the
// deployed model's own prediction there.
ArexRec arex_policy_recommend(const numkit::MlpParams& policy, const ScalarModel& g,
                              const Vec& base);

// Random recommendation generator: isotropic Gaussian around a center chosen
// by rule. PolicyOut and CePoint need the corresponding hooks configured;
// MixOfThree picks one of {Base, PolicyOut, CePoint} per draw.
struct ArexSampler {
  enum class CenterRule { Base, Fixed, PolicyOut, CePoint, MixOfThree };
  CenterRule rule = CenterRule::Base;
  double stddev = 2.0;
  Vec fixed_center;
  const numkit::MlpParams* policy = nullptr;
  CeConfig ce;
  const CeConstraints* constraints = nullptr;  // applied to the drawn point if set
};

ArexRec random_arex_sample(const ArexSampler& s, const ScalarModel& g, const Vec& base,
                           numkit::Rng& rng);

// Per-feature attribution for the two-feature family g(x) = x1 - x2^2 with
// independent features and X2 ~ U([a, b]): the exact Shapley value of the
// second feature at `base`. mean_x1 enters the four-term formula but cancels.
double shapley_two_feature(const Vec& base, double a, double b, double mean_x1 = 0.0);

}  // namespace arex::explain

#endif
