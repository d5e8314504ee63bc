#ifndef AREX_AGENTS_HPP
#define AREX_AGENTS_HPP

#include <optional>
#include <string>
#include <vector>

#include "arex/common.hpp"
#include "arex/model.hpp"
#include "arex/rng.hpp"

// Strategic agents: base covariates, private unobservables, modification
// costs, and the response rules they use against what the decision maker
// discloses. Utilities follow u(g, x) = b(g, x) - cost(base, x), where the
// benefit b is -g(x) when lower predictions help the agent and +g(x) when
// higher ones do. An infeasible modification is an explicit "no value"
// rather than a floating infinity, so it can never leak into arithmetic.

namespace arex::agents {

// Cost of moving the first coordinate by delta within [lo, hi):
// quad * delta^2 + lin * |delta|.
struct CostPiece {
  double lo, hi, quad, lin;
};

struct CostSpec {
  enum class Kind { QuadraticL2, WeightedL1, PiecewiseScalar };
  Kind kind = Kind::QuadraticL2;

  double alpha = 1.0;  // QuadraticL2: alpha * ||x - base||^2

  // WeightedL1: scale * sum_{i in modifiable} |x_i - base_i| / (upper_i - lower_i);
  // any change on a coordinate outside `modifiable` is infeasible.
  double scale = 0.01;
  std::vector<int> modifiable;
  Vec lower, upper;

  std::vector<CostPiece> pieces;  // PiecewiseScalar, 1-D only

  static CostSpec quadratic(double alpha);
  static CostSpec weighted_l1(double scale, std::vector<int> modifiable, Vec lower,
                              Vec upper);
  static CostSpec piecewise(std::vector<CostPiece> pieces);
};

// Modification cost; empty when the move is infeasible (infinite cost).
std::optional<double> cost_value(const CostSpec& c, const Vec& base, const Vec& x);

// Subgradient of the cost in x, for feasible moves only. For WeightedL1 the
// non-modifiable coordinates are treated as frozen (zero entry).
Vec cost_subgrad(const CostSpec& c, const Vec& base, const Vec& x);

enum class ReactionKind { SurrogateBestResponder, ARexChooser, BayesianPosteriorMean };

struct AgentRecord {
  Vec base;
  double z = 0.0;
  CostSpec cost;
  ReactionKind reaction = ReactionKind::SurrogateBestResponder;
  int prior_id = -1;  // index into an experiment-level prior table, if Bayesian
};

enum class BenefitSign { LowerIsBetter, HigherIsBetter };

struct UtilityContext {
  const ScalarModel* g = nullptr;
  BenefitSign sign = BenefitSign::LowerIsBetter;
};

inline double benefit(const ScalarModel& model, BenefitSign sign, const Vec& x) {
  double v = model(x);
  return sign == BenefitSign::LowerIsBetter ? -v : v;
}

// u(g, x); empty = utility -infinity (infeasible move).
std::optional<double> true_utility(const UtilityContext& ctx, const AgentRecord& agent,
                                   const Vec& x);

struct SearchBox {
  Vec lo, hi;
};

struct SearchConfig {
  int grid_points = 4001;     // 1-D dense grid resolution
  int refine_iters = 120;     // golden-section refinement budget
  int descent_steps = 400;    // multi-D projected ascent budget
  double descent_lr = 0.05;
  int restarts = 8;           // multi-D random restarts
  uint64_t seed = 0;
  uint64_t stream = 0;
};

struct BestResponse {
  Vec x;
  double surrogate_utility = 0.0;
  bool unbounded = false;  // surrogate promised an absurd gain at the box edge
};

// argmax over the box of the agent's utility under the surrogate f (the agent
// believes f is the deployed model). Ties break toward the smallest move,
// then lexicographically.
BestResponse surrogate_best_response(const AgentRecord& agent, const ScalarModel& f,
                                     BenefitSign sign, const SearchBox& box,
                                     const SearchConfig& cfg = {});

struct ArexRec {
  Vec x;
  double yhat = 0.0;  // disclosed prediction at x, must equal g(x)
};

struct ArexOutcome {
  Vec x;          // exactly rec.x or exactly agent.base
  bool adopted = false;
};

// Take-it-or-leave-it response to an action recommendation: adopt when it
// does not lower true utility (ties adopt). The disclosed prediction is
// verified against g before anything else.
ArexOutcome arex_response(const UtilityContext& ctx, const AgentRecord& agent,
                          const ArexRec& rec);

// Posterior-mean surrogate over a finite model family: f = sum_i p(i|e) g_i
// with p(i|e) proportional to likelihood_weight[i] * prior[i].
ScalarModel posterior_mean_surrogate(const std::vector<ScalarModel>& family,
                                     const Vec& prior, const Vec& likelihood_weight);

// Outcome process: deterministic quadratic in (x, z) for regression, or a
// seeded Bernoulli draw from a fitted logistic success probability.
struct OutcomeFunction {
  enum class Kind { Unset, Quadratic, LogisticBernoulli };
  Kind kind = Kind::Unset;

  // Quadratic over v = (x..., z): c0 + lin.v + v' quad v (quad symmetric).
  double c0 = 0.0;
  Vec lin;
  std::vector<Vec> quad;

  // Logistic success probability over x.
  Vec w;
  double b = 0.0;

  double mean(const Vec& x, double z) const;
};

double evaluate_outcome(const OutcomeFunction& h, const Vec& x, double z,
                        numkit::Rng* rng = nullptr);

// One agent per row; shared cost structure (bounds, modifiable set, pieces)
// lives in '#' header lines.
void save_population(const std::vector<AgentRecord>& agents, const std::string& path);
std::vector<AgentRecord> load_population(const std::string& path);

}  // namespace arex::agents

#endif
