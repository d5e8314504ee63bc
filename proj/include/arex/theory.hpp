#ifndef AREX_THEORY_HPP
#define AREX_THEORY_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "arex/agents.hpp"
#include "arex/model.hpp"

namespace arex::theory {

using agents::AgentRecord;
using agents::BenefitSign;
using agents::SearchBox;
using agents::SearchConfig;
using agents::UtilityContext;

// Verdict of a finite-domain scan of the understatement inequality
//   f(base) - f(x) <= g(base) - g(x).
// A surrogate that satisfies it never promises a larger prediction drop than
// the deployed model actually delivers.
struct ConditionReport {
  bool holds = true;
  Vec witness_x;  // point of maximal violation, empty when holds
  double lhs = 0.0;
  double rhs = 0.0;
  std::string domain;
  int probes_tested = 0;  // probes the inequality was evaluated at
};

// Inclusive endpoints, n >= 2 evenly spaced scalar probes.
std::vector<Vec> grid_probes_1d(double lo, double hi, int n);

// Deterministic low-discrepancy probes filling a box, dimensions 1 through 10.
std::vector<Vec> sobol_probes(const SearchBox& box, int n);

// Scan restricted to probes whose deployed prediction is strictly below the
// base point's (the only places a prediction-minimizing agent would move to).
ConditionReport check_necessary(const ScalarModel& g, const ScalarModel& f,
                                const Vec& base, const std::vector<Vec>& probes,
                                double tol = 1e-9);

// Same inequality required at every probe, nothing filtered.
ConditionReport check_sufficient(const ScalarModel& g, const ScalarModel& f,
                                 const Vec& base, const std::vector<Vec>& probes,
                                 double tol = 1e-9);

// A concrete cost function under which the surrogate's overpromising at some
// probe turns into a genuinely harmful move. Benefit convention here is
// lower-is-better (the agent wants a smaller prediction).
struct HarmfulCostWitness {
  Vec x_star;          // the probe the agent is lured to
  size_t star_index;   // its position in the probe list
  Vec cost;            // c(base, probe[i]); zero where probe[i] == base
  double c_star = 0.0;
  double margin_low = 0.0;   // g(base) - g(x_star), the true gain
  double margin_high = 0.0;  // f(base) - f(x_star), the promised gain
  Vec response;              // best response restricted to probes + base
  double harm_delta = 0.0;   // u(g, response) - u(g, base), negative
};

// Returns nothing when the understatement inequality already holds on the
// probe set. Otherwise builds the cost table at the maximal violation and
// verifies the full inequality system before returning.
std::optional<HarmfulCostWitness> construct_harmful_cost(const ScalarModel& g,
                                                         const ScalarModel& f,
                                                         const Vec& base,
                                                         const std::vector<Vec>& probes,
                                                         double tol = 1e-9);

// One explanation policy, by shape: a per-agent surrogate model, or a
// per-agent take-it-or-leave-it recommendation.
struct ExplanationPolicy {
  enum class Kind { Surrogate, Arex };
  Kind kind = Kind::Surrogate;
  std::function<ScalarModel(const AgentRecord&)> surrogate;
  std::function<agents::ArexRec(const AgentRecord&)> arex;
};

struct AuditRow {
  double u_before = 0.0;
  double u_after = 0.0;
  double delta = 0.0;
  bool harmed = false;
  Vec response;
};

struct AuditTable {
  std::vector<AuditRow> rows;
  int harmed_count = 0;
  double harmed_fraction = 0.0;
};

// Run every agent's reaction against the policy and record exact utility
// changes. A harmed agent is one whose change falls below -1e-12 (slack
// against float noise only).
AuditTable audit_no_harm(const UtilityContext& ctx,
                         const std::vector<AgentRecord>& population,
                         const ExplanationPolicy& policy, const SearchBox& box,
                         const SearchConfig& cfg = {});

// For a response already known to be non-harmful, the recommendation
// (response, g(response)) reproduces it under the take-it-or-leave-it
// reaction. Throws when the input response is in fact harmful.
agents::ArexRec arex_equivalence(const UtilityContext& ctx, const AgentRecord& agent,
                                 const Vec& response);

void write_condition_report(const std::string& path, const ConditionReport& report);
void write_audit_table(const std::string& path, const AuditTable& table);

}  // namespace arex::theory

#endif
