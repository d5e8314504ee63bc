#ifndef AREX_TRAIN_HPP
#define AREX_TRAIN_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "arex/agents.hpp"
#include "arex/common.hpp"
#include "arex/dataio.hpp"
#include "arex/explain.hpp"
#include "arex/mlp.hpp"
#include "arex/model.hpp"

// Training under strategic feedback by repeated risk minimization: deploy the
// current model and recommendation policy, let a fresh batch of agents react,
// refit on what actually happened, repeat. The decision maker never observes
// the agents' costs. For the joint arm, a compliance net xi, fitted once on
// logged (base, recommendation, disclosed gap, adopted) tuples, stands in for
// the agents inside the optimizer: the model trains on soft simulated
// responses that stay differentiable in both the model and the policy. The
// fixed-lambda counterfactual baselines retrain the model alone on realized
// responses while their recommendation rule never learns.

namespace arex::train {

// Substream tags for every internal draw, public so tests can rebuild exact
// replicas of any stage. Convention: Rng(seed, entity_index, tag), with
// entity 0 when there is no per-agent index. Per-iteration tags add the
// iteration number.
namespace stream {
inline constexpr uint64_t kPretrainDraw = 0x41;     // env.draw stream for the pretraining batch
inline constexpr uint64_t kCompliancePool = 0x42;   // env.draw stream for compliance logging
inline constexpr uint64_t kTestDraw = 0x43;         // env.draw stream for held-out evaluation
inline constexpr uint64_t kPretrainOutcome = 0x44;  // per-agent outcome draw, pretraining
inline constexpr uint64_t kTestOutcome = 0x45;      // per-agent outcome draw, evaluation
inline constexpr uint64_t kComplianceRec = 0x46;    // per-agent recommendation draw
inline constexpr uint64_t kInitG = 0x47;            // model init
inline constexpr uint64_t kInitSigma = 0x48;        // policy init
inline constexpr uint64_t kInitXi = 0x49;           // compliance-net init
inline constexpr uint64_t kPretrainBatch = 0x4a;    // minibatch picks, pretraining
inline constexpr uint64_t kXiBatch = 0x4b;          // minibatch picks, compliance fit
inline constexpr uint64_t kCreditResample = 0x4c;   // row picks in the credit environment
inline constexpr uint64_t kDeployBase = 0x100;      // + iteration: env.draw stream per round
inline constexpr uint64_t kDeployOutcome = 0x200;   // + iteration: per-agent outcome draws
inline constexpr uint64_t kInnerBatch = 0x300;      // + iteration: minibatch picks
}  // namespace stream

// One logged recommendation round-trip. dg is the disclosed prediction gap
// g(base) - g(rec); w is 1 when the agent adopted rec.
struct ComplianceSample {
  Vec base;
  Vec rec;
  double dg = 0.0;
  double w = 0.0;
};

// Per-feature affine standardizer. Deviations below 1e-12 are widened to 1 at
// fit time so scaling never divides by ~0.
struct Scaler {
  Vec mu, sd;
  bool identity() const { return mu.empty(); }
};

Scaler fit_scaler(const std::vector<Vec>& rows);
Vec apply_scaler(const Scaler& s, const Vec& x);

// Rewrites a net trained on standardized data to consume and emit raw units:
// the input scaler folds into the first layer, the output scaler into the
// head. Exact up to float reassociation. An empty scaler leaves that side
// untouched; folding a non-identity output scaler into a logistic head is
// refused (the nonlinearity sits in between).
numkit::MlpParams fold_scaling(const numkit::MlpParams& net, const Scaler& in,
                               const Scaler& out);

// Compliance predictor on (base, rec, dg), raw units, logistic head. When the
// logged labels were single-class the net is replaced by that constant and
// flagged.
struct ComplianceModel {
  numkit::MlpParams xi;
  bool degenerate = false;
  double constant = 0.0;
  double predict(const Vec& base, const Vec& rec, double dg) const;
};

struct ResponsePair {
  Vec soft;       // w*rec + (1-w)*base, gradient-friendly
  Vec hard;       // exactly rec (w >= 0.5) or exactly base
  double w = 0.0;
  bool adopt_hard = false;
};

// The decision maker's belief of how an agent answers a recommendation. The
// hard response feeds metrics; the soft blend feeds gradients.
ResponsePair simulate_response(const ComplianceModel& xi, const ScalarModel& g,
                               const Vec& base, const Vec& rec);

// Loop configuration. batch_sizes, when nonempty, must have one entry per
// iteration; otherwise every deployment uses `batch` agents.
struct RRMConfig {
  size_t iterations = 30;
  size_t batch = 2000;
  std::vector<size_t> batch_sizes;
  size_t pretrain = 2000;
  size_t compliance = 20000;
  std::string loss = "squared";  // or "bce"
  uint64_t seed = 0;

  size_t hidden = 32;
  size_t inner_steps = 200;  // gradient steps per iteration
  double lr = 1e-3;
  double sigma_lr = 0.0;  // policy-net step size inside the loop; 0 means lr
  // Per-round multiplier on the policy-net step size: round i uses
  // sigma_lr * decay^i. 1 keeps it constant; below 1 anneals the policy so
  // the predictor can settle against stationary recommendations late on.
  double sigma_lr_decay = 1.0;
  // Imitation budget for the policy pretrain; 0 inherits pretrain_steps. A
  // smaller budget leaves the initial policy loosely tied to the identity,
  // which gives the first training rounds usable recommendation offsets.
  size_t sigma_pretrain_steps = 0;
  size_t minibatch = 256;
  size_t pretrain_steps = 800;
  size_t xi_steps = 1500;
  // Reject/adopt class weights for the compliance fit; a nonpositive entry
  // selects inverse class frequency for both.
  double xi_weight0 = -1.0;
  double xi_weight1 = -1.0;
  double sampler_stddev = 2.0;  // compliance-logging spread around centers
  int ce_steps = 60;            // counterfactual budget per recommendation
  double ce_lr = 0.05;

  size_t batch_at(size_t i) const;
  void validate() const;  // ConfigError on nonsense
};

// Where deployments get their agents and outcomes. draw(count, stream) must
// be deterministic in (its own seed, stream) and return independent agents
// for distinct streams. Outcomes come from h; stochastic environments draw a
// Bernoulli at h's success probability per observation.
struct Environment {
  std::function<std::vector<agents::AgentRecord>(size_t count, uint64_t stream)> draw;
  agents::OutcomeFunction h;
  agents::BenefitSign sign = agents::BenefitSign::LowerIsBetter;
  explain::CeConstraints constraints;  // counterfactual search space, empty = free
  size_t x_dim = 0;
  bool stochastic_outcome = false;
};

// Quadratic-outcome simulation population. The box, when nonempty, bounds the
// counterfactual search of the baseline arms.
Environment make_synthetic_environment(uint64_t seed, const Vec& ce_lower = {},
                                       const Vec& ce_upper = {});

// Credit-scoring population: bases resampled from the dataset's rows, per-move
// costs from its bounds and modifiable set, Bernoulli outcomes from the fitted
// simulator.
Environment make_credit_environment(const dataio::TabularDataset& pool,
                                    const dataio::OutcomeSimulator& sim, uint64_t seed,
                                    double cost_scale = 0.01);

// Model and policy pretraining on (x, y): g fits outcomes, sigma imitates the
// identity map. Nets live in standardized space; fold with the returned
// scalers before deploying. y_scale is identity for the bce loss.
struct PretrainResult {
  numkit::MlpParams g, sigma;
  Scaler x_scale, y_scale;
};

PretrainResult pretrain(const std::vector<Vec>& xs, const Vec& ys, const RRMConfig& cfg);

// Logs one recommendation round-trip per agent: a sampled recommendation
// disclosed with g's own prediction, answered with the agent's TRUE
// accept/reject under its private cost.
std::vector<ComplianceSample> collect_compliance(const std::vector<agents::AgentRecord>& pop,
                                                 const ScalarModel& g,
                                                 const explain::ArexSampler& sampler,
                                                 agents::BenefitSign sign, uint64_t seed);

// Weighted binary cross-entropy fit. Nonpositive w0/w1 select inverse class
// frequency. Single-class logs yield a degenerate constant model.
ComplianceModel train_compliance(const std::vector<ComplianceSample>& samples, double w0,
                                 double w1, const RRMConfig& cfg);

// Standardized-space snapshot of everything the joint inner loss touches.
// Public so tests can finite-difference the full gradient.
struct JointState {
  numkit::MlpParams g, sigma;
  Scaler x_scale, y_scale;
  ComplianceModel xi;  // raw units, frozen
  std::string loss = "squared";
};

// Mean loss over the batch (standardized units) with parameter gradients
// accumulated into dg/dsigma (resized and zeroed inside). The gradient flows
// through every path the simulation creates: the blend weight, the disclosed
// gap inside xi, and the recommendation itself.
double joint_loss_grad(const JointState& st, const std::vector<Vec>& bases, const Vec& ys,
                       Vec& dg, Vec& dsigma);

// One deployment round: per-agent recommendation, TRUE accept/reject, outcome
// at the realized covariates. base_means carries E[y | base] per agent for
// normalized metrics. outcome_tag selects the round's Bernoulli substream in
// stochastic environments.
struct Deployment {
  std::vector<Vec> xs;  // realized covariates
  Vec ys;               // realized outcomes
  Vec base_means;
  double compliance = 0.0;
};

// Recommendations from a policy net, disclosed with g's prediction.
Deployment deploy_policy(const Environment& env, const std::vector<agents::AgentRecord>& pop,
                         const ScalarModel& g, const numkit::MlpParams& sigma, uint64_t seed,
                         uint64_t outcome_tag);

// Fresh proximity-regularized counterfactuals from the current g.
Deployment deploy_fixed_ce(const Environment& env, const std::vector<agents::AgentRecord>& pop,
                           const ScalarModel& g, double lambda, const RRMConfig& cfg,
                           uint64_t seed, uint64_t outcome_tag);

// Final state of a training run. Nets are raw-unit and deployment-ready.
// loss_log holds each iteration's mean training loss in raw units, averaged
// over its gradient steps; compliance_log holds the TRUE adoption fraction of
// each deployment (agents' actual reactions, never xi's belief). norm_const
// is the pretraining batch's mean outcome, the denominator for normalized
// error reporting (1 under bce).
struct RRMState {
  numkit::MlpParams g;
  numkit::MlpParams sigma;
  bool has_sigma = false;
  ComplianceModel xi;
  bool has_xi = false;
  std::vector<double> loss_log;
  std::vector<double> compliance_log;
  std::vector<double> seconds_log;
  double norm_const = 1.0;
};

// Joint loop: pretrain g and sigma, log compliance under a mixed sampler,
// fit xi once and freeze it, then alternate deployment with simulated-response
// refits of both nets. Each iteration deploys the previous pair against a
// fresh batch, records (base, realized outcome) pairs, and takes inner_steps
// Adam steps (fresh optimizer state per iteration) on the simulated loss.
// Divergence raises NumericError naming the failing iteration.
RRMState rrm_joint(const RRMConfig& cfg, const Environment& env);

// Baseline loop: the recommendation rule is a fixed-lambda counterfactual
// generator off the current model, never trained. Only g updates, by plain
// risk minimization on realized (response, outcome) pairs.
RRMState rrm_fixed_ce(const RRMConfig& cfg, double lambda, const Environment& env);

// Tab-delimited per-iteration log with a header row: iteration, loss,
// compliance, and optionally seconds. Content is replay-deterministic exactly
// when seconds are left out.
void write_rrm_log(const std::string& path, const RRMState& st, bool with_seconds);

}  // namespace arex::train

#endif
