#ifndef AREX_DATAIO_HPP
#define AREX_DATAIO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "arex/agents.hpp"
#include "arex/common.hpp"

namespace arex::dataio {

// ---------------------------------------------------------------------------
// Synthetic populations
// ---------------------------------------------------------------------------

// 1-D insurance-style population: x drawn around 0, quadratic cost with a
// per-agent factor in [1, 1.2]. Deterministic in (n, seed); agent t only
// touches its own counter stream, so generation order is irrelevant.
std::vector<agents::AgentRecord> gen_noharm_population(size_t n, uint64_t seed);

struct SyntheticPopulation {
  std::vector<agents::AgentRecord> agents;  // base in R^3, z in {0,1,2,3}
  agents::OutcomeFunction h;                // quadratic over (x, z), fixed per run
};

// 3-D population whose cost factor rises with the unobserved group z, plus the
// run's outcome function. Coefficients of h are drawn once from the same seed.
SyntheticPopulation gen_synthetic_population(size_t n, uint64_t seed);

// The agent stream behind gen_synthetic_population, sliced from an arbitrary
// starting index. Slices with disjoint index ranges are independent draws from
// the same seeded population; first_index = 0 reproduces the population's own
// agents. The outcome surface is not redrawn here.
std::vector<agents::AgentRecord> gen_synthetic_agents(size_t n, uint64_t seed,
                                                      uint64_t first_index = 0);

// ---------------------------------------------------------------------------
// Tabular credit data
// ---------------------------------------------------------------------------

enum class ColumnKind { Numeric, Categorical };

struct TabularDataset {
  std::vector<std::string> names;
  std::vector<ColumnKind> kinds;
  std::vector<int> level_counts;   // categorical columns; 0 for numeric
  Vec lower, upper;                // observed per-feature bounds
  std::vector<size_t> modifiable;  // sorted feature indices agents may change
  std::vector<Vec> rows;
  std::vector<int> labels;         // 1 = good credit, 0 = bad
  Vec mean, stddev;                // standardization applied to numeric columns

  size_t n_features() const { return names.size(); }
};

// Reads the space-delimited 20-attribute + label layout, drops the two
// sensitive attributes (personal status/sex and age), label-encodes
// categoricals in lexicographic level order, standardizes numerics, and
// records observed bounds plus the eight modifiable feature indices.
TabularDataset load_credit(const std::string& path);

// Writes a seeded stand-in credit file in the 20-attribute + label layout:
// same code alphabets and level counts as the published data, labels drawn
// from a planted logistic signal with roughly a 70/30 good/bad split.
void generate_credit_file(const std::string& path, size_t rows, uint64_t seed);

struct OutcomeSimulator {
  bool fitted = false;
  bool degenerate = false;  // single-class training labels
  Vec w;
  double b = 0.0;
  double constant = 0.5;  // emitted probability when degenerate

  double prob(const Vec& x) const;
  agents::OutcomeFunction as_outcome() const;
};

// Logistic regression on (rows, labels) by full-batch gradient descent.
OutcomeSimulator fit_outcome_simulator(const TabularDataset& ds, int iters = 2000,
                                       double lr = 0.1);

double simulator_accuracy(const OutcomeSimulator& sim, const TabularDataset& ds);

// Grows the dataset by n_extra bootstrap rows: resample, jitter numeric
// columns (sigma = jitter * column std, clipped to bounds), copy categoricals
// verbatim, and draw each new label from the fitted simulator.
TabularDataset bootstrap_augment(const TabularDataset& ds, size_t n_extra, double jitter,
                                 uint64_t seed, const OutcomeSimulator& sim);

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct PopulationSizes {
  size_t agents = 100;       // audit population (noharm)
  size_t pretrain = 2000;    // warm-start sample
  size_t compliance = 20000; // recommendation-adoption sample
  size_t test = 100000;      // held-out strategic agents
};

struct CostConfig {
  std::string kind = "quadratic";  // quadratic | weighted-l1
  double alpha = 1.0;
  double scale = 0.01;
};

struct PolicyConfig {
  int hidden = 32;
  std::vector<double> lambda_grid{0.1, 1.0, 4.0};
  int ce_steps = 60;
  double ce_lr = 0.05;
  double sampler_stddev = 2.0;
};

struct RrmSettings {
  size_t iterations = 30;
  size_t batch = 2000;
  size_t inner_steps = 200;
  double lr = 1e-3;
  double sigma_lr = 0.0;        // policy-net step size; 0 inherits lr
  double sigma_lr_decay = 1.0;  // per-round multiplier on the policy step
  size_t minibatch = 256;
  size_t pretrain_steps = 800;
  size_t xi_steps = 1500;
  // Compliance-fit class weights (reject, adopt); nonpositive = inverse
  // class frequency.
  double xi_weight0 = -1.0;
  double xi_weight1 = -1.0;
  std::string loss = "squared";  // squared | bce
};

struct CreditConfig {
  std::string data_path = "data/german_synth.data";
  size_t augment_to = 10000;
  double jitter = 0.05;
  size_t test_rows = 1000;
};

struct CheckConfig {
  Vec model_coeffs{0.0, 0.0, 1.0};  // polynomial model, ascending powers
  Vec surrogate_coeffs;             // empty: expand the model at `base` instead
  int taylor_order = 1;
  double base = 5.0;
  Vec probes{2.0};
  double grid_lo = 0.0;
  double grid_hi = 0.0;
  size_t grid_n = 0;  // nonzero: evenly spaced probes replace the explicit list
};

struct ExperimentConfig {
  enum class Kind { NoHarm, SyntheticRrm, CreditRrm, TheoryCheck };
  Kind kind = Kind::NoHarm;
  uint64_t seed = 0;
  std::string out_dir = "runs";
  PopulationSizes sizes;
  CostConfig cost;
  PolicyConfig policy;
  RrmSettings rrm;
  Vec box_lower, box_upper;
  CreditConfig credit;
  CheckConfig check;
};

// Desk-scale defaults for each experiment kind.
ExperimentConfig default_config(ExperimentConfig::Kind kind);

const char* kind_name(ExperimentConfig::Kind kind);
ExperimentConfig::Kind kind_from_name(const std::string& name);

// Parses a JSON config. Every key must be known; unknown keys fail with the
// offending path so typos cannot silently fall back to defaults.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Fully resolved snapshot; parse_experiment_config(to_json(c)) reproduces c.
std::string experiment_config_to_json(const ExperimentConfig& cfg);

}  // namespace arex::dataio

#endif
