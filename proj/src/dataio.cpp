#include "arex/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "arex/optim.hpp"
#include "arex/rng.hpp"

namespace arex::dataio {

using json = nlohmann::json;
using agents::AgentRecord;
using agents::CostSpec;
using agents::OutcomeFunction;
using numkit::Rng;

// Substream tags keep the generators' random draws disjoint even when they
// share (seed, agent index).
namespace stream_tag {
constexpr uint64_t kNoharm = 0x17;
constexpr uint64_t kOutcomeCoeffs = 0x29;
constexpr uint64_t kSynthetic = 0x31;
constexpr uint64_t kAugment = 0xb7;
}  // namespace stream_tag

std::vector<AgentRecord> gen_noharm_population(size_t n, uint64_t seed) {
  if (n < 1) throw DomainError("gen_noharm_population: n must be >= 1");
  std::vector<AgentRecord> pop(n);
  for (size_t t = 0; t < n; ++t) {
    Rng rng(seed, t, stream_tag::kNoharm);
    AgentRecord& a = pop[t];
    a.base = Vec{0.4 * rng.gaussian()};
    a.cost = CostSpec::quadratic(rng.uniform(1.0, 1.2));
  }
  return pop;
}

SyntheticPopulation gen_synthetic_population(size_t n, uint64_t seed) {
  if (n < 1) throw DomainError("gen_synthetic_population: n must be >= 1");
  SyntheticPopulation out;

  // One draw per run for the quadratic outcome surface over (x1,x2,x3,z).
  // Terms that couple to the hidden group index get a much smaller scale:
  // the group should act as mild unobserved heterogeneity on top of an
  // observable-driven outcome, not as a dominant noise source. At covariate
  // scale ~10-13 an equal-scale cross term would let the hidden index move
  // outcomes by more than the covariates themselves.
  Rng crng(seed, 0, stream_tag::kOutcomeCoeffs);
  out.h.kind = OutcomeFunction::Kind::Quadratic;
  out.h.c0 = 0.1 * crng.gaussian();
  out.h.lin.resize(4);
  for (size_t j = 0; j < 4; ++j) out.h.lin[j] = (j == 3 ? 0.01 : 0.1) * crng.gaussian();
  out.h.quad.assign(4, Vec(4, 0.0));
  for (size_t r = 0; r < 4; ++r)
    for (size_t c = 0; c < 4; ++c)
      out.h.quad[r][c] = ((r == 3 || c == 3) ? 0.01 : 0.1) * crng.gaussian();

  out.agents = gen_synthetic_agents(n, seed, 0);
  return out;
}

std::vector<agents::AgentRecord> gen_synthetic_agents(size_t n, uint64_t seed,
                                                      uint64_t first_index) {
  std::vector<agents::AgentRecord> agents(n);
  for (size_t t = 0; t < n; ++t) {
    Rng rng(seed, first_index + t, stream_tag::kSynthetic);
    AgentRecord& a = agents[t];
    const double z = static_cast<double>(rng.uniform_index(4));
    const double alpha = std::fabs(rng.gaussian(0.02 + 0.1 * z, 0.01));
    a.base.resize(3);
    for (double& v : a.base) v = rng.gaussian(10.0 + z, std::sqrt(2.0));
    a.z = z;
    a.cost = CostSpec::quadratic(alpha);
    a.reaction = agents::ReactionKind::ARexChooser;
    a.prior_id = static_cast<int>(z);
  }
  return agents;
}

// ---------------------------------------------------------------------------
// Credit ingestion
// ---------------------------------------------------------------------------

namespace {

struct AttrDef {
  const char* name;
  bool categorical;
};

// The 20-attribute layout of the space-delimited credit file, in file order.
constexpr AttrDef kCreditAttrs[20] = {
    {"status_checking", true},    {"duration_months", false},
    {"credit_history", true},     {"purpose", true},
    {"credit_amount", false},     {"savings", true},
    {"employment_since", true},   {"installment_rate", false},
    {"personal_status_sex", true}, {"debtors_guarantors", true},
    {"residence_since", false},   {"property", true},
    {"age_years", false},         {"other_installments", true},
    {"housing", true},            {"existing_credits", false},
    {"job", true},                {"people_liable", false},
    {"telephone", true},          {"foreign_worker", true},
};

// Sensitive attributes removed before modeling (0-based file positions).
constexpr size_t kDropSex = 8;
constexpr size_t kDropAge = 12;

// Attributes agents can change, as 0-based file positions: checking status,
// credit history, credit amount, savings, employment, installment rate,
// guarantors, residence.
constexpr size_t kModifiableFilePos[8] = {0, 2, 4, 5, 6, 7, 9, 10};

double parse_numeric(const std::string& tok, size_t line_no, size_t attr) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0' || !std::isfinite(v)) {
    throw ParseError("line " + std::to_string(line_no) + ": attribute " +
                     std::to_string(attr + 1) + ": expected a number, got '" + tok + "'");
  }
  return v;
}

}  // namespace

TabularDataset load_credit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_credit: cannot open " + path);

  // File pass: raw tokens, split into kept columns.
  std::vector<size_t> kept;
  for (size_t i = 0; i < 20; ++i)
    if (i != kDropSex && i != kDropAge) kept.push_back(i);

  std::vector<std::vector<std::string>> cat_raw(kept.size());
  std::vector<Vec> num_raw(kept.size());
  std::vector<int> labels;

  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ss >> tok) toks.push_back(tok);
    if (toks.empty()) continue;
    if (toks.size() != 21) {
      throw ShapeError("line " + std::to_string(line_no) + ": expected 21 columns, got " +
                       std::to_string(toks.size()));
    }
    for (size_t k = 0; k < kept.size(); ++k) {
      const size_t pos = kept[k];
      if (kCreditAttrs[pos].categorical) {
        cat_raw[k].push_back(toks[pos]);
      } else {
        num_raw[k].push_back(parse_numeric(toks[pos], line_no, pos));
      }
    }
    const std::string& lab = toks[20];
    if (lab == "1") labels.push_back(1);
    else if (lab == "2") labels.push_back(0);
    else
      throw ParseError("line " + std::to_string(line_no) + ": label must be 1 or 2, got '" +
                       lab + "'");
  }
  if (labels.empty()) throw ParseError("load_credit: no data rows in " + path);
  const size_t n = labels.size();

  TabularDataset ds;
  ds.labels = std::move(labels);
  ds.rows.assign(n, Vec(kept.size(), 0.0));
  ds.names.resize(kept.size());
  ds.kinds.resize(kept.size());
  ds.level_counts.assign(kept.size(), 0);
  ds.mean.assign(kept.size(), 0.0);
  ds.stddev.assign(kept.size(), 1.0);

  for (size_t k = 0; k < kept.size(); ++k) {
    const AttrDef& def = kCreditAttrs[kept[k]];
    ds.names[k] = def.name;
    if (def.categorical) {
      ds.kinds[k] = ColumnKind::Categorical;
      std::set<std::string> level_set(cat_raw[k].begin(), cat_raw[k].end());
      std::vector<std::string> levels(level_set.begin(), level_set.end());
      ds.level_counts[k] = static_cast<int>(levels.size());
      std::map<std::string, double> code;
      for (size_t l = 0; l < levels.size(); ++l) code[levels[l]] = static_cast<double>(l);
      for (size_t r = 0; r < n; ++r) ds.rows[r][k] = code[cat_raw[k][r]];
    } else {
      ds.kinds[k] = ColumnKind::Numeric;
      double mu = 0.0;
      for (double v : num_raw[k]) mu += v;
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (double v : num_raw[k]) var += (v - mu) * (v - mu);
      var /= static_cast<double>(n);
      double sd = std::sqrt(var);
      if (sd < 1e-12) sd = 1.0;  // constant column maps to all zeros
      ds.mean[k] = mu;
      ds.stddev[k] = sd;
      for (size_t r = 0; r < n; ++r) ds.rows[r][k] = (num_raw[k][r] - mu) / sd;
    }
  }

  ds.lower.assign(kept.size(), 0.0);
  ds.upper.assign(kept.size(), 0.0);
  for (size_t k = 0; k < kept.size(); ++k) {
    double lo = ds.rows[0][k], hi = ds.rows[0][k];
    for (size_t r = 1; r < n; ++r) {
      lo = std::min(lo, ds.rows[r][k]);
      hi = std::max(hi, ds.rows[r][k]);
    }
    ds.lower[k] = lo;
    ds.upper[k] = hi;
  }

  for (size_t pos : kModifiableFilePos) {
    size_t shift = 0;
    if (pos > kDropSex) ++shift;
    if (pos > kDropAge) ++shift;
    ds.modifiable.push_back(pos - shift);
  }
  std::sort(ds.modifiable.begin(), ds.modifiable.end());
  return ds;
}

namespace {

struct SynthRow {
  int status, duration, history, purpose, amount, savings, employment, installment;
  int person, debtors, residence, property, age, plans, housing, credits, job, liable;
  int telephone, foreign;
  double score;  // planted logistic signal, before the intercept shift
};

SynthRow draw_credit_row(Rng& rng) {
  SynthRow r;
  r.status = static_cast<int>(rng.uniform_index(4));
  r.duration = 4 + static_cast<int>(rng.uniform_index(69));
  r.history = static_cast<int>(rng.uniform_index(5));
  r.purpose = static_cast<int>(rng.uniform_index(10));
  r.amount = static_cast<int>(std::lround(std::exp(rng.uniform(std::log(250.0), std::log(18424.0)))));
  r.savings = static_cast<int>(rng.uniform_index(5));
  r.employment = static_cast<int>(rng.uniform_index(5));
  r.installment = 1 + static_cast<int>(rng.uniform_index(4));
  r.person = static_cast<int>(rng.uniform_index(4));
  r.debtors = static_cast<int>(rng.uniform_index(3));
  r.residence = 1 + static_cast<int>(rng.uniform_index(4));
  r.property = static_cast<int>(rng.uniform_index(4));
  r.age = 19 + static_cast<int>(rng.uniform_index(57));
  r.plans = static_cast<int>(rng.uniform_index(3));
  r.housing = static_cast<int>(rng.uniform_index(3));
  r.credits = 1 + static_cast<int>(rng.uniform_index(4));
  r.job = static_cast<int>(rng.uniform_index(4));
  r.liable = 1 + static_cast<int>(rng.uniform_index(2));
  r.telephone = static_cast<int>(rng.uniform_index(2));
  r.foreign = static_cast<int>(rng.uniform_index(2));

  // Linear in columns whose code order survives lexicographic re-encoding,
  // so a plain logistic fit on the loaded file can recover it.
  r.score = 1.0 * r.status - 0.03 * r.duration + 0.5 * r.history + 0.4 * r.savings +
            0.3 * r.employment - 0.00012 * r.amount - 0.25 * r.installment;
  return r;
}

double logistic_cdf_mean(const std::vector<SynthRow>& rows, double c) {
  double acc = 0.0;
  for (const SynthRow& r : rows) acc += 1.0 / (1.0 + std::exp(-(r.score + c)));
  return acc / static_cast<double>(rows.size());
}

}  // namespace

void generate_credit_file(const std::string& path, size_t rows, uint64_t seed) {
  if (rows < 1) throw DomainError("generate_credit_file: rows must be >= 1");
  std::vector<SynthRow> data(rows);
  for (size_t i = 0; i < rows; ++i) {
    Rng rng(seed, i, 0xc4);
    data[i] = draw_credit_row(rng);
  }

  // Shift the intercept so roughly 70% of labels come out good.
  double lo = -20.0, hi = 20.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (logistic_cdf_mean(data, mid) < 0.7 ? lo : hi) = mid;
  }
  const double intercept = 0.5 * (lo + hi);

  std::ofstream out(path);
  if (!out) throw ConfigError("generate_credit_file: cannot open " + path);
  for (size_t i = 0; i < rows; ++i) {
    const SynthRow& r = data[i];
    Rng lab_rng(seed, i, 0xc5);
    const double p = 1.0 / (1.0 + std::exp(-(r.score + intercept)));
    const int label = lab_rng.uniform() < p ? 1 : 2;  // 1 = good, 2 = bad
    out << "A1" << (r.status + 1) << ' ' << r.duration << ' ' << "A3" << r.history << ' '
        << "A4" << r.purpose << ' ' << r.amount << ' ' << "A6" << (r.savings + 1) << ' '
        << "A7" << (r.employment + 1) << ' ' << r.installment << ' ' << "A9"
        << (r.person + 1) << ' ' << "A10" << (r.debtors + 1) << ' ' << r.residence << ' '
        << "A12" << (r.property + 1) << ' ' << r.age << ' ' << "A14" << (r.plans + 1)
        << ' ' << "A15" << (r.housing + 1) << ' ' << r.credits << ' ' << "A17"
        << (r.job + 1) << ' ' << r.liable << ' ' << "A19" << (r.telephone + 1) << ' '
        << "A20" << (r.foreign + 1) << ' ' << label << '\n';
  }
  if (!out) throw Error("generate_credit_file: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Outcome simulator
// ---------------------------------------------------------------------------

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

double OutcomeSimulator::prob(const Vec& x) const {
  if (!fitted) throw ConfigError("outcome simulator not fitted");
  if (degenerate) return constant;
  if (x.size() != w.size()) throw ShapeError("outcome simulator: feature size mismatch");
  double t = b;
  for (size_t i = 0; i < w.size(); ++i) t += w[i] * x[i];
  return sigmoid(t);
}

OutcomeFunction OutcomeSimulator::as_outcome() const {
  if (!fitted) throw ConfigError("outcome simulator not fitted");
  OutcomeFunction h;
  h.kind = OutcomeFunction::Kind::LogisticBernoulli;
  if (degenerate) {
    // A constant success probability: zero weights, bias at the logit. The
    // exact 0/1 cases sit outside the logit range, so keep them as a clamp.
    h.w.assign(1, 0.0);
    h.b = constant >= 1.0 ? 500.0 : (constant <= 0.0 ? -500.0
                                                     : std::log(constant / (1.0 - constant)));
  } else {
    h.w = w;
    h.b = b;
  }
  return h;
}

OutcomeSimulator fit_outcome_simulator(const TabularDataset& ds, int iters, double lr) {
  if (ds.rows.empty()) throw DomainError("fit_outcome_simulator: empty dataset");
  if (ds.rows.size() != ds.labels.size())
    throw ShapeError("fit_outcome_simulator: rows/labels length mismatch");
  const size_t n = ds.rows.size(), d = ds.rows[0].size();

  double label_mean = 0.0;
  for (int y : ds.labels) {
    if (y != 0 && y != 1) throw DomainError("fit_outcome_simulator: labels must be 0 or 1");
    label_mean += y;
  }
  label_mean /= static_cast<double>(n);

  OutcomeSimulator sim;
  sim.fitted = true;
  if (label_mean == 0.0 || label_mean == 1.0) {
    sim.degenerate = true;
    sim.constant = label_mean;
    sim.w.assign(d, 0.0);
    return sim;
  }

  Vec params(d + 1, 0.0);  // weights then bias
  numkit::AdamState adam(params.size(), lr);
  for (int it = 0; it < iters; ++it) {
    Vec grad(params.size(), 0.0);
    double loss = 0.0;
    for (size_t r = 0; r < n; ++r) {
      double t = params[d];
      for (size_t i = 0; i < d; ++i) t += params[i] * ds.rows[r][i];
      const double p = sigmoid(t);
      const double y = ds.labels[r];
      constexpr double eps = 1e-12;
      loss -= y * std::log(std::max(p, eps)) + (1.0 - y) * std::log(std::max(1.0 - p, eps));
      const double dlogit = p - y;
      for (size_t i = 0; i < d; ++i) grad[i] += dlogit * ds.rows[r][i];
      grad[d] += dlogit;
    }
    if (!std::isfinite(loss))
      throw NumericError("fit_outcome_simulator: training loss diverged");
    const double inv = 1.0 / static_cast<double>(n);
    for (double& g : grad) g *= inv;
    numkit::adam_step(adam, params, grad);
  }

  sim.w.assign(params.begin(), params.begin() + static_cast<long>(d));
  sim.b = params[d];

  // The fit must at least beat always predicting the base rate.
  double fit_bce = 0.0;
  for (size_t r = 0; r < n; ++r) {
    const double p = std::clamp(sim.prob(ds.rows[r]), 1e-12, 1.0 - 1e-12);
    fit_bce -= ds.labels[r] * std::log(p) + (1 - ds.labels[r]) * std::log(1.0 - p);
  }
  fit_bce /= static_cast<double>(n);
  const double base_bce = -(label_mean * std::log(label_mean) +
                            (1.0 - label_mean) * std::log(1.0 - label_mean));
  if (fit_bce >= base_bce)
    throw NumericError("fit_outcome_simulator: fit no better than the constant predictor");
  return sim;
}

double simulator_accuracy(const OutcomeSimulator& sim, const TabularDataset& ds) {
  if (ds.rows.empty()) throw DomainError("simulator_accuracy: empty dataset");
  size_t hits = 0;
  for (size_t r = 0; r < ds.rows.size(); ++r) {
    const int pred = sim.prob(ds.rows[r]) >= 0.5 ? 1 : 0;
    if (pred == ds.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ds.rows.size());
}

TabularDataset bootstrap_augment(const TabularDataset& ds, size_t n_extra, double jitter,
                                 uint64_t seed, const OutcomeSimulator& sim) {
  if (jitter < 0.0) throw DomainError("bootstrap_augment: jitter must be >= 0");
  if (ds.rows.empty()) throw DomainError("bootstrap_augment: empty dataset");
  TabularDataset out = ds;
  if (n_extra == 0) return out;
  if (!sim.fitted)
    throw ConfigError("bootstrap_augment: simulator not fitted; cannot draw labels");

  const size_t n = ds.rows.size(), d = ds.rows[0].size();
  Vec col_sd(d, 0.0);
  for (size_t k = 0; k < d; ++k) {
    if (ds.kinds[k] != ColumnKind::Numeric) continue;
    double mu = 0.0;
    for (const Vec& r : ds.rows) mu += r[k];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (const Vec& r : ds.rows) var += (r[k] - mu) * (r[k] - mu);
    col_sd[k] = std::sqrt(var / static_cast<double>(n));
  }

  out.rows.reserve(n + n_extra);
  out.labels.reserve(n + n_extra);
  for (size_t i = 0; i < n_extra; ++i) {
    Rng rng(seed, i, stream_tag::kAugment);
    Vec row = ds.rows[rng.uniform_index(n)];
    if (jitter > 0.0) {
      for (size_t k = 0; k < d; ++k) {
        if (ds.kinds[k] != ColumnKind::Numeric) continue;
        row[k] += rng.gaussian(0.0, jitter * col_sd[k]);
        row[k] = std::clamp(row[k], ds.lower[k], ds.upper[k]);
      }
    }
    const int label = rng.uniform() < sim.prob(row) ? 1 : 0;
    out.rows.push_back(std::move(row));
    out.labels.push_back(label);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

const char* kind_name(ExperimentConfig::Kind kind) {
  switch (kind) {
    case ExperimentConfig::Kind::NoHarm: return "noharm";
    case ExperimentConfig::Kind::SyntheticRrm: return "synthetic-rrm";
    case ExperimentConfig::Kind::CreditRrm: return "credit-rrm";
    case ExperimentConfig::Kind::TheoryCheck: return "theory-check";
  }
  throw ConfigError("kind_name: unknown kind");
}

ExperimentConfig::Kind kind_from_name(const std::string& name) {
  if (name == "noharm") return ExperimentConfig::Kind::NoHarm;
  if (name == "synthetic-rrm") return ExperimentConfig::Kind::SyntheticRrm;
  if (name == "credit-rrm") return ExperimentConfig::Kind::CreditRrm;
  if (name == "theory-check") return ExperimentConfig::Kind::TheoryCheck;
  throw ConfigError("kind: must be one of noharm | synthetic-rrm | credit-rrm | "
                    "theory-check, got '" + name + "'");
}

ExperimentConfig default_config(ExperimentConfig::Kind kind) {
  ExperimentConfig cfg;
  cfg.kind = kind;
  switch (kind) {
    case ExperimentConfig::Kind::NoHarm:
      cfg.sizes.agents = 100;
      cfg.box_lower = Vec{-3.0};
      cfg.box_upper = Vec{3.0};
      cfg.policy.sampler_stddev = std::sqrt(0.4);
      break;
    case ExperimentConfig::Kind::SyntheticRrm:
      cfg.sizes.pretrain = 2000;
      cfg.sizes.compliance = 20000;
      cfg.sizes.test = 100000;
      cfg.rrm.iterations = 30;
      cfg.rrm.batch = 2000;
      cfg.rrm.loss = "squared";
      cfg.box_lower = Vec(3, 0.0);
      cfg.box_upper = Vec(3, 25.0);
      cfg.policy.sampler_stddev = 2.0;
      break;
    case ExperimentConfig::Kind::CreditRrm:
      cfg.sizes.pretrain = 2000;
      cfg.sizes.compliance = 20000;
      cfg.sizes.test = 1000;
      cfg.rrm.iterations = 10;
      cfg.rrm.batch = 2000;
      cfg.rrm.loss = "bce";
      cfg.cost.kind = "weighted-l1";
      cfg.policy.sampler_stddev = 1.0;
      cfg.policy.ce_steps = 40;
      break;
    case ExperimentConfig::Kind::TheoryCheck:
      break;
  }
  return cfg;
}

namespace {

[[noreturn]] void bad_key(const std::string& path) {
  throw ConfigError(path + ": unknown key");
}

void expect_keys(const json& obj, const std::string& path,
                 const std::set<std::string>& allowed) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) bad_key(path.empty() ? item.key() : path + "." + item.key());
  }
}

double get_num(const json& obj, const std::string& path) {
  if (!obj.is_number()) throw ConfigError(path + ": expected a number");
  return obj.get<double>();
}

size_t get_size(const json& obj, const std::string& path) {
  const double v = get_num(obj, path);
  if (v < 0 || v != std::floor(v)) throw ConfigError(path + ": expected a nonnegative integer");
  return static_cast<size_t>(v);
}

std::string get_str(const json& obj, const std::string& path) {
  if (!obj.is_string()) throw ConfigError(path + ": expected a string");
  return obj.get<std::string>();
}

Vec get_vec(const json& obj, const std::string& path) {
  if (!obj.is_array()) throw ConfigError(path + ": expected an array of numbers");
  Vec v;
  for (size_t i = 0; i < obj.size(); ++i) v.push_back(get_num(obj[i], path + "[" + std::to_string(i) + "]"));
  return v;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  expect_keys(root, "", {"kind", "seed", "out_dir", "sizes", "cost", "policy", "rrm",
                         "box", "credit", "check"});
  if (!root.contains("kind")) throw ConfigError("kind: required");

  ExperimentConfig cfg = default_config(kind_from_name(get_str(root["kind"], "kind")));

  if (root.contains("seed")) cfg.seed = static_cast<uint64_t>(get_size(root["seed"], "seed"));
  if (root.contains("out_dir")) cfg.out_dir = get_str(root["out_dir"], "out_dir");

  if (root.contains("sizes")) {
    const json& s = root["sizes"];
    expect_keys(s, "sizes", {"agents", "pretrain", "compliance", "test"});
    if (s.contains("agents")) cfg.sizes.agents = get_size(s["agents"], "sizes.agents");
    if (s.contains("pretrain")) cfg.sizes.pretrain = get_size(s["pretrain"], "sizes.pretrain");
    if (s.contains("compliance"))
      cfg.sizes.compliance = get_size(s["compliance"], "sizes.compliance");
    if (s.contains("test")) cfg.sizes.test = get_size(s["test"], "sizes.test");
  }

  if (root.contains("cost")) {
    const json& c = root["cost"];
    expect_keys(c, "cost", {"kind", "alpha", "scale"});
    if (c.contains("kind")) {
      cfg.cost.kind = get_str(c["kind"], "cost.kind");
      if (cfg.cost.kind != "quadratic" && cfg.cost.kind != "weighted-l1")
        throw ConfigError("cost.kind: must be quadratic or weighted-l1");
    }
    if (c.contains("alpha")) cfg.cost.alpha = get_num(c["alpha"], "cost.alpha");
    if (c.contains("scale")) cfg.cost.scale = get_num(c["scale"], "cost.scale");
  }

  if (root.contains("policy")) {
    const json& p = root["policy"];
    expect_keys(p, "policy",
                {"hidden", "lambda_grid", "ce_steps", "ce_lr", "sampler_stddev"});
    if (p.contains("hidden")) {
      cfg.policy.hidden = static_cast<int>(get_size(p["hidden"], "policy.hidden"));
      if (cfg.policy.hidden < 1) throw ConfigError("policy.hidden: must be >= 1");
    }
    if (p.contains("lambda_grid")) {
      cfg.policy.lambda_grid.clear();
      for (double v : get_vec(p["lambda_grid"], "policy.lambda_grid")) {
        if (v <= 0) throw ConfigError("policy.lambda_grid: entries must be > 0");
        cfg.policy.lambda_grid.push_back(v);
      }
      if (cfg.policy.lambda_grid.empty())
        throw ConfigError("policy.lambda_grid: must not be empty");
    }
    if (p.contains("ce_steps"))
      cfg.policy.ce_steps = static_cast<int>(get_size(p["ce_steps"], "policy.ce_steps"));
    if (p.contains("ce_lr")) cfg.policy.ce_lr = get_num(p["ce_lr"], "policy.ce_lr");
    if (p.contains("sampler_stddev")) {
      cfg.policy.sampler_stddev = get_num(p["sampler_stddev"], "policy.sampler_stddev");
      if (cfg.policy.sampler_stddev < 0)
        throw ConfigError("policy.sampler_stddev: must be >= 0");
    }
  }

  if (root.contains("rrm")) {
    const json& r = root["rrm"];
    expect_keys(r, "rrm",
                {"iterations", "batch", "inner_steps", "lr", "sigma_lr", "sigma_lr_decay",
                 "minibatch", "pretrain_steps", "xi_steps", "xi_weight0", "xi_weight1",
                 "loss"});
    if (r.contains("iterations")) cfg.rrm.iterations = get_size(r["iterations"], "rrm.iterations");
    if (r.contains("batch")) cfg.rrm.batch = get_size(r["batch"], "rrm.batch");
    if (r.contains("inner_steps"))
      cfg.rrm.inner_steps = get_size(r["inner_steps"], "rrm.inner_steps");
    if (r.contains("lr")) cfg.rrm.lr = get_num(r["lr"], "rrm.lr");
    if (r.contains("sigma_lr")) {
      cfg.rrm.sigma_lr = get_num(r["sigma_lr"], "rrm.sigma_lr");
      if (cfg.rrm.sigma_lr < 0) throw ConfigError("rrm.sigma_lr: must be >= 0");
    }
    if (r.contains("sigma_lr_decay")) {
      cfg.rrm.sigma_lr_decay = get_num(r["sigma_lr_decay"], "rrm.sigma_lr_decay");
      if (!(cfg.rrm.sigma_lr_decay > 0.0) || cfg.rrm.sigma_lr_decay > 1.0)
        throw ConfigError("rrm.sigma_lr_decay: must be in (0, 1]");
    }
    if (r.contains("minibatch")) cfg.rrm.minibatch = get_size(r["minibatch"], "rrm.minibatch");
    if (r.contains("pretrain_steps"))
      cfg.rrm.pretrain_steps = get_size(r["pretrain_steps"], "rrm.pretrain_steps");
    if (r.contains("xi_steps")) cfg.rrm.xi_steps = get_size(r["xi_steps"], "rrm.xi_steps");
    if (r.contains("xi_weight0")) cfg.rrm.xi_weight0 = get_num(r["xi_weight0"], "rrm.xi_weight0");
    if (r.contains("xi_weight1")) cfg.rrm.xi_weight1 = get_num(r["xi_weight1"], "rrm.xi_weight1");
    if (r.contains("loss")) {
      cfg.rrm.loss = get_str(r["loss"], "rrm.loss");
      if (cfg.rrm.loss != "squared" && cfg.rrm.loss != "bce")
        throw ConfigError("rrm.loss: must be squared or bce");
    }
  }

  if (root.contains("box")) {
    const json& b = root["box"];
    expect_keys(b, "box", {"lower", "upper"});
    if (b.contains("lower")) cfg.box_lower = get_vec(b["lower"], "box.lower");
    if (b.contains("upper")) cfg.box_upper = get_vec(b["upper"], "box.upper");
  }
  if (cfg.box_lower.size() != cfg.box_upper.size())
    throw ConfigError("box: lower and upper must have the same length");
  for (size_t i = 0; i < cfg.box_lower.size(); ++i)
    if (!(cfg.box_lower[i] < cfg.box_upper[i]))
      throw ConfigError("box: lower[" + std::to_string(i) + "] must be < upper[" +
                        std::to_string(i) + "]");

  if (root.contains("credit")) {
    const json& c = root["credit"];
    expect_keys(c, "credit", {"data_path", "augment_to", "jitter", "test_rows"});
    if (c.contains("data_path")) cfg.credit.data_path = get_str(c["data_path"], "credit.data_path");
    if (c.contains("augment_to"))
      cfg.credit.augment_to = get_size(c["augment_to"], "credit.augment_to");
    if (c.contains("jitter")) {
      cfg.credit.jitter = get_num(c["jitter"], "credit.jitter");
      if (cfg.credit.jitter < 0) throw ConfigError("credit.jitter: must be >= 0");
    }
    if (c.contains("test_rows")) cfg.credit.test_rows = get_size(c["test_rows"], "credit.test_rows");
  }
  if (cfg.kind == ExperimentConfig::Kind::CreditRrm && cfg.credit.data_path.empty())
    throw ConfigError("credit.data_path: required for credit-rrm");

  if (root.contains("check")) {
    const json& c = root["check"];
    expect_keys(c, "check",
                {"model_coeffs", "surrogate_coeffs", "taylor_order", "base", "probes",
                 "grid_lo", "grid_hi", "grid_n"});
    if (c.contains("model_coeffs"))
      cfg.check.model_coeffs = get_vec(c["model_coeffs"], "check.model_coeffs");
    if (c.contains("surrogate_coeffs"))
      cfg.check.surrogate_coeffs = get_vec(c["surrogate_coeffs"], "check.surrogate_coeffs");
    if (c.contains("taylor_order")) {
      cfg.check.taylor_order = static_cast<int>(get_size(c["taylor_order"], "check.taylor_order"));
      if (cfg.check.taylor_order != 1 && cfg.check.taylor_order != 2)
        throw ConfigError("check.taylor_order: must be 1 or 2");
    }
    if (c.contains("base")) cfg.check.base = get_num(c["base"], "check.base");
    if (c.contains("probes")) cfg.check.probes = get_vec(c["probes"], "check.probes");
    if (c.contains("grid_lo")) cfg.check.grid_lo = get_num(c["grid_lo"], "check.grid_lo");
    if (c.contains("grid_hi")) cfg.check.grid_hi = get_num(c["grid_hi"], "check.grid_hi");
    if (c.contains("grid_n")) cfg.check.grid_n = get_size(c["grid_n"], "check.grid_n");
    if (cfg.check.model_coeffs.empty())
      throw ConfigError("check.model_coeffs: must not be empty");
  }

  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json root;
  root["kind"] = kind_name(cfg.kind);
  root["seed"] = cfg.seed;
  root["out_dir"] = cfg.out_dir;
  root["sizes"] = {{"agents", cfg.sizes.agents},
                   {"pretrain", cfg.sizes.pretrain},
                   {"compliance", cfg.sizes.compliance},
                   {"test", cfg.sizes.test}};
  root["cost"] = {{"kind", cfg.cost.kind}, {"alpha", cfg.cost.alpha}, {"scale", cfg.cost.scale}};
  root["policy"] = {{"hidden", cfg.policy.hidden},
                    {"lambda_grid", cfg.policy.lambda_grid},
                    {"ce_steps", cfg.policy.ce_steps},
                    {"ce_lr", cfg.policy.ce_lr},
                    {"sampler_stddev", cfg.policy.sampler_stddev}};
  root["rrm"] = {{"iterations", cfg.rrm.iterations},
                 {"batch", cfg.rrm.batch},
                 {"inner_steps", cfg.rrm.inner_steps},
                 {"lr", cfg.rrm.lr},
                 {"sigma_lr", cfg.rrm.sigma_lr},
                 {"sigma_lr_decay", cfg.rrm.sigma_lr_decay},
                 {"minibatch", cfg.rrm.minibatch},
                 {"pretrain_steps", cfg.rrm.pretrain_steps},
                 {"xi_steps", cfg.rrm.xi_steps},
                 {"xi_weight0", cfg.rrm.xi_weight0},
                 {"xi_weight1", cfg.rrm.xi_weight1},
                 {"loss", cfg.rrm.loss}};
  root["box"] = {{"lower", cfg.box_lower}, {"upper", cfg.box_upper}};
  root["credit"] = {{"data_path", cfg.credit.data_path},
                    {"augment_to", cfg.credit.augment_to},
                    {"jitter", cfg.credit.jitter},
                    {"test_rows", cfg.credit.test_rows}};
  root["check"] = {{"model_coeffs", cfg.check.model_coeffs},
                   {"surrogate_coeffs", cfg.check.surrogate_coeffs},
                   {"taylor_order", cfg.check.taylor_order},
                   {"base", cfg.check.base},
                   {"probes", cfg.check.probes},
                   {"grid_lo", cfg.check.grid_lo},
                   {"grid_hi", cfg.check.grid_hi},
                   {"grid_n", cfg.check.grid_n}};
  return root.dump(2) + "\n";
}

}  // namespace arex::dataio
