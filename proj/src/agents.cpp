#include "arex/agents.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace arex::agents {

namespace {

constexpr double kUnboundedGain = 1e6;
constexpr double kIntegrityTol = 1e-9;

bool is_modifiable(const CostSpec& c, size_t i) {
  return std::binary_search(c.modifiable.begin(), c.modifiable.end(),
                            static_cast<int>(i));
}

// Pin coordinates an agent cannot legally change.
void pin_frozen(const CostSpec& c, const Vec& base, Vec& x) {
  if (c.kind != CostSpec::Kind::WeightedL1) return;
  for (size_t i = 0; i < x.size(); ++i)
    if (!is_modifiable(c, i)) x[i] = base[i];
}

// Strictly-better-than comparison on (utility, tie-break) pairs.
bool improves(const std::optional<double>& cand_u, const Vec& cand_x,
              const std::optional<double>& best_u, const Vec& best_x, const Vec& base) {
  if (!cand_u) return false;
  if (!best_u) return true;
  if (*cand_u != *best_u) return *cand_u > *best_u;
  return closer_then_lex(cand_x, best_x, base);
}

}  // namespace

CostSpec CostSpec::quadratic(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ConfigError("CostSpec::quadratic: alpha must be positive");
  CostSpec c;
  c.kind = Kind::QuadraticL2;
  c.alpha = alpha;
  return c;
}

CostSpec CostSpec::weighted_l1(double scale, std::vector<int> modifiable, Vec lower,
                               Vec upper) {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw ConfigError("CostSpec::weighted_l1: scale must be positive");
  if (lower.size() != upper.size())
    throw ShapeError("CostSpec::weighted_l1: bounds size mismatch");
  std::sort(modifiable.begin(), modifiable.end());
  for (int i : modifiable) {
    if (i < 0 || static_cast<size_t>(i) >= lower.size())
      throw ConfigError("CostSpec::weighted_l1: modifiable index out of range");
    if (!(upper[static_cast<size_t>(i)] > lower[static_cast<size_t>(i)]))
      throw ConfigError("CostSpec::weighted_l1: empty range on modifiable feature");
  }
  CostSpec c;
  c.kind = Kind::WeightedL1;
  c.scale = scale;
  c.modifiable = std::move(modifiable);
  c.lower = std::move(lower);
  c.upper = std::move(upper);
  return c;
}

CostSpec CostSpec::piecewise(std::vector<CostPiece> pieces) {
  if (pieces.empty()) throw ConfigError("CostSpec::piecewise: no pieces");
  CostSpec c;
  c.kind = Kind::PiecewiseScalar;
  c.pieces = std::move(pieces);
  return c;
}

std::optional<double> cost_value(const CostSpec& c, const Vec& base, const Vec& x) {
  require_same_dim(base, x, "cost_value");
  switch (c.kind) {
    case CostSpec::Kind::QuadraticL2:
      return c.alpha * l2_sq(base, x);
    case CostSpec::Kind::WeightedL1: {
      if (c.lower.size() != base.size())
        throw ShapeError("cost_value: bounds do not match covariate dimension");
      double acc = 0.0;
      for (size_t i = 0; i < x.size(); ++i) {
        if (x[i] == base[i]) continue;
        if (!is_modifiable(c, i)) return std::nullopt;  // infinite cost
        acc += std::fabs(x[i] - base[i]) / (c.upper[i] - c.lower[i]);
      }
      return c.scale * acc;
    }
    case CostSpec::Kind::PiecewiseScalar: {
      if (base.size() != 1) throw ShapeError("cost_value: piecewise cost is 1-D only");
      double d = x[0] - base[0];
      if (d == 0.0) return 0.0;
      for (const CostPiece& p : c.pieces)
        if (d >= p.lo && d < p.hi) return p.quad * d * d + p.lin * std::fabs(d);
      throw DomainError("cost_value: move outside the pieces' coverage");
    }
  }
  throw ConfigError("cost_value: unknown cost kind");
}

Vec cost_subgrad(const CostSpec& c, const Vec& base, const Vec& x) {
  require_same_dim(base, x, "cost_subgrad");
  Vec g(x.size(), 0.0);
  switch (c.kind) {
    case CostSpec::Kind::QuadraticL2:
      for (size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * c.alpha * (x[i] - base[i]);
      return g;
    case CostSpec::Kind::WeightedL1:
      for (size_t i = 0; i < x.size(); ++i) {
        if (!is_modifiable(c, i)) continue;  // frozen coordinate
        double d = x[i] - base[i];
        if (d != 0.0) g[i] = c.scale * (d > 0.0 ? 1.0 : -1.0) / (c.upper[i] - c.lower[i]);
      }
      return g;
    case CostSpec::Kind::PiecewiseScalar: {
      double d = x[0] - base[0];
      if (d == 0.0) return g;
      for (const CostPiece& p : c.pieces)
        if (d >= p.lo && d < p.hi) {
          g[0] = 2.0 * p.quad * d + p.lin * (d > 0.0 ? 1.0 : -1.0);
          return g;
        }
      throw DomainError("cost_subgrad: move outside the pieces' coverage");
    }
  }
  throw ConfigError("cost_subgrad: unknown cost kind");
}

std::optional<double> true_utility(const UtilityContext& ctx, const AgentRecord& agent,
                                   const Vec& x) {
  if (ctx.g == nullptr) throw ConfigError("true_utility: no model in context");
  require_same_dim(agent.base, x, "true_utility");
  auto c = cost_value(agent.cost, agent.base, x);
  if (!c) return std::nullopt;
  return benefit(*ctx.g, ctx.sign, x) - *c;
}

namespace {

// Surrogate utility: same functional form as true utility, with f in place
// of the deployed model.
std::optional<double> surrogate_utility(const AgentRecord& agent, const ScalarModel& f,
                                        BenefitSign sign, const Vec& x) {
  auto c = cost_value(agent.cost, agent.base, x);
  if (!c) return std::nullopt;
  return benefit(f, sign, x) - *c;
}

BestResponse best_response_1d(const AgentRecord& agent, const ScalarModel& f,
                              BenefitSign sign, const SearchBox& box,
                              const SearchConfig& cfg) {
  double lo = box.lo[0], hi = box.hi[0];
  int n = std::max(cfg.grid_points, 3);
  auto su = [&](double x) { return surrogate_utility(agent, f, sign, Vec{x}); };

  double base = agent.base[0];
  std::optional<double> u_base = su(base);  // cost 0: always a value

  // Dense grid scan, keeping the index-ordered argmax with tie-breaks.
  Vec best_x = {base};
  std::optional<double> best_u = u_base;
  int best_idx = -1;
  for (int k = 0; k < n; ++k) {
    double x = lo + (hi - lo) * static_cast<double>(k) / (n - 1);
    auto u = su(x);
    if (improves(u, Vec{x}, best_u, best_x, agent.base)) {
      best_u = u;
      best_x = {x};
      best_idx = k;
    }
  }

  // Absurd promised gain at a box edge: report and stop.
  for (double edge : {lo, hi}) {
    auto u_edge = su(edge);
    if (u_edge && u_base && *u_edge > *u_base + kUnboundedGain)
      return {Vec{edge}, *u_edge, true};
  }

  // Golden-section refinement around the winning grid cell.
  if (best_idx >= 0) {
    double step = (hi - lo) / (n - 1);
    double a = std::max(lo, best_x[0] - step), b = std::min(hi, best_x[0] + step);
    const double ratio = 0.6180339887498949;
    double x1 = b - ratio * (b - a), x2 = a + ratio * (b - a);
    auto u1 = su(x1), u2 = su(x2);
    for (int it = 0; it < cfg.refine_iters; ++it) {
      bool take_left = !u2 || (u1 && *u1 >= *u2);
      if (take_left) {
        b = x2;
        x2 = x1;
        u2 = u1;
        x1 = b - ratio * (b - a);
        u1 = su(x1);
      } else {
        a = x1;
        x1 = x2;
        u1 = u2;
        x2 = a + ratio * (b - a);
        u2 = su(x2);
      }
    }
    double mid = 0.5 * (a + b);
    auto um = su(mid);
    if (improves(um, Vec{mid}, best_u, best_x, agent.base)) {
      best_u = um;
      best_x = {mid};
    }
  }

  // The base point always competes (and wins ties by zero distance).
  if (u_base && best_u && *u_base >= *best_u) {
    if (*u_base > *best_u || closer_then_lex(agent.base, best_x, agent.base)) {
      best_x = agent.base;
      best_u = u_base;
    }
  }
  return {best_x, best_u ? *best_u : 0.0, false};
}

BestResponse best_response_nd(const AgentRecord& agent, const ScalarModel& f,
                              BenefitSign sign, const SearchBox& box,
                              const SearchConfig& cfg) {
  if (agent.cost.kind == CostSpec::Kind::PiecewiseScalar)
    throw ConfigError("surrogate_best_response: piecewise cost is 1-D only");
  size_t d = agent.base.size();
  auto su = [&](const Vec& x) { return surrogate_utility(agent, f, sign, x); };

  std::optional<double> u_base = su(agent.base);
  Vec best_x = agent.base;
  std::optional<double> best_u = u_base;

  numkit::Rng rng(cfg.seed, cfg.stream, 0x9d5c);
  for (int start = 0; start <= cfg.restarts; ++start) {
    Vec x = agent.base;
    if (start > 0) {
      for (size_t i = 0; i < d; ++i) x[i] = rng.uniform(box.lo[i], box.hi[i]);
      pin_frozen(agent.cost, agent.base, x);
    }
    for (int step = 0; step < cfg.descent_steps; ++step) {
      Vec gf = f.grad_at(x);
      Vec gc = cost_subgrad(agent.cost, agent.base, x);
      double dir = sign == BenefitSign::LowerIsBetter ? -1.0 : 1.0;
      for (size_t i = 0; i < d; ++i) {
        x[i] += cfg.descent_lr * (dir * gf[i] - gc[i]);
        x[i] = std::min(std::max(x[i], box.lo[i]), box.hi[i]);
      }
      pin_frozen(agent.cost, agent.base, x);
      auto u = su(x);
      if (improves(u, x, best_u, best_x, agent.base)) {
        best_u = u;
        best_x = x;
      }
    }
  }

  bool unbounded = best_u && u_base && *best_u > *u_base + kUnboundedGain;
  return {best_x, best_u ? *best_u : 0.0, unbounded};
}

}  // namespace

BestResponse surrogate_best_response(const AgentRecord& agent, const ScalarModel& f,
                                     BenefitSign sign, const SearchBox& box,
                                     const SearchConfig& cfg) {
  size_t d = agent.base.size();
  if (box.lo.size() != d || box.hi.size() != d)
    throw ShapeError("surrogate_best_response: box does not match covariates");
  for (size_t i = 0; i < d; ++i) {
    if (!std::isfinite(box.lo[i]) || !std::isfinite(box.hi[i]) || box.lo[i] > box.hi[i])
      throw DomainError("surrogate_best_response: box must be bounded and ordered");
  }
  return d == 1 ? best_response_1d(agent, f, sign, box, cfg)
                : best_response_nd(agent, f, sign, box, cfg);
}

ArexOutcome arex_response(const UtilityContext& ctx, const AgentRecord& agent,
                          const ArexRec& rec) {
  if (ctx.g == nullptr) throw ConfigError("arex_response: no model in context");
  require_same_dim(agent.base, rec.x, "arex_response");
  double actual = (*ctx.g)(rec.x);
  if (!(std::fabs(actual - rec.yhat) <= kIntegrityTol))
    throw IntegrityError("arex_response: disclosed prediction disagrees with the model");
  auto u_rec = true_utility(ctx, agent, rec.x);
  auto u_base = true_utility(ctx, agent, agent.base);
  bool adopt = u_rec && *u_rec >= *u_base;
  return {adopt ? rec.x : agent.base, adopt};
}

ScalarModel posterior_mean_surrogate(const std::vector<ScalarModel>& family,
                                     const Vec& prior, const Vec& likelihood_weight) {
  if (family.size() != prior.size() || family.size() != likelihood_weight.size())
    throw ShapeError("posterior_mean_surrogate: family/prior/likelihood sizes differ");
  if (family.empty()) throw ShapeError("posterior_mean_surrogate: empty family");
  double psum = 0.0;
  for (double p : prior) {
    if (p < 0.0) throw PreconditionError("posterior_mean_surrogate: negative prior");
    psum += p;
  }
  if (std::fabs(psum - 1.0) > 1e-9)
    throw PreconditionError("posterior_mean_surrogate: prior does not sum to 1");

  auto w = std::make_shared<Vec>(prior.size());
  double total = 0.0;
  for (size_t i = 0; i < prior.size(); ++i) {
    if (likelihood_weight[i] < 0.0)
      throw PreconditionError("posterior_mean_surrogate: negative likelihood weight");
    (*w)[i] = likelihood_weight[i] * prior[i];
    total += (*w)[i];
  }
  if (!(total > 0.0))
    throw DegenerateError("posterior_mean_surrogate: posterior has no mass");
  for (double& wi : *w) wi /= total;

  auto models = std::make_shared<std::vector<ScalarModel>>(family);
  bool all_grad = true;
  for (const ScalarModel& m : family) all_grad = all_grad && bool(m.gradient);

  ScalarModel f;
  f.value = [models, w](const Vec& x) {
    double acc = 0.0;
    for (size_t i = 0; i < models->size(); ++i)
      if ((*w)[i] != 0.0) acc += (*w)[i] * (*models)[i](x);
    return acc;
  };
  if (all_grad) {
    f.gradient = [models, w](const Vec& x) {
      Vec acc(x.size(), 0.0);
      for (size_t i = 0; i < models->size(); ++i) {
        if ((*w)[i] == 0.0) continue;
        Vec gi = (*models)[i].gradient(x);
        for (size_t k = 0; k < x.size(); ++k) acc[k] += (*w)[i] * gi[k];
      }
      return acc;
    };
  }
  return f;
}

double OutcomeFunction::mean(const Vec& x, double z) const {
  switch (kind) {
    case Kind::Unset:
      throw ConfigError("OutcomeFunction: simulator not fitted");
    case Kind::Quadratic: {
      Vec v = x;
      v.push_back(z);
      if (lin.size() != v.size() || quad.size() != v.size())
        throw ShapeError("OutcomeFunction: coefficient shape mismatch");
      double y = c0 + dot(lin, v);
      for (size_t i = 0; i < v.size(); ++i) {
        if (quad[i].size() != v.size())
          throw ShapeError("OutcomeFunction: coefficient shape mismatch");
        for (size_t j = 0; j < v.size(); ++j) y += quad[i][j] * v[i] * v[j];
      }
      return y;
    }
    case Kind::LogisticBernoulli: {
      if (w.size() != x.size()) throw ShapeError("OutcomeFunction: weight shape mismatch");
      double t = dot(w, x) + b;
      return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    }
  }
  throw ConfigError("OutcomeFunction: unknown kind");
}

double evaluate_outcome(const OutcomeFunction& h, const Vec& x, double z,
                        numkit::Rng* rng) {
  double m = h.mean(x, z);
  if (h.kind != OutcomeFunction::Kind::LogisticBernoulli) return m;
  if (rng == nullptr)
    throw ConfigError("evaluate_outcome: Bernoulli outcome needs a random stream");
  return rng->uniform() < m ? 1.0 : 0.0;
}

void save_population(const std::vector<AgentRecord>& agents, const std::string& path) {
  if (agents.empty()) throw ConfigError("save_population: empty population");
  std::ofstream out(path);
  if (!out) throw ConfigError("save_population: cannot open " + path);
  const CostSpec& c0 = agents.front().cost;
  for (const AgentRecord& a : agents)
    if (a.cost.kind != c0.kind)
      throw ConfigError("save_population: mixed cost kinds are not supported");

  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };

  out << "# population\n# dim " << agents.front().base.size() << "\n";
  switch (c0.kind) {
    case CostSpec::Kind::QuadraticL2:
      out << "# cost quadratic\n";
      break;
    case CostSpec::Kind::WeightedL1: {
      out << "# cost weighted_l1\n# modifiable";
      for (int i : c0.modifiable) out << ' ' << i;
      out << "\n# lower";
      for (double v : c0.lower) out << ' ' << num(v);
      out << "\n# upper";
      for (double v : c0.upper) out << ' ' << num(v);
      out << "\n";
      break;
    }
    case CostSpec::Kind::PiecewiseScalar:
      out << "# cost piecewise\n";
      for (const CostPiece& p : c0.pieces)
        out << "# piece " << num(p.lo) << ' ' << num(p.hi) << ' ' << num(p.quad) << ' '
            << num(p.lin) << "\n";
      break;
  }
  for (const AgentRecord& a : agents) {
    for (double v : a.base) out << num(v) << ' ';
    double param = c0.kind == CostSpec::Kind::QuadraticL2  ? a.cost.alpha
                   : c0.kind == CostSpec::Kind::WeightedL1 ? a.cost.scale
                                                           : 0.0;
    out << num(a.z) << ' ' << num(param) << ' ' << static_cast<int>(a.reaction) << "\n";
  }
  if (!out) throw ConfigError("save_population: write failed for " + path);
}

std::vector<AgentRecord> load_population(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_population: cannot open " + path);
  std::string line, cost_kind;
  size_t dim = 0;
  std::vector<int> modifiable;
  Vec lower, upper;
  std::vector<CostPiece> pieces;
  while (in.peek() == '#') {
    std::getline(in, line);
    std::istringstream ls(line);
    std::string hash, key;
    ls >> hash >> key;
    if (key == "dim")
      ls >> dim;
    else if (key == "cost")
      ls >> cost_kind;
    else if (key == "modifiable") {
      int idx;
      while (ls >> idx) modifiable.push_back(idx);
    } else if (key == "lower") {
      double v;
      while (ls >> v) lower.push_back(v);
    } else if (key == "upper") {
      double v;
      while (ls >> v) upper.push_back(v);
    } else if (key == "piece") {
      CostPiece p{};
      ls >> p.lo >> p.hi >> p.quad >> p.lin;
      pieces.push_back(p);
    } else if (key != "population") {
      throw ParseError("load_population: unknown header key '" + key + "'");
    }
  }
  if (dim == 0 || cost_kind.empty())
    throw ParseError("load_population: incomplete header in " + path);

  std::vector<AgentRecord> agents;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    AgentRecord a;
    a.base.resize(dim);
    for (double& v : a.base)
      if (!(ls >> v)) throw ParseError("load_population: short row in " + path);
    double param = 0.0;
    int reaction = 0;
    if (!(ls >> a.z >> param >> reaction))
      throw ParseError("load_population: short row in " + path);
    if (cost_kind == "quadratic")
      a.cost = CostSpec::quadratic(param);
    else if (cost_kind == "weighted_l1")
      a.cost = CostSpec::weighted_l1(param, modifiable, lower, upper);
    else if (cost_kind == "piecewise")
      a.cost = CostSpec::piecewise(pieces);
    else
      throw ParseError("load_population: unknown cost kind '" + cost_kind + "'");
    a.reaction = static_cast<ReactionKind>(reaction);
    agents.push_back(std::move(a));
  }
  if (agents.empty()) throw ParseError("load_population: no rows in " + path);
  return agents;
}

}  // namespace arex::agents
