#include "arex/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace arex::explain {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Vec diff(const Vec& x, const Vec& x0) {
  Vec d(x.size());
  for (size_t i = 0; i < x.size(); ++i) d[i] = x[i] - x0[i];
  return d;
}

}  // namespace

double Surrogate::value(const Vec& x) const {
  require_same_dim(x, x0, "Surrogate::value");
  Vec d = diff(x, x0);
  double y = c0 + dot(lin, d);
  for (size_t i = 0; i < quad.size(); ++i)
    for (size_t j = 0; j < quad.size(); ++j) y += quad[i][j] * d[i] * d[j];
  return y;
}

Vec Surrogate::gradient(const Vec& x) const {
  require_same_dim(x, x0, "Surrogate::gradient");
  Vec d = diff(x, x0);
  Vec g = lin;
  for (size_t i = 0; i < quad.size(); ++i)
    for (size_t j = 0; j < quad.size(); ++j) {
      g[i] += quad[i][j] * d[j];
      g[j] += quad[i][j] * d[i];
    }
  return g;
}

ScalarModel Surrogate::model() const {
  auto self = std::make_shared<Surrogate>(*this);
  ScalarModel m;
  m.value = [self](const Vec& x) { return self->value(x); };
  m.gradient = [self](const Vec& x) { return self->gradient(x); };
  return m;
}

Surrogate taylor_surrogate(const ScalarModel& g, const Vec& x0, int order) {
  if (order != 1 && order != 2)
    throw ConfigError("taylor_surrogate: order must be 1 or 2");
  Surrogate s;
  s.x0 = x0;
  s.order = order;
  s.c0 = g(x0);
  s.lin = g.grad_at(x0);
  if (!std::isfinite(s.c0) || !all_finite(s.lin))
    throw NumericError("taylor_surrogate: non-finite value or gradient at x0");
  if (order == 2) {
    std::vector<Vec> h = g.hess_at(x0);
    s.quad.assign(x0.size(), Vec(x0.size(), 0.0));
    for (size_t i = 0; i < x0.size(); ++i)
      for (size_t j = 0; j < x0.size(); ++j) {
        if (!std::isfinite(h[i][j]))
          throw NumericError("taylor_surrogate: non-finite Hessian entry");
        s.quad[i][j] = 0.5 * h[i][j];
      }
  }
  return s;
}

std::string explanation_to_text(const Explanation& e) {
  std::ostringstream out;
  switch (e.kind) {
    case Explanation::Kind::Surrogate: {
      const Surrogate& s = e.surrogate;
      out << "surrogate " << s.order << "\n" << "x0";
      for (double v : s.x0) out << ' ' << fmt(v);
      out << "\nc0 " << fmt(s.c0) << "\nlin";
      for (double v : s.lin) out << ' ' << fmt(v);
      out << "\n";
      for (const Vec& row : s.quad) {
        out << "quad";
        for (double v : row) out << ' ' << fmt(v);
        out << "\n";
      }
      break;
    }
    case Explanation::Kind::Arex: {
      out << "arex\nx";
      for (double v : e.arex.x) out << ' ' << fmt(v);
      out << "\nyhat " << fmt(e.arex.yhat) << "\n";
      break;
    }
    case Explanation::Kind::Attribution: {
      out << "attribution\nscores";
      for (double v : e.scores) out << ' ' << fmt(v);
      out << "\n";
      break;
    }
  }
  return out.str();
}

Explanation explanation_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  in >> tag;
  Explanation e;
  auto read_vec_line = [&](const std::string& want) {
    std::string key;
    if (!(in >> key) || key != want)
      throw ParseError("explanation_from_text: expected '" + want + "' line");
    std::string rest;
    std::getline(in, rest);
    std::istringstream ls(rest);
    Vec v;
    double x;
    while (ls >> x) v.push_back(x);
    return v;
  };
  if (tag == "surrogate") {
    e.kind = Explanation::Kind::Surrogate;
    if (!(in >> e.surrogate.order))
      throw ParseError("explanation_from_text: missing surrogate order");
    e.surrogate.x0 = read_vec_line("x0");
    Vec c0 = read_vec_line("c0");
    if (c0.size() != 1) throw ParseError("explanation_from_text: malformed c0");
    e.surrogate.c0 = c0[0];
    e.surrogate.lin = read_vec_line("lin");
    if (e.surrogate.order == 2)
      for (size_t i = 0; i < e.surrogate.x0.size(); ++i)
        e.surrogate.quad.push_back(read_vec_line("quad"));
  } else if (tag == "arex") {
    e.kind = Explanation::Kind::Arex;
    e.arex.x = read_vec_line("x");
    Vec y = read_vec_line("yhat");
    if (y.size() != 1) throw ParseError("explanation_from_text: malformed yhat");
    e.arex.yhat = y[0];
  } else if (tag == "attribution") {
    e.kind = Explanation::Kind::Attribution;
    e.scores = read_vec_line("scores");
  } else {
    throw ParseError("explanation_from_text: unknown tag '" + tag + "'");
  }
  return e;
}

Vec project_to_constraints(const Vec& x, const Vec& base, const CeConstraints& cons) {
  require_same_dim(x, base, "project_to_constraints");
  Vec out = x;
  if (!cons.modifiable.empty()) {
    std::vector<bool> ok(x.size(), false);
    for (int i : cons.modifiable) {
      if (i < 0 || static_cast<size_t>(i) >= x.size())
        throw ShapeError("project_to_constraints: modifiable index out of range");
      ok[static_cast<size_t>(i)] = true;
    }
    for (size_t i = 0; i < out.size(); ++i)
      if (!ok[i]) out[i] = base[i];
  }
  for (int i : cons.categorical) {
    if (i < 0 || static_cast<size_t>(i) >= out.size())
      throw ShapeError("project_to_constraints: categorical index out of range");
    out[static_cast<size_t>(i)] = std::round(out[static_cast<size_t>(i)]);
  }
  if (!cons.lower.empty()) {
    if (cons.lower.size() != x.size() || cons.upper.size() != x.size())
      throw ShapeError("project_to_constraints: bounds do not match dimension");
    for (size_t i = 0; i < out.size(); ++i)
      out[i] = std::min(std::max(out[i], cons.lower[i]), cons.upper[i]);
  }
  return out;
}

double ce_objective(const ScalarModel& g, const Vec& base, const CeConfig& cfg,
                    const Vec& x) {
  double dir = cfg.sign == BenefitSign::LowerIsBetter ? 1.0 : -1.0;
  return dir * g(x) + cfg.lambda * l2_sq(x, base);
}

ArexRec counterfactual_explain(const ScalarModel& g, const Vec& base, const CeConfig& cfg,
                               const CeConstraints& cons) {
  if (!(cfg.lambda > 0.0)) throw ConfigError("counterfactual_explain: lambda must be > 0");
  double dir = cfg.sign == BenefitSign::LowerIsBetter ? 1.0 : -1.0;

  // During descent only the box and frozen coordinates are enforced;
  // categorical rounding happens once at the end.
  CeConstraints relax = cons;
  relax.categorical.clear();

  Vec x = base;
  Vec best = base;
  double best_obj = ce_objective(g, base, cfg, base);

  for (int step = 0; step < cfg.steps; ++step) {
    Vec gr = g.grad_at(x);
    // gradient step on the model term, closed-form prox for the proximity term
    double shrink = 1.0 / (1.0 + 2.0 * cfg.lambda * cfg.lr);
    for (size_t i = 0; i < x.size(); ++i) {
      double v = x[i] - cfg.lr * dir * gr[i];
      x[i] = shrink * (v + 2.0 * cfg.lambda * cfg.lr * base[i]);
    }
    x = project_to_constraints(x, base, relax);
    double obj = ce_objective(g, base, cfg, x);
    if (!std::isfinite(obj)) {
      std::string dump;
      for (double v : x) dump += " " + fmt(v);
      throw NumericError("counterfactual_explain: non-finite objective at step " +
                         std::to_string(step) + ", iterate" + dump);
    }
    if (obj < best_obj) {
      best_obj = obj;
      best = x;
    }
  }
  // the limit point is at least as good as the recorded best whenever the
  // final objective ties it to the last ulp; prefer the converged iterate
  if (cfg.steps > 0 && ce_objective(g, base, cfg, x) <= best_obj) best = x;

  Vec rounded = project_to_constraints(best, base, cons);
  if (ce_objective(g, base, cfg, rounded) > ce_objective(g, base, cfg, base))
    rounded = base;  // rounding pushed it past the start point: stay put
  return {rounded, g(rounded)};
}

ArexRec arex_policy_recommend(const numkit::MlpParams& policy, const ScalarModel& g,
                              const Vec& base) {
  if (static_cast<size_t>(policy.in_dim) != base.size())
    throw ShapeError("arex_policy_recommend: policy input dimension mismatch");
  if (policy.out_dim != policy.in_dim)
    throw ShapeError("arex_policy_recommend: policy must map covariates to covariates");
  numkit::MlpTrace trace;
  numkit::mlp_forward(policy, base, trace);
  return {trace.out, g(trace.out)};
}

ArexRec random_arex_sample(const ArexSampler& s, const ScalarModel& g, const Vec& base,
                           numkit::Rng& rng) {
  ArexSampler::CenterRule rule = s.rule;
  if (rule == ArexSampler::CenterRule::MixOfThree) {
    switch (rng.uniform_index(3)) {
      case 0: rule = ArexSampler::CenterRule::Base; break;
      case 1: rule = ArexSampler::CenterRule::PolicyOut; break;
      default: rule = ArexSampler::CenterRule::CePoint; break;
    }
  }

  Vec center;
  switch (rule) {
    case ArexSampler::CenterRule::Base:
      center = base;
      break;
    case ArexSampler::CenterRule::Fixed:
      center = s.fixed_center;
      if (center.size() != base.size())
        throw ShapeError("random_arex_sample: fixed center dimension mismatch");
      break;
    case ArexSampler::CenterRule::PolicyOut:
      if (s.policy == nullptr)
        throw ConfigError("random_arex_sample: center rule needs a policy network");
      center = arex_policy_recommend(*s.policy, g, base).x;
      break;
    case ArexSampler::CenterRule::CePoint:
      center = counterfactual_explain(g, base, s.ce,
                                      s.constraints ? *s.constraints : CeConstraints{})
                   .x;
      break;
    case ArexSampler::CenterRule::MixOfThree:
      throw ConfigError("random_arex_sample: unresolved center rule");
  }

  Vec x(center.size());
  for (size_t i = 0; i < x.size(); ++i) x[i] = rng.gaussian(center[i], s.stddev);
  if (s.constraints != nullptr) x = project_to_constraints(x, base, *s.constraints);
  return {x, g(x)};
}

double shapley_two_feature(const Vec& base, double a, double b, double mean_x1) {
  if (base.size() != 2) throw ShapeError("shapley_two_feature: needs a 2-feature point");
  if (!(a < b)) throw DomainError("shapley_two_feature: invalid interval [a, b]");
  double ex2_sq = (b * b * b - a * a * a) / (3.0 * (b - a));
  double g_base = base[0] - base[1] * base[1];
  double e_g_x1_fixed = base[0] - ex2_sq;       // E[g(base1, X2)]
  double e_g_x2_fixed = mean_x1 - base[1] * base[1];  // E[g(X1, base2)]
  double e_g_both = mean_x1 - ex2_sq;           // E[g(X1, X2)]
  return 0.5 * (g_base - e_g_x1_fixed + e_g_x2_fixed - e_g_both);
}

}  // namespace arex::explain
