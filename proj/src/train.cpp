#include "arex/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "arex/optim.hpp"

namespace arex::train {

using agents::AgentRecord;
using agents::BenefitSign;
using agents::OutcomeFunction;
using numkit::AdamState;
using numkit::MlpParams;
using numkit::MlpTrace;
using numkit::Rng;

namespace {

// Offsets into the flat parameter layout [W1|b1|W2|b2|W3|b3|W4|b4].
struct Layout {
  size_t in, h, out;
  size_t w1, b1, w4, b4;
};

Layout layout_of(const MlpParams& p) {
  Layout L;
  L.in = static_cast<size_t>(p.in_dim);
  L.h = static_cast<size_t>(p.hidden);
  L.out = static_cast<size_t>(p.out_dim);
  L.w1 = 0;
  L.b1 = L.h * L.in;
  L.w4 = L.b1 + L.h + 2 * (L.h * L.h + L.h);
  L.b4 = L.w4 + L.out * L.h;
  return L;
}

double clamp_prob(double p) { return std::min(std::max(p, 1e-12), 1.0 - 1e-12); }

double bce_term(double p, double y) {
  const double q = clamp_prob(p);
  return -(y * std::log(q) + (1.0 - y) * std::log1p(-q));
}

void scale_into(const Scaler& s, const Vec& x, Vec& out) {
  out.resize(x.size());
  if (s.identity()) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  if (s.mu.size() != x.size()) throw ShapeError("apply_scaler: dimension mismatch");
  for (size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - s.mu[k]) / s.sd[k];
}

double observe(const Environment& env, const Vec& x, double z, uint64_t seed, size_t t,
               uint64_t tag) {
  if (!env.stochastic_outcome) return env.h.mean(x, z);
  Rng rng(seed, t, tag);
  return agents::evaluate_outcome(env.h, x, z, &rng);
}

void require_env(const Environment& env, const char* who) {
  if (!env.draw) throw ConfigError(std::string(who) + ": environment has no draw function");
  if (env.h.kind == OutcomeFunction::Kind::Unset)
    throw ConfigError(std::string(who) + ": environment has no outcome process");
}

}  // namespace

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

Scaler fit_scaler(const std::vector<Vec>& rows) {
  if (rows.empty()) throw DomainError("fit_scaler: no rows");
  const size_t d = rows[0].size();
  Scaler s;
  s.mu.assign(d, 0.0);
  s.sd.assign(d, 0.0);
  for (const Vec& r : rows) {
    if (r.size() != d) throw ShapeError("fit_scaler: ragged rows");
    for (size_t k = 0; k < d; ++k) s.mu[k] += r[k];
  }
  for (double& m : s.mu) m /= static_cast<double>(rows.size());
  for (const Vec& r : rows)
    for (size_t k = 0; k < d; ++k) {
      const double c = r[k] - s.mu[k];
      s.sd[k] += c * c;
    }
  for (double& v : s.sd) {
    v = std::sqrt(v / static_cast<double>(rows.size()));
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

Vec apply_scaler(const Scaler& s, const Vec& x) {
  Vec out;
  scale_into(s, x, out);
  return out;
}

MlpParams fold_scaling(const MlpParams& net, const Scaler& in, const Scaler& out) {
  MlpParams p = net;
  const Layout L = layout_of(p);
  if (!in.identity()) {
    if (in.mu.size() != L.in) throw ShapeError("fold_scaling: input scaler dimension mismatch");
    for (size_t r = 0; r < L.h; ++r) {
      double shift = 0.0;
      for (size_t k = 0; k < L.in; ++k) {
        double& w = p.theta[L.w1 + r * L.in + k];
        w /= in.sd[k];
        shift += w * in.mu[k];
      }
      p.theta[L.b1 + r] -= shift;
    }
  }
  if (!out.identity()) {
    if (p.logistic_out)
      throw ConfigError("fold_scaling: cannot fold an output scaler through a logistic head");
    if (out.mu.size() != L.out)
      throw ShapeError("fold_scaling: output scaler dimension mismatch");
    for (size_t r = 0; r < L.out; ++r) {
      for (size_t c = 0; c < L.h; ++c) p.theta[L.w4 + r * L.h + c] *= out.sd[r];
      p.theta[L.b4 + r] = out.sd[r] * p.theta[L.b4 + r] + out.mu[r];
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Compliance model and simulated responses
// ---------------------------------------------------------------------------

double ComplianceModel::predict(const Vec& base, const Vec& rec, double dg) const {
  if (degenerate) return constant;
  if (base.size() != rec.size())
    throw ShapeError("ComplianceModel::predict: base/rec dimension mismatch");
  Vec u;
  u.reserve(2 * base.size() + 1);
  u.insert(u.end(), base.begin(), base.end());
  u.insert(u.end(), rec.begin(), rec.end());
  u.push_back(dg);
  if (xi.in_dim != static_cast<int>(u.size()))
    throw ShapeError("ComplianceModel::predict: feature dimension mismatch");
  return numkit::mlp_value(xi, u);
}

ResponsePair simulate_response(const ComplianceModel& xi, const ScalarModel& g,
                               const Vec& base, const Vec& rec) {
  if (base.size() != rec.size())
    throw ShapeError("simulate_response: base/rec dimension mismatch");
  ResponsePair r;
  r.w = xi.predict(base, rec, g(base) - g(rec));
  r.soft.resize(base.size());
  for (size_t k = 0; k < base.size(); ++k)
    r.soft[k] = r.w * rec[k] + (1.0 - r.w) * base[k];
  r.adopt_hard = r.w >= 0.5;
  r.hard = r.adopt_hard ? rec : base;
  return r;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

size_t RRMConfig::batch_at(size_t i) const {
  if (i >= iterations) throw DomainError("RRMConfig::batch_at: iteration out of range");
  return batch_sizes.empty() ? batch : batch_sizes[i];
}

void RRMConfig::validate() const {
  auto positive = [](size_t v, const char* name) {
    if (v < 1) throw ConfigError(std::string("RRMConfig: ") + name + " must be >= 1");
  };
  positive(iterations, "iterations");
  positive(pretrain, "pretrain");
  positive(compliance, "compliance");
  positive(hidden, "hidden");
  positive(inner_steps, "inner_steps");
  positive(minibatch, "minibatch");
  positive(pretrain_steps, "pretrain_steps");
  positive(xi_steps, "xi_steps");
  if (batch_sizes.empty()) {
    positive(batch, "batch");
  } else {
    if (batch_sizes.size() != iterations)
      throw ConfigError("RRMConfig: batch_sizes must have one entry per iteration");
    for (size_t b : batch_sizes) positive(b, "batch_sizes entries");
  }
  if (loss != "squared" && loss != "bce")
    throw ConfigError("RRMConfig: loss must be 'squared' or 'bce'");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("RRMConfig: lr must be positive");
  if (sigma_lr < 0.0 || !std::isfinite(sigma_lr))
    throw ConfigError("RRMConfig: sigma_lr must be zero (inherit lr) or positive");
  if (!(sigma_lr_decay > 0.0) || sigma_lr_decay > 1.0)
    throw ConfigError("RRMConfig: sigma_lr_decay must be in (0, 1]");
  if (!(ce_lr > 0.0) || !std::isfinite(ce_lr))
    throw ConfigError("RRMConfig: ce_lr must be positive");
  if (!(sampler_stddev > 0.0) || !std::isfinite(sampler_stddev))
    throw ConfigError("RRMConfig: sampler_stddev must be positive");
  if (ce_steps < 1) throw ConfigError("RRMConfig: ce_steps must be >= 1");
}

// ---------------------------------------------------------------------------
// Environments
// ---------------------------------------------------------------------------

Environment make_synthetic_environment(uint64_t seed, const Vec& ce_lower,
                                       const Vec& ce_upper) {
  Environment env;
  env.h = dataio::gen_synthetic_population(1, seed).h;
  env.draw = [seed](size_t n, uint64_t stream) {
    // Disjoint index windows per stream keep the draws independent.
    if (n >= (uint64_t{1} << 24))
      throw DomainError("synthetic environment: draw larger than the stream window");
    return dataio::gen_synthetic_agents(n, seed, stream << 24);
  };
  env.sign = BenefitSign::LowerIsBetter;
  if (!ce_lower.empty() || !ce_upper.empty()) {
    if (ce_lower.size() != ce_upper.size())
      throw ShapeError("make_synthetic_environment: box bounds size mismatch");
    env.constraints.lower = ce_lower;
    env.constraints.upper = ce_upper;
  }
  env.x_dim = 3;
  env.stochastic_outcome = false;
  return env;
}

Environment make_credit_environment(const dataio::TabularDataset& pool,
                                    const dataio::OutcomeSimulator& sim, uint64_t seed,
                                    double cost_scale) {
  if (!sim.fitted) throw ConfigError("make_credit_environment: simulator not fitted");
  if (pool.rows.empty()) throw DomainError("make_credit_environment: empty dataset");
  std::vector<int> modifiable(pool.modifiable.begin(), pool.modifiable.end());
  agents::CostSpec cost =
      agents::CostSpec::weighted_l1(cost_scale, modifiable, pool.lower, pool.upper);

  Environment env;
  auto rows = std::make_shared<const std::vector<Vec>>(pool.rows);
  env.draw = [rows, cost, seed](size_t n, uint64_t stream) {
    Rng rng(seed, stream, stream::kCreditResample);
    std::vector<AgentRecord> out(n);
    for (AgentRecord& a : out) {
      a.base = (*rows)[rng.uniform_index(rows->size())];
      a.z = 0.0;
      a.cost = cost;
      a.reaction = agents::ReactionKind::ARexChooser;
    }
    return out;
  };
  env.h = sim.as_outcome();
  env.sign = BenefitSign::HigherIsBetter;
  env.constraints.lower = pool.lower;
  env.constraints.upper = pool.upper;
  env.constraints.modifiable = modifiable;
  for (size_t k = 0; k < pool.kinds.size(); ++k)
    if (pool.kinds[k] == dataio::ColumnKind::Categorical)
      env.constraints.categorical.push_back(static_cast<int>(k));
  env.x_dim = pool.n_features();
  env.stochastic_outcome = true;
  return env;
}

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

PretrainResult pretrain(const std::vector<Vec>& xs, const Vec& ys, const RRMConfig& cfg) {
  cfg.validate();
  if (xs.empty()) throw DomainError("pretrain: empty dataset");
  if (xs.size() != ys.size()) throw ShapeError("pretrain: covariate/outcome count mismatch");
  const size_t n = xs.size();
  const size_t d = xs[0].size();
  const bool bce = cfg.loss == "bce";

  PretrainResult res;
  res.x_scale = fit_scaler(xs);
  if (!bce) {
    std::vector<Vec> col(n);
    for (size_t i = 0; i < n; ++i) col[i] = Vec{ys[i]};
    res.y_scale = fit_scaler(col);
  } else {
    for (double y : ys)
      if (y != 0.0 && y != 1.0) throw DomainError("pretrain: bce outcomes must be 0/1");
  }

  std::vector<Vec> xt(n);
  for (size_t i = 0; i < n; ++i) scale_into(res.x_scale, xs[i], xt[i]);
  Vec yt(n);
  for (size_t i = 0; i < n; ++i)
    yt[i] = bce ? ys[i] : (ys[i] - res.y_scale.mu[0]) / res.y_scale.sd[0];

  Rng init_g(cfg.seed, 0, stream::kInitG);
  res.g = numkit::mlp_init(static_cast<int>(d), static_cast<int>(cfg.hidden), 1, bce, init_g);
  Rng init_s(cfg.seed, 0, stream::kInitSigma);
  res.sigma = numkit::mlp_init(static_cast<int>(d), static_cast<int>(cfg.hidden),
                               static_cast<int>(d), false, init_s);

  const size_t B = std::min(cfg.minibatch, n);
  const double invB = 1.0 / static_cast<double>(B);
  Rng picks(cfg.seed, 0, stream::kPretrainBatch);
  MlpTrace tr;

  // Model fit.
  {
    AdamState opt(res.g.theta.size(), cfg.lr);
    Vec dtheta(res.g.theta.size());
    Vec dy(1);
    for (size_t step = 0; step < cfg.pretrain_steps; ++step) {
      std::fill(dtheta.begin(), dtheta.end(), 0.0);
      double batch_loss = 0.0;
      for (size_t b = 0; b < B; ++b) {
        const size_t i = picks.uniform_index(n);
        numkit::mlp_forward(res.g, xt[i], tr);
        if (bce) {
          batch_loss += bce_term(tr.out[0], yt[i]);
          dy[0] = (tr.out[0] - yt[i]) * invB;
          numkit::mlp_vjp(res.g, xt[i], tr, dy, dtheta, true);
        } else {
          const double e = tr.out[0] - yt[i];
          batch_loss += e * e;
          dy[0] = 2.0 * e * invB;
          numkit::mlp_vjp(res.g, xt[i], tr, dy, dtheta, false);
        }
      }
      if (!std::isfinite(batch_loss)) throw NumericError("pretrain: model fit diverged");
      numkit::adam_step(opt, res.g.theta, dtheta);
    }
  }

  // Policy fit: imitate the identity map in scaled space.
  {
    const size_t steps =
        cfg.sigma_pretrain_steps > 0 ? cfg.sigma_pretrain_steps : cfg.pretrain_steps;
    AdamState opt(res.sigma.theta.size(), cfg.lr);
    Vec dtheta(res.sigma.theta.size());
    Vec dy(d);
    for (size_t step = 0; step < steps; ++step) {
      std::fill(dtheta.begin(), dtheta.end(), 0.0);
      double batch_loss = 0.0;
      for (size_t b = 0; b < B; ++b) {
        const size_t i = picks.uniform_index(n);
        numkit::mlp_forward(res.sigma, xt[i], tr);
        for (size_t k = 0; k < d; ++k) {
          const double e = tr.out[k] - xt[i][k];
          batch_loss += e * e;
          dy[k] = 2.0 * e * invB;
        }
        numkit::mlp_vjp(res.sigma, xt[i], tr, dy, dtheta, false);
      }
      if (!std::isfinite(batch_loss)) throw NumericError("pretrain: policy fit diverged");
      numkit::adam_step(opt, res.sigma.theta, dtheta);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Compliance logging and fitting
// ---------------------------------------------------------------------------

std::vector<ComplianceSample> collect_compliance(const std::vector<AgentRecord>& pop,
                                                 const ScalarModel& g,
                                                 const explain::ArexSampler& sampler,
                                                 BenefitSign sign, uint64_t seed) {
  agents::UtilityContext ctx;
  ctx.g = &g;
  ctx.sign = sign;
  std::vector<ComplianceSample> out(pop.size());
  for (size_t t = 0; t < pop.size(); ++t) {
    Rng rng(seed, t, stream::kComplianceRec);
    const explain::ArexRec rec = explain::random_arex_sample(sampler, g, pop[t].base, rng);
    const agents::ArexOutcome resp = agents::arex_response(ctx, pop[t], rec);
    out[t].base = pop[t].base;
    out[t].rec = rec.x;
    out[t].dg = g(pop[t].base) - rec.yhat;
    out[t].w = resp.adopted ? 1.0 : 0.0;
  }
  return out;
}

ComplianceModel train_compliance(const std::vector<ComplianceSample>& samples, double w0,
                                 double w1, const RRMConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw DomainError("train_compliance: no samples");
  const size_t d = samples[0].base.size();
  size_t n0 = 0, n1 = 0;
  for (const ComplianceSample& s : samples) {
    if (s.base.size() != d || s.rec.size() != d)
      throw ShapeError("train_compliance: ragged samples");
    if (s.w == 0.0)
      ++n0;
    else if (s.w == 1.0)
      ++n1;
    else
      throw DomainError("train_compliance: labels must be 0 or 1");
  }

  ComplianceModel model;
  if (n0 == 0 || n1 == 0) {
    model.degenerate = true;
    model.constant = n1 > 0 ? 1.0 : 0.0;
    return model;
  }

  const size_t n = samples.size();
  if (!(w0 > 0.0) || !(w1 > 0.0)) {
    w0 = static_cast<double>(n) / (2.0 * static_cast<double>(n0));
    w1 = static_cast<double>(n) / (2.0 * static_cast<double>(n1));
  }

  std::vector<Vec> rows(n);
  Vec labels(n);
  for (size_t i = 0; i < n; ++i) {
    Vec& u = rows[i];
    u.reserve(2 * d + 1);
    u.insert(u.end(), samples[i].base.begin(), samples[i].base.end());
    u.insert(u.end(), samples[i].rec.begin(), samples[i].rec.end());
    u.push_back(samples[i].dg);
    labels[i] = samples[i].w;
  }
  const Scaler u_scale = fit_scaler(rows);
  std::vector<Vec> ut(n);
  for (size_t i = 0; i < n; ++i) scale_into(u_scale, rows[i], ut[i]);

  Rng init(cfg.seed, 0, stream::kInitXi);
  MlpParams xi = numkit::mlp_init(static_cast<int>(2 * d + 1), static_cast<int>(cfg.hidden),
                                  1, true, init);

  auto full_loss = [&]() {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double p = numkit::mlp_value(xi, ut[i]);
      acc += (labels[i] == 1.0 ? w1 : w0) * bce_term(p, labels[i]);
    }
    return acc / static_cast<double>(n);
  };
  const double start_loss = full_loss();

  const size_t B = std::min(cfg.minibatch, n);
  const double invB = 1.0 / static_cast<double>(B);
  Rng picks(cfg.seed, 0, stream::kXiBatch);
  AdamState opt(xi.theta.size(), cfg.lr);
  Vec dtheta(xi.theta.size());
  Vec dy(1);
  MlpTrace tr;
  for (size_t step = 0; step < cfg.xi_steps; ++step) {
    std::fill(dtheta.begin(), dtheta.end(), 0.0);
    double batch_loss = 0.0;
    for (size_t b = 0; b < B; ++b) {
      const size_t i = picks.uniform_index(n);
      const double weight = labels[i] == 1.0 ? w1 : w0;
      numkit::mlp_forward(xi, ut[i], tr);
      batch_loss += weight * bce_term(tr.out[0], labels[i]);
      dy[0] = weight * (tr.out[0] - labels[i]) * invB;
      numkit::mlp_vjp(xi, ut[i], tr, dy, dtheta, true);
    }
    if (!std::isfinite(batch_loss)) throw NumericError("train_compliance: loss diverged");
    numkit::adam_step(opt, xi.theta, dtheta);
  }

  const double end_loss = full_loss();
  if (!std::isfinite(end_loss)) throw NumericError("train_compliance: loss diverged");
  if (!(end_loss < start_loss))
    throw NumericError("train_compliance: loss failed to decrease from initialization");

  model.xi = fold_scaling(xi, u_scale, Scaler{});
  return model;
}

// ---------------------------------------------------------------------------
// Simulated-response loss
// ---------------------------------------------------------------------------

double joint_loss_grad(const JointState& st, const std::vector<Vec>& bases, const Vec& ys,
                       Vec& dg, Vec& dsigma) {
  if (bases.empty()) throw DomainError("joint_loss_grad: empty batch");
  if (bases.size() != ys.size()) throw ShapeError("joint_loss_grad: batch size mismatch");
  const size_t d = bases[0].size();
  if (st.g.in_dim != static_cast<int>(d) || st.sigma.in_dim != static_cast<int>(d) ||
      st.sigma.out_dim != static_cast<int>(d) || st.g.out_dim != 1)
    throw ShapeError("joint_loss_grad: model shapes do not match the data");
  const bool bce = st.loss == "bce";
  if (st.loss != "squared" && !bce)
    throw ConfigError("joint_loss_grad: loss must be 'squared' or 'bce'");
  if (bce != st.g.logistic_out)
    throw ConfigError("joint_loss_grad: loss kind does not match the model head");

  dg.assign(st.g.theta.size(), 0.0);
  dsigma.assign(st.sigma.theta.size(), 0.0);

  const bool deg = st.xi.degenerate;
  const double ymu = st.y_scale.identity() ? 0.0 : st.y_scale.mu[0];
  const double ysd = st.y_scale.identity() ? 1.0 : st.y_scale.sd[0];
  const size_t B = bases.size();
  const double invB = 1.0 / static_cast<double>(B);

  MlpTrace tS, tB, tR, tXi, tP;
  Vec xt, u, xhat(d), ds(d), dy(1), dxi_sink;
  if (!deg) dxi_sink.assign(st.xi.xi.theta.size(), 0.0);

  double loss = 0.0;
  for (size_t i = 0; i < B; ++i) {
    if (bases[i].size() != d) throw ShapeError("joint_loss_grad: ragged batch");
    scale_into(st.x_scale, bases[i], xt);

    numkit::mlp_forward(st.sigma, xt, tS);
    const Vec& s = tS.out;

    double w;
    if (deg) {
      w = st.xi.constant;
    } else {
      numkit::mlp_forward(st.g, xt, tB);
      numkit::mlp_forward(st.g, s, tR);
      const double dgap = ysd * (tB.out[0] - tR.out[0]);
      u.clear();
      u.insert(u.end(), bases[i].begin(), bases[i].end());
      if (st.x_scale.identity()) {
        u.insert(u.end(), s.begin(), s.end());
      } else {
        for (size_t k = 0; k < d; ++k)
          u.push_back(st.x_scale.mu[k] + st.x_scale.sd[k] * s[k]);
      }
      u.push_back(dgap);
      numkit::mlp_forward(st.xi.xi, u, tXi);
      w = tXi.out[0];
    }

    for (size_t k = 0; k < d; ++k) xhat[k] = w * s[k] + (1.0 - w) * xt[k];
    numkit::mlp_forward(st.g, xhat, tP);
    const double pred = tP.out[0];

    bool on_logit;
    if (bce) {
      loss += bce_term(pred, ys[i]);
      dy[0] = (pred - ys[i]) * invB;
      on_logit = true;
    } else {
      const double e = pred - (ys[i] - ymu) / ysd;
      loss += e * e;
      dy[0] = 2.0 * e * invB;
      on_logit = false;
    }

    // Prediction path: adjoint of the blended point splits between the
    // recommendation and the blend weight.
    const Vec a = numkit::mlp_vjp(st.g, xhat, tP, dy, dg, on_logit);
    for (size_t k = 0; k < d; ++k) ds[k] = w * a[k];

    if (!deg) {
      double dw = 0.0;
      for (size_t k = 0; k < d; ++k) dw += a[k] * (s[k] - xt[k]);
      dy[0] = dw;
      const Vec du = numkit::mlp_vjp(st.xi.xi, u, tXi, dy, dxi_sink, false);
      // The compliance net sees the raw recommendation and the disclosed gap;
      // both depend on the policy. The base block is data, so it is dropped.
      for (size_t k = 0; k < d; ++k)
        ds[k] += du[d + k] * (st.x_scale.identity() ? 1.0 : st.x_scale.sd[k]);
      const double dgap_adj = du[2 * d];
      if (dgap_adj != 0.0) {
        dy[0] = dgap_adj * ysd;
        numkit::mlp_vjp(st.g, xt, tB, dy, dg, false);
        dy[0] = -dgap_adj * ysd;
        const Vec ar = numkit::mlp_vjp(st.g, s, tR, dy, dg, false);
        for (size_t k = 0; k < d; ++k) ds[k] += ar[k];
      }
    }

    numkit::mlp_vjp(st.sigma, xt, tS, ds, dsigma, false);
  }
  return loss * invB;
}

// ---------------------------------------------------------------------------
// Deployment rounds
// ---------------------------------------------------------------------------

namespace {

template <typename RecFn>
Deployment run_deployment(const Environment& env, const std::vector<AgentRecord>& pop,
                          const ScalarModel& g, uint64_t seed, uint64_t outcome_tag,
                          RecFn&& recommend) {
  agents::UtilityContext ctx;
  ctx.g = &g;
  ctx.sign = env.sign;
  Deployment dep;
  const size_t n = pop.size();
  dep.xs.resize(n);
  dep.ys.resize(n);
  dep.base_means.resize(n);
  size_t adopted = 0;
  for (size_t t = 0; t < n; ++t) {
    const AgentRecord& a = pop[t];
    const explain::ArexRec rec = recommend(a);
    const agents::ArexOutcome r = agents::arex_response(ctx, a, rec);
    if (r.adopted) ++adopted;
    dep.xs[t] = r.x;
    dep.base_means[t] = env.h.mean(a.base, a.z);
    dep.ys[t] = observe(env, r.x, a.z, seed, t, outcome_tag);
  }
  dep.compliance = n == 0 ? 0.0 : static_cast<double>(adopted) / static_cast<double>(n);
  return dep;
}

}  // namespace

Deployment deploy_policy(const Environment& env, const std::vector<AgentRecord>& pop,
                         const ScalarModel& g, const MlpParams& sigma, uint64_t seed,
                         uint64_t outcome_tag) {
  require_env(env, "deploy_policy");
  return run_deployment(env, pop, g, seed, outcome_tag, [&](const AgentRecord& a) {
    return explain::arex_policy_recommend(sigma, g, a.base);
  });
}

Deployment deploy_fixed_ce(const Environment& env, const std::vector<AgentRecord>& pop,
                           const ScalarModel& g, double lambda, const RRMConfig& cfg,
                           uint64_t seed, uint64_t outcome_tag) {
  require_env(env, "deploy_fixed_ce");
  explain::CeConfig ce;
  ce.lambda = lambda;
  ce.steps = cfg.ce_steps;
  ce.lr = cfg.ce_lr;
  ce.sign = env.sign;
  return run_deployment(env, pop, g, seed, outcome_tag, [&](const AgentRecord& a) {
    return explain::counterfactual_explain(g, a.base, ce, env.constraints);
  });
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

// Mean loss and gradient of the model alone on realized covariates, the
// baseline arms' inner objective.
double plain_loss_grad(const MlpParams& g, const Scaler& x_scale, const Scaler& y_scale,
                       bool bce, const std::vector<Vec>& xs, const Vec& ys, Vec& dg) {
  dg.assign(g.theta.size(), 0.0);
  const double ymu = y_scale.identity() ? 0.0 : y_scale.mu[0];
  const double ysd = y_scale.identity() ? 1.0 : y_scale.sd[0];
  const size_t B = xs.size();
  const double invB = 1.0 / static_cast<double>(B);
  MlpTrace tr;
  Vec xt, dy(1);
  double loss = 0.0;
  for (size_t i = 0; i < B; ++i) {
    scale_into(x_scale, xs[i], xt);
    numkit::mlp_forward(g, xt, tr);
    if (bce) {
      loss += bce_term(tr.out[0], ys[i]);
      dy[0] = (tr.out[0] - ys[i]) * invB;
      numkit::mlp_vjp(g, xt, tr, dy, dg, true);
    } else {
      const double e = tr.out[0] - (ys[i] - ymu) / ysd;
      loss += e * e;
      dy[0] = 2.0 * e * invB;
      numkit::mlp_vjp(g, xt, tr, dy, dg, false);
    }
  }
  return loss * invB;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// D1: agents observed at rest, before anything is deployed.
void draw_pretrain_data(const Environment& env, const RRMConfig& cfg, std::vector<Vec>& xs,
                        Vec& ys) {
  const std::vector<AgentRecord> pop = env.draw(cfg.pretrain, stream::kPretrainDraw);
  xs.resize(pop.size());
  ys.resize(pop.size());
  for (size_t t = 0; t < pop.size(); ++t) {
    xs[t] = pop[t].base;
    ys[t] = observe(env, pop[t].base, pop[t].z, cfg.seed, t, stream::kPretrainOutcome);
  }
}

double mean_of(const Vec& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

}  // namespace

RRMState rrm_joint(const RRMConfig& cfg, const Environment& env) {
  cfg.validate();
  require_env(env, "rrm_joint");
  const bool bce = cfg.loss == "bce";

  std::vector<Vec> xs1;
  Vec ys1;
  draw_pretrain_data(env, cfg, xs1, ys1);
  PretrainResult pre = pretrain(xs1, ys1, cfg);

  RRMState st;
  st.norm_const = bce ? 1.0 : mean_of(ys1);

  // Compliance logging under the pretrained pair, then one frozen fit.
  {
    const MlpParams g0 = fold_scaling(pre.g, pre.x_scale, pre.y_scale);
    const MlpParams s0 = fold_scaling(pre.sigma, pre.x_scale, pre.x_scale);
    const ScalarModel gm = mlp_model(g0);
    explain::ArexSampler sampler;
    sampler.rule = explain::ArexSampler::CenterRule::MixOfThree;
    sampler.stddev = cfg.sampler_stddev;
    sampler.policy = &s0;
    sampler.ce.lambda = 1.0;
    sampler.ce.steps = cfg.ce_steps;
    sampler.ce.lr = cfg.ce_lr;
    sampler.ce.sign = env.sign;
    if (!env.constraints.empty()) sampler.constraints = &env.constraints;
    const std::vector<AgentRecord> pool = env.draw(cfg.compliance, stream::kCompliancePool);
    const std::vector<ComplianceSample> d2 =
        collect_compliance(pool, gm, sampler, env.sign, cfg.seed);
    st.xi = train_compliance(d2, cfg.xi_weight0, cfg.xi_weight1, cfg);
    st.has_xi = true;
  }

  JointState js;
  js.g = pre.g;
  js.sigma = pre.sigma;
  js.x_scale = pre.x_scale;
  js.y_scale = pre.y_scale;
  js.xi = st.xi;
  js.loss = cfg.loss;

  const double raw_scale = bce ? 1.0 : js.y_scale.sd[0] * js.y_scale.sd[0];
  std::vector<Vec> batch_x;
  Vec batch_y, dgv, dsv;
  for (size_t i = 0; i < cfg.iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const MlpParams gi = fold_scaling(js.g, js.x_scale, js.y_scale);
      const MlpParams si = fold_scaling(js.sigma, js.x_scale, js.x_scale);
      const ScalarModel gm = mlp_model(gi);
      const std::vector<AgentRecord> pop = env.draw(cfg.batch_at(i), stream::kDeployBase + i);
      const Deployment dep =
          deploy_policy(env, pop, gm, si, cfg.seed, stream::kDeployOutcome + i);
      st.compliance_log.push_back(dep.compliance);

      std::vector<Vec> bx(pop.size());
      for (size_t t = 0; t < pop.size(); ++t) bx[t] = pop[t].base;

      AdamState opt_g(js.g.theta.size(), cfg.lr);
      const double s_base = cfg.sigma_lr > 0.0 ? cfg.sigma_lr : cfg.lr;
      AdamState opt_s(js.sigma.theta.size(),
                      s_base * std::pow(cfg.sigma_lr_decay, static_cast<double>(i)));
      Rng picks(cfg.seed, 0, stream::kInnerBatch + i);
      const size_t B = std::min(cfg.minibatch, pop.size());
      batch_x.resize(B);
      batch_y.resize(B);
      double acc = 0.0;
      for (size_t step = 0; step < cfg.inner_steps; ++step) {
        for (size_t b = 0; b < B; ++b) {
          const size_t idx = picks.uniform_index(pop.size());
          batch_x[b] = bx[idx];
          batch_y[b] = dep.ys[idx];
        }
        const double L = joint_loss_grad(js, batch_x, batch_y, dgv, dsv);
        if (!std::isfinite(L)) throw NumericError("loss is not finite");
        numkit::adam_step(opt_g, js.g.theta, dgv);
        numkit::adam_step(opt_s, js.sigma.theta, dsv);
        acc += L * raw_scale;
      }
      st.loss_log.push_back(acc / static_cast<double>(cfg.inner_steps));
    } catch (const NumericError& e) {
      throw NumericError("rrm_joint: diverged at iteration " + std::to_string(i) + ": " +
                         e.what());
    }
    st.seconds_log.push_back(seconds_since(t0));
  }

  st.g = fold_scaling(js.g, js.x_scale, js.y_scale);
  st.sigma = fold_scaling(js.sigma, js.x_scale, js.x_scale);
  st.has_sigma = true;
  return st;
}

RRMState rrm_fixed_ce(const RRMConfig& cfg, double lambda, const Environment& env) {
  cfg.validate();
  require_env(env, "rrm_fixed_ce");
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw ConfigError("rrm_fixed_ce: lambda must be positive");
  const bool bce = cfg.loss == "bce";

  std::vector<Vec> xs1;
  Vec ys1;
  draw_pretrain_data(env, cfg, xs1, ys1);
  PretrainResult pre = pretrain(xs1, ys1, cfg);

  RRMState st;
  st.norm_const = bce ? 1.0 : mean_of(ys1);

  MlpParams g = pre.g;
  const double raw_scale = bce ? 1.0 : pre.y_scale.sd[0] * pre.y_scale.sd[0];
  std::vector<Vec> batch_x;
  Vec batch_y, dgv;
  for (size_t i = 0; i < cfg.iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const MlpParams gi = fold_scaling(g, pre.x_scale, pre.y_scale);
      const ScalarModel gm = mlp_model(gi);
      const std::vector<AgentRecord> pop = env.draw(cfg.batch_at(i), stream::kDeployBase + i);
      const Deployment dep =
          deploy_fixed_ce(env, pop, gm, lambda, cfg, cfg.seed, stream::kDeployOutcome + i);
      st.compliance_log.push_back(dep.compliance);

      AdamState opt(g.theta.size(), cfg.lr);
      Rng picks(cfg.seed, 0, stream::kInnerBatch + i);
      const size_t B = std::min(cfg.minibatch, pop.size());
      batch_x.resize(B);
      batch_y.resize(B);
      double acc = 0.0;
      for (size_t step = 0; step < cfg.inner_steps; ++step) {
        for (size_t b = 0; b < B; ++b) {
          const size_t idx = picks.uniform_index(pop.size());
          batch_x[b] = dep.xs[idx];
          batch_y[b] = dep.ys[idx];
        }
        const double L =
            plain_loss_grad(g, pre.x_scale, pre.y_scale, bce, batch_x, batch_y, dgv);
        if (!std::isfinite(L)) throw NumericError("loss is not finite");
        numkit::adam_step(opt, g.theta, dgv);
        acc += L * raw_scale;
      }
      st.loss_log.push_back(acc / static_cast<double>(cfg.inner_steps));
    } catch (const NumericError& e) {
      throw NumericError("rrm_fixed_ce: diverged at iteration " + std::to_string(i) + ": " +
                         e.what());
    }
    st.seconds_log.push_back(seconds_since(t0));
  }

  st.g = fold_scaling(g, pre.x_scale, pre.y_scale);
  return st;
}

// ---------------------------------------------------------------------------
// Logging
// ---------------------------------------------------------------------------

void write_rrm_log(const std::string& path, const RRMState& st, bool with_seconds) {
  const size_t n = st.loss_log.size();
  if (st.compliance_log.size() != n || st.seconds_log.size() != n)
    throw ShapeError("write_rrm_log: log lengths differ");
  std::ofstream out(path);
  if (!out) throw ConfigError("write_rrm_log: cannot open " + path);
  out << "iteration\tloss\tcompliance";
  if (with_seconds) out << "\tseconds";
  out << "\n";
  char buf[64];
  for (size_t i = 0; i < n; ++i) {
    out << i;
    std::snprintf(buf, sizeof buf, "%.17g", st.loss_log[i]);
    out << '\t' << buf;
    std::snprintf(buf, sizeof buf, "%.17g", st.compliance_log[i]);
    out << '\t' << buf;
    if (with_seconds) {
      std::snprintf(buf, sizeof buf, "%.17g", st.seconds_log[i]);
      out << '\t' << buf;
    }
    out << "\n";
  }
  if (!out.good()) throw ConfigError("write_rrm_log: write failed for " + path);
}

}  // namespace arex::train
