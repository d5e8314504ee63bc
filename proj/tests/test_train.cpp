#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "arex/dataio.hpp"
#include "arex/optim.hpp"
#include "arex/train.hpp"

using namespace arex;
using agents::AgentRecord;
using agents::BenefitSign;
using agents::CostSpec;
using agents::OutcomeFunction;

namespace {

// Two-feature population with a quadratic outcome surface. frozen = true
// freezes every feature (any move is infeasible), which turns each training
// loop into ordinary risk minimization on resting agents.
train::Environment make_test_env(uint64_t seed, bool frozen, double alpha = 0.05) {
  train::Environment env;
  env.draw = [seed, frozen, alpha](size_t n, uint64_t stream) {
    std::vector<AgentRecord> out(n);
    for (size_t t = 0; t < n; ++t) {
      numkit::Rng rng(seed, (stream << 20) + t, 0x71);
      AgentRecord& a = out[t];
      a.base = Vec{rng.gaussian(), rng.gaussian()};
      a.z = 0.0;
      a.cost = frozen ? CostSpec::weighted_l1(0.01, {}, Vec{-6.0, -6.0}, Vec{6.0, 6.0})
                      : CostSpec::quadratic(alpha);
      a.reaction = agents::ReactionKind::ARexChooser;
    }
    return out;
  };
  env.h.kind = OutcomeFunction::Kind::Quadratic;
  env.h.c0 = 0.5;
  env.h.lin = Vec{0.4, -0.3, 0.0};
  env.h.quad = {Vec{0.2, 0.05, 0.0}, Vec{0.05, -0.1, 0.0}, Vec{0.0, 0.0, 0.0}};
  env.sign = BenefitSign::LowerIsBetter;
  env.constraints.lower = Vec{-4.0, -4.0};
  env.constraints.upper = Vec{4.0, 4.0};
  env.x_dim = 2;
  env.stochastic_outcome = false;
  return env;
}

// Plain risk minimization on resting agents, replicated through the public
// stream layout. The reference for the frozen-cost reduction and the
// dominant-proximity limit.
std::vector<double> static_oracle(const train::RRMConfig& cfg, const train::Environment& env) {
  const std::vector<AgentRecord> pop1 = env.draw(cfg.pretrain, train::stream::kPretrainDraw);
  std::vector<Vec> xs(pop1.size());
  Vec ys(pop1.size());
  for (size_t t = 0; t < pop1.size(); ++t) {
    xs[t] = pop1[t].base;
    ys[t] = env.h.mean(pop1[t].base, pop1[t].z);
  }
  train::PretrainResult pre = train::pretrain(xs, ys, cfg);
  const double mu = pre.y_scale.mu[0];
  const double sd = pre.y_scale.sd[0];
  const double raw = sd * sd;

  numkit::MlpParams g = pre.g;
  std::vector<double> log;
  numkit::MlpTrace tr;
  Vec dy(1);
  for (size_t i = 0; i < cfg.iterations; ++i) {
    const std::vector<AgentRecord> pop = env.draw(cfg.batch_at(i), train::stream::kDeployBase + i);
    const size_t n = pop.size();
    std::vector<Vec> xt(n);
    Vec yt(n);
    for (size_t t = 0; t < n; ++t) {
      xt[t] = train::apply_scaler(pre.x_scale, pop[t].base);
      yt[t] = (env.h.mean(pop[t].base, pop[t].z) - mu) / sd;
    }
    numkit::AdamState opt(g.theta.size(), cfg.lr);
    numkit::Rng picks(cfg.seed, 0, train::stream::kInnerBatch + i);
    const size_t B = std::min(cfg.minibatch, n);
    const double invB = 1.0 / static_cast<double>(B);
    Vec dtheta(g.theta.size());
    double acc = 0.0;
    for (size_t step = 0; step < cfg.inner_steps; ++step) {
      std::fill(dtheta.begin(), dtheta.end(), 0.0);
      double loss = 0.0;
      for (size_t b = 0; b < B; ++b) {
        const size_t idx = picks.uniform_index(n);
        numkit::mlp_forward(g, xt[idx], tr);
        const double e = tr.out[0] - yt[idx];
        loss += e * e;
        dy[0] = 2.0 * e * invB;
        numkit::mlp_vjp(g, xt[idx], tr, dy, dtheta, false);
      }
      numkit::adam_step(opt, g.theta, dtheta);
      acc += loss * invB * raw;
    }
    log.push_back(acc / static_cast<double>(cfg.inner_steps));
  }
  return log;
}

train::RRMConfig mini_config() {
  train::RRMConfig cfg;
  cfg.iterations = 3;
  cfg.batch = 80;
  cfg.pretrain = 120;
  cfg.compliance = 100;
  cfg.hidden = 8;
  cfg.inner_steps = 40;
  cfg.minibatch = 32;
  cfg.pretrain_steps = 250;
  cfg.xi_steps = 250;
  cfg.sampler_stddev = 1.0;
  cfg.ce_steps = 12;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("fit_scaler centers columns and guards constant ones") {
  std::vector<Vec> rows{Vec{0.0, 10.0}, Vec{2.0, 10.0}};
  const train::Scaler s = train::fit_scaler(rows);
  CHECK(s.mu[0] == 1.0);
  CHECK(s.mu[1] == 10.0);
  CHECK(s.sd[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.sd[1] == 1.0);  // constant column, widened
  const Vec scaled = train::apply_scaler(s, Vec{3.0, 10.0});
  CHECK(scaled[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(scaled[1] == 0.0);
  CHECK_THROWS_AS(train::fit_scaler({}), DomainError);
  CHECK_THROWS_AS(train::fit_scaler({Vec{1.0}, Vec{1.0, 2.0}}), ShapeError);
}

TEST_CASE("fold_scaling reproduces scale-then-evaluate-then-unscale") {
  numkit::Rng rng(42, 0, 0);
  numkit::MlpParams net = numkit::mlp_init(3, 4, 2, false, rng);
  train::Scaler in{Vec{1.0, -2.0, 0.5}, Vec{2.0, 0.25, 1.5}};
  train::Scaler out{Vec{10.0, -3.0}, Vec{4.0, 0.5}};
  const numkit::MlpParams folded = train::fold_scaling(net, in, out);

  numkit::MlpTrace t1, t2;
  for (int trial = 0; trial < 20; ++trial) {
    Vec x{rng.gaussian(), rng.gaussian(), rng.gaussian()};
    numkit::mlp_forward(folded, x, t1);
    numkit::mlp_forward(net, train::apply_scaler(in, x), t2);
    for (size_t r = 0; r < 2; ++r) {
      const double want = out.mu[r] + out.sd[r] * t2.out[r];
      CHECK(t1.out[r] == doctest::Approx(want).epsilon(1e-12));
    }
  }

  // Identity scalers leave the parameters untouched.
  const numkit::MlpParams same = train::fold_scaling(net, train::Scaler{}, train::Scaler{});
  CHECK(same.theta == net.theta);

  numkit::MlpParams logit = numkit::mlp_init(3, 4, 1, true, rng);
  CHECK_THROWS_AS(train::fold_scaling(logit, train::Scaler{}, train::Scaler{Vec{0.0}, Vec{2.0}}),
                  ConfigError);
  CHECK_THROWS_AS(train::fold_scaling(net, train::Scaler{Vec{0.0}, Vec{1.0}}, train::Scaler{}),
                  ShapeError);
}

TEST_CASE("pretrain fits linear data and teaches the policy the identity map") {
  numkit::Rng rng(7, 0, 1);
  const size_t n = 320;
  std::vector<Vec> xs(n);
  Vec ys(n);
  for (size_t i = 0; i < n; ++i) {
    xs[i] = Vec{rng.uniform(-2.0, 4.0), rng.uniform(-2.0, 4.0), rng.uniform(-2.0, 4.0)};
    ys[i] = 2.0 * xs[i][0] - xs[i][1] + 0.5 * xs[i][2] + 3.0;
  }
  train::RRMConfig cfg;
  cfg.hidden = 16;
  cfg.pretrain_steps = 2500;
  cfg.minibatch = 64;
  cfg.lr = 3e-3;
  cfg.seed = 11;

  const train::PretrainResult res = train::pretrain(xs, ys, cfg);

  // Loss in scaled space, start measured at the same seeded initialization.
  numkit::Rng init(cfg.seed, 0, train::stream::kInitG);
  const numkit::MlpParams g0 =
      numkit::mlp_init(3, static_cast<int>(cfg.hidden), 1, false, init);
  double start = 0.0, final = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec xt = train::apply_scaler(res.x_scale, xs[i]);
    const double yt = (ys[i] - res.y_scale.mu[0]) / res.y_scale.sd[0];
    const double e0 = numkit::mlp_value(g0, xt) - yt;
    const double e1 = numkit::mlp_value(res.g, xt) - yt;
    start += e0 * e0;
    final += e1 * e1;
  }
  CHECK(final < 1e-3 * start);

  // Policy imitation quality in raw units.
  const numkit::MlpParams sig = train::fold_scaling(res.sigma, res.x_scale, res.x_scale);
  numkit::MlpTrace tr;
  double drift = 0.0, norm = 0.0;
  for (size_t i = 0; i < n; ++i) {
    numkit::mlp_forward(sig, xs[i], tr);
    double d2 = 0.0, n2 = 0.0;
    for (size_t k = 0; k < 3; ++k) {
      d2 += (tr.out[k] - xs[i][k]) * (tr.out[k] - xs[i][k]);
      n2 += xs[i][k] * xs[i][k];
    }
    drift += std::sqrt(d2);
    norm += std::sqrt(n2);
  }
  CHECK(drift < 0.1 * norm);
}

TEST_CASE("pretrain rejects bad input and reports divergence") {
  train::RRMConfig cfg;
  cfg.pretrain_steps = 50;
  CHECK_THROWS_AS(train::pretrain({}, Vec{}, cfg), DomainError);
  CHECK_THROWS_AS(train::pretrain({Vec{1.0}}, Vec{1.0, 2.0}, cfg), ShapeError);

  std::vector<Vec> xs{Vec{0.0}, Vec{1.0}, Vec{2.0}};
  Vec bad{1.0, std::numeric_limits<double>::infinity(), 0.0};
  CHECK_THROWS_AS(train::pretrain(xs, bad, cfg), NumericError);

  train::RRMConfig bce = cfg;
  bce.loss = "bce";
  CHECK_THROWS_AS(train::pretrain(xs, Vec{0.0, 0.5, 1.0}, bce), DomainError);
}

TEST_CASE("collect_compliance adopts ties and rejects infeasible recommendations") {
  const ScalarModel g = poly1d_model(Vec{1.0, 0.0, -1.0, 0.0, 1.0});
  const std::vector<AgentRecord> pop = dataio::gen_noharm_population(40, 3);

  explain::ArexSampler tiny;
  tiny.rule = explain::ArexSampler::CenterRule::Base;
  tiny.stddev = 1e-30;  // perturbation rounds away: recommendations tie with staying put
  const auto ties =
      train::collect_compliance(pop, g, tiny, BenefitSign::LowerIsBetter, 17);
  REQUIRE(ties.size() == pop.size());
  for (const auto& s : ties) {
    CHECK(s.rec == s.base);
    CHECK(s.w == 1.0);
    CHECK(s.dg == 0.0);
  }

  // Frozen features make every off-base recommendation infeasible.
  std::vector<AgentRecord> frozen(25);
  for (auto& a : frozen) {
    a.base = Vec{0.0, 0.0};
    a.cost = CostSpec::weighted_l1(0.01, {0}, Vec{-5.0, -5.0}, Vec{5.0, 5.0});
    a.reaction = agents::ReactionKind::ARexChooser;
  }
  const ScalarModel lin = affine_model(Vec{1.0, 0.0}, 0.0);
  explain::ArexSampler far;
  far.rule = explain::ArexSampler::CenterRule::Fixed;
  far.fixed_center = Vec{3.0, 3.0};
  far.stddev = 0.5;
  const auto rejected =
      train::collect_compliance(frozen, lin, far, BenefitSign::LowerIsBetter, 17);
  for (const auto& s : rejected) CHECK(s.w == 0.0);

  // Same seed, same log.
  const auto again =
      train::collect_compliance(pop, g, tiny, BenefitSign::LowerIsBetter, 17);
  for (size_t t = 0; t < pop.size(); ++t) {
    CHECK(again[t].base == ties[t].base);
    CHECK(again[t].rec == ties[t].rec);
    CHECK(again[t].dg == ties[t].dg);
    CHECK(again[t].w == ties[t].w);
  }
}

TEST_CASE("train_compliance separates a margin-separated log") {
  numkit::Rng rng(23, 0, 2);
  std::vector<train::ComplianceSample> all;
  while (all.size() < 500) {
    const double dg = rng.uniform(-2.0, 2.0);
    if (std::fabs(dg - 0.3) < 0.1) continue;  // keep a margin around the boundary
    train::ComplianceSample s;
    s.base = Vec{rng.gaussian(), rng.gaussian()};
    s.rec = Vec{s.base[0] + rng.gaussian(), s.base[1] + rng.gaussian()};
    s.dg = dg;
    s.w = dg > 0.3 ? 1.0 : 0.0;
    all.push_back(s);
  }
  std::vector<train::ComplianceSample> fit(all.begin(), all.begin() + 400);
  train::RRMConfig cfg;
  cfg.hidden = 8;
  cfg.xi_steps = 1500;
  cfg.seed = 2;
  const train::ComplianceModel xi = train::train_compliance(fit, -1.0, -1.0, cfg);
  CHECK_FALSE(xi.degenerate);

  size_t hits = 0;
  for (size_t i = 400; i < all.size(); ++i) {
    const double p = xi.predict(all[i].base, all[i].rec, all[i].dg);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    if ((p >= 0.5) == (all[i].w == 1.0)) ++hits;
  }
  CHECK(static_cast<double>(hits) / 100.0 > 0.95);
}

TEST_CASE("train_compliance degenerate labels and weight conventions") {
  train::RRMConfig cfg;
  cfg.hidden = 8;
  cfg.xi_steps = 200;
  cfg.seed = 2;

  std::vector<train::ComplianceSample> ones(30);
  for (size_t i = 0; i < ones.size(); ++i) {
    ones[i].base = Vec{static_cast<double>(i)};
    ones[i].rec = Vec{static_cast<double>(i) + 1.0};
    ones[i].dg = 0.5;
    ones[i].w = 1.0;
  }
  const train::ComplianceModel deg = train::train_compliance(ones, -1.0, -1.0, cfg);
  CHECK(deg.degenerate);
  CHECK(deg.constant == 1.0);
  CHECK(deg.predict(Vec{9.0}, Vec{1.0}, -2.0) == 1.0);

  // Balanced labels: inverse-frequency weights resolve to (1, 1), so the
  // explicit unit weights must train the identical net.
  numkit::Rng rng(4, 0, 9);
  std::vector<train::ComplianceSample> balanced;
  for (size_t i = 0; i < 120; ++i) {
    train::ComplianceSample s;
    s.base = Vec{rng.gaussian()};
    s.rec = Vec{rng.gaussian()};
    s.dg = rng.gaussian() + (i % 2 == 0 ? 1.5 : -1.5);
    s.w = i % 2 == 0 ? 1.0 : 0.0;
    balanced.push_back(s);
  }
  const train::ComplianceModel a = train::train_compliance(balanced, -1.0, -1.0, cfg);
  const train::ComplianceModel b = train::train_compliance(balanced, 1.0, 1.0, cfg);
  CHECK(a.xi.theta == b.xi.theta);

  CHECK_THROWS_AS(train::train_compliance({}, -1.0, -1.0, cfg), DomainError);
  std::vector<train::ComplianceSample> bad(3, ones[0]);
  bad[1].w = 0.25;
  CHECK_THROWS_AS(train::train_compliance(bad, -1.0, -1.0, cfg), DomainError);
}

TEST_CASE("simulate_response blends softly and snaps hard") {
  const ScalarModel g = affine_model(Vec{1.0}, 0.0);
  train::ComplianceModel always;
  always.degenerate = true;
  always.constant = 1.0;
  const Vec base{0.25};
  const Vec rec{2.5};

  train::ResponsePair adopt = train::simulate_response(always, g, base, rec);
  CHECK(adopt.soft == rec);
  CHECK(adopt.hard == rec);
  CHECK(adopt.adopt_hard);

  train::ComplianceModel never;
  never.degenerate = true;
  never.constant = 0.0;
  train::ResponsePair stay = train::simulate_response(never, g, base, rec);
  CHECK(stay.soft == base);
  CHECK(stay.hard == base);
  CHECK_FALSE(stay.adopt_hard);

  train::ComplianceModel half;
  half.degenerate = true;
  half.constant = 0.5;
  train::ResponsePair mid = train::simulate_response(half, g, Vec{0.0}, Vec{2.0});
  CHECK(mid.soft == Vec{1.0});
  CHECK(mid.hard == Vec{2.0});  // 0.5 rounds toward adoption
  CHECK(mid.adopt_hard);

  CHECK_THROWS_AS(train::simulate_response(half, g, Vec{0.0, 1.0}, Vec{2.0}), ShapeError);
}

TEST_CASE("joint loss gradient matches central finite differences on a micro-batch") {
  numkit::Rng rng(31, 0, 4);
  std::vector<Vec> bases{Vec{rng.gaussian(), rng.gaussian()},
                         Vec{rng.gaussian() + 1.0, rng.gaussian()},
                         Vec{rng.gaussian(), rng.gaussian() - 1.0}};

  // A responsive compliance net trained on a quick mixed-label log.
  std::vector<train::ComplianceSample> log;
  for (size_t i = 0; i < 60; ++i) {
    train::ComplianceSample s;
    s.base = Vec{rng.gaussian(), rng.gaussian()};
    s.rec = Vec{rng.gaussian(), rng.gaussian()};
    s.dg = rng.gaussian();
    s.w = s.dg > 0.0 ? 1.0 : 0.0;
    log.push_back(s);
  }
  train::RRMConfig xcfg;
  xcfg.hidden = 4;
  xcfg.xi_steps = 300;
  xcfg.seed = 8;
  const train::ComplianceModel xi = train::train_compliance(log, -1.0, -1.0, xcfg);
  REQUIRE_FALSE(xi.degenerate);

  auto fd_check = [&](const std::string& loss, bool logistic, const Vec& ys) {
    train::JointState st;
    numkit::Rng gi(3, 0, 100), si(3, 0, 101);
    st.g = numkit::mlp_init(2, 4, 1, logistic, gi);
    st.sigma = numkit::mlp_init(2, 4, 2, false, si);
    st.x_scale = train::fit_scaler(bases);
    if (loss == "squared") st.y_scale = train::Scaler{Vec{0.3}, Vec{1.7}};
    st.xi = xi;
    st.loss = loss;

    Vec dg, ds;
    train::joint_loss_grad(st, bases, ys, dg, ds);

    double max_ds = 0.0;
    for (double v : ds) max_ds = std::max(max_ds, std::fabs(v));
    CHECK(max_ds > 1e-8);  // the policy receives gradient signal

    const double eps = 1e-5;
    double worst = 0.0;
    Vec d1, d2;
    auto probe = [&](numkit::MlpParams train::JointState::*which, const Vec& analytic) {
      train::JointState pert = st;
      numkit::MlpParams& net = pert.*which;
      for (size_t j = 0; j < net.theta.size(); ++j) {
        const double keep = net.theta[j];
        net.theta[j] = keep + eps;
        const double up = train::joint_loss_grad(pert, bases, ys, d1, d2);
        net.theta[j] = keep - eps;
        const double dn = train::joint_loss_grad(pert, bases, ys, d1, d2);
        net.theta[j] = keep;
        const double fd = (up - dn) / (2.0 * eps);
        const double rel =
            std::fabs(fd - analytic[j]) / std::max({std::fabs(fd), std::fabs(analytic[j]), 1e-8});
        worst = std::max(worst, rel);
      }
    };
    probe(&train::JointState::g, dg);
    probe(&train::JointState::sigma, ds);
    CHECK(worst < 1e-4);
  };

  fd_check("squared", false, Vec{0.7, -0.4, 1.2});
  fd_check("bce", true, Vec{1.0, 0.0, 1.0});
}

TEST_CASE("frozen costs reduce both loops to plain risk minimization") {
  const train::Environment env = make_test_env(19, /*frozen=*/true);
  const train::RRMConfig cfg = mini_config();

  const std::vector<double> oracle = static_oracle(cfg, env);
  const train::RRMState joint = train::rrm_joint(cfg, env);
  const train::RRMState ce = train::rrm_fixed_ce(cfg, 1.0, env);

  REQUIRE(joint.loss_log.size() == cfg.iterations);
  REQUIRE(ce.loss_log.size() == cfg.iterations);
  for (size_t i = 0; i < cfg.iterations; ++i) {
    CHECK(std::fabs(joint.loss_log[i] - oracle[i]) <= 1e-6);
    CHECK(std::fabs(ce.loss_log[i] - oracle[i]) <= 1e-6);
    CHECK(joint.compliance_log[i] == 0.0);
    CHECK(ce.compliance_log[i] == 0.0);
  }
  CHECK(joint.has_xi);
  CHECK(joint.xi.degenerate);
  CHECK(joint.xi.constant == 0.0);
  CHECK(joint.has_sigma);
  CHECK_FALSE(ce.has_sigma);
}

TEST_CASE("dominant proximity collapses the counterfactual arm to the static oracle") {
  const train::Environment env = make_test_env(29, /*frozen=*/false);
  const train::RRMConfig cfg = mini_config();

  const std::vector<double> oracle = static_oracle(cfg, env);
  const train::RRMState st = train::rrm_fixed_ce(cfg, 1e6, env);
  REQUIRE(st.loss_log.size() == cfg.iterations);
  for (size_t i = 0; i < cfg.iterations; ++i) {
    CHECK(std::fabs(st.loss_log[i] - oracle[i]) <= 1e-4);
    // Recommendations collapse onto the base point, and ties adopt.
    CHECK(st.compliance_log[i] == 1.0);
  }
}

TEST_CASE("distinct proximity weights produce distinct loss curves, each replayable") {
  const train::Environment env = make_test_env(37, /*frozen=*/false);
  const train::RRMConfig cfg = mini_config();

  const train::RRMState loose = train::rrm_fixed_ce(cfg, 0.1, env);
  const train::RRMState tight = train::rrm_fixed_ce(cfg, 4.0, env);
  double gap = 0.0;
  for (size_t i = 0; i < cfg.iterations; ++i)
    gap = std::max(gap, std::fabs(loose.loss_log[i] - tight.loss_log[i]));
  CHECK(gap > 1e-9);

  const train::RRMState replay = train::rrm_fixed_ce(cfg, 0.1, env);
  CHECK(replay.loss_log == loose.loss_log);
  CHECK(replay.compliance_log == loose.compliance_log);
  CHECK(replay.g.theta == loose.g.theta);

  CHECK_THROWS_AS(train::rrm_fixed_ce(cfg, 0.0, env), ConfigError);
}

TEST_CASE("joint loop on mobile agents: shapes, replay, seed sensitivity") {
  const train::Environment env = make_test_env(41, /*frozen=*/false);
  train::RRMConfig cfg = mini_config();
  cfg.iterations = 2;

  const train::RRMState a = train::rrm_joint(cfg, env);
  REQUIRE(a.loss_log.size() == 2);
  REQUIRE(a.compliance_log.size() == 2);
  REQUIRE(a.seconds_log.size() == 2);
  for (double l : a.loss_log) CHECK(std::isfinite(l));
  for (double c : a.compliance_log) {
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
  CHECK(a.has_sigma);
  CHECK(a.sigma.out_dim == 2);

  const train::RRMState b = train::rrm_joint(cfg, env);
  CHECK(b.loss_log == a.loss_log);
  CHECK(b.compliance_log == a.compliance_log);
  CHECK(b.g.theta == a.g.theta);
  CHECK(b.sigma.theta == a.sigma.theta);

  train::RRMConfig other = cfg;
  other.seed = 6;
  const train::RRMState c = train::rrm_joint(other, env);
  CHECK(c.loss_log != a.loss_log);

  train::RRMConfig single = cfg;
  single.iterations = 1;
  single.batch_sizes = {60};
  const train::RRMState one = train::rrm_joint(single, env);
  CHECK(one.loss_log.size() == 1);
}

TEST_CASE("deployment against frozen agents keeps everyone at rest") {
  const train::Environment env = make_test_env(53, /*frozen=*/true);
  const std::vector<AgentRecord> pop = env.draw(20, 9);
  const ScalarModel g = affine_model(Vec{0.5, -0.2}, 0.1);
  numkit::Rng rng(1, 0, 7);
  const numkit::MlpParams sigma = numkit::mlp_init(2, 4, 2, false, rng);

  const train::Deployment dep = train::deploy_policy(env, pop, g, sigma, 3, 0x99);
  REQUIRE(dep.xs.size() == pop.size());
  CHECK(dep.compliance == 0.0);
  for (size_t t = 0; t < pop.size(); ++t) {
    CHECK(dep.xs[t] == pop[t].base);
    CHECK(dep.ys[t] == env.h.mean(pop[t].base, 0.0));
    CHECK(dep.base_means[t] == dep.ys[t]);
  }
}

TEST_CASE("synthetic environment slices agents deterministically per stream") {
  const train::Environment env = train::make_synthetic_environment(
      21, Vec{0.0, 0.0, 0.0}, Vec{25.0, 25.0, 25.0});
  CHECK(env.x_dim == 3);
  CHECK(env.sign == BenefitSign::LowerIsBetter);
  CHECK_FALSE(env.stochastic_outcome);
  CHECK(env.constraints.lower.size() == 3);

  const auto a1 = env.draw(5, 1);
  const auto a2 = env.draw(5, 1);
  const auto b = env.draw(5, 2);
  const auto prefix = env.draw(3, 1);
  REQUIRE(a1.size() == 5);
  bool same_as_b = true;
  for (size_t t = 0; t < 5; ++t) {
    CHECK(a1[t].base == a2[t].base);
    CHECK(a1[t].z == a2[t].z);
    CHECK(a1[t].z >= 0.0);
    CHECK(a1[t].z <= 3.0);
    CHECK(a1[t].reaction == agents::ReactionKind::ARexChooser);
    if (a1[t].base != b[t].base) same_as_b = false;
  }
  CHECK_FALSE(same_as_b);
  for (size_t t = 0; t < 3; ++t) CHECK(prefix[t].base == a1[t].base);

  const auto whole = dataio::gen_synthetic_population(1, 21);
  CHECK(env.h.c0 == whole.h.c0);
  CHECK(env.h.lin == whole.h.lin);
  CHECK(env.h.quad == whole.h.quad);

  CHECK_THROWS_AS(env.draw(size_t{1} << 24, 1), DomainError);
  CHECK_THROWS_AS(train::make_synthetic_environment(21, Vec{0.0}, Vec{1.0, 2.0}), ShapeError);
}

TEST_CASE("credit environment resamples dataset rows with the dataset's cost") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "arex_train_credit";
  fs::create_directories(dir);
  const std::string path = (dir / "rows.data").string();
  dataio::generate_credit_file(path, 150, 77);
  const dataio::TabularDataset ds = dataio::load_credit(path);
  const dataio::OutcomeSimulator sim = dataio::fit_outcome_simulator(ds);

  const train::Environment env = train::make_credit_environment(ds, sim, 9, 0.01);
  CHECK(env.x_dim == ds.n_features());
  CHECK(env.sign == BenefitSign::HigherIsBetter);
  CHECK(env.stochastic_outcome);
  CHECK(env.h.kind == OutcomeFunction::Kind::LogisticBernoulli);
  CHECK(env.constraints.lower == ds.lower);
  size_t cats = 0;
  for (auto k : ds.kinds)
    if (k == dataio::ColumnKind::Categorical) ++cats;
  CHECK(env.constraints.categorical.size() == cats);

  const auto drawn = env.draw(12, 4);
  const auto replay = env.draw(12, 4);
  for (size_t t = 0; t < drawn.size(); ++t) {
    CHECK(drawn[t].base == replay[t].base);
    CHECK(drawn[t].z == 0.0);
    CHECK(drawn[t].cost.kind == CostSpec::Kind::WeightedL1);
    CHECK(drawn[t].cost.scale == 0.01);
    bool found = false;
    for (const Vec& row : ds.rows)
      if (row == drawn[t].base) {
        found = true;
        break;
      }
    CHECK(found);
  }

  dataio::OutcomeSimulator unfitted;
  CHECK_THROWS_AS(train::make_credit_environment(ds, unfitted, 9, 0.01), ConfigError);
}

TEST_CASE("rrm log file renders the expected delimited rows") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "arex_train_log";
  fs::create_directories(dir);
  const std::string path = (dir / "curve.tsv").string();

  train::RRMState st;
  st.loss_log = {0.5, 0.25};
  st.compliance_log = {1.0, 0.75};
  st.seconds_log = {0.125, 0.0625};

  train::write_rrm_log(path, st, false);
  {
    std::ifstream in(path);
    std::stringstream got;
    got << in.rdbuf();
    CHECK(got.str() == "iteration\tloss\tcompliance\n0\t0.5\t1\n1\t0.25\t0.75\n");
  }

  train::write_rrm_log(path, st, true);
  {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "iteration\tloss\tcompliance\tseconds");
    std::string row;
    std::getline(in, row);
    CHECK(row == "0\t0.5\t1\t0.125");
  }

  st.seconds_log.pop_back();
  CHECK_THROWS_AS(train::write_rrm_log(path, st, false), ShapeError);
  st.seconds_log.push_back(0.0);
  CHECK_THROWS_AS(train::write_rrm_log((dir / "no_dir" / "x.tsv").string(), st, false),
                  ConfigError);
}

TEST_CASE("config validation names the offending field") {
  train::RRMConfig cfg;
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = train::RRMConfig{};
  cfg.loss = "hinge";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = train::RRMConfig{};
  cfg.batch_sizes = {5};
  cfg.iterations = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = train::RRMConfig{};
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = train::RRMConfig{};
  cfg.sampler_stddev = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = train::RRMConfig{};
  cfg.sigma_lr = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.sigma_lr = 0.0;
  cfg.validate();
  cfg = train::RRMConfig{};
  cfg.batch_at(0);
  CHECK_THROWS_AS(cfg.batch_at(30), DomainError);
  CHECK(cfg.batch_at(3) == cfg.batch);
}

