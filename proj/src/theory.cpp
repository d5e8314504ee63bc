#include "arex/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>

namespace arex::theory {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Direction-number parameters for the classic low-discrepancy sequence,
// dimensions 2..10 (dimension 1 is the plain radical-inverse sequence).
struct SobolRow {
  int s;
  uint32_t a;
  uint32_t m[6];
};
constexpr SobolRow kSobolRows[] = {
    {1, 0, {1, 0, 0, 0, 0, 0}},      {2, 1, {1, 3, 0, 0, 0, 0}},
    {3, 1, {1, 3, 1, 0, 0, 0}},      {3, 2, {1, 1, 1, 0, 0, 0}},
    {4, 1, {1, 1, 3, 3, 0, 0}},      {4, 4, {1, 3, 5, 13, 0, 0}},
    {5, 2, {1, 1, 5, 5, 17, 0}},     {5, 4, {1, 1, 5, 5, 5, 0}},
    {5, 7, {1, 1, 7, 11, 19, 0}},
};
constexpr int kSobolBits = 32;

void direction_vectors(int dim_index, uint32_t v[kSobolBits]) {
  if (dim_index == 0) {
    for (int k = 0; k < kSobolBits; ++k) v[k] = 1u << (31 - k);
    return;
  }
  const SobolRow& row = kSobolRows[dim_index - 1];
  uint32_t m[kSobolBits];
  for (int k = 0; k < row.s; ++k) m[k] = row.m[k];
  for (int k = row.s; k < kSobolBits; ++k) {
    uint32_t acc = m[k - row.s] ^ (m[k - row.s] << row.s);
    for (int i = 1; i < row.s; ++i) {
      uint32_t ai = (row.a >> (row.s - 1 - i)) & 1u;
      if (ai) acc ^= m[k - i] << i;
    }
    m[k] = acc;
  }
  for (int k = 0; k < kSobolBits; ++k) v[k] = m[k] << (31 - k);
}

bool same_point(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

// Shared scan: returns the index of the maximal violation, or -1.
struct ScanResult {
  int witness = -1;
  double lhs = 0.0, rhs = 0.0;
  int tested = 0;
};

ScanResult scan_inequality(const ScalarModel& g, const ScalarModel& f, const Vec& base,
                           const std::vector<Vec>& probes, double tol,
                           bool only_lower_set) {
  if (probes.empty())
    throw DomainError("condition check: empty probe set");
  double g0 = g(base), f0 = f(base);
  if (!std::isfinite(g0) || !std::isfinite(f0))
    throw NumericError("condition check: non-finite model value at the base point");

  ScanResult res;
  double worst = tol;
  for (size_t i = 0; i < probes.size(); ++i) {
    require_same_dim(base, probes[i], "condition check");
    double gx = g(probes[i]);
    if (!std::isfinite(gx))
      throw NumericError("condition check: non-finite deployed value at a probe");
    if (only_lower_set && !(gx < g0)) continue;
    double fx = f(probes[i]);
    if (!std::isfinite(fx))
      throw NumericError("condition check: non-finite surrogate value at a probe");
    ++res.tested;
    double lhs = f0 - fx, rhs = g0 - gx;
    if (lhs - rhs > worst) {
      worst = lhs - rhs;
      res.witness = static_cast<int>(i);
      res.lhs = lhs;
      res.rhs = rhs;
    }
  }
  return res;
}

ConditionReport report_from_scan(const ScanResult& s, const std::vector<Vec>& probes,
                                 const char* label) {
  ConditionReport rep;
  rep.domain = std::string(label) + " probes=" + std::to_string(probes.size()) +
               " dim=" + std::to_string(probes.front().size());
  rep.probes_tested = s.tested;
  if (s.witness >= 0) {
    rep.holds = false;
    rep.witness_x = probes[static_cast<size_t>(s.witness)];
    rep.lhs = s.lhs;
    rep.rhs = s.rhs;
  }
  return rep;
}

}  // namespace

std::vector<Vec> grid_probes_1d(double lo, double hi, int n) {
  if (n < 2 || !(lo < hi)) throw DomainError("grid_probes_1d: need lo < hi and n >= 2");
  std::vector<Vec> out;
  out.reserve(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k)
    out.push_back({lo + (hi - lo) * static_cast<double>(k) / (n - 1)});
  return out;
}

std::vector<Vec> sobol_probes(const SearchBox& box, int n) {
  size_t d = box.lo.size();
  if (d == 0 || d != box.hi.size())
    throw ShapeError("sobol_probes: malformed box");
  if (d > 10)
    throw ConfigError("sobol_probes: supports up to 10 dimensions; pass an explicit "
                      "probe list beyond that");
  if (n < 1) throw DomainError("sobol_probes: need n >= 1");
  for (size_t i = 0; i < d; ++i)
    if (!(box.lo[i] <= box.hi[i]) || !std::isfinite(box.lo[i]) || !std::isfinite(box.hi[i]))
      throw DomainError("sobol_probes: box must be bounded and ordered");

  std::vector<std::array<uint32_t, kSobolBits>> v(d);
  for (size_t j = 0; j < d; ++j) direction_vectors(static_cast<int>(j), v[j].data());

  std::vector<Vec> out;
  out.reserve(static_cast<size_t>(n));
  std::vector<uint32_t> state(d, 0);
  Vec point(d);
  for (int i = 0; i < n; ++i) {
    for (size_t j = 0; j < d; ++j) {
      double u = static_cast<double>(state[j]) * 0x1p-32;
      point[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * u;
    }
    out.push_back(point);
    uint32_t gray = static_cast<uint32_t>(i + 1);
    int c = 0;
    while ((gray & 1u) == 0) {
      gray >>= 1;
      ++c;
    }
    for (size_t j = 0; j < d; ++j) state[j] ^= v[j][static_cast<size_t>(c)];
  }
  return out;
}

ConditionReport check_necessary(const ScalarModel& g, const ScalarModel& f,
                                const Vec& base, const std::vector<Vec>& probes,
                                double tol) {
  return report_from_scan(scan_inequality(g, f, base, probes, tol, true), probes,
                          "lower-set");
}

ConditionReport check_sufficient(const ScalarModel& g, const ScalarModel& f,
                                 const Vec& base, const std::vector<Vec>& probes,
                                 double tol) {
  return report_from_scan(scan_inequality(g, f, base, probes, tol, false), probes,
                          "full-domain");
}

std::optional<HarmfulCostWitness> construct_harmful_cost(const ScalarModel& g,
                                                         const ScalarModel& f,
                                                         const Vec& base,
                                                         const std::vector<Vec>& probes,
                                                         double tol) {
  ScanResult scan = scan_inequality(g, f, base, probes, tol, true);
  if (scan.witness < 0) return std::nullopt;

  HarmfulCostWitness w;
  w.star_index = static_cast<size_t>(scan.witness);
  w.x_star = probes[w.star_index];
  w.margin_low = scan.rhs;   // true prediction gain at the lure point
  w.margin_high = scan.lhs;  // promised gain, strictly larger
  w.c_star = 0.5 * (w.margin_low + w.margin_high);
  if (!(w.margin_low < w.c_star && w.c_star < w.margin_high))
    throw ConstructionError("construct_harmful_cost: margin interval collapsed");

  double g0 = g(base), f0 = f(base);
  double f_star = f(w.x_star);

  // First pass: in-set probes get the additive-overhang cost, the base point
  // (if present among the probes) costs zero, everything else waits.
  w.cost.assign(probes.size(), -1.0);
  double max_assigned = w.c_star;
  for (size_t i = 0; i < probes.size(); ++i) {
    if (i == w.star_index) {
      w.cost[i] = w.c_star;
      continue;
    }
    if (same_point(probes[i], base)) {
      w.cost[i] = 0.0;
      continue;
    }
    if (g(probes[i]) < g0) {
      double df = f_star - f(probes[i]);
      double c = w.c_star + df + std::fabs(df);
      if (df == 0.0) c += 1.0;  // keep the dominance strict when f ties
      w.cost[i] = c;
      max_assigned = std::max(max_assigned, c);
    }
  }
  double outside = 1.0 + 2.0 * max_assigned;
  for (double& c : w.cost)
    if (c < 0.0) c = outside;

  // Verify the inequality system before handing the table out.
  if (!(0.0 < w.margin_low && w.margin_low < w.c_star))
    throw ConstructionError("construct_harmful_cost: true-gain line failed");
  if (!(w.c_star < w.margin_high))
    throw ConstructionError("construct_harmful_cost: promised-gain line failed");
  for (size_t i = 0; i < probes.size(); ++i) {
    if (i == w.star_index || same_point(probes[i], base)) continue;
    if (g(probes[i]) >= g0) continue;
    if (!(w.c_star + (f_star - f(probes[i])) < w.cost[i]))
      throw ConstructionError("construct_harmful_cost: dominance line failed");
  }

  // Best response restricted to probes plus the base point, under the
  // constructed table; lower-is-better benefit.
  double best_su = -f0;  // staying put costs nothing
  w.response = base;
  for (size_t i = 0; i < probes.size(); ++i) {
    double su = -f(probes[i]) - w.cost[i];
    if (su > best_su) {
      best_su = su;
      w.response = probes[i];
    }
  }
  size_t ridx = probes.size();
  for (size_t i = 0; i < probes.size(); ++i)
    if (same_point(w.response, probes[i])) {
      ridx = i;
      break;
    }
  double c_resp = ridx < probes.size() ? w.cost[ridx] : 0.0;
  w.harm_delta = (-g(w.response) - c_resp) - (-g0);
  return w;
}

AuditTable audit_no_harm(const UtilityContext& ctx,
                         const std::vector<AgentRecord>& population,
                         const ExplanationPolicy& policy, const SearchBox& box,
                         const SearchConfig& cfg) {
  using agents::ReactionKind;
  AuditTable table;
  table.rows.reserve(population.size());
  for (size_t t = 0; t < population.size(); ++t) {
    const AgentRecord& agent = population[t];
    Vec response;
    if (policy.kind == ExplanationPolicy::Kind::Surrogate) {
      if (agent.reaction == ReactionKind::ARexChooser)
        throw ConfigError("audit_no_harm: surrogate policy given to a "
                          "recommendation-choosing agent");
      if (!policy.surrogate)
        throw ConfigError("audit_no_harm: surrogate policy has no generator");
      ScalarModel f = policy.surrogate(agent);
      SearchConfig per = cfg;
      per.stream = cfg.stream * 1000003 + t;
      response = surrogate_best_response(agent, f, ctx.sign, box, per).x;
    } else {
      if (agent.reaction != ReactionKind::ARexChooser)
        throw ConfigError("audit_no_harm: recommendation policy given to a "
                          "surrogate-responding agent");
      if (!policy.arex)
        throw ConfigError("audit_no_harm: recommendation policy has no generator");
      response = arex_response(ctx, agent, policy.arex(agent)).x;
    }

    AuditRow row;
    auto u0 = agents::true_utility(ctx, agent, agent.base);
    auto u1 = agents::true_utility(ctx, agent, response);
    if (!u0 || !u1)
      throw IntegrityError("audit_no_harm: infeasible response slipped through");
    row.u_before = *u0;
    row.u_after = *u1;
    row.delta = row.u_after - row.u_before;
    row.harmed = row.delta < -1e-12;
    row.response = std::move(response);
    table.harmed_count += row.harmed;
    table.rows.push_back(std::move(row));
  }
  table.harmed_fraction =
      population.empty() ? 0.0
                         : static_cast<double>(table.harmed_count) /
                               static_cast<double>(population.size());
  return table;
}

agents::ArexRec arex_equivalence(const UtilityContext& ctx, const AgentRecord& agent,
                                 const Vec& response) {
  auto u0 = agents::true_utility(ctx, agent, agent.base);
  auto u1 = agents::true_utility(ctx, agent, response);
  if (!u1 || *u1 < *u0)
    throw PreconditionError("arex_equivalence: response lies outside the agent's "
                            "non-harmful set");
  if (ctx.g == nullptr) throw ConfigError("arex_equivalence: no model in context");
  return {response, (*ctx.g)(response)};
}

void write_condition_report(const std::string& path, const ConditionReport& report) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_condition_report: cannot open " + path);
  out << "verdict\t" << (report.holds ? "holds-on-domain" : "violated") << "\n";
  out << "domain\t" << report.domain << "\n";
  out << "probes_tested\t" << report.probes_tested << "\n";
  if (!report.holds) {
    out << "witness";
    for (double v : report.witness_x) out << '\t' << fmt(v);
    out << "\nlhs\t" << fmt(report.lhs) << "\nrhs\t" << fmt(report.rhs) << "\n";
  }
  if (!out) throw ConfigError("write_condition_report: write failed for " + path);
}

void write_audit_table(const std::string& path, const AuditTable& table) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_audit_table: cannot open " + path);
  out << "u_before\tu_after\tdelta\tharmed\n";
  for (const AuditRow& r : table.rows)
    out << fmt(r.u_before) << '\t' << fmt(r.u_after) << '\t' << fmt(r.delta) << '\t'
        << (r.harmed ? 1 : 0) << "\n";
  if (!out) throw ConfigError("write_audit_table: write failed for " + path);
}

}  // namespace arex::theory
