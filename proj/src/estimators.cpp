#include "lbp/estimators.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "lbp/enumerate.hpp"
#include "lbp/parallel.hpp"

namespace lbp {

void validate_observed(const Population& data, bool death_blocks_birth) {
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    if (auto v = check_trajectory(data.rows[i], data.schema, death_blocks_birth)) {
      throw DataError("row " + std::to_string(i) + " violates " + to_string(v->rule) +
                      (v->time ? " at t=" + std::to_string(v->time) : std::string()));
    }
  }
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Multinomial resample of n individuals as per-row multiplicities.
void bootstrap_multiplicities(std::size_t n, std::uint64_t seed, std::size_t replicate, std::vector<double>& w) {
  w.assign(n, 0.0);
  const NoiseSource noise(derive_seed(seed, "bootstrap"));
  const double dn = static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto idx = static_cast<std::size_t>(noise.uniform(j, replicate, 0) * dn);
    if (idx >= n) idx = n - 1;
    w[idx] += 1.0;
  }
}

struct Bootstrap {
  std::vector<double> values;
  std::size_t failures = 0;
  double se = 0.0;
};

// Runs `estimate(weights)` on every replicate; replicates that hit an
// undefined or unsupported configuration are counted and skipped.
template <class F>
Bootstrap run_bootstrap(std::size_t n, const EstimatorConfig& cfg, F estimate) {
  Bootstrap b;
  b.values.assign(cfg.bootstrap_replicates, kNaN);
  parallel_for(cfg.bootstrap_replicates, cfg.threads, [&](std::size_t r) {
    std::vector<double> w;
    bootstrap_multiplicities(n, cfg.seed, r, w);
    try {
      b.values[r] = estimate(w);
    } catch (const UndefinedEstimandError&) {
    } catch (const PositivityError&) {
    } catch (const DataError&) {
    }
  });
  double sum = 0.0, n_ok = 0.0;
  for (double v : b.values) {
    if (std::isnan(v)) {
      ++b.failures;
      continue;
    }
    sum += v;
    ++n_ok;
  }
  if (n_ok >= 2.0) {
    const double mean = sum / n_ok;
    double ss = 0.0;
    for (double v : b.values)
      if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    b.se = std::sqrt(ss / (n_ok - 1.0));
  } else {
    b.se = kNaN;
  }
  return b;
}

void record_bootstrap(EstimandReport& r, const Bootstrap& b, const EstimatorConfig& cfg) {
  r.mc_se = b.se;
  r.diagnostics["bootstrap_replicates"] = cfg.bootstrap_replicates;
  r.diagnostics["bootstrap_failures"] = b.failures;
}

struct ArmRaw {
  std::uint64_t n = 0, births = 0, events = 0;
};

std::array<ArmRaw, 2> raw_arms(const Population& data) {
  std::array<ArmRaw, 2> arms{};
  for (const auto& tr : data.rows) {
    auto& a = arms[static_cast<std::size_t>(tr.a)];
    ++a.n;
    if (tr.z2.back() == 1) ++a.births;
    if (tr.y == 1) ++a.events;
  }
  return arms;
}

ArmDetail arm_detail(int exposure, const std::string& regime, const ArmRaw& raw, double num, double den) {
  ArmDetail a;
  a.exposure = exposure;
  a.regime = regime;
  a.n = raw.n;
  a.births = raw.births;
  a.events = raw.events;
  a.numerator = num;
  a.denominator = den;
  a.ratio = den > 0.0 ? num / den : 0.0;
  a.conditional = a.ratio;
  return a;
}

void require_denominator(double den, int arm) {
  if (!(den > 0.0))
    throw UndefinedEstimandError("estimated P(Z2_tau = 1) is 0 in arm a=" + std::to_string(arm));
}

void require_arms(const Population& data) {
  if (data.rows.empty()) throw DataError("observed data has no rows");
  const auto arms = raw_arms(data);
  for (int a = 0; a < 2; ++a)
    if (arms[static_cast<std::size_t>(a)].n == 0)
      throw PositivityError("no observed rows with a=" + std::to_string(a), {"a=" + std::to_string(a)});
}

// ---------------------------------------------------------------------------
// CTE

struct CteCells {
  std::vector<std::array<double, 2>> n, births, events;
};

CteCells cte_cells(const Population& data, const std::vector<std::uint32_t>& stratum, std::uint32_t count,
                   const std::vector<double>* w) {
  CteCells c;
  c.n.assign(count, {0, 0});
  c.births.assign(count, {0, 0});
  c.events.assign(count, {0, 0});
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    const double wi = w ? (*w)[i] : 1.0;
    if (wi == 0.0) continue;
    const auto& tr = data.rows[i];
    const auto a = static_cast<std::size_t>(tr.a);
    c.n[stratum[i]][a] += wi;
    if (tr.z2.back() == 1) c.births[stratum[i]][a] += wi;
    if (tr.y == 1) c.events[stratum[i]][a] += wi;
  }
  return c;
}

// Standardized numerator and denominator per arm.
std::array<std::array<double, 2>, 2> standardize(const CteCells& c, const Stratification& strata) {
  double total = 0.0;
  for (const auto& n : c.n) total += n[0] + n[1];
  std::array<std::array<double, 2>, 2> out{};  // [arm][num, den]
  std::vector<std::string> missing;
  for (std::size_t s = 0; s < c.n.size(); ++s) {
    const double ns = c.n[s][0] + c.n[s][1];
    if (ns == 0.0) continue;
    for (std::size_t a = 0; a < 2; ++a) {
      if (c.n[s][a] == 0.0) {
        missing.push_back(strata.label(static_cast<std::uint32_t>(s)) + " a=" + std::to_string(a));
        continue;
      }
      out[a][0] += ns / total * c.events[s][a] / c.n[s][a];
      out[a][1] += ns / total * c.births[s][a] / c.n[s][a];
    }
  }
  if (!missing.empty()) throw PositivityError("exposure arm empty within adjustment strata", missing);
  return out;
}

}  // namespace

EstimandReport estimate_cte(const Population& data, const Stratification& adjustment, const EstimatorConfig& cfg) {
  require_arms(data);
  std::vector<std::uint32_t> stratum(data.rows.size());
  for (std::size_t i = 0; i < data.rows.size(); ++i) stratum[i] = adjustment.stratum(data.rows[i]);
  const std::uint32_t count = adjustment.count();

  auto estimate = [&](const std::vector<double>* w) {
    const auto st = standardize(cte_cells(data, stratum, count, w), adjustment);
    require_denominator(st[1][1], 1);
    require_denominator(st[0][1], 0);
    return st;
  };
  const auto st = estimate(nullptr);
  const auto raw = raw_arms(data);
  EstimandReport r;
  r.estimand = EstimandKind::CTE;
  r.method = "gformula";
  r.seed = cfg.seed;
  r.n_sim = data.rows.size();
  r.arm1 = arm_detail(1, "natural", raw[1], st[1][0], st[1][1]);
  r.arm0 = arm_detail(0, "natural", raw[0], st[0][0], st[0][1]);
  r.value = r.arm1.ratio - r.arm0.ratio;
  r.plan_digest = hex_digest(adjustment.to_json().dump());
  r.diagnostics["adjustment"] = adjustment.to_json();
  const auto b = run_bootstrap(data.rows.size(), cfg, [&](const std::vector<double>& w) {
    const auto s = estimate(&w);
    return s[1][0] / s[1][1] - s[0][0] / s[0][1];
  });
  record_bootstrap(r, b, cfg);
  return r;
}

// ---------------------------------------------------------------------------
// g-computation

namespace {

void check_inputs(const Population& data, const Scm& scm, const std::shared_ptr<const MediatorPolicy>& policy) {
  if (!(data.schema == scm.schema())) throw DataError("observed data schema does not match the generating model");
  if (!policy) throw PolicyError("estimator needs a policy");
  if (policy->covariate_history)
    throw PolicyError("estimators need a policy that conditions on baseline strata and mediator history only");
  InterventionPlan plan{1, StochasticMediators{policy}};
  plan.check(scm);
  require_arms(data);
}

void check_support(const Population& data, const MediatorPolicy& policy, bool dbb) {
  std::vector<std::string> strata;
  for (int arm = 0; arm < 2; ++arm) {
    for (const auto& g : mediator_support_gaps(data, arm, policy, dbb)) {
      strata.push_back("a=" + std::to_string(g.arm) + " t=" + std::to_string(g.t) + " " + g.stratum_label +
                       " history(z1 at " + std::to_string(g.z1_time) + ", z2 at " + std::to_string(g.z2_time) +
                       ") transition (" + std::to_string(g.z1) + "," + std::to_string(g.z2) + ") observed " +
                       std::to_string(g.n_history) + " rows with that history");
    }
  }
  if (!strata.empty())
    throw PositivityError("policy-supported mediator transitions never observed in an exposure arm", strata);
}

bool exact_integration(const Scm& scm, std::size_t distinct_l0, Integration mode) {
  if (mode == Integration::MonteCarlo) return false;
  double leaves = 2.0;
  for (int t = 1; t <= scm.horizon(); ++t) {
    double per_t = 8.0;
    for (const auto& c : scm.schema().covariates) per_t *= c.levels;
    leaves *= per_t;
  }
  const bool fits = leaves * static_cast<double>(distinct_l0) <= 4194304.0;  // 2^22
  if (mode == Integration::Exact && !fits)
    throw UnsupportedSpecError("g-computation exact integration exceeds the enumeration budget");
  return fits;
}

struct ArmIntegral {
  double num = 0.0, den = 0.0;
};

ArmIntegral integrate(const Scm& scm, const NodeModel& model, const BaselineSource& baseline, int arm,
                      const std::shared_ptr<const MediatorPolicy>& policy, bool exact, const EstimatorConfig& cfg) {
  const InterventionPlan plan{arm, StochasticMediators{policy}};
  ForwardEngine engine({scm.schema(), model, baseline, scm.death_blocks_birth(), false}, plan);
  ForwardStats stats;
  ArmIntegral out;
  if (exact) {
    NeumaierSum num, den;
    engine.enumerate(
        [&](const Trajectory& tr, double p) {
          if (tr.z2.back() == 1) den.add(p);
          if (tr.y == 1) num.add(p);
        },
        stats);
    out.num = num.value();
    out.den = den.value();
    return out;
  }
  const NoiseSource noise(derive_seed(cfg.seed, "gcomp_integration"));
  Trajectory tr(scm.schema());
  std::uint64_t births = 0, events = 0;
  for (std::size_t i = 0; i < cfg.mc_draws; ++i) {
    engine.simulate(noise, i, tr, stats);
    births += tr.z2.back() == 1;
    events += tr.y == 1;
  }
  out.num = static_cast<double>(events) / static_cast<double>(cfg.mc_draws);
  out.den = static_cast<double>(births) / static_cast<double>(cfg.mc_draws);
  return out;
}

// Distinct baseline rows and each observed row's group.
struct BaselineGroups {
  std::vector<std::vector<double>> rows;
  std::vector<std::uint32_t> group;
  explicit BaselineGroups(const Population& data) {
    std::map<std::vector<double>, std::uint32_t> ids;
    group.reserve(data.rows.size());
    for (const auto& tr : data.rows) {
      auto [it, inserted] = ids.emplace(tr.l0, static_cast<std::uint32_t>(rows.size()));
      if (inserted) rows.push_back(tr.l0);
      group.push_back(it->second);
    }
  }
  EmpiricalBaseline baseline(const std::vector<double>* w) const {
    std::vector<double> gw(rows.size(), 0.0);
    for (std::size_t i = 0; i < group.size(); ++i) gw[group[i]] += w ? (*w)[i] : 1.0;
    return EmpiricalBaseline(rows, gw);
  }
};

std::string policy_plan_digest(const MediatorPolicy& policy, const Schema& schema, const ModelOptions& options) {
  json j{{"policy", policy.digest(schema)},
         {"mode", options.mode == ModelMode::Verification ? "verification" : "misspecified"},
         {"drop", options.drop}};
  return hex_digest(j.dump());
}

}  // namespace

EstimandReport estimate_csde_gcomp(const Population& data, const Scm& scm, std::shared_ptr<const MediatorPolicy> policy,
                                   const ModelOptions& options, const EstimatorConfig& cfg) {
  check_inputs(data, scm, policy);
  check_support(data, *policy, scm.death_blocks_birth());
  const FittedModel::Parts parts{false, true, false, true};
  const FittedModel m1(scm, data, 1, parts, options), m0(scm, data, 0, parts, options);
  const BaselineGroups l0(data);
  const EmpiricalBaseline full_baseline = l0.baseline(nullptr);
  const bool exact = exact_integration(scm, full_baseline.distinct(), cfg.integration);

  auto estimate = [&](const FittedModel& f1, const FittedModel& f0, const BaselineSource& base) {
    const ArmIntegral a1 = integrate(scm, f1, base, 1, policy, exact, cfg);
    const ArmIntegral a0 = integrate(scm, f0, base, 0, policy, exact, cfg);
    require_denominator(a1.den, 1);
    require_denominator(a0.den, 0);
    return std::array<ArmIntegral, 2>{a0, a1};
  };
  const auto full = estimate(m1, m0, full_baseline);
  const auto raw = raw_arms(data);
  EstimandReport r;
  r.estimand = EstimandKind::CSDE;
  r.method = "gcomp";
  r.seed = cfg.seed;
  r.n_sim = data.rows.size();
  r.arm1 = arm_detail(1, "policy", raw[1], full[1].num, full[1].den);
  r.arm0 = arm_detail(0, "policy", raw[0], full[0].num, full[0].den);
  r.value = r.arm1.ratio - r.arm0.ratio;
  r.plan_digest = policy_plan_digest(*policy, scm.schema(), options);
  r.diagnostics["integration"] = exact ? "exact" : "monte_carlo";
  r.diagnostics["model_mode"] = options.mode == ModelMode::Verification ? "verification" : "misspecified";
  r.diagnostics["dropped"] = options.drop;
  r.diagnostics["empty_model_cells"] = m1.empty_cells() + m0.empty_cells();
  r.diagnostics["models"] = {{"arm1", m1.describe()}, {"arm0", m0.describe()}};

  const auto b = run_bootstrap(data.rows.size(), cfg, [&](const std::vector<double>& w) {
    FittedModel f1 = m1, f0 = m0;
    f1.fit(&w);
    f0.fit(&w);
    const EmpiricalBaseline base = l0.baseline(&w);
    const auto e = estimate(f1, f0, base);
    return e[1].num / e[1].den - e[0].num / e[0].den;
  });
  record_bootstrap(r, b, cfg);
  return r;
}

// ---------------------------------------------------------------------------
// IPW

namespace {

struct IpwModels {
  FittedModel exposure, med1, med0;
  IpwModels(const Scm& scm, const Population& data, const ModelOptions& options)
      : exposure(scm, data, std::nullopt, {true, false, false, false}, options),
        med1(scm, data, 1, {false, false, true, false}, options),
        med0(scm, data, 0, {false, false, true, false}, options) {}
  void fit(const std::vector<double>* w) {
    exposure.fit(w);
    med1.fit(w);
    med0.fit(w);
  }
  template <class F>
  void each_node(int tau, F f) const {
    f(exposure.exposure_node(), true);
    for (const FittedModel* m : {&med1, &med0})
      for (int t = 1; t <= tau; ++t) {
        f(m->z1_node(t), false);
        f(m->z2_node(t), false);
      }
  }
};

// Per-row factors that stay fixed across bootstrap replicates: the policy
// density of the observed mediator path and densities from deterministic laws.
struct IpwFixed {
  std::vector<double> policy, exposure, mediator;
};

IpwFixed ipw_fixed(const Population& data, const IpwModels& m, const MediatorPolicy& policy, bool dbb) {
  const std::size_t n = data.rows.size();
  const int tau = data.schema.horizon;
  IpwFixed f{std::vector<double>(n, 1.0), std::vector<double>(n, 1.0), std::vector<double>(n, 1.0)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tr = data.rows[i];
    const std::uint32_t s = policy.strata.stratum(tr);
    for (int t = 1; t <= tau && f.policy[i] > 0.0; ++t) {
      const std::uint32_t code = mediator_history_code(tr, t);
      const auto [d1, d2] = decode_mediator_history(code, tau);
      const TransitionCell* cell = policy.find(t, CellKey{s, 0, code});
      const auto k = static_cast<std::size_t>(t - 1);
      f.policy[i] *= cell ? transition_probability(*cell, d1, d2, tr.z1[k], tr.z2[k], dbb) : 0.0;
    }
  }
  m.each_node(tau, [&](const FittedNode& node, bool is_exposure) {
    if (!node.fixed()) return;
    auto& target = is_exposure ? f.exposure : f.mediator;
    for (const auto i : node.prepared_rows()) {
      const auto& tr = data.rows[i];
      const double p = node.prob_one(tr);
      target[i] *= node_value(node.node(), tr) == 1 ? p : 1.0 - p;
    }
  });
  return f;
}

struct IpwResult {
  std::array<double, 2> num{}, den{}, weighted_size{}, raw_size{};
  std::size_t truncated = 0;
  double max_raw = 0.0;
};

IpwResult ipw_estimate(const Population& data, const IpwModels& m, const IpwFixed& fixed,
                       const MediatorPolicy& policy, double cap, const std::vector<double>* mult,
                       std::vector<IpwWeight>* details) {
  const std::size_t n = data.rows.size();
  const int tau = data.schema.horizon;
  std::vector<double> expo = fixed.exposure, med = fixed.mediator;
  m.each_node(tau, [&](const FittedNode& node, bool is_exposure) {
    if (node.fixed()) return;
    const auto probs = node.pattern_prob_one();
    const auto& rows = node.prepared_rows();
    const auto& pat = node.prepared_patterns();
    const auto& out = node.prepared_outcomes();
    auto& target = is_exposure ? expo : med;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const double p = probs[pat[k]];
      target[rows[k]] *= out[k] == 1 ? p : 1.0 - p;
    }
  });

  IpwResult res;
  std::vector<double> capped(n, 0.0);
  std::array<double, 2> wsum{0, 0};
  if (details) details->assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    const double k = mult ? (*mult)[i] : 1.0;
    if (k == 0.0) continue;
    const auto& tr = data.rows[i];
    if (!(expo[i] > 0.0))
      throw PositivityError("estimated exposure probability is 0 for row " + std::to_string(i),
                            {policy.strata.label(policy.strata.stratum(tr))});
    const double ef = 1.0 / expo[i];
    double mf = 0.0;
    if (fixed.policy[i] > 0.0) {
      if (!(med[i] > 0.0))
        throw PositivityError("estimated natural mediator density is 0 for row " + std::to_string(i),
                              {policy.strata.label(policy.strata.stratum(tr))});
      mf = fixed.policy[i] / med[i];
    }
    const double raw = ef * mf;
    const double w = std::min(raw, cap);
    if (raw > cap) ++res.truncated;
    res.max_raw = std::max(res.max_raw, raw);
    capped[i] = w;
    wsum[static_cast<std::size_t>(tr.a)] += k * w;
    res.raw_size[static_cast<std::size_t>(tr.a)] += k;
    if (details) (*details)[i] = {ef, mf, raw, w, raw > cap};
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double k = mult ? (*mult)[i] : 1.0;
    if (k == 0.0) continue;
    const auto& tr = data.rows[i];
    const auto a = static_cast<std::size_t>(tr.a);
    if (!(wsum[a] > 0.0)) continue;
    const double w = capped[i] * res.raw_size[a] / wsum[a];
    if (details) (*details)[i].weight = w;
    res.weighted_size[a] += k * w;
    if (tr.z2.back() == 1) res.den[a] += k * w;
    if (tr.y == 1) res.num[a] += k * w;
  }
  for (std::size_t a = 0; a < 2; ++a) {
    if (res.raw_size[a] > 0.0) {
      res.num[a] /= res.raw_size[a];
      res.den[a] /= res.raw_size[a];
    }
  }
  return res;
}

}  // namespace

std::vector<IpwWeight> ipw_weights(const Population& data, const Scm& scm, const MediatorPolicy& policy,
                                   const ModelOptions& options, double weight_cap) {
  const IpwModels m(scm, data, options);
  const IpwFixed fixed = ipw_fixed(data, m, policy, scm.death_blocks_birth());
  std::vector<IpwWeight> out;
  ipw_estimate(data, m, fixed, policy, weight_cap, nullptr, &out);
  return out;
}

EstimandReport estimate_csde_ipw(const Population& data, const Scm& scm, std::shared_ptr<const MediatorPolicy> policy,
                                 const ModelOptions& options, const EstimatorConfig& cfg) {
  check_inputs(data, scm, policy);
  const bool dbb = scm.death_blocks_birth();
  check_support(data, *policy, dbb);
  const IpwModels models(scm, data, options);
  const IpwFixed fixed = ipw_fixed(data, models, *policy, dbb);
  const IpwResult full = ipw_estimate(data, models, fixed, *policy, cfg.weight_cap, nullptr, nullptr);
  require_denominator(full.den[1], 1);
  require_denominator(full.den[0], 0);
  const auto raw = raw_arms(data);
  EstimandReport r;
  r.estimand = EstimandKind::CSDE;
  r.method = "ipw";
  r.seed = cfg.seed;
  r.n_sim = data.rows.size();
  r.arm1 = arm_detail(1, "policy", raw[1], full.num[1], full.den[1]);
  r.arm0 = arm_detail(0, "policy", raw[0], full.num[0], full.den[0]);
  r.value = r.arm1.ratio - r.arm0.ratio;
  r.plan_digest = policy_plan_digest(*policy, scm.schema(), options);
  r.diagnostics["weight_cap"] = cfg.weight_cap;
  r.diagnostics["truncated_weights"] = full.truncated;
  r.diagnostics["max_raw_weight"] = full.max_raw;
  r.diagnostics["weighted_arm_size"] = {full.weighted_size[0], full.weighted_size[1]};
  r.diagnostics["arm_size"] = {full.raw_size[0], full.raw_size[1]};
  r.diagnostics["model_mode"] = options.mode == ModelMode::Verification ? "verification" : "misspecified";
  r.diagnostics["dropped"] = options.drop;

  const auto b = run_bootstrap(data.rows.size(), cfg, [&](const std::vector<double>& w) {
    IpwModels m = models;
    m.fit(&w);
    const IpwResult e = ipw_estimate(data, m, fixed, *policy, cfg.weight_cap, &w, nullptr);
    require_denominator(e.den[1], 1);
    require_denominator(e.den[0], 0);
    return e.num[1] / e.den[1] - e.num[0] / e.den[0];
  });
  record_bootstrap(r, b, cfg);
  return r;
}

}  // namespace lbp
