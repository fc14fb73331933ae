#include "lbp/estimands.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "lbp/enumerate.hpp"
#include "lbp/forward.hpp"
#include "lbp/parallel.hpp"

namespace lbp {

const char* to_string(EstimandKind kind) {
  switch (kind) {
    case EstimandKind::CTE: return "CTE";
    case EstimandKind::CSDE: return "CSDE";
    case EstimandKind::CDE: return "CDE";
    case EstimandKind::NDE_MARGINAL: return "NDE_MARGINAL";
    case EstimandKind::NDE_CONDITIONAL: return "NDE_CONDITIONAL";
  }
  return "?";
}

EstimandKind estimand_from_string(const std::string& s) {
  for (auto k : {EstimandKind::CTE, EstimandKind::CSDE, EstimandKind::CDE, EstimandKind::NDE_MARGINAL,
                 EstimandKind::NDE_CONDITIONAL})
    if (s == to_string(k)) return k;
  throw Error("unknown estimand \"" + s + "\"");
}

json ArmDetail::to_json() const {
  return json{{"exposure", exposure}, {"regime", regime},   {"numerator", numerator},
              {"denominator", denominator}, {"ratio", ratio}, {"conditional", conditional},
              {"n", n},                 {"births", births}, {"events", events}};
}

ArmDetail ArmDetail::from_json(const json& j) {
  ArmDetail a;
  a.exposure = j.at("exposure").get<int>();
  a.regime = j.at("regime").get<std::string>();
  a.numerator = j.at("numerator").get<double>();
  a.denominator = j.at("denominator").get<double>();
  a.ratio = j.at("ratio").get<double>();
  a.conditional = j.at("conditional").get<double>();
  a.n = j.at("n").get<std::uint64_t>();
  a.births = j.at("births").get<std::uint64_t>();
  a.events = j.at("events").get<std::uint64_t>();
  return a;
}

json EstimandReport::to_json() const {
  return json{{"estimand", to_string(estimand)},
              {"method", method},
              {"value", value},
              {"mc_se", std::isnan(mc_se) ? json(nullptr) : json(mc_se)},
              {"arm1", arm1.to_json()},
              {"arm0", arm0.to_json()},
              {"n_sim", n_sim},
              {"seed", seed},
              {"plan_digest", plan_digest},
              {"diagnostics", diagnostics}};
}

EstimandReport EstimandReport::from_json(const json& j) {
  EstimandReport r;
  r.estimand = estimand_from_string(j.at("estimand").get<std::string>());
  r.method = j.at("method").get<std::string>();
  r.value = j.at("value").get<double>();
  r.mc_se = j.at("mc_se").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("mc_se").get<double>();
  r.arm1 = ArmDetail::from_json(j.at("arm1"));
  r.arm0 = ArmDetail::from_json(j.at("arm0"));
  r.n_sim = j.at("n_sim").get<std::uint64_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.plan_digest = j.at("plan_digest").get<std::string>();
  r.diagnostics = j.value("diagnostics", json::object());
  return r;
}

namespace {

std::string regime_of(const InterventionPlan& plan) {
  if (std::holds_alternative<ControlledMediators>(plan.mediators)) return "controlled";
  if (std::holds_alternative<StochasticMediators>(plan.mediators)) return "policy";
  return "natural";
}

std::string plans_digest(const InterventionPlan& p1, const InterventionPlan& p0, const Schema& schema) {
  return hex_digest(p1.digest(schema) + p0.digest(schema));
}

// Joint counts of (y, birth) in both arms for each individual.
struct PairCounts {
  std::array<std::uint64_t, 16> cells{};
  ForwardStats stats1, stats0;
  static std::size_t index(int y1, int d1, int y0, int d0) {
    return static_cast<std::size_t>(y1 | (d1 << 1) | (y0 << 2) | (d0 << 3));
  }
  void merge(const PairCounts& o) {
    for (std::size_t k = 0; k < cells.size(); ++k) cells[k] += o.cells[k];
    stats1.merge(o.stats1);
    stats0.merge(o.stats0);
  }
};

int birth_at_horizon(const Trajectory& tr) { return tr.z2.back() == 1 ? 1 : 0; }

ArmDetail arm_from_counts(int exposure, const std::string& regime, std::uint64_t n, std::uint64_t births,
                          std::uint64_t events, std::uint64_t events_among_births) {
  ArmDetail a;
  a.exposure = exposure;
  a.regime = regime;
  a.n = n;
  a.births = births;
  a.events = events;
  const double dn = static_cast<double>(n);
  a.numerator = static_cast<double>(events) / dn;
  a.denominator = static_cast<double>(births) / dn;
  if (births == 0) return a;
  a.ratio = a.numerator / a.denominator;
  a.conditional = static_cast<double>(events_among_births) / static_cast<double>(births);
  if (std::abs(a.ratio - a.conditional) > 1e-12)
    throw std::logic_error("ratio and conditional forms disagree in arm " + std::to_string(exposure));
  return a;
}

void require_births(const ArmDetail& arm, const char* which) {
  if (arm.denominator <= 0.0)
    throw UndefinedEstimandError(std::string("arm ") + which + " (a=" + std::to_string(arm.exposure) +
                                 ") has P(Z2_tau = 1) = 0; the estimand is undefined");
}

int exposure_of(const InterventionPlan& p) {
  if (!p.exposure) throw Error("contrast plans must set the exposure");
  return *p.exposure;
}

}  // namespace

EstimandReport simulate_contrast(const Scm& scm, EstimandKind kind, const InterventionPlan& plan1,
                                 const InterventionPlan& plan0, const TruthConfig& cfg) {
  if (cfg.n < 2) throw Error("n_truth must be at least 2");
  plan1.check(scm);
  plan0.check(scm);
  ScmModel model(scm);
  ScmBaseline baseline(scm);
  const ForwardConfig fc{scm.schema(), model, baseline, scm.death_blocks_birth(), scm.shared_mediator_noise()};
  ForwardEngine e1(fc, plan1), e0(fc, plan0);
  const NoiseSource n1(cfg.independent_arms ? derive_seed(cfg.seed, "arm1") : cfg.seed);
  const NoiseSource n0(cfg.independent_arms ? derive_seed(cfg.seed, "arm0") : cfg.seed);

  const PairCounts counts = parallel_blocks<PairCounts>(
      cfg.n, cfg.threads, [] { return PairCounts{}; },
      [&](std::size_t begin, std::size_t end, PairCounts& acc) {
        Trajectory t1(scm.schema()), t0(scm.schema());
        for (std::size_t i = begin; i < end; ++i) {
          e1.simulate(n1, i, t1, acc.stats1);
          e0.simulate(n0, i, t0, acc.stats0);
          ++acc.cells[PairCounts::index(t1.y, birth_at_horizon(t1), t0.y, birth_at_horizon(t0))];
        }
      });

  std::uint64_t b1 = 0, e1n = 0, c1 = 0, b0 = 0, e0n = 0, c0 = 0;
  for (int k = 0; k < 16; ++k) {
    const std::uint64_t c = counts.cells[static_cast<std::size_t>(k)];
    const int y1 = k & 1, d1 = (k >> 1) & 1, y0 = (k >> 2) & 1, d0 = (k >> 3) & 1;
    b1 += d1 * c;
    e1n += y1 * c;
    c1 += (y1 & d1) * c;
    b0 += d0 * c;
    e0n += y0 * c;
    c0 += (y0 & d0) * c;
  }
  EstimandReport r;
  r.estimand = kind;
  r.method = "monte_carlo";
  r.n_sim = cfg.n;
  r.seed = cfg.seed;
  r.plan_digest = plans_digest(plan1, plan0, scm.schema());
  r.arm1 = arm_from_counts(exposure_of(plan1), regime_of(plan1), cfg.n, b1, e1n, c1);
  r.arm0 = arm_from_counts(exposure_of(plan0), regime_of(plan0), cfg.n, b0, e0n, c0);
  require_births(r.arm1, "1");
  require_births(r.arm0, "0");
  r.value = r.arm1.ratio - r.arm0.ratio;

  // Delta-method influence values, paired under common random numbers.
  const double D1 = r.arm1.denominator, D0 = r.arm0.denominator;
  const double r1 = r.arm1.ratio, r0 = r.arm0.ratio;
  double ss_paired = 0.0, ss1 = 0.0, ss0 = 0.0;
  for (int k = 0; k < 16; ++k) {
    const auto c = static_cast<double>(counts.cells[static_cast<std::size_t>(k)]);
    if (c == 0.0) continue;
    const int y1 = k & 1, d1 = (k >> 1) & 1, y0 = (k >> 2) & 1, d0 = (k >> 3) & 1;
    const double f1 = (y1 - r1 * d1) / D1, f0 = (y0 - r0 * d0) / D0;
    ss_paired += c * (f1 - f0) * (f1 - f0);
    ss1 += c * f1 * f1;
    ss0 += c * f0 * f0;
  }
  const double dn = static_cast<double>(cfg.n);
  const double var = cfg.independent_arms ? (ss1 + ss0) / (dn - 1.0) : ss_paired / (dn - 1.0);
  r.mc_se = std::sqrt(var / dn);
  r.diagnostics["common_random_numbers"] = !cfg.independent_arms;
  r.diagnostics["arm_se"] = {std::sqrt(ss1 / (dn - 1.0) / dn), std::sqrt(ss0 / (dn - 1.0) / dn)};
  r.diagnostics["policy_fallbacks"] = counts.stats1.policy_fallbacks + counts.stats0.policy_fallbacks;
  return r;
}

EstimandReport exact_contrast(const Scm& scm, EstimandKind kind, const InterventionPlan& plan1,
                              const InterventionPlan& plan0) {
  EstimandReport r;
  r.estimand = kind;
  r.method = "oracle";
  r.plan_digest = plans_digest(plan1, plan0, scm.schema());
  std::uint64_t fallbacks = 0;
  auto arm = [&](const InterventionPlan& plan) {
    const ExactLaw law = enumerate_exact(scm, plan);
    fallbacks += law.policy_fallbacks;
    ArmDetail a;
    a.exposure = exposure_of(plan);
    a.regime = regime_of(plan);
    a.denominator = law.probability([](const Trajectory& tr) { return tr.z2.back() == 1; });
    a.numerator = law.probability([](const Trajectory& tr) { return tr.y == 1 && tr.z2.back() == 1; });
    if (a.denominator > 0.0) {
      a.ratio = a.numerator / a.denominator;
      a.conditional = a.ratio;
    }
    return a;
  };
  r.arm1 = arm(plan1);
  r.arm0 = arm(plan0);
  require_births(r.arm1, "1");
  require_births(r.arm0, "0");
  r.value = r.arm1.ratio - r.arm0.ratio;
  r.diagnostics["policy_fallbacks"] = fallbacks;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

InterventionPlan with_policy(int a, std::shared_ptr<const MediatorPolicy> policy) {
  return {a, StochasticMediators{std::move(policy)}};
}

Stratification strata_or_default(const Scm& scm, const std::optional<Stratification>& s) {
  return s ? *s : Stratification::all_discrete(scm.schema());
}

PolicyFit fit_for(const TruthConfig& cfg) {
  PolicyFit f;
  f.mode = cfg.policy_mode;
  f.n_fit = cfg.n_policy_fit;
  f.seed = derive_seed(cfg.seed, "policy_fit");
  f.threads = cfg.threads;
  return f;
}

void describe_policy(EstimandReport& r, const MediatorPolicy& p, const Schema& schema) {
  r.diagnostics["policy_kind"] = to_string(p.kind);
  r.diagnostics["policy_source"] = p.source;
  r.diagnostics["policy_digest"] = p.digest(schema);
}

}  // namespace

EstimandReport conditional_total_effect(const Scm& scm, const TruthConfig& cfg) {
  return simulate_contrast(scm, EstimandKind::CTE, InterventionPlan::set_exposure(1),
                           InterventionPlan::set_exposure(0), cfg);
}

EstimandReport conditional_stochastic_direct_effect(const Scm& scm, std::shared_ptr<const MediatorPolicy> policy,
                                                    const TruthConfig& cfg) {
  if (!policy) throw PolicyError("CSDE needs a policy");
  auto r = simulate_contrast(scm, EstimandKind::CSDE, with_policy(1, policy), with_policy(0, policy), cfg);
  describe_policy(r, *policy, scm.schema());
  return r;
}

EstimandReport controlled_direct_effect(const Scm& scm, const MediatorProfile& profile, const TruthConfig& cfg) {
  return simulate_contrast(scm, EstimandKind::CDE, {1, ControlledMediators{profile}}, {0, ControlledMediators{profile}},
                           cfg);
}

EstimandReport nde_marginal(const Scm& scm, int a_ref, const TruthConfig& cfg) {
  auto policy = std::make_shared<const MediatorPolicy>(
      derive_policy_marginal(scm, a_ref, fit_for(cfg), strata_or_default(scm, cfg.strata)));
  auto r = simulate_contrast(scm, EstimandKind::NDE_MARGINAL, with_policy(1, policy), with_policy(0, policy), cfg);
  describe_policy(r, *policy, scm.schema());
  r.diagnostics["a_ref"] = a_ref;
  return r;
}

EstimandReport nde_conditional(const Scm& scm, int a_ref, const TruthConfig& cfg) {
  auto policy = std::make_shared<const MediatorPolicy>(
      derive_policy_conditional(scm, a_ref, fit_for(cfg), strata_or_default(scm, cfg.strata)));
  auto r = simulate_contrast(scm, EstimandKind::NDE_CONDITIONAL, with_policy(1, policy),
                             InterventionPlan::set_exposure(a_ref), cfg);
  describe_policy(r, *policy, scm.schema());
  r.diagnostics["a_ref"] = a_ref;
  return r;
}

EstimandReport exact_cte(const Scm& scm) {
  return exact_contrast(scm, EstimandKind::CTE, InterventionPlan::set_exposure(1), InterventionPlan::set_exposure(0));
}

EstimandReport exact_csde(const Scm& scm, std::shared_ptr<const MediatorPolicy> policy) {
  if (!policy) throw PolicyError("CSDE needs a policy");
  return exact_contrast(scm, EstimandKind::CSDE, with_policy(1, policy), with_policy(0, policy));
}

EstimandReport exact_cde(const Scm& scm, const MediatorProfile& profile) {
  return exact_contrast(scm, EstimandKind::CDE, {1, ControlledMediators{profile}}, {0, ControlledMediators{profile}});
}

EstimandReport exact_nde_marginal(const Scm& scm, int a_ref, const std::optional<Stratification>& strata) {
  PolicyFit fit;
  fit.mode = FitMode::Exact;
  auto policy = std::make_shared<const MediatorPolicy>(
      derive_policy_marginal(scm, a_ref, fit, strata_or_default(scm, strata)));
  auto r = exact_contrast(scm, EstimandKind::NDE_MARGINAL, with_policy(1, policy), with_policy(0, policy));
  r.diagnostics["a_ref"] = a_ref;
  return r;
}

EstimandReport exact_nde_conditional(const Scm& scm, int a_ref, const std::optional<Stratification>& strata) {
  PolicyFit fit;
  fit.mode = FitMode::Exact;
  auto policy = std::make_shared<const MediatorPolicy>(
      derive_policy_conditional(scm, a_ref, fit, strata_or_default(scm, strata)));
  auto r = exact_contrast(scm, EstimandKind::NDE_CONDITIONAL, with_policy(1, policy),
                          InterventionPlan::set_exposure(a_ref));
  r.diagnostics["a_ref"] = a_ref;
  return r;
}

}  // namespace lbp
