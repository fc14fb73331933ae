#include <doctest.h>

#include "lbp/enumerate.hpp"
#include "lbp/forward.hpp"
#include "support.hpp"

using namespace lbp;
using namespace lbp::testing;

namespace {

InterventionPlan with_policy(int a, std::shared_ptr<const MediatorPolicy> p) {
  return InterventionPlan{a, StochasticMediators{std::move(p)}};
}

MediatorPolicy exact_marginal(const Scm& scm, int a_ref) {
  PolicyFit fit;
  fit.mode = FitMode::Exact;
  return derive_policy_marginal(scm, a_ref, fit, Stratification::all_discrete(scm.schema()));
}

// Mediators ignore exposure, baseline and covariates: constant z2 hazard 0.3.
const char* kFlatHazards = R"({
  "horizon": 2,
  "baseline": [{"name": "x", "law": {"kind": "constant", "p": 0.3}}],
  "exposure": {"kind": "logistic", "intercept": 0.0, "coef": {"l0.x": 1.0}},
  "covariates": [{"name": "c", "laws": [
    {"kind": "logistic", "intercept": 0.0, "coef": {"a": 1.0}},
    {"kind": "logistic", "intercept": 0.0, "coef": {"a": 1.0, "z2@1": 1.0}}]}],
  "mediators": {"z1": [{"kind": "constant", "p": 0.0}, {"kind": "constant", "p": 0.0}],
                "z2": [{"kind": "constant", "p": 0.3}, {"kind": "constant", "p": 0.3}]},
  "infant_survival": [{"kind": "logistic", "intercept": 1.0, "coef": {"a": 0.5, "l.c@1": 0.5}},
                      {"kind": "logistic", "intercept": 1.0, "coef": {"a": 0.5, "l.c@2": 0.5}}],
  "infant_hiv_free": {"kind": "logistic", "intercept": 1.0, "coef": {"a": 0.5}}
})";

// L_1 raises the birth hazard at t = 1.
const char* kCovariateToBirth = R"({
  "horizon": 1,
  "baseline": [{"name": "x", "law": {"kind": "constant", "p": 0.5}}],
  "exposure": {"kind": "constant", "p": 0.5},
  "covariates": [{"name": "c", "laws": [{"kind": "logistic", "intercept": 0.0, "coef": {"a": 0.5, "l0.x": 0.5}}]}],
  "mediators": {"z1": [{"kind": "constant", "p": 0.05}],
                "z2": [{"kind": "logistic", "intercept": -0.5, "coef": {"a": 0.3, "l.c@1": 1.5}}]},
  "infant_survival": [{"kind": "constant", "p": 0.9}],
  "infant_hiv_free": {"kind": "constant", "p": 0.9}
})";

}  // namespace

TEST_CASE("controlled survival-and-birth plan forces birth and defined infant nodes") {
  const Scm scm = compile_text(kToy2);
  InterventionPlan plan{1, ControlledMediators{MediatorProfile::survival_and_birth(2)}};
  const auto pop = simulate_counterfactual(scm, plan, 5000, 3);
  for (const auto& tr : pop.rows) {
    CHECK(tr.a == 1);
    CHECK(tr.z2.back() == 1);
    for (auto y1 : tr.y1) CHECK(y1 != kMissing);
    // y2 is still undefined for an infant who died before the horizon.
    CHECK((tr.y2 == kMissing) == (tr.y1.back() == 0));
  }
}

TEST_CASE("controlled profiles must be monotone and end with a birth") {
  const Scm scm = compile_text(kToy2);
  MediatorProfile bad{{0, 0}, {1, 0}};
  CHECK_FALSE(bad.check(2, true).empty());
  InterventionPlan plan{1, ControlledMediators{bad}};
  CHECK_THROWS(plan.check(scm));
  CHECK_THROWS(simulate_counterfactual(scm, plan, 10, 1));
  MediatorProfile no_birth{{0, 0}, {0, 0}};
  CHECK_FALSE(no_birth.check(2, true).empty());
  MediatorProfile dead_then_born{{1, 1}, {0, 1}};
  CHECK_FALSE(dead_then_born.check(2, true).empty());
  CHECK(dead_then_born.check(2, false).empty());
}

TEST_CASE("do(a) with natural mediators equals the natural law restricted to arm a") {
  const Scm scm = compile_text(kToy2);
  const auto natural = enumerate_exact(scm);
  for (int a = 0; a < 2; ++a) {
    const auto cf = enumerate_exact(scm, InterventionPlan::set_exposure(a));
    const double pa = natural.probability([a](const Trajectory& tr) { return tr.a == a; });
    for (int t = 1; t <= 2; ++t) {
      const auto i = static_cast<std::size_t>(t - 1);
      auto joint = [&](auto ev) {
        return natural.probability([&](const Trajectory& tr) { return tr.a == a && ev(tr); }) / pa;
      };
      auto z2 = [i](const Trajectory& tr) { return tr.z2[i] == 1; };
      auto y = [](const Trajectory& tr) { return tr.y == 1; };
      CHECK(cf.probability(z2) == doctest::Approx(joint(z2)).epsilon(1e-12));
      CHECK(cf.probability(y) == doctest::Approx(joint(y)).epsilon(1e-12));
    }
  }
}

TEST_CASE("a policy with certain birth at t = 1 gives denominator 1 in both arms") {
  const Scm scm = compile_text(kToy2);
  auto p = std::make_shared<const MediatorPolicy>(
      MediatorPolicy::constant_hazards(2, Stratification::all_discrete(scm.schema()), {0.0, 0.0}, {1.0, 0.0}));
  for (int a = 0; a < 2; ++a) {
    const auto pop = simulate_counterfactual(scm, with_policy(a, p), 5000, 8);
    for (const auto& tr : pop.rows) CHECK(tr.z2[0] == 1);
  }
}

TEST_CASE("counterfactual policies must be materialized") {
  const Scm scm = compile_text(kToy2);
  InterventionPlan plan{1, StochasticMediators{nullptr}};
  CHECK_THROWS_AS(plan.check(scm), PolicyError);
}

TEST_CASE("derive_policy_marginal: constant hazard recovered in every stratum") {
  const Scm scm = compile_text(kFlatHazards);
  const auto strata = Stratification::all_discrete(scm.schema());
  PolicyFit fit;
  fit.mode = FitMode::MonteCarlo;
  fit.n_fit = 100000;
  fit.seed = 17;
  const auto mc = derive_policy_marginal(scm, 0, fit, strata);
  const auto ex = exact_marginal(scm, 0);
  std::size_t rows = 0;
  for (int t = 1; t <= 2; ++t) {
    for (const auto& [key, cell] : mc.tables[static_cast<std::size_t>(t - 1)]) {
      const auto [d1, d2] = decode_mediator_history(key.mediators, 2);
      if (d2 > 0) continue;  // already born
      ++rows;
      const TransitionCell* e = ex.find(t, key);
      REQUIRE(e != nullptr);
      CHECK(e->p_z2[0] == doctest::Approx(0.3).epsilon(1e-12));
      const double se = std::sqrt(0.3 * 0.7 / cell.weight);
      CHECK(std::abs(cell.p_z2[0] - 0.3) <= 3 * se);
    }
  }
  CHECK(rows == 4);  // two strata, t = 1 and t = 2 without prior birth
}

TEST_CASE("derive_policy_marginal: deterministic birth at t = 1") {
  const Scm scm = golden_scm("deterministic");
  const auto p = exact_marginal(scm, 0);
  const TransitionCell* c = p.find(1, CellKey{0, 0, 0});
  REQUIRE(c != nullptr);
  CHECK(c->p_z1 == 0.0);
  CHECK(c->p_z2[0] == 1.0);
  CHECK(policy_birth_probability(p, 0, true) == 1.0);
}

TEST_CASE("derive_policy_marginal: toy2 Monte Carlo hazards match exact ones") {
  const Scm scm = compile_text(kToy2);
  const auto strata = Stratification::all_discrete(scm.schema());
  PolicyFit fit;
  fit.mode = FitMode::MonteCarlo;
  fit.n_fit = 200000;
  fit.seed = 5;
  const auto mc = derive_policy_marginal(scm, 0, fit, strata);
  const auto ex = exact_marginal(scm, 0);
  CHECK(mc.source == "monte_carlo");
  CHECK(ex.source == "exact");
  for (int t = 1; t <= 2; ++t) {
    for (const auto& [key, cell] : mc.tables[static_cast<std::size_t>(t - 1)]) {
      const TransitionCell* e = ex.find(t, key);
      REQUIRE(e != nullptr);
      const auto [d1, d2] = decode_mediator_history(key.mediators, 2);
      if (d1 == 0) {
        const double se = std::sqrt(e->p_z1 * (1 - e->p_z1) / cell.weight);
        CHECK(std::abs(cell.p_z1 - e->p_z1) <= 3 * se);
      }
      if (d2 == 0) {
        const double w0 = cell.weight * (1 - cell.p_z1);
        const double se = std::sqrt(e->p_z2[0] * (1 - e->p_z2[0]) / w0);
        CHECK(std::abs(cell.p_z2[0] - e->p_z2[0]) <= 3 * se);
      }
    }
  }
}

TEST_CASE("derive_policy_marginal: empty stratum is an error") {
  json doc = json::parse(kToy2);
  doc["baseline"][0]["law"] = {{"kind", "constant"}, {"p", 0.0}};
  const Scm scm = compile_json(doc);
  PolicyFit fit;
  fit.mode = FitMode::MonteCarlo;
  fit.n_fit = 1000;
  try {
    (void)derive_policy_marginal(scm, 0, fit, Stratification::all_discrete(scm.schema()));
    FAIL("expected PolicyError");
  } catch (const PolicyError& e) {
    CHECK(std::string(e.what()).find("l0.x=1") != std::string::npos);
  }
}

TEST_CASE("derive_policy_conditional: irrelevant covariates give the marginal policy") {
  const Scm scm = compile_text(kFlatHazards);
  PolicyFit fit;
  fit.mode = FitMode::Exact;
  const auto strata = Stratification::all_discrete(scm.schema());
  const auto cond = derive_policy_conditional(scm, 0, fit, strata);
  const auto marg = derive_policy_marginal(scm, 0, fit, strata);
  CHECK(cond.covariate_history);
  REQUIRE(cond.fallback != nullptr);
  for (int t = 1; t <= 2; ++t)
    for (const auto& [key, cell] : cond.tables[static_cast<std::size_t>(t - 1)]) {
      const TransitionCell* m = marg.find(t, CellKey{key.stratum, 0, key.mediators});
      REQUIRE(m != nullptr);
      CHECK(cell.p_z1 == doctest::Approx(m->p_z1).epsilon(1e-12));
      CHECK(cell.p_z2[0] == doctest::Approx(m->p_z2[0]).epsilon(1e-12));
    }
}

TEST_CASE("derive_policy_conditional: covariate effect on birth shows across L_1 strata") {
  const Scm scm = compile_text(kCovariateToBirth);
  PolicyFit fit;
  fit.mode = FitMode::Exact;
  const auto strata = Stratification::all_discrete(scm.schema());
  const auto cond = derive_policy_conditional(scm, 0, fit, strata);
  const auto marg = derive_policy_marginal(scm, 0, fit, strata);
  for (std::uint32_t s = 0; s < 2; ++s) {
    // covariate history code at t = 1 is the level of c
    const TransitionCell* c0 = cond.find(1, CellKey{s, 0, 0});
    const TransitionCell* c1 = cond.find(1, CellKey{s, 1, 0});
    const TransitionCell* m = marg.find(1, CellKey{s, 0, 0});
    REQUIRE(c0);
    REQUIRE(c1);
    REQUIRE(m);
    CHECK(c1->p_z2[0] > c0->p_z2[0]);  // planted coefficient is positive
    CHECK(m->p_z2[0] > c0->p_z2[0]);
    CHECK(m->p_z2[0] < c1->p_z2[0]);
  }
}

TEST_CASE("the conditional policy reproduces the natural mediator law under its reference arm") {
  const Scm scm = compile_text(kToy2);
  PolicyFit fit;
  fit.mode = FitMode::Exact;
  auto cond = std::make_shared<const MediatorPolicy>(
      derive_policy_conditional(scm, 0, fit, Stratification::all_discrete(scm.schema())));
  const auto natural = enumerate_exact(scm, InterventionPlan::set_exposure(0));
  const auto policy = enumerate_exact(scm, with_policy(0, cond));
  CHECK(policy.policy_fallbacks == 0);
  // Joint law of (z1, z2, y) paths.
  auto key = [](const Trajectory& tr) {
    std::string k;
    for (std::size_t i = 0; i < tr.z1.size(); ++i) k += std::to_string(tr.z1[i]) + std::to_string(tr.z2[i]);
    return k + std::to_string(tr.y);
  };
  std::map<std::string, double> a, b;
  for (const auto& at : natural.atoms) a[key(at.tr)] += at.p;
  for (const auto& at : policy.atoms) b[key(at.tr)] += at.p;
  REQUIRE(a.size() == b.size());
  for (const auto& [k, p] : a) CHECK(b[k] == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("policy mediator draws are shared across arms under common random numbers") {
  const Scm scm = compile_text(kToy2);
  auto p = std::make_shared<const MediatorPolicy>(exact_marginal(scm, 0));
  const auto one = simulate_counterfactual(scm, with_policy(1, p), 20000, 77);
  const auto zero = simulate_counterfactual(scm, with_policy(0, p), 20000, 77);
  bool same = true;
  for (std::size_t i = 0; i < one.rows.size(); ++i)
    same = same && one.rows[i].z1 == zero.rows[i].z1 && one.rows[i].z2 == zero.rows[i].z2;
  CHECK(same);
}

TEST_CASE("severance: mediator-law coefficients do not reach policy or controlled plans") {
  const Scm scm = compile_text(kToy2);
  json doc = json::parse(kToy2);
  doc["mediators"]["z2"][0]["coef"]["a"] = 3.0;
  doc["mediators"]["z1"][1]["intercept"] = -1.0;
  const Scm changed = compile_json(doc);
  auto p = std::make_shared<const MediatorPolicy>(exact_marginal(scm, 0));
  for (const auto& plan : {with_policy(1, p), InterventionPlan{0, ControlledMediators{MediatorProfile::survival_and_birth(2)}}}) {
    const auto x = simulate_counterfactual(scm, plan, 5000, 4);
    const auto y = simulate_counterfactual(changed, plan, 5000, 4);
    CHECK(x.rows == y.rows);
  }
  const auto nat_x = simulate_counterfactual(scm, InterventionPlan::set_exposure(1), 5000, 4);
  const auto nat_y = simulate_counterfactual(changed, InterventionPlan::set_exposure(1), 5000, 4);
  CHECK_FALSE(nat_x.rows == nat_y.rows);
}

TEST_CASE("downstream covariates respond to a drawn birth") {
  const Scm scm = compile_text(kToy2);  // z2@1 -> c at t = 2
  auto p = std::make_shared<const MediatorPolicy>(exact_marginal(scm, 0));
  const auto law = enumerate_exact(scm, with_policy(1, p));
  const double born = law.probability([](const Trajectory& tr) { return tr.z2[0] == 1; });
  const double c_born = law.probability([](const Trajectory& tr) { return tr.z2[0] == 1 && tr.cov(2, 0) == 1; }) / born;
  const double c_not = law.probability([](const Trajectory& tr) { return tr.z2[0] == 0 && tr.cov(2, 0) == 1; }) / (1 - born);
  CHECK(c_born > c_not + 0.01);
}

TEST_CASE("policy JSON round trip and digest") {
  const Scm scm = compile_text(kToy2);
  PolicyFit fit;
  fit.mode = FitMode::Exact;
  const auto strata = Stratification::all_discrete(scm.schema());
  for (const auto& p : {derive_policy_marginal(scm, 0, fit, strata), derive_policy_conditional(scm, 1, fit, strata)}) {
    const json j = p.to_json(scm.schema());
    const auto back = MediatorPolicy::from_json(j, scm.schema());
    CHECK(back.to_json(scm.schema()).dump() == j.dump());
    CHECK(back.digest(scm.schema()) == p.digest(scm.schema()));
    CHECK(back.kind == p.kind);
  }
}

TEST_CASE("data-adaptive policy equals observed arm frequencies") {
  const Scm scm = compile_text(kToy2);
  const auto data = simulate_natural(scm, 20000, 31);
  const auto strata = Stratification::all_discrete(scm.schema());
  const auto p = fit_policy_from_data(data, 0, strata);
  CHECK(p.kind == PolicyKind::DataAdaptive);
  double n = 0, births = 0;
  for (const auto& tr : data.rows) {
    if (tr.a != 0 || tr.l0[0] != 0.0 || tr.z1[0] != 0) continue;
    ++n;
    births += tr.z2[0];
  }
  const TransitionCell* c = p.find(1, CellKey{0, 0, 0});
  REQUIRE(c);
  CHECK(c->p_z2[0] == doctest::Approx(births / n).epsilon(1e-12));
}
