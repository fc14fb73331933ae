#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lbp/estimators.hpp"
#include "lbp/forward.hpp"
#include "support.hpp"

using namespace lbp;
using namespace lbp::testing;

namespace {

constexpr double kToy2Cte = 0.13927148590043548;
constexpr double kToy2Csde = 0.14491854000722382;

EstimatorConfig est(std::uint64_t seed, std::size_t reps = 100) {
  EstimatorConfig c;
  c.seed = seed;
  c.bootstrap_replicates = reps;
  c.threads = 2;
  return c;
}

std::shared_ptr<const MediatorPolicy> exact_g(const Scm& scm, int a_ref) {
  PolicyFit fit;
  fit.mode = FitMode::Exact;
  return std::make_shared<MediatorPolicy>(
      derive_policy_marginal(scm, a_ref, fit, Stratification::all_discrete(scm.schema())));
}

Stratification by_x(const Scm& scm) { return Stratification::of(scm.schema(), {"x"}); }

// Mediators depend on exposure and baseline only, so a saturated fit on
// (a, x) is the true law.
const char* kSaturated = R"({
  "horizon": 2,
  "baseline": [{"name": "x", "law": {"kind": "constant", "p": 0.4}}],
  "exposure": {"kind": "logistic", "intercept": -0.2, "coef": {"l0.x": 0.8}},
  "covariates": [{"name": "c", "laws": [
    {"kind": "logistic", "intercept": -0.3, "coef": {"a": 0.8}},
    {"kind": "logistic", "intercept": -0.5, "coef": {"a": 0.7, "l.c@1": 1.0}}]}],
  "mediators": {
    "z1": [{"kind": "table", "parents": ["a", "l0.x"], "p": [0.05, 0.08, 0.03, 0.04]},
           {"kind": "table", "parents": ["a", "l0.x"], "p": [0.05, 0.08, 0.03, 0.04]}],
    "z2": [{"kind": "table", "parents": ["a", "l0.x"], "p": [0.3, 0.4, 0.45, 0.5]},
           {"kind": "table", "parents": ["a", "l0.x"], "p": [0.35, 0.45, 0.5, 0.55]}]},
  "infant_survival": [{"kind": "constant", "p": 0.9}, {"kind": "constant", "p": 0.92}],
  "infant_hiv_free": {"kind": "logistic", "intercept": 1.0, "coef": {"a": 0.8, "l.c@2": -0.7}}
})";

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("observed data validation names the row and the rule") {
  const Scm scm = compile_text(kToy2);
  auto pop = simulate_natural(scm, 10, 1);
  CHECK_NOTHROW(validate_observed(pop, true));
  auto& tr = pop.rows[3];
  tr.z2[0] = 1;
  tr.z2[1] = 0;
  try {
    validate_observed(pop, true);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
}

TEST_CASE("randomized exposure: adjusted and unadjusted CTE agree") {
  const Scm scm = compile_text(kToy2);
  const auto data = simulate_natural(scm, 50000, 7);
  const auto adj = estimate_cte(data, by_x(scm), est(1));
  const auto raw = estimate_cte(data, Stratification{}, est(1));
  CHECK(std::abs(adj.value - raw.value) < 3.0 * std::max(adj.mc_se, raw.mc_se));
  CHECK(within(adj.value, kToy2Cte, adj.mc_se));
  CHECK(adj.method == "gformula");
  CHECK(std::abs(adj.value - (adj.arm1.ratio - adj.arm0.ratio)) <= 1e-12);
}

TEST_CASE("null data: g-computation and IPW are zero within 3 bootstrap SE") {
  const Scm& scm = golden_scm("null");
  const auto data = simulate_natural(scm, 50000, 8);
  const auto g = exact_g(scm, 0);
  const auto gc = estimate_csde_gcomp(data, scm, g, {}, est(2));
  const auto ipw = estimate_csde_ipw(data, scm, g, {}, est(2));
  CHECK(within(gc.value, 0.0, gc.mc_se));
  CHECK(within(ipw.value, 0.0, ipw.mc_se));
}

TEST_CASE("toy2: both CSDE estimators cover the truth and agree") {
  const Scm scm = compile_text(kToy2);
  const auto data = simulate_natural(scm, 50000, 9);
  const auto g = exact_g(scm, 0);
  const auto gc = estimate_csde_gcomp(data, scm, g, {}, est(3));
  const auto ipw = estimate_csde_ipw(data, scm, g, {}, est(3));
  CHECK(within(gc.value, kToy2Csde, gc.mc_se));
  CHECK(within(ipw.value, kToy2Csde, ipw.mc_se));
  CHECK(std::abs(gc.value - ipw.value) < 3.0 * std::hypot(gc.mc_se, ipw.mc_se));
  CHECK(gc.method == "gcomp");
  CHECK(ipw.method == "ipw");
}

TEST_CASE("confounded toy2: unadjusted and misspecified estimators miss the truth") {
  const Scenario s = golden("confounded-toy2");
  const Scm& scm = *s.scm;
  const auto data = simulate_natural(scm, 50000, 10);
  const double cte = exact_cte(scm).value;
  const double csde = exact_nde_marginal(scm, 0).value;
  const auto adj = estimate_cte(data, by_x(scm), est(4));
  const auto raw = estimate_cte(data, Stratification{}, est(4));
  CHECK(within(adj.value, cte, adj.mc_se));
  CHECK_FALSE(within(raw.value, cte, raw.mc_se));
  const auto g = exact_g(scm, 0);
  const auto good = estimate_csde_gcomp(data, scm, g, {}, est(4));
  const auto bad = estimate_csde_gcomp(data, scm, g, {ModelMode::Misspecified, {"l.c"}}, est(4));
  CHECK(within(good.value, csde, good.mc_se));
  CHECK_FALSE(within(bad.value, csde, bad.mc_se));
}

TEST_CASE("IPW weights are nonnegative and Hajek-normalized within arm") {
  const Scm scm = compile_text(kToy2);
  const auto data = simulate_natural(scm, 20000, 11);
  const auto w = ipw_weights(data, scm, *exact_g(scm, 0), {}, 50.0);
  REQUIRE(w.size() == data.rows.size());
  double sum[2] = {0, 0};
  double count[2] = {0, 0};
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(w[i].weight >= 0.0);
    CHECK(w[i].raw >= 0.0);
    sum[data.rows[i].a] += w[i].weight;
    count[data.rows[i].a] += 1.0;
  }
  CHECK(std::abs(sum[0] - count[0]) <= 1e-9 * count[0]);
  CHECK(std::abs(sum[1] - count[1]) <= 1e-9 * count[1]);
}

TEST_CASE("a policy equal to the fitted arm-0 law gives mediator factors near 1 in arm 0") {
  const Scm scm = compile_text(kSaturated);
  const auto data = simulate_natural(scm, 50000, 12);
  const auto observed = std::make_shared<MediatorPolicy>(fit_policy_from_data(data, 0, by_x(scm)));
  const auto w = ipw_weights(data, scm, *observed, {}, 50.0);
  double worst = 0.0, mean = 0.0;
  std::size_t n0 = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (data.rows[i].a != 0) continue;
    worst = std::max(worst, std::abs(w[i].mediator_factor - 1.0));
    mean += w[i].mediator_factor;
    ++n0;
  }
  mean /= static_cast<double>(n0);
  CAPTURE(worst);
  CHECK(worst < 0.1);
  CHECK(mean == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("positivity diagnostics") {
  SUBCASE("randomized exposure: minimum near one half, no flags") {
    const Scm scm = compile_text(kToy2);
    const auto data = simulate_natural(scm, 20000, 13);
    const auto r = positivity_diagnostics(data, *exact_g(scm, 0), 0.05, true);
    CHECK(r.exposure_min == doctest::Approx(0.5).epsilon(0.05));
    for (const auto& e : r.exposure) CHECK_FALSE(e.flagged);
    for (const auto& m : r.mediator) {
      CHECK(m.observed_prob >= 0.0);
      CHECK(m.observed_prob <= 1.0);
    }
  }
  SUBCASE("zero support: exposure and birth-at-t=1 strata flagged, guarantee for the observed arm") {
    const Scenario s = golden("zero-support");
    const Scm& scm = *s.scm;
    const auto data = simulate_natural(scm, 20000, 14);
    const auto birth = std::make_shared<MediatorPolicy>(MediatorPolicy::constant_hazards(
        2, Stratification::all_discrete(scm.schema()), {0.0, 0.0}, {0.5, 0.5}));
    const auto r = positivity_diagnostics(data, *birth, 0.05, true);
    const auto flagged = r.flagged_strata();
    auto has = [&](const std::string& needle) {
      return std::any_of(flagged.begin(), flagged.end(),
                         [&](const std::string& f) { return f.find(needle) != std::string::npos; });
    };
    CHECK(has("exposure l0.x=2"));
    CHECK(has("arm=1 t=1 l0.x=1"));
    CHECK(r.support_gaps[1] > 0);

    const auto observed = std::make_shared<MediatorPolicy>(fit_policy_from_data(data, 0, Stratification::all_discrete(scm.schema())));
    const auto g = positivity_diagnostics(data, *observed, 0.05, true);
    CHECK(g.guarantee[0]);
    CHECK(g.support_gaps[0] == 0);
    CHECK_FALSE(r.to_json().empty());
  }
}

TEST_CASE("estimators raise positivity errors naming the stratum") {
  const Scenario s = golden("zero-support");
  const Scm& scm = *s.scm;
  const auto data = simulate_natural(scm, 20000, 15);
  try {
    estimate_cte(data, Stratification::all_discrete(scm.schema()), est(1, 0));
    FAIL("expected a positivity error");
  } catch (const PositivityError& e) {
    REQUIRE_FALSE(e.strata().empty());
    CHECK(e.strata().front().find("l0.x=2") != std::string::npos);
  }
  const auto birth = std::make_shared<MediatorPolicy>(MediatorPolicy::constant_hazards(
      2, Stratification::all_discrete(scm.schema()), {0.0, 0.0}, {0.5, 0.5}));
  try {
    estimate_csde_gcomp(data, scm, birth, {}, est(1, 0));
    FAIL("expected a positivity error");
  } catch (const PositivityError& e) {
    REQUIRE_FALSE(e.strata().empty());
    CHECK(e.strata().front().find("a=1") != std::string::npos);
  }
  CHECK_THROWS_AS(estimate_csde_ipw(data, scm, birth, {}, est(1, 0)), PositivityError);
}

TEST_CASE("zero bootstrap replicates leave the SE undefined") {
  const Scm scm = compile_text(kToy2);
  const auto data = simulate_natural(scm, 2000, 16);
  const auto r = estimate_cte(data, by_x(scm), est(1, 0));
  CHECK(std::isnan(r.mc_se));
  CHECK(std::isnan(EstimandReport::from_json(r.to_json()).mc_se));
}

TEST_CASE("consistency sweep on toy2: median error shrinks with n") {
  const Scm scm = compile_text(kToy2);
  const auto g = exact_g(scm, 0);
  std::vector<double> prev_gc, prev_ipw;
  double last_gc = 1e9, last_ipw = 1e9;
  for (std::size_t n : {2000u, 10000u, 50000u}) {
    std::vector<double> err_gc, err_ipw;
    for (std::uint64_t s = 1; s <= 20; ++s) {
      const auto data = simulate_natural(scm, n, 5000 + s);
      err_gc.push_back(std::abs(estimate_csde_gcomp(data, scm, g, {}, est(s, 0)).value - kToy2Csde));
      err_ipw.push_back(std::abs(estimate_csde_ipw(data, scm, g, {}, est(s, 0)).value - kToy2Csde));
    }
    const double m_gc = median(err_gc), m_ipw = median(err_ipw);
    CAPTURE(n);
    CHECK(m_gc < last_gc);
    CHECK(m_ipw < last_ipw);
    last_gc = m_gc;
    last_ipw = m_ipw;
  }
}
