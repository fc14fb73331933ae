// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Arguments select a subset of criteria (e.g. "2 5").

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "lbp/forward.hpp"
#include "support.hpp"

using namespace lbp;
using namespace lbp::testing;

namespace {

// Pinned tolerances and budgets.
constexpr double kK = 3.0;                    // SE multiple for agreement
constexpr double kSeparation = 5.0;           // SE multiple for a nonzero CTE
constexpr std::size_t kStressN = 1000000;
constexpr double kStressBudget = 60.0;        // seconds, one thread
constexpr std::size_t kSeeds = 20;
constexpr std::size_t kTruthN = 100000;
constexpr double kOracleBudget = 300.0;       // seconds
constexpr std::size_t kObservedN = 50000;
constexpr std::size_t kBootstrap = 200;
constexpr std::size_t kCoverageMin = 18;
constexpr std::size_t kBiasMin = 15;
constexpr std::uint64_t kBaseSeed = 20261017;

const std::vector<std::string> kEnumerable = {"null", "deterministic", "toy2", "confounded-toy2",
                                              "mediator-only-effect", "direct-only-effect", "zero-support"};
const std::vector<std::string> kGolden = {"null", "deterministic", "toy2", "confounded-toy2",
                                          "mediator-only-effect", "direct-only-effect", "zero-support", "stress"};
const std::vector<std::string> kCorrectlySpecified = {"null", "deterministic", "toy2", "confounded-toy2",
                                                      "mediator-only-effect", "direct-only-effect"};

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const Scenario& scenario(const std::string& name) {
  static std::map<std::string, Scenario> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, golden(name)).first;
  return it->second;
}

std::shared_ptr<const MediatorPolicy> exact_g0(const Scenario& s) {
  PolicyFit fit;
  fit.mode = FitMode::Exact;
  return std::make_shared<MediatorPolicy>(derive_policy_marginal(*s.scm, 0, fit, s.strata));
}

std::shared_ptr<const MediatorPolicy> mc_g0(const Scenario& s, std::uint64_t seed) {
  PolicyFit fit;
  fit.mode = FitMode::MonteCarlo;
  fit.n_fit = s.mc.n_policy_fit;
  fit.seed = seed;
  return std::make_shared<MediatorPolicy>(derive_policy_marginal(*s.scm, 0, fit, s.strata));
}

TruthConfig truth(const Scenario& s, std::uint64_t seed, std::size_t n = kTruthN) {
  TruthConfig c;
  c.n = n;
  c.seed = seed;
  c.threads = 1;
  c.strata = s.strata;
  c.n_policy_fit = s.mc.n_policy_fit;
  return c;
}

double combined(double a, double b) { return std::hypot(a, b); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome structural_fidelity() {
  const Scenario& s = scenario("stress");
  const Scm& scm = *s.scm;
  ScmModel model(scm);
  ScmBaseline baseline(scm);
  const auto plan = InterventionPlan::natural();
  ForwardEngine engine({scm.schema(), model, baseline, scm.death_blocks_birth(), scm.shared_mediator_noise()}, plan);
  const NoiseSource noise(derive_seed(kBaseSeed, "acceptance/stress"));
  Trajectory tr(scm.schema());
  ForwardStats stats;
  std::size_t violations = 0;
  std::size_t births = 0;
  Timer timer;
  for (std::size_t i = 0; i < kStressN; ++i) {
    engine.simulate(noise, i, tr, stats);
    if (check_trajectory(tr, scm.schema(), scm.death_blocks_birth())) ++violations;
    births += tr.z2.back() == 1;
  }
  const double secs = timer.seconds();
  std::ostringstream d;
  d << kStressN << " stress trajectories (horizon " << scm.schema().horizon << ", " << births << " births), "
    << violations << " violations, " << fmt("%.1f", secs) << " s single-threaded (budget " << kStressBudget << " s)";
  return {violations == 0 && secs < kStressBudget, d.str()};
}

Outcome oracle_agreement() {
  Timer timer;
  bool pass = true;
  std::ostringstream d;
  for (const auto& name : kEnumerable) {
    const Scenario& s = scenario(name);
    const Scm& scm = *s.scm;
    const auto g0 = exact_g0(s);
    const auto profile = MediatorProfile::survival_and_birth(scm.schema().horizon);
    const std::array<double, 5> exact = {exact_cte(scm).value, exact_csde(scm, g0).value,
                                         exact_cde(scm, profile).value, exact_nde_marginal(scm, 0, s.strata).value,
                                         exact_nde_conditional(scm, 0, s.strata).value};
    std::array<std::size_t, 5> hits{};
    for (std::size_t k = 0; k < kSeeds; ++k) {
      const auto cfg = truth(s, derive_seed(kBaseSeed, "acceptance/oracle/" + name + "/" + std::to_string(k)));
      const std::array<EstimandReport, 5> r = {conditional_total_effect(scm, cfg),
                                               conditional_stochastic_direct_effect(scm, g0, cfg),
                                               controlled_direct_effect(scm, profile, cfg), nde_marginal(scm, 0, cfg),
                                               nde_conditional(scm, 0, cfg)};
      for (std::size_t e = 0; e < 5; ++e) hits[e] += within(r[e].value, exact[e], r[e].mc_se, kK);
    }
    const std::size_t need = (name == "null" || name == "deterministic") ? kSeeds : kSeeds - 1;
    d << "\n    " << name << ":";
    for (std::size_t e = 0; e < 5; ++e) {
      d << " " << to_string(static_cast<EstimandKind>(e)) << " " << hits[e] << "/" << kSeeds;
      if (hits[e] < need) pass = false;
    }
    d << " (need " << need << ")";
  }
  const double secs = timer.seconds();
  if (secs >= kOracleBudget) pass = false;
  return {pass, "5 estimands x " + std::to_string(kSeeds) + " seeds at n = " + std::to_string(kTruthN) + ", " +
                    fmt("%.0f", secs) + " s (budget " + fmt("%.0f", kOracleBudget) + " s)" + d.str()};
}

Outcome policy_equality() {
  bool pass = true;
  std::ostringstream d;
  d << "CSDE(Monte Carlo G^{a=0}, separate seed) vs NDE_MARGINAL(a_ref = 0):";
  for (const auto& name : kGolden) {
    const Scenario& s = scenario(name);
    const auto g = mc_g0(s, derive_seed(kBaseSeed, "acceptance/equality/policy/" + name));
    auto cfg = truth(s, derive_seed(kBaseSeed, "acceptance/equality/csde/" + name), s.mc.n_truth);
    const auto csde = conditional_stochastic_direct_effect(*s.scm, g, cfg);
    cfg.seed = derive_seed(kBaseSeed, "acceptance/equality/nde/" + name);
    cfg.policy_mode = FitMode::MonteCarlo;
    const auto nde = nde_marginal(*s.scm, 0, cfg);
    const double se = combined(csde.mc_se, nde.mc_se);
    const double z = se > 0 ? std::abs(csde.value - nde.value) / se : 0.0;
    const bool ok = std::abs(csde.value - nde.value) <= kK * se;
    pass = pass && ok;
    d << "\n    " << name << ": " << fmt("%.5f", csde.value) << " vs " << fmt("%.5f", nde.value) << ", |diff|/SE "
      << fmt("%.2f", z) << (ok ? "" : " FAIL");
  }
  return {pass, d.str()};
}

Outcome denominator_invariance() {
  bool pass = true;
  std::ostringstream d;
  for (const auto& name : kGolden) {
    const Scenario& s = scenario(name);
    const Scm& scm = *s.scm;
    const int tau = scm.schema().horizon;
    std::vector<std::shared_ptr<const MediatorPolicy>> plans = {
        mc_g0(s, derive_seed(kBaseSeed, "acceptance/crn/" + name)),
        std::make_shared<MediatorPolicy>(MediatorPolicy::constant_hazards(
            tau, s.strata, std::vector<double>(tau, 0.05), std::vector<double>(tau, 0.4)))};
    std::size_t identical = 0, close = 0;
    double worst = 0.0;
    for (std::size_t p = 0; p < plans.size(); ++p) {
      auto cfg = truth(s, derive_seed(kBaseSeed, "acceptance/crn/" + name + "/" + std::to_string(p)), s.mc.n_truth);
      const auto crn = conditional_stochastic_direct_effect(scm, plans[p], cfg);
      identical += crn.arm1.denominator == crn.arm0.denominator;
      cfg.independent_arms = true;
      const auto ind = conditional_stochastic_direct_effect(scm, plans[p], cfg);
      const double n = static_cast<double>(cfg.n);
      const double se = combined(std::sqrt(ind.arm1.denominator * (1 - ind.arm1.denominator) / n),
                                 std::sqrt(ind.arm0.denominator * (1 - ind.arm0.denominator) / n));
      const double diff = std::abs(ind.arm1.denominator - ind.arm0.denominator);
      close += diff <= kK * se;
      if (se > 0) worst = std::max(worst, diff / se);
    }
    const bool ok = identical == plans.size() && close == plans.size();
    pass = pass && ok;
    d << "\n    " << name << ": bit-identical " << identical << "/" << plans.size() << ", independent within "
      << kK << " SE " << close << "/" << plans.size() << " (max " << fmt("%.2f", worst) << " SE)";
  }
  return {pass, d.str()};
}

Outcome mediation_separation() {
  std::ostringstream d;
  const Scenario& m = scenario("mediator-only-effect");
  auto cfg = truth(m, derive_seed(m.seed, "acceptance/separation"), m.mc.n_truth);
  const auto cte_m = conditional_total_effect(*m.scm, cfg);
  const auto csde_m = conditional_stochastic_direct_effect(*m.scm, exact_g0(m), cfg);
  const bool ok_m = std::abs(cte_m.value) > kSeparation * cte_m.mc_se && within(csde_m.value, 0.0, csde_m.mc_se, kK);
  d << "mediator-only: CTE " << fmt("%.5f", cte_m.value) << " (" << fmt("%.1f", std::abs(cte_m.value) / cte_m.mc_se)
    << " SE), CSDE " << fmt("%.5f", csde_m.value) << " (se " << fmt("%.5f", csde_m.mc_se) << ")";
  const Scenario& o = scenario("direct-only-effect");
  cfg = truth(o, derive_seed(o.seed, "acceptance/separation"), o.mc.n_truth);
  const auto cte_o = conditional_total_effect(*o.scm, cfg);
  cfg.seed = derive_seed(o.seed, "acceptance/separation/csde");
  const auto csde_o = conditional_stochastic_direct_effect(*o.scm, exact_g0(o), cfg);
  const double se = combined(cte_o.mc_se, csde_o.mc_se);
  const bool ok_o = std::abs(cte_o.value - csde_o.value) < kK * se;
  d << "; direct-only: CTE " << fmt("%.5f", cte_o.value) << " vs CSDE " << fmt("%.5f", csde_o.value) << " ("
    << fmt("%.2f", std::abs(cte_o.value - csde_o.value) / se) << " combined SE)";
  return {ok_m && ok_o, d.str()};
}

Outcome estimator_consistency() {
  bool pass = true;
  std::ostringstream d;
  Timer timer;
  auto config = [](std::uint64_t seed) {
    EstimatorConfig c;
    c.seed = seed;
    c.bootstrap_replicates = kBootstrap;
    return c;
  };
  for (const auto& name : kCorrectlySpecified) {
    const Scenario& s = scenario(name);
    const Scm& scm = *s.scm;
    const auto g0 = exact_g0(s);
    const double truth_csde = exact_csde(scm, g0).value;
    const double truth_cte = exact_cte(scm).value;
    std::size_t gc = 0, ipw = 0, raw = 0, mis = 0;
    const bool confounded = name == "confounded-toy2";
    for (std::size_t k = 0; k < kSeeds; ++k) {
      const std::uint64_t seed = derive_seed(kBaseSeed, "acceptance/estimators/" + name + "/" + std::to_string(k));
      const auto data = simulate_natural(scm, kObservedN, derive_seed(seed, "observational"));
      const auto a = estimate_csde_gcomp(data, scm, g0, {}, config(derive_seed(seed, "gcomp")));
      const auto b = estimate_csde_ipw(data, scm, g0, {}, config(derive_seed(seed, "ipw")));
      gc += within(a.value, truth_csde, a.mc_se, kK);
      ipw += within(b.value, truth_csde, b.mc_se, kK);
      if (confounded) {
        const auto u = estimate_cte(data, Stratification{}, config(derive_seed(seed, "unadjusted")));
        const auto m = estimate_csde_gcomp(data, scm, g0, {ModelMode::Misspecified, {"l.c"}},
                                           config(derive_seed(seed, "misspecified")));
        raw += !within(u.value, truth_cte, u.mc_se, kK);
        mis += !within(m.value, truth_csde, m.mc_se, kK);
      }
    }
    const bool ok = gc >= kCoverageMin && ipw >= kCoverageMin &&
                    (!confounded || (raw >= kBiasMin && mis >= kBiasMin));
    pass = pass && ok;
    d << "\n    " << name << ": gcomp covers " << gc << "/" << kSeeds << ", ipw covers " << ipw << "/" << kSeeds;
    if (confounded)
      d << ", unadjusted CTE outside " << raw << "/" << kSeeds << ", misspecified gcomp outside " << mis << "/"
        << kSeeds;
  }
  return {pass, "n = " + std::to_string(kObservedN) + ", " + std::to_string(kBootstrap) +
                    " bootstrap replicates, coverage need " + std::to_string(kCoverageMin) + ", bias need " +
                    std::to_string(kBiasMin) + ", " + fmt("%.0f", timer.seconds()) + " s" + d.str()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LBPSIM_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  bool pass = true;
  std::ostringstream d;
  const auto root = std::filesystem::temp_directory_path() / "lbp-acceptance";
  std::filesystem::remove_all(root);
  std::size_t identical = 0;
  for (const auto& name : kGolden) {
    const auto path = (scenario_dir() / (name + ".scenario.json")).string();
    const auto d1 = root / (name + "-t1");
    const auto d3 = root / (name + "-t3");
    const int c1 = run_cli("run --scenario " + path + " --threads 1 --out " + d1.string());
    const int c3 = run_cli("run --scenario " + path + " --threads 3 --out " + d3.string());
    bool same = c1 == c3 && (c1 == 0 || c1 == 2);
    for (const auto* ext : {".report.json", ".summary.csv"}) {
      const auto f = name + ext;
      same = same && std::filesystem::exists(d1 / f) && slurp(d1 / f) == slurp(d3 / f);
    }
    identical += same;
    if (!same) d << " " << name << " differs;";
  }
  pass = identical == kGolden.size();
  return {pass, "lbpsim run with --threads 1 and --threads 3: " + std::to_string(identical) + "/" +
                    std::to_string(kGolden.size()) + " golden scenarios byte-identical" + d.str()};
}

Outcome positivity() {
  const Scenario& s = scenario("zero-support");
  RunOptions opt;
  opt.estimands = false;
  const auto report = run_scenario(s, opt);
  const PositivityReport* birth = nullptr;
  const PositivityReport* observed = nullptr;
  for (const auto& dgn : report.diagnostics) {
    if (!dgn.report) continue;
    if (dgn.request.policy == "birth_t1") birth = &*dgn.report;
    if (dgn.request.policy == "observed_arm0") observed = &*dgn.report;
  }
  if (!birth || !observed) return {false, "diagnostics missing from the zero-support run"};
  const auto flagged = birth->flagged_strata();
  auto has = [&](const std::string& needle) {
    for (const auto& f : flagged)
      if (f.find(needle) != std::string::npos) return true;
    return false;
  };
  const bool exposure = has("exposure l0.x=2");
  const bool mediator = has("mediator arm=1 t=1 l0.x=1 history(z1 at 0, z2 at 0) transition (0,1)");
  std::size_t arm0_flags = 0;
  for (const auto& m : observed->mediator) arm0_flags += m.arm == 0 && m.flagged;
  const bool guarantee = observed->guarantee[0] && arm0_flags == 0;
  std::ostringstream d;
  d << "zero-support: exposure stratum l0.x=2 flagged " << (exposure ? "yes" : "no")
    << ", birth-at-t=1 gap (arm 1, l0.x=1) flagged " << (mediator ? "yes" : "no") << ", " << flagged.size()
    << " flags in total; guarantee for policy = observed arm-0 law: arm0 " << (observed->guarantee[0] ? "true" : "false")
    << " with " << arm0_flags << " arm-0 flags";
  return {exposure && mediator && guarantee, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"structural fidelity", structural_fidelity},
      {"oracle agreement", oracle_agreement},
      {"CSDE at derived policy equals NDE_MARGINAL", policy_equality},
      {"denominator arm-invariance", denominator_invariance},
      {"mediation separation", mediation_separation},
      {"estimator consistency", estimator_consistency},
      {"determinism", determinism},
      {"positivity diagnostics", positivity},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
