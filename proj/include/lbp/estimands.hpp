#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "lbp/intervention.hpp"

namespace lbp {

enum class EstimandKind { CTE, CSDE, CDE, NDE_MARGINAL, NDE_CONDITIONAL };

const char* to_string(EstimandKind kind);
EstimandKind estimand_from_string(const std::string& s);  // throws Error

// One exposure arm of a contrast. numerator = P(Y = 1 and Z2_tau = 1),
// denominator = P(Z2_tau = 1). `conditional` is the frequency of Y = 1 among
// trajectories with a live birth, computed separately from the ratio.
struct ArmDetail {
  int exposure = 0;
  std::string regime;  // "natural", "controlled", "policy"
  double numerator = 0.0;
  double denominator = 0.0;
  double ratio = 0.0;
  double conditional = 0.0;
  std::uint64_t n = 0, births = 0, events = 0;

  json to_json() const;
  static ArmDetail from_json(const json& j);
};

struct EstimandReport {
  EstimandKind estimand = EstimandKind::CTE;
  std::string method;  // "monte_carlo", "oracle", "gformula", "gcomp", "ipw"
  double value = 0.0;
  double mc_se = 0.0;
  ArmDetail arm1, arm0;
  std::uint64_t n_sim = 0;
  std::uint64_t seed = 0;
  std::string plan_digest;
  json diagnostics = json::object();

  json to_json() const;
  static EstimandReport from_json(const json& j);
};

struct TruthConfig {
  std::size_t n = 100000;
  std::uint64_t seed = 1;
  int threads = 1;
  // Separate noise seeds per arm instead of common random numbers.
  bool independent_arms = false;
  // Policy materialization for the natural direct effects.
  FitMode policy_mode = FitMode::Auto;
  std::size_t n_policy_fit = 200000;
  std::optional<Stratification> strata;  // default: every discrete baseline covariate
};

// Monte Carlo ground truth.
EstimandReport conditional_total_effect(const Scm& scm, const TruthConfig& cfg);
EstimandReport conditional_stochastic_direct_effect(const Scm& scm, std::shared_ptr<const MediatorPolicy> policy,
                                                    const TruthConfig& cfg);
EstimandReport controlled_direct_effect(const Scm& scm, const MediatorProfile& profile, const TruthConfig& cfg);
EstimandReport nde_marginal(const Scm& scm, int a_ref, const TruthConfig& cfg);
EstimandReport nde_conditional(const Scm& scm, int a_ref, const TruthConfig& cfg);

// Exact values by enumeration (mc_se = 0). Policies are derived exactly.
EstimandReport exact_cte(const Scm& scm);
EstimandReport exact_csde(const Scm& scm, std::shared_ptr<const MediatorPolicy> policy);
EstimandReport exact_cde(const Scm& scm, const MediatorProfile& profile);
EstimandReport exact_nde_marginal(const Scm& scm, int a_ref, const std::optional<Stratification>& strata = {});
EstimandReport exact_nde_conditional(const Scm& scm, int a_ref, const std::optional<Stratification>& strata = {});

// Contrast of two arbitrary plans, for callers that build their own.
EstimandReport simulate_contrast(const Scm& scm, EstimandKind kind, const InterventionPlan& plan1,
                                 const InterventionPlan& plan0, const TruthConfig& cfg);
EstimandReport exact_contrast(const Scm& scm, EstimandKind kind, const InterventionPlan& plan1,
                              const InterventionPlan& plan0);

}  // namespace lbp
