#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lbp/scm.hpp"

namespace lbp {

// Discretization of baseline covariates into strata. Discrete covariates
// contribute one level each; continuous ones need explicit cut points.
class Stratification {
 public:
  struct Var {
    std::string name;
    int index = 0;
    std::vector<double> cuts;  // continuous only, ascending
    int levels = 1;
  };

  Stratification() = default;
  // Every discrete baseline covariate, in schema order.
  static Stratification all_discrete(const Schema& schema);
  // Named baseline covariates ("x" or "l0.x"); continuous ones need cuts.
  static Stratification of(const Schema& schema, const std::vector<std::string>& names,
                           const std::map<std::string, std::vector<double>>& cuts = {});

  std::uint32_t stratum(const Trajectory& tr) const { return stratum(tr.l0); }
  std::uint32_t stratum(const std::vector<double>& l0) const;
  std::uint32_t count() const;
  std::string label(std::uint32_t stratum) const;
  const std::vector<Var>& vars() const { return vars_; }

  json to_json() const;
  static Stratification from_json(const json& j, const Schema& schema);

 private:
  std::vector<Var> vars_;
};

inline constexpr std::uint32_t kStratumBudget = 10000;

// Key of one row of a mediator transition table at a given t. Mediator
// history is summarized by the first-event times of z1 and z2 (0 = none yet),
// which is lossless for absorbing indicators.
struct CellKey {
  std::uint32_t stratum = 0;
  std::uint64_t covariates = 0;  // packed covariate history, conditional tables only
  std::uint32_t mediators = 0;
  auto operator<=>(const CellKey&) const = default;
};

std::uint32_t mediator_history_code(const Trajectory& tr, int t);  // history up to t-1
std::pair<int, int> decode_mediator_history(std::uint32_t code, int horizon);
// Packs covariates at times 1..t; needs the schema for level counts.
std::uint64_t covariate_history_code(const Trajectory& tr, const Schema& schema, int t);
std::vector<std::vector<int>> decode_covariate_history(std::uint64_t code, const Schema& schema, int t);

// Sequential hazards of one table row: P(z1_t = 1) while z1 is not yet
// absorbed, then P(z2_t = 1 | z1_t) while z2 is not yet absorbed.
struct TransitionCell {
  double p_z1 = 0.0;
  std::array<double, 2> p_z2{0.0, 0.0};
  double weight = 0.0;  // individuals or probability mass that reached the row
};

// Probability that a policy row moves a history with first-event times
// (d1, d2) to (z1_t, z2_t) = (v1, v2), with absorption and death-blocks-birth.
double transition_probability(const TransitionCell& cell, int d1, int d2, int v1, int v2, bool death_blocks_birth);

enum class PolicyKind { KnownConditionalOnBaseline, CounterfactualMarginal, CounterfactualConditional, DataAdaptive };

const char* to_string(PolicyKind kind);

// A materialized mediator distribution: explicit transition tables that
// depend on baseline strata and mediator history, and for conditional
// policies also on the time-varying covariate history.
class MediatorPolicy {
 public:
  PolicyKind kind = PolicyKind::KnownConditionalOnBaseline;
  std::optional<int> reference_exposure;
  std::string source;  // "known", "exact", "monte_carlo", "observed"
  int horizon = 1;
  Stratification strata;
  bool covariate_history = false;
  std::vector<std::map<CellKey, TransitionCell>> tables;  // index t-1
  // Conditional policies fall back to this marginal table for histories not
  // seen while deriving.
  std::shared_ptr<const MediatorPolicy> fallback;

  const TransitionCell* find(int t, const CellKey& key) const;

  // Same hazards for every stratum and mediator history.
  static MediatorPolicy constant_hazards(int horizon, const Stratification& strata,
                                         const std::vector<double>& z1_hazard,
                                         const std::vector<double>& z2_hazard);

  json to_json(const Schema& schema) const;
  static MediatorPolicy from_json(const json& j, const Schema& schema);
  std::string digest(const Schema& schema) const;
};

// How a counterfactual mediator law is materialized.
enum class FitMode { MonteCarlo, Exact, Auto };

struct PolicyFit {
  FitMode mode = FitMode::Auto;
  std::size_t n_fit = 200000;
  std::uint64_t seed = 1;
  int threads = 1;
};

// G^{a_ref}: counterfactual mediator law under do(A = a_ref) given baseline
// stratum and mediator history. Throws PolicyError naming any empty stratum.
MediatorPolicy derive_policy_marginal(const Scm& scm, int a_ref, const PolicyFit& fit,
                                      const Stratification& strata);

// Gamma^{a_ref}: the same law additionally conditioned on the realized
// covariate history. Carries the marginal policy from the same fit as its
// fallback.
MediatorPolicy derive_policy_conditional(const Scm& scm, int a_ref, const PolicyFit& fit,
                                         const Stratification& strata);

// Data-adaptive policy: the observed mediator law in one exposure arm given
// baseline stratum and mediator history, by empirical frequencies.
MediatorPolicy fit_policy_from_data(const Population& data, int arm, const Stratification& strata);

// Probability that a policy ends with z2 = 1 at the horizon, for one stratum.
double policy_birth_probability(const MediatorPolicy& policy, std::uint32_t stratum, bool death_blocks_birth);

}  // namespace lbp
