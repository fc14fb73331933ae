#pragma once

#include <array>
#include <memory>
#include <vector>

#include "lbp/estimands.hpp"
#include "lbp/models.hpp"

namespace lbp {

enum class Integration { Auto, Exact, MonteCarlo };

struct EstimatorConfig {
  std::size_t bootstrap_replicates = 200;
  std::uint64_t seed = 1;
  int threads = 1;
  double weight_cap = 50.0;
  Integration integration = Integration::Auto;
  std::size_t mc_draws = 100000;  // g-computation Monte Carlo integration
};

// Rejects rows that break a structural rule, naming row index and rule.
void validate_observed(const Population& data, bool death_blocks_birth);

// Standardized (g-formula) CTE over the adjustment strata. An empty
// stratification gives the unadjusted arm-wise contrast.
EstimandReport estimate_cte(const Population& data, const Stratification& adjustment, const EstimatorConfig& cfg);

// Sequential g-computation of the CSDE under a baseline-only policy. Model
// structure comes from the generating SCM.
EstimandReport estimate_csde_gcomp(const Population& data, const Scm& generating,
                                   std::shared_ptr<const MediatorPolicy> policy, const ModelOptions& options,
                                   const EstimatorConfig& cfg);

// Hajek-normalized IPW estimate of the same CSDE.
EstimandReport estimate_csde_ipw(const Population& data, const Scm& generating,
                                 std::shared_ptr<const MediatorPolicy> policy, const ModelOptions& options,
                                 const EstimatorConfig& cfg);

struct IpwWeight {
  double exposure_factor = 1.0;  // 1 / pi(a | l0)
  double mediator_factor = 1.0;  // policy density / natural density
  double raw = 1.0;
  double weight = 1.0;  // capped and Hajek-normalized within arm
  bool truncated = false;
};

// Per-row IPW weights on the full data.
std::vector<IpwWeight> ipw_weights(const Population& data, const Scm& generating, const MediatorPolicy& policy,
                                   const ModelOptions& options, double weight_cap);

// One transition of the policy with positive probability, at (t, stratum,
// mediator history), whose observed support is checked in one arm.
struct SupportGap {
  int arm = 0;
  int t = 0;
  std::uint32_t stratum = 0;
  std::string stratum_label;
  int z1_time = 0, z2_time = 0;
  int z1 = 0, z2 = 0;
  std::uint64_t n_history = 0;  // observed rows in the arm with that history
};

// Policy-supported transitions never observed in the arm, restricted to
// strata present in the data.
std::vector<SupportGap> mediator_support_gaps(const Population& data, int arm, const MediatorPolicy& policy,
                                              bool death_blocks_birth);

struct PositivityReport {
  double epsilon = 0.05;
  struct Exposure {
    std::uint32_t stratum = 0;
    std::string label;
    std::uint64_t n = 0;
    double p_a1 = 0.0;
    bool flagged = false;
  };
  struct Mediator {
    int arm = 0, t = 0;
    std::uint32_t stratum = 0;
    std::string label;
    std::vector<std::vector<int>> covariates;  // observed covariate history l_1..l_t
    int z1_time = 0, z2_time = 0;
    int z1 = 0, z2 = 0;  // policy-supported transition
    double policy_prob = 0.0;
    std::uint64_t n = 0;
    double observed_prob = 0.0;
    bool flagged = false;
  };
  std::vector<Exposure> exposure;
  double exposure_min = 1.0, exposure_max = 0.0;  // over strata, of min(p, 1 - p)
  std::vector<Mediator> mediator;
  std::vector<double> mediator_min_by_t;
  std::array<bool, 2> guarantee{false, false};
  std::array<std::size_t, 2> support_gaps{0, 0};

  std::vector<std::string> flagged_strata() const;
  json to_json() const;
};

PositivityReport positivity_diagnostics(const Population& data, const MediatorPolicy& policy, double epsilon,
                                        bool death_blocks_birth,
                                        const std::optional<Stratification>& exposure_strata = {});

}  // namespace lbp
