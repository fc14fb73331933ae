#include <algorithm>
#include <map>
#include <tuple>

#include "lbp/estimators.hpp"

namespace lbp {

namespace {

struct Transition {
  int v1, v2;
  double p;
};

// Reachable mediator histories of a baseline-only policy, per stratum and t,
// with the transitions that have positive probability from each.
using Reach = std::vector<std::map<std::uint32_t, std::vector<Transition>>>;  // index t-1

Reach policy_reach(const MediatorPolicy& policy, std::uint32_t stratum, bool dbb) {
  const int tau = policy.horizon;
  Reach reach(static_cast<std::size_t>(tau));
  std::vector<std::uint32_t> frontier{0};
  for (int t = 1; t <= tau; ++t) {
    std::vector<std::uint32_t> next;
    for (const auto code : frontier) {
      const auto [d1, d2] = decode_mediator_history(code, tau);
      const TransitionCell* cell = policy.find(t, CellKey{stratum, 0, code});
      if (!cell)
        throw PolicyError("policy has no transition row at t=" + std::to_string(t) + " for stratum " +
                          policy.strata.label(stratum));
      auto& out = reach[static_cast<std::size_t>(t - 1)][code];
      for (int v1 = 0; v1 < 2; ++v1) {
        for (int v2 = 0; v2 < 2; ++v2) {
          const double q = transition_probability(*cell, d1, d2, v1, v2, dbb);
          if (q <= 0.0) continue;
          out.push_back({v1, v2, q});
          const int n1 = d1 > 0 ? d1 : (v1 ? t : 0);
          const int n2 = d2 > 0 ? d2 : (v2 ? t : 0);
          next.push_back(static_cast<std::uint32_t>(n1 * (tau + 1) + n2));
        }
      }
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    frontier = std::move(next);
  }
  return reach;
}

void require_baseline_policy(const MediatorPolicy& policy, const Schema& schema) {
  if (policy.covariate_history)
    throw PolicyError("estimators need a policy that conditions on baseline strata and mediator history only");
  if (policy.horizon != schema.horizon || static_cast<int>(policy.tables.size()) != schema.horizon)
    throw PolicyError("policy horizon does not match the data");
}

std::vector<std::uint32_t> strata_present(const Population& data, const Stratification& strata) {
  std::vector<std::uint32_t> s;
  for (const auto& tr : data.rows) s.push_back(strata.stratum(tr));
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

int outcome_index(int v1, int v2) { return v1 * 2 + v2; }

}  // namespace

std::vector<SupportGap> mediator_support_gaps(const Population& data, int arm, const MediatorPolicy& policy,
                                              bool death_blocks_birth) {
  require_baseline_policy(policy, data.schema);
  const int tau = data.schema.horizon;
  // (t, stratum, history) -> outcome counts
  std::map<std::tuple<int, std::uint32_t, std::uint32_t>, std::array<std::uint64_t, 4>> observed;
  for (const auto& tr : data.rows) {
    if (tr.a != arm) continue;
    const std::uint32_t s = policy.strata.stratum(tr);
    for (int t = 1; t <= tau; ++t) {
      const auto i = static_cast<std::size_t>(t - 1);
      ++observed[{t, s, mediator_history_code(tr, t)}][static_cast<std::size_t>(outcome_index(tr.z1[i], tr.z2[i]))];
    }
  }
  std::vector<SupportGap> gaps;
  for (const auto s : strata_present(data, policy.strata)) {
    const Reach reach = policy_reach(policy, s, death_blocks_birth);
    for (int t = 1; t <= tau; ++t) {
      for (const auto& [code, transitions] : reach[static_cast<std::size_t>(t - 1)]) {
        auto it = observed.find({t, s, code});
        std::uint64_t n = 0;
        if (it != observed.end())
          for (auto c : it->second) n += c;
        for (const auto& tr : transitions) {
          const std::uint64_t c =
              it == observed.end() ? 0 : it->second[static_cast<std::size_t>(outcome_index(tr.v1, tr.v2))];
          if (c > 0) continue;
          const auto [d1, d2] = decode_mediator_history(code, tau);
          gaps.push_back({arm, t, s, policy.strata.label(s), d1, d2, tr.v1, tr.v2, n});
        }
      }
    }
  }
  return gaps;
}

std::vector<std::string> PositivityReport::flagged_strata() const {
  std::vector<std::string> out;
  for (const auto& e : exposure)
    if (e.flagged) out.push_back("exposure " + e.label);
  for (const auto& m : mediator) {
    if (!m.flagged) continue;
    out.push_back("mediator arm=" + std::to_string(m.arm) + " t=" + std::to_string(m.t) + " " + m.label +
                  " history(z1 at " + std::to_string(m.z1_time) + ", z2 at " + std::to_string(m.z2_time) +
                  ") transition (" + std::to_string(m.z1) + "," + std::to_string(m.z2) + ")");
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

json PositivityReport::to_json() const {
  json j;
  j["epsilon"] = epsilon;
  json ex = json::array();
  for (const auto& e : exposure)
    ex.push_back({{"stratum", e.stratum}, {"label", e.label}, {"n", e.n}, {"p_a1", e.p_a1}, {"flagged", e.flagged}});
  j["exposure"] = {{"strata", ex}, {"min", exposure_min}, {"max", exposure_max}};
  json med = json::array();
  for (const auto& m : mediator)
    med.push_back({{"arm", m.arm},
                   {"t", m.t},
                   {"stratum", m.stratum},
                   {"label", m.label},
                   {"covariates", m.covariates},
                   {"z1_time", m.z1_time},
                   {"z2_time", m.z2_time},
                   {"transition", {m.z1, m.z2}},
                   {"policy_prob", m.policy_prob},
                   {"n", m.n},
                   {"observed_prob", m.observed_prob},
                   {"flagged", m.flagged}});
  j["mediator"] = {{"cells", med}, {"min_by_t", mediator_min_by_t}};
  j["guarantee"] = {{"arm0", guarantee[0]}, {"arm1", guarantee[1]}};
  j["support_gaps"] = {{"arm0", support_gaps[0]}, {"arm1", support_gaps[1]}};
  j["flagged"] = flagged_strata();
  return j;
}

PositivityReport positivity_diagnostics(const Population& data, const MediatorPolicy& policy, double epsilon,
                                        bool death_blocks_birth, const std::optional<Stratification>& exposure_strata) {
  require_baseline_policy(policy, data.schema);
  PositivityReport r;
  r.epsilon = epsilon;
  const Schema& schema = data.schema;
  const int tau = schema.horizon;

  // Exposure given baseline strata.
  const Stratification xs = exposure_strata ? *exposure_strata : Stratification::all_discrete(schema);
  std::map<std::uint32_t, std::array<std::uint64_t, 2>> by_stratum;
  for (const auto& tr : data.rows) ++by_stratum[xs.stratum(tr)][static_cast<std::size_t>(tr.a)];
  for (const auto& [s, c] : by_stratum) {
    PositivityReport::Exposure e;
    e.stratum = s;
    e.label = xs.label(s);
    e.n = c[0] + c[1];
    e.p_a1 = static_cast<double>(c[1]) / static_cast<double>(e.n);
    const double m = std::min(e.p_a1, 1.0 - e.p_a1);
    e.flagged = m < epsilon;
    r.exposure_min = std::min(r.exposure_min, m);
    r.exposure_max = std::max(r.exposure_max, m);
    r.exposure.push_back(e);
  }

  // Policy-consistent mediator transitions given (A, L0 stratum, covariate
  // history, mediator history).
  using Key = std::tuple<int, int, std::uint32_t, std::uint64_t, std::uint32_t>;  // arm, t, stratum, cov, med
  std::map<Key, std::array<std::uint64_t, 4>> observed;
  for (const auto& tr : data.rows) {
    const std::uint32_t s = policy.strata.stratum(tr);
    for (int t = 1; t <= tau; ++t) {
      const auto i = static_cast<std::size_t>(t - 1);
      ++observed[{tr.a, t, s, covariate_history_code(tr, schema, t), mediator_history_code(tr, t)}]
                [static_cast<std::size_t>(outcome_index(tr.z1[i], tr.z2[i]))];
    }
  }
  r.mediator_min_by_t.assign(static_cast<std::size_t>(tau), 1.0);
  const auto present = strata_present(data, policy.strata);
  for (int arm = 0; arm < 2; ++arm) {
    for (const auto s : present) {
      const Reach reach = policy_reach(policy, s, death_blocks_birth);
      for (int t = 1; t <= tau; ++t) {
        for (const auto& [code, transitions] : reach[static_cast<std::size_t>(t - 1)]) {
          const auto [d1, d2] = decode_mediator_history(code, tau);
          auto lo = observed.lower_bound({arm, t, s, 0, 0});
          bool any = false;
          for (auto it = lo; it != observed.end(); ++it) {
            const auto& [ka, kt, ks, kc, km] = it->first;
            if (ka != arm || kt != t || ks != s) break;
            if (km != code) continue;
            any = true;
            std::uint64_t n = 0;
            for (auto c : it->second) n += c;
            for (const auto& tr : transitions) {
              PositivityReport::Mediator m;
              m.arm = arm;
              m.t = t;
              m.stratum = s;
              m.label = policy.strata.label(s);
              m.covariates = decode_covariate_history(kc, schema, t);
              m.z1_time = d1;
              m.z2_time = d2;
              m.z1 = tr.v1;
              m.z2 = tr.v2;
              m.policy_prob = tr.p;
              m.n = n;
              m.observed_prob =
                  static_cast<double>(it->second[static_cast<std::size_t>(outcome_index(tr.v1, tr.v2))]) /
                  static_cast<double>(n);
              m.flagged = m.observed_prob < epsilon;
              auto& mn = r.mediator_min_by_t[static_cast<std::size_t>(t - 1)];
              mn = std::min(mn, m.observed_prob);
              r.mediator.push_back(std::move(m));
            }
          }
          if (!any) {
            for (const auto& tr : transitions) {
              PositivityReport::Mediator m;
              m.arm = arm;
              m.t = t;
              m.stratum = s;
              m.label = policy.strata.label(s);
              m.z1_time = d1;
              m.z2_time = d2;
              m.z1 = tr.v1;
              m.z2 = tr.v2;
              m.policy_prob = tr.p;
              m.flagged = true;
              r.mediator_min_by_t[static_cast<std::size_t>(t - 1)] = 0.0;
              r.mediator.push_back(std::move(m));
            }
          }
        }
      }
    }
    const auto gaps = mediator_support_gaps(data, arm, policy, death_blocks_birth);
    r.support_gaps[static_cast<std::size_t>(arm)] = gaps.size();
    r.guarantee[static_cast<std::size_t>(arm)] = gaps.empty();
  }
  return r;
}

}  // namespace lbp
