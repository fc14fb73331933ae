#include "lbp/intervention.hpp"

namespace lbp {

MediatorProfile MediatorProfile::survival_and_birth(int horizon) {
  MediatorProfile p;
  p.z1.assign(static_cast<std::size_t>(horizon), 0);
  p.z2.assign(static_cast<std::size_t>(horizon), 1);
  return p;
}

std::string MediatorProfile::check(int horizon, bool death_blocks_birth) const {
  if (static_cast<int>(z1.size()) != horizon || static_cast<int>(z2.size()) != horizon)
    return "mediator profile needs " + std::to_string(horizon) + " entries for z1 and z2";
  for (int t = 0; t < horizon; ++t) {
    const auto i = static_cast<std::size_t>(t);
    if ((z1[i] != 0 && z1[i] != 1) || (z2[i] != 0 && z2[i] != 1))
      return "mediator profile entries must be 0 or 1";
    if (t > 0 && (z1[i] < z1[i - 1] || z2[i] < z2[i - 1]))
      return "mediator profile must be monotone (absorbing events), violated at t=" + std::to_string(t + 1);
    if (death_blocks_birth && z1[i] == 1 && z2[i] == 1 && (t == 0 || z2[i - 1] == 0))
      return "mediator profile has birth at t=" + std::to_string(t + 1) + " after maternal death";
  }
  if (z2.back() != 1) return "mediator profile must fix z2 = 1 at the horizon";
  return {};
}

json MediatorProfile::to_json() const {
  std::vector<int> a(z1.begin(), z1.end()), b(z2.begin(), z2.end());
  return json{{"z1", a}, {"z2", b}};
}

void InterventionPlan::check(const Scm& scm) const {
  if (exposure && *exposure != 0 && *exposure != 1) throw Error("exposure must be set to 0 or 1");
  if (const auto* c = std::get_if<ControlledMediators>(&mediators)) {
    const auto why = c->profile.check(scm.horizon(), scm.death_blocks_birth());
    if (!why.empty()) throw Error(why);
  } else if (const auto* s = std::get_if<StochasticMediators>(&mediators)) {
    if (!s->policy) throw PolicyError("stochastic mediator plan has no policy");
    if (s->policy->horizon != scm.horizon() || static_cast<int>(s->policy->tables.size()) != scm.horizon())
      throw PolicyError("policy is not materialized for horizon " + std::to_string(scm.horizon()));
    for (const auto& v : s->policy->strata.vars())
      if (v.index >= scm.n_baseline()) throw PolicyError("policy strata refer to a missing baseline covariate");
  }
}

json InterventionPlan::to_json(const Schema& schema) const {
  json j;
  j["exposure"] = exposure ? json(*exposure) : json("natural");
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, NaturalMediators>) {
          j["mediators"] = "natural";
        } else if constexpr (std::is_same_v<M, ControlledMediators>) {
          j["mediators"] = json{{"controlled", m.profile.to_json()}};
        } else {
          j["mediators"] = json{{"policy", m.policy ? m.policy->digest(schema) : std::string()}};
        }
      },
      mediators);
  return j;
}

std::string InterventionPlan::digest(const Schema& schema) const { return hex_digest(to_json(schema).dump()); }

}  // namespace lbp
