#include "lbp/enumerate.hpp"

#include "lbp/forward.hpp"

namespace lbp {

double ExactLaw::total() const {
  NeumaierSum s;
  for (const auto& a : atoms) s.add(a.p);
  return s.value();
}

double ExactLaw::probability(const std::function<bool(const Trajectory&)>& event) const {
  NeumaierSum s;
  for (const auto& a : atoms)
    if (event(a.tr)) s.add(a.p);
  return s.value();
}

double ExactLaw::expectation(const std::function<double(const Trajectory&)>& f) const {
  NeumaierSum s;
  for (const auto& a : atoms) s.add(a.p * f(a.tr));
  return s.value();
}

ExactLaw enumerate_exact(const Scm& scm, const InterventionPlan& plan) {
  std::string why;
  if (!scm.enumerable(&why)) throw UnsupportedSpecError("exact enumeration unavailable: " + why);
  plan.check(scm);
  ScmModel model(scm);
  ScmBaseline baseline(scm);
  ForwardEngine engine({scm.schema(), model, baseline, scm.death_blocks_birth(), scm.shared_mediator_noise()}, plan);
  ExactLaw law;
  law.schema = scm.schema();
  ForwardStats stats;
  engine.enumerate([&](const Trajectory& tr, double p) { law.atoms.push_back({tr, p}); }, stats);
  law.policy_fallbacks = stats.policy_fallbacks;
  return law;
}

}  // namespace lbp
