#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lbp/policy.hpp"

namespace lbp {

// A fixed mediator trajectory for controlled-direct-effect plans.
struct MediatorProfile {
  std::vector<std::int8_t> z1, z2;

  // z1 = 0 and z2 = 1 at every t: maternal survival and live birth at t = 1.
  static MediatorProfile survival_and_birth(int horizon);
  // Empty when the profile is admissible; otherwise the reason.
  std::string check(int horizon, bool death_blocks_birth) const;
  json to_json() const;
};

struct NaturalMediators {};
struct ControlledMediators {
  MediatorProfile profile;
};
struct StochasticMediators {
  std::shared_ptr<const MediatorPolicy> policy;
};

using MediatorPlan = std::variant<NaturalMediators, ControlledMediators, StochasticMediators>;

// Exposure assignment plus mediator handling. An unset exposure follows the
// natural exposure law.
struct InterventionPlan {
  std::optional<int> exposure;
  MediatorPlan mediators = NaturalMediators{};

  static InterventionPlan natural() { return {}; }
  static InterventionPlan set_exposure(int a) { return {a, NaturalMediators{}}; }

  // Throws PolicyError / Error on an inadmissible plan.
  void check(const Scm& scm) const;
  json to_json(const Schema& schema) const;
  std::string digest(const Schema& schema) const;
};

}  // namespace lbp
