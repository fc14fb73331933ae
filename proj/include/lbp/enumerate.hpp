#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lbp/intervention.hpp"

namespace lbp {

// Compensated (Neumaier) summation.
class NeumaierSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0, comp_ = 0.0;
};

struct Atom {
  Trajectory tr;
  double p = 0.0;
};

// Exact law of the complete trajectory under a plan.
struct ExactLaw {
  Schema schema;
  std::vector<Atom> atoms;
  std::uint64_t policy_fallbacks = 0;

  double total() const;
  double probability(const std::function<bool(const Trajectory&)>& event) const;
  double expectation(const std::function<double(const Trajectory&)>& f) const;
};

// Throws UnsupportedSpecError for continuous baselines or specs whose
// configuration count exceeds the enumeration budget.
ExactLaw enumerate_exact(const Scm& scm, const InterventionPlan& plan = InterventionPlan::natural());

}  // namespace lbp
