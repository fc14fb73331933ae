#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lbp/intervention.hpp"
#include "lbp/rng.hpp"
#include "lbp/scm.hpp"

namespace lbp {

// Conditional laws of the stochastic nodes. The true SCM implements this, and
// so do the models fitted by the g-computation estimator.
class NodeModel {
 public:
  virtual ~NodeModel() = default;
  virtual double exposure_prob(const Trajectory& tr) const = 0;
  virtual void covariate_distribution(int t, int j, const Trajectory& tr, std::span<double> out) const = 0;
  virtual double z1_prob(int t, const Trajectory& tr) const = 0;
  virtual double z2_prob(int t, const Trajectory& tr) const = 0;
  virtual double y1_prob(int t, const Trajectory& tr) const = 0;
  virtual double y2_prob(const Trajectory& tr) const = 0;
};

class ScmModel final : public NodeModel {
 public:
  explicit ScmModel(const Scm& scm) : scm_(scm) {}
  double exposure_prob(const Trajectory& tr) const override { return scm_.exposure_law().prob_one(tr); }
  void covariate_distribution(int t, int j, const Trajectory& tr, std::span<double> out) const override {
    scm_.covariate_law(t, j).distribution(tr, out);
  }
  double z1_prob(int t, const Trajectory& tr) const override { return scm_.z1_law(t).prob_one(tr); }
  double z2_prob(int t, const Trajectory& tr) const override { return scm_.z2_law(t).prob_one(tr); }
  double y1_prob(int t, const Trajectory& tr) const override { return scm_.y1_law(t).prob_one(tr); }
  double y2_prob(const Trajectory& tr) const override { return scm_.y2_law().prob_one(tr); }

 private:
  const Scm& scm_;
};

// Source of baseline covariates.
class BaselineSource {
 public:
  virtual ~BaselineSource() = default;
  virtual void sample(const NoiseSource& noise, std::uint64_t individual, Trajectory& tr) const = 0;
  // Calls back with each baseline configuration and its probability. Throws
  // UnsupportedSpecError if the baseline law is not discrete.
  virtual void enumerate(Trajectory& tr, const std::function<void(double)>& visit) const = 0;
};

class ScmBaseline final : public BaselineSource {
 public:
  explicit ScmBaseline(const Scm& scm) : scm_(scm) {}
  void sample(const NoiseSource& noise, std::uint64_t individual, Trajectory& tr) const override;
  void enumerate(Trajectory& tr, const std::function<void(double)>& visit) const override;

 private:
  const Scm& scm_;
};

// Empirical baseline distribution: observed rows with nonnegative weights.
class EmpiricalBaseline final : public BaselineSource {
 public:
  EmpiricalBaseline(std::vector<std::vector<double>> rows, std::vector<double> weights);
  void sample(const NoiseSource& noise, std::uint64_t individual, Trajectory& tr) const override;
  void enumerate(Trajectory& tr, const std::function<void(double)>& visit) const override;
  // Number of distinct baseline configurations with positive weight.
  std::size_t distinct() const { return groups_.size(); }

 private:
  std::vector<std::vector<double>> groups_;
  std::vector<double> probs_;
  std::vector<double> cumulative_;
};

struct ForwardConfig {
  const Schema& schema;
  const NodeModel& model;
  const BaselineSource& baseline;
  bool death_blocks_birth = true;
  bool shared_mediator_noise = false;
};

struct ForwardStats {
  std::uint64_t policy_fallbacks = 0;
  void merge(const ForwardStats& o) { policy_fallbacks += o.policy_fallbacks; }
};

// Stream name hashes; identical across plans so that shared nodes use common
// random numbers.
struct StreamNames {
  std::vector<std::uint64_t> baseline, covariates;
  std::uint64_t a, z1, z2, y1, y2;
  static StreamNames for_schema(const Schema& schema);
};

class ForwardEngine {
 public:
  ForwardEngine(ForwardConfig cfg, const InterventionPlan& plan);

  // Simulates one individual into `tr` (which must be shaped for the schema).
  void simulate(const NoiseSource& noise, std::uint64_t individual, Trajectory& tr, ForwardStats& stats) const;

  // Visits every complete trajectory with positive probability.
  void enumerate(const std::function<void(const Trajectory&, double)>& visit, ForwardStats& stats) const;

  const Schema& schema() const { return cfg_.schema; }

 private:
  struct MediatorStep;
  MediatorStep mediator_step(int t, Trajectory& tr, ForwardStats& stats) const;
  void enumerate_from(int step, Trajectory& tr, double prob,
                      const std::function<void(const Trajectory&, double)>& visit, ForwardStats& stats) const;
  void finish_y1(int t, Trajectory& tr) const;

  ForwardConfig cfg_;
  const InterventionPlan& plan_;
  StreamNames names_;
  int tau_;
  int m_;
};

// ---------------------------------------------------------------------------
// Population-level entry points for the true SCM.

Population simulate_natural(const Scm& scm, std::size_t n, std::uint64_t seed, int threads = 1);

Population simulate_counterfactual(const Scm& scm, const InterventionPlan& plan, std::size_t n,
                                   std::uint64_t seed, int threads = 1, ForwardStats* stats = nullptr);

}  // namespace lbp
