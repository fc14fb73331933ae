#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lbp/forward.hpp"

namespace lbp {

// Verification mode fits every node with the structure of its generating
// law. Misspecified mode drops the named variables ("l.c", "l0.x", "z2") from
// every fitted model.
enum class ModelMode { Verification, Misspecified };

struct ModelOptions {
  ModelMode mode = ModelMode::Verification;
  std::vector<std::string> drop;
};

enum class NodeKind { Exposure, Covariate, Z1, Z2, Y1, Y2 };

struct NodeRef {
  NodeKind kind = NodeKind::Exposure;
  int t = 0;
  int j = 0;
};

// Whether the node's law is consulted for an observed row, and its value.
bool node_at_risk(const NodeRef& node, const Trajectory& tr, bool death_blocks_birth);
int node_value(const NodeRef& node, const Trajectory& tr);

// A fitted conditional law for one node, optionally within one exposure arm.
// Rows are compressed into distinct predictor patterns once; refitting with
// bootstrap frequency weights only re-aggregates pattern totals.
class FittedNode {
 public:
  FittedNode() = default;
  FittedNode(const Law& law, const NodeRef& node, const Schema& schema, std::optional<int> arm,
             const ModelOptions& options);

  // `rows` are indices into data.rows at risk for the node (and in the arm).
  void prepare(const Population& data, const std::vector<std::uint32_t>& rows);
  // Null weights mean one per row.
  void fit(const std::vector<double>* row_weights);

  double prob_one(const Trajectory& tr) const;
  void distribution(const Trajectory& tr, std::span<double> out) const;
  std::size_t empty_cells() const { return empty_cells_; }
  json describe(const Schema& schema) const;

  // Access to the prepared rows, for callers that evaluate the fitted law on
  // the training rows many times. Fixed (deterministic) laws keep rows only.
  bool fixed() const { return form_ == Form::Fixed; }
  const NodeRef& node() const { return node_; }
  const std::vector<std::uint32_t>& prepared_rows() const { return prep_->rows; }
  const std::vector<std::uint32_t>& prepared_patterns() const { return prep_->pattern; }
  const std::vector<std::int8_t>& prepared_outcomes() const { return prep_->outcome; }
  // Fitted P(child = 1) for each predictor pattern.
  std::vector<double> pattern_prob_one() const;

 private:
  enum class Form { Logistic, Cells, Fixed };
  Form form_ = Form::Fixed;
  NodeRef node_;
  int levels_ = 2;
  Law law_;  // Fixed form: the generating law itself
  std::vector<Term> terms_;  // Logistic: column 0 is the intercept
  std::vector<VarRef> parents_;  // Cells
  std::vector<int> radix_;
  std::size_t n_cells_ = 1;

  struct Prepared {
    std::vector<std::uint32_t> rows;
    std::vector<std::uint32_t> pattern;  // per prepared row
    std::vector<std::int8_t> outcome;
    Eigen::MatrixXd x;  // Logistic patterns
    std::size_t n_patterns = 0;
  };
  std::shared_ptr<const Prepared> prep_;

  Eigen::VectorXd beta_;
  std::vector<double> cell_probs_;  // n_cells * levels
  std::vector<double> pooled_;
  std::size_t empty_cells_ = 0;

  std::size_t cell_of(const Trajectory& tr) const;
  std::vector<double> design_row(const Trajectory& tr) const;
};

// Fitted laws for one exposure arm (plus a pooled exposure model).
class FittedModel final : public NodeModel {
 public:
  struct Parts {
    bool exposure = false, covariates = false, mediators = false, outcomes = false;
  };

  FittedModel(const Scm& scm, const Population& data, std::optional<int> arm, Parts parts,
              const ModelOptions& options);
  void fit(const std::vector<double>* row_weights);

  double exposure_prob(const Trajectory& tr) const override;
  void covariate_distribution(int t, int j, const Trajectory& tr, std::span<double> out) const override;
  double z1_prob(int t, const Trajectory& tr) const override;
  double z2_prob(int t, const Trajectory& tr) const override;
  double y1_prob(int t, const Trajectory& tr) const override;
  double y2_prob(const Trajectory& tr) const override;

  std::size_t empty_cells() const;
  json describe() const;

  const FittedNode& exposure_node() const { return exposure_; }
  const FittedNode& z1_node(int t) const { return z1_[static_cast<std::size_t>(t - 1)]; }
  const FittedNode& z2_node(int t) const { return z2_[static_cast<std::size_t>(t - 1)]; }

 private:
  const Schema* schema_;
  int m_;
  Parts parts_;
  FittedNode exposure_;
  std::vector<FittedNode> covariates_, z1_, z2_, y1_;  // index (t-1)*m+j for covariates
  FittedNode y2_;
  template <class F>
  void each(F f);
  template <class F>
  void each(F f) const;
};

}  // namespace lbp
