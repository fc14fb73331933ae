#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lbp/error.hpp"
#include "lbp/trajectory.hpp"

namespace lbp {

// Largest level count of a categorical variable.
inline constexpr int kMaxLevels = 64;

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Declarative spec, as read from JSON. Nothing here is resolved or checked;
// see validate_scm and Scm::compile.

enum class LawKind { Constant, Logistic, Table, Deterministic, Categorical, Uniform };

const char* to_string(LawKind kind);

struct LawSpec {
  LawKind kind = LawKind::Constant;
  double p = 0.0;                                      // constant
  double intercept = 0.0;                              // logistic
  std::vector<std::pair<std::string, double>> coef;    // logistic, term -> coefficient
  std::vector<std::string> parents;                    // table
  std::vector<double> table;                           // table, binary child
  std::vector<std::vector<double>> table_rows;         // table, categorical child
  std::vector<double> probs;                           // categorical
  std::string parent;                                  // deterministic copy of a parent
  bool negate = false;                                 // deterministic
  int value = 0;                                       // deterministic constant
  double lo = 0.0, hi = 1.0;                           // uniform

  static LawSpec constant(double p);
  static LawSpec logistic(double intercept, std::vector<std::pair<std::string, double>> coef);
  static LawSpec deterministic(int value);
};

struct BaselineVarSpec {
  VariableInfo var;
  LawSpec law;
};

struct CovariateSpec {
  VariableInfo var;
  std::vector<LawSpec> laws;  // one per t
};

struct ScmSpec {
  int horizon = 1;
  bool death_blocks_birth = true;
  bool shared_mediator_noise = false;
  std::vector<BaselineVarSpec> baseline;
  LawSpec exposure = LawSpec::constant(0.5);
  std::vector<CovariateSpec> covariates;
  std::vector<LawSpec> z1, z2, y1;  // one per t
  LawSpec y2 = LawSpec::constant(1.0);

  Schema schema() const;
};

// Parsing reports structural problems (wrong JSON types, unknown law kinds)
// as violations instead of throwing.
ScmSpec scm_from_json(const json& doc, std::vector<Violation>& violations, const std::string& base_path = "");
json to_json(const ScmSpec& spec);

// Ordered list of problems; empty iff the spec can be simulated.
std::vector<Violation> validate_scm(const ScmSpec& spec);

// ---------------------------------------------------------------------------
// Resolved references and compiled laws.

enum class VarKind { Baseline, Exposure, Covariate, Z1, Z2, Y1 };

struct VarRef {
  VarKind kind = VarKind::Exposure;
  int index = 0;  // baseline or covariate index
  int time = 0;   // absolute time for time-indexed variables
  bool operator==(const VarRef&) const = default;
};

// A reference optionally turned into an indicator of one level.
struct Factor {
  VarRef ref;
  int level = -1;  // -1: numeric value
};

using Term = std::vector<Factor>;  // product of factors

// Numeric value of a reference inside a linear predictor. A missing y1
// contributes 0.
double ref_value(const VarRef& ref, const Trajectory& tr);
// Discrete level of a reference; a missing y1 is level 2.
int ref_level(const VarRef& ref, const Trajectory& tr);
double factor_value(const Factor& f, const Trajectory& tr);
double term_value(const Term& term, const Trajectory& tr);

// Number of discrete levels of a reference, 0 for continuous.
int ref_levels(const VarRef& ref, const Schema& schema);
std::string ref_name(const VarRef& ref, const Schema& schema);
std::string factor_name(const Factor& f, const Schema& schema);

// Parses "l.c@t-1", "a", "l0.x=1", "y1@2=missing". `time` resolves relative
// time expressions. Returns an error message on failure.
std::string parse_factor(const std::string& text, const Schema& schema, int time, Factor& out);
std::string parse_term(const std::string& text, const Schema& schema, int time, Term& out);

// A structural function with resolved parents.
class Law {
 public:
  LawKind kind = LawKind::Constant;
  int levels = 2;  // of the child
  double p = 0.0;
  double intercept = 0.0;
  std::vector<Term> terms;
  std::vector<double> coef;
  std::vector<VarRef> parents;   // table
  std::vector<int> radix;        // table
  std::vector<double> table;     // cells * (levels == 2 ? 1 : levels)
  Factor det_parent;
  bool det_has_parent = false;
  bool negate = false;
  int value = 0;
  std::vector<double> probs;
  double lo = 0.0, hi = 1.0;

  // P(child = 1) for binary children.
  double prob_one(const Trajectory& tr) const;
  // Full distribution for discrete children; out.size() == levels.
  void distribution(const Trajectory& tr, std::span<double> out) const;
  std::size_t table_cell(const Trajectory& tr) const;
  bool continuous() const { return kind == LawKind::Uniform; }
  // Every parent reference the law reads.
  std::vector<VarRef> references() const;
};

struct NodeHashes {
  std::vector<std::uint64_t> baseline, covariates;
  std::uint64_t a, z1, z2, y1, y2;
};

// Validated, compiled SCM. Immutable and shared read-only during simulation.
class Scm {
 public:
  // Throws InvalidSpecError carrying every violation.
  static Scm compile(const ScmSpec& spec);

  const ScmSpec& spec() const { return *spec_; }
  const Schema& schema() const { return schema_; }
  int horizon() const { return schema_.horizon; }
  int n_baseline() const { return static_cast<int>(schema_.baseline.size()); }
  int n_covariates() const { return static_cast<int>(schema_.covariates.size()); }
  bool death_blocks_birth() const { return spec_->death_blocks_birth; }
  bool shared_mediator_noise() const { return spec_->shared_mediator_noise; }

  const Law& baseline_law(int j) const { return baseline_[static_cast<std::size_t>(j)]; }
  const Law& exposure_law() const { return exposure_; }
  const Law& covariate_law(int t, int j) const {
    return covariates_[static_cast<std::size_t>((t - 1) * n_covariates() + j)];
  }
  const Law& z1_law(int t) const { return z1_[static_cast<std::size_t>(t - 1)]; }
  const Law& z2_law(int t) const { return z2_[static_cast<std::size_t>(t - 1)]; }
  const Law& y1_law(int t) const { return y1_[static_cast<std::size_t>(t - 1)]; }
  const Law& y2_law() const { return y2_; }

  const NodeHashes& hashes() const { return hashes_; }

  // Upper bound on the number of exogenous configurations: product of the
  // cardinalities of every stochastic node.
  double configuration_count() const;
  // All-discrete and within the enumeration budget. `why` receives the reason
  // when not.
  bool enumerable(std::string* why = nullptr) const;

  // Content digest of the canonical JSON form.
  std::string digest() const;

 private:
  std::shared_ptr<const ScmSpec> spec_;
  Schema schema_;
  std::vector<Law> baseline_;
  Law exposure_;
  std::vector<Law> covariates_;
  std::vector<Law> z1_, z2_, y1_;
  Law y2_;
  NodeHashes hashes_;
};

inline constexpr double kEnumerationBudget = 16777216.0;  // 2^24

std::string hex_digest(std::string_view bytes);

}  // namespace lbp
