#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lbp {

enum class VarType { Binary, Categorical, Continuous };

struct VariableInfo {
  std::string name;
  VarType type = VarType::Binary;
  int levels = 2;  // 0 for continuous
};

// Shape and names of a trajectory: which baseline and time-varying covariates
// exist and how many post-baseline time points there are.
struct Schema {
  int horizon = 1;
  std::vector<VariableInfo> baseline;
  std::vector<VariableInfo> covariates;

  int baseline_index(const std::string& name) const;   // -1 if absent
  int covariate_index(const std::string& name) const;  // -1 if absent
  bool operator==(const Schema&) const;
};

inline constexpr std::int8_t kMissing = -1;

// One individual's realized path. Times are 1-based in accessors.
struct Trajectory {
  std::vector<double> l0;
  int a = 0;
  int n_cov = 0;
  std::vector<int> l;  // row-major [t-1][j]
  std::vector<std::int8_t> z1, z2, y1;
  std::int8_t y2 = kMissing;
  std::int8_t y = 0;

  Trajectory() = default;
  explicit Trajectory(const Schema& schema) { reset(schema); }
  void reset(const Schema& schema);

  int horizon() const { return static_cast<int>(z1.size()); }
  int cov(int t, int j) const { return l[static_cast<std::size_t>((t - 1) * n_cov + j)]; }
  int& cov(int t, int j) { return l[static_cast<std::size_t>((t - 1) * n_cov + j)]; }

  bool operator==(const Trajectory&) const = default;
};

// Composite outcome: 1 iff a live birth occurred by the horizon and the
// infant is alive and HIV-free there.
constexpr std::int8_t composite_outcome(std::int8_t z2_final, std::int8_t y1_final, std::int8_t y2) {
  return (z2_final == 1 && y1_final == 1 && y2 == 1) ? 1 : 0;
}

enum class TrajectoryRule {
  Domain,            // a value outside its variable's domain
  Z1Absorbing,
  Z2Absorbing,
  Y1Missingness,
  Y1Absorbing,
  Y2Missingness,
  Composite,
  DeathBlocksBirth,
};

const char* to_string(TrajectoryRule rule);

struct RuleViolation {
  TrajectoryRule rule;
  int time = 0;  // 0 when not time-specific
};

// First violated structural rule, if any. The death-blocks-birth rule is only
// checked when requested, since it is a model option.
std::optional<RuleViolation> check_trajectory(const Trajectory& tr, const Schema& schema,
                                              bool death_blocks_birth = false);

struct Population {
  Schema schema;
  std::vector<Trajectory> rows;
};

// CSV with columns l0.*, a, l{t}.*, z1_{t}, z2_{t}, y1_{t}, y2, y. MISSING is an
// empty field.
std::vector<std::string> population_csv_header(const Schema& schema);
void write_population_csv(std::ostream& out, const Population& pop);

// Reads the CSV written above. With an expected schema the header must match
// it exactly; without one, variable types are inferred from the values.
// Rows violating a structural rule raise DataError naming row and rule.
Population read_population_csv(std::istream& in, const Schema* expected = nullptr);

}  // namespace lbp
