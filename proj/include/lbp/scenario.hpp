#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lbp/estimators.hpp"

namespace lbp {

inline constexpr int kScenarioSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kEngineVersion = "0.1.0";

class ScenarioError : public Error {
 public:
  ScenarioError(std::string source, std::vector<Violation> violations);
  const std::string& source() const { return source_; }
  const std::vector<Violation>& violations() const { return violations_; }
  const char* kind() const noexcept override { return "invalid_scenario"; }

 private:
  std::string source_;
  std::vector<Violation> violations_;
};

class ScenarioParseError : public Error {
 public:
  ScenarioParseError(const std::string& source, std::size_t line, std::size_t column, const std::string& detail);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  std::size_t line_, column_;
};

struct McSettings {
  std::size_t n_truth = 100000;
  std::size_t n_policy_fit = 200000;
  std::size_t n_observational = 50000;
  std::size_t bootstrap_replicates = 200;
  FitMode policy_fit = FitMode::Auto;
  Integration gcomp_integration = Integration::Auto;
  std::size_t gcomp_mc_draws = 100000;
  double weight_cap = 50.0;
};

struct PolicyRequest {
  enum class Source { Derive, Hazards, Inline, File, DataAdaptive };
  std::string name;
  Source source = Source::Derive;
  bool conditional = false;  // Derive
  int a_ref = 0;             // Derive
  int arm = 0;               // DataAdaptive
  std::vector<double> z1_hazard, z2_hazard;  // Hazards
  json policy;                               // Inline, or File after loading
  std::string file;
};

struct EstimandRequest {
  std::size_t index = 0;
  std::string id;
  EstimandKind estimand = EstimandKind::CTE;
  std::string method = "monte_carlo";  // or "oracle", "gformula", "gcomp", "ipw"
  std::string policy;                  // CSDE
  int a_ref = 0;                       // NDE_*
  MediatorProfile profile;             // CDE
  std::optional<std::vector<std::string>> adjustment;  // gformula; empty list = unadjusted
  ModelOptions model;
  bool independent_arms = false;
  json request;  // as written
};

struct DiagnosticRequest {
  std::string policy;
  double epsilon = 0.05;
};

struct Scenario {
  std::string name;
  std::string description;
  std::string source;  // file the scenario came from, if any
  ScmSpec spec;
  std::shared_ptr<const Scm> scm;
  std::uint64_t seed = 1;
  int threads = 1;
  McSettings mc;
  Stratification strata;
  std::vector<PolicyRequest> policies;
  std::vector<EstimandRequest> estimands;
  std::vector<DiagnosticRequest> diagnostics;
  std::string output_format = "both";
  std::string output_dir;
  bool enumerable = false;
  std::string enumerable_reason;
  json document;       // with any scm_file / policy file resolved inline
  std::string digest;  // of `document`

  const PolicyRequest* find_policy(const std::string& name) const;
};

// Throws ScenarioParseError (line and column) for malformed JSON, IoError for
// an unreadable file, and ScenarioError with every violation otherwise.
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(const json& doc, const std::filesystem::path& base_dir, const std::string& source = "");

struct EstimandOutcome {
  EstimandRequest request;
  std::optional<EstimandReport> report;
  std::string error_kind, error_message;
  std::vector<std::string> error_strata;
  bool ok() const { return report.has_value(); }
};

struct DiagnosticOutcome {
  DiagnosticRequest request;
  std::optional<PositivityReport> report;
  std::string error_kind, error_message;
};

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  json provenance;
  json policies = json::object();
  std::vector<EstimandOutcome> estimands;
  std::vector<DiagnosticOutcome> diagnostics;

  std::size_t error_count() const;
  json to_json() const;
  // Flat summary, one row per estimand request.
  std::string summary_csv() const;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool estimands = true;
  bool diagnostics = true;
};

RunReport run_scenario(const Scenario& scenario, const RunOptions& options = {});

// Enumeration-exact targets for every estimand request. Throws
// UnsupportedSpecError when the scenario is not enumeration-eligible.
json oracle_sidecar(const Scenario& scenario);

enum class ReportFormat { Json, Csv, Both };
ReportFormat report_format_from_string(const std::string& s);  // throws Error

// Writes <name>.report.json and/or <name>.summary.csv into `dir`. Returns the
// paths written. Throws IoError.
std::vector<std::filesystem::path> emit_report(const RunReport& report, const std::filesystem::path& dir,
                                               ReportFormat format);

void write_text_file(const std::filesystem::path& path, const std::string& text);  // throws IoError

}  // namespace lbp
