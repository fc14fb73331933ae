// lbpsim: validate, run and inspect scenario files.
//
// Exit codes: 0 success, 1 validation failure, 2 an estimand or diagnostic
// failed inside the run (the report is still written), 3 I/O failure.

#include <CLI11.hpp>
#include <iostream>

#include "lbp/scenario.hpp"

namespace {

enum Exit { kOk = 0, kInvalid = 1, kEstimandFailed = 2, kIo = 3 };

struct Args {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
  std::optional<int> threads;
};

std::filesystem::path out_dir(const Args& a, const lbp::Scenario& s) {
  if (!a.out.empty()) return a.out;
  if (!s.output_dir.empty()) return s.output_dir;
  return ".";
}

int validate(const Args& a) {
  const auto s = lbp::load_scenario(a.scenario);
  std::cout << "ok " << s.name << ": horizon " << s.spec.horizon << ", " << s.estimands.size() << " estimand(s), "
            << s.policies.size() << " polic" << (s.policies.size() == 1 ? "y" : "ies") << ", enumerable "
            << (s.enumerable ? "yes" : "no") << "\n";
  if (!s.enumerable) std::cout << "  " << s.enumerable_reason << "\n";
  return kOk;
}

int run(const Args& a, bool estimands) {
  const auto s = lbp::load_scenario(a.scenario);
  const auto format = lbp::report_format_from_string(a.format.empty() ? s.output_format : a.format);
  lbp::RunOptions opt;
  opt.seed = a.seed;
  opt.threads = a.threads;
  opt.estimands = estimands;
  const auto report = lbp::run_scenario(s, opt);
  std::vector<std::filesystem::path> written;
  if (estimands) {
    written = lbp::emit_report(report, out_dir(a, s), format);
  } else {
    const auto dir = out_dir(a, s);
    std::filesystem::create_directories(dir);
    const auto p = dir / (s.name + ".diagnostics.json");
    lbp::write_text_file(p, report.to_json().dump(2) + "\n");
    written.push_back(p);
  }
  for (const auto& e : report.estimands) {
    std::cout << e.request.id << " ";
    if (e.ok())
      std::cout << e.report->value << " (se " << e.report->mc_se << ")\n";
    else
      std::cout << "error " << e.error_kind << ": " << e.error_message << "\n";
  }
  for (const auto& d : report.diagnostics) {
    std::cout << "positivity " << d.request.policy << " ";
    if (d.report) {
      const auto flagged = d.report->flagged_strata();
      std::cout << flagged.size() << " flagged, guarantee arm0 " << d.report->guarantee[0] << " arm1 "
                << d.report->guarantee[1] << "\n";
      for (const auto& f : flagged) std::cout << "  " << f << "\n";
    } else {
      std::cout << "error " << d.error_kind << ": " << d.error_message << "\n";
    }
  }
  for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
  return report.error_count() > 0 ? kEstimandFailed : kOk;
}

int oracle(const Args& a) {
  const auto s = lbp::load_scenario(a.scenario);
  if (!s.enumerable) {
    std::cerr << "scenario " << s.name << " is not enumeration-eligible: " << s.enumerable_reason << "\n";
    return kInvalid;
  }
  const auto dir = a.out.empty() ? std::filesystem::path(a.scenario).parent_path() : std::filesystem::path(a.out);
  if (!dir.empty()) std::filesystem::create_directories(dir);
  const auto p = dir / (s.name + ".oracle.json");
  lbp::write_text_file(p, lbp::oracle_sidecar(s).dump(2) + "\n");
  std::cout << "wrote " << p.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and estimation for longitudinal causal models with a live birth process"};
  app.require_subcommand(1);
  Args a;
  auto add_common = [&](CLI::App* sub, bool outputs) {
    sub->add_option("--scenario", a.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    if (!outputs) return;
    sub->add_option("--seed", a.seed, "Override the scenario seed");
    sub->add_option("--out", a.out, "Output directory");
    sub->add_option("--threads", a.threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  auto* v = app.add_subcommand("validate", "Load and validate a scenario");
  add_common(v, false);
  auto* r = app.add_subcommand("run", "Run every estimand and diagnostic of a scenario");
  add_common(r, true);
  r->add_option("--format", a.format, "Report format")->check(CLI::IsMember({"json", "csv", "both"}));
  auto* o = app.add_subcommand("oracle", "Write the enumeration-exact sidecar of a scenario");
  add_common(o, false);
  o->add_option("--out", a.out, "Output directory (default: next to the scenario)");
  auto* d = app.add_subcommand("diagnose", "Positivity diagnostics only");
  add_common(d, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*v) return validate(a);
    if (*r) return run(a, true);
    if (*o) return oracle(a);
    return run(a, false);
  } catch (const lbp::ScenarioError& e) {
    std::cerr << e.what() << "\n";
    return kInvalid;
  } catch (const lbp::ScenarioParseError& e) {
    std::cerr << e.what() << "\n";
    return kInvalid;
  } catch (const lbp::IoError& e) {
    std::cerr << e.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << e.what() << "\n";
    return kIo;
  } catch (const lbp::Error& e) {
    std::cerr << e.what() << "\n";
    return kInvalid;
  }
}
