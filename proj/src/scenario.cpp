#include "lbp/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "lbp/enumerate.hpp"
#include "lbp/forward.hpp"

namespace lbp {

namespace {

std::string join_violations(const std::string& source, const std::vector<Violation>& v) {
  std::string s = "invalid scenario";
  if (!source.empty()) s += " " + source;
  for (const auto& x : v) s += "\n  " + (x.path.empty() ? std::string("/") : x.path) + ": " + x.message;
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // byte is 1-based and points just past the offending character.
    const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    const auto [line, col] = line_column(text, offset);
    std::string detail = e.what();
    if (auto p = detail.find("parse error"); p != std::string::npos) detail = detail.substr(p);
    throw ScenarioParseError(source, line, col, detail);
  }
}

// Typed field access that records violations instead of throwing.
struct Reader {
  std::vector<Violation>& out;

  void fail(const std::string& path, const std::string& msg) { out.push_back({path, msg}); }

  bool is(const json& j, const char* key) { return j.is_object() && j.contains(key); }

  std::optional<std::uint64_t> u64(const json& j, const char* key, const std::string& path, bool positive) {
    if (!is(j, key)) return std::nullopt;
    const json& v = j[key];
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(path + "/" + key, "expected a nonnegative integer");
      return std::nullopt;
    }
    const auto x = v.get<std::uint64_t>();
    if (positive && x == 0) {
      fail(path + "/" + key, "must be positive");
      return std::nullopt;
    }
    return x;
  }

  std::optional<double> number(const json& j, const char* key, const std::string& path) {
    if (!is(j, key)) return std::nullopt;
    if (!j[key].is_number()) {
      fail(path + "/" + key, "expected a number");
      return std::nullopt;
    }
    return j[key].get<double>();
  }

  std::optional<std::string> string(const json& j, const char* key, const std::string& path) {
    if (!is(j, key)) return std::nullopt;
    if (!j[key].is_string()) {
      fail(path + "/" + key, "expected a string");
      return std::nullopt;
    }
    return j[key].get<std::string>();
  }

  std::optional<bool> boolean(const json& j, const char* key, const std::string& path) {
    if (!is(j, key)) return std::nullopt;
    if (!j[key].is_boolean()) {
      fail(path + "/" + key, "expected a boolean");
      return std::nullopt;
    }
    return j[key].get<bool>();
  }

  std::optional<int> exposure(const json& j, const char* key, const std::string& path) {
    if (!is(j, key)) return std::nullopt;
    if (!j[key].is_number_integer() || (j[key] != 0 && j[key] != 1)) {
      fail(path + "/" + key, "expected exposure 0 or 1");
      return std::nullopt;
    }
    return j[key].get<int>();
  }

  std::optional<std::vector<std::string>> strings(const json& j, const char* key, const std::string& path) {
    if (!is(j, key)) return std::nullopt;
    const json& v = j[key];
    if (!v.is_array()) {
      fail(path + "/" + key, "expected an array of strings");
      return std::nullopt;
    }
    std::vector<std::string> s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string())
        fail(path + "/" + key + "/" + std::to_string(i), "expected a string");
      else
        s.push_back(v[i].get<std::string>());
    }
    return s;
  }

  std::optional<std::vector<double>> numbers(const json& j, const char* key, const std::string& path) {
    if (!is(j, key)) return std::nullopt;
    const json& v = j[key];
    if (!v.is_array()) {
      fail(path + "/" + key, "expected an array of numbers");
      return std::nullopt;
    }
    std::vector<double> s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        fail(path + "/" + key + "/" + std::to_string(i), "expected a number");
      else
        s.push_back(v[i].get<double>());
    }
    return s;
  }

  void unknown_keys(const json& j, const std::string& path, std::initializer_list<const char*> known) {
    if (!j.is_object()) return;
    for (const auto& [k, v] : j.items()) {
      bool ok = false;
      for (const char* n : known) ok = ok || k == n;
      if (!ok) fail(path + "/" + k, "unknown field \"" + k + "\"");
    }
  }
};

FitMode fit_mode_from(const std::string& s, Reader& r, const std::string& path) {
  if (s == "auto") return FitMode::Auto;
  if (s == "exact") return FitMode::Exact;
  if (s == "monte_carlo") return FitMode::MonteCarlo;
  r.fail(path, "expected \"auto\", \"exact\" or \"monte_carlo\"");
  return FitMode::Auto;
}

Integration integration_from(const std::string& s, Reader& r, const std::string& path) {
  if (s == "auto") return Integration::Auto;
  if (s == "exact") return Integration::Exact;
  if (s == "monte_carlo") return Integration::MonteCarlo;
  r.fail(path, "expected \"auto\", \"exact\" or \"monte_carlo\"");
  return Integration::Auto;
}

std::optional<std::vector<std::int8_t>> binary_series(const json& j, const char* key, int tau, Reader& r,
                                                      const std::string& path) {
  if (!r.is(j, key)) {
    r.fail(path + "/" + key, "missing");
    return std::nullopt;
  }
  const json& v = j[key];
  if (!v.is_array() || static_cast<int>(v.size()) != tau) {
    r.fail(path + "/" + key, "expected an array of " + std::to_string(tau) + " values in {0, 1}");
    return std::nullopt;
  }
  std::vector<std::int8_t> out;
  for (const auto& x : v) {
    if (!x.is_number_integer() || (x != 0 && x != 1)) {
      r.fail(path + "/" + key, "expected values in {0, 1}");
      return std::nullopt;
    }
    out.push_back(static_cast<std::int8_t>(x.get<int>()));
  }
  return out;
}

void parse_policy(const std::string& name, const json& j, const std::string& path, const Scenario& s, Reader& r,
                  const std::filesystem::path& base_dir, std::vector<PolicyRequest>& out) {
  PolicyRequest p;
  p.name = name;
  if (!j.is_object()) {
    r.fail(path, "policy must be an object");
    return;
  }
  const int tau = s.spec.horizon;
  int sources = 0;
  for (const char* k : {"derive", "hazards", "policy", "file", "data_adaptive"}) sources += r.is(j, k) ? 1 : 0;
  if (sources != 1) {
    r.fail(path, "policy needs exactly one of derive, hazards, policy, file, data_adaptive");
    return;
  }
  r.unknown_keys(j, path, {"derive", "hazards", "policy", "file", "data_adaptive", "description"});
  if (r.is(j, "derive")) {
    const json& d = j["derive"];
    const std::string dp = path + "/derive";
    p.source = PolicyRequest::Source::Derive;
    r.unknown_keys(d, dp, {"kind", "a_ref"});
    const auto kind = r.string(d, "kind", dp).value_or("marginal");
    if (kind == "conditional")
      p.conditional = true;
    else if (kind != "marginal")
      r.fail(dp + "/kind", "expected \"marginal\" or \"conditional\"");
    if (!r.is(d, "a_ref"))
      r.fail(dp + "/a_ref", "missing reference exposure a_ref");
    else
      p.a_ref = r.exposure(d, "a_ref", dp).value_or(0);
  } else if (r.is(j, "hazards")) {
    const json& h = j["hazards"];
    const std::string hp = path + "/hazards";
    p.source = PolicyRequest::Source::Hazards;
    r.unknown_keys(h, hp, {"z1", "z2"});
    for (const char* k : {"z1", "z2"}) {
      auto v = r.numbers(h, k, hp);
      if (!v) {
        if (!r.is(h, k)) r.fail(hp + "/" + k, "missing per-time hazards");
        continue;
      }
      if (static_cast<int>(v->size()) != tau) {
        r.fail(hp + "/" + k, "expected " + std::to_string(tau) + " per-time hazards");
        continue;
      }
      for (std::size_t i = 0; i < v->size(); ++i)
        if (!((*v)[i] >= 0.0 && (*v)[i] <= 1.0))
          r.fail(hp + "/" + k + "/" + std::to_string(i), "hazard outside [0, 1]");
      (std::string(k) == "z1" ? p.z1_hazard : p.z2_hazard) = *v;
    }
  } else if (r.is(j, "policy")) {
    p.source = PolicyRequest::Source::Inline;
    p.policy = j["policy"];
  } else if (r.is(j, "file")) {
    p.source = PolicyRequest::Source::File;
    if (auto f = r.string(j, "file", path)) {
      p.file = *f;
      try {
        const auto full = base_dir / *f;
        p.policy = parse_json_text(read_file(full), full.string());
      } catch (const Error& e) {
        r.fail(path + "/file", e.what());
      }
    }
  } else {
    const json& d = j["data_adaptive"];
    const std::string dp = path + "/data_adaptive";
    p.source = PolicyRequest::Source::DataAdaptive;
    r.unknown_keys(d, dp, {"arm"});
    if (!r.is(d, "arm"))
      r.fail(dp + "/arm", "missing exposure arm");
    else
      p.arm = r.exposure(d, "arm", dp).value_or(0);
  }
  if ((p.source == PolicyRequest::Source::Inline || p.source == PolicyRequest::Source::File) && s.scm &&
      !p.policy.is_null()) {
    try {
      const auto pol = MediatorPolicy::from_json(p.policy, s.scm->schema());
      if (pol.horizon != tau) r.fail(path, "policy horizon does not match the SCM");
    } catch (const Error& e) {
      r.fail(path, std::string("invalid policy: ") + e.what());
    } catch (const json::exception& e) {
      r.fail(path, std::string("invalid policy: ") + e.what());
    }
  }
  out.push_back(std::move(p));
}

void parse_estimand(const json& j, std::size_t index, const std::string& path, Scenario& s, Reader& r) {
  EstimandRequest e;
  e.index = index;
  e.request = j;
  if (!j.is_object()) {
    r.fail(path, "estimand request must be an object");
    return;
  }
  r.unknown_keys(j, path,
                 {"id", "estimand", "method", "policy", "a_ref", "z_profile", "adjustment", "model",
                  "independent_arms", "description"});
  const auto name = r.string(j, "estimand", path);
  if (!name) {
    if (!r.is(j, "estimand")) r.fail(path + "/estimand", "missing estimand");
    return;
  }
  try {
    e.estimand = estimand_from_string(*name);
  } catch (const Error& err) {
    r.fail(path + "/estimand", err.what());
    return;
  }
  e.id = r.string(j, "id", path).value_or(std::string(to_string(e.estimand)) + "#" + std::to_string(index));
  e.method = r.string(j, "method", path).value_or("monte_carlo");
  const std::set<std::string> truth{"monte_carlo", "oracle"};
  if (!truth.count(e.method)) {
    const bool ok = (e.estimand == EstimandKind::CTE && e.method == "gformula") ||
                    (e.estimand == EstimandKind::CSDE && (e.method == "gcomp" || e.method == "ipw"));
    if (!ok) r.fail(path + "/method", "method \"" + e.method + "\" is not available for " + *name);
  }
  if (e.method == "oracle" && !s.enumerable)
    r.fail(path + "/method", "oracle method needs an enumeration-eligible SCM: " + s.enumerable_reason);
  e.independent_arms = r.boolean(j, "independent_arms", path).value_or(false);

  const int tau = s.spec.horizon;
  switch (e.estimand) {
    case EstimandKind::CSDE:
      if (auto p = r.string(j, "policy", path)) {
        e.policy = *p;
        if (!s.find_policy(*p)) r.fail(path + "/policy", "unknown policy \"" + *p + "\"");
      } else if (!r.is(j, "policy")) {
        r.fail(path + "/policy", "CSDE needs a policy");
      }
      break;
    case EstimandKind::NDE_MARGINAL:
    case EstimandKind::NDE_CONDITIONAL:
      if (!r.is(j, "a_ref"))
        r.fail(path + "/a_ref", "missing reference exposure a_ref");
      else
        e.a_ref = r.exposure(j, "a_ref", path).value_or(0);
      break;
    case EstimandKind::CDE:
      if (!r.is(j, "z_profile") || j["z_profile"] == "survival_and_birth") {
        e.profile = MediatorProfile::survival_and_birth(std::max(1, tau));
      } else if (!j["z_profile"].is_object()) {
        r.fail(path + "/z_profile", "expected \"survival_and_birth\" or an object with z1 and z2");
      } else {
        const auto z1 = binary_series(j["z_profile"], "z1", tau, r, path + "/z_profile");
        const auto z2 = binary_series(j["z_profile"], "z2", tau, r, path + "/z_profile");
        if (z1 && z2) {
          e.profile = {*z1, *z2};
          const auto why = e.profile.check(tau, s.spec.death_blocks_birth);
          if (!why.empty()) r.fail(path + "/z_profile", why);
        }
      }
      break;
    case EstimandKind::CTE: break;
  }
  if (r.is(j, "adjustment")) {
    if (e.method != "gformula")
      r.fail(path + "/adjustment", "adjustment applies to the gformula method only");
    else
      e.adjustment = r.strings(j, "adjustment", path);
    if (e.adjustment && s.scm) {
      try {
        (void)Stratification::of(s.scm->schema(), *e.adjustment);
      } catch (const Error& err) {
        r.fail(path + "/adjustment", err.what());
      }
    }
  }
  if (r.is(j, "model")) {
    const json& m = j["model"];
    const std::string mp = path + "/model";
    if (e.method != "gcomp" && e.method != "ipw") r.fail(mp, "model options apply to gcomp and ipw only");
    r.unknown_keys(m, mp, {"mode", "drop"});
    const auto mode = r.string(m, "mode", mp).value_or("verification");
    if (mode == "misspecified")
      e.model.mode = ModelMode::Misspecified;
    else if (mode != "verification")
      r.fail(mp + "/mode", "expected \"verification\" or \"misspecified\"");
    e.model.drop = r.strings(m, "drop", mp).value_or(std::vector<std::string>{});
    if (e.model.mode == ModelMode::Misspecified && e.model.drop.empty())
      r.fail(mp + "/drop", "misspecified mode needs variables to drop");
  }
  s.estimands.push_back(std::move(e));
}

}  // namespace

ScenarioError::ScenarioError(std::string source, std::vector<Violation> violations)
    : Error(join_violations(source, violations)), source_(std::move(source)), violations_(std::move(violations)) {}

ScenarioParseError::ScenarioParseError(const std::string& source, std::size_t line, std::size_t column,
                                       const std::string& detail)
    : Error(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + detail),
      line_(line),
      column_(column) {}

const PolicyRequest* Scenario::find_policy(const std::string& n) const {
  for (const auto& p : policies)
    if (p.name == n) return &p;
  return nullptr;
}

Scenario load_scenario(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const json doc = parse_json_text(text, path.string());
  return parse_scenario(doc, path.parent_path(), path.string());
}

Scenario parse_scenario(const json& doc_in, const std::filesystem::path& base_dir, const std::string& source) {
  std::vector<Violation> v;
  Reader r{v};
  Scenario s;
  s.source = source;
  if (!doc_in.is_object()) throw ScenarioError(source, {{"", "scenario must be a JSON object"}});
  json doc = doc_in;
  r.unknown_keys(doc, "",
                 {"schema_version", "name", "description", "scm", "scm_file", "seed", "threads", "mc", "strata",
                  "policies", "estimands", "diagnostics", "output"});

  if (!r.is(doc, "schema_version"))
    r.fail("/schema_version", "missing schema_version");
  else if (doc["schema_version"] != kScenarioSchemaVersion)
    r.fail("/schema_version", "unsupported schema_version (expected " + std::to_string(kScenarioSchemaVersion) + ")");
  if (auto n = r.string(doc, "name", "")) s.name = *n;
  if (s.name.empty())
    r.fail("/name", "missing scenario name");
  else if (s.name.find_first_of("/\\ ") != std::string::npos)
    r.fail("/name", "name must not contain spaces or path separators");
  s.description = r.string(doc, "description", "").value_or("");

  // SCM, inline or by file.
  json scm_doc;
  if (r.is(doc, "scm") == r.is(doc, "scm_file")) {
    r.fail("/scm", "give exactly one of scm and scm_file");
  } else if (r.is(doc, "scm")) {
    scm_doc = doc["scm"];
  } else if (auto f = r.string(doc, "scm_file", "")) {
    try {
      const auto full = base_dir / *f;
      scm_doc = parse_json_text(read_file(full), full.string());
      doc.erase("scm_file");
      doc["scm"] = scm_doc;
    } catch (const Error& e) {
      r.fail("/scm_file", e.what());
    }
  }
  if (!scm_doc.is_null()) {
    std::vector<Violation> sv;
    s.spec = scm_from_json(scm_doc, sv, "/scm");
    if (sv.empty()) {
      for (auto x : validate_scm(s.spec)) {
        x.path = "/scm" + x.path;
        sv.push_back(std::move(x));
      }
    }
    v.insert(v.end(), sv.begin(), sv.end());
    if (sv.empty()) {
      try {
        s.scm = std::make_shared<const Scm>(Scm::compile(s.spec));
        s.enumerable = s.scm->enumerable(&s.enumerable_reason);
      } catch (const InvalidSpecError& e) {
        for (auto x : e.violations()) {
          x.path = "/scm" + x.path;
          v.push_back(std::move(x));
        }
      }
    }
  }

  if (r.is(doc, "seed"))
    s.seed = r.u64(doc, "seed", "", true).value_or(1);
  else
    r.fail("/seed", "missing seed");
  if (auto t = r.u64(doc, "threads", "", true)) s.threads = static_cast<int>(std::min<std::uint64_t>(*t, 1024));

  if (r.is(doc, "mc")) {
    const json& m = doc["mc"];
    if (!m.is_object()) r.fail("/mc", "expected an object");
    r.unknown_keys(m, "/mc",
                   {"n_truth", "n_policy_fit", "n_observational", "bootstrap_replicates", "policy_fit",
                    "gcomp_integration", "gcomp_mc_draws", "weight_cap"});
    if (auto x = r.u64(m, "n_truth", "/mc", true)) s.mc.n_truth = *x;
    if (auto x = r.u64(m, "n_policy_fit", "/mc", true)) s.mc.n_policy_fit = *x;
    if (auto x = r.u64(m, "n_observational", "/mc", true)) s.mc.n_observational = *x;
    if (auto x = r.u64(m, "bootstrap_replicates", "/mc", false)) s.mc.bootstrap_replicates = *x;
    if (auto x = r.string(m, "policy_fit", "/mc")) s.mc.policy_fit = fit_mode_from(*x, r, "/mc/policy_fit");
    if (auto x = r.string(m, "gcomp_integration", "/mc"))
      s.mc.gcomp_integration = integration_from(*x, r, "/mc/gcomp_integration");
    if (auto x = r.u64(m, "gcomp_mc_draws", "/mc", true)) s.mc.gcomp_mc_draws = *x;
    if (auto x = r.number(m, "weight_cap", "/mc")) {
      if (!(*x > 0.0) || !std::isfinite(*x))
        r.fail("/mc/weight_cap", "must be positive and finite");
      else
        s.mc.weight_cap = *x;
    }
  }
  if (s.mc.policy_fit == FitMode::Exact && s.scm && !s.enumerable)
    r.fail("/mc/policy_fit", "exact policy fit needs an enumeration-eligible SCM: " + s.enumerable_reason);

  if (s.scm) {
    try {
      if (!r.is(doc, "strata")) {
        s.strata = Stratification::all_discrete(s.scm->schema());
      } else if (doc["strata"].is_array()) {
        auto names = r.strings(doc, "strata", "");
        if (names) s.strata = Stratification::of(s.scm->schema(), *names);
      } else if (doc["strata"].is_object()) {
        const json& st = doc["strata"];
        r.unknown_keys(st, "/strata", {"vars", "cuts"});
        const auto names = r.strings(st, "vars", "/strata").value_or(std::vector<std::string>{});
        std::map<std::string, std::vector<double>> cuts;
        if (r.is(st, "cuts")) {
          if (!st["cuts"].is_object())
            r.fail("/strata/cuts", "expected an object of cut point arrays");
          else
            for (const auto& [k, c] : st["cuts"].items()) {
              auto x = r.numbers(st["cuts"], k.c_str(), "/strata/cuts");
              if (x) cuts[k] = *x;
            }
        }
        s.strata = Stratification::of(s.scm->schema(), names, cuts);
      } else {
        r.fail("/strata", "expected an array of baseline names or an object with vars and cuts");
      }
    } catch (const Error& e) {
      r.fail("/strata", e.what());
    }
  }

  if (r.is(doc, "policies")) {
    if (!doc["policies"].is_object()) {
      r.fail("/policies", "expected an object of named policies");
    } else {
      for (auto& [k, p] : doc["policies"].items()) {
        parse_policy(k, p, "/policies/" + k, s, r, base_dir, s.policies);
        // Resolve file references so that the digest covers the table.
        if (!s.policies.empty() && s.policies.back().name == k &&
            s.policies.back().source == PolicyRequest::Source::File && !s.policies.back().policy.is_null())
          p = json{{"policy", s.policies.back().policy}};
      }
    }
  }

  if (!r.is(doc, "estimands") || !doc["estimands"].is_array()) {
    r.fail("/estimands", "expected an array of estimand requests");
  } else if (s.scm) {
    for (std::size_t i = 0; i < doc["estimands"].size(); ++i)
      parse_estimand(doc["estimands"][i], i, "/estimands/" + std::to_string(i), s, r);
    std::set<std::string> ids;
    for (const auto& e : s.estimands)
      if (!ids.insert(e.id).second) r.fail("/estimands/" + std::to_string(e.index) + "/id", "duplicate id " + e.id);
  }

  if (r.is(doc, "diagnostics")) {
    if (!doc["diagnostics"].is_array()) {
      r.fail("/diagnostics", "expected an array of positivity requests");
    } else {
      for (std::size_t i = 0; i < doc["diagnostics"].size(); ++i) {
        const json& d = doc["diagnostics"][i];
        const std::string path = "/diagnostics/" + std::to_string(i);
        r.unknown_keys(d, path, {"policy", "epsilon"});
        DiagnosticRequest q;
        if (auto p = r.string(d, "policy", path)) {
          q.policy = *p;
          if (!s.find_policy(*p)) r.fail(path + "/policy", "unknown policy \"" + *p + "\"");
        } else {
          r.fail(path + "/policy", "missing policy");
        }
        if (auto e = r.number(d, "epsilon", path)) {
          if (!(*e > 0.0 && *e < 0.5))
            r.fail(path + "/epsilon", "epsilon must lie in (0, 0.5)");
          else
            q.epsilon = *e;
        }
        s.diagnostics.push_back(q);
      }
    }
  }

  if (r.is(doc, "output")) {
    const json& o = doc["output"];
    r.unknown_keys(o, "/output", {"format", "dir"});
    if (auto f = r.string(o, "format", "/output")) {
      if (*f != "json" && *f != "csv" && *f != "both")
        r.fail("/output/format", "expected json, csv or both");
      else
        s.output_format = *f;
    }
    s.output_dir = r.string(o, "dir", "/output").value_or("");
  }

  if (!v.empty()) throw ScenarioError(source, std::move(v));
  s.document = std::move(doc);
  s.digest = hex_digest(s.document.dump());
  return s;
}

// ---------------------------------------------------------------------------
// Running

namespace {

class Runner {
 public:
  Runner(const Scenario& s, std::uint64_t seed, int threads) : s_(s), seed_(seed), threads_(threads) {}

  const Population& observational() {
    if (!data_)
      data_ = std::make_unique<Population>(
          simulate_natural(*s_.scm, s_.mc.n_observational, derive_seed(seed_, "observational"), threads_));
    return *data_;
  }

  std::shared_ptr<const MediatorPolicy> policy(const std::string& name) {
    if (auto it = cache_.find(name); it != cache_.end()) return it->second;
    const PolicyRequest* req = s_.find_policy(name);
    if (!req) throw PolicyError("unknown policy " + name);
    MediatorPolicy p;
    const Scm& scm = *s_.scm;
    switch (req->source) {
      case PolicyRequest::Source::Derive: {
        PolicyFit fit;
        fit.mode = s_.mc.policy_fit;
        fit.n_fit = s_.mc.n_policy_fit;
        fit.seed = derive_seed(seed_, "policy/" + name);
        fit.threads = threads_;
        p = req->conditional ? derive_policy_conditional(scm, req->a_ref, fit, s_.strata)
                             : derive_policy_marginal(scm, req->a_ref, fit, s_.strata);
        break;
      }
      case PolicyRequest::Source::Hazards:
        p = MediatorPolicy::constant_hazards(scm.horizon(), s_.strata, req->z1_hazard, req->z2_hazard);
        break;
      case PolicyRequest::Source::Inline:
      case PolicyRequest::Source::File: p = MediatorPolicy::from_json(req->policy, scm.schema()); break;
      case PolicyRequest::Source::DataAdaptive: p = fit_policy_from_data(observational(), req->arm, s_.strata); break;
    }
    auto ptr = std::make_shared<const MediatorPolicy>(std::move(p));
    cache_[name] = ptr;
    return ptr;
  }

  json policy_summaries() const {
    json out = json::object();
    for (const auto& [name, p] : cache_) {
      json j = p->to_json(s_.scm->schema());
      j["digest"] = p->digest(s_.scm->schema());
      out[name] = std::move(j);
    }
    return out;
  }

  EstimandReport estimate(const EstimandRequest& e) {
    const Scm& scm = *s_.scm;
    const std::uint64_t seed = derive_seed(seed_, static_cast<std::uint64_t>(e.index));
    if (e.method == "monte_carlo" || e.method == "oracle") {
      const bool exact = e.method == "oracle";
      TruthConfig cfg;
      cfg.n = s_.mc.n_truth;
      cfg.seed = seed;
      cfg.threads = threads_;
      cfg.independent_arms = e.independent_arms;
      cfg.policy_mode = s_.mc.policy_fit;
      cfg.n_policy_fit = s_.mc.n_policy_fit;
      cfg.strata = s_.strata;
      switch (e.estimand) {
        case EstimandKind::CTE: return exact ? exact_cte(scm) : conditional_total_effect(scm, cfg);
        case EstimandKind::CSDE: {
          auto p = policy(e.policy);
          return exact ? exact_csde(scm, p) : conditional_stochastic_direct_effect(scm, p, cfg);
        }
        case EstimandKind::CDE:
          return exact ? exact_cde(scm, e.profile) : controlled_direct_effect(scm, e.profile, cfg);
        case EstimandKind::NDE_MARGINAL:
          return exact ? exact_nde_marginal(scm, e.a_ref, s_.strata) : nde_marginal(scm, e.a_ref, cfg);
        case EstimandKind::NDE_CONDITIONAL:
          return exact ? exact_nde_conditional(scm, e.a_ref, s_.strata) : nde_conditional(scm, e.a_ref, cfg);
      }
    }
    EstimatorConfig cfg;
    cfg.bootstrap_replicates = s_.mc.bootstrap_replicates;
    cfg.seed = seed;
    cfg.threads = threads_;
    cfg.weight_cap = s_.mc.weight_cap;
    cfg.integration = s_.mc.gcomp_integration;
    cfg.mc_draws = s_.mc.gcomp_mc_draws;
    const Population& data = observational();
    if (e.method == "gformula") {
      const Stratification adj = e.adjustment ? Stratification::of(scm.schema(), *e.adjustment) : s_.strata;
      return estimate_cte(data, adj, cfg);
    }
    auto p = policy(e.policy);
    if (e.method == "gcomp") return estimate_csde_gcomp(data, scm, p, e.model, cfg);
    return estimate_csde_ipw(data, scm, p, e.model, cfg);
  }

  PositivityReport diagnose(const DiagnosticRequest& d) {
    auto p = policy(d.policy);
    return positivity_diagnostics(observational(), *p, d.epsilon, s_.scm->death_blocks_birth(), s_.strata);
  }

 private:
  const Scenario& s_;
  std::uint64_t seed_;
  int threads_;
  std::unique_ptr<Population> data_;
  std::map<std::string, std::shared_ptr<const MediatorPolicy>> cache_;
};

template <class Outcome>
void capture(Outcome& out, const std::function<void()>& f) {
  try {
    f();
  } catch (const PositivityError& e) {
    out.error_kind = e.kind();
    out.error_message = e.what();
    if constexpr (requires { out.error_strata; }) out.error_strata = e.strata();
  } catch (const Error& e) {
    out.error_kind = e.kind();
    out.error_message = e.what();
  } catch (const std::logic_error& e) {
    out.error_kind = "internal";
    out.error_message = e.what();
  }
}

std::string csv_number(double x) {
  if (!std::isfinite(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

RunReport run_scenario(const Scenario& s, const RunOptions& options) {
  RunReport rep;
  rep.scenario = s.name;
  rep.seed = options.seed.value_or(s.seed);
  const int threads = std::max(1, options.threads.value_or(s.threads));
  rep.provenance = {{"engine", "lbpsim"},
                    {"engine_version", kEngineVersion},
                    {"seed", rep.seed},
                    {"spec_digest", s.scm->digest()},
                    {"scenario_digest", s.digest},
                    {"enumerable", s.enumerable}};
  Runner runner(s, rep.seed, threads);
  if (options.estimands) {
    for (const auto& e : s.estimands) {
      EstimandOutcome out;
      out.request = e;
      capture(out, [&] { out.report = runner.estimate(e); });
      rep.estimands.push_back(std::move(out));
    }
  }
  if (options.diagnostics) {
    for (const auto& d : s.diagnostics) {
      DiagnosticOutcome out;
      out.request = d;
      capture(out, [&] { out.report = runner.diagnose(d); });
      rep.diagnostics.push_back(std::move(out));
    }
  }
  rep.policies = runner.policy_summaries();
  return rep;
}

std::size_t RunReport::error_count() const {
  std::size_t n = 0;
  for (const auto& e : estimands) n += e.ok() ? 0 : 1;
  for (const auto& d : diagnostics) n += d.report ? 0 : 1;
  return n;
}

json RunReport::to_json() const {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["scenario"] = scenario;
  j["provenance"] = provenance;
  j["policies"] = policies;
  json es = json::array();
  for (const auto& e : estimands) {
    json x;
    x["index"] = e.request.index;
    x["id"] = e.request.id;
    x["request"] = e.request.request;
    x["seed"] = derive_seed(seed, static_cast<std::uint64_t>(e.request.index));
    if (e.ok()) {
      x["status"] = "ok";
      x["report"] = e.report->to_json();
    } else {
      x["status"] = "error";
      x["error"] = {{"kind", e.error_kind}, {"message", e.error_message}, {"strata", e.error_strata}};
    }
    es.push_back(std::move(x));
  }
  j["estimands"] = std::move(es);
  json ds = json::array();
  for (const auto& d : diagnostics) {
    json x;
    x["policy"] = d.request.policy;
    x["epsilon"] = d.request.epsilon;
    if (d.report) {
      x["status"] = "ok";
      x["report"] = d.report->to_json();
    } else {
      x["status"] = "error";
      x["error"] = {{"kind", d.error_kind}, {"message", d.error_message}};
    }
    ds.push_back(std::move(x));
  }
  j["diagnostics"] = std::move(ds);
  j["errors"] = error_count();
  return j;
}

std::string RunReport::summary_csv() const {
  std::string out = "scenario,seed,estimand,id,method,value,mc_se,denom_arm1,denom_arm0,status\n";
  for (const auto& e : estimands) {
    const auto seed_e = derive_seed(seed, static_cast<std::uint64_t>(e.request.index));
    out += csv_field(scenario) + "," + std::to_string(seed_e) + "," + to_string(e.request.estimand) + "," +
           csv_field(e.request.id) + "," + e.request.method + ",";
    if (e.ok()) {
      const auto& r = *e.report;
      out += csv_number(r.value) + "," + csv_number(r.mc_se) + "," + csv_number(r.arm1.denominator) + "," +
             csv_number(r.arm0.denominator) + ",ok\n";
    } else {
      out += ",,,,error:" + e.error_kind + "\n";
    }
  }
  return out;
}

json oracle_sidecar(const Scenario& s) {
  if (!s.enumerable) throw UnsupportedSpecError("scenario " + s.name + " is not enumeration-eligible: " + s.enumerable_reason);
  const Scm& scm = *s.scm;
  std::map<std::string, std::shared_ptr<const MediatorPolicy>> policies;
  auto policy = [&](const std::string& name) -> std::shared_ptr<const MediatorPolicy> {
    if (auto it = policies.find(name); it != policies.end()) return it->second;
    const PolicyRequest* req = s.find_policy(name);
    std::shared_ptr<const MediatorPolicy> p;
    switch (req->source) {
      case PolicyRequest::Source::Derive: {
        PolicyFit fit;
        fit.mode = FitMode::Exact;
        p = std::make_shared<const MediatorPolicy>(req->conditional
                                                       ? derive_policy_conditional(scm, req->a_ref, fit, s.strata)
                                                       : derive_policy_marginal(scm, req->a_ref, fit, s.strata));
        break;
      }
      case PolicyRequest::Source::Hazards:
        p = std::make_shared<const MediatorPolicy>(
            MediatorPolicy::constant_hazards(scm.horizon(), s.strata, req->z1_hazard, req->z2_hazard));
        break;
      case PolicyRequest::Source::Inline:
      case PolicyRequest::Source::File:
        p = std::make_shared<const MediatorPolicy>(MediatorPolicy::from_json(req->policy, scm.schema()));
        break;
      case PolicyRequest::Source::DataAdaptive: break;
    }
    policies[name] = p;
    return p;
  };

  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["scenario"] = s.name;
  j["spec_digest"] = scm.digest();
  j["scenario_digest"] = s.digest;
  json es = json::array();
  for (const auto& e : s.estimands) {
    json x;
    x["index"] = e.index;
    x["id"] = e.id;
    x["estimand"] = to_string(e.estimand);
    x["method"] = e.method;
    try {
      std::optional<EstimandReport> r;
      switch (e.estimand) {
        case EstimandKind::CTE: r = exact_cte(scm); break;
        case EstimandKind::CSDE:
          if (auto p = policy(e.policy))
            r = exact_csde(scm, p);
          else
            x["note"] = "policy is estimated from data; no fixed target";
          break;
        case EstimandKind::CDE: r = exact_cde(scm, e.profile); break;
        case EstimandKind::NDE_MARGINAL: r = exact_nde_marginal(scm, e.a_ref, s.strata); break;
        case EstimandKind::NDE_CONDITIONAL: r = exact_nde_conditional(scm, e.a_ref, s.strata); break;
      }
      if (r) {
        x["status"] = "ok";
        x["value"] = r->value;
        x["arm1"] = r->arm1.to_json();
        x["arm0"] = r->arm0.to_json();
      } else {
        x["status"] = "none";
      }
    } catch (const Error& err) {
      x["status"] = "error";
      x["error"] = {{"kind", err.kind()}, {"message", err.what()}};
    }
    es.push_back(std::move(x));
  }
  j["estimands"] = std::move(es);
  return j;
}

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "both") return ReportFormat::Both;
  throw Error("unknown report format \"" + s + "\" (expected json, csv or both)");
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::filesystem::path> emit_report(const RunReport& report, const std::filesystem::path& dir,
                                               ReportFormat format) {
  std::error_code ec;
  if (!dir.empty()) {
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
  std::vector<std::filesystem::path> written;
  if (format != ReportFormat::Csv) {
    const auto p = dir / (report.scenario + ".report.json");
    write_text_file(p, report.to_json().dump(2) + "\n");
    written.push_back(p);
  }
  if (format != ReportFormat::Json) {
    const auto p = dir / (report.scenario + ".summary.csv");
    write_text_file(p, report.summary_csv());
    written.push_back(p);
  }
  return written;
}

}  // namespace lbp
