#include "lbp/scm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "lbp/rng.hpp"

namespace lbp {

InvalidSpecError::InvalidSpecError(std::vector<Violation> violations)
    : Error([&] {
        std::string msg = "invalid SCM spec";
        for (const auto& v : violations) msg += "\n  " + v.path + ": " + v.message;
        return msg;
      }()),
      violations_(std::move(violations)) {}

const char* to_string(LawKind kind) {
  switch (kind) {
    case LawKind::Constant: return "constant";
    case LawKind::Logistic: return "logistic";
    case LawKind::Table: return "table";
    case LawKind::Deterministic: return "deterministic";
    case LawKind::Categorical: return "categorical";
    case LawKind::Uniform: return "uniform";
  }
  return "?";
}

LawSpec LawSpec::constant(double p) {
  LawSpec s;
  s.kind = LawKind::Constant;
  s.p = p;
  return s;
}

LawSpec LawSpec::logistic(double intercept, std::vector<std::pair<std::string, double>> coef) {
  LawSpec s;
  s.kind = LawKind::Logistic;
  s.intercept = intercept;
  s.coef = std::move(coef);
  return s;
}

LawSpec LawSpec::deterministic(int value) {
  LawSpec s;
  s.kind = LawKind::Deterministic;
  s.value = value;
  return s;
}

Schema ScmSpec::schema() const {
  Schema s;
  s.horizon = horizon;
  for (const auto& b : baseline) s.baseline.push_back(b.var);
  for (const auto& c : covariates) s.covariates.push_back(c.var);
  return s;
}

std::string hex_digest(std::string_view bytes) {
  const std::uint64_t h1 = fnv1a64(bytes);
  const std::uint64_t h2 = mix64(h1 ^ (bytes.size() * 0x9e3779b97f4a7c15ULL));
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(h1),
                static_cast<unsigned long long>(h2));
  return buf;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

struct Parser {
  std::vector<Violation>& out;

  void fail(const std::string& path, const std::string& msg) { out.push_back({path, msg}); }

  bool number(const json& j, const std::string& key, const std::string& path, double& dst, bool required = true) {
    if (!j.contains(key)) {
      if (required) fail(path + "/" + key, "missing required number");
      return false;
    }
    if (!j[key].is_number()) {
      fail(path + "/" + key, "expected a number");
      return false;
    }
    dst = j[key].get<double>();
    return true;
  }

  std::vector<double> numbers(const json& j, const std::string& path) {
    std::vector<double> v;
    if (!j.is_array()) {
      fail(path, "expected an array of numbers");
      return v;
    }
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number())
        fail(path + "/" + std::to_string(i), "expected a number");
      else
        v.push_back(j[i].get<double>());
    }
    return v;
  }

  LawSpec law(const json& j, const std::string& path) {
    LawSpec s;
    if (!j.is_object()) {
      fail(path, "expected a law object");
      return s;
    }
    if (!j.contains("kind") || !j["kind"].is_string()) {
      fail(path + "/kind", "missing law kind");
      return s;
    }
    const auto kind = j["kind"].get<std::string>();
    if (kind == "constant") {
      s.kind = LawKind::Constant;
      number(j, "p", path, s.p);
    } else if (kind == "logistic") {
      s.kind = LawKind::Logistic;
      number(j, "intercept", path, s.intercept, false);
      if (j.contains("coef")) {
        if (!j["coef"].is_object()) {
          fail(path + "/coef", "expected an object of term -> coefficient");
        } else {
          for (auto it = j["coef"].begin(); it != j["coef"].end(); ++it) {
            if (!it.value().is_number())
              fail(path + "/coef/" + it.key(), "expected a number");
            else
              s.coef.emplace_back(it.key(), it.value().get<double>());
          }
        }
      }
    } else if (kind == "table") {
      s.kind = LawKind::Table;
      if (!j.contains("parents") || !j["parents"].is_array()) {
        fail(path + "/parents", "table law needs a parents array");
      } else {
        for (const auto& p : j["parents"]) {
          if (p.is_string())
            s.parents.push_back(p.get<std::string>());
          else
            fail(path + "/parents", "parent references must be strings");
        }
      }
      if (j.contains("p")) {
        s.table = numbers(j["p"], path + "/p");
      } else if (j.contains("probs")) {
        if (!j["probs"].is_array()) {
          fail(path + "/probs", "expected an array of probability vectors");
        } else {
          for (std::size_t i = 0; i < j["probs"].size(); ++i)
            s.table_rows.push_back(numbers(j["probs"][i], path + "/probs/" + std::to_string(i)));
        }
      } else {
        fail(path, "table law needs \"p\" (binary child) or \"probs\" (categorical child)");
      }
    } else if (kind == "deterministic") {
      s.kind = LawKind::Deterministic;
      if (j.contains("parent")) {
        if (!j["parent"].is_string())
          fail(path + "/parent", "expected a reference string");
        else
          s.parent = j["parent"].get<std::string>();
        if (j.contains("negate")) {
          if (!j["negate"].is_boolean())
            fail(path + "/negate", "expected a boolean");
          else
            s.negate = j["negate"].get<bool>();
        }
      } else if (j.contains("value") && j["value"].is_number_integer()) {
        s.value = j["value"].get<int>();
      } else {
        fail(path, "deterministic law needs an integer \"value\" or a \"parent\"");
      }
    } else if (kind == "categorical") {
      s.kind = LawKind::Categorical;
      if (!j.contains("probs"))
        fail(path + "/probs", "categorical law needs probs");
      else
        s.probs = numbers(j["probs"], path + "/probs");
    } else if (kind == "uniform") {
      s.kind = LawKind::Uniform;
      number(j, "lo", path, s.lo);
      number(j, "hi", path, s.hi);
    } else {
      fail(path + "/kind", "unknown law kind \"" + kind + "\"");
    }
    return s;
  }

  VariableInfo variable(const json& j, const std::string& path) {
    VariableInfo v;
    if (!j.contains("name") || !j["name"].is_string())
      fail(path + "/name", "missing variable name");
    else
      v.name = j["name"].get<std::string>();
    std::string type = "binary";
    if (j.contains("type")) {
      if (!j["type"].is_string())
        fail(path + "/type", "expected a string");
      else
        type = j["type"].get<std::string>();
    }
    if (type == "binary") {
      v.type = VarType::Binary;
      v.levels = 2;
    } else if (type == "categorical") {
      v.type = VarType::Categorical;
      if (!j.contains("levels") || !j["levels"].is_number_integer())
        fail(path + "/levels", "categorical variable needs integer levels");
      else
        v.levels = j["levels"].get<int>();
    } else if (type == "continuous") {
      v.type = VarType::Continuous;
      v.levels = 0;
    } else {
      fail(path + "/type", "unknown variable type \"" + type + "\"");
    }
    return v;
  }

  std::vector<LawSpec> laws(const json& j, const std::string& path) {
    std::vector<LawSpec> v;
    if (!j.is_array()) {
      fail(path, "expected an array of per-time laws");
      return v;
    }
    for (std::size_t i = 0; i < j.size(); ++i) v.push_back(law(j[i], path + "/" + std::to_string(i)));
    return v;
  }
};

json law_to_json(const LawSpec& s) {
  json j;
  j["kind"] = to_string(s.kind);
  switch (s.kind) {
    case LawKind::Constant: j["p"] = s.p; break;
    case LawKind::Logistic: {
      j["intercept"] = s.intercept;
      json coef = json::object();
      for (const auto& [k, v] : s.coef) coef[k] = v;
      j["coef"] = coef;
      break;
    }
    case LawKind::Table:
      j["parents"] = s.parents;
      if (!s.table_rows.empty())
        j["probs"] = s.table_rows;
      else
        j["p"] = s.table;
      break;
    case LawKind::Deterministic:
      if (!s.parent.empty()) {
        j["parent"] = s.parent;
        j["negate"] = s.negate;
      } else {
        j["value"] = s.value;
      }
      break;
    case LawKind::Categorical: j["probs"] = s.probs; break;
    case LawKind::Uniform:
      j["lo"] = s.lo;
      j["hi"] = s.hi;
      break;
  }
  return j;
}

json var_to_json(const VariableInfo& v) {
  json j;
  j["name"] = v.name;
  switch (v.type) {
    case VarType::Binary: j["type"] = "binary"; break;
    case VarType::Categorical:
      j["type"] = "categorical";
      j["levels"] = v.levels;
      break;
    case VarType::Continuous: j["type"] = "continuous"; break;
  }
  return j;
}

}  // namespace

ScmSpec scm_from_json(const json& doc, std::vector<Violation>& violations, const std::string& base) {
  Parser p{violations};
  ScmSpec s;
  if (!doc.is_object()) {
    p.fail(base, "SCM spec must be a JSON object");
    return s;
  }
  if (!doc.contains("horizon") || !doc["horizon"].is_number_integer())
    p.fail(base + "/horizon", "missing integer horizon");
  else
    s.horizon = doc["horizon"].get<int>();
  if (doc.contains("death_blocks_birth")) {
    if (doc["death_blocks_birth"].is_boolean())
      s.death_blocks_birth = doc["death_blocks_birth"].get<bool>();
    else
      p.fail(base + "/death_blocks_birth", "expected a boolean");
  }
  if (doc.contains("shared_mediator_noise")) {
    if (doc["shared_mediator_noise"].is_boolean())
      s.shared_mediator_noise = doc["shared_mediator_noise"].get<bool>();
    else
      p.fail(base + "/shared_mediator_noise", "expected a boolean");
  }
  if (doc.contains("baseline")) {
    if (!doc["baseline"].is_array()) {
      p.fail(base + "/baseline", "expected an array");
    } else {
      for (std::size_t i = 0; i < doc["baseline"].size(); ++i) {
        const auto path = base + "/baseline/" + std::to_string(i);
        const auto& b = doc["baseline"][i];
        BaselineVarSpec v;
        v.var = p.variable(b, path);
        if (!b.contains("law"))
          p.fail(path + "/law", "missing law");
        else
          v.law = p.law(b["law"], path + "/law");
        s.baseline.push_back(std::move(v));
      }
    }
  }
  if (!doc.contains("exposure"))
    p.fail(base + "/exposure", "missing exposure law");
  else
    s.exposure = p.law(doc["exposure"], base + "/exposure");
  if (doc.contains("covariates")) {
    if (!doc["covariates"].is_array()) {
      p.fail(base + "/covariates", "expected an array");
    } else {
      for (std::size_t i = 0; i < doc["covariates"].size(); ++i) {
        const auto path = base + "/covariates/" + std::to_string(i);
        const auto& c = doc["covariates"][i];
        CovariateSpec v;
        v.var = p.variable(c, path);
        if (!c.contains("laws"))
          p.fail(path + "/laws", "missing per-time laws");
        else
          v.laws = p.laws(c["laws"], path + "/laws");
        s.covariates.push_back(std::move(v));
      }
    }
  }
  if (!doc.contains("mediators") || !doc["mediators"].is_object()) {
    p.fail(base + "/mediators", "missing mediators object with z1 and z2");
  } else {
    const auto& m = doc["mediators"];
    if (!m.contains("z1"))
      p.fail(base + "/mediators/z1", "missing z1 laws");
    else
      s.z1 = p.laws(m["z1"], base + "/mediators/z1");
    if (!m.contains("z2"))
      p.fail(base + "/mediators/z2", "missing z2 laws");
    else
      s.z2 = p.laws(m["z2"], base + "/mediators/z2");
  }
  if (!doc.contains("infant_survival"))
    p.fail(base + "/infant_survival", "missing infant survival laws");
  else
    s.y1 = p.laws(doc["infant_survival"], base + "/infant_survival");
  if (!doc.contains("infant_hiv_free"))
    p.fail(base + "/infant_hiv_free", "missing infant HIV-free law");
  else
    s.y2 = p.law(doc["infant_hiv_free"], base + "/infant_hiv_free");
  return s;
}

json to_json(const ScmSpec& s) {
  json j;
  j["horizon"] = s.horizon;
  j["death_blocks_birth"] = s.death_blocks_birth;
  j["shared_mediator_noise"] = s.shared_mediator_noise;
  j["baseline"] = json::array();
  for (const auto& b : s.baseline) {
    auto v = var_to_json(b.var);
    v["law"] = law_to_json(b.law);
    j["baseline"].push_back(v);
  }
  j["exposure"] = law_to_json(s.exposure);
  j["covariates"] = json::array();
  for (const auto& c : s.covariates) {
    auto v = var_to_json(c.var);
    v["laws"] = json::array();
    for (const auto& l : c.laws) v["laws"].push_back(law_to_json(l));
    j["covariates"].push_back(v);
  }
  auto arr = [](const std::vector<LawSpec>& laws) {
    json a = json::array();
    for (const auto& l : laws) a.push_back(law_to_json(l));
    return a;
  };
  j["mediators"] = {{"z1", arr(s.z1)}, {"z2", arr(s.z2)}};
  j["infant_survival"] = arr(s.y1);
  j["infant_hiv_free"] = law_to_json(s.y2);
  return j;
}

// ---------------------------------------------------------------------------
// References

namespace {

bool parse_int(const std::string& s, int& v) {
  if (s.empty() || s.size() > 9) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  v = std::stoi(s);
  return true;
}

}  // namespace

std::string parse_factor(const std::string& text, const Schema& schema, int time, Factor& out) {
  std::string body = text;
  std::string level_text;
  if (auto eq = body.find('='); eq != std::string::npos) {
    level_text = body.substr(eq + 1);
    body = body.substr(0, eq);
  }
  std::string time_text;
  if (auto at = body.find('@'); at != std::string::npos) {
    time_text = body.substr(at + 1);
    body = body.substr(0, at);
  }
  Factor f;
  bool timed = true;
  if (body == "a") {
    f.ref.kind = VarKind::Exposure;
    timed = false;
  } else if (body.rfind("l0.", 0) == 0) {
    const auto name = body.substr(3);
    const int idx = schema.baseline_index(name);
    if (idx < 0) return "unknown baseline covariate \"" + name + "\"";
    f.ref.kind = VarKind::Baseline;
    f.ref.index = idx;
    timed = false;
  } else if (body.rfind("l.", 0) == 0) {
    const auto name = body.substr(2);
    const int idx = schema.covariate_index(name);
    if (idx < 0) return "unknown time-varying covariate \"" + name + "\"";
    f.ref.kind = VarKind::Covariate;
    f.ref.index = idx;
  } else if (body == "z1") {
    f.ref.kind = VarKind::Z1;
  } else if (body == "z2") {
    f.ref.kind = VarKind::Z2;
  } else if (body == "y1") {
    f.ref.kind = VarKind::Y1;
  } else {
    return "unknown variable \"" + body + "\"";
  }
  if (!timed) {
    if (!time_text.empty()) return "\"" + body + "\" is not time-indexed";
  } else {
    if (time_text.empty()) return "\"" + body + "\" needs a time index (@t, @t-k or @k)";
    int t = 0;
    if (time_text == "t") {
      t = time;
    } else if (time_text.rfind("t-", 0) == 0) {
      int k = 0;
      if (!parse_int(time_text.substr(2), k)) return "bad time index \"" + time_text + "\"";
      t = time - k;
    } else if (!parse_int(time_text, t)) {
      return "bad time index \"" + time_text + "\"";
    }
    if (t < 1 || t > schema.horizon)
      return "time index of \"" + text + "\" resolves to " + std::to_string(t) + ", outside 1.." +
             std::to_string(schema.horizon);
    f.ref.time = t;
  }
  if (!level_text.empty()) {
    const int levels = ref_levels(f.ref, schema);
    if (levels == 0) return "level indicator on continuous variable \"" + body + "\"";
    int lv = 0;
    if (level_text == "missing" && f.ref.kind == VarKind::Y1)
      lv = 2;
    else if (!parse_int(level_text, lv) || lv >= levels)
      return "bad level \"" + level_text + "\" for \"" + body + "\"";
    f.level = lv;
  }
  out = f;
  return {};
}

std::string parse_term(const std::string& text, const Schema& schema, int time, Term& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    auto star = text.find('*', start);
    auto piece = text.substr(start, star == std::string::npos ? std::string::npos : star - start);
    Factor f;
    if (auto err = parse_factor(piece, schema, time, f); !err.empty()) return err;
    out.push_back(f);
    if (star == std::string::npos) break;
    start = star + 1;
  }
  return {};
}

int ref_levels(const VarRef& ref, const Schema& schema) {
  switch (ref.kind) {
    case VarKind::Baseline: return schema.baseline[static_cast<std::size_t>(ref.index)].levels;
    case VarKind::Covariate: return schema.covariates[static_cast<std::size_t>(ref.index)].levels;
    case VarKind::Y1: return 3;
    default: return 2;
  }
}

std::string ref_name(const VarRef& ref, const Schema& schema) {
  const auto at = "@" + std::to_string(ref.time);
  switch (ref.kind) {
    case VarKind::Baseline: return "l0." + schema.baseline[static_cast<std::size_t>(ref.index)].name;
    case VarKind::Exposure: return "a";
    case VarKind::Covariate: return "l." + schema.covariates[static_cast<std::size_t>(ref.index)].name + at;
    case VarKind::Z1: return "z1" + at;
    case VarKind::Z2: return "z2" + at;
    case VarKind::Y1: return "y1" + at;
  }
  return "?";
}

std::string factor_name(const Factor& f, const Schema& schema) {
  auto s = ref_name(f.ref, schema);
  if (f.level >= 0) s += "=" + (f.ref.kind == VarKind::Y1 && f.level == 2 ? std::string("missing") : std::to_string(f.level));
  return s;
}

double ref_value(const VarRef& ref, const Trajectory& tr) {
  const auto i = static_cast<std::size_t>(ref.time - 1);
  switch (ref.kind) {
    case VarKind::Baseline: return tr.l0[static_cast<std::size_t>(ref.index)];
    case VarKind::Exposure: return tr.a;
    case VarKind::Covariate: return tr.cov(ref.time, ref.index);
    case VarKind::Z1: return tr.z1[i];
    case VarKind::Z2: return tr.z2[i];
    case VarKind::Y1: return tr.y1[i] == 1 ? 1.0 : 0.0;
  }
  return 0.0;
}

int ref_level(const VarRef& ref, const Trajectory& tr) {
  if (ref.kind == VarKind::Y1) {
    const auto v = tr.y1[static_cast<std::size_t>(ref.time - 1)];
    return v == kMissing ? 2 : v;
  }
  return static_cast<int>(ref_value(ref, tr));
}

double factor_value(const Factor& f, const Trajectory& tr) {
  if (f.level < 0) return ref_value(f.ref, tr);
  return ref_level(f.ref, tr) == f.level ? 1.0 : 0.0;
}

double term_value(const Term& term, const Trajectory& tr) {
  double v = 1.0;
  for (const auto& f : term) v *= factor_value(f, tr);
  return v;
}

// ---------------------------------------------------------------------------
// Laws

std::size_t Law::table_cell(const Trajectory& tr) const {
  std::size_t cell = 0;
  for (std::size_t i = 0; i < parents.size(); ++i)
    cell = cell * static_cast<std::size_t>(radix[i]) + static_cast<std::size_t>(ref_level(parents[i], tr));
  return cell;
}

double Law::prob_one(const Trajectory& tr) const {
  switch (kind) {
    case LawKind::Constant: return p;
    case LawKind::Logistic: {
      double eta = intercept;
      for (std::size_t i = 0; i < terms.size(); ++i) eta += coef[i] * term_value(terms[i], tr);
      return 1.0 / (1.0 + std::exp(-eta));
    }
    case LawKind::Table: return table[table_cell(tr)];
    case LawKind::Deterministic: {
      int v = det_has_parent ? (factor_value(det_parent, tr) == 1.0 ? 1 : 0) : value;
      if (negate) v = 1 - v;
      return v;
    }
    default: return 0.0;
  }
}

void Law::distribution(const Trajectory& tr, std::span<double> out) const {
  if (levels == 2) {
    const double q = prob_one(tr);
    out[0] = 1.0 - q;
    out[1] = q;
    return;
  }
  if (kind == LawKind::Categorical) {
    std::copy(probs.begin(), probs.end(), out.begin());
  } else {
    const std::size_t base = table_cell(tr) * static_cast<std::size_t>(levels);
    std::copy_n(table.begin() + static_cast<std::ptrdiff_t>(base), levels, out.begin());
  }
}

std::vector<VarRef> Law::references() const {
  std::vector<VarRef> refs;
  for (const auto& term : terms)
    for (const auto& f : term) refs.push_back(f.ref);
  for (const auto& r : parents) refs.push_back(r);
  if (det_has_parent) refs.push_back(det_parent.ref);
  return refs;
}

// ---------------------------------------------------------------------------
// Validation and compilation

namespace {

struct Positions {
  int nb, m, tau;
  int of(const VarRef& r) const {
    const int base = nb + 1 + (r.time - 1) * (m + 3);
    switch (r.kind) {
      case VarKind::Baseline: return r.index;
      case VarKind::Exposure: return nb;
      case VarKind::Covariate: return base + r.index;
      case VarKind::Z1: return base + m;
      case VarKind::Z2: return base + m + 1;
      case VarKind::Y1: return base + m + 2;
    }
    return 0;
  }
  int y2() const { return nb + 1 + tau * (m + 3); }
};

enum class ChildType { Binary, Categorical, Continuous };

struct Compiler {
  const Schema& schema;
  Positions pos;
  std::vector<Violation>& out;

  void fail(const std::string& path, const std::string& msg) { out.push_back({path, msg}); }

  static bool prob_ok(double q) { return std::isfinite(q) && q >= 0.0 && q <= 1.0; }

  bool resolve(const std::string& text, int time, int child_pos, const std::string& path, Factor& f) {
    if (auto err = parse_factor(text, schema, time, f); !err.empty()) {
      fail(path, err);
      return false;
    }
    if (pos.of(f.ref) >= child_pos) {
      fail(path, "\"" + text + "\" does not precede the child in the causal ordering");
      return false;
    }
    return true;
  }

  // child_levels: 2 for binary, k for categorical, 0 for continuous.
  Law compile(const LawSpec& s, int child_levels, int time, int child_pos, const std::string& path) {
    Law law;
    law.kind = s.kind;
    law.levels = child_levels;
    const bool binary = child_levels == 2;
    const bool categorical = child_levels > 2;
    auto kind_mismatch = [&] {
      fail(path + "/kind", std::string("law kind \"") + to_string(s.kind) + "\" is not allowed for a " +
                               (binary ? "binary" : categorical ? "categorical" : "continuous") + " variable");
    };
    switch (s.kind) {
      case LawKind::Constant:
        if (!binary) return kind_mismatch(), law;
        if (!prob_ok(s.p)) fail(path + "/p", "probability " + std::to_string(s.p) + " outside [0,1]");
        law.p = s.p;
        break;
      case LawKind::Logistic: {
        if (!binary) return kind_mismatch(), law;
        if (!std::isfinite(s.intercept)) fail(path + "/intercept", "coefficient is not finite");
        law.intercept = s.intercept;
        for (const auto& [text, c] : s.coef) {
          const auto tpath = path + "/coef/" + text;
          if (!std::isfinite(c)) fail(tpath, "coefficient is not finite");
          Term term;
          if (auto err = parse_term(text, schema, time, term); !err.empty()) {
            fail(tpath, err);
            continue;
          }
          bool ok = true;
          for (const auto& f : term) {
            if (pos.of(f.ref) >= child_pos) {
              fail(tpath, "\"" + text + "\" does not precede the child in the causal ordering");
              ok = false;
              break;
            }
          }
          if (!ok) continue;
          law.terms.push_back(std::move(term));
          law.coef.push_back(c);
        }
        break;
      }
      case LawKind::Table: {
        if (child_levels == 0) return kind_mismatch(), law;
        std::size_t cells = 1;
        bool ok = true;
        for (std::size_t i = 0; i < s.parents.size(); ++i) {
          Factor f;
          if (!resolve(s.parents[i], time, child_pos, path + "/parents/" + std::to_string(i), f)) {
            ok = false;
            continue;
          }
          const int lv = ref_levels(f.ref, schema);
          if (lv == 0 || f.level >= 0) {
            fail(path + "/parents/" + std::to_string(i), "table parents must be discrete variables without level");
            ok = false;
            continue;
          }
          law.parents.push_back(f.ref);
          law.radix.push_back(lv);
          cells *= static_cast<std::size_t>(lv);
        }
        if (!ok) break;
        if (binary) {
          if (s.table.size() != cells) {
            fail(path + "/p", "table has " + std::to_string(s.table.size()) + " entries, expected " +
                                  std::to_string(cells));
            break;
          }
          for (std::size_t i = 0; i < s.table.size(); ++i)
            if (!prob_ok(s.table[i]))
              fail(path + "/p/" + std::to_string(i), "probability " + std::to_string(s.table[i]) + " outside [0,1]");
          law.table = s.table;
        } else {
          if (s.table_rows.size() != cells) {
            fail(path + "/probs", "table has " + std::to_string(s.table_rows.size()) + " rows, expected " +
                                      std::to_string(cells));
            break;
          }
          for (std::size_t i = 0; i < cells; ++i) {
            const auto& row = s.table_rows[i];
            const auto rpath = path + "/probs/" + std::to_string(i);
            if (static_cast<int>(row.size()) != child_levels) {
              fail(rpath, "row needs one probability per level");
              continue;
            }
            double sum = 0;
            for (double q : row) {
              if (!prob_ok(q)) fail(rpath, "probability " + std::to_string(q) + " outside [0,1]");
              sum += q;
            }
            if (std::abs(sum - 1.0) > 1e-9) fail(rpath, "probabilities sum to " + std::to_string(sum));
            law.table.insert(law.table.end(), row.begin(), row.end());
          }
        }
        break;
      }
      case LawKind::Deterministic:
        if (!binary) return kind_mismatch(), law;
        law.negate = s.negate;
        if (!s.parent.empty()) {
          Factor f;
          if (resolve(s.parent, time, child_pos, path + "/parent", f)) {
            if (ref_levels(f.ref, schema) == 0)
              fail(path + "/parent", "deterministic parent must be discrete");
            law.det_parent = f;
            law.det_has_parent = true;
          }
        } else {
          if (s.value != 0 && s.value != 1) fail(path + "/value", "deterministic value must be 0 or 1");
          law.value = s.value;
        }
        break;
      case LawKind::Categorical: {
        if (!categorical) return kind_mismatch(), law;
        if (static_cast<int>(s.probs.size()) != child_levels) {
          fail(path + "/probs", "needs " + std::to_string(child_levels) + " probabilities");
          break;
        }
        double sum = 0;
        for (std::size_t i = 0; i < s.probs.size(); ++i) {
          if (!prob_ok(s.probs[i]))
            fail(path + "/probs/" + std::to_string(i), "probability " + std::to_string(s.probs[i]) + " outside [0,1]");
          sum += s.probs[i];
        }
        if (std::abs(sum - 1.0) > 1e-9) fail(path + "/probs", "probabilities sum to " + std::to_string(sum));
        law.probs = s.probs;
        break;
      }
      case LawKind::Uniform:
        if (child_levels != 0) return kind_mismatch(), law;
        if (!std::isfinite(s.lo) || !std::isfinite(s.hi) || !(s.lo < s.hi))
          fail(path, "uniform law needs finite lo < hi");
        law.lo = s.lo;
        law.hi = s.hi;
        break;
    }
    return law;
  }
};

bool valid_name(const std::string& n) {
  if (n.empty()) return false;
  for (char c : n)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return true;
}

struct Compiled {
  std::vector<Law> baseline, covariates, z1, z2, y1;
  Law exposure, y2;
};

Compiled compile_all(const ScmSpec& spec, std::vector<Violation>& out) {
  Compiled c;
  const Schema schema = spec.schema();
  if (spec.horizon < 1) {
    out.push_back({"/horizon", "horizon must be ≥ 1"});
    return c;
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < spec.baseline.size(); ++i) {
    const auto& v = spec.baseline[i].var;
    const auto path = "/baseline/" + std::to_string(i) + "/name";
    if (!valid_name(v.name)) out.push_back({path, "variable names must be non-empty [A-Za-z0-9_]"});
    if (!seen.insert("l0." + v.name).second) out.push_back({path, "duplicate variable \"" + v.name + "\""});
    if (v.type == VarType::Categorical && (v.levels < 2 || v.levels > kMaxLevels))
      out.push_back({"/baseline/" + std::to_string(i) + "/levels",
                     "categorical variables need 2 to " + std::to_string(kMaxLevels) + " levels"});
  }
  for (std::size_t i = 0; i < spec.covariates.size(); ++i) {
    const auto& v = spec.covariates[i].var;
    const auto path = "/covariates/" + std::to_string(i);
    if (!valid_name(v.name)) out.push_back({path + "/name", "variable names must be non-empty [A-Za-z0-9_]"});
    if (!seen.insert("l." + v.name).second) out.push_back({path + "/name", "duplicate variable \"" + v.name + "\""});
    if (v.type == VarType::Continuous)
      out.push_back({path + "/type", "time-varying covariates must be binary or categorical"});
    if (v.type == VarType::Categorical && (v.levels < 2 || v.levels > kMaxLevels))
      out.push_back({path + "/levels", "categorical variables need 2 to " + std::to_string(kMaxLevels) + " levels"});
  }
  if (!out.empty()) return c;

  const int tau = spec.horizon;
  const int nb = static_cast<int>(spec.baseline.size());
  const int m = static_cast<int>(spec.covariates.size());
  Compiler comp{schema, Positions{nb, m, tau}, out};

  auto count_ok = [&](std::size_t n, const std::string& path) {
    if (static_cast<int>(n) != tau) {
      out.push_back({path, "has " + std::to_string(n) + " per-time laws but horizon is " + std::to_string(tau)});
      return false;
    }
    return true;
  };

  for (int j = 0; j < nb; ++j) {
    const auto& b = spec.baseline[static_cast<std::size_t>(j)];
    c.baseline.push_back(comp.compile(b.law, b.var.levels, 0, j, "/baseline/" + std::to_string(j) + "/law"));
  }
  c.exposure = comp.compile(spec.exposure, 2, 0, nb, "/exposure");

  bool shapes_ok = true;
  for (int j = 0; j < m; ++j)
    shapes_ok &= count_ok(spec.covariates[static_cast<std::size_t>(j)].laws.size(),
                          "/covariates/" + std::to_string(j) + "/laws");
  shapes_ok &= count_ok(spec.z1.size(), "/mediators/z1");
  shapes_ok &= count_ok(spec.z2.size(), "/mediators/z2");
  shapes_ok &= count_ok(spec.y1.size(), "/infant_survival");
  if (!shapes_ok) return c;

  for (int t = 1; t <= tau; ++t) {
    const auto ti = static_cast<std::size_t>(t - 1);
    for (int j = 0; j < m; ++j) {
      const auto& cv = spec.covariates[static_cast<std::size_t>(j)];
      const VarRef self{VarKind::Covariate, j, t};
      c.covariates.push_back(comp.compile(cv.laws[ti], cv.var.levels, t, comp.pos.of(self),
                                          "/covariates/" + std::to_string(j) + "/laws/" + std::to_string(ti)));
    }
  }
  for (int t = 1; t <= tau; ++t) {
    const auto ti = static_cast<std::size_t>(t - 1);
    const auto ts = std::to_string(ti);
    c.z1.push_back(comp.compile(spec.z1[ti], 2, t, comp.pos.of({VarKind::Z1, 0, t}), "/mediators/z1/" + ts));
    c.z2.push_back(comp.compile(spec.z2[ti], 2, t, comp.pos.of({VarKind::Z2, 0, t}), "/mediators/z2/" + ts));
    c.y1.push_back(comp.compile(spec.y1[ti], 2, t, comp.pos.of({VarKind::Y1, 0, t}), "/infant_survival/" + ts));
  }
  c.y2 = comp.compile(spec.y2, 2, tau, comp.pos.y2(), "/infant_hiv_free");
  return c;
}

}  // namespace

std::vector<Violation> validate_scm(const ScmSpec& spec) {
  std::vector<Violation> out;
  compile_all(spec, out);
  return out;
}

Scm Scm::compile(const ScmSpec& spec) {
  std::vector<Violation> violations;
  Compiled c = compile_all(spec, violations);
  if (!violations.empty()) throw InvalidSpecError(std::move(violations));
  Scm scm;
  scm.spec_ = std::make_shared<const ScmSpec>(spec);
  scm.schema_ = spec.schema();
  scm.baseline_ = std::move(c.baseline);
  scm.exposure_ = std::move(c.exposure);
  scm.covariates_ = std::move(c.covariates);
  scm.z1_ = std::move(c.z1);
  scm.z2_ = std::move(c.z2);
  scm.y1_ = std::move(c.y1);
  scm.y2_ = std::move(c.y2);
  for (const auto& v : scm.schema_.baseline) scm.hashes_.baseline.push_back(fnv1a64("l0." + v.name));
  for (const auto& v : scm.schema_.covariates) scm.hashes_.covariates.push_back(fnv1a64("l." + v.name));
  scm.hashes_.a = fnv1a64("a");
  scm.hashes_.z1 = fnv1a64("z1");
  scm.hashes_.z2 = fnv1a64("z2");
  scm.hashes_.y1 = fnv1a64("y1");
  scm.hashes_.y2 = fnv1a64("y2");
  return scm;
}

namespace {

bool is_stochastic(const Law& law) {
  if (law.kind == LawKind::Deterministic) return false;
  if (law.kind == LawKind::Constant) return law.p > 0.0 && law.p < 1.0;
  return true;
}

}  // namespace

double Scm::configuration_count() const {
  double count = 1.0;
  for (int j = 0; j < n_baseline(); ++j) {
    const auto& law = baseline_law(j);
    if (law.continuous()) return std::numeric_limits<double>::infinity();
    if (law.levels > 2 || is_stochastic(law)) count *= law.levels;
  }
  if (is_stochastic(exposure_)) count *= 2;
  for (int t = 1; t <= horizon(); ++t) {
    for (int j = 0; j < n_covariates(); ++j) {
      const auto& law = covariate_law(t, j);
      if (law.levels > 2 || is_stochastic(law)) count *= law.levels;
    }
    if (is_stochastic(z1_law(t))) count *= 2;
    if (is_stochastic(z2_law(t))) count *= 2;
    if (is_stochastic(y1_law(t))) count *= 2;
  }
  if (is_stochastic(y2_)) count *= 2;
  return count;
}

bool Scm::enumerable(std::string* why) const {
  for (int j = 0; j < n_baseline(); ++j) {
    if (baseline_law(j).continuous()) {
      if (why) *why = "baseline covariate \"" + schema_.baseline[static_cast<std::size_t>(j)].name + "\" is continuous";
      return false;
    }
  }
  const double count = configuration_count();
  if (count > kEnumerationBudget) {
    if (why) *why = "configuration count " + std::to_string(count) + " exceeds the 2^24 budget";
    return false;
  }
  return true;
}

std::string Scm::digest() const { return hex_digest(to_json(*spec_).dump()); }

}  // namespace lbp
