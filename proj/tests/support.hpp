#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "lbp/scenario.hpp"

namespace lbp::testing {

inline std::filesystem::path scenario_dir() { return std::filesystem::path(LBP_SOURCE_DIR) / "scenarios"; }

inline Scm compile_json(const json& doc) {
  std::vector<Violation> v;
  ScmSpec spec = scm_from_json(doc, v);
  if (!v.empty()) throw InvalidSpecError(v);
  return Scm::compile(spec);
}

inline Scm compile_text(const std::string& text) { return compile_json(json::parse(text)); }

inline Scenario golden(const std::string& name) {
  return load_scenario(scenario_dir() / (name + ".scenario.json"));
}

inline const Scm& golden_scm(const std::string& name) {
  static std::map<std::string, Scenario> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, golden(name)).first;
  return *it->second.scm;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The 1e-12 floor absorbs summation roundoff in enumeration-exact values
// when a common-random-number contrast has zero SE.
inline constexpr double kRoundoff = 1e-12;

inline bool within(double value, double truth, double se, double k = 3.0) {
  return std::abs(value - truth) <= k * se + kRoundoff;
}

// Two time points, everything binary: exposure randomized, a covariate that
// responds to exposure and earlier birth.
inline const char* kToy2 = R"({
  "horizon": 2,
  "baseline": [{"name": "x", "law": {"kind": "constant", "p": 0.4}}],
  "exposure": {"kind": "constant", "p": 0.5},
  "covariates": [{"name": "c", "laws": [
    {"kind": "logistic", "intercept": -0.3, "coef": {"a": 0.8, "l0.x": 0.6}},
    {"kind": "logistic", "intercept": -0.5, "coef": {"a": 0.7, "l0.x": 0.5, "l.c@1": 1.0, "z2@1": 0.5}}]}],
  "mediators": {
    "z1": [{"kind": "logistic", "intercept": -3.0, "coef": {"a": -0.5, "l.c@1": 0.8}},
           {"kind": "logistic", "intercept": -2.8, "coef": {"a": -0.5, "l.c@2": 0.8}}],
    "z2": [{"kind": "logistic", "intercept": -0.6, "coef": {"a": 0.6, "l0.x": 0.4, "l.c@1": 0.5}},
           {"kind": "logistic", "intercept": -0.4, "coef": {"a": 0.5, "l0.x": 0.3, "l.c@2": 0.5}}]},
  "infant_survival": [{"kind": "logistic", "intercept": 2.0, "coef": {"a": 0.5, "l.c@1": -0.6}},
                      {"kind": "logistic", "intercept": 2.2, "coef": {"a": 0.4, "l.c@2": -0.5}}],
  "infant_hiv_free": {"kind": "logistic", "intercept": 1.0, "coef": {"a": 0.8, "l.c@2": -0.7, "l0.x": 0.3}}
})";

}  // namespace lbp::testing
