#include <doctest.h>

#include <sstream>

#include "lbp/enumerate.hpp"
#include "lbp/forward.hpp"
#include "support.hpp"

using namespace lbp;
using namespace lbp::testing;

namespace {

json minimal_spec() {
  return json::parse(R"({
    "horizon": 1,
    "exposure": {"kind": "constant", "p": 0.5},
    "mediators": {"z1": [{"kind": "constant", "p": 0.1}], "z2": [{"kind": "constant", "p": 0.6}]},
    "infant_survival": [{"kind": "constant", "p": 0.9}],
    "infant_hiv_free": {"kind": "constant", "p": 0.8}
  })");
}

std::vector<Violation> violations_of(const json& doc) {
  std::vector<Violation> v;
  ScmSpec spec = scm_from_json(doc, v);
  if (!v.empty()) return v;
  return validate_scm(spec);
}

std::size_t invariant_violations(const Population& pop, bool dbb) {
  std::size_t bad = 0;
  for (const auto& tr : pop.rows) bad += check_trajectory(tr, pop.schema, dbb) ? 1 : 0;
  return bad;
}

}  // namespace

TEST_CASE("validate_scm: minimal horizon-1 spec is clean") {
  CHECK(violations_of(minimal_spec()).empty());
}

TEST_CASE("validate_scm: unknown parent is named") {
  json doc = minimal_spec();
  doc["mediators"]["z2"][0] = json::parse(R"({"kind": "logistic", "intercept": 0.0, "coef": {"l.X9@1": 1.0}})");
  const auto v = violations_of(doc);
  REQUIRE(v.size() == 1);
  CHECK(v[0].message.find("X9") != std::string::npos);
  CHECK(v[0].path.find("/mediators/z2/0") == 0);
}

TEST_CASE("validate_scm: table probability out of range") {
  json doc = minimal_spec();
  doc["mediators"]["z2"][0] = json::parse(R"({"kind": "table", "parents": ["a"], "p": [0.2, 1.3]})");
  const auto v = violations_of(doc);
  REQUIRE(v.size() == 1);
  CHECK(v[0].path.find("/mediators/z2/0") == 0);
}

TEST_CASE("validate_scm: categorical level counts are bounded") {
  json doc = minimal_spec();
  doc["baseline"] = json::array({{{"name", "k"}, {"type", "categorical"}, {"levels", kMaxLevels + 1},
                                  {"law", {{"kind", "categorical"}, {"probs", std::vector<double>(kMaxLevels + 1, 1.0 / (kMaxLevels + 1))}}}}});
  auto v = violations_of(doc);
  REQUIRE_FALSE(v.empty());
  CHECK(v[0].path == "/baseline/0/levels");
  doc["baseline"][0]["levels"] = 1;
  doc["baseline"][0]["law"]["probs"] = {1.0};
  CHECK_FALSE(violations_of(doc).empty());
}

TEST_CASE("validate_scm: horizon and per-time law counts") {
  json doc = minimal_spec();
  doc["horizon"] = 0;
  auto v = violations_of(doc);
  REQUIRE_FALSE(v.empty());
  CHECK(v[0].message == "horizon must be ≥ 1");

  doc = minimal_spec();
  doc["horizon"] = 2;
  v = violations_of(doc);
  CHECK(v.size() >= 3);  // z1, z2, infant survival each have one law for two times
}

TEST_CASE("validate_scm: parents must precede the child") {
  json doc = minimal_spec();
  doc["mediators"]["z1"][0] = json::parse(R"({"kind": "logistic", "intercept": 0.0, "coef": {"z2@1": 1.0}})");
  CHECK_FALSE(violations_of(doc).empty());
  doc = minimal_spec();
  doc["exposure"] = json::parse(R"({"kind": "logistic", "intercept": 0.0, "coef": {"y1@1": 1.0}})");
  CHECK_FALSE(violations_of(doc).empty());
  doc = minimal_spec();
  doc["mediators"]["z2"][0] = json::parse(R"({"kind": "logistic", "intercept": 0.0, "coef": {"z1@1": 1.0}})");
  CHECK(violations_of(doc).empty());  // z1_t precedes z2_t
}

TEST_CASE("validate_scm: time references outside 1..tau are rejected") {
  json doc = minimal_spec();
  doc["mediators"]["z2"][0] = json::parse(R"({"kind": "logistic", "intercept": 0.0, "coef": {"z1@t-1": 1.0}})");
  CHECK_FALSE(violations_of(doc).empty());
}

TEST_CASE("simulate_natural: deterministic composition gives y = 1") {
  const Scm scm = compile_text(R"({
    "horizon": 2,
    "exposure": {"kind": "deterministic", "value": 1},
    "mediators": {"z1": [{"kind": "deterministic", "value": 0}, {"kind": "deterministic", "value": 0}],
                  "z2": [{"kind": "deterministic", "value": 1}, {"kind": "deterministic", "value": 1}]},
    "infant_survival": [{"kind": "deterministic", "value": 1}, {"kind": "deterministic", "value": 1}],
    "infant_hiv_free": {"kind": "deterministic", "value": 1}
  })");
  const auto pop = simulate_natural(scm, 1000, 7);
  for (const auto& tr : pop.rows) {
    CHECK(tr.a == 1);
    CHECK(tr.y == 1);
  }
  const auto law = enumerate_exact(scm);
  REQUIRE(law.atoms.size() == 1);
  CHECK(law.atoms[0].p == 1.0);
}

TEST_CASE("simulate_natural: no births leaves infant nodes missing") {
  const Scm scm = compile_text(R"({
    "horizon": 3,
    "exposure": {"kind": "constant", "p": 0.5},
    "mediators": {"z1": [{"kind": "constant", "p": 0.2}, {"kind": "constant", "p": 0.2}, {"kind": "constant", "p": 0.2}],
                  "z2": [{"kind": "constant", "p": 0.0}, {"kind": "constant", "p": 0.0}, {"kind": "constant", "p": 0.0}]},
    "infant_survival": [{"kind": "constant", "p": 0.9}, {"kind": "constant", "p": 0.9}, {"kind": "constant", "p": 0.9}],
    "infant_hiv_free": {"kind": "constant", "p": 0.9}
  })");
  const auto pop = simulate_natural(scm, 2000, 11);
  for (const auto& tr : pop.rows) {
    for (int t = 0; t < 3; ++t) CHECK(tr.y1[static_cast<std::size_t>(t)] == kMissing);
    CHECK(tr.y2 == kMissing);
    CHECK(tr.y == 0);
  }
}

TEST_CASE("enumerate_exact: independent fair coins give four equal atoms") {
  const Scm scm = compile_text(R"({
    "horizon": 1,
    "exposure": {"kind": "constant", "p": 0.5},
    "mediators": {"z1": [{"kind": "deterministic", "value": 0}], "z2": [{"kind": "constant", "p": 0.5}]},
    "infant_survival": [{"kind": "deterministic", "value": 1}],
    "infant_hiv_free": {"kind": "deterministic", "parent": "a"}
  })");
  const auto law = enumerate_exact(scm);
  REQUIRE(law.atoms.size() == 4);
  for (const auto& a : law.atoms) CHECK(a.p == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(law.probability([](const Trajectory& tr) { return tr.y == 1; }) == doctest::Approx(0.25));
}

TEST_CASE("enumerate_exact: continuous baseline is unsupported") {
  json doc = minimal_spec();
  doc["baseline"] = json::parse(R"([{"name": "u", "type": "continuous", "law": {"kind": "uniform", "lo": 0, "hi": 1}}])");
  const Scm scm = compile_json(doc);
  CHECK_FALSE(scm.enumerable());
  CHECK_THROWS_AS(enumerate_exact(scm), UnsupportedSpecError);
}

TEST_CASE("toy2: exact law sums to one and matches simulation") {
  const Scm scm = compile_text(kToy2);
  const auto law = enumerate_exact(scm);
  CHECK(std::abs(law.total() - 1.0) < 1e-12);

  const std::size_t n = 100000;
  const auto pop = simulate_natural(scm, n, 2024);
  const double dn = static_cast<double>(n);
  // Every node marginal within 4 standard errors of the exact marginal.
  std::vector<std::pair<std::string, std::function<bool(const Trajectory&)>>> events = {
      {"x", [](const Trajectory& tr) { return tr.l0[0] == 1.0; }},
      {"a", [](const Trajectory& tr) { return tr.a == 1; }},
      {"c1", [](const Trajectory& tr) { return tr.cov(1, 0) == 1; }},
      {"c2", [](const Trajectory& tr) { return tr.cov(2, 0) == 1; }},
      {"y2", [](const Trajectory& tr) { return tr.y2 == 1; }},
      {"y2 missing", [](const Trajectory& tr) { return tr.y2 == kMissing; }},
      {"y", [](const Trajectory& tr) { return tr.y == 1; }},
  };
  for (int t = 1; t <= 2; ++t) {
    const auto i = static_cast<std::size_t>(t - 1);
    events.push_back({"z1_" + std::to_string(t), [i](const Trajectory& tr) { return tr.z1[i] == 1; }});
    events.push_back({"z2_" + std::to_string(t), [i](const Trajectory& tr) { return tr.z2[i] == 1; }});
    events.push_back({"y1_" + std::to_string(t), [i](const Trajectory& tr) { return tr.y1[i] == 1; }});
    events.push_back({"y1_" + std::to_string(t) + " missing", [i](const Trajectory& tr) { return tr.y1[i] == kMissing; }});
  }
  for (const auto& [name, ev] : events) {
    const double p = law.probability(ev);
    double k = 0;
    for (const auto& tr : pop.rows) k += ev(tr) ? 1.0 : 0.0;
    const double se = std::sqrt(p * (1 - p) / dn);
    INFO(name << " exact " << p << " simulated " << k / dn);
    CHECK(std::abs(k / dn - p) <= 4.0 * se);
  }
  const double py = law.probability([](const Trajectory& tr) { return tr.y == 1; });
  double my = 0;
  for (const auto& tr : pop.rows) my += tr.y;
  CHECK(within(my / dn, py, std::sqrt(py * (1 - py) / dn)));
}

// Independent oracle: draw every exogenous bit of every stochastic binary node
// (whether or not the node ends up defined), apply the structural rules by
// hand, and sum the product of Bernoulli factors.
TEST_CASE("toy2: exhaustive exogenous-bit summation agrees with enumerate_exact") {
  const Scm scm = compile_text(kToy2);
  const Schema& schema = scm.schema();
  const int tau = 2;
  // bits: x, a, then per t: c, z1, z2, y1; then y2
  const int n_bits = 2 + 4 * tau + 1;
  std::map<std::string, double> by_path;
  NeumaierSum py;
  for (std::uint32_t mask = 0; mask < (1u << n_bits); ++mask) {
    auto bit = [&](int i) { return static_cast<int>((mask >> i) & 1u); };
    Trajectory tr(schema);
    double p = 1.0;
    auto draw = [&](int i, double q) {
      p *= bit(i) ? q : 1.0 - q;
      return bit(i);
    };
    tr.l0[0] = draw(0, scm.baseline_law(0).prob_one(tr));
    tr.a = draw(1, scm.exposure_law().prob_one(tr));
    int dead = 0, born = 0;
    for (int t = 1; t <= tau; ++t) {
      const int base = 2 + 4 * (t - 1);
      const auto i = static_cast<std::size_t>(t - 1);
      tr.cov(t, 0) = draw(base, scm.covariate_law(t, 0).prob_one(tr));
      const int z1_bit = draw(base + 1, scm.z1_law(t).prob_one(tr));
      tr.z1[i] = static_cast<std::int8_t>(dead ? 1 : z1_bit);
      const int z2_bit = draw(base + 2, scm.z2_law(t).prob_one(tr));
      int z2 = born ? 1 : (tr.z1[i] == 1 ? 0 : z2_bit);
      tr.z2[i] = static_cast<std::int8_t>(z2);
      const int y1_bit = draw(base + 3, scm.y1_law(t).prob_one(tr));
      if (!z2)
        tr.y1[i] = kMissing;
      else if (t > 1 && tr.y1[i - 1] == 0)
        tr.y1[i] = 0;
      else
        tr.y1[i] = static_cast<std::int8_t>(y1_bit);
      dead = tr.z1[i];
      born = z2;
    }
    const int y2_bit = draw(n_bits - 1, scm.y2_law().prob_one(tr));
    const bool defined = tr.z2.back() == 1 && tr.y1.back() == 1;
    tr.y2 = defined ? static_cast<std::int8_t>(y2_bit) : kMissing;
    tr.y = composite_outcome(tr.z2.back(), tr.y1.back(), tr.y2);
    if (tr.y == 1) py.add(p);
  }
  const auto law = enumerate_exact(scm);
  CHECK(std::abs(py.value() - law.probability([](const Trajectory& tr) { return tr.y == 1; })) < 1e-12);
}

TEST_CASE("invariants hold on every simulated trajectory") {
  json doc = json::parse(kToy2);
  for (bool shared : {false, true}) {
    doc["shared_mediator_noise"] = shared;
    const Scm scm = compile_json(doc);
    const auto pop = simulate_natural(scm, 50000, 99);
    CHECK(invariant_violations(pop, true) == 0);
  }
  const Scenario stress = golden("stress");
  const auto pop = simulate_natural(*stress.scm, 50000, 5);
  CHECK(invariant_violations(pop, stress.scm->death_blocks_birth()) == 0);
}

TEST_CASE("death does not block birth when the flag is off") {
  const Scm scm = compile_text(R"({
    "horizon": 2, "death_blocks_birth": false,
    "exposure": {"kind": "constant", "p": 0.5},
    "mediators": {"z1": [{"kind": "deterministic", "value": 1}, {"kind": "deterministic", "value": 1}],
                  "z2": [{"kind": "constant", "p": 0.5}, {"kind": "constant", "p": 0.5}]},
    "infant_survival": [{"kind": "constant", "p": 0.9}, {"kind": "constant", "p": 0.9}],
    "infant_hiv_free": {"kind": "constant", "p": 0.9}
  })");
  const auto law = enumerate_exact(scm);
  CHECK(law.probability([](const Trajectory& tr) { return tr.z2[1] == 1; }) == doctest::Approx(0.75));
  json doc = to_json(scm.spec());
  doc["death_blocks_birth"] = true;
  const auto blocked = enumerate_exact(compile_json(doc));
  CHECK(blocked.probability([](const Trajectory& tr) { return tr.z2[1] == 1; }) == 0.0);
}

TEST_CASE("simulation is identical across thread counts") {
  const Scenario stress = golden("stress");
  const auto one = simulate_natural(*stress.scm, 30000, 123, 1);
  const auto four = simulate_natural(*stress.scm, 30000, 123, 4);
  REQUIRE(one.rows.size() == four.rows.size());
  bool same = true;
  for (std::size_t i = 0; i < one.rows.size(); ++i) same = same && one.rows[i] == four.rows[i];
  CHECK(same);
  const auto other = simulate_natural(*stress.scm, 30000, 124, 1);
  CHECK_FALSE(other.rows == one.rows);
}

TEST_CASE("population CSV round trip") {
  const Scenario stress = golden("stress");
  const auto pop = simulate_natural(*stress.scm, 2000, 3);
  std::stringstream ss;
  write_population_csv(ss, pop);
  const std::string text = ss.str();
  CHECK(text.rfind("l0.x,l0.k,l0.u,a,l1.c,l1.g,", 0) == 0);
  std::stringstream in(text);
  const auto back = read_population_csv(in, &pop.schema);
  REQUIRE(back.rows.size() == pop.rows.size());
  bool same = true;
  for (std::size_t i = 0; i < pop.rows.size(); ++i) same = same && back.rows[i] == pop.rows[i];
  CHECK(same);
  // Schema inference without an expected schema keeps every row intact.
  std::stringstream in2(text);
  const auto inferred = read_population_csv(in2);
  CHECK(inferred.rows.size() == pop.rows.size());
}

TEST_CASE("CSV ingestion names the row and rule it rejects") {
  const Scm scm = compile_text(kToy2);
  auto pop = simulate_natural(scm, 10, 1);
  // Row 3: a birth that un-happens.
  pop.rows[3].z2 = {1, 0};
  pop.rows[3].z1 = {0, 0};
  std::stringstream ss;
  write_population_csv(ss, pop);
  std::stringstream in(ss.str());
  try {
    (void)read_population_csv(in, &pop.schema);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("row 3") != std::string::npos);
    CHECK(what.find(to_string(TrajectoryRule::Z2Absorbing)) != std::string::npos);
  }
}
