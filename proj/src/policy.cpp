#include "lbp/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "lbp/forward.hpp"
#include "lbp/parallel.hpp"

namespace lbp {

// ---------------------------------------------------------------------------
// Stratification

Stratification Stratification::all_discrete(const Schema& schema) {
  std::vector<std::string> names;
  for (const auto& v : schema.baseline)
    if (v.type != VarType::Continuous) names.push_back(v.name);
  return of(schema, names);
}

Stratification Stratification::of(const Schema& schema, const std::vector<std::string>& names,
                                  const std::map<std::string, std::vector<double>>& cuts) {
  Stratification s;
  double total = 1.0;
  for (auto name : names) {
    if (name.rfind("l0.", 0) == 0) name = name.substr(3);
    const int idx = schema.baseline_index(name);
    if (idx < 0) throw Error("stratification refers to unknown baseline covariate \"" + name + "\"");
    const auto& info = schema.baseline[static_cast<std::size_t>(idx)];
    Var v;
    v.name = name;
    v.index = idx;
    if (info.type == VarType::Continuous) {
      auto it = cuts.find(name);
      if (it == cuts.end()) it = cuts.find("l0." + name);
      if (it == cuts.end())
        throw Error("continuous baseline covariate \"" + name + "\" needs cut points to be stratified");
      v.cuts = it->second;
      if (!std::is_sorted(v.cuts.begin(), v.cuts.end()))
        throw Error("cut points for \"" + name + "\" must be ascending");
      v.levels = static_cast<int>(v.cuts.size()) + 1;
    } else {
      v.levels = info.levels;
    }
    total *= v.levels;
    s.vars_.push_back(std::move(v));
  }
  if (total > kStratumBudget)
    throw PolicyError("stratification has " + std::to_string(static_cast<long long>(total)) +
                      " strata, over the budget of " + std::to_string(kStratumBudget));
  return s;
}

std::uint32_t Stratification::stratum(const std::vector<double>& l0) const {
  std::uint32_t id = 0;
  for (const auto& v : vars_) {
    const double x = l0[static_cast<std::size_t>(v.index)];
    int level;
    if (v.cuts.empty())
      level = static_cast<int>(x);
    else
      level = static_cast<int>(std::upper_bound(v.cuts.begin(), v.cuts.end(), x) - v.cuts.begin());
    id = id * static_cast<std::uint32_t>(v.levels) + static_cast<std::uint32_t>(level);
  }
  return id;
}

std::uint32_t Stratification::count() const {
  std::uint32_t c = 1;
  for (const auto& v : vars_) c *= static_cast<std::uint32_t>(v.levels);
  return c;
}

std::string Stratification::label(std::uint32_t stratum) const {
  if (vars_.empty()) return "(all)";
  std::vector<int> levels(vars_.size());
  for (std::size_t k = vars_.size(); k-- > 0;) {
    levels[k] = static_cast<int>(stratum % static_cast<std::uint32_t>(vars_[k].levels));
    stratum /= static_cast<std::uint32_t>(vars_[k].levels);
  }
  std::string out;
  for (std::size_t k = 0; k < vars_.size(); ++k) {
    if (k) out += ",";
    const auto& v = vars_[k];
    out += "l0." + v.name;
    if (v.cuts.empty()) {
      out += "=" + std::to_string(levels[k]);
    } else {
      const int b = levels[k];
      auto fmt = [](double x) {
        std::string s = std::to_string(x);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
      };
      out += " in [" + (b == 0 ? std::string("-inf") : fmt(v.cuts[static_cast<std::size_t>(b - 1)])) + "," +
             (b == static_cast<int>(v.cuts.size()) ? std::string("inf") : fmt(v.cuts[static_cast<std::size_t>(b)])) +
             ")";
    }
  }
  return out;
}

json Stratification::to_json() const {
  json vars = json::array();
  for (const auto& v : vars_) {
    json j{{"name", v.name}};
    if (!v.cuts.empty()) j["cuts"] = v.cuts;
    vars.push_back(j);
  }
  return json{{"vars", vars}};
}

Stratification Stratification::from_json(const json& j, const Schema& schema) {
  std::vector<std::string> names;
  std::map<std::string, std::vector<double>> cuts;
  if (!j.contains("vars") || !j["vars"].is_array()) throw Error("strata need a \"vars\" array");
  for (const auto& v : j["vars"]) {
    const auto name = v.at("name").get<std::string>();
    names.push_back(name);
    if (v.contains("cuts")) cuts[name] = v["cuts"].get<std::vector<double>>();
  }
  return of(schema, names, cuts);
}

// ---------------------------------------------------------------------------
// History codes

std::uint32_t mediator_history_code(const Trajectory& tr, int t) {
  int d1 = 0, d2 = 0;
  for (int s = 1; s < t; ++s) {
    const auto i = static_cast<std::size_t>(s - 1);
    if (d1 == 0 && tr.z1[i] == 1) d1 = s;
    if (d2 == 0 && tr.z2[i] == 1) d2 = s;
  }
  return static_cast<std::uint32_t>(d1 * (tr.horizon() + 1) + d2);
}

std::pair<int, int> decode_mediator_history(std::uint32_t code, int horizon) {
  const auto base = static_cast<std::uint32_t>(horizon + 1);
  return {static_cast<int>(code / base), static_cast<int>(code % base)};
}

std::uint64_t covariate_history_code(const Trajectory& tr, const Schema& schema, int t) {
  std::uint64_t code = 0;
  for (int s = 1; s <= t; ++s)
    for (int j = 0; j < tr.n_cov; ++j)
      code = code * static_cast<std::uint64_t>(schema.covariates[static_cast<std::size_t>(j)].levels) +
             static_cast<std::uint64_t>(tr.cov(s, j));
  return code;
}

std::vector<std::vector<int>> decode_covariate_history(std::uint64_t code, const Schema& schema, int t) {
  const int m = static_cast<int>(schema.covariates.size());
  std::vector<std::vector<int>> out(static_cast<std::size_t>(t), std::vector<int>(static_cast<std::size_t>(m)));
  for (int s = t; s >= 1; --s) {
    for (int j = m - 1; j >= 0; --j) {
      const auto lv = static_cast<std::uint64_t>(schema.covariates[static_cast<std::size_t>(j)].levels);
      out[static_cast<std::size_t>(s - 1)][static_cast<std::size_t>(j)] = static_cast<int>(code % lv);
      code /= lv;
    }
  }
  return out;
}

namespace {

std::uint64_t encode_covariates(const std::vector<std::vector<int>>& hist, const Schema& schema) {
  std::uint64_t code = 0;
  for (const auto& row : hist)
    for (std::size_t j = 0; j < row.size(); ++j)
      code = code * static_cast<std::uint64_t>(schema.covariates[j].levels) + static_cast<std::uint64_t>(row[j]);
  return code;
}

}  // namespace

// ---------------------------------------------------------------------------
// Policy

double transition_probability(const TransitionCell& cell, int d1, int d2, int v1, int v2, bool death_blocks_birth) {
  const double p1 = d1 > 0 ? (v1 == 1 ? 1.0 : 0.0) : (v1 ? cell.p_z1 : 1.0 - cell.p_z1);
  if (p1 <= 0.0) return 0.0;
  double p2;
  if (d2 > 0)
    p2 = v2 == 1 ? 1.0 : 0.0;
  else if (death_blocks_birth && v1 == 1)
    p2 = v2 == 0 ? 1.0 : 0.0;
  else
    p2 = v2 ? cell.p_z2[static_cast<std::size_t>(v1)] : 1.0 - cell.p_z2[static_cast<std::size_t>(v1)];
  return p1 * p2;
}

const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::KnownConditionalOnBaseline: return "known_conditional_on_baseline";
    case PolicyKind::CounterfactualMarginal: return "counterfactual_marginal";
    case PolicyKind::CounterfactualConditional: return "counterfactual_conditional";
    case PolicyKind::DataAdaptive: return "data_adaptive";
  }
  return "?";
}

namespace {

PolicyKind policy_kind_from(const std::string& s) {
  for (auto k : {PolicyKind::KnownConditionalOnBaseline, PolicyKind::CounterfactualMarginal,
                 PolicyKind::CounterfactualConditional, PolicyKind::DataAdaptive})
    if (s == to_string(k)) return k;
  throw PolicyError("unknown policy kind \"" + s + "\"");
}

}  // namespace

const TransitionCell* MediatorPolicy::find(int t, const CellKey& key) const {
  if (t < 1 || t > static_cast<int>(tables.size())) return nullptr;
  const auto& table = tables[static_cast<std::size_t>(t - 1)];
  auto it = table.find(key);
  return it == table.end() ? nullptr : &it->second;
}

MediatorPolicy MediatorPolicy::constant_hazards(int horizon, const Stratification& strata,
                                                const std::vector<double>& z1_hazard,
                                                const std::vector<double>& z2_hazard) {
  if (static_cast<int>(z1_hazard.size()) != horizon || static_cast<int>(z2_hazard.size()) != horizon)
    throw PolicyError("hazard vectors need one entry per time point");
  for (double h : z1_hazard)
    if (!(h >= 0.0 && h <= 1.0)) throw PolicyError("z1 hazard outside [0,1]");
  for (double h : z2_hazard)
    if (!(h >= 0.0 && h <= 1.0)) throw PolicyError("z2 hazard outside [0,1]");
  MediatorPolicy p;
  p.kind = PolicyKind::KnownConditionalOnBaseline;
  p.source = "known";
  p.horizon = horizon;
  p.strata = strata;
  p.tables.resize(static_cast<std::size_t>(horizon));
  for (int t = 1; t <= horizon; ++t) {
    for (std::uint32_t s = 0; s < strata.count(); ++s) {
      for (int d1 = 0; d1 < t; ++d1) {
        for (int d2 = 0; d2 < t; ++d2) {
          TransitionCell cell;
          cell.p_z1 = z1_hazard[static_cast<std::size_t>(t - 1)];
          cell.p_z2 = {z2_hazard[static_cast<std::size_t>(t - 1)], z2_hazard[static_cast<std::size_t>(t - 1)]};
          const auto code = static_cast<std::uint32_t>(d1 * (horizon + 1) + d2);
          p.tables[static_cast<std::size_t>(t - 1)][CellKey{s, 0, code}] = cell;
        }
      }
    }
  }
  return p;
}

json MediatorPolicy::to_json(const Schema& schema) const {
  json j;
  j["schema_version"] = 1;
  j["kind"] = to_string(kind);
  j["reference_exposure"] = reference_exposure ? json(*reference_exposure) : json(nullptr);
  j["source"] = source;
  j["horizon"] = horizon;
  j["strata"] = strata.to_json();
  j["covariate_history"] = covariate_history;
  j["tables"] = json::array();
  for (int t = 1; t <= horizon; ++t) {
    json rows = json::array();
    for (const auto& [key, cell] : tables[static_cast<std::size_t>(t - 1)]) {
      const auto [d1, d2] = decode_mediator_history(key.mediators, horizon);
      json r;
      r["stratum"] = key.stratum;
      r["stratum_label"] = strata.label(key.stratum);
      if (covariate_history) r["covariates"] = decode_covariate_history(key.covariates, schema, t);
      r["z1_time"] = d1;
      r["z2_time"] = d2;
      r["p_z1"] = cell.p_z1;
      r["p_z2_given_z1"] = {cell.p_z2[0], cell.p_z2[1]};
      r["weight"] = cell.weight;
      rows.push_back(r);
    }
    j["tables"].push_back(json{{"t", t}, {"rows", rows}});
  }
  if (fallback) j["fallback"] = fallback->to_json(schema);
  return j;
}

MediatorPolicy MediatorPolicy::from_json(const json& j, const Schema& schema) {
  try {
    MediatorPolicy p;
    p.kind = policy_kind_from(j.at("kind").get<std::string>());
    if (j.contains("reference_exposure") && !j["reference_exposure"].is_null())
      p.reference_exposure = j["reference_exposure"].get<int>();
    p.source = j.value("source", std::string("known"));
    p.horizon = j.at("horizon").get<int>();
    if (p.horizon != schema.horizon)
      throw PolicyError("policy horizon " + std::to_string(p.horizon) + " does not match the model horizon " +
                        std::to_string(schema.horizon));
    p.strata = Stratification::from_json(j.at("strata"), schema);
    p.covariate_history = j.value("covariate_history", false);
    const auto& tables = j.at("tables");
    if (static_cast<int>(tables.size()) != p.horizon) throw PolicyError("policy needs one table per time point");
    p.tables.resize(static_cast<std::size_t>(p.horizon));
    for (const auto& tab : tables) {
      const int t = tab.at("t").get<int>();
      if (t < 1 || t > p.horizon) throw PolicyError("table time out of range");
      for (const auto& r : tab.at("rows")) {
        CellKey key;
        key.stratum = r.at("stratum").get<std::uint32_t>();
        if (key.stratum >= p.strata.count()) throw PolicyError("stratum id out of range");
        if (p.covariate_history)
          key.covariates = encode_covariates(r.at("covariates").get<std::vector<std::vector<int>>>(), schema);
        const int d1 = r.at("z1_time").get<int>(), d2 = r.at("z2_time").get<int>();
        if (d1 < 0 || d2 < 0 || d1 >= t || d2 >= t) throw PolicyError("mediator history times must be < t");
        key.mediators = static_cast<std::uint32_t>(d1 * (p.horizon + 1) + d2);
        TransitionCell cell;
        cell.p_z1 = r.at("p_z1").get<double>();
        const auto pz2 = r.at("p_z2_given_z1").get<std::vector<double>>();
        if (pz2.size() != 2) throw PolicyError("p_z2_given_z1 needs two entries");
        cell.p_z2 = {pz2[0], pz2[1]};
        cell.weight = r.value("weight", 0.0);
        for (double q : {cell.p_z1, cell.p_z2[0], cell.p_z2[1]})
          if (!(q >= 0.0 && q <= 1.0)) throw PolicyError("policy probability outside [0,1]");
        p.tables[static_cast<std::size_t>(t - 1)][key] = cell;
      }
    }
    if (j.contains("fallback"))
      p.fallback = std::make_shared<const MediatorPolicy>(from_json(j["fallback"], schema));
    return p;
  } catch (const json::exception& e) {
    throw PolicyError(std::string("malformed policy document: ") + e.what());
  }
}

std::string MediatorPolicy::digest(const Schema& schema) const { return hex_digest(to_json(schema).dump()); }

// ---------------------------------------------------------------------------
// Derivation

namespace {

struct CellAcc {
  double weight = 0, z1_risk = 0, z1_events = 0;
  std::array<double, 2> z2_risk{0, 0}, z2_events{0, 0};
  void add(const CellAcc& o) {
    weight += o.weight;
    z1_risk += o.z1_risk;
    z1_events += o.z1_events;
    for (int v = 0; v < 2; ++v) {
      z2_risk[static_cast<std::size_t>(v)] += o.z2_risk[static_cast<std::size_t>(v)];
      z2_events[static_cast<std::size_t>(v)] += o.z2_events[static_cast<std::size_t>(v)];
    }
  }
};

using AccTables = std::vector<std::map<CellKey, CellAcc>>;

struct Accumulator {
  const Schema* schema = nullptr;
  const Stratification* strata = nullptr;
  bool death_blocks_birth = true;
  AccTables marginal, conditional;
  bool want_conditional = false;

  void add(const Trajectory& tr, double w) {
    const int tau = tr.horizon();
    if (marginal.empty()) {
      marginal.resize(static_cast<std::size_t>(tau));
      if (want_conditional) conditional.resize(static_cast<std::size_t>(tau));
    }
    const std::uint32_t stratum = strata->stratum(tr);
    for (int t = 1; t <= tau; ++t) {
      const auto i = static_cast<std::size_t>(t - 1);
      CellAcc step;
      step.weight = w;
      const int z1 = tr.z1[i];
      if (t == 1 || tr.z1[i - 1] == 0) {
        step.z1_risk = w;
        step.z1_events = w * z1;
      }
      const bool z2_free = t == 1 || tr.z2[i - 1] == 0;
      if (z2_free && !(death_blocks_birth && z1 == 1)) {
        step.z2_risk[static_cast<std::size_t>(z1)] = w;
        step.z2_events[static_cast<std::size_t>(z1)] = w * tr.z2[i];
      }
      const std::uint32_t mh = mediator_history_code(tr, t);
      marginal[i][CellKey{stratum, 0, mh}].add(step);
      if (want_conditional) conditional[i][CellKey{stratum, covariate_history_code(tr, *schema, t), mh}].add(step);
    }
  }

  void merge(const Accumulator& o) {
    if (o.marginal.empty()) return;
    if (marginal.empty()) {
      marginal.resize(o.marginal.size());
      conditional.resize(o.conditional.size());
    }
    for (std::size_t i = 0; i < o.marginal.size(); ++i)
      for (const auto& [k, v] : o.marginal[i]) marginal[i][k].add(v);
    for (std::size_t i = 0; i < o.conditional.size(); ++i)
      for (const auto& [k, v] : o.conditional[i]) conditional[i][k].add(v);
  }
};

std::vector<std::map<CellKey, TransitionCell>> to_cells(const AccTables& acc) {
  std::vector<std::map<CellKey, TransitionCell>> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    for (const auto& [k, a] : acc[i]) {
      TransitionCell c;
      c.weight = a.weight;
      c.p_z1 = a.z1_risk > 0 ? a.z1_events / a.z1_risk : 0.0;
      for (std::size_t v = 0; v < 2; ++v) c.p_z2[v] = a.z2_risk[v] > 0 ? a.z2_events[v] / a.z2_risk[v] : 0.0;
      out[i][k] = c;
    }
  }
  return out;
}

bool use_exact(const Scm& scm, FitMode mode) {
  if (mode == FitMode::Exact) {
    std::string why;
    if (!scm.enumerable(&why)) throw UnsupportedSpecError("exact policy derivation unavailable: " + why);
    return true;
  }
  return mode == FitMode::Auto && scm.enumerable();
}

Accumulator derive_tables(const Scm& scm, int a_ref, const PolicyFit& fit, const Stratification& strata,
                          bool conditional, bool& exact) {
  if (a_ref != 0 && a_ref != 1) throw PolicyError("reference exposure must be 0 or 1");
  if (conditional) {
    double combos = strata.count();
    for (const auto& c : scm.schema().covariates) combos *= std::pow(static_cast<double>(c.levels), scm.horizon());
    if (combos > kStratumBudget) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.0f", combos);
      throw PolicyError(std::string("baseline strata times covariate histories give ") + buf +
                        " conditioning strata, over the budget of " + std::to_string(kStratumBudget));
    }
  }
  exact = use_exact(scm, fit.mode);
  const auto plan = InterventionPlan::set_exposure(a_ref);
  auto make = [&] {
    Accumulator acc;
    acc.schema = &scm.schema();
    acc.strata = &strata;
    acc.death_blocks_birth = scm.death_blocks_birth();
    acc.want_conditional = conditional;
    return acc;
  };
  ScmModel model(scm);
  ScmBaseline baseline(scm);
  ForwardEngine engine({scm.schema(), model, baseline, scm.death_blocks_birth(), scm.shared_mediator_noise()}, plan);
  if (exact) {
    Accumulator acc = make();
    ForwardStats stats;
    engine.enumerate([&](const Trajectory& tr, double p) { acc.add(tr, p); }, stats);
    return acc;
  }
  if (fit.n_fit < 1) throw PolicyError("policy fit needs n_fit >= 1");
  const NoiseSource noise(fit.seed);
  Accumulator acc = parallel_blocks<Accumulator>(fit.n_fit, fit.threads, make,
                                                 [&](std::size_t begin, std::size_t end, Accumulator& a) {
                                                   Trajectory tr(scm.schema());
                                                   ForwardStats stats;
                                                   for (std::size_t i = begin; i < end; ++i) {
                                                     engine.simulate(noise, i, tr, stats);
                                                     a.add(tr, 1.0);
                                                   }
                                                 });
  // Every stratum must be populated.
  std::vector<double> mass(strata.count(), 0.0);
  if (!acc.marginal.empty())
    for (const auto& [k, v] : acc.marginal[0]) mass[k.stratum] += v.weight;
  for (std::uint32_t s = 0; s < strata.count(); ++s)
    if (mass[s] <= 0.0)
      throw PolicyError("stratum " + std::to_string(s) + " (" + strata.label(s) +
                        ") has no simulated individuals under do(A=" + std::to_string(a_ref) + ")");
  return acc;
}

}  // namespace

MediatorPolicy derive_policy_marginal(const Scm& scm, int a_ref, const PolicyFit& fit, const Stratification& strata) {
  bool exact = false;
  Accumulator acc = derive_tables(scm, a_ref, fit, strata, false, exact);
  MediatorPolicy p;
  p.kind = PolicyKind::CounterfactualMarginal;
  p.reference_exposure = a_ref;
  p.source = exact ? "exact" : "monte_carlo";
  p.horizon = scm.horizon();
  p.strata = strata;
  p.tables = to_cells(acc.marginal);
  return p;
}

MediatorPolicy derive_policy_conditional(const Scm& scm, int a_ref, const PolicyFit& fit,
                                         const Stratification& strata) {
  bool exact = false;
  Accumulator acc = derive_tables(scm, a_ref, fit, strata, true, exact);
  auto marginal = std::make_shared<MediatorPolicy>();
  marginal->kind = PolicyKind::CounterfactualMarginal;
  marginal->reference_exposure = a_ref;
  marginal->source = exact ? "exact" : "monte_carlo";
  marginal->horizon = scm.horizon();
  marginal->strata = strata;
  marginal->tables = to_cells(acc.marginal);

  MediatorPolicy p;
  p.kind = PolicyKind::CounterfactualConditional;
  p.reference_exposure = a_ref;
  p.source = marginal->source;
  p.horizon = scm.horizon();
  p.strata = strata;
  p.covariate_history = true;
  p.tables = to_cells(acc.conditional);
  p.fallback = std::move(marginal);
  return p;
}

MediatorPolicy fit_policy_from_data(const Population& data, int arm, const Stratification& strata) {
  Accumulator acc;
  acc.schema = &data.schema;
  acc.strata = &strata;
  // The structural rule is visible in the data: blocked transitions never
  // occur, so they carry no risk either way.
  acc.death_blocks_birth = true;
  std::vector<double> mass(strata.count(), 0.0);
  for (const auto& tr : data.rows) {
    if (tr.a != arm) continue;
    acc.add(tr, 1.0);
    mass[strata.stratum(tr)] += 1.0;
  }
  for (std::uint32_t s = 0; s < strata.count(); ++s)
    if (mass[s] <= 0.0)
      throw PolicyError("stratum " + std::to_string(s) + " (" + strata.label(s) + ") has no observed rows in arm " +
                        std::to_string(arm));
  MediatorPolicy p;
  p.kind = PolicyKind::DataAdaptive;
  p.reference_exposure = arm;
  p.source = "observed";
  p.horizon = data.schema.horizon;
  p.strata = strata;
  p.tables = to_cells(acc.marginal);
  return p;
}

double policy_birth_probability(const MediatorPolicy& policy, std::uint32_t stratum, bool death_blocks_birth) {
  if (policy.covariate_history)
    throw PolicyError("birth probability needs a policy that conditions on baseline only");
  const int tau = policy.horizon;
  // Mass over mediator histories (first-event times).
  std::map<std::uint32_t, double> mass{{0u, 1.0}};
  for (int t = 1; t <= tau; ++t) {
    std::map<std::uint32_t, double> next;
    for (const auto& [code, w] : mass) {
      if (w <= 0.0) continue;
      const auto [d1, d2] = decode_mediator_history(code, tau);
      const TransitionCell* cell = policy.find(t, CellKey{stratum, 0, code});
      if (!cell)
        throw PolicyError("policy has no transition row at t=" + std::to_string(t) + " for stratum " +
                          policy.strata.label(stratum));
      for (int v1 = 0; v1 < 2; ++v1) {
        for (int v2 = 0; v2 < 2; ++v2) {
          const double q = transition_probability(*cell, d1, d2, v1, v2, death_blocks_birth);
          if (q <= 0.0) continue;
          const int n1 = d1 > 0 ? d1 : (v1 ? t : 0);
          const int n2 = d2 > 0 ? d2 : (v2 ? t : 0);
          next[static_cast<std::uint32_t>(n1 * (tau + 1) + n2)] += w * q;
        }
      }
    }
    mass = std::move(next);
  }
  double birth = 0.0;
  for (const auto& [code, w] : mass)
    if (decode_mediator_history(code, tau).second > 0) birth += w;
  return birth;
}

}  // namespace lbp
