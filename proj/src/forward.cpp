#include "lbp/forward.hpp"

#include <algorithm>
#include <array>
#include <map>

#include "lbp/parallel.hpp"

namespace lbp {

namespace {

int draw_level(std::span<const double> probs, double u) {
  double cum = 0.0;
  int last_positive = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] > 0.0) last_positive = static_cast<int>(k);
    cum += probs[k];
    if (u < cum) return static_cast<int>(k);
  }
  return last_positive;
}

}  // namespace

StreamNames StreamNames::for_schema(const Schema& schema) {
  StreamNames s;
  for (const auto& v : schema.baseline) s.baseline.push_back(fnv1a64("l0." + v.name));
  for (const auto& v : schema.covariates) s.covariates.push_back(fnv1a64("l." + v.name));
  s.a = fnv1a64("a");
  s.z1 = fnv1a64("z1");
  s.z2 = fnv1a64("z2");
  s.y1 = fnv1a64("y1");
  s.y2 = fnv1a64("y2");
  return s;
}

// ---------------------------------------------------------------------------
// Baseline sources

void ScmBaseline::sample(const NoiseSource& noise, std::uint64_t individual, Trajectory& tr) const {
  const auto& hashes = scm_.hashes();
  std::array<double, kMaxLevels> buf{};
  for (int j = 0; j < scm_.n_baseline(); ++j) {
    const auto& law = scm_.baseline_law(j);
    const double u = noise.uniform(individual, hashes.baseline[static_cast<std::size_t>(j)], 0);
    if (law.continuous()) {
      tr.l0[static_cast<std::size_t>(j)] = law.lo + u * (law.hi - law.lo);
    } else {
      std::span<double> dist(buf.data(), static_cast<std::size_t>(law.levels));
      law.distribution(tr, dist);
      tr.l0[static_cast<std::size_t>(j)] = draw_level(dist, u);
    }
  }
}

void ScmBaseline::enumerate(Trajectory& tr, const std::function<void(double)>& visit) const {
  const int nb = scm_.n_baseline();
  std::function<void(int, double)> rec = [&](int j, double prob) {
    if (j == nb) {
      visit(prob);
      return;
    }
    const auto& law = scm_.baseline_law(j);
    if (law.continuous())
      throw UnsupportedSpecError("baseline covariate \"" + scm_.schema().baseline[static_cast<std::size_t>(j)].name +
                                 "\" is continuous");
    std::array<double, kMaxLevels> buf{};
    std::span<double> dist(buf.data(), static_cast<std::size_t>(law.levels));
    law.distribution(tr, dist);
    for (int k = 0; k < law.levels; ++k) {
      if (dist[static_cast<std::size_t>(k)] <= 0.0) continue;
      tr.l0[static_cast<std::size_t>(j)] = k;
      rec(j + 1, prob * dist[static_cast<std::size_t>(k)]);
    }
  };
  rec(0, 1.0);
}

EmpiricalBaseline::EmpiricalBaseline(std::vector<std::vector<double>> rows, std::vector<double> weights) {
  std::map<std::vector<double>, double> grouped;
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w <= 0.0) continue;
    grouped[rows[i]] += w;
    total += w;
  }
  if (total <= 0.0) throw DataError("empirical baseline distribution has no mass");
  double cum = 0.0;
  for (auto& [row, w] : grouped) {
    groups_.push_back(row);
    probs_.push_back(w / total);
    cum += w / total;
    cumulative_.push_back(cum);
  }
  cumulative_.back() = 1.0;
}

void EmpiricalBaseline::sample(const NoiseSource& noise, std::uint64_t individual, Trajectory& tr) const {
  static const std::uint64_t stream = fnv1a64("l0.empirical");
  const double u = noise.uniform(individual, stream, 0);
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), groups_.size() - 1);
  tr.l0 = groups_[idx];
}

void EmpiricalBaseline::enumerate(Trajectory& tr, const std::function<void(double)>& visit) const {
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    tr.l0 = groups_[g];
    visit(probs_[g]);
  }
}

// ---------------------------------------------------------------------------
// Engine

struct ForwardEngine::MediatorStep {
  bool z1_draw = false;
  int z1_fixed = 0;
  double p1 = 0.0;
  std::array<bool, 2> z2_draw{false, false};
  std::array<int, 2> z2_fixed{0, 0};
  std::array<double, 2> p2{0.0, 0.0};
  bool shared = false;

  // Joint probability of (z1_t, z2_t) = (v1, v2).
  double joint(int v1, int v2) const {
    const double pv1 = z1_draw ? (v1 ? p1 : 1.0 - p1) : (v1 == z1_fixed ? 1.0 : 0.0);
    if (pv1 <= 0.0) return 0.0;
    if (!z2_draw[v1]) return v2 == z2_fixed[v1] ? pv1 : 0.0;
    if (!(shared && z1_draw)) return pv1 * (v2 ? p2[v1] : 1.0 - p2[v1]);
    // One uniform u drives both: z1 = [u < p1], z2 = [u < p2(z1)].
    if (v1 == 1) {
      const double both = std::min(p1, p2[1]);
      return v2 ? both : p1 - both;
    }
    const double birth = std::max(0.0, p2[0] - p1);
    return v2 ? birth : (1.0 - p1) - birth;
  }
};

ForwardEngine::ForwardEngine(ForwardConfig cfg, const InterventionPlan& plan)
    : cfg_(cfg),
      plan_(plan),
      names_(StreamNames::for_schema(cfg.schema)),
      tau_(cfg.schema.horizon),
      m_(static_cast<int>(cfg.schema.covariates.size())) {}

ForwardEngine::MediatorStep ForwardEngine::mediator_step(int t, Trajectory& tr, ForwardStats& stats) const {
  MediatorStep s;
  const auto i = static_cast<std::size_t>(t - 1);
  const bool z1_absorbed = t > 1 && tr.z1[i - 1] == 1;
  const bool z2_absorbed = t > 1 && tr.z2[i - 1] == 1;

  if (const auto* ctl = std::get_if<ControlledMediators>(&plan_.mediators)) {
    s.z1_fixed = ctl->profile.z1[i];
    s.z2_fixed = {ctl->profile.z2[i], ctl->profile.z2[i]};
    return s;
  }

  auto z2_rule = [&](int v1, double p) {
    const auto v = static_cast<std::size_t>(v1);
    if (z2_absorbed) {
      s.z2_fixed[v] = 1;
    } else if (cfg_.death_blocks_birth && v1 == 1) {
      s.z2_fixed[v] = 0;
    } else {
      s.z2_draw[v] = true;
      s.p2[v] = p;
    }
  };

  if (const auto* sto = std::get_if<StochasticMediators>(&plan_.mediators)) {
    const MediatorPolicy& pol = *sto->policy;
    CellKey key{pol.strata.stratum(tr),
                pol.covariate_history ? covariate_history_code(tr, cfg_.schema, t) : 0,
                mediator_history_code(tr, t)};
    const TransitionCell* cell = pol.find(t, key);
    if (!cell && pol.fallback) {
      const MediatorPolicy& fb = *pol.fallback;
      cell = fb.find(t, CellKey{fb.strata.stratum(tr), 0, key.mediators});
      ++stats.policy_fallbacks;
    }
    if (!cell) {
      const auto [d1, d2] = decode_mediator_history(key.mediators, tau_);
      throw PolicyError("policy has no transition row at t=" + std::to_string(t) + " for stratum " +
                        pol.strata.label(key.stratum) + " with mediator history (z1 at " + std::to_string(d1) +
                        ", z2 at " + std::to_string(d2) + ")");
    }
    if (z1_absorbed) {
      s.z1_fixed = 1;
    } else {
      s.z1_draw = true;
      s.p1 = cell->p_z1;
    }
    for (int v1 = 0; v1 < 2; ++v1) z2_rule(v1, cell->p_z2[static_cast<std::size_t>(v1)]);
    return s;
  }

  // Natural mediators.
  s.shared = cfg_.shared_mediator_noise;
  if (z1_absorbed) {
    s.z1_fixed = 1;
  } else {
    s.z1_draw = true;
    s.p1 = cfg_.model.z1_prob(t, tr);
  }
  const std::int8_t saved = tr.z1[i];
  for (int v1 = 0; v1 < 2; ++v1) {
    const bool reachable = s.z1_draw ? (v1 ? s.p1 > 0.0 : s.p1 < 1.0) : v1 == s.z1_fixed;
    if (!reachable) continue;
    const bool needs_law = !z2_absorbed && !(cfg_.death_blocks_birth && v1 == 1);
    double p = 0.0;
    if (needs_law) {
      tr.z1[i] = static_cast<std::int8_t>(v1);
      p = cfg_.model.z2_prob(t, tr);
    }
    z2_rule(v1, p);
  }
  tr.z1[i] = saved;
  return s;
}

void ForwardEngine::simulate(const NoiseSource& noise, std::uint64_t individual, Trajectory& tr,
                             ForwardStats& stats) const {
  cfg_.baseline.sample(noise, individual, tr);
  if (plan_.exposure)
    tr.a = *plan_.exposure;
  else
    tr.a = noise.uniform(individual, names_.a, 0) < cfg_.model.exposure_prob(tr) ? 1 : 0;

  std::array<double, kMaxLevels> buf{};
  for (int t = 1; t <= tau_; ++t) {
    const auto ut = static_cast<std::uint32_t>(t);
    const auto i = static_cast<std::size_t>(t - 1);
    for (int j = 0; j < m_; ++j) {
      const int levels = cfg_.schema.covariates[static_cast<std::size_t>(j)].levels;
      std::span<double> dist(buf.data(), static_cast<std::size_t>(levels));
      cfg_.model.covariate_distribution(t, j, tr, dist);
      tr.cov(t, j) = draw_level(dist, noise.uniform(individual, names_.covariates[static_cast<std::size_t>(j)], ut));
    }

    const MediatorStep ms = mediator_step(t, tr, stats);
    const double u1 = noise.uniform(individual, names_.z1, ut);
    const int v1 = ms.z1_draw ? (u1 < ms.p1 ? 1 : 0) : ms.z1_fixed;
    tr.z1[i] = static_cast<std::int8_t>(v1);
    int v2 = ms.z2_fixed[static_cast<std::size_t>(v1)];
    if (ms.z2_draw[static_cast<std::size_t>(v1)]) {
      const double u2 = (ms.shared && ms.z1_draw) ? u1 : noise.uniform(individual, names_.z2, ut);
      v2 = u2 < ms.p2[static_cast<std::size_t>(v1)] ? 1 : 0;
    }
    tr.z2[i] = static_cast<std::int8_t>(v2);

    if (tr.z2[i] == 0) {
      tr.y1[i] = kMissing;
    } else if (t > 1 && tr.y1[i - 1] == 0) {
      tr.y1[i] = 0;
    } else {
      tr.y1[i] = noise.uniform(individual, names_.y1, ut) < cfg_.model.y1_prob(t, tr) ? 1 : 0;
    }
  }
  const auto last = static_cast<std::size_t>(tau_ - 1);
  if (tr.z2[last] == 0 || tr.y1[last] == 0)
    tr.y2 = kMissing;
  else
    tr.y2 = noise.uniform(individual, names_.y2, static_cast<std::uint32_t>(tau_)) < cfg_.model.y2_prob(tr) ? 1 : 0;
  tr.y = composite_outcome(tr.z2[last], tr.y1[last], tr.y2);
}

// Step layout: 1 exposure; per t: m covariates, mediators, y1; then y2.
void ForwardEngine::enumerate_from(int step, Trajectory& tr, double prob,
                                   const std::function<void(const Trajectory&, double)>& visit,
                                   ForwardStats& stats) const {
  const int per_t = m_ + 2;
  const int y2_step = 2 + tau_ * per_t;
  if (step == 1) {
    if (plan_.exposure) {
      tr.a = *plan_.exposure;
      enumerate_from(2, tr, prob, visit, stats);
      return;
    }
    const double p = cfg_.model.exposure_prob(tr);
    if (p < 1.0) {
      tr.a = 0;
      enumerate_from(2, tr, prob * (1.0 - p), visit, stats);
    }
    if (p > 0.0) {
      tr.a = 1;
      enumerate_from(2, tr, prob * p, visit, stats);
    }
    return;
  }
  if (step == y2_step) {
    const auto last = static_cast<std::size_t>(tau_ - 1);
    if (tr.z2[last] == 0 || tr.y1[last] == 0) {
      tr.y2 = kMissing;
      tr.y = 0;
      visit(tr, prob);
      return;
    }
    const double p = cfg_.model.y2_prob(tr);
    for (int v = 0; v < 2; ++v) {
      const double q = v ? p : 1.0 - p;
      if (q <= 0.0) continue;
      tr.y2 = static_cast<std::int8_t>(v);
      tr.y = composite_outcome(tr.z2[last], tr.y1[last], tr.y2);
      visit(tr, prob * q);
    }
    return;
  }
  const int t = (step - 2) / per_t + 1;
  const int k = (step - 2) % per_t;
  const auto i = static_cast<std::size_t>(t - 1);
  if (k < m_) {
    const int levels = cfg_.schema.covariates[static_cast<std::size_t>(k)].levels;
    std::array<double, kMaxLevels> buf{};
    std::span<double> dist(buf.data(), static_cast<std::size_t>(levels));
    cfg_.model.covariate_distribution(t, k, tr, dist);
    for (int v = 0; v < levels; ++v) {
      const double q = dist[static_cast<std::size_t>(v)];
      if (q <= 0.0) continue;
      tr.cov(t, k) = v;
      enumerate_from(step + 1, tr, prob * q, visit, stats);
    }
    return;
  }
  if (k == m_) {
    const MediatorStep ms = mediator_step(t, tr, stats);
    for (int v1 = 0; v1 < 2; ++v1) {
      for (int v2 = 0; v2 < 2; ++v2) {
        const double q = ms.joint(v1, v2);
        if (q <= 0.0) continue;
        tr.z1[i] = static_cast<std::int8_t>(v1);
        tr.z2[i] = static_cast<std::int8_t>(v2);
        enumerate_from(step + 1, tr, prob * q, visit, stats);
      }
    }
    return;
  }
  // Infant survival at t.
  if (tr.z2[i] == 0) {
    tr.y1[i] = kMissing;
    enumerate_from(step + 1, tr, prob, visit, stats);
    return;
  }
  if (t > 1 && tr.y1[i - 1] == 0) {
    tr.y1[i] = 0;
    enumerate_from(step + 1, tr, prob, visit, stats);
    return;
  }
  const double p = cfg_.model.y1_prob(t, tr);
  for (int v = 0; v < 2; ++v) {
    const double q = v ? p : 1.0 - p;
    if (q <= 0.0) continue;
    tr.y1[i] = static_cast<std::int8_t>(v);
    enumerate_from(step + 1, tr, prob * q, visit, stats);
  }
}

void ForwardEngine::enumerate(const std::function<void(const Trajectory&, double)>& visit,
                              ForwardStats& stats) const {
  Trajectory tr(cfg_.schema);
  cfg_.baseline.enumerate(tr, [&](double p) { enumerate_from(1, tr, p, visit, stats); });
}

// ---------------------------------------------------------------------------

Population simulate_counterfactual(const Scm& scm, const InterventionPlan& plan, std::size_t n, std::uint64_t seed,
                                   int threads, ForwardStats* stats) {
  plan.check(scm);
  ScmModel model(scm);
  ScmBaseline baseline(scm);
  ForwardEngine engine({scm.schema(), model, baseline, scm.death_blocks_birth(), scm.shared_mediator_noise()}, plan);
  const NoiseSource noise(seed);
  Population pop;
  pop.schema = scm.schema();
  pop.rows.resize(n);
  struct Acc {
    ForwardStats stats;
    void merge(const Acc& o) { stats.merge(o.stats); }
  };
  auto total = parallel_blocks<Acc>(
      n, threads, [] { return Acc{}; },
      [&](std::size_t begin, std::size_t end, Acc& acc) {
        Trajectory tr(pop.schema);
        for (std::size_t i = begin; i < end; ++i) {
          engine.simulate(noise, i, tr, acc.stats);
          pop.rows[i] = tr;
        }
      });
  if (stats) stats->merge(total.stats);
  return pop;
}

Population simulate_natural(const Scm& scm, std::size_t n, std::uint64_t seed, int threads) {
  if (n < 1) throw Error("simulate_natural needs n >= 1");
  return simulate_counterfactual(scm, InterventionPlan::natural(), n, seed, threads);
}

}  // namespace lbp
