#include "lbp/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace lbp {

bool node_at_risk(const NodeRef& node, const Trajectory& tr, bool death_blocks_birth) {
  const auto i = static_cast<std::size_t>(node.t - 1);
  switch (node.kind) {
    case NodeKind::Exposure:
    case NodeKind::Covariate: return true;
    case NodeKind::Z1: return node.t == 1 || tr.z1[i - 1] == 0;
    case NodeKind::Z2: return (node.t == 1 || tr.z2[i - 1] == 0) && !(death_blocks_birth && tr.z1[i] == 1);
    case NodeKind::Y1: return tr.z2[i] == 1 && (node.t == 1 || tr.y1[i - 1] != 0);
    case NodeKind::Y2: return tr.z2.back() == 1 && tr.y1.back() == 1;
  }
  return false;
}

int node_value(const NodeRef& node, const Trajectory& tr) {
  const auto i = static_cast<std::size_t>(node.t - 1);
  switch (node.kind) {
    case NodeKind::Exposure: return tr.a;
    case NodeKind::Covariate: return tr.cov(node.t, node.j);
    case NodeKind::Z1: return tr.z1[i];
    case NodeKind::Z2: return tr.z2[i];
    case NodeKind::Y1: return tr.y1[i];
    case NodeKind::Y2: return tr.y2;
  }
  return 0;
}

namespace {

bool dropped(const VarRef& ref, const Schema& schema, const ModelOptions& options) {
  if (options.mode != ModelMode::Misspecified) return false;
  const auto name = ref_name(ref, schema);
  for (const auto& d : options.drop)
    if (name == d || name.rfind(d + "@", 0) == 0) return true;
  return false;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kRidge = 1e-6;

}  // namespace

FittedNode::FittedNode(const Law& law, const NodeRef& node, const Schema& schema, std::optional<int> arm,
                       const ModelOptions& options) {
  node_ = node;
  levels_ = node.kind == NodeKind::Covariate ? schema.covariates[static_cast<std::size_t>(node.j)].levels : 2;
  law_ = law;
  switch (law.kind) {
    case LawKind::Deterministic:
    case LawKind::Uniform:
      form_ = Form::Fixed;
      return;
    case LawKind::Logistic: {
      form_ = Form::Logistic;
      std::set<std::string> seen;
      terms_.push_back({});  // intercept
      for (const auto& term : law.terms) {
        Term kept;
        bool zero = false;
        for (const auto& f : term) {
          if (f.ref.kind == VarKind::Exposure && arm) {
            const int v = f.level < 0 ? *arm : (*arm == f.level ? 1 : 0);
            if (v == 0) zero = true;
            continue;
          }
          if (dropped(f.ref, schema, options)) zero = true;
          kept.push_back(f);
        }
        if (zero || kept.empty()) continue;
        std::vector<std::string> names;
        for (const auto& f : kept) names.push_back(factor_name(f, schema));
        std::sort(names.begin(), names.end());
        std::string key;
        for (const auto& n : names) key += n + "*";
        if (seen.insert(key).second) terms_.push_back(std::move(kept));
      }
      return;
    }
    case LawKind::Table:
      for (const auto& p : law.parents) {
        if (p.kind == VarKind::Exposure && arm) continue;
        if (dropped(p, schema, options)) continue;
        parents_.push_back(p);
      }
      [[fallthrough]];
    case LawKind::Constant:
    case LawKind::Categorical:
      form_ = Form::Cells;
      for (const auto& p : parents_) {
        radix_.push_back(ref_levels(p, schema));
        n_cells_ *= static_cast<std::size_t>(radix_.back());
      }
      return;
  }
}

std::size_t FittedNode::cell_of(const Trajectory& tr) const {
  std::size_t cell = 0;
  for (std::size_t k = 0; k < parents_.size(); ++k)
    cell = cell * static_cast<std::size_t>(radix_[k]) + static_cast<std::size_t>(ref_level(parents_[k], tr));
  return cell;
}

std::vector<double> FittedNode::design_row(const Trajectory& tr) const {
  std::vector<double> x(terms_.size());
  x[0] = 1.0;
  for (std::size_t k = 1; k < terms_.size(); ++k) x[k] = term_value(terms_[k], tr);
  return x;
}

void FittedNode::prepare(const Population& data, const std::vector<std::uint32_t>& rows) {
  auto prep = std::make_shared<Prepared>();
  prep->rows = rows;
  if (form_ != Form::Fixed) {
    prep->pattern.resize(rows.size());
    prep->outcome.resize(rows.size());
    std::map<std::vector<double>, std::uint32_t> patterns;
    std::vector<const std::vector<double>*> ordered;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const Trajectory& tr = data.rows[rows[k]];
      prep->outcome[k] = static_cast<std::int8_t>(node_value(node_, tr));
      if (form_ == Form::Cells) {
        prep->pattern[k] = static_cast<std::uint32_t>(cell_of(tr));
      } else {
        auto [it, inserted] = patterns.emplace(design_row(tr), static_cast<std::uint32_t>(patterns.size()));
        if (inserted) ordered.push_back(&it->first);
        prep->pattern[k] = it->second;
      }
    }
    if (form_ == Form::Logistic) {
      prep->n_patterns = ordered.size();
      prep->x.resize(static_cast<Eigen::Index>(ordered.size()), static_cast<Eigen::Index>(terms_.size()));
      for (std::size_t r = 0; r < ordered.size(); ++r)
        for (std::size_t c = 0; c < terms_.size(); ++c)
          prep->x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (*ordered[r])[c];
      beta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(terms_.size()));
    } else {
      prep->n_patterns = n_cells_;
    }
  }
  prep_ = std::move(prep);
}

void FittedNode::fit(const std::vector<double>* row_weights) {
  if (form_ == Form::Fixed) return;
  const Prepared& p = *prep_;
  auto weight = [&](std::size_t k) { return row_weights ? (*row_weights)[p.rows[k]] : 1.0; };

  if (form_ == Form::Cells) {
    const auto L = static_cast<std::size_t>(levels_);
    std::vector<double> counts(n_cells_ * L, 0.0);
    pooled_.assign(L, 0.0);
    for (std::size_t k = 0; k < p.rows.size(); ++k) {
      const double w = weight(k);
      if (w == 0.0) continue;
      counts[p.pattern[k] * L + static_cast<std::size_t>(p.outcome[k])] += w;
      pooled_[static_cast<std::size_t>(p.outcome[k])] += w;
    }
    double pooled_total = 0.0;
    for (double c : pooled_) pooled_total += c;
    for (auto& c : pooled_) c = pooled_total > 0 ? c / pooled_total : 1.0 / static_cast<double>(L);
    cell_probs_.assign(n_cells_ * L, 0.0);
    empty_cells_ = 0;
    for (std::size_t c = 0; c < n_cells_; ++c) {
      double total = 0.0;
      for (std::size_t v = 0; v < L; ++v) total += counts[c * L + v];
      if (total <= 0.0) ++empty_cells_;
      for (std::size_t v = 0; v < L; ++v) cell_probs_[c * L + v] = total > 0.0 ? counts[c * L + v] / total : pooled_[v];
    }
    return;
  }

  // Penalized binomial Newton iterations on pattern totals.
  const auto P = static_cast<Eigen::Index>(p.n_patterns);
  Eigen::VectorXd tot = Eigen::VectorXd::Zero(P), succ = Eigen::VectorXd::Zero(P);
  for (std::size_t k = 0; k < p.rows.size(); ++k) {
    const double w = weight(k);
    if (w == 0.0) continue;
    tot(p.pattern[k]) += w;
    if (p.outcome[k] == 1) succ(p.pattern[k]) += w;
  }
  const Eigen::MatrixXd& X = p.x;
  const Eigen::Index K = X.cols();
  auto objective = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = X * b;
    double ll = 0.0;
    for (Eigen::Index r = 0; r < P; ++r) {
      if (tot(r) == 0.0) continue;
      // log(1 + e^eta) computed stably
      const double e = eta(r);
      const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      ll += succ(r) * e - tot(r) * softplus;
    }
    return ll - 0.5 * kRidge * b.squaredNorm();
  };
  Eigen::VectorXd b = beta_;
  double obj = objective(b);
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd eta = X * b;
    Eigen::VectorXd grad = -kRidge * b;
    Eigen::MatrixXd H = kRidge * Eigen::MatrixXd::Identity(K, K);
    for (Eigen::Index r = 0; r < P; ++r) {
      if (tot(r) == 0.0) continue;
      const double mu = sigmoid(eta(r));
      grad += (succ(r) - tot(r) * mu) * X.row(r).transpose();
      H.noalias() += (tot(r) * mu * (1.0 - mu)) * X.row(r).transpose() * X.row(r);
    }
    const Eigen::VectorXd step = H.ldlt().solve(grad);
    double scale = 1.0;
    Eigen::VectorXd next = b + step;
    double next_obj = objective(next);
    while (next_obj < obj - 1e-12 * (1.0 + std::abs(obj)) && scale > 1e-8) {
      scale *= 0.5;
      next = b + scale * step;
      next_obj = objective(next);
    }
    b = next;
    const bool done = (scale * step).lpNorm<Eigen::Infinity>() < 1e-10 || std::abs(next_obj - obj) < 1e-13 * (1.0 + std::abs(obj));
    obj = next_obj;
    if (done) break;
  }
  beta_ = b;
}

double FittedNode::prob_one(const Trajectory& tr) const {
  switch (form_) {
    case Form::Fixed: return law_.prob_one(tr);
    case Form::Cells: return cell_probs_[cell_of(tr) * 2 + 1];
    case Form::Logistic: {
      double eta = beta_(0);
      for (std::size_t k = 1; k < terms_.size(); ++k) eta += beta_(static_cast<Eigen::Index>(k)) * term_value(terms_[k], tr);
      return sigmoid(eta);
    }
  }
  return 0.0;
}

std::vector<double> FittedNode::pattern_prob_one() const {
  if (form_ == Form::Cells) {
    std::vector<double> out(n_cells_);
    for (std::size_t c = 0; c < n_cells_; ++c) out[c] = cell_probs_[c * static_cast<std::size_t>(levels_) + 1];
    return out;
  }
  if (form_ == Form::Logistic) {
    const Eigen::VectorXd eta = prep_->x * beta_;
    std::vector<double> out(static_cast<std::size_t>(eta.size()));
    for (Eigen::Index r = 0; r < eta.size(); ++r) out[static_cast<std::size_t>(r)] = sigmoid(eta(r));
    return out;
  }
  return {};
}

void FittedNode::distribution(const Trajectory& tr, std::span<double> out) const {
  if (form_ == Form::Fixed) {
    law_.distribution(tr, out);
  } else if (form_ == Form::Cells) {
    const auto L = static_cast<std::size_t>(levels_);
    const std::size_t c = cell_of(tr);
    for (std::size_t v = 0; v < L; ++v) out[v] = cell_probs_[c * L + v];
  } else {
    const double p = prob_one(tr);
    out[0] = 1.0 - p;
    out[1] = p;
  }
}

json FittedNode::describe(const Schema& schema) const {
  json j;
  switch (form_) {
    case Form::Fixed: j["form"] = "fixed"; break;
    case Form::Cells: {
      j["form"] = "cells";
      json parents = json::array();
      for (const auto& p : parents_) parents.push_back(ref_name(p, schema));
      j["parents"] = parents;
      j["probs"] = cell_probs_;
      break;
    }
    case Form::Logistic: {
      j["form"] = "logistic";
      json coef = json::object();
      coef["(intercept)"] = beta_.size() ? beta_(0) : 0.0;
      for (std::size_t k = 1; k < terms_.size(); ++k) {
        std::string name;
        for (const auto& f : terms_[k]) name += (name.empty() ? "" : "*") + factor_name(f, schema);
        coef[name] = beta_(static_cast<Eigen::Index>(k));
      }
      j["coef"] = coef;
      break;
    }
  }
  return j;
}

// ---------------------------------------------------------------------------

FittedModel::FittedModel(const Scm& scm, const Population& data, std::optional<int> arm, Parts parts,
                         const ModelOptions& options)
    : schema_(&scm.schema()), m_(scm.n_covariates()), parts_(parts) {
  const int tau = scm.horizon();
  const bool dbb = scm.death_blocks_birth();
  auto build = [&](const Law& law, NodeRef node, std::optional<int> node_arm) {
    FittedNode f(law, node, scm.schema(), node_arm, options);
    std::vector<std::uint32_t> rows;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
      const Trajectory& tr = data.rows[i];
      if (node_arm && tr.a != *node_arm) continue;
      if (node_at_risk(node, tr, dbb)) rows.push_back(static_cast<std::uint32_t>(i));
    }
    f.prepare(data, rows);
    return f;
  };
  if (parts.exposure) exposure_ = build(scm.exposure_law(), {NodeKind::Exposure, 0, 0}, std::nullopt);
  for (int t = 1; t <= tau; ++t) {
    if (parts.covariates)
      for (int j = 0; j < m_; ++j) covariates_.push_back(build(scm.covariate_law(t, j), {NodeKind::Covariate, t, j}, arm));
    if (parts.mediators) {
      z1_.push_back(build(scm.z1_law(t), {NodeKind::Z1, t, 0}, arm));
      z2_.push_back(build(scm.z2_law(t), {NodeKind::Z2, t, 0}, arm));
    }
    if (parts.outcomes) y1_.push_back(build(scm.y1_law(t), {NodeKind::Y1, t, 0}, arm));
  }
  if (parts.outcomes) y2_ = build(scm.y2_law(), {NodeKind::Y2, tau, 0}, arm);
  fit(nullptr);
}

template <class F>
void FittedModel::each(F f) {
  if (parts_.exposure) f(exposure_);
  for (auto& n : covariates_) f(n);
  for (auto& n : z1_) f(n);
  for (auto& n : z2_) f(n);
  for (auto& n : y1_) f(n);
  if (parts_.outcomes) f(y2_);
}

template <class F>
void FittedModel::each(F f) const {
  if (parts_.exposure) f(exposure_);
  for (const auto& n : covariates_) f(n);
  for (const auto& n : z1_) f(n);
  for (const auto& n : z2_) f(n);
  for (const auto& n : y1_) f(n);
  if (parts_.outcomes) f(y2_);
}

void FittedModel::fit(const std::vector<double>* row_weights) {
  each([&](FittedNode& n) { n.fit(row_weights); });
}

double FittedModel::exposure_prob(const Trajectory& tr) const { return exposure_.prob_one(tr); }

void FittedModel::covariate_distribution(int t, int j, const Trajectory& tr, std::span<double> out) const {
  covariates_[static_cast<std::size_t>((t - 1) * m_ + j)].distribution(tr, out);
}

double FittedModel::z1_prob(int t, const Trajectory& tr) const {
  return z1_[static_cast<std::size_t>(t - 1)].prob_one(tr);
}

double FittedModel::z2_prob(int t, const Trajectory& tr) const {
  return z2_[static_cast<std::size_t>(t - 1)].prob_one(tr);
}

double FittedModel::y1_prob(int t, const Trajectory& tr) const {
  return y1_[static_cast<std::size_t>(t - 1)].prob_one(tr);
}

double FittedModel::y2_prob(const Trajectory& tr) const { return y2_.prob_one(tr); }

std::size_t FittedModel::empty_cells() const {
  std::size_t n = 0;
  each([&](const FittedNode& f) { n += f.empty_cells(); });
  return n;
}

json FittedModel::describe() const {
  json j = json::object();
  if (parts_.exposure) j["a"] = exposure_.describe(*schema_);
  const int tau = schema_->horizon;
  for (int t = 1; t <= tau; ++t) {
    const auto i = static_cast<std::size_t>(t - 1);
    const auto ts = "@" + std::to_string(t);
    for (int c = 0; c < m_ && !covariates_.empty(); ++c)
      j["l." + schema_->covariates[static_cast<std::size_t>(c)].name + ts] =
          covariates_[i * static_cast<std::size_t>(m_) + static_cast<std::size_t>(c)].describe(*schema_);
    if (!z1_.empty()) {
      j["z1" + ts] = z1_[i].describe(*schema_);
      j["z2" + ts] = z2_[i].describe(*schema_);
    }
    if (!y1_.empty()) j["y1" + ts] = y1_[i].describe(*schema_);
  }
  if (parts_.outcomes) j["y2"] = y2_.describe(*schema_);
  return j;
}

}  // namespace lbp
