#include "lbp/trajectory.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "lbp/error.hpp"

namespace lbp {

namespace {

int find_name(const std::vector<VariableInfo>& vars, const std::string& name) {
  for (std::size_t i = 0; i < vars.size(); ++i)
    if (vars[i].name == name) return static_cast<int>(i);
  return -1;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

int Schema::baseline_index(const std::string& name) const { return find_name(baseline, name); }
int Schema::covariate_index(const std::string& name) const { return find_name(covariates, name); }

bool Schema::operator==(const Schema& o) const {
  auto same = [](const std::vector<VariableInfo>& x, const std::vector<VariableInfo>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i].name != y[i].name || x[i].type != y[i].type || x[i].levels != y[i].levels)
        return false;
    return true;
  };
  return horizon == o.horizon && same(baseline, o.baseline) && same(covariates, o.covariates);
}

void Trajectory::reset(const Schema& schema) {
  const auto tau = static_cast<std::size_t>(schema.horizon);
  l0.assign(schema.baseline.size(), 0.0);
  a = 0;
  n_cov = static_cast<int>(schema.covariates.size());
  l.assign(tau * schema.covariates.size(), 0);
  z1.assign(tau, 0);
  z2.assign(tau, 0);
  y1.assign(tau, kMissing);
  y2 = kMissing;
  y = 0;
}

const char* to_string(TrajectoryRule rule) {
  switch (rule) {
    case TrajectoryRule::Domain: return "value outside variable domain";
    case TrajectoryRule::Z1Absorbing: return "z1 absorbing monotonicity";
    case TrajectoryRule::Z2Absorbing: return "z2 absorbing monotonicity";
    case TrajectoryRule::Y1Missingness: return "y1 missing iff no live birth";
    case TrajectoryRule::Y1Absorbing: return "y1 infant death is absorbing";
    case TrajectoryRule::Y2Missingness: return "y2 missing iff no birth or infant death";
    case TrajectoryRule::Composite: return "composite outcome rule";
    case TrajectoryRule::DeathBlocksBirth: return "maternal death blocks later birth";
  }
  return "unknown rule";
}

std::optional<RuleViolation> check_trajectory(const Trajectory& tr, const Schema& schema,
                                              bool death_blocks_birth) {
  const int tau = schema.horizon;
  if (tr.horizon() != tau || static_cast<int>(tr.l0.size()) != static_cast<int>(schema.baseline.size()) ||
      tr.n_cov != static_cast<int>(schema.covariates.size()) ||
      tr.l.size() != static_cast<std::size_t>(tau * tr.n_cov) || tr.z2.size() != tr.z1.size() ||
      tr.y1.size() != tr.z1.size())
    return RuleViolation{TrajectoryRule::Domain, 0};
  if (tr.a != 0 && tr.a != 1) return RuleViolation{TrajectoryRule::Domain, 0};
  for (std::size_t j = 0; j < schema.baseline.size(); ++j) {
    const auto& v = schema.baseline[j];
    const double x = tr.l0[j];
    if (!std::isfinite(x)) return RuleViolation{TrajectoryRule::Domain, 0};
    if (v.type != VarType::Continuous && (x != std::floor(x) || x < 0 || x >= v.levels))
      return RuleViolation{TrajectoryRule::Domain, 0};
  }
  for (int t = 1; t <= tau; ++t) {
    for (int j = 0; j < tr.n_cov; ++j) {
      const int x = tr.cov(t, j);
      if (x < 0 || x >= schema.covariates[static_cast<std::size_t>(j)].levels)
        return RuleViolation{TrajectoryRule::Domain, t};
    }
    const auto i = static_cast<std::size_t>(t - 1);
    if ((tr.z1[i] != 0 && tr.z1[i] != 1) || (tr.z2[i] != 0 && tr.z2[i] != 1) ||
        (tr.y1[i] != 0 && tr.y1[i] != 1 && tr.y1[i] != kMissing))
      return RuleViolation{TrajectoryRule::Domain, t};
  }
  if (tr.y2 != 0 && tr.y2 != 1 && tr.y2 != kMissing) return RuleViolation{TrajectoryRule::Domain, 0};
  if (tr.y != 0 && tr.y != 1) return RuleViolation{TrajectoryRule::Domain, 0};

  for (int t = 2; t <= tau; ++t) {
    const auto i = static_cast<std::size_t>(t - 1);
    if (tr.z1[i - 1] == 1 && tr.z1[i] != 1) return RuleViolation{TrajectoryRule::Z1Absorbing, t};
    if (tr.z2[i - 1] == 1 && tr.z2[i] != 1) return RuleViolation{TrajectoryRule::Z2Absorbing, t};
  }
  for (int t = 1; t <= tau; ++t) {
    const auto i = static_cast<std::size_t>(t - 1);
    if ((tr.y1[i] == kMissing) != (tr.z2[i] == 0)) return RuleViolation{TrajectoryRule::Y1Missingness, t};
    if (t >= 2 && tr.y1[i - 1] == 0 && tr.y1[i] != kMissing && tr.y1[i] != 0)
      return RuleViolation{TrajectoryRule::Y1Absorbing, t};
    if (death_blocks_birth && tr.z1[i] == 1 && tr.z2[i] == 1 && (t == 1 || tr.z2[i - 1] == 0))
      return RuleViolation{TrajectoryRule::DeathBlocksBirth, t};
  }
  const auto last = static_cast<std::size_t>(tau - 1);
  const bool y2_missing = tr.z2[last] == 0 || tr.y1[last] == 0;
  if ((tr.y2 == kMissing) != y2_missing) return RuleViolation{TrajectoryRule::Y2Missingness, tau};
  if (tr.y != composite_outcome(tr.z2[last], tr.y1[last], tr.y2))
    return RuleViolation{TrajectoryRule::Composite, tau};
  return std::nullopt;
}

std::vector<std::string> population_csv_header(const Schema& schema) {
  std::vector<std::string> cols;
  for (const auto& v : schema.baseline) cols.push_back("l0." + v.name);
  cols.emplace_back("a");
  for (int t = 1; t <= schema.horizon; ++t)
    for (const auto& v : schema.covariates) cols.push_back("l" + std::to_string(t) + "." + v.name);
  for (int t = 1; t <= schema.horizon; ++t) cols.push_back("z1_" + std::to_string(t));
  for (int t = 1; t <= schema.horizon; ++t) cols.push_back("z2_" + std::to_string(t));
  for (int t = 1; t <= schema.horizon; ++t) cols.push_back("y1_" + std::to_string(t));
  cols.emplace_back("y2");
  cols.emplace_back("y");
  return cols;
}

void write_population_csv(std::ostream& out, const Population& pop) {
  const auto& schema = pop.schema;
  const auto header = population_csv_header(schema);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  const auto opt = [](std::int8_t v) { return v == kMissing ? std::string() : std::to_string(v); };
  std::string line;
  for (const auto& tr : pop.rows) {
    line.clear();
    for (std::size_t j = 0; j < tr.l0.size(); ++j) {
      if (schema.baseline[j].type == VarType::Continuous)
        line += format_double(tr.l0[j]);
      else
        line += std::to_string(static_cast<long long>(tr.l0[j]));
      line += ',';
    }
    line += std::to_string(tr.a);
    for (int x : tr.l) {
      line += ',';
      line += std::to_string(x);
    }
    for (auto v : tr.z1) line += "," + std::to_string(v);
    for (auto v : tr.z2) line += "," + std::to_string(v);
    for (auto v : tr.y1) line += "," + opt(v);
    line += "," + opt(tr.y2);
    line += "," + std::to_string(tr.y);
    out << line << '\n';
  }
}

namespace {

Schema infer_schema(const std::vector<std::string>& header) {
  Schema schema;
  int horizon = 0;
  for (const auto& col : header) {
    if (col.rfind("z1_", 0) == 0) horizon = std::max(horizon, std::stoi(col.substr(3)));
  }
  if (horizon < 1) throw DataError("CSV header has no z1_<t> columns");
  schema.horizon = horizon;
  for (const auto& col : header) {
    if (col.rfind("l0.", 0) == 0) {
      schema.baseline.push_back({col.substr(3), VarType::Binary, 2});
    } else if (col.size() > 3 && col[0] == 'l' && col.rfind("l1.", 0) == 0) {
      schema.covariates.push_back({col.substr(3), VarType::Binary, 2});
    }
  }
  return schema;
}

}  // namespace

Population read_population_csv(std::istream& in, const Schema* expected) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV input");
  const auto header = split_csv_line(line);
  Schema schema = expected ? *expected : infer_schema(header);
  const auto want = population_csv_header(schema);
  if (header != want) {
    std::ostringstream msg;
    msg << "CSV header does not match the expected schema (expected " << want.size() << " columns, got "
        << header.size() << ")";
    throw DataError(msg.str());
  }

  std::vector<std::vector<std::string>> raw;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("row " + std::to_string(raw.size()) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    raw.push_back(std::move(fields));
  }

  const std::size_t nb = schema.baseline.size();
  if (!expected) {
    // Infer baseline/covariate types from observed values.
    for (std::size_t j = 0; j < nb; ++j) {
      bool integral = true;
      double max_value = 0;
      for (std::size_t r = 0; r < raw.size(); ++r) {
        double v = 0;
        if (!parse_number(raw[r][j], v))
          throw DataError("row " + std::to_string(r) + ": bad value in column " + header[j]);
        if (v != std::floor(v) || v < 0) integral = false;
        max_value = std::max(max_value, v);
      }
      auto& info = schema.baseline[j];
      if (!integral) {
        info.type = VarType::Continuous;
        info.levels = 0;
      } else if (max_value > 1) {
        info.type = VarType::Categorical;
        info.levels = static_cast<int>(max_value) + 1;
      }
    }
    const std::size_t nc = schema.covariates.size();
    for (std::size_t j = 0; j < nc; ++j) {
      int max_value = 1;
      for (int t = 1; t <= schema.horizon; ++t) {
        const std::size_t col = nb + 1 + static_cast<std::size_t>(t - 1) * nc + j;
        for (const auto& row : raw) {
          double v = 0;
          if (parse_number(row[col], v)) max_value = std::max(max_value, static_cast<int>(v));
        }
      }
      if (max_value > 1) {
        schema.covariates[j].type = VarType::Categorical;
        schema.covariates[j].levels = max_value + 1;
      }
    }
  }

  Population pop;
  pop.schema = schema;
  pop.rows.reserve(raw.size());
  const int tau = schema.horizon;
  const std::size_t nc = schema.covariates.size();
  for (std::size_t r = 0; r < raw.size(); ++r) {
    const auto& f = raw[r];
    const auto fail = [&](const std::string& what) {
      throw DataError("row " + std::to_string(r) + ": " + what);
    };
    auto integer = [&](std::size_t col, bool allow_missing) -> int {
      if (f[col].empty()) {
        if (!allow_missing) fail("missing value in column " + header[col]);
        return kMissing;
      }
      double v = 0;
      if (!parse_number(f[col], v) || v != std::floor(v)) fail("bad value in column " + header[col]);
      return static_cast<int>(v);
    };
    Trajectory tr(schema);
    std::size_t col = 0;
    for (std::size_t j = 0; j < nb; ++j, ++col) {
      double v = 0;
      if (!parse_number(f[col], v)) fail("bad value in column " + header[col]);
      tr.l0[j] = v;
    }
    tr.a = integer(col++, false);
    for (int t = 1; t <= tau; ++t)
      for (std::size_t j = 0; j < nc; ++j) tr.cov(t, static_cast<int>(j)) = integer(col++, false);
    for (int t = 0; t < tau; ++t) tr.z1[static_cast<std::size_t>(t)] = static_cast<std::int8_t>(integer(col++, false));
    for (int t = 0; t < tau; ++t) tr.z2[static_cast<std::size_t>(t)] = static_cast<std::int8_t>(integer(col++, false));
    for (int t = 0; t < tau; ++t) tr.y1[static_cast<std::size_t>(t)] = static_cast<std::int8_t>(integer(col++, true));
    tr.y2 = static_cast<std::int8_t>(integer(col++, true));
    tr.y = static_cast<std::int8_t>(integer(col++, false));
    if (auto v = check_trajectory(tr, schema)) {
      std::string where = v->time ? " at t=" + std::to_string(v->time) : std::string();
      fail(std::string("violates ") + to_string(v->rule) + where);
    }
    pop.rows.push_back(std::move(tr));
  }
  return pop;
}

}  // namespace lbp
