#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stagger/error.hpp"
#include "stagger/graph.hpp"
#include "stagger/inference.hpp"
#include "stagger/panel.hpp"
#include "stagger/regress.hpp"
#include "stagger/robust.hpp"
#include "stagger/series.hpp"
#include "stagger/text.hpp"

namespace stagger {

// ---------------------------------------------------------------------------
// Neighbour spillover

enum class MatchMode {
  kAdjacentEarliest,  // earliest switch among all adjacent ever-treated units
  kNearest,           // the single closest ever-treated neighbour (needs distances)
};

struct SpilloverMatch {
  std::string unit;
  std::string neighbour;  // the neighbour whose switch sets the timing
  int switch_period = 0;
};

struct SpilloverReport {
  std::size_t never_treated = 0;
  std::vector<SpilloverMatch> matched;
  std::vector<std::string> unmatched;
};

struct SpilloverPanel {
  Panel panel;
  SpilloverReport report;
};

/// Restricts `panel` to its never-treated units, whose treatment becomes
/// "an adjacent unit has been treated". Never-treated units without an
/// ever-treated neighbour are dropped and listed in the report.
inline SpilloverPanel build_spillover_panel(const Panel& panel, const CohortMap& map, const AdjacencyGraph& graph,
                                            MatchMode mode = MatchMode::kAdjacentEarliest) {
  std::vector<std::string> unknown;
  for (const auto& e : graph.edges()) {
    for (const auto* id : {&e.a, &e.b}) {
      if (!panel.unit_index(*id)) unknown.push_back(*id);
    }
  }
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    unknown.erase(std::unique(unknown.begin(), unknown.end()), unknown.end());
    throw Error(ErrorCode::kUnknownUnit, "adjacency lists " + std::to_string(unknown.size()) +
                                             " unit(s) absent from the panel, first: " + unknown.front(),
                unknown);
  }
  const auto adjacency = graph.neighbors();
  SpilloverReport report;
  std::vector<std::optional<int>> switches(panel.num_units());
  std::vector<bool> keep(panel.num_units(), false);
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    const auto& id = panel.unit_id(u);
    if (!map.never_treated.count(id)) continue;
    ++report.never_treated;
    std::optional<SpilloverMatch> best;
    std::optional<double> best_distance;
    if (auto it = adjacency.find(id); it != adjacency.end()) {
      for (const auto& [nb, distance] : it->second) {
        auto sw = map.first_switch.find(nb);
        if (sw == map.first_switch.end()) continue;
        if (mode == MatchMode::kAdjacentEarliest) {
          if (!best || sw->second < best->switch_period) best = SpilloverMatch{id, nb, sw->second};
          continue;
        }
        if (!distance) {
          throw Error(ErrorCode::kInvalidArgument, "nearest matching needs a distance on edge " + id + "-" + nb,
                      {id, nb});
        }
        const auto candidate = std::make_tuple(*distance, sw->second, nb);
        if (!best || candidate < std::make_tuple(*best_distance, best->switch_period, best->neighbour)) {
          best = SpilloverMatch{id, nb, sw->second};
          best_distance = distance;
        }
      }
    }
    if (!best) {
      report.unmatched.push_back(id);
      continue;
    }
    keep[u] = true;
    switches[u] = best->switch_period;
    report.matched.push_back(*best);
  }
  if (report.matched.empty()) {
    throw Error(ErrorCode::kNoMatches, "no never-treated unit has an ever-treated neighbour");
  }
  std::vector<std::optional<int>> kept_switches;
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    if (keep[u]) kept_switches.push_back(switches[u]);
  }
  Panel out = panel.filter_units([&](std::size_t u) { return keep[u]; }).with_switches(kept_switches);
  return {std::move(out), std::move(report)};
}

/// Robust event study on a spillover panel; `config == nullptr` skips inference.
inline EstimateSeries spillover_event_study(const SpilloverPanel& spill, RobustOptions options,
                                            const BootstrapConfig* config = nullptr,
                                            BootstrapResult* boot_out = nullptr) {
  auto series = robust_event_study(spill.panel, cohorts(spill.panel), std::move(options), config, boot_out);
  series.estimator = "spillover";
  return series;
}

// ---------------------------------------------------------------------------
// Initial-condition split

struct InitialSplit {
  Panel low;
  Panel high;
  double threshold = 0.0;  // median of the baseline outcomes; values <= threshold go low
  std::vector<std::string> dropped;
  std::vector<std::string> warnings;
};

inline InitialSplit split_by_initial(const Panel& panel, int baseline_period) {
  InitialSplit out;
  std::vector<double> values;
  std::vector<std::optional<double>> baseline(panel.num_units());
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    baseline[u] = panel.outcome(u, baseline_period);
    if (baseline[u]) {
      values.push_back(*baseline[u]);
    } else {
      out.dropped.push_back(panel.unit_id(u));
    }
  }
  if (values.empty()) {
    throw Error(ErrorCode::kBaselineMissingEverywhere,
                "no unit is observed in baseline period " + std::to_string(baseline_period));
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  out.threshold = n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
  out.low = panel.filter_units([&](std::size_t u) { return baseline[u] && *baseline[u] <= out.threshold; });
  out.high = panel.filter_units([&](std::size_t u) { return baseline[u] && *baseline[u] > out.threshold; });
  if (out.high.empty()) out.warnings.push_back("every retained unit ties at the median; the high group is empty");
  if (!out.dropped.empty()) {
    out.warnings.push_back(std::to_string(out.dropped.size()) + " unit(s) lack the baseline period and were dropped");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-sectional comparison

struct StrataRow {
  std::string stratum;
  bool available = false;
  double coefficient = kNaN;  // treated mean minus control mean
  double se = kNaN;           // HC1
  double intercept = kNaN;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;

  std::size_t n() const { return n_treated + n_control; }
};

struct StrataTable {
  std::vector<StrataRow> rows;

  const StrataRow* find(std::string_view stratum) const {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.stratum == stratum; });
    return it == rows.end() ? nullptr : &*it;
  }
};

/// OLS of outcome on [1, rail] separately per stratum label (an empty
/// `strata` map puts every unit in stratum "all"). Strata with fewer than
/// two treated or two control units are marked unavailable.
inline StrataTable cross_sectional(const std::map<std::string, double>& outcomes,
                                   const std::map<std::string, bool>& rail,
                                   const std::map<std::string, std::string>& strata = {}) {
  std::map<std::string, std::vector<std::pair<double, bool>>> groups;
  std::vector<std::string> missing;
  for (const auto& [unit, y] : outcomes) {
    auto r = rail.find(unit);
    if (r == rail.end()) {
      missing.push_back(unit);
      continue;
    }
    std::string label = "all";
    if (!strata.empty()) {
      auto s = strata.find(unit);
      if (s == strata.end()) {
        missing.push_back(unit);
        continue;
      }
      label = s->second;
    }
    if (!std::isfinite(y)) throw Error(ErrorCode::kNonFiniteOutcome, "non-finite outcome for unit " + unit, {unit});
    groups[label].emplace_back(y, r->second);
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::kUnknownUnit,
                std::to_string(missing.size()) + " unit(s) lack a rail indicator or stratum, first: " + missing.front(),
                missing);
  }
  StrataTable table;
  for (const auto& [label, obs] : groups) {
    StrataRow row;
    row.stratum = label;
    for (const auto& [y, d] : obs) (d ? row.n_treated : row.n_control)++;
    if (row.n_treated >= 2 && row.n_control >= 2) {
      DesignMatrix design;
      design.x.resize(static_cast<Eigen::Index>(obs.size()), 2);
      design.y.resize(static_cast<Eigen::Index>(obs.size()));
      for (std::size_t i = 0; i < obs.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        design.x(r, 0) = 1.0;
        design.x(r, 1) = obs[i].second ? 1.0 : 0.0;
        design.y(r) = obs[i].first;
      }
      design.names = {"intercept", "rail"};
      const auto fit = ols(design);
      const auto v = hc1_vcov(fit, design);
      row.available = true;
      row.intercept = fit.coefficients(0);
      row.coefficient = fit.coefficients(1);
      row.se = std::sqrt(v(1, 1));
    }
    table.rows.push_back(row);
  }
  return table;
}

/// "1.11 (0.11), n=1342", or "n/a, n=3" for an unavailable stratum.
inline std::string format_strata_row(const StrataRow& row, int digits = 2) {
  if (!row.available) return "n/a, n=" + std::to_string(row.n());
  return text::format_fixed(row.coefficient, digits) + " (" + text::format_fixed(row.se, digits) +
         "), n=" + std::to_string(row.n());
}

// ---------------------------------------------------------------------------
// Plant-level aggregation

struct PlantRow {
  std::string unit;
  int sector = 0;  // 1..9
  int year = 0;
  double production_value = 0.0;
  double employment = 0.0;
};

inline std::vector<PlantRow> read_plants(std::string_view content, char delim = ',') {
  const auto table = text::Table::parse(content, delim);
  const auto cu = table.require_column("unit");
  const auto cs = table.require_column("sector");
  const auto cy = table.require_column("year");
  const auto cv = table.require_column("production_value");
  const auto ce = table.require_column("employment");
  std::vector<PlantRow> rows;
  for (std::size_t i = 0; i < table.rows().size(); ++i) {
    const auto& f = table.rows()[i];
    const auto where = " (line " + std::to_string(table.line_number(i)) + ")";
    PlantRow r;
    r.unit = f[cu];
    r.sector = static_cast<int>(text::parse_int(f[cs], "sector" + where));
    if (r.sector < 1 || r.sector > 9) throw Error(ErrorCode::kParse, "sector must lie in 1..9" + where);
    r.year = static_cast<int>(text::parse_int(f[cy], "year" + where));
    r.production_value = text::parse_double(f[cv], "production_value" + where);
    r.employment = text::parse_double(f[ce], "employment" + where);
    rows.push_back(std::move(r));
  }
  return rows;
}

struct PlantTotals {
  double production_value = 0.0;
  double employment = 0.0;
};

struct PlantAggregate {
  std::map<std::pair<std::string, int>, PlantTotals> by_sector;  // (unit, sector)
  std::map<std::string, PlantTotals> total;                      // all sectors
};

/// Sums plant rows with year in [first_year, last_year]. Cells whose
/// production value sums to zero are left out rather than recorded as zero.
inline PlantAggregate aggregate_plant_outcomes(const std::vector<PlantRow>& rows, int first_year, int last_year) {
  if (last_year < first_year) throw Error(ErrorCode::kInvalidArgument, "empty aggregation window");
  PlantAggregate out;
  for (const auto& r : rows) {
    if (!(r.production_value >= 0.0) || !(r.employment >= 0.0) || !std::isfinite(r.production_value) ||
        !std::isfinite(r.employment)) {
      throw Error(ErrorCode::kNegativeValue,
                  "plant row for unit " + r.unit + " in " + std::to_string(r.year) + " has a negative or invalid value",
                  {r.unit, std::to_string(r.year)});
    }
    if (r.year < first_year || r.year > last_year) continue;
    auto& s = out.by_sector[{r.unit, r.sector}];
    s.production_value += r.production_value;
    s.employment += r.employment;
    auto& t = out.total[r.unit];
    t.production_value += r.production_value;
    t.employment += r.employment;
  }
  std::erase_if(out.by_sector, [](const auto& kv) { return kv.second.production_value == 0.0; });
  std::erase_if(out.total, [](const auto& kv) { return kv.second.production_value == 0.0; });
  return out;
}

/// log(sum) per unit for one sector (0 = all sectors).
inline std::map<std::string, double> log_production(const PlantAggregate& agg, int sector = 0) {
  std::map<std::string, double> out;
  if (sector == 0) {
    for (const auto& [unit, t] : agg.total) out[unit] = std::log(t.production_value);
  } else {
    for (const auto& [key, t] : agg.by_sector) {
      if (key.second == sector) out[key.first] = std::log(t.production_value);
    }
  }
  return out;
}

}  // namespace stagger
