#pragma once

// Long-format unit x period panels with absorbing (staggered) treatment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stagger/error.hpp"
#include "stagger/text.hpp"

namespace stagger {

struct Observation {
  std::string unit;
  int period = 0;
  double outcome = 0.0;
  bool treated = false;

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Which units may serve as the comparison group of a switcher.
enum class ControlRule {
  kNotYetTreated,  // never-treated plus units switching after the later cell period
  kNeverTreated,
};

/// Validated, immutable panel. Units are indexed in lexicographic id order and
/// rows are sorted by (unit, period), so construction is independent of input
/// row order.
///
/// Each unit carries a nominal switch period: the first treated period, which
/// may precede the first observed period after a treatment shift. A unit whose
/// switch is at or before its first observation is "always treated within the
/// window".
class Panel {
 public:
  using ExtraColumns = std::vector<std::pair<std::string, std::vector<double>>>;

  Panel() = default;

  /// Validates `rows` and builds the index. Extra numeric columns (e.g. a
  /// population weight) must align with `rows`.
  static Panel build(std::vector<Observation> rows, ExtraColumns extra = {}) {
    for (const auto& [name, values] : extra) {
      if (values.size() != rows.size()) {
        throw Error(ErrorCode::kInvalidArgument, "extra column '" + name + "' length mismatch");
      }
    }
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (rows[a].unit != rows[b].unit) return rows[a].unit < rows[b].unit;
      return rows[a].period < rows[b].period;
    });

    Panel p;
    p.rows_.reserve(rows.size());
    for (std::size_t i : order) p.rows_.push_back(std::move(rows[i]));
    for (auto& [name, values] : extra) {
      std::vector<double> sorted(values.size());
      for (std::size_t k = 0; k < order.size(); ++k) sorted[k] = values[order[k]];
      p.extra_.emplace_back(name, std::move(sorted));
    }

    for (std::size_t i = 0; i < p.rows_.size(); ++i) {
      const auto& r = p.rows_[i];
      if (!std::isfinite(r.outcome)) {
        throw Error(ErrorCode::kNonFiniteOutcome,
                    "non-finite outcome for unit " + r.unit + " at period " + std::to_string(r.period),
                    {r.unit, std::to_string(r.period)});
      }
      if (i > 0 && p.rows_[i - 1].unit == r.unit && p.rows_[i - 1].period == r.period) {
        throw Error(ErrorCode::kDuplicateCell,
                    "duplicate cell for unit " + r.unit + " at period " + std::to_string(r.period),
                    {r.unit, std::to_string(r.period)});
      }
    }

    std::vector<std::optional<int>> switches;
    std::size_t begin = 0;
    while (begin < p.rows_.size()) {
      std::size_t end = begin;
      while (end < p.rows_.size() && p.rows_[end].unit == p.rows_[begin].unit) ++end;
      std::optional<int> first_treated;
      for (std::size_t i = begin; i < end; ++i) {
        if (p.rows_[i].treated) {
          if (!first_treated) first_treated = p.rows_[i].period;
        } else if (first_treated) {
          throw Error(ErrorCode::kNonAbsorbingTreatment,
                      "unit " + p.rows_[i].unit + " is treated at period " + std::to_string(*first_treated) +
                          " but untreated at period " + std::to_string(p.rows_[i].period),
                      {p.rows_[i].unit, std::to_string(p.rows_[i].period)});
        }
      }
      switches.push_back(first_treated);
      begin = end;
    }
    p.index(std::move(switches));
    return p;
  }

  bool empty() const { return rows_.empty(); }
  std::size_t num_units() const { return units_.size(); }
  std::size_t num_observations() const { return rows_.size(); }
  int min_period() const { return min_period_; }
  int max_period() const { return max_period_; }
  std::size_t num_periods() const { return empty() ? 0 : static_cast<std::size_t>(max_period_ - min_period_ + 1); }
  bool balanced() const { return rows_.size() == num_units() * num_periods(); }

  const std::vector<std::string>& units() const { return units_; }
  const std::string& unit_id(std::size_t u) const { return units_[u]; }
  std::optional<std::size_t> unit_index(std::string_view id) const {
    auto it = std::lower_bound(units_.begin(), units_.end(), id);
    if (it == units_.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - units_.begin());
  }

  std::span<const Observation> observations() const { return rows_; }
  std::span<const Observation> unit_observations(std::size_t u) const {
    return std::span<const Observation>(rows_).subspan(unit_begin_[u], unit_begin_[u + 1] - unit_begin_[u]);
  }
  std::size_t unit_row_begin(std::size_t u) const { return unit_begin_[u]; }

  int first_observed(std::size_t u) const { return rows_[unit_begin_[u]].period; }
  int last_observed(std::size_t u) const { return rows_[unit_begin_[u + 1] - 1].period; }

  std::optional<int> switch_period(std::size_t u) const { return switch_[u]; }
  bool ever_treated(std::size_t u) const { return switch_[u].has_value(); }
  bool always_treated(std::size_t u) const { return switch_[u] && *switch_[u] <= first_observed(u); }
  std::vector<std::string> always_treated_units() const {
    std::vector<std::string> out;
    for (std::size_t u = 0; u < num_units(); ++u) {
      if (always_treated(u)) out.push_back(units_[u]);
    }
    return out;
  }

  /// Row index of (u, period), or -1 when the cell is absent.
  std::ptrdiff_t row_at(std::size_t u, int period) const {
    if (period < min_period_ || period > max_period_) return -1;
    return grid_[u * num_periods() + static_cast<std::size_t>(period - min_period_)];
  }
  std::optional<double> outcome(std::size_t u, int period) const {
    const auto r = row_at(u, period);
    if (r < 0) return std::nullopt;
    return rows_[static_cast<std::size_t>(r)].outcome;
  }

  const ExtraColumns& extra_columns() const { return extra_; }
  const std::vector<double>* extra_column(std::string_view name) const {
    for (const auto& [n, values] : extra_) {
      if (n == name) return &values;
    }
    return nullptr;
  }

  /// Rebuilds the panel with new nominal switch periods (one per unit);
  /// treated flags follow the new switches.
  Panel with_switches(const std::vector<std::optional<int>>& switches) const {
    if (switches.size() != num_units()) {
      throw Error(ErrorCode::kInvalidArgument, "switch vector does not match unit count");
    }
    Panel p = *this;
    for (std::size_t u = 0; u < num_units(); ++u) {
      for (std::size_t i = unit_begin_[u]; i < unit_begin_[u + 1]; ++i) {
        p.rows_[i].treated = switches[u] && p.rows_[i].period >= *switches[u];
      }
    }
    p.switch_ = switches;
    return p;
  }

  /// Keeps the units for which `keep(u)` is true; nominal switches are preserved.
  template <class Pred>
  Panel filter_units(Pred keep) const {
    Panel p;
    std::vector<std::optional<int>> switches;
    for (auto& [name, values] : extra_) p.extra_.emplace_back(name, std::vector<double>{});
    for (std::size_t u = 0; u < num_units(); ++u) {
      if (!keep(u)) continue;
      for (std::size_t i = unit_begin_[u]; i < unit_begin_[u + 1]; ++i) {
        p.rows_.push_back(rows_[i]);
        for (std::size_t c = 0; c < extra_.size(); ++c) p.extra_[c].second.push_back(extra_[c].second[i]);
      }
      switches.push_back(switch_[u]);
    }
    p.index(std::move(switches));
    return p;
  }

  /// Same rows and index with outcomes replaced (one value per row).
  Panel with_outcomes(std::span<const double> outcomes) const {
    if (outcomes.size() != rows_.size()) {
      throw Error(ErrorCode::kInvalidArgument, "outcome vector does not match row count");
    }
    Panel p = *this;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      if (!std::isfinite(outcomes[i])) {
        throw Error(ErrorCode::kNonFiniteOutcome, "non-finite outcome for unit " + rows_[i].unit + " at period " +
                                                      std::to_string(rows_[i].period));
      }
      p.rows_[i].outcome = outcomes[i];
    }
    return p;
  }

  friend bool operator==(const Panel& a, const Panel& b) {
    return a.rows_ == b.rows_ && a.extra_ == b.extra_ && a.switch_ == b.switch_;
  }

 private:
  void index(std::vector<std::optional<int>> switches) {
    units_.clear();
    unit_begin_.clear();
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      if (i == 0 || rows_[i].unit != rows_[i - 1].unit) {
        units_.push_back(rows_[i].unit);
        unit_begin_.push_back(i);
      }
    }
    unit_begin_.push_back(rows_.size());
    switch_ = std::move(switches);
    if (rows_.empty()) {
      min_period_ = max_period_ = 0;
      grid_.clear();
      return;
    }
    min_period_ = rows_.front().period;
    max_period_ = rows_.front().period;
    for (const auto& r : rows_) {
      min_period_ = std::min(min_period_, r.period);
      max_period_ = std::max(max_period_, r.period);
    }
    grid_.assign(num_units() * num_periods(), -1);
    for (std::size_t u = 0; u < num_units(); ++u) {
      for (std::size_t i = unit_begin_[u]; i < unit_begin_[u + 1]; ++i) {
        grid_[u * num_periods() + static_cast<std::size_t>(rows_[i].period - min_period_)] =
            static_cast<std::ptrdiff_t>(i);
      }
    }
  }

  std::vector<Observation> rows_;
  ExtraColumns extra_;
  std::vector<std::string> units_;
  std::vector<std::size_t> unit_begin_{0};
  std::vector<std::optional<int>> switch_;
  std::vector<std::ptrdiff_t> grid_;
  int min_period_ = 0;
  int max_period_ = 0;
};

/// Validates raw records into a Panel.
inline Panel load_panel(std::vector<Observation> rows, Panel::ExtraColumns extra = {}) {
  return Panel::build(std::move(rows), std::move(extra));
}

/// Parses delimited text with header `unit,period,outcome,treated`; any other
/// columns are read as numeric extras.
inline Panel read_panel(std::string_view content, char delim = ',') {
  const auto table = text::Table::parse(content, delim);
  const auto c_unit = table.require_column("unit");
  const auto c_period = table.require_column("period");
  const auto c_outcome = table.require_column("outcome");
  const auto c_treated = table.require_column("treated");
  std::vector<std::size_t> extra_cols;
  Panel::ExtraColumns extra;
  for (std::size_t c = 0; c < table.header().size(); ++c) {
    if (c == c_unit || c == c_period || c == c_outcome || c == c_treated) continue;
    extra_cols.push_back(c);
    extra.emplace_back(table.header()[c], std::vector<double>{});
  }
  std::vector<Observation> rows;
  rows.reserve(table.rows().size());
  for (std::size_t i = 0; i < table.rows().size(); ++i) {
    const auto& f = table.rows()[i];
    const auto where = " (line " + std::to_string(table.line_number(i)) + ")";
    Observation o;
    o.unit = f[c_unit];
    if (o.unit.empty()) throw Error(ErrorCode::kParse, "empty unit id" + where);
    o.period = static_cast<int>(text::parse_int(f[c_period], "period" + where));
    o.outcome = text::parse_double(f[c_outcome], "outcome" + where);
    const auto& tr = f[c_treated];
    if (tr == "0") {
      o.treated = false;
    } else if (tr == "1") {
      o.treated = true;
    } else {
      throw Error(ErrorCode::kParse, "treated must be 0 or 1, got '" + tr + "'" + where);
    }
    for (std::size_t k = 0; k < extra_cols.size(); ++k) {
      extra[k].second.push_back(text::parse_double(f[extra_cols[k]], extra[k].first + where));
    }
    rows.push_back(std::move(o));
  }
  return Panel::build(std::move(rows), std::move(extra));
}

inline std::string write_panel(const Panel& panel, char delim = ',') {
  std::string out = "unit";
  for (const char* h : {"period", "outcome", "treated"}) {
    out += delim;
    out += h;
  }
  for (const auto& [name, values] : panel.extra_columns()) {
    out += delim;
    out += text::quote_if_needed(name, delim);
  }
  out += '\n';
  const auto rows = panel.observations();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += text::quote_if_needed(rows[i].unit, delim);
    out += delim;
    out += std::to_string(rows[i].period);
    out += delim;
    out += text::format_double(rows[i].outcome);
    out += delim;
    out += rows[i].treated ? '1' : '0';
    for (const auto& [name, values] : panel.extra_columns()) {
      out += delim;
      out += text::format_double(values[i]);
    }
    out += '\n';
  }
  return out;
}

/// Moves every unit's switch `lead` periods earlier (treatment redefined from
/// opening to construction start). Units whose switch lands at or before their
/// first observation become always-treated; see Panel::always_treated_units().
inline Panel shift_treatment(const Panel& panel, int lead) {
  if (lead < 0) throw Error(ErrorCode::kInvalidArgument, "treatment lead must be non-negative");
  if (lead == 0) return panel;
  std::vector<std::optional<int>> switches(panel.num_units());
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    if (auto s = panel.switch_period(u)) switches[u] = *s - lead;
  }
  return panel.with_switches(switches);
}

inline Panel log_transform(const Panel& panel) {
  std::vector<double> logged(panel.num_observations());
  const auto rows = panel.observations();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!(rows[i].outcome > 0.0)) {
      throw Error(ErrorCode::kNonPositiveOutcome,
                  "outcome " + text::format_double(rows[i].outcome) + " for unit " + rows[i].unit + " at period " +
                      std::to_string(rows[i].period) + " has no logarithm",
                  {rows[i].unit, std::to_string(rows[i].period)});
    }
    logged[i] = std::log(rows[i].outcome);
  }
  return panel.with_outcomes(logged);
}

/// exp(b) - 1: log points to proportional change.
inline double percent_change(double log_points) { return std::expm1(log_points); }

struct CohortMap {
  std::map<std::string, int> first_switch;
  std::set<std::string> never_treated;
  // Units whose switch is at or before their first observation. A subset of
  // first_switch's keys; excluded from every estimand.
  std::set<std::string> always_treated;

  bool is_switcher(const std::string& unit) const {
    return first_switch.count(unit) > 0 && always_treated.count(unit) == 0;
  }
  std::optional<int> event_time(const std::string& unit, int period) const {
    auto it = first_switch.find(unit);
    if (it == first_switch.end()) return std::nullopt;
    return period - it->second;
  }
  std::size_t num_switchers() const { return first_switch.size() - always_treated.size(); }

  friend bool operator==(const CohortMap&, const CohortMap&) = default;
};

inline CohortMap cohorts(const Panel& panel) {
  CohortMap map;
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    if (auto s = panel.switch_period(u)) {
      map.first_switch.emplace(panel.unit_id(u), *s);
      if (panel.always_treated(u)) map.always_treated.insert(panel.unit_id(u));
    } else {
      map.never_treated.insert(panel.unit_id(u));
    }
  }
  return map;
}

/// Per-unit timing resolved against a panel's unit index.
struct UnitTiming {
  std::optional<int> switch_period;
  bool always_treated = false;

  bool switcher() const { return switch_period.has_value() && !always_treated; }
};

inline std::vector<UnitTiming> resolve_timing(const Panel& panel, const CohortMap& map) {
  std::vector<UnitTiming> timing(panel.num_units());
  std::size_t seen = 0;
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    const auto& id = panel.unit_id(u);
    if (auto it = map.first_switch.find(id); it != map.first_switch.end()) {
      timing[u].switch_period = it->second;
      timing[u].always_treated = map.always_treated.count(id) > 0;
      ++seen;
    } else if (map.never_treated.count(id) > 0) {
      ++seen;
    } else {
      throw Error(ErrorCode::kUnknownUnit, "unit " + id + " missing from cohort map", {id});
    }
  }
  if (seen != map.first_switch.size() + map.never_treated.size()) {
    throw Error(ErrorCode::kUnknownUnit, "cohort map names units that are not in the panel");
  }
  return timing;
}

/// Periods a 2x2 cell compares, and the last period through which a control
/// must remain untreated.
///
/// Dynamic cells (event_time >= 0) span {t-1, t+l}. Placebo cells
/// (event_time = -h < 0) span {t-1-h, t-1}; their controls must be untreated
/// through the switch period t, which keeps the switcher's own cohort out of
/// its comparison group.
struct CellWindow {
  int early = 0;
  int late = 0;
  int untreated_through = 0;
};

inline CellWindow cell_window(int switch_period, int event_time) {
  if (event_time >= 0) return {switch_period - 1, switch_period + event_time, switch_period + event_time};
  return {switch_period - 1 + event_time, switch_period - 1, switch_period};
}

inline bool eligible_control(const UnitTiming& c, int untreated_through, ControlRule rule) {
  if (c.always_treated) return false;
  if (!c.switch_period) return true;
  return rule == ControlRule::kNotYetTreated && *c.switch_period > untreated_through;
}

struct SwitcherCounts {
  // Keyed by event time; negative keys are placebo horizons (-h).
  std::map<int, std::size_t> per_event_time;

  std::size_t at(int event_time) const {
    auto it = per_event_time.find(event_time);
    return it == per_event_time.end() ? 0 : it->second;
  }
};

/// Number of switchers whose cell at each event time in [-leads, lags] is
/// identified: both periods observed and at least one eligible control
/// observed at both.
inline SwitcherCounts switcher_counts(const Panel& panel, const CohortMap& map, int lags, int leads,
                                      ControlRule rule = ControlRule::kNotYetTreated) {
  if (lags < 0 || leads < 0) throw Error(ErrorCode::kInvalidArgument, "horizons must be non-negative");
  const auto timing = resolve_timing(panel, map);
  SwitcherCounts counts;
  for (int l = -leads; l <= lags; ++l) {
    std::size_t n = 0;
    for (std::size_t g = 0; g < panel.num_units(); ++g) {
      if (!timing[g].switcher()) continue;
      const auto w = cell_window(*timing[g].switch_period, l);
      if (panel.row_at(g, w.early) < 0 || panel.row_at(g, w.late) < 0) continue;
      bool has_control = false;
      for (std::size_t c = 0; c < panel.num_units() && !has_control; ++c) {
        has_control = c != g && eligible_control(timing[c], w.untreated_through, rule) &&
                      panel.row_at(c, w.early) >= 0 && panel.row_at(c, w.late) >= 0;
      }
      if (has_control) ++n;
    }
    counts.per_event_time[l] = n;
  }
  return counts;
}

inline SwitcherCounts switcher_counts(const Panel& panel, int lags, int leads,
                                      ControlRule rule = ControlRule::kNotYetTreated) {
  return switcher_counts(panel, cohorts(panel), lags, leads, rule);
}

}  // namespace stagger
