#pragma once

// Heterogeneity-robust staggered DID: every effect is a weighted average of
// switcher-vs-not-yet-treated 2x2 comparisons anchored at the last
// pre-switch period t-1.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stagger/error.hpp"
#include "stagger/panel.hpp"
#include "stagger/series.hpp"

namespace stagger {

struct RobustOptions {
  int lags = 0;   // dynamic horizons 0..lags
  int leads = 0;  // placebo horizons 1..leads
  ControlRule control = ControlRule::kNotYetTreated;
  // Empty: every switcher weighs the same at each event time. Otherwise the
  // named panel column, read at the switcher's baseline period t-1.
  std::string weight_column;
  bool keep_cells = true;
};

/// The 2x2 comparison for switcher `unit` at `event_time` (negative values
/// are placebo horizons), or nothing when a required observation or every
/// control is missing.
inline std::optional<CellDid> cell_did(const Panel& panel, const CohortMap& map, const std::string& unit,
                                       int event_time, ControlRule rule = ControlRule::kNotYetTreated) {
  const auto g = panel.unit_index(unit);
  if (!g) throw Error(ErrorCode::kUnknownUnit, "unit " + unit + " is not in the panel", {unit});
  const auto timing = resolve_timing(panel, map);
  if (!timing[*g].switcher()) {
    throw Error(ErrorCode::kInvalidArgument, "unit " + unit + " is not a switcher", {unit});
  }
  const int t = *timing[*g].switch_period;
  const auto w = cell_window(t, event_time);
  const auto y_early = panel.outcome(*g, w.early);
  const auto y_late = panel.outcome(*g, w.late);
  if (!y_early || !y_late) return std::nullopt;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < panel.num_units(); ++c) {
    if (c == *g || !eligible_control(timing[c], w.untreated_through, rule)) continue;
    const auto c_early = panel.outcome(c, w.early);
    const auto c_late = panel.outcome(c, w.late);
    if (!c_early || !c_late) continue;
    sum += *c_late - *c_early;
    ++count;
  }
  if (count == 0) return std::nullopt;
  CellDid cell;
  cell.switcher = unit;
  cell.switch_period = t;
  cell.event_time = event_time;
  cell.value = (*y_late - *y_early) - sum / static_cast<double>(count);
  cell.control_count = count;
  return cell;
}

/// Prepared estimator over one panel. `multiplicity` (one entry per unit
/// index, empty = all ones) reweights units as a cluster bootstrap draw
/// would duplicate them.
class RobustEstimator {
 public:
  RobustEstimator(const Panel& panel, const CohortMap& map, RobustOptions options)
      : panel_(panel), options_(std::move(options)), timing_(resolve_timing(panel, map)) {
    if (options_.lags < 0 || options_.leads < 0) {
      throw Error(ErrorCode::kInvalidArgument, "horizons must be non-negative");
    }
    if (!options_.weight_column.empty()) {
      weights_col_ = panel.extra_column(options_.weight_column);
      if (!weights_col_) {
        throw Error(ErrorCode::kInvalidArgument, "weight column '" + options_.weight_column + "' not in panel");
      }
    }
    for (std::size_t u = 0; u < timing_.size(); ++u) {
      if (timing_[u].always_treated) continue;
      if (!timing_[u].switch_period) {
        never_.push_back(u);
      } else {
        by_switch_.push_back(u);
      }
    }
    std::stable_sort(by_switch_.begin(), by_switch_.end(), [&](std::size_t a, std::size_t b) {
      return *timing_[a].switch_period < *timing_[b].switch_period;
    });
  }

  const Panel& panel() const { return panel_; }
  const RobustOptions& options() const { return options_; }

  /// Aggregate at one event time (cell indexing: negative = placebo horizon).
  SeriesEntry aggregate(int event_time, std::span<const double> multiplicity = {},
                        std::vector<CellDid>* cells = nullptr) const {
    SeriesEntry entry;
    entry.event_time = event_time;
    double num = 0.0;
    double den = 0.0;
    std::size_t first = 0;
    while (first < by_switch_.size()) {
      const int t = *timing_[by_switch_[first]].switch_period;
      std::size_t last = first;
      while (last < by_switch_.size() && *timing_[by_switch_[last]].switch_period == t) ++last;
      aggregate_cohort(t, event_time, first, last, multiplicity, num, den, entry.n_switchers, cells);
      first = last;
    }
    if (den > 0.0) {
      entry.identified = true;
      entry.estimate = num / den;
    }
    return entry;
  }

  EstimateSeries dynamic(std::span<const double> multiplicity = {}) const {
    EstimateSeries s;
    s.estimator = "robust";
    for (int l = 0; l <= options_.lags; ++l) {
      s.entries.push_back(aggregate(l, multiplicity, keep(multiplicity) ? &s.cells : nullptr));
    }
    return s;
  }

  /// Placebo horizon h is reported at event time -1-h.
  EstimateSeries placebo(std::span<const double> multiplicity = {}) const {
    EstimateSeries s;
    s.estimator = "robust";
    for (int h = options_.leads; h >= 1; --h) {
      auto e = aggregate(-h, multiplicity, keep(multiplicity) ? &s.cells : nullptr);
      e.event_time = -1 - h;
      s.entries.push_back(e);
    }
    return s;
  }

  /// Placebos, the zero reference at -1, then dynamic effects.
  EstimateSeries event_study(std::span<const double> multiplicity = {}) const {
    EstimateSeries s = placebo(multiplicity);
    SeriesEntry ref;
    ref.event_time = -1;
    ref.identified = true;
    ref.reference = true;
    ref.estimate = ref.se = ref.ci_low = ref.ci_high = ref.normal_ci_low = ref.normal_ci_high = 0.0;
    s.entries.push_back(ref);
    auto d = dynamic(multiplicity);
    s.entries.insert(s.entries.end(), d.entries.begin(), d.entries.end());
    s.cells.insert(s.cells.end(), d.cells.begin(), d.cells.end());
    return s;
  }

 private:
  bool keep(std::span<const double> multiplicity) const { return options_.keep_cells && multiplicity.empty(); }

  double mult(std::span<const double> m, std::size_t u) const { return m.empty() ? 1.0 : m[u]; }

  void aggregate_cohort(int t, int event_time, std::size_t first, std::size_t last, std::span<const double> m,
                        double& num, double& den, std::size_t& n_switchers, std::vector<CellDid>* cells) const {
    const auto w = cell_window(t, event_time);
    if (w.early < panel_.min_period() || w.late > panel_.max_period()) return;

    double control_sum = 0.0;
    double control_mass = 0.0;
    std::size_t control_count = 0;
    const auto add_control = [&](std::size_t c) {
      const double mc = mult(m, c);
      if (mc == 0.0) return;
      const auto r0 = panel_.row_at(c, w.early);
      const auto r1 = panel_.row_at(c, w.late);
      if (r0 < 0 || r1 < 0) return;
      const auto rows = panel_.observations();
      control_sum += mc * (rows[static_cast<std::size_t>(r1)].outcome - rows[static_cast<std::size_t>(r0)].outcome);
      control_mass += mc;
      ++control_count;
    };
    for (std::size_t c : never_) add_control(c);
    if (options_.control == ControlRule::kNotYetTreated) {
      auto it = std::upper_bound(by_switch_.begin(), by_switch_.end(), w.untreated_through,
                                 [&](int s, std::size_t u) { return s < *timing_[u].switch_period; });
      for (; it != by_switch_.end(); ++it) add_control(*it);
    }
    if (control_mass <= 0.0) return;
    const double control_mean = control_sum / control_mass;

    const auto rows = panel_.observations();
    for (std::size_t k = first; k < last; ++k) {
      const std::size_t g = by_switch_[k];
      const double mg = mult(m, g);
      if (mg == 0.0) continue;
      const auto r0 = panel_.row_at(g, w.early);
      const auto r1 = panel_.row_at(g, w.late);
      if (r0 < 0 || r1 < 0) continue;
      double weight = 1.0;
      if (weights_col_) {
        const auto base = panel_.row_at(g, t - 1);
        weight = base < 0 ? kNaN : (*weights_col_)[static_cast<std::size_t>(base)];
        if (!(weight > 0.0) || !std::isfinite(weight)) {
          throw Error(ErrorCode::kInvalidArgument, "weight for switcher " + panel_.unit_id(g) +
                                                       " at its baseline period must be positive and finite");
        }
      }
      const double value = (rows[static_cast<std::size_t>(r1)].outcome - rows[static_cast<std::size_t>(r0)].outcome) -
                           control_mean;
      num += mg * weight * value;
      den += mg * weight;
      ++n_switchers;
      if (cells) {
        cells->push_back({panel_.unit_id(g), t, event_time, value, control_count, weight});
      }
    }
  }

  const Panel& panel_;
  RobustOptions options_;
  std::vector<UnitTiming> timing_;
  const std::vector<double>* weights_col_ = nullptr;
  std::vector<std::size_t> never_;
  std::vector<std::size_t> by_switch_;  // non-always-treated switchers, ascending switch period
};

inline EstimateSeries dynamic_effects(const Panel& panel, const CohortMap& map, int lags, RobustOptions options = {}) {
  if (lags < 0) throw Error(ErrorCode::kInvalidArgument, "dynamic horizon must be non-negative");
  options.lags = lags;
  return RobustEstimator(panel, map, options).dynamic();
}

inline EstimateSeries placebo_effects(const Panel& panel, const CohortMap& map, int leads, RobustOptions options = {}) {
  if (leads < 1) throw Error(ErrorCode::kInvalidArgument, "placebo horizon must be at least 1");
  options.leads = leads;
  return RobustEstimator(panel, map, options).placebo();
}

/// Full series from -leads-1 to lags without inference; see
/// inference.hpp for the bootstrapped version.
inline EstimateSeries event_study(const Panel& panel, const CohortMap& map, const RobustOptions& options) {
  return RobustEstimator(panel, map, options).event_study();
}

}  // namespace stagger
