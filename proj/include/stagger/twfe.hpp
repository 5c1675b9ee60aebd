#pragma once

// Two-way fixed-effects estimators (static and event-study) and the implicit
// weights the static estimator places on treated cells.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "stagger/error.hpp"
#include "stagger/panel.hpp"
#include "stagger/regress.hpp"
#include "stagger/series.hpp"
#include "stagger/stats.hpp"

namespace stagger {

enum class TrendControls { kNone, kUnitLinear };
enum class VarianceType { kClusterUnit, kHc1 };

namespace detail {

struct PanelProjection {
  std::vector<std::size_t> unit_codes;
  std::vector<std::size_t> period_codes;
  std::vector<double> trend;
};

inline PanelProjection panel_codes(const Panel& panel) {
  PanelProjection p;
  const auto rows = panel.observations();
  p.unit_codes.reserve(rows.size());
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    for (std::size_t i = 0; i < panel.unit_observations(u).size(); ++i) p.unit_codes.push_back(u);
  }
  for (const auto& r : rows) {
    p.period_codes.push_back(static_cast<std::size_t>(r.period - panel.min_period()));
    p.trend.push_back(static_cast<double>(r.period));
  }
  return p;
}

inline TwoWayProjector make_projector(const PanelProjection& codes, TrendControls trends) {
  ProjectionOptions opt;
  opt.unit_trends = trends == TrendControls::kUnitLinear;
  return TwoWayProjector(codes.unit_codes, codes.period_codes, codes.trend, opt);
}

// A column that the fixed effects absorb entirely has no identifying variation.
inline bool vanished(const Eigen::VectorXd& raw, const Eigen::VectorXd& projected) {
  return projected.norm() <= kRankThreshold * std::max(raw.norm(), 1.0);
}

}  // namespace detail

struct StaticTwfeOptions {
  TrendControls trends = TrendControls::kNone;
  VarianceType variance = VarianceType::kClusterUnit;
};

struct TwfeEstimate {
  double coefficient = 0.0;
  double se = 0.0;
  Eigen::MatrixXd vcov;
  FitResult fit;
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
};

/// beta from y = unit + period + beta * treated (+ unit trends); unit-clustered
/// variance by default.
inline TwfeEstimate twfe_static(const Panel& panel, const StaticTwfeOptions& options = {}) {
  const auto codes = detail::panel_codes(panel);
  const auto projector = detail::make_projector(codes, options.trends);
  const auto rows = panel.observations();
  Eigen::VectorXd d(static_cast<Eigen::Index>(rows.size()));
  Eigen::VectorXd y(d.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d[static_cast<Eigen::Index>(i)] = rows[i].treated ? 1.0 : 0.0;
    y[static_cast<Eigen::Index>(i)] = rows[i].outcome;
  }
  const Eigen::VectorXd raw_d = d;
  projector.apply(d);
  projector.apply(y);
  if (detail::vanished(raw_d, d)) {
    throw Error(ErrorCode::kRankDeficient, "treatment has no variation net of unit and period effects", {"treated"});
  }
  DesignMatrix design{d, y, {"treated"}, projector.absorbed_dof()};
  TwfeEstimate out;
  out.fit = ols(design);
  out.vcov = options.variance == VarianceType::kHc1 ? hc1_vcov(out.fit, design)
                                                     : cluster_vcov(out.fit, design, codes.unit_codes);
  out.coefficient = out.fit.coefficients[0];
  out.se = std::sqrt(out.vcov(0, 0));
  out.n_obs = rows.size();
  out.n_clusters = panel.num_units();
  return out;
}

/// "0.164 (0.049)": estimate with its standard error in parentheses.
inline std::string format_estimate(double estimate, double se, int digits = 3) {
  return text::format_fixed(estimate, digits) + " (" + text::format_fixed(se, digits) + ")";
}

struct TwfeSpec {
  int leads = 1;  // K: leads -K..-1
  int lags = 0;   // L: lags 0..L
  bool bin_endpoints = false;
  int omitted_lead = -1;
  TrendControls trends = TrendControls::kNone;
  double level = 0.95;
};

/// Dynamic TWFE with one indicator per event time in [-K, L] except the
/// omitted lead. Unbinned, event times outside the window get no indicator;
/// binned, the end indicators absorb everything beyond them. Never-treated
/// units carry all-zero indicators.
inline EstimateSeries twfe_event_study(const Panel& panel, const TwfeSpec& spec) {
  if (spec.leads < 1 || spec.lags < 0) throw Error(ErrorCode::kInvalidArgument, "need leads >= 1 and lags >= 0");
  if (spec.omitted_lead < -spec.leads || spec.omitted_lead > -1) {
    throw Error(ErrorCode::kInvalidArgument, "omitted lead must lie in [-leads, -1]");
  }
  const auto rows = panel.observations();
  const auto n = static_cast<Eigen::Index>(rows.size());

  // Bucket each row into an event time (or none).
  std::vector<std::optional<int>> bucket(rows.size());
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    const auto s = panel.switch_period(u);
    if (!s) continue;
    for (std::size_t i = panel.unit_row_begin(u); i < panel.unit_row_begin(u) + panel.unit_observations(u).size();
         ++i) {
      int k = rows[i].period - *s;
      if (spec.bin_endpoints) k = std::clamp(k, -spec.leads, spec.lags);
      if (k >= -spec.leads && k <= spec.lags) bucket[i] = k;
    }
  }

  std::map<int, std::set<std::size_t>> units_at;
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    for (std::size_t i = panel.unit_row_begin(u); i < panel.unit_row_begin(u) + panel.unit_observations(u).size();
         ++i) {
      if (bucket[i]) units_at[*bucket[i]].insert(u);
    }
  }
  std::vector<int> columns;
  for (int k = -spec.leads; k <= spec.lags; ++k) {
    if (k != spec.omitted_lead && units_at.count(k)) columns.push_back(k);
  }
  if (columns.empty()) {
    throw Error(ErrorCode::kRankDeficient, "no event-time indicator has observations");
  }

  const auto codes = detail::panel_codes(panel);
  const auto projector = detail::make_projector(codes, spec.trends);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(columns.size()));
  std::vector<std::string> names;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    names.push_back("event_" + std::to_string(columns[j]));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (bucket[i] == columns[j]) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
    }
  }
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = rows[i].outcome;
  projector.apply(y);
  std::vector<std::string> absorbed;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd raw = x.col(j);
    Eigen::VectorXd col = raw;
    projector.apply(col);
    if (detail::vanished(raw, col)) absorbed.push_back(names[static_cast<std::size_t>(j)]);
    x.col(j) = col;
  }
  if (!absorbed.empty()) {
    throw Error(ErrorCode::kUnderidentified, "event-time indicators absorbed by the fixed effects", absorbed);
  }

  DesignMatrix design{std::move(x), std::move(y), names, projector.absorbed_dof()};
  FitResult fit;
  try {
    fit = ols(design);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kRankDeficient) throw;
    std::string list;
    for (const auto& d : e.detail()) list += (list.empty() ? "" : ", ") + d;
    throw Error(ErrorCode::kUnderidentified, "collinear event-time indicators: " + list, e.detail());
  }
  const Eigen::MatrixXd vcov = cluster_vcov(fit, design, codes.unit_codes);
  const double z = stats::normal_critical(spec.level);

  EstimateSeries series;
  series.estimator = "twfe";
  for (int k = -spec.leads; k <= spec.lags; ++k) {
    SeriesEntry e;
    e.event_time = k;
    if (k == spec.omitted_lead) {
      e.identified = e.reference = true;
      e.estimate = e.se = e.ci_low = e.ci_high = e.normal_ci_low = e.normal_ci_high = 0.0;
    } else if (auto it = std::find(columns.begin(), columns.end(), k); it != columns.end()) {
      const auto j = static_cast<Eigen::Index>(it - columns.begin());
      e.identified = true;
      e.estimate = fit.coefficients[j];
      e.se = std::sqrt(std::max(vcov(j, j), 0.0));
      e.ci_low = e.normal_ci_low = e.estimate - z * e.se;
      e.ci_high = e.normal_ci_high = e.estimate + z * e.se;
      e.n_switchers = units_at[k].size();
    }
    series.entries.push_back(e);
  }
  return series;
}

struct TwfeWeightCell {
  std::string unit;
  int period = 0;
  double weight = 0.0;
};

struct TwfeWeightReport {
  std::vector<TwfeWeightCell> cells;
  double sum = 0.0;
  double min_weight = 0.0;
  double negative_share = 0.0;  // fraction of treated cells with weight < 0
  double negative_mass = 0.0;   // sum of the negative weights
  std::size_t num_negative = 0;

  /// Sum over treated cells of weight * effect(unit, period).
  double decompose(const std::function<double(const std::string&, int)>& effect) const {
    double total = 0.0;
    for (const auto& c : cells) total += c.weight * effect(c.unit, c.period);
    return total;
  }
};

/// Static TWFE as a weighted sum of treated-cell effects: the weight of a
/// treated cell is its two-way-demeaned treatment value, normalised over the
/// treated cells.
inline TwfeWeightReport twfe_weights(const Panel& panel) {
  const auto codes = detail::panel_codes(panel);
  const auto projector = detail::make_projector(codes, TrendControls::kNone);
  const auto rows = panel.observations();
  Eigen::VectorXd d(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) d[static_cast<Eigen::Index>(i)] = rows[i].treated ? 1.0 : 0.0;
  const Eigen::VectorXd raw = d;
  projector.apply(d);
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].treated) total += d[static_cast<Eigen::Index>(i)];
  }
  if (detail::vanished(raw, d) || total == 0.0) {
    throw Error(ErrorCode::kRankDeficient, "treatment has no variation net of unit and period effects", {"treated"});
  }
  TwfeWeightReport report;
  report.min_weight = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].treated) continue;
    const double w = d[static_cast<Eigen::Index>(i)] / total;
    report.cells.push_back({rows[i].unit, rows[i].period, w});
    report.sum += w;
    report.min_weight = std::min(report.min_weight, w);
    if (w < 0.0) {
      ++report.num_negative;
      report.negative_mass += w;
    }
  }
  report.negative_share = static_cast<double>(report.num_negative) / static_cast<double>(report.cells.size());
  return report;
}

inline std::string write_weights_csv(const TwfeWeightReport& report, const nlohmann::json* manifest = nullptr) {
  std::string out;
  if (manifest) out += "# manifest: " + manifest->dump() + "\n";
  out += "# sum: " + text::format_double(report.sum) + "\n";
  out += "# negative_share: " + text::format_double(report.negative_share) + "\n";
  out += "# min_weight: " + text::format_double(report.min_weight) + "\n";
  out += "unit,period,weight\n";
  for (const auto& c : report.cells) {
    out += text::quote_if_needed(c.unit, ',') + "," + std::to_string(c.period) + "," + text::format_double(c.weight) +
           "\n";
  }
  return out;
}

/// Drops units treated at their first observed period.
inline Panel exclude_always_treated(const Panel& panel) {
  return panel.filter_units([&](std::size_t u) { return !panel.always_treated(u); });
}

}  // namespace stagger
