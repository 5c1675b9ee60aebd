#pragma once

// Synthetic staggered-adoption panels with analytically known truth.
//
//   y_it = a_i + l_t + E_i(t) + e_it
//
// where E_i(t) collects the treatment effect tau_c(t - s_i) of unit i's
// cohort, anticipation effects before the switch, a differential linear
// trend for ever-treated units, and a spillover on never-treated units once
// a neighbour switches. Truth is evaluated on E alone, so it never depends
// on the simulated noise or fixed effects.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stagger/error.hpp"
#include "stagger/graph.hpp"
#include "stagger/panel.hpp"
#include "stagger/random.hpp"
#include "stagger/text.hpp"

namespace stagger {

struct CohortSpec {
  int switch_period = 0;
  double share = 0.0;
  // tau(l) = effect + slope * l for event times l >= 0.
  double effect = 0.0;
  double slope = 0.0;

  double tau(int l) const { return effect + slope * l; }
  friend bool operator==(const CohortSpec&, const CohortSpec&) = default;
};

enum class AdjacencyLayout { kNone, kRing };

struct DgpConfig {
  std::string name = "custom";
  std::size_t n_units = 100;
  int first_period = 1;
  int last_period = 20;
  std::vector<CohortSpec> cohorts;
  double never_share = 0.0;
  double unit_effect_mean = 0.0;
  double unit_effect_sd = 1.0;
  double period_trend = 0.0;
  double period_sd = 0.0;
  std::map<int, double> anticipation;  // negative event time -> effect
  double pretrend_slope = 0.0;         // extra slope per period for ever-treated units
  double spillover_effect = 0.0;       // on never-treated units once any neighbour has switched
  AdjacencyLayout adjacency = AdjacencyLayout::kNone;
  double noise_sd = 0.0;
  double noise_ar1 = 0.0;
  double missing_rate = 0.0;
  std::uint64_t seed = 1;

  friend bool operator==(const DgpConfig&, const DgpConfig&) = default;
};

inline void validate(const DgpConfig& c) {
  const auto bad = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, m); };
  if (c.n_units == 0) bad("n_units must be positive");
  if (c.last_period < c.first_period) bad("periods must satisfy first <= last");
  double total = c.never_share;
  if (c.never_share < 0.0) bad("never_share must be non-negative");
  for (const auto& k : c.cohorts) {
    if (k.share < 0.0) bad("cohort shares must be non-negative");
    if (k.switch_period > c.last_period) bad("cohort switch " + std::to_string(k.switch_period) + " is after the panel");
    if (!std::isfinite(k.effect) || !std::isfinite(k.slope)) bad("cohort effects must be finite");
    total += k.share;
  }
  if (std::abs(total - 1.0) > 1e-9) bad("cohort and never-treated shares must sum to 1");
  for (const auto& [l, v] : c.anticipation) {
    if (l >= 0) bad("anticipation keys must be negative event times");
    if (!std::isfinite(v)) bad("anticipation effects must be finite");
  }
  if (!(c.unit_effect_sd >= 0.0) || !(c.period_sd >= 0.0) || !(c.noise_sd >= 0.0)) bad("standard deviations must be >= 0");
  if (!(std::abs(c.noise_ar1) < 1.0)) bad("noise_ar1 must lie in (-1, 1)");
  if (!(c.missing_rate >= 0.0 && c.missing_rate < 1.0)) bad("missing_rate must lie in [0, 1)");
  if (c.adjacency == AdjacencyLayout::kRing && c.n_units < 3) bad("ring adjacency needs at least 3 units");
}

namespace detail {

inline std::string_view layout_name(AdjacencyLayout a) { return a == AdjacencyLayout::kRing ? "ring" : "none"; }

}  // namespace detail

/// Plain-text `key = value` form; repeated `cohort` lines, `#` comments.
inline std::string config_to_text(const DgpConfig& c) {
  using text::format_double;
  std::ostringstream o;
  o << "name = " << c.name << "\n";
  o << "n_units = " << c.n_units << "\n";
  o << "periods = " << c.first_period << ":" << c.last_period << "\n";
  o << "never_share = " << format_double(c.never_share) << "\n";
  for (const auto& k : c.cohorts) {
    o << "cohort = " << k.switch_period << " " << format_double(k.share) << " effect=" << format_double(k.effect)
      << " slope=" << format_double(k.slope) << "\n";
  }
  o << "unit_effect_mean = " << format_double(c.unit_effect_mean) << "\n";
  o << "unit_effect_sd = " << format_double(c.unit_effect_sd) << "\n";
  o << "period_trend = " << format_double(c.period_trend) << "\n";
  o << "period_sd = " << format_double(c.period_sd) << "\n";
  if (!c.anticipation.empty()) {
    o << "anticipation =";
    for (const auto& [l, v] : c.anticipation) o << " " << l << ":" << format_double(v);
    o << "\n";
  }
  o << "pretrend_slope = " << format_double(c.pretrend_slope) << "\n";
  o << "spillover_effect = " << format_double(c.spillover_effect) << "\n";
  o << "adjacency = " << detail::layout_name(c.adjacency) << "\n";
  o << "noise_sd = " << format_double(c.noise_sd) << "\n";
  o << "noise_ar1 = " << format_double(c.noise_ar1) << "\n";
  o << "missing_rate = " << format_double(c.missing_rate) << "\n";
  o << "seed = " << c.seed << "\n";
  return o.str();
}

/// Applies one `key = value` assignment to `c`. Repeated `cohort` keys append.
inline void apply_config_entry(DgpConfig& c, std::string_view key, std::string_view value) {
  const auto num = [&](std::string_view v) { return text::parse_double(v, key); };
  const auto words = [](std::string_view v) {
    std::vector<std::string> out;
    std::istringstream in{std::string(v)};
    for (std::string w; in >> w;) out.push_back(w);
    return out;
  };
  try {
    if (key == "name") {
      c.name = std::string(value);
    } else if (key == "n_units") {
      const auto n = text::parse_int(value, key);
      if (n <= 0) throw Error(ErrorCode::kInvalidConfig, "n_units must be positive");
      c.n_units = static_cast<std::size_t>(n);
    } else if (key == "periods") {
      const auto colon = value.find(':');
      if (colon == std::string_view::npos) throw Error(ErrorCode::kInvalidConfig, "periods must be first:last");
      c.first_period = static_cast<int>(text::parse_int(value.substr(0, colon), key));
      c.last_period = static_cast<int>(text::parse_int(value.substr(colon + 1), key));
    } else if (key == "never_share") {
      c.never_share = num(value);
    } else if (key == "cohort") {
      const auto w = words(value);
      if (w.size() < 2) throw Error(ErrorCode::kInvalidConfig, "cohort needs a switch period and a share");
      CohortSpec k;
      k.switch_period = static_cast<int>(text::parse_int(w[0], "cohort switch"));
      k.share = text::parse_double(w[1], "cohort share");
      for (std::size_t i = 2; i < w.size(); ++i) {
        const auto eq = w[i].find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::kInvalidConfig, "cohort attribute needs name=value");
        const auto attr = std::string_view(w[i]).substr(0, eq);
        const auto v = text::parse_double(std::string_view(w[i]).substr(eq + 1), attr);
        if (attr == "effect") {
          k.effect = v;
        } else if (attr == "slope") {
          k.slope = v;
        } else {
          throw Error(ErrorCode::kInvalidConfig, "unknown cohort attribute '" + std::string(attr) + "'");
        }
      }
      c.cohorts.push_back(k);
    } else if (key == "clear_cohorts") {
      c.cohorts.clear();
    } else if (key == "unit_effect_mean") {
      c.unit_effect_mean = num(value);
    } else if (key == "unit_effect_sd") {
      c.unit_effect_sd = num(value);
    } else if (key == "period_trend") {
      c.period_trend = num(value);
    } else if (key == "period_sd") {
      c.period_sd = num(value);
    } else if (key == "anticipation") {
      c.anticipation.clear();
      for (const auto& w : words(value)) {
        const auto colon = w.find(':');
        if (colon == std::string::npos) throw Error(ErrorCode::kInvalidConfig, "anticipation entries are l:effect");
        c.anticipation[static_cast<int>(text::parse_int(std::string_view(w).substr(0, colon), key))] =
            text::parse_double(std::string_view(w).substr(colon + 1), key);
      }
    } else if (key == "pretrend_slope") {
      c.pretrend_slope = num(value);
    } else if (key == "spillover_effect") {
      c.spillover_effect = num(value);
    } else if (key == "adjacency") {
      if (value == "ring") {
        c.adjacency = AdjacencyLayout::kRing;
      } else if (value == "none") {
        c.adjacency = AdjacencyLayout::kNone;
      } else {
        throw Error(ErrorCode::kInvalidConfig, "adjacency must be ring or none");
      }
    } else if (key == "noise_sd") {
      c.noise_sd = num(value);
    } else if (key == "noise_ar1") {
      c.noise_ar1 = num(value);
    } else if (key == "missing_rate") {
      c.missing_rate = num(value);
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(text::parse_int(value, key));
    } else {
      throw Error(ErrorCode::kInvalidConfig, "unknown config key '" + std::string(key) + "'");
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kParse) throw Error(ErrorCode::kInvalidConfig, e.what());
    throw;
  }
}

inline DgpConfig config_from_text(std::string_view content, DgpConfig base = {}) {
  std::size_t pos = 0;
  bool first_cohort = true;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    auto line = text::trim(content.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::kInvalidConfig, "expected key = value: " + std::string(line));
    const auto key = text::trim(line.substr(0, eq));
    const auto value = text::trim(line.substr(eq + 1));
    // A document that lists cohorts replaces the base cohorts.
    if (key == "cohort" && first_cohort) {
      base.cohorts.clear();
      first_cohort = false;
    }
    apply_config_entry(base, key, value);
  }
  validate(base);
  return base;
}

struct TruthCell {
  std::string unit;
  int period = 0;
  double effect = 0.0;
};

struct DgpTruth {
  // Expected value of the robust estimand (not-yet-treated controls, equal
  // switcher weights) on the realised design, keyed by reported event time:
  // dynamic l >= 0, placebo horizon h at -1-h.
  std::map<int, double> estimand;
  // Mean configured effect tau_c(l) over the switchers identified at l.
  std::map<int, double> effect_average;
  std::map<int, std::size_t> n_switchers;
  // Treatment effect of every observed treated cell.
  std::vector<TruthCell> cell_effects;
  double att = 0.0;  // mean of cell_effects
  std::map<std::string, std::optional<int>> assignment;
  AdjacencyGraph graph;

  double at(int event_time) const {
    auto it = estimand.find(event_time);
    if (it == estimand.end()) throw Error(ErrorCode::kInvalidArgument, "truth not identified at " + std::to_string(event_time));
    return it->second;
  }
};

struct SimulatedPanel {
  Panel panel;
  DgpTruth truth;
};

namespace detail {

// Largest-remainder allocation of n units over the given shares.
inline std::vector<std::size_t> allocate(std::size_t n, const std::vector<double>& shares) {
  std::vector<std::size_t> counts(shares.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < shares.size(); ++k) {
    const double exact = shares[k] * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += counts[k];
    remainders.emplace_back(exact - static_cast<double>(counts[k]), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n && i < remainders.size(); ++i, ++assigned) ++counts[remainders[i].second];
  return counts;
}

struct UnitDesign {
  std::optional<std::size_t> cohort;  // index into config.cohorts
  std::optional<int> neighbour_switch;
};

// Deterministic (non-fixed-effect, noise-free) component of the outcome.
inline double structural(const DgpConfig& c, const UnitDesign& u, int t) {
  if (u.cohort) {
    const auto& k = c.cohorts[*u.cohort];
    const int l = t - k.switch_period;
    double e = c.pretrend_slope * l;
    if (l >= 0) {
      e += k.tau(l);
    } else if (auto it = c.anticipation.find(l); it != c.anticipation.end()) {
      e += it->second;
    }
    return e;
  }
  if (u.neighbour_switch && t >= *u.neighbour_switch) return c.spillover_effect;
  return 0.0;
}

}  // namespace detail

inline SimulatedPanel generate(const DgpConfig& config) {
  validate(config);
  const std::size_t n = config.n_units;
  const int periods = config.last_period - config.first_period + 1;

  std::vector<double> shares;
  for (const auto& k : config.cohorts) shares.push_back(k.share);
  shares.push_back(config.never_share);
  const auto counts = detail::allocate(n, shares);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  StreamRng assign_rng(config.seed, 0);
  assign_rng.shuffle(order);
  std::vector<detail::UnitDesign> design(n);
  {
    std::size_t pos = 0;
    for (std::size_t k = 0; k < config.cohorts.size(); ++k) {
      for (std::size_t j = 0; j < counts[k]; ++j) design[order[pos++]].cohort = k;
    }
  }

  const int width = static_cast<int>(std::to_string(n).size());
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string num = std::to_string(i + 1);
    ids[i] = "u" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
  }

  DgpTruth truth;
  if (config.adjacency == AdjacencyLayout::kRing) {
    std::vector<AdjacencyGraph::Edge> edges;
    for (std::size_t i = 0; i < n; ++i) edges.push_back({ids[i], ids[(i + 1) % n], 1.0});
    truth.graph = AdjacencyGraph::from_edges(std::move(edges));
    for (std::size_t i = 0; i < n; ++i) {
      if (design[i].cohort) continue;
      for (std::size_t j : {(i + n - 1) % n, (i + 1) % n}) {
        if (!design[j].cohort) continue;
        const int s = config.cohorts[*design[j].cohort].switch_period;
        if (!design[i].neighbour_switch || s < *design[i].neighbour_switch) design[i].neighbour_switch = s;
      }
    }
  }

  StreamRng unit_rng(config.seed, 1);
  StreamRng period_rng(config.seed, 2);
  StreamRng noise_rng(config.seed, 3);
  StreamRng missing_rng(config.seed, 4);
  std::vector<double> alpha(n);
  for (auto& a : alpha) a = config.unit_effect_mean + config.unit_effect_sd * unit_rng.normal();
  std::vector<double> lambda(static_cast<std::size_t>(periods));
  for (int p = 0; p < periods; ++p) {
    lambda[static_cast<std::size_t>(p)] = config.period_trend * p + config.period_sd * period_rng.normal();
  }
  const double innovation_sd = config.noise_sd * std::sqrt(1.0 - config.noise_ar1 * config.noise_ar1);

  std::vector<Observation> rows;
  rows.reserve(n * static_cast<std::size_t>(periods));
  std::vector<std::vector<bool>> present(n, std::vector<bool>(static_cast<std::size_t>(periods), false));
  for (std::size_t i = 0; i < n; ++i) {
    const std::optional<int> s =
        design[i].cohort ? std::optional<int>(config.cohorts[*design[i].cohort].switch_period) : std::nullopt;
    truth.assignment[ids[i]] = s;
    double noise = 0.0;
    for (int p = 0; p < periods; ++p) {
      const int t = config.first_period + p;
      noise = p == 0 ? config.noise_sd * noise_rng.normal() : config.noise_ar1 * noise + innovation_sd * noise_rng.normal();
      const bool drop = config.missing_rate > 0.0 && missing_rng.uniform() < config.missing_rate;
      if (drop) continue;
      present[i][static_cast<std::size_t>(p)] = true;
      const double y = alpha[i] + lambda[static_cast<std::size_t>(p)] + detail::structural(config, design[i], t) + noise;
      rows.push_back({ids[i], t, y, s && t >= *s});
    }
  }
  Panel panel = Panel::build(rows);
  // Keep nominal switches for cohorts that start before the window.
  std::vector<std::optional<int>> switches(panel.num_units());
  for (std::size_t u = 0; u < panel.num_units(); ++u) switches[u] = truth.assignment.at(panel.unit_id(u));
  panel = panel.with_switches(switches);

  // Truth, evaluated on the structural component over the realised design.
  const auto is_present = [&](std::size_t i, int t) {
    return t >= config.first_period && t <= config.last_period &&
           present[i][static_cast<std::size_t>(t - config.first_period)];
  };
  std::vector<std::optional<int>> first_obs(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int p = 0; p < periods && !first_obs[i]; ++p) {
      if (present[i][static_cast<std::size_t>(p)]) first_obs[i] = config.first_period + p;
    }
  }
  const auto switch_of = [&](std::size_t i) -> std::optional<int> {
    if (!design[i].cohort) return std::nullopt;
    return config.cohorts[*design[i].cohort].switch_period;
  };
  const auto always = [&](std::size_t i) { return switch_of(i) && (!first_obs[i] || *switch_of(i) <= *first_obs[i]); };

  double att_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = switch_of(i);
    if (!s) continue;
    for (int t = std::max(*s, config.first_period); t <= config.last_period; ++t) {
      if (!is_present(i, t)) continue;
      const double e = config.cohorts[*design[i].cohort].tau(t - *s);
      truth.cell_effects.push_back({ids[i], t, e});
      att_sum += e;
    }
  }
  if (!truth.cell_effects.empty()) truth.att = att_sum / static_cast<double>(truth.cell_effects.size());

  for (int l = -(periods - 1); l <= periods - 1; ++l) {
    double sum = 0.0;
    double effect_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t g = 0; g < n; ++g) {
      const auto s = switch_of(g);
      if (!s || always(g)) continue;
      // Placebo horizon h = -l spans {s-1-h, s-1} and needs controls untreated through s.
      const int early = l >= 0 ? *s - 1 : *s - 1 + l;
      const int late = l >= 0 ? *s + l : *s - 1;
      const int through = l >= 0 ? *s + l : *s;
      if (!is_present(g, early) || !is_present(g, late)) continue;
      double control_sum = 0.0;
      std::size_t controls = 0;
      for (std::size_t c = 0; c < n; ++c) {
        if (c == g || always(c)) continue;
        const auto sc = switch_of(c);
        if (sc && *sc <= through) continue;
        if (!is_present(c, early) || !is_present(c, late)) continue;
        control_sum += detail::structural(config, design[c], late) - detail::structural(config, design[c], early);
        ++controls;
      }
      if (controls == 0) continue;
      sum += detail::structural(config, design[g], late) - detail::structural(config, design[g], early) -
             control_sum / static_cast<double>(controls);
      if (l >= 0) effect_sum += config.cohorts[*design[g].cohort].tau(l);
      ++count;
    }
    if (count == 0) continue;
    const int reported = l >= 0 ? l : -1 + l;
    truth.estimand[reported] = sum / static_cast<double>(count);
    truth.n_switchers[reported] = count;
    if (l >= 0) truth.effect_average[l] = effect_sum / static_cast<double>(count);
  }
  return {std::move(panel), std::move(truth)};
}

inline std::vector<DgpConfig> scenario_library() {
  std::vector<DgpConfig> out;
  {
    DgpConfig c;
    c.name = "parallel-homogeneous";
    c.n_units = 200;
    c.first_period = 1880;
    c.last_period = 1919;
    for (int s = 1885; s <= 1915; s += 5) c.cohorts.push_back({s, 0.1, 0.3, 0.0});
    c.never_share = 0.3;
    c.unit_effect_mean = 5.0;
    c.unit_effect_sd = 0.5;
    c.period_trend = 0.01;
    c.period_sd = 0.05;
    out.push_back(c);
  }
  {
    DgpConfig c;
    c.name = "cohort-heterogeneous";
    c.n_units = 120;
    c.first_period = 1;
    c.last_period = 20;
    c.cohorts = {{5, 0.4, 0.2, 0.0}, {12, 0.4, 1.0, 0.0}};
    c.never_share = 0.2;
    c.unit_effect_mean = 2.0;
    c.period_trend = 0.02;
    c.period_sd = 0.05;
    out.push_back(c);
  }
  {
    DgpConfig c;
    c.name = "pretrend-violation";
    c.n_units = 100;
    c.first_period = 1;
    c.last_period = 20;
    c.cohorts = {{11, 0.5, 0.3, 0.0}};
    c.never_share = 0.5;
    c.pretrend_slope = 0.1;
    c.unit_effect_mean = 2.0;
    c.period_trend = 0.02;
    c.period_sd = 0.05;
    out.push_back(c);
  }
  {
    DgpConfig c;
    c.name = "anticipation-2yr";
    c.n_units = 100;
    c.first_period = 1;
    c.last_period = 20;
    c.cohorts = {{11, 0.5, 0.3, 0.0}};
    c.never_share = 0.5;
    c.anticipation = {{-3, 0.2}, {-2, 0.2}};
    c.unit_effect_mean = 2.0;
    c.period_trend = 0.02;
    c.period_sd = 0.05;
    out.push_back(c);
  }
  {
    DgpConfig c;
    c.name = "neighbor-spillover";
    c.n_units = 200;
    c.first_period = 1;
    c.last_period = 30;
    c.cohorts = {{8, 0.15, 0.3, 0.0}, {14, 0.15, 0.3, 0.0}, {20, 0.15, 0.3, 0.0}};
    c.never_share = 0.55;
    c.spillover_effect = 0.1;
    c.adjacency = AdjacencyLayout::kRing;
    c.unit_effect_mean = 2.0;
    c.period_trend = 0.02;
    c.period_sd = 0.05;
    out.push_back(c);
  }
  {
    DgpConfig c;
    c.name = "paper-scale";
    c.n_units = 2400;
    c.first_period = 1860;
    c.last_period = 1917;
    for (int s = 1862; s <= 1916; s += 2) c.cohorts.push_back({s, 0.6 / 28.0, 0.02, 0.026});
    c.never_share = 0.4;
    c.unit_effect_mean = 5.0;
    c.unit_effect_sd = 1.0;
    c.period_trend = 0.01;
    c.period_sd = 0.05;
    c.noise_sd = 0.1;
    out.push_back(c);
  }
  {
    // Every unit is eventually treated and the early cohort's effect grows
    // steadily; static TWFE turns negative although every effect is positive.
    DgpConfig c;
    c.name = "dynamic-reversal";
    c.n_units = 100;
    c.first_period = 1;
    c.last_period = 12;
    c.cohorts = {{3, 0.5, 0.05, 0.3}, {10, 0.5, 0.05, 0.0}};
    c.never_share = 0.0;
    c.unit_effect_mean = 2.0;
    c.period_trend = 0.02;
    c.period_sd = 0.05;
    out.push_back(c);
  }
  return out;
}

inline DgpConfig scenario(std::string_view name) {
  for (auto& c : scenario_library()) {
    if (c.name == name) return c;
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown scenario '" + std::string(name) + "'");
}

inline std::string write_truth_csv(const DgpTruth& truth) {
  std::string out = "event_time,truth,effect_average,n_switchers\n";
  for (const auto& [l, v] : truth.estimand) {
    auto it = truth.effect_average.find(l);
    out += std::to_string(l) + "," + text::format_double(v) + "," +
           (it == truth.effect_average.end() ? std::string("NA") : text::format_double(it->second)) + "," +
           std::to_string(truth.n_switchers.at(l)) + "\n";
  }
  return out;
}

}  // namespace stagger
