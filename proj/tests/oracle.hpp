#pragma once

// Independent reference implementations used only by the tests. They share
// no code with the library beyond the Panel container.

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stagger/panel.hpp"

namespace oracle {

// Map-backed copy of a panel: (unit, period) -> outcome, unit -> switch.
struct Grid {
  std::map<std::pair<std::string, int>, double> y;
  std::map<std::string, std::optional<int>> switch_of;
  std::map<std::string, int> first_seen;

  explicit Grid(const stagger::Panel& p) {
    for (const auto& o : p.observations()) {
      y[{o.unit, o.period}] = o.outcome;
      if (!first_seen.count(o.unit) || o.period < first_seen[o.unit]) first_seen[o.unit] = o.period;
    }
    for (std::size_t u = 0; u < p.num_units(); ++u) switch_of[p.unit_id(u)] = p.switch_period(u);
  }

  std::optional<double> at(const std::string& u, int t) const {
    auto it = y.find({u, t});
    if (it == y.end()) return std::nullopt;
    return it->second;
  }
  bool always(const std::string& u) const {
    const auto& s = switch_of.at(u);
    return s && *s <= first_seen.at(u);
  }
};

// Equal-weight average over switchers of the 2x2 contrast. For l >= 0 the
// periods are {s-1, s+l} and controls are untreated through s+l; for a
// placebo horizon h = -l > 0 the periods are {s-1-h, s-1} and controls are
// untreated through s.
inline std::optional<double> brute_force(const Grid& g, int l, bool never_only = false) {
  double total = 0.0;
  int n = 0;
  for (const auto& [unit, s] : g.switch_of) {
    if (!s || g.always(unit)) continue;
    const int a = l >= 0 ? *s - 1 : *s - 1 + l;
    const int b = l >= 0 ? *s + l : *s - 1;
    const int through = l >= 0 ? *s + l : *s;
    const auto ya = g.at(unit, a);
    const auto yb = g.at(unit, b);
    if (!ya || !yb) continue;
    double csum = 0.0;
    int cn = 0;
    for (const auto& [other, so] : g.switch_of) {
      if (other == unit || g.always(other)) continue;
      if (so && (never_only || *so <= through)) continue;
      const auto ca = g.at(other, a);
      const auto cb = g.at(other, b);
      if (!ca || !cb) continue;
      csum += *cb - *ca;
      ++cn;
    }
    if (cn == 0) continue;
    total += (*yb - *ya) - csum / cn;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return total / n;
}

// OLS of y on [regressors, unit dummies, period dummies] by a dense complete
// orthogonal decomposition. Returns the coefficients on the regressors.
inline Eigen::VectorXd dense_twfe(const stagger::Panel& p, const Eigen::MatrixXd& regressors, const Eigen::VectorXd& y) {
  std::map<std::string, int> units;
  std::map<int, int> periods;
  for (const auto& o : p.observations()) {
    units.emplace(o.unit, 0);
    periods.emplace(o.period, 0);
  }
  int k = 0;
  for (auto& [u, i] : units) i = k++;
  k = 0;
  for (auto& [t, i] : periods) i = k++;
  const auto n = static_cast<Eigen::Index>(p.num_observations());
  const auto r = regressors.cols();
  const auto nu = static_cast<Eigen::Index>(units.size());
  const auto np = static_cast<Eigen::Index>(periods.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, r + nu + np - 1);
  x.leftCols(r) = regressors;
  Eigen::Index row = 0;
  for (const auto& o : p.observations()) {
    x(row, r + units[o.unit]) = 1.0;
    if (periods[o.period] > 0) x(row, r + nu + periods[o.period] - 1) = 1.0;
    ++row;
  }
  Eigen::VectorXd beta = x.completeOrthogonalDecomposition().solve(y);
  return beta.head(r);
}

inline Eigen::VectorXd outcomes(const stagger::Panel& p) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(p.num_observations()));
  Eigen::Index i = 0;
  for (const auto& o : p.observations()) y(i++) = o.outcome;
  return y;
}

inline Eigen::MatrixXd treated_column(const stagger::Panel& p) {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(p.num_observations()), 1);
  Eigen::Index i = 0;
  for (const auto& o : p.observations()) d(i++, 0) = o.treated ? 1.0 : 0.0;
  return d;
}

// Random small unbalanced panel: up to `max_units` units and `max_periods`
// periods, random switches (some never, some before the window), random holes.
inline stagger::Panel random_panel(std::mt19937_64& rng, int max_units = 8, int max_periods = 10) {
  std::uniform_int_distribution<int> nu(2, max_units);
  std::uniform_int_distribution<int> np(2, max_periods);
  std::uniform_real_distribution<double> y(-5.0, 5.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int units = nu(rng);
  const int periods = np(rng);
  const int t0 = std::uniform_int_distribution<int>(-3, 3)(rng);
  std::uniform_int_distribution<int> sw(t0 - 1, t0 + periods);
  const double hole_rate = u01(rng) * 0.3;
  std::vector<stagger::Observation> rows;
  for (int i = 0; i < units; ++i) {
    const std::string id = "u" + std::to_string(i);
    std::optional<int> s;
    if (u01(rng) < 0.7) s = sw(rng);
    bool any = false;
    for (int t = t0; t < t0 + periods; ++t) {
      if (u01(rng) < hole_rate && !(t == t0 + periods - 1 && !any)) continue;
      rows.push_back({id, t, y(rng), s && t >= *s});
      any = true;
    }
  }
  return stagger::Panel::build(std::move(rows));
}

}  // namespace oracle
