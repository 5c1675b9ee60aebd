#pragma once

// Unit-level (cluster) bootstrap for event-study series and a joint Wald
// test of the placebo horizons.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "stagger/error.hpp"
#include "stagger/panel.hpp"
#include "stagger/random.hpp"
#include "stagger/robust.hpp"
#include "stagger/series.hpp"
#include "stagger/stats.hpp"

namespace stagger {

struct BootstrapConfig {
  std::size_t replications = 999;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  std::size_t threads = 0;  // 0: hardware concurrency
};

/// Re-estimates a series for one bootstrap draw. The argument holds, per unit
/// index, how many copies of the unit the draw contains.
using SeriesEstimator = std::function<EstimateSeries(std::span<const double> unit_multiplicity)>;

struct BootstrapResult {
  std::vector<int> event_times;
  std::vector<std::vector<double>> replicates;  // [replication][event time], NaN when unidentified
  std::vector<double> se;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  std::vector<std::size_t> used;
  std::vector<std::size_t> excluded;

  std::ptrdiff_t column(int event_time) const {
    auto it = std::find(event_times.begin(), event_times.end(), event_time);
    return it == event_times.end() ? -1 : it - event_times.begin();
  }
};

/// Draw `rep` of a cluster bootstrap: n units sampled with replacement,
/// returned as per-unit copy counts. Depends only on (seed, rep).
inline std::vector<double> draw_multiplicity(std::size_t n_units, std::uint64_t seed, std::uint64_t rep) {
  StreamRng rng(seed, rep);
  std::vector<double> m(n_units, 0.0);
  for (std::size_t i = 0; i < n_units; ++i) m[rng.below(n_units)] += 1.0;
  return m;
}

/// Materialises a draw as a panel in which unit copies get ids "<id>#<k>".
inline Panel resample_panel(const Panel& panel, std::span<const double> multiplicity) {
  std::vector<Observation> rows;
  Panel::ExtraColumns extra;
  for (const auto& [name, values] : panel.extra_columns()) extra.emplace_back(name, std::vector<double>{});
  for (std::size_t u = 0; u < panel.num_units(); ++u) {
    const auto copies = static_cast<int>(multiplicity[u]);
    for (int k = 0; k < copies; ++k) {
      for (std::size_t i = panel.unit_row_begin(u); i < panel.unit_row_begin(u) + panel.unit_observations(u).size();
           ++i) {
        Observation o = panel.observations()[i];
        o.unit += "#" + std::to_string(k);
        rows.push_back(std::move(o));
        for (std::size_t c = 0; c < extra.size(); ++c) extra[c].second.push_back(panel.extra_columns()[c].second[i]);
      }
    }
  }
  Panel out = Panel::build(std::move(rows), std::move(extra));
  // Carry nominal switches (they may precede the window after a shift).
  std::vector<std::optional<int>> sw(out.num_units());
  for (std::size_t v = 0; v < out.num_units(); ++v) {
    const auto& id = out.unit_id(v);
    sw[v] = panel.switch_period(*panel.unit_index(id.substr(0, id.rfind('#'))));
  }
  return out.with_switches(sw);
}

/// Wraps a panel-level estimator so it can be bootstrapped by resampling
/// whole panels. Slower than a native multiplicity-aware estimator.
inline SeriesEstimator materializing_estimator(const Panel& panel, std::function<EstimateSeries(const Panel&)> fn) {
  return [&panel, fn = std::move(fn)](std::span<const double> m) {
    if (m.empty()) return fn(panel);
    return fn(resample_panel(panel, m));
  };
}

inline BootstrapResult bootstrap_series(const SeriesEstimator& estimate, std::size_t n_units,
                                        const BootstrapConfig& config) {
  if (config.replications < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one replication");
  const double level = config.ci_level;
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::kInvalidArgument, "confidence level must lie in (0, 1)");

  const auto point = estimate({});
  BootstrapResult result;
  for (const auto& e : point.entries) {
    if (!e.reference) result.event_times.push_back(e.event_time);
  }
  const std::size_t reps = config.replications;
  result.replicates.assign(reps, std::vector<double>(result.event_times.size(), kNaN));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= reps) return;
      try {
        const auto m = draw_multiplicity(n_units, config.seed, r);
        const auto s = estimate(m);
        for (std::size_t j = 0; j < result.event_times.size(); ++j) {
          if (const auto* e = s.find(result.event_times[j]); e && e->identified) result.replicates[r][j] = e->estimate;
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(reps);
        return;
      }
    }
  };
  std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, reps);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  const double alpha = 1.0 - level;
  for (std::size_t j = 0; j < result.event_times.size(); ++j) {
    std::vector<double> draws;
    for (std::size_t r = 0; r < reps; ++r) {
      if (!std::isnan(result.replicates[r][j])) draws.push_back(result.replicates[r][j]);
    }
    result.used.push_back(draws.size());
    result.excluded.push_back(reps - draws.size());
    std::sort(draws.begin(), draws.end());
    result.se.push_back(stats::stddev(draws));
    if (draws.size() >= 2) {
      result.ci_low.push_back(stats::quantile_sorted(draws, alpha / 2.0));
      result.ci_high.push_back(stats::quantile_sorted(draws, 1.0 - alpha / 2.0));
    } else {
      result.ci_low.push_back(kNaN);
      result.ci_high.push_back(kNaN);
    }
  }
  return result;
}

inline BootstrapResult bootstrap_series(const SeriesEstimator& estimate, const Panel& panel,
                                        const BootstrapConfig& config) {
  return bootstrap_series(estimate, panel.num_units(), config);
}

/// Copies bootstrap SEs and percentile CIs onto the point series; normal
/// intervals use the bootstrap SE. Entries with fewer than two usable draws
/// keep NaN (unavailable).
inline void attach_bootstrap(EstimateSeries& series, const BootstrapResult& boot, double level) {
  const double z = stats::normal_critical(level);
  for (auto& e : series.entries) {
    if (e.reference) continue;
    const auto j = boot.column(e.event_time);
    if (j < 0) continue;
    const auto k = static_cast<std::size_t>(j);
    e.replications_used = boot.used[k];
    e.replications_excluded = boot.excluded[k];
    if (!e.identified) continue;
    e.se = boot.se[k];
    e.ci_low = boot.ci_low[k];
    e.ci_high = boot.ci_high[k];
    if (!std::isnan(e.se)) {
      e.normal_ci_low = e.estimate - z * e.se;
      e.normal_ci_high = e.estimate + z * e.se;
    }
  }
}

/// Robust event study with bootstrap inference attached. `config == nullptr`
/// skips inference.
inline EstimateSeries robust_event_study(const Panel& panel, const CohortMap& map, RobustOptions options,
                                         const BootstrapConfig* config, BootstrapResult* boot_out = nullptr) {
  const RobustEstimator estimator(panel, map, options);
  EstimateSeries series = estimator.event_study();
  if (!config) return series;
  const SeriesEstimator fn = [&](std::span<const double> m) { return estimator.event_study(m); };
  auto boot = bootstrap_series(fn, panel, *config);
  attach_bootstrap(series, boot, config->ci_level);
  if (boot_out) *boot_out = std::move(boot);
  return series;
}

struct WaldResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  std::vector<int> horizons;  // event times entering the statistic
  std::vector<int> dropped;   // event times removed to restore invertibility
  std::size_t replications = 0;
};

namespace detail {

inline double condition_number(const Eigen::MatrixXd& s) {
  if (s.rows() == 0) return 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  if (!(hi > 0.0)) return std::numeric_limits<double>::infinity();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

inline Eigen::MatrixXd select(const Eigen::MatrixXd& s, const std::vector<std::size_t>& keep) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t a = 0; a < keep.size(); ++a) {
    for (std::size_t b = 0; b < keep.size(); ++b) {
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          s(static_cast<Eigen::Index>(keep[a]), static_cast<Eigen::Index>(keep[b]));
    }
  }
  return out;
}

}  // namespace detail

inline constexpr double kMaxWaldCondition = 1e12;

/// Joint test that all placebo estimates are zero, using the bootstrap
/// covariance of the placebo vector and a chi-square reference. Replications
/// with any unidentified horizon are discarded. While the covariance is
/// numerically singular, the horizon whose removal leaves the best-conditioned
/// matrix is dropped.
inline WaldResult pretrend_wald(std::span<const int> event_times, std::span<const double> estimates,
                                const std::vector<std::vector<double>>& replicates) {
  const std::size_t h = estimates.size();
  if (h == 0 || event_times.size() != h) throw Error(ErrorCode::kInvalidArgument, "need at least one placebo horizon");
  std::vector<const std::vector<double>*> complete;
  for (const auto& r : replicates) {
    if (r.size() != h) throw Error(ErrorCode::kInvalidArgument, "replicate width does not match horizons");
    if (std::none_of(r.begin(), r.end(), [](double v) { return std::isnan(v); })) complete.push_back(&r);
  }
  if (complete.size() < 30) throw Error(ErrorCode::kInvalidArgument, "need at least 30 complete replications");

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h));
  for (const auto* r : complete) mean += Eigen::Map<const Eigen::VectorXd>(r->data(), static_cast<Eigen::Index>(h));
  mean /= static_cast<double>(complete.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(h));
  for (const auto* r : complete) {
    const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(r->data(), static_cast<Eigen::Index>(h)) - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(complete.size() - 1);

  std::vector<std::size_t> keep(h);
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  WaldResult out;
  out.replications = complete.size();
  while (!keep.empty() && detail::condition_number(detail::select(cov, keep)) > kMaxWaldCondition) {
    std::size_t best = 0;
    double best_cond = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < keep.size(); ++i) {
      auto trial = keep;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(i));
      const double c = detail::condition_number(detail::select(cov, trial));
      if (c < best_cond) {
        best_cond = c;
        best = i;
      }
    }
    out.dropped.push_back(event_times[keep[best]]);
    keep.erase(keep.begin() + static_cast<std::ptrdiff_t>(best));
  }
  if (keep.empty()) throw Error(ErrorCode::kSingularCovariance, "placebo covariance is singular for every horizon");

  const Eigen::MatrixXd s = detail::select(cov, keep);
  Eigen::VectorXd b(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    b[static_cast<Eigen::Index>(i)] = estimates[keep[i]];
    out.horizons.push_back(event_times[keep[i]]);
  }
  out.statistic = b.dot(s.ldlt().solve(b));
  out.dof = static_cast<int>(keep.size());
  out.p_value = stats::chi_square_sf(out.statistic, out.dof);
  return out;
}

/// Wald test over the identified placebo entries of a bootstrapped series.
inline WaldResult pretrend_wald(const EstimateSeries& series, const BootstrapResult& boot) {
  std::vector<int> times;
  std::vector<double> est;
  std::vector<std::size_t> cols;
  for (const auto& e : series.entries) {
    if (e.event_time <= -2 && e.identified && !e.reference) {
      const auto j = boot.column(e.event_time);
      if (j < 0) continue;
      times.push_back(e.event_time);
      est.push_back(e.estimate);
      cols.push_back(static_cast<std::size_t>(j));
    }
  }
  std::vector<std::vector<double>> reps;
  reps.reserve(boot.replicates.size());
  for (const auto& r : boot.replicates) {
    std::vector<double> row;
    for (auto j : cols) row.push_back(r[j]);
    reps.push_back(std::move(row));
  }
  // Noiseless panels leave only rounding error in the placebo draws.
  double scale = 0.0;
  for (const auto& e : series.entries) {
    if (e.identified) scale = std::max(scale, std::abs(e.estimate));
  }
  double spread = 0.0;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (std::isfinite(boot.se[cols[i]])) spread = std::max(spread, boot.se[cols[i]]);
  }
  if (!cols.empty() && scale > 0.0 && spread <= 1e-10 * scale) {
    throw Error(ErrorCode::kSingularCovariance, "placebo bootstrap spread is at rounding level");
  }
  return pretrend_wald(times, est, reps);
}

}  // namespace stagger
