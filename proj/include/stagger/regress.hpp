#pragma once

// Least squares with absorbed two-way fixed effects.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stagger/error.hpp"
#include "stagger/text.hpp"

namespace stagger {

/// Maps arbitrary labels to dense codes 0..G-1 in sorted label order.
template <class T>
std::vector<std::size_t> encode_labels(std::span<const T> labels, std::size_t* num_groups = nullptr) {
  std::map<T, std::size_t> codes;
  for (const auto& l : labels) codes.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [label, code] : codes) code = next++;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(codes.at(l));
  if (num_groups) *num_groups = codes.size();
  return out;
}

struct ProjectionOptions {
  double tolerance = 1e-10;  // max absolute change between sweeps
  int max_sweeps = 10000;
  // Also project out a unit-specific linear trend in `trend` (usually the period).
  bool unit_trends = false;
};

/// Orthogonal projection onto the complement of the unit and period indicator
/// spans (plus unit trends when requested), computed by alternating
/// projections: unit step, then period step, repeated until the largest
/// absolute change in a sweep drops below the tolerance.
class TwoWayProjector {
 public:
  TwoWayProjector(std::span<const std::size_t> unit_codes, std::span<const std::size_t> period_codes,
                  std::span<const double> trend = {}, ProjectionOptions options = {})
      : units_(unit_codes.begin(), unit_codes.end()),
        periods_(period_codes.begin(), period_codes.end()),
        options_(options) {
    if (units_.size() != periods_.size()) {
      throw Error(ErrorCode::kInvalidArgument, "unit and period labels differ in length");
    }
    num_units_ = units_.empty() ? 0 : *std::max_element(units_.begin(), units_.end()) + 1;
    num_periods_ = periods_.empty() ? 0 : *std::max_element(periods_.begin(), periods_.end()) + 1;
    unit_count_.assign(num_units_, 0.0);
    period_count_.assign(num_periods_, 0.0);
    for (std::size_t i = 0; i < units_.size(); ++i) {
      unit_count_[units_[i]] += 1.0;
      period_count_[periods_[i]] += 1.0;
    }
    if (options_.unit_trends) {
      if (trend.size() != units_.size()) {
        throw Error(ErrorCode::kInvalidArgument, "unit trends need one trend value per row");
      }
      std::vector<double> sum(num_units_, 0.0);
      for (std::size_t i = 0; i < units_.size(); ++i) sum[units_[i]] += trend[i];
      trend_mean_.resize(num_units_);
      for (std::size_t g = 0; g < num_units_; ++g) trend_mean_[g] = unit_count_[g] > 0 ? sum[g] / unit_count_[g] : 0.0;
      centered_trend_.resize(units_.size());
      trend_ss_.assign(num_units_, 0.0);
      for (std::size_t i = 0; i < units_.size(); ++i) {
        centered_trend_[i] = trend[i] - trend_mean_[units_[i]];
        trend_ss_[units_[i]] += centered_trend_[i] * centered_trend_[i];
      }
    }
  }

  std::size_t size() const { return units_.size(); }

  /// Columns of the fixed-effect design that the projection removes, net of
  /// the collinearities among them (one shared intercept; with unit trends,
  /// one more because the period effects span the common linear trend).
  int absorbed_dof() const {
    int used_units = 0, used_periods = 0, trend_units = 0;
    for (double c : unit_count_) used_units += c > 0;
    for (double c : period_count_) used_periods += c > 0;
    if (used_units == 0) return 0;
    int dof = used_units + used_periods - 1;
    if (options_.unit_trends) {
      for (double ss : trend_ss_) trend_units += ss > 0;
      if (trend_units > 0) dof += trend_units - 1;
    }
    return dof;
  }

  /// Projects `v` in place; returns the number of sweeps used.
  int apply(Eigen::Ref<Eigen::VectorXd> v) const {
    if (static_cast<std::size_t>(v.size()) != units_.size()) {
      throw Error(ErrorCode::kInvalidArgument, "vector length does not match labels");
    }
    std::vector<double> unit_sum(num_units_), unit_cross(num_units_), period_sum(num_periods_);
    Eigen::VectorXd before;
    double change = 0.0;
    for (int sweep = 1; sweep <= options_.max_sweeps; ++sweep) {
      before = v;
      std::fill(unit_sum.begin(), unit_sum.end(), 0.0);
      std::fill(unit_cross.begin(), unit_cross.end(), 0.0);
      for (std::size_t i = 0; i < units_.size(); ++i) {
        unit_sum[units_[i]] += v[i];
        if (options_.unit_trends) unit_cross[units_[i]] += centered_trend_[i] * v[i];
      }
      for (std::size_t i = 0; i < units_.size(); ++i) {
        const auto g = units_[i];
        v[i] -= unit_sum[g] / unit_count_[g];
        if (options_.unit_trends && trend_ss_[g] > 0) v[i] -= unit_cross[g] / trend_ss_[g] * centered_trend_[i];
      }
      std::fill(period_sum.begin(), period_sum.end(), 0.0);
      for (std::size_t i = 0; i < periods_.size(); ++i) period_sum[periods_[i]] += v[i];
      for (std::size_t i = 0; i < periods_.size(); ++i) v[i] -= period_sum[periods_[i]] / period_count_[periods_[i]];
      change = v.size() == 0 ? 0.0 : (v - before).cwiseAbs().maxCoeff();
      if (change < options_.tolerance) return sweep;
    }
    throw Error(ErrorCode::kNonConvergence,
                "two-way demeaning did not converge; final change " + text::format_double(change));
  }

  Eigen::VectorXd project(std::span<const double> values) const {
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    apply(v);
    return v;
  }

 private:
  std::vector<std::size_t> units_;
  std::vector<std::size_t> periods_;
  ProjectionOptions options_;
  std::size_t num_units_ = 0;
  std::size_t num_periods_ = 0;
  std::vector<double> unit_count_;
  std::vector<double> period_count_;
  std::vector<double> trend_mean_;
  std::vector<double> centered_trend_;
  std::vector<double> trend_ss_;
};

inline Eigen::VectorXd demean_two_way(std::span<const double> values, std::span<const std::size_t> unit_codes,
                                      std::span<const std::size_t> period_codes, ProjectionOptions options = {}) {
  if (values.size() != unit_codes.size()) {
    throw Error(ErrorCode::kInvalidArgument, "labels do not align with values");
  }
  options.unit_trends = false;
  return TwoWayProjector(unit_codes, period_codes, {}, options).project(values);
}

struct DesignMatrix {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> names;
  // Fixed effects already partialled out of x and y.
  int absorbed_dof = 0;
};

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd residuals;
  int dof = 0;
  // (X'X)^-1 and the classical s^2 (X'X)^-1.
  Eigen::MatrixXd bread;
  Eigen::MatrixXd vcov;

  std::size_t index(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return i;
    }
    throw Error(ErrorCode::kInvalidArgument, "no coefficient named '" + std::string(name) + "'");
  }
  double coefficient(std::string_view name) const { return coefficients[static_cast<Eigen::Index>(index(name))]; }
};

inline constexpr double kRankThreshold = 1e-10;

inline FitResult ols(const DesignMatrix& design) {
  const auto n = design.x.rows();
  const auto k = design.x.cols();
  if (design.y.size() != n) throw Error(ErrorCode::kInvalidArgument, "response length does not match design rows");
  if (static_cast<Eigen::Index>(design.names.size()) != k) {
    throw Error(ErrorCode::kInvalidArgument, "column names do not match design columns");
  }
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "design has no columns");
  if (!design.x.allFinite() || !design.y.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "design contains non-finite entries");
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(n, k);
  qr.setThreshold(kRankThreshold);
  qr.compute(design.x);
  const auto rank = qr.rank();
  if (rank < k || qr.maxPivot() == 0.0) {
    std::vector<std::string> dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index j = rank; j < k; ++j) dependent.push_back(design.names[static_cast<std::size_t>(perm[j])]);
    std::sort(dependent.begin(), dependent.end());
    std::string list;
    for (const auto& d : dependent) list += (list.empty() ? "" : ", ") + d;
    throw Error(ErrorCode::kRankDeficient, "design is rank deficient; dependent columns: " + list, dependent);
  }

  FitResult fit;
  fit.names = design.names;
  fit.coefficients = qr.solve(design.y);
  fit.residuals = design.y - design.x * fit.coefficients;
  fit.dof = static_cast<int>(n - k) - design.absorbed_dof;
  if (fit.dof <= 0) throw Error(ErrorCode::kInvalidArgument, "no residual degrees of freedom");

  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd permuted = r_inv * r_inv.transpose();
  const auto& p = qr.colsPermutation();
  fit.bread = p * permuted * p.transpose();
  fit.bread = 0.5 * (fit.bread + fit.bread.transpose());
  const double s2 = fit.residuals.squaredNorm() / fit.dof;
  fit.vcov = s2 * fit.bread;
  return fit;
}

/// Heteroskedasticity-robust sandwich with the n / dof small-sample factor.
inline Eigen::MatrixXd hc1_vcov(const FitResult& fit, const DesignMatrix& design) {
  const auto n = design.x.rows();
  Eigen::MatrixXd meat = design.x.transpose() * fit.residuals.cwiseAbs2().asDiagonal() * design.x;
  Eigen::MatrixXd v = fit.bread * meat * fit.bread * (static_cast<double>(n) / fit.dof);
  return 0.5 * (v + v.transpose());
}

/// Cluster-robust sandwich with the G/(G-1) * (n-1)/dof correction.
inline Eigen::MatrixXd cluster_vcov(const FitResult& fit, const DesignMatrix& design,
                                    std::span<const std::size_t> clusters) {
  const auto n = design.x.rows();
  const auto k = design.x.cols();
  if (static_cast<Eigen::Index>(clusters.size()) != n) {
    throw Error(ErrorCode::kInvalidArgument, "one cluster label per row required");
  }
  const std::size_t groups = clusters.empty() ? 0 : *std::max_element(clusters.begin(), clusters.end()) + 1;
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups), k);
  for (Eigen::Index i = 0; i < n; ++i) {
    scores.row(static_cast<Eigen::Index>(clusters[static_cast<std::size_t>(i)])) +=
        design.x.row(i) * fit.residuals[i];
  }
  // Unused codes are allowed; count only populated clusters.
  std::vector<bool> seen(groups, false);
  for (auto c : clusters) seen[c] = true;
  const auto used = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
  if (used < 2) throw Error(ErrorCode::kSingleCluster, "cluster-robust variance needs at least two clusters");
  const double g = static_cast<double>(used);
  const double factor = g / (g - 1.0) * (static_cast<double>(n) - 1.0) / fit.dof;
  Eigen::MatrixXd meat = scores.transpose() * scores;
  Eigen::MatrixXd v = fit.bread * meat * fit.bread * factor;
  return 0.5 * (v + v.transpose());
}

}  // namespace stagger
