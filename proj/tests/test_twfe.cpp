#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "stagger/twfe.hpp"

using namespace stagger;

namespace {

// Random balanced-ish panel with never-treated units and staggered switches.
Panel staggered_panel(std::mt19937_64& rng, int units, int periods) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u01;
  std::vector<Observation> rows;
  for (int i = 0; i < units; ++i) {
    std::optional<int> s;
    if (i % 3 != 0) s = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(periods - 1));
    for (int t = 1; t <= periods; ++t) {
      if (u01(rng) < 0.1 && t > 1) continue;
      rows.push_back({"u" + std::to_string(i), t, z(rng), s && t >= *s});
    }
  }
  return Panel::build(std::move(rows));
}

// Full-dummy cluster covariance of the first coefficient.
double dense_cluster_se(const Panel& p, const Eigen::MatrixXd& reg, const Eigen::VectorXd& y, Eigen::Index j) {
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
  const auto n = y.size();
  const auto r = reg.cols();
  const auto nu = static_cast<Eigen::Index>(units.size());
  const auto np = static_cast<Eigen::Index>(periods.size());
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, r + nu + np - 1);
  z.leftCols(r) = reg;
  std::vector<int> cl;
  Eigen::Index row = 0;
  for (const auto& o : p.observations()) {
    z(row, r + units[o.unit]) = 1.0;
    if (periods[o.period] > 0) z(row, r + nu + periods[o.period] - 1) = 1.0;
    cl.push_back(units[o.unit]);
    ++row;
  }
  const Eigen::MatrixXd inv = (z.transpose() * z).inverse();
  const Eigen::VectorXd b = inv * z.transpose() * y;
  const Eigen::VectorXd e = y - z * b;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(z.cols(), z.cols());
  for (int g = 0; g < nu; ++g) {
    Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(z.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      if (cl[static_cast<std::size_t>(i)] == g) s += e(i) * z.row(i);
    }
    meat += s.transpose() * s;
  }
  const double factor = double(nu) / double(nu - 1) * double(n - 1) / double(n - z.cols());
  const Eigen::MatrixXd v = inv * meat * inv * factor;
  return std::sqrt(v(j, j));
}

}  // namespace

TEST(Twfe, StaticMatchesDenseDummyOls) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 30; ++k) {
    const auto p = staggered_panel(rng, 6 + k % 10, 5 + k % 6);
    const auto y = oracle::outcomes(p);
    const auto d = oracle::treated_column(p);
    const auto est = twfe_static(p);
    EXPECT_NEAR(est.coefficient, oracle::dense_twfe(p, d, y)(0), 1e-8);
    EXPECT_NEAR(est.se, dense_cluster_se(p, d, y, 0), 1e-8);
  }
}

TEST(Twfe, EventStudyMatchesDenseDummyOls) {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 20; ++k) {
    const auto p = staggered_panel(rng, 12, 8);
    TwfeSpec spec;
    spec.leads = 2;
    spec.lags = 2;
    spec.bin_endpoints = true;
    const auto s = twfe_event_study(p, spec);
    std::vector<int> cols;
    for (int e = -2; e <= 2; ++e) {
      if (e != -1 && s.at(e).identified) cols.push_back(e);
    }
    Eigen::MatrixXd reg = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.num_observations()),
                                                static_cast<Eigen::Index>(cols.size()));
    Eigen::Index row = 0;
    for (const auto& o : p.observations()) {
      const auto sw = p.switch_period(*p.unit_index(o.unit));
      if (sw) {
        const int e = std::clamp(o.period - *sw, -2, 2);
        for (std::size_t j = 0; j < cols.size(); ++j) {
          if (cols[j] == e) reg(row, static_cast<Eigen::Index>(j)) = 1.0;
        }
      }
      ++row;
    }
    const auto b = oracle::dense_twfe(p, reg, oracle::outcomes(p));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      EXPECT_NEAR(s.estimate_at(cols[j]), b(static_cast<Eigen::Index>(j)), 1e-8);
    }
  }
}

TEST(Twfe, WeightsDecomposeStaticEstimate) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z;
  for (int k = 0; k < 30; ++k) {
    const auto base = staggered_panel(rng, 10, 7);
    std::map<std::pair<std::string, int>, double> tau;
    std::vector<double> y;
    std::map<std::string, double> a;
    std::map<int, double> l;
    for (const auto& o : base.observations()) {
      if (!a.count(o.unit)) a[o.unit] = z(rng);
      if (!l.count(o.period)) l[o.period] = z(rng);
      double v = a[o.unit] + l[o.period];
      if (o.treated) v += (tau[{o.unit, o.period}] = z(rng));
      y.push_back(v);
    }
    const auto p = base.with_outcomes(y);
    const auto w = twfe_weights(p);
    EXPECT_NEAR(w.sum, 1.0, 1e-8);
    const double beta = twfe_static(p).coefficient;
    EXPECT_NEAR(w.decompose([&](const std::string& u, int t) { return tau.at({u, t}); }), beta, 1e-8);
  }
}

TEST(Twfe, EarlyLateCohortsGetNegativeWeights) {
  std::vector<Observation> rows;
  for (int t = 1; t <= 6; ++t) {
    rows.push_back({"early", t, 0.0, t >= 2});
    rows.push_back({"late", t, 0.0, t >= 5});
    rows.push_back({"never", t, 0.0, false});
  }
  const auto w = twfe_weights(Panel::build(rows));
  EXPECT_GT(w.num_negative, 0u);
  EXPECT_LT(w.min_weight, 0.0);
  EXPECT_NEAR(w.sum, 1.0, 1e-8);
}

TEST(Twfe, UnderidentifiedWithoutComparisonUnits) {
  std::vector<Observation> rows;
  for (int i = 0; i < 4; ++i) {
    for (int t = 1; t <= 6; ++t) rows.push_back({"u" + std::to_string(i), t, double(i + t), t >= 4});
  }
  TwfeSpec spec;
  spec.leads = 3;
  spec.lags = 2;
  try {
    twfe_event_study(Panel::build(rows), spec);
    FAIL() << "expected Underidentified";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnderidentified);
    EXPECT_FALSE(e.detail().empty());
  }
  EXPECT_THROW(twfe_static(Panel::build(rows)), Error);
}

TEST(Twfe, FormatsEstimateWithStandardError) {
  EXPECT_EQ(format_estimate(0.1642, 0.0491), "0.164 (0.049)");
  EXPECT_EQ(format_estimate(-0.06, 0.02, 2), "-0.06 (0.02)");
}

TEST(Twfe, OmittedLeadIsReference) {
  std::mt19937_64 rng(3);
  const auto p = staggered_panel(rng, 15, 8);
  TwfeSpec spec;
  spec.leads = 3;
  spec.lags = 2;
  spec.omitted_lead = -2;
  const auto s = twfe_event_study(p, spec);
  EXPECT_TRUE(s.at(-2).reference);
  EXPECT_EQ(s.at(-2).estimate, 0.0);
  EXPECT_TRUE(s.at(-1).identified);
}
