#include "oracles.hpp"
#include "stochcal/experiments.hpp"
#include "stochcal/filtering.hpp"

#include <gtest/gtest.h>

using namespace stochcal;

namespace {

struct ScalarWalk {
  static constexpr int kStateDim = 1;
  using State = Eigen::Matrix<double, 1, 1>;
  State propagate(const State& x, double, double) const { return x; }
  Eigen::Matrix<double, 1, 1> state_jacobian(const State&, double, double) const { return State::Ones(); }
  Eigen::Matrix<double, 1, 1> noise_jacobian(const State&, double, double) const { return State::Ones(); }
};

const SyntheticDataset& case1() {
  static const SyntheticDataset ds = generate_dataset(TruthConfig::for_case(1, 3));
  return ds;
}

ObservationSeries slice(const ObservationSeries& s, std::size_t begin, std::size_t end) {
  ObservationSeries out;
  out.noise_std = s.noise_std;
  out.times.assign(s.times.begin() + static_cast<long>(begin), s.times.begin() + static_cast<long>(end));
  out.values.assign(s.values.begin() + static_cast<long>(begin), s.values.begin() + static_cast<long>(end));
  return out;
}

}  // namespace

TEST(Forecast, ZeroCovarianceGivesProcessNoise) {
  const CandidateModel m2(ModelId::M2);
  const auto p = m2.resolve(Vector{{80.0, 0.1, 50.0}});
  const OscillatorDynamics<2, 1> dyn(m2.structure(), p);
  GaussianBelief<2> b{{50.0, 0.0}, Eigen::Matrix2d::Zero()};
  const double dt = 0.004;
  const auto f = forecast(b, dyn, 0.0, dt);
  const auto bb = dyn.noise_jacobian(b.mean, 0.0, dt);
  EXPECT_TRUE(f.cov.isApprox(bb * bb.transpose(), 1e-14));
  EXPECT_NEAR(f.cov(1, 1), dt * 2500.0, 1e-12);
}

TEST(Forecast, ScalarVarianceAddition) {
  const ScalarWalk walk;
  GaussianBelief<1> b;
  b.mean << 0.0;
  b.cov << 1.0;
  const auto f = forecast(b, walk, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(f.mean[0], 0.0);
  EXPECT_DOUBLE_EQ(f.cov(0, 0), 2.0);
}

TEST(Forecast, StiffnessVarianceGrowsByDiffusion) {
  const CandidateModel m4(ModelId::M4a);
  const auto p = m4.resolve(Vector{{0.1, 50.0}});
  const OscillatorDynamics<3, 2> dyn(m4.structure(), p);
  GaussianBelief<3> b{{50.0, 0.0, 80.0}, Eigen::Matrix3d::Identity() * 4.0};
  const double dt = 0.001;
  const auto f = forecast(b, dyn, 0.0, dt);
  EXPECT_NEAR(f.cov(2, 2), 4.0 + dt * 1.0, 1e-12);
}

TEST(Forecast, NonFiniteBeliefIsReported) {
  const ScalarWalk walk;
  GaussianBelief<1> b;
  b.mean << std::numeric_limits<double>::infinity();
  b.cov << 1.0;
  EXPECT_THROW(forecast(b, walk, 0.0, 1.0), NumericalError);
}

TEST(Analyze, ScalarGain) {
  GaussianBelief<1> b;
  b.mean << 0.0;
  b.cov << 1.0;
  const auto r = analyze<1>(b, Eigen::Matrix<double, 1, 1>::Ones(), 2.0, 1.0);
  EXPECT_DOUBLE_EQ(r.belief.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(r.belief.cov(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(r.residual, 2.0);
  EXPECT_DOUBLE_EQ(r.variance, 2.0);
}

TEST(Analyze, StandardNormalDensityAtZero) {
  GaussianBelief<1> b;
  b.mean << 0.0;
  b.cov << 0.0;
  const auto r = analyze<1>(b, Eigen::Matrix<double, 1, 1>::Ones(), 0.0, 1.0);
  EXPECT_NEAR(r.log_lik_increment, -0.9189385332046727, 1e-15);
}

TEST(Analyze, RejectsNonPositiveNoise) {
  GaussianBelief<1> b;
  b.mean << 0.0;
  b.cov << 1.0;
  EXPECT_THROW(analyze<1>(b, Eigen::Matrix<double, 1, 1>::Ones(), 0.0, 0.0), ConfigError);
}

TEST(Analyze, ObservedVarianceNeverIncreases) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Matrix3d l = Eigen::Matrix3d::Random();
    GaussianBelief<3> b{Eigen::Vector3d::Random() * 50.0, l * l.transpose() * 100.0};
    Eigen::RowVector3d c(1.0, 0.0, 0.0);
    const auto r = analyze<3>(b, c, 50.0 * standard_normal(rng), 100.0);
    EXPECT_LE(r.belief.cov(0, 0), b.cov(0, 0) + 1e-12);
    EXPECT_LT((r.belief.cov - r.belief.cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(RunFilter, ZeroObservationsGiveZeroLikelihood) {
  const CandidateModel m2(ModelId::M2);
  ObservationSeries empty;
  empty.noise_std = 10.0;
  FilterOptions o;
  o.record_beliefs = true;
  o.t_end = 0.01;
  const auto r = run_filter(m2, Vector{{80.0, 0.1, 50.0}}, empty, 0.001, o);
  EXPECT_EQ(r.log_lik, 0.0);
  EXPECT_EQ(r.beliefs.size(), 11u);
  for (const auto& b : r.beliefs) EXPECT_FALSE(b.analysis.has_value());
}

TEST(RunFilter, ConstantStiffnessMatchesDirectKalmanFilter) {
  const auto& data = case1().observations;
  const CandidateModel m2(ModelId::M2);
  const auto r = run_filter(m2, Vector{{80.0, 0.1, 50.0}}, data, 0.001);
  const auto ref = oracle::kalman_filter(data.values, data.noise_std, 0.001, 40, {});
  EXPECT_NEAR(r.log_lik, ref.log_lik, 1e-9);
  EXPECT_NEAR(r.final_belief.mean[0], ref.u, 1e-9);
  EXPECT_NEAR(r.final_belief.mean[1], ref.v, 1e-9);
}

TEST(RunFilter, StepStiffnessMatchesDirectKalmanFilter) {
  const auto& data = case1().observations;
  const CandidateModel m1(ModelId::M1);
  const auto r = run_filter(m1, Vector{{70.0, 10.0, 10.0, 0.1, 50.0}}, data, 0.004);
  oracle::KfParams p;
  p.stiffness = [](double t) { return t < 10.0 ? 80.0 : 70.0; };
  const auto ref = oracle::kalman_filter(data.values, data.noise_std, 0.004, 10, p);
  EXPECT_NEAR(r.log_lik, ref.log_lik, 1e-9);
  EXPECT_NEAR(r.final_belief.mean[0], ref.u, 1e-9);
}

TEST(RunFilter, InnovationsAreWhiteAtTheGeneratingParameters) {
  const auto& data = case1().observations;
  FilterOptions o;
  o.record_innovations = true;
  const auto r = run_filter(CandidateModel(ModelId::M2), Vector{{80.0, 0.1, 50.0}}, data, 0.001, o);
  ASSERT_TRUE(std::isfinite(r.log_lik));
  ASSERT_EQ(r.innovations.size(), data.size() - 1);
  // Only the pre-damage half: afterwards K=80 is no longer the generating value.
  std::vector<double> z;
  for (const auto& i : r.innovations)
    if (i.t < 10.0) z.push_back(i.residual / std::sqrt(i.variance));
  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= static_cast<double>(z.size());
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    den += (z[k] - mean) * (z[k] - mean);
    if (k > 0) num += (z[k] - mean) * (z[k - 1] - mean);
  }
  EXPECT_LT(std::abs(num / den), 0.1);
}

TEST(RunFilter, CovarianceStaysSymmetric) {
  FilterOptions o;
  o.record_beliefs = true;
  const auto r = run_filter(CandidateModel(ModelId::M6), Vector{{80.0, 0.1, 50.0, 5.0}}, case1().observations, 0.002, o);
  ASSERT_FALSE(r.beliefs.empty());
  for (const auto& gb : r.beliefs) {
    const auto& p = gb.filtered().cov;
    ASSERT_LT((p - p.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(RunFilter, LikelihoodIsAdditiveAcrossASplit) {
  const auto& data = case1().observations;
  const CandidateModel m5(ModelId::M5);
  const auto p = m5.resolve(Vector{{0.1, 50.0, 3.0}});
  const double dt = 0.002;
  const auto whole = run_filter(m5, p, data, dt);

  const std::size_t split = 250;
  const auto first = slice(data, 0, split + 1);
  const auto second = slice(data, split, data.size());
  const OscillatorDynamics<3, 2> dyn(m5.structure(), p);
  const auto init = m5.initial_belief(p, data.values[0], data.noise_var()).cast<3>();
  const auto a = filter_from(dyn, init, data.times[0], first, 1, dt);
  const auto b = filter_from(dyn, a.final_belief.cast<3>(), a.final_time, second, 1, dt);
  EXPECT_NEAR(a.final_time, data.times[split], 1e-12);
  EXPECT_NEAR(a.log_lik + b.log_lik, whole.log_lik, 1e-10);
}

TEST(RunFilter, GridRefinementConverges) {
  // Data come from a 1 ms simulation, so start refining there.
  const auto& data = case1().observations;
  const CandidateModel m2(ModelId::M2);
  const Vector theta{{75.0, 0.1, 50.0}};
  std::vector<double> ll;
  for (double dt : {0.001, 0.0005, 0.00025, 0.000125}) ll.push_back(log_likelihood(m2, theta, data, dt));
  const double d1 = std::abs(ll[1] - ll[0]), d2 = std::abs(ll[2] - ll[1]), d3 = std::abs(ll[3] - ll[2]);
  EXPECT_GT(d1, d2);
  EXPECT_GE(d2 / d3, 1.5);
}

TEST(RunFilter, RejectsGridThatMissesObservations) {
  EXPECT_THROW(run_filter(CandidateModel(ModelId::M2), Vector{{80.0, 0.1, 50.0}}, case1().observations, 0.003),
               ConfigError);
}

TEST(RunFilter, DivergenceBecomesNegativeInfinity) {
  const CandidateModel m2(ModelId::M2);
  const Vector wild{{1e5, 0.0, 1000.0}};
  ObservationSeries none;
  none.noise_std = 10.0;
  FilterOptions o;
  o.t_end = 40.0;
  const auto r = run_filter(m2, wild, none, 0.04, o);
  EXPECT_TRUE(r.diverged());
  EXPECT_EQ(r.log_lik, kNegInf);
  EXPECT_NE(r.divergence->find("grid index"), std::string::npos);
  EXPECT_EQ(log_likelihood(CandidateModel(ModelId::M3), Vector{{80.0, 0.1, 50.0, 0.0}}, case1().observations, 0.001),
            kNegInf);
}

TEST(Bands, HalfWidthIsThreeStandardDeviations) {
  const CandidateModel m5(ModelId::M5);
  const Vector theta{{0.1, 50.0, 3.0}};
  const auto& data = case1().observations;
  const auto band = trajectory_at(m5, theta, data, 0.004, "K");
  FilterOptions o;
  o.record_beliefs = true;
  const auto r = run_filter(m5, theta, data, 0.004, o);
  ASSERT_EQ(band.size(), r.beliefs.size());
  for (std::size_t k = 0; k < band.size(); k += 97) {
    const auto& b = r.beliefs[k].filtered();
    EXPECT_DOUBLE_EQ(band[k].mean, b.mean[2]);
    EXPECT_NEAR(band[k].hi3 - band[k].mean, 3.0 * std::sqrt(b.cov(2, 2)), 1e-12);
    EXPECT_NEAR(band[k].mean - band[k].lo3, 3.0 * std::sqrt(b.cov(2, 2)), 1e-12);
  }
  EXPECT_DOUBLE_EQ(band.back().t, data.times.back());
}

TEST(Bands, FrozenStiffnessBandIsConstant) {
  InitialBeliefSettings init;
  init.stiffness_std = 1e-12;
  const CandidateModel m5(ModelId::M5, std::nullopt, init);
  const auto band = trajectory_at(m5, Vector{{0.1, 50.0, 0.0}}, case1().observations, 0.004, "K");
  for (const auto& row : band) {
    ASSERT_NEAR(row.mean, 80.0, 1e-6);
    ASSERT_NEAR(row.hi3 - row.lo3, 0.0, 1e-6);
  }
}

TEST(Bands, UnknownSlotAndDefaults) {
  const CandidateModel m2(ModelId::M2);
  EXPECT_THROW(trajectory_at(m2, Vector{{80.0, 0.1, 50.0}}, case1().observations, 0.004, "K"), ConfigError);
  EXPECT_EQ(default_band_slot(m2), "u");
  EXPECT_EQ(default_band_slot(CandidateModel(ModelId::M4b)), "K");
  const auto band = trajectory_at(m2, Vector{{80.0, 0.1, 50.0}}, case1().observations, 0.004, "v", 20.5);
  EXPECT_NEAR(band.back().t, 20.5, 1e-9);
}
