#include "oracles.hpp"
#include "reference_tables.hpp"
#include "stochcal/selection.hpp"
#include "stochcal/tmcmc.hpp"

#include <gtest/gtest.h>

using namespace stochcal;

namespace {

struct MeanProblem {
  std::vector<double> y;
  double s = 5.0;
  double lo = -50.0, hi = 50.0;
  double shift = 0.0;

  explicit MeanProblem(std::uint64_t seed) {
    Rng rng = substream(seed, {7});
    for (int i = 0; i < 20; ++i) y.push_back(8.0 + s * standard_normal(rng));
  }
  double log_prior(const Vector& x) const { return x[0] >= lo && x[0] <= hi ? -std::log(hi - lo) : kNegInf; }
  double log_lik(const Vector& x) const { return oracle::gaussian_log_lik(y, s, x[0]) + shift; }
};

struct Estimates {
  double stagewise;
  double cj;
  EvidenceReport report;
};

Estimates estimate(const MeanProblem& prob, std::uint64_t seed) {
  const auto lp = [&](const Vector& x) { return prob.log_prior(x); };
  const auto ll = [&](const Vector& x) { return prob.log_lik(x); };
  const auto draw = [&](Rng& r) { return Vector::Constant(1, prob.lo + (prob.hi - prob.lo) * uniform01(r)); };
  TmcmcConfig cfg;
  cfg.n_samples = 2000;
  cfg.seed = seed;
  const auto run = run_tmcmc(lp, ll, draw, cfg);
  const double sw = log_evidence_stagewise(run);
  const auto best = max_log_posterior_index(run.posterior_samples(), run.posterior_log_liks(), lp);
  Rng rng = substream(seed, {1234});
  const double cj = log_evidence_chib_jeliazkov(lp, ll, run.posterior_samples(), run.posterior_log_liks(),
                                                run.posterior_samples().row(best).transpose(),
                                                run.stages.back().proposal_cov, rng);
  return {sw, cj, occam_decompose(run.posterior_log_liks(), sw)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> softmax_pct(const std::vector<double>& ev) {
  std::vector<double> p = model_probabilities(ev);
  for (auto& x : p) x *= 100.0;
  return p;
}

void check_subset(const std::vector<reference::Row>& rows, double reference::Row::*column, double tol) {
  std::vector<double> ev, expected;
  for (const auto& r : rows) {
    if (std::isnan(r.*column)) continue;
    ev.push_back(r.log_evidence);
    expected.push_back(r.*column);
  }
  ASSERT_GE(ev.size(), 2u);
  const auto got = softmax_pct(ev);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], tol) << "entry " << i;
}

}  // namespace

TEST(Evidence, StagewiseMatchesConjugateValue) {
  std::vector<double> err, gap;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const MeanProblem prob(seed);
    const auto e = estimate(prob, 100 + seed);
    err.push_back(std::abs(e.stagewise - oracle::gaussian_mean_log_evidence(prob.y, prob.s, prob.lo, prob.hi)));
    gap.push_back(std::abs(e.cj - e.stagewise));
  }
  EXPECT_LT(median(err), 0.15);
  EXPECT_LT(median(gap), 0.5);
}

TEST(Evidence, OccamSplitMatchesConjugateValues) {
  // With the prior box far wider than the posterior, the expected
  // log-likelihood is its value at the sample mean minus one half.
  const MeanProblem prob(3);
  const auto e = estimate(prob, 42);
  double ybar = 0.0;
  for (double v : prob.y) ybar += v;
  ybar /= static_cast<double>(prob.y.size());
  const double fit = oracle::gaussian_log_lik(prob.y, prob.s, ybar) - 0.5;
  const double ev = oracle::gaussian_mean_log_evidence(prob.y, prob.s, prob.lo, prob.hi);
  EXPECT_NEAR(e.report.avg_data_fit, fit, 0.15);
  EXPECT_NEAR(e.report.info_gain, fit - ev, 0.3);
  EXPECT_NEAR(e.report.avg_data_fit - e.report.info_gain, e.report.log_evidence, 1e-12);
}

TEST(Evidence, LikelihoodOffsetShiftsBothEstimators) {
  MeanProblem prob(4);
  const auto a = estimate(prob, 5);
  prob.shift = 1000.0;
  const auto b = estimate(prob, 5);
  EXPECT_NEAR(b.stagewise - a.stagewise, 1000.0, 1e-8);
  EXPECT_NEAR(b.cj - a.cj, 1000.0, 1e-8);
}

TEST(Evidence, StagewiseSumsStageMeans) {
  TmcmcRun run;
  EXPECT_THROW(log_evidence_stagewise(run), NumericalError);
  run.prior_log_liks = Vector{{0.0, std::log(3.0)}};
  Stage s1, s2;
  s1.p = 0.5;
  s1.log_liks = Vector{{std::log(4.0), std::log(4.0)}};
  s2.p = 1.0;
  run.stages = {s1, s2};
  EXPECT_NEAR(log_evidence_stagewise(run), std::log((1.0 + std::sqrt(3.0)) / 2.0) + std::log(2.0), 1e-14);
}

TEST(Evidence, ChibJeliazkovRejectsDegenerateKernel) {
  const auto lp = [](const Vector&) { return 0.0; };
  const auto ll = [](const Vector&) { return 0.0; };
  Matrix post = Matrix::Zero(10, 2);
  Rng rng(1);
  EXPECT_THROW(log_evidence_chib_jeliazkov(lp, ll, post, Vector::Zero(10), Vector::Zero(2), Matrix::Zero(2, 2), rng),
               DegenerateCovariance);
  Matrix bad(2, 2);
  bad << 1.0, 0.0, 0.0, 1e-16;
  EXPECT_THROW(log_evidence_chib_jeliazkov(lp, ll, post, Vector::Zero(10), Vector::Zero(2), bad, rng),
               DegenerateCovariance);
}

TEST(Occam, FlatLikelihoodHasNoInformationGain) {
  const std::vector<double> lls(100, -3.0);
  const auto r = occam_decompose(std::span<const double>(lls), -3.0);
  EXPECT_EQ(r.info_gain, 0.0);
  EXPECT_EQ(r.avg_data_fit, -3.0);
  EXPECT_THROW(occam_decompose(std::span<const double>(), 0.0), ConfigError);
}

TEST(Occam, ReferenceTablesSatisfyTheIdentity) {
  for (const auto* rows : {&reference::case1(), &reference::case2(), &reference::case3()}) {
    for (const auto& r : *rows) {
      const double fit_shifted = r.avg_data_fit - reference::kOffset;
      const double ev_shifted = r.log_evidence - reference::kOffset;
      std::vector<double> lls{fit_shifted};
      const auto rep = occam_decompose(std::span<const double>(lls), fit_shifted - r.info_gain);
      EXPECT_NEAR(rep.log_evidence, ev_shifted, 0.02) << r.label;
      EXPECT_NEAR(rep.info_gain, r.info_gain, 1e-9) << r.label;
    }
  }
}

TEST(ModelProbabilities, Basics) {
  const std::vector<double> zero{0.0, 0.0};
  const auto p = model_probabilities(zero);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  const std::vector<double> ev{-1.0, 2.0, 0.5};
  const std::vector<double> priors{0.0, 1.0, 3.0};
  const auto q = model_probabilities(ev, priors);
  EXPECT_EQ(q[0], 0.0);
  EXPECT_NEAR(q[1], std::exp(2.0) / (std::exp(2.0) + 3.0 * std::exp(0.5)), 1e-15);
  EXPECT_THROW(model_probabilities(ev, std::vector<double>{1.0}), DimensionError);
  EXPECT_THROW(model_probabilities(ev, std::vector<double>{0.0, 0.0, 0.0}), ConfigError);
  EXPECT_THROW(model_probabilities(ev, std::vector<double>{1.0, -1.0, 1.0}), ConfigError);
}

TEST(ModelProbabilities, ShiftInvariantAndStableForHugeValues) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> ev(6), shifted(6);
    const double c = 1e4 * standard_normal(rng);
    for (std::size_t i = 0; i < ev.size(); ++i) {
      ev[i] = 20.0 * standard_normal(rng);
      shifted[i] = ev[i] + c;
    }
    const auto a = model_probabilities(ev);
    const auto b = model_probabilities(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
  }
}

TEST(ModelProbabilities, SubsetEqualsConditioning) {
  std::vector<ComparisonEntry> entries;
  const std::vector<double> ev{-10.0, -12.0, -9.5, -20.0};
  for (std::size_t i = 0; i < ev.size(); ++i) entries.push_back({"m" + std::to_string(i), {ev[i], 0.0, 0.0}});
  const auto full = compare_models(entries);
  const auto sub = full.without({"m2"});
  ASSERT_EQ(sub.entries.size(), 3u);
  const double kept = 1.0 - full.probabilities[2];
  EXPECT_NEAR(*sub.probability_of("m0"), full.probabilities[0] / kept, 1e-14);
  EXPECT_NEAR(*sub.probability_of("m3"), full.probabilities[3] / kept, 1e-14);
  EXPECT_FALSE(sub.probability_of("m2").has_value());
}

TEST(ModelProbabilities, ReferenceCase1Row) {
  check_subset(reference::case1(), &reference::Row::probability_pct, 0.05);
}

TEST(ModelProbabilities, ReferenceCase2Rows) {
  check_subset(reference::case2(), &reference::Row::probability_pct, 0.05);
  // Subset rows are recomputed from two-decimal inputs.
  check_subset(reference::case2(), &reference::Row::probability_star_pct, 0.2);
  check_subset(reference::case2(), &reference::Row::probability_star2_pct, 0.2);
}

TEST(ModelProbabilities, ReferenceCase3Rows) {
  check_subset(reference::case3(), &reference::Row::probability_pct, 0.05);
  check_subset(reference::case3(), &reference::Row::probability_star_pct, 0.2);
}
