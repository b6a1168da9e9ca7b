#pragma once

// Transitional MCMC: tempering from the prior (p = 0) to the posterior
// (p = 1) through adaptively chosen exponents, with weighted resampling and
// one random-walk Metropolis-Hastings move per sample and stage.

#include "stochcal/parallel.hpp"
#include "stochcal/random.hpp"
#include "stochcal/types.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace stochcal {

struct TmcmcConfig {
  std::size_t n_samples = 1000;
  std::optional<double> beta;  // unset: 2.38 / sqrt(dim)
  double target_cov = 0.5;
  std::size_t max_stages = 200;
  std::uint64_t seed = 0;
  std::size_t mh_steps = 3;
  // After stage j the scale moves by (acceptance - target) / sqrt(j) in log
  // space; unset keeps beta fixed.
  std::optional<double> target_acceptance = 0.234;
  unsigned threads = 1;

  void validate() const {
    if (n_samples < 100) throw ConfigError("TMCMC needs n_samples >= 100");
    if (beta && !(*beta > 0.0)) throw ConfigError("TMCMC beta must be > 0");
    if (!(target_cov > 0.0)) throw ConfigError("TMCMC target_cov must be > 0");
    if (max_stages < 1) throw ConfigError("TMCMC max_stages must be >= 1");
    if (mh_steps < 1) throw ConfigError("TMCMC mh_steps must be >= 1");
    if (target_acceptance && !(*target_acceptance > 0.0 && *target_acceptance < 1.0))
      throw ConfigError("TMCMC target_acceptance must be in (0, 1)");
  }

  double beta_for(std::size_t dim) const {
    return beta ? *beta : 2.38 / std::sqrt(static_cast<double>(std::max<std::size_t>(dim, 1)));
  }
};

/// One tempering transition p_{j-1} -> p_j.
struct Stage {
  double p = 0.0;                      // exponent reached by this stage
  Vector weights;                      // normalised plausibility weights on the previous samples
  double achieved_cov = 0.0;           // coefficient of variation of those weights
  double log_evidence_increment = 0.0; // ln mean of the unnormalised weights
  double beta = 0.0;                   // proposal scale used in this stage
  Matrix proposal_cov;                 // Gaussian random-walk covariance
  Matrix samples;                      // N x dim, distributed ~ prior * L^p after the MH move
  Vector log_liks;
  double acceptance_rate = 0.0;
};

struct TmcmcRun {
  Matrix prior_samples;
  Vector prior_log_liks;
  std::vector<Stage> stages;
  double log_evidence = 0.0;

  bool complete() const { return !stages.empty() && stages.back().p == 1.0; }
  std::size_t stage_count() const { return stages.size(); }
  const Matrix& posterior_samples() const { return stages.empty() ? prior_samples : stages.back().samples; }
  const Vector& posterior_log_liks() const { return stages.empty() ? prior_log_liks : stages.back().log_liks; }
};

class TmcmcError : public NumericalError {
 public:
  TmcmcError(const std::string& what, TmcmcRun partial) : NumericalError(what), partial_(std::move(partial)) {}
  const TmcmcRun& partial_run() const { return partial_; }

 private:
  TmcmcRun partial_;
};

// ---------------------------------------------------------------------------
// Weights and exponents

/// std/mean of exp(dp * (ll - max ll)) with the (N-1) variance denominator.
inline double weight_cov(std::span<const double> log_liks, double dp) {
  double peak = kNegInf;
  for (double l : log_liks) peak = std::max(peak, l);
  if (!std::isfinite(peak)) return std::numeric_limits<double>::quiet_NaN();
  const auto n = static_cast<double>(log_liks.size());
  double sum = 0.0;
  for (double l : log_liks) sum += std::exp(dp * (l - peak));
  const double mean = sum / n;
  double ss = 0.0;
  for (double l : log_liks) {
    const double d = std::exp(dp * (l - peak)) - mean;
    ss += d * d;
  }
  if (log_liks.size() < 2) return 0.0;
  return std::sqrt(ss / (n - 1.0)) / mean;
}

/// Next tempering exponent: the largest p in (p_current, 1] whose weights keep
/// a coefficient of variation <= target_cov, found by bisection.
inline double next_exponent(std::span<const double> log_liks, double p_current, double target_cov) {
  if (!(p_current >= 0.0 && p_current < 1.0)) throw ConfigError("next_exponent: p_current must lie in [0, 1)");
  bool any_finite = false;
  for (double l : log_liks) any_finite = any_finite || std::isfinite(l);
  if (!any_finite) throw NumericalError("next_exponent: every sample has zero likelihood");

  if (weight_cov(log_liks, 1.0 - p_current) <= target_cov) return 1.0;
  double lo = p_current;
  double hi = 1.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (weight_cov(log_liks, mid - p_current) <= target_cov) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo > p_current ? lo : hi;
}

struct PlausibilityWeights {
  Vector normalized;
  double log_mean = kNegInf;  // ln (1/N) sum_k exp(dp * ll_k)
};

inline PlausibilityWeights plausibility_weights(std::span<const double> log_liks, double dp) {
  const auto n = static_cast<Eigen::Index>(log_liks.size());
  PlausibilityWeights out{Vector::Zero(n), kNegInf};
  double peak = kNegInf;
  for (double l : log_liks) peak = std::max(peak, l);
  if (!std::isfinite(peak)) return out;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double l = log_liks[static_cast<std::size_t>(k)];
    out.normalized[k] = std::isfinite(l) ? std::exp(dp * (l - peak)) : 0.0;
    sum += out.normalized[k];
  }
  out.normalized /= sum;
  out.log_mean = dp * peak + std::log(sum / static_cast<double>(n));
  return out;
}

/// beta^2 times the weighted sample covariance about the weighted mean.
inline Matrix proposal_covariance(const Matrix& samples, const Vector& weights, double beta) {
  require_size(weights.size(), samples.rows(), "proposal_covariance: weights");
  if (samples.rows() < 2) throw DegenerateCovariance("proposal_covariance needs at least two samples");
  const double total = weights.sum();
  if (!(total > 0.0)) throw DegenerateCovariance("proposal_covariance: weights sum to zero");
  const Vector w = weights / total;
  if (w.maxCoeff() >= 1.0 - 1e-12) {
    throw DegenerateCovariance("proposal_covariance: all weight sits on a single sample (effective sample size 1)");
  }
  const Vector mu = samples.transpose() * w;
  const Matrix centered = samples.rowwise() - mu.transpose();
  Matrix cov = beta * beta * (centered.transpose() * w.asDiagonal() * centered);
  cov = (0.5 * (cov + cov.transpose())).eval();
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-10 * cov.trace();
    cov.diagonal().array() += jitter;
    llt.compute(cov);
    if (jitter <= 0.0 || llt.info() != Eigen::Success) {
      throw DegenerateCovariance("proposal_covariance: weighted samples span a degenerate subspace");
    }
  }
  return cov;
}

/// Gaussian random-walk proposal N(center, cov).
class GaussianProposal {
 public:
  explicit GaussianProposal(Matrix cov) : cov_(std::move(cov)) {
    Eigen::LLT<Matrix> llt(cov_);
    if (llt.info() != Eigen::Success) throw DegenerateCovariance("proposal covariance is not positive definite");
    chol_ = llt.matrixL();
    log_det_ = 2.0 * chol_.diagonal().array().log().sum();
  }

  const Matrix& cov() const { return cov_; }
  Eigen::Index dim() const { return cov_.rows(); }

  Vector draw(const Vector& center, Rng& rng) const {
    Vector z(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) z[i] = standard_normal(rng);
    return center + chol_ * z;
  }

  double log_density(const Vector& center, const Vector& x) const {
    const Vector z = chol_.triangularView<Eigen::Lower>().solve(x - center);
    return -0.5 * (static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi) + log_det_ + z.squaredNorm());
  }

 private:
  Matrix cov_;
  Matrix chol_;
  double log_det_ = 0.0;
};

// ---------------------------------------------------------------------------
// Metropolis-Hastings

struct ChainState {
  Vector theta;
  double log_prior = kNegInf;
  double log_lik = kNegInf;
};

struct MhOutcome {
  ChainState state;
  bool accepted = false;
};

/// log alpha for a move between tempered targets prior * L^p.
inline double log_acceptance(double lp_from, double ll_from, double lp_to, double ll_to, double p) {
  if (!std::isfinite(lp_to) || (p > 0.0 && !std::isfinite(ll_to))) return kNegInf;
  const double from = lp_from + (p > 0.0 ? p * ll_from : 0.0);
  const double to = lp_to + (p > 0.0 ? p * ll_to : 0.0);
  if (!std::isfinite(from)) return 0.0;
  return std::min(0.0, to - from);
}

template <class LogPrior, class LogLik>
MhOutcome mh_step(const ChainState& current, const GaussianProposal& proposal, double p, const LogPrior& log_prior,
                  const LogLik& log_lik, Rng& rng) {
  ChainState cand;
  cand.theta = proposal.draw(current.theta, rng);
  const double u = uniform01(rng);
  cand.log_prior = log_prior(cand.theta);
  if (!std::isfinite(cand.log_prior)) return {current, false};
  cand.log_lik = log_lik(cand.theta);
  if (std::isnan(cand.log_lik)) cand.log_lik = kNegInf;
  const double log_alpha = log_acceptance(current.log_prior, current.log_lik, cand.log_prior, cand.log_lik, p);
  if (std::log(u) < log_alpha || log_alpha == 0.0) return {std::move(cand), true};
  return {current, false};
}

/// Multinomial resampling: n indices drawn with probability proportional to weights.
inline std::vector<std::size_t> multinomial_resample(const Vector& weights, std::size_t n, Rng& rng) {
  std::discrete_distribution<std::size_t> pick(weights.data(), weights.data() + weights.size());
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

// ---------------------------------------------------------------------------
// Driver

namespace detail {
// Random stream ids within a stage; sample streams use the sample index.
inline constexpr std::uint64_t kResampleStream = 0xffffffffULL;
}  // namespace detail

/// Full TMCMC run. log_prior(theta) and log_lik(theta) may return -inf;
/// prior_sampler(rng) draws from the prior. Random numbers come from
/// substreams keyed by (stage, sample), so the result does not depend on the
/// thread count.
template <class LogPrior, class LogLik, class PriorSampler>
TmcmcRun run_tmcmc(const LogPrior& log_prior, const LogLik& log_lik, const PriorSampler& prior_sampler,
                   const TmcmcConfig& config) {
  config.validate();
  const std::size_t n = config.n_samples;
  TmcmcRun run;

  std::vector<ChainState> chains(n);
  parallel_for(n, config.threads, [&](std::size_t k) {
    Rng rng = substream(config.seed, {0, k});
    ChainState& c = chains[k];
    c.theta = prior_sampler(rng);
    c.log_prior = log_prior(c.theta);
    c.log_lik = std::isfinite(c.log_prior) ? log_lik(c.theta) : kNegInf;
    if (std::isnan(c.log_lik)) c.log_lik = kNegInf;
  });
  const auto dim = chains.front().theta.size();
  auto pack = [&](Matrix& samples, Vector& lls) {
    samples.resize(static_cast<Eigen::Index>(n), dim);
    lls.resize(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
      samples.row(static_cast<Eigen::Index>(k)) = chains[k].theta.transpose();
      lls[static_cast<Eigen::Index>(k)] = chains[k].log_lik;
    }
  };
  pack(run.prior_samples, run.prior_log_liks);

  double p = 0.0;
  double beta = config.beta_for(static_cast<std::size_t>(dim));
  std::vector<double> lls(n);
  while (p < 1.0) {
    if (run.stages.size() >= config.max_stages) {
      throw TmcmcError("TMCMC reached max_stages=" + std::to_string(config.max_stages) +
                           " at p=" + std::to_string(p),
                       std::move(run));
    }
    const std::uint64_t stage_id = run.stages.size() + 1;
    for (std::size_t k = 0; k < n; ++k) lls[k] = chains[k].log_lik;

    Stage stage;
    try {
      stage.p = next_exponent(lls, p, config.target_cov);
      const double dp = stage.p - p;
      auto pw = plausibility_weights(lls, dp);
      stage.weights = std::move(pw.normalized);
      stage.log_evidence_increment = pw.log_mean;
      stage.achieved_cov = weight_cov(lls, dp);
      const Matrix& current = run.stages.empty() ? run.prior_samples : run.stages.back().samples;
      stage.beta = beta;
      stage.proposal_cov = proposal_covariance(current, stage.weights, beta);
    } catch (const Error& e) {
      throw TmcmcError("TMCMC stage " + std::to_string(stage_id) + ": " + e.what(), std::move(run));
    }
    const GaussianProposal proposal(stage.proposal_cov);

    Rng resample_rng = substream(config.seed, {stage_id, detail::kResampleStream});
    const auto parents = multinomial_resample(stage.weights, n, resample_rng);
    std::vector<ChainState> next(n);
    std::vector<std::size_t> accepted(n, 0);
    parallel_for(n, config.threads, [&](std::size_t k) {
      Rng rng = substream(config.seed, {stage_id, k});
      ChainState state = chains[parents[k]];
      for (std::size_t s = 0; s < config.mh_steps; ++s) {
        auto out = mh_step(state, proposal, stage.p, log_prior, log_lik, rng);
        state = std::move(out.state);
        accepted[k] += out.accepted ? 1 : 0;
      }
      next[k] = std::move(state);
    });
    chains = std::move(next);
    std::size_t total_accepted = 0;
    for (auto a : accepted) total_accepted += a;
    stage.acceptance_rate = static_cast<double>(total_accepted) / static_cast<double>(n * config.mh_steps);
    pack(stage.samples, stage.log_liks);
    if (config.target_acceptance)
      beta *= std::exp((stage.acceptance_rate - *config.target_acceptance) / std::sqrt(static_cast<double>(stage_id)));
    run.log_evidence += stage.log_evidence_increment;
    p = stage.p;
    run.stages.push_back(std::move(stage));
  }
  return run;
}

}  // namespace stochcal
