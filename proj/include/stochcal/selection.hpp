#pragma once

// Model evidence (stage-wise TMCMC estimator and Chib-Jeliazkov), the Occam
// decomposition of the log evidence, and posterior model probabilities.

#include "stochcal/parallel.hpp"
#include "stochcal/tmcmc.hpp"
#include "stochcal/types.hpp"

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stochcal {

enum class EvidenceEstimator { stagewise, chib_jeliazkov };

inline std::string_view to_string(EvidenceEstimator e) {
  return e == EvidenceEstimator::stagewise ? "stagewise" : "chib_jeliazkov";
}

inline EvidenceEstimator parse_estimator(std::string_view s) {
  if (s == "stagewise") return EvidenceEstimator::stagewise;
  if (s == "chib_jeliazkov") return EvidenceEstimator::chib_jeliazkov;
  throw ConfigError("unknown evidence estimator '" + std::string(s) + "'");
}

/// log evidence = average data-fit - information gain.
struct EvidenceReport {
  double log_evidence = 0.0;
  double avg_data_fit = 0.0;
  double info_gain = 0.0;
  EvidenceEstimator estimator = EvidenceEstimator::stagewise;
};

/// Sum over stages of ln((1/N) sum_k L_k^{dp_j}).
inline double log_evidence_stagewise(const TmcmcRun& run) {
  if (!run.complete()) throw NumericalError("log_evidence_stagewise: run did not reach p = 1");
  double total = 0.0;
  std::vector<double> lls;
  for (std::size_t j = 0; j < run.stages.size(); ++j) {
    const Vector& prev = j == 0 ? run.prior_log_liks : run.stages[j - 1].log_liks;
    const double dp = run.stages[j].p - (j == 0 ? 0.0 : run.stages[j - 1].p);
    lls.assign(prev.data(), prev.data() + prev.size());
    total += plausibility_weights(lls, dp).log_mean;
  }
  return total;
}

/// Index of the sample with the highest log prior + log likelihood.
template <class LogPrior>
Eigen::Index max_log_posterior_index(const Matrix& samples, const Vector& log_liks, const LogPrior& log_prior) {
  Eigen::Index best = 0;
  double best_value = kNegInf;
  for (Eigen::Index k = 0; k < samples.rows(); ++k) {
    const double v = log_prior(Vector(samples.row(k).transpose())) + log_liks[k];
    if (v > best_value) {
      best_value = v;
      best = k;
    }
  }
  return best;
}

struct ChibJeliazkovOptions {
  std::size_t n_draws = 0;  // 0: as many as posterior samples
  unsigned threads = 1;
};

/// Chib-Jeliazkov estimate ln L(theta*) + ln prior(theta*) - ln p(theta*|D),
/// with the posterior ordinate recovered from the Metropolis-Hastings kernel
/// N(., proposal_cov): the numerator averages alpha(x -> theta*) q(x, theta*)
/// over posterior samples, the denominator averages alpha(theta* -> y) over
/// fresh proposals y ~ N(theta*, proposal_cov).
template <class LogPrior, class LogLik>
double log_evidence_chib_jeliazkov(const LogPrior& log_prior, const LogLik& log_lik, const Matrix& posterior_samples,
                                   const Vector& posterior_log_liks, const Vector& theta_star,
                                   const Matrix& proposal_cov, Rng& rng, ChibJeliazkovOptions options = {}) {
  require_size(posterior_log_liks.size(), posterior_samples.rows(), "chib_jeliazkov: log_liks");
  require_size(theta_star.size(), posterior_samples.cols(), "chib_jeliazkov: theta*");
  if (!proposal_cov.allFinite()) throw DegenerateCovariance("chib_jeliazkov: non-finite proposal covariance");
  const double scale = 1.0 + theta_star.squaredNorm();
  if (!(proposal_cov.trace() > 1e-12 * scale)) {
    throw DegenerateCovariance("chib_jeliazkov: proposal covariance is numerically zero (ill-conditioned ordinate)");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(proposal_cov, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > 1e14) {
    throw DegenerateCovariance("chib_jeliazkov: proposal covariance is ill-conditioned");
  }
  const GaussianProposal kernel(proposal_cov);

  const double lp_star = log_prior(theta_star);
  const double ll_star = log_lik(theta_star);
  if (!std::isfinite(lp_star) || !std::isfinite(ll_star)) {
    throw NumericalError("chib_jeliazkov: theta* must have positive prior density and likelihood");
  }
  const double post_star = lp_star + ll_star;

  const auto m = posterior_samples.rows();
  std::vector<double> log_terms(static_cast<std::size_t>(m));
  for (Eigen::Index k = 0; k < m; ++k) {
    const Vector x = posterior_samples.row(k).transpose();
    const double post_x = log_prior(x) + posterior_log_liks[k];
    const double log_alpha = std::min(0.0, post_star - post_x);
    log_terms[static_cast<std::size_t>(k)] = log_alpha + kernel.log_density(x, theta_star);
  }
  const double log_numerator = log_sum_exp(log_terms) - std::log(static_cast<double>(m));

  const std::size_t draws = options.n_draws > 0 ? options.n_draws : static_cast<std::size_t>(m);
  std::vector<Vector> proposals(draws);
  for (auto& y : proposals) y = kernel.draw(theta_star, rng);
  std::vector<double> alpha(draws, 0.0);
  parallel_for(draws, options.threads, [&](std::size_t l) {
    const double lp = log_prior(proposals[l]);
    if (!std::isfinite(lp)) return;
    const double ll = log_lik(proposals[l]);
    if (!std::isfinite(ll)) return;
    alpha[l] = std::exp(std::min(0.0, lp + ll - post_star));
  });
  double denominator = 0.0;
  for (double a : alpha) denominator += a;
  denominator /= static_cast<double>(draws);
  if (!(denominator > 0.0)) {
    throw NumericalError("chib_jeliazkov: denominator estimate is zero; increase the number of draws");
  }
  const double log_ordinate = log_numerator - std::log(denominator);
  return ll_star + lp_star - log_ordinate;
}

/// Occam split: the average data-fit is the posterior mean log-likelihood and
/// the information gain follows from the identity.
inline EvidenceReport occam_decompose(std::span<const double> posterior_log_liks, double log_evidence,
                                      EvidenceEstimator estimator = EvidenceEstimator::stagewise) {
  if (posterior_log_liks.empty()) throw ConfigError("occam_decompose needs posterior log-likelihoods");
  double sum = 0.0;
  for (double l : posterior_log_liks) sum += l;
  EvidenceReport r;
  r.log_evidence = log_evidence;
  r.avg_data_fit = sum / static_cast<double>(posterior_log_liks.size());
  r.info_gain = r.avg_data_fit - log_evidence;
  r.estimator = estimator;
  return r;
}

inline EvidenceReport occam_decompose(const Vector& posterior_log_liks, double log_evidence,
                                      EvidenceEstimator estimator = EvidenceEstimator::stagewise) {
  return occam_decompose(std::span<const double>(posterior_log_liks.data(), posterior_log_liks.size()),
                         log_evidence, estimator);
}

/// Posterior model probabilities: softmax of log evidence + ln prior. Empty
/// priors mean equal priors.
inline std::vector<double> model_probabilities(std::span<const double> log_evidences,
                                               std::span<const double> model_priors = {}) {
  const std::size_t n = log_evidences.size();
  if (!model_priors.empty() && model_priors.size() != n) {
    throw DimensionError("model_probabilities: priors and evidences differ in length");
  }
  std::vector<double> scores(n);
  bool any_prior = model_priors.empty();
  for (std::size_t i = 0; i < n; ++i) {
    const double prior = model_priors.empty() ? 1.0 : model_priors[i];
    if (prior < 0.0) throw ConfigError("model_probabilities: negative model prior");
    any_prior = any_prior || prior > 0.0;
    scores[i] = prior > 0.0 ? log_evidences[i] + std::log(prior) : kNegInf;
  }
  if (!any_prior) throw ConfigError("model_probabilities: all model priors are zero");
  const double norm = log_sum_exp(scores);
  std::vector<double> out(n, 0.0);
  if (!std::isfinite(norm)) return out;
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(scores[i] - norm);
  return out;
}

struct ComparisonEntry {
  std::string label;
  EvidenceReport report;
};

struct ModelComparison {
  std::vector<ComparisonEntry> entries;
  std::vector<double> probabilities;

  /// The same comparison restricted to models not listed in `excluded`.
  ModelComparison without(const std::vector<std::string>& excluded) const;

  std::optional<double> probability_of(std::string_view label) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].label == label) return probabilities[i];
    return std::nullopt;
  }
};

inline ModelComparison compare_models(std::vector<ComparisonEntry> entries, std::span<const double> priors = {}) {
  ModelComparison c;
  std::vector<double> ev;
  for (const auto& e : entries) ev.push_back(e.report.log_evidence);
  c.probabilities = model_probabilities(ev, priors);
  c.entries = std::move(entries);
  return c;
}

inline ModelComparison ModelComparison::without(const std::vector<std::string>& excluded) const {
  std::vector<ComparisonEntry> kept;
  for (const auto& e : entries)
    if (std::find(excluded.begin(), excluded.end(), e.label) == excluded.end()) kept.push_back(e);
  return compare_models(std::move(kept));
}

}  // namespace stochcal
