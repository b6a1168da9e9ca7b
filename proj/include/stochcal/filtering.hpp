#pragma once

// Extended Kalman filter over the augmented state on a fixed computational
// grid, with the per-observation Gaussian predictive likelihood.

#include "stochcal/belief.hpp"
#include "stochcal/models.hpp"
#include "stochcal/types.hpp"

#include <concepts>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace stochcal {

/// Discrete stochastic map x' = g(x, t, dt, xi) with xi ~ N(0, I).
template <class D>
concept Dynamics = requires(const D& d, const typename D::State& x, double t, double dt) {
  { D::kStateDim } -> std::convertible_to<int>;
  { d.propagate(x, t, dt) } -> std::convertible_to<typename D::State>;
  { d.state_jacobian(x, t, dt) } -> std::convertible_to<Eigen::Matrix<double, D::kStateDim, D::kStateDim>>;
  d.noise_jacobian(x, t, dt);
};

struct ObservationSeries {
  std::vector<double> times;   // s, strictly increasing
  std::vector<double> values;  // mm
  double noise_std = 1.0;      // mm

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  double noise_var() const { return noise_std * noise_std; }

  void validate() const {
    if (times.size() != values.size()) throw ConfigError("observation times and values differ in length");
    if (!(noise_std > 0.0) || !std::isfinite(noise_std)) throw ConfigError("observation noise_std must be > 0");
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (!std::isfinite(times[j]) || !std::isfinite(values[j])) throw ConfigError("non-finite observation");
      if (j > 0 && !(times[j] > times[j - 1])) throw ConfigError("observation times must be strictly increasing");
    }
  }
};

struct Innovation {
  double t = 0.0;
  double residual = 0.0;  // d - h(x^f)
  double variance = 0.0;  // C P^f C^T + Gamma
};

struct GridBelief {
  double t = 0.0;
  GaussianBelief<> forecast;
  std::optional<GaussianBelief<>> analysis;

  const GaussianBelief<>& filtered() const { return analysis ? *analysis : forecast; }
};

struct FilterOptions {
  bool record_beliefs = false;
  bool record_innovations = false;
  /// Keep forecasting past the last observation up to this time.
  std::optional<double> t_end;
};

struct FilterResult {
  double log_lik = 0.0;
  std::vector<GridBelief> beliefs;
  std::vector<Innovation> innovations;
  GaussianBelief<> final_belief;
  double final_time = 0.0;
  /// Set when the filter diverged; log_lik is then -inf.
  std::optional<std::string> divergence;

  bool diverged() const { return divergence.has_value(); }
};

// ---------------------------------------------------------------------------
// Single steps

/// P' = A P A^T + B B^T (unit-variance drivers), mean through the noiseless map.
template <Dynamics D, int N = D::kStateDim>
GaussianBelief<N> forecast(const GaussianBelief<N>& belief, const D& dyn, double t, double dt) {
  if (!(dt > 0.0)) throw ConfigError("forecast: dt must be positive");
  const auto a = dyn.state_jacobian(belief.mean, t, dt);
  const auto b = dyn.noise_jacobian(belief.mean, t, dt);
  GaussianBelief<N> out;
  out.mean = dyn.propagate(belief.mean, t, dt);
  out.cov.noalias() = a * belief.cov * a.transpose();
  out.cov.noalias() += b * b.transpose();
  out.symmetrize();
  if (!out.finite()) throw NumericalError("forecast produced a non-finite belief");
  return out;
}

template <int N>
struct AnalysisResult {
  GaussianBelief<N> belief;
  double log_lik_increment = 0.0;
  double residual = 0.0;
  double variance = 0.0;
};

/// Kalman update for a scalar observation d = C x + eps, eps ~ N(0, noise_var),
/// with the Joseph-form covariance and the predictive log density of d.
template <int N>
AnalysisResult<N> analyze(const GaussianBelief<N>& prior, const Eigen::Matrix<double, 1, N>& c, double d,
                          double noise_var) {
  if (!(noise_var > 0.0)) throw ConfigError("analyze: observation noise variance must be positive");
  require_size(c.size(), prior.mean.size(), "analyze: measurement row");
  const Eigen::Matrix<double, N, 1> pct = prior.cov * c.transpose();
  const double innovation_var = c.dot(pct) + noise_var;
  if (!(innovation_var > 0.0) || !std::isfinite(innovation_var)) {
    throw NumericalError("analyze: non-positive innovation variance");
  }
  const double residual = d - c.dot(prior.mean);
  const Eigen::Matrix<double, N, 1> gain = pct / innovation_var;

  AnalysisResult<N> out;
  out.belief.mean = prior.mean + gain * residual;
  Eigen::Matrix<double, N, N> i_kc = Eigen::Matrix<double, N, N>::Identity(prior.mean.size(), prior.mean.size());
  i_kc.noalias() -= gain * c;
  out.belief.cov.noalias() = i_kc * prior.cov * i_kc.transpose();
  out.belief.cov.noalias() += noise_var * gain * gain.transpose();
  out.belief.symmetrize();
  if (!out.belief.finite()) throw NumericalError("analyze produced a non-finite belief");
  out.residual = residual;
  out.variance = innovation_var;
  out.log_lik_increment =
      -0.5 * (std::log(2.0 * std::numbers::pi * innovation_var) + residual * residual / innovation_var);
  return out;
}

// ---------------------------------------------------------------------------
// Grid driver

namespace detail {

/// Grid index of each observation at or after t0, checking that the grid
/// spacing divides every observation offset.
inline std::vector<std::size_t> observation_grid_indices(const ObservationSeries& data, std::size_t first_obs,
                                                         double t0, double grid_dt) {
  std::vector<std::size_t> idx;
  idx.reserve(data.size() - std::min(first_obs, data.size()));
  for (std::size_t j = first_obs; j < data.size(); ++j) {
    const double ratio = (data.times[j] - t0) / grid_dt;
    const double rounded = std::round(ratio);
    if (ratio < -1e-9 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, std::abs(ratio))) {
      throw ConfigError("grid_dt does not divide the observation interval at t=" + std::to_string(data.times[j]));
    }
    const auto k = static_cast<std::size_t>(rounded);
    if (!idx.empty() && k <= idx.back()) throw ConfigError("two observations fall on the same grid point");
    idx.push_back(k);
  }
  return idx;
}

inline GaussianBelief<> to_dynamic(const auto& b) { return GaussianBelief<>{b.mean, b.cov}; }

}  // namespace detail

/// Filters observations first_obs.. of `data` starting from `initial` at time
/// t0. An observation at t0 is analysed before the first forecast. Numerical
/// breakdown is reported through FilterResult::divergence (log_lik = -inf).
template <Dynamics D>
FilterResult filter_from(const D& dyn, const GaussianBelief<D::kStateDim>& initial, double t0,
                         const ObservationSeries& data, std::size_t first_obs, double grid_dt,
                         const FilterOptions& options = {}) {
  constexpr int N = D::kStateDim;
  if (!(grid_dt > 0.0)) throw ConfigError("grid_dt must be positive");
  const auto obs_index = detail::observation_grid_indices(data, first_obs, t0, grid_dt);
  std::size_t last = obs_index.empty() ? 0 : obs_index.back();
  if (options.t_end) {
    const double steps = std::floor((*options.t_end - t0) / grid_dt + 1e-9);
    if (steps > 0) last = std::max(last, static_cast<std::size_t>(steps));
  }

  Eigen::Matrix<double, 1, N> c = Eigen::Matrix<double, 1, N>::Zero(initial.mean.size());
  c[0] = 1.0;
  const double noise_var = data.noise_var();

  FilterResult result;
  if (options.record_beliefs) result.beliefs.reserve(last + 1);
  if (options.record_innovations) result.innovations.reserve(obs_index.size());

  GaussianBelief<N> belief = initial;
  std::size_t next_obs = 0;
  std::size_t k = 0;
  try {
    for (;; ++k) {
      const double t = t0 + static_cast<double>(k) * grid_dt;
      GridBelief record;
      if (options.record_beliefs) {
        record.t = t;
        record.forecast = detail::to_dynamic(belief);
      }
      if (next_obs < obs_index.size() && obs_index[next_obs] == k) {
        const std::size_t j = first_obs + next_obs;
        auto upd = analyze<N>(belief, c, data.values[j], noise_var);
        belief = upd.belief;
        result.log_lik += upd.log_lik_increment;
        if (options.record_innovations) result.innovations.push_back({data.times[j], upd.residual, upd.variance});
        if (options.record_beliefs) record.analysis = detail::to_dynamic(belief);
        ++next_obs;
      }
      if (options.record_beliefs) result.beliefs.push_back(std::move(record));
      if (k == last) break;
      belief = forecast(belief, dyn, t, grid_dt);
    }
  } catch (const NumericalError& e) {
    result.log_lik = kNegInf;
    result.divergence = FilterDivergence(e.what(), k).what();
  }
  result.final_belief = detail::to_dynamic(belief);
  result.final_time = t0 + static_cast<double>(k) * grid_dt;
  return result;
}

/// Runs the candidate model's filter over the whole series. The first
/// observation seeds the initial belief (displacement mean and variance) and
/// does not contribute to log_lik.
inline FilterResult run_filter(const CandidateModel& model, const OscillatorParams& params,
                               const ObservationSeries& data, double grid_dt, const FilterOptions& options = {}) {
  data.validate();
  const double d0 = data.empty() ? 0.0 : data.values.front();
  const double t0 = data.empty() ? 0.0 : data.times.front();
  const auto initial = model.initial_belief(params, d0, data.noise_var());
  return visit_dynamics(model, params, [&](const auto& dyn) {
    using D = std::decay_t<decltype(dyn)>;
    return filter_from(dyn, initial.template cast<D::kStateDim>(), t0, data, data.empty() ? 0 : 1, grid_dt,
                       options);
  });
}

inline FilterResult run_filter(const CandidateModel& model, const Eigen::Ref<const Vector>& theta,
                               const ObservationSeries& data, double grid_dt, const FilterOptions& options = {}) {
  return run_filter(model, model.resolve(theta), data, grid_dt, options);
}

/// Log-likelihood used by the sampler: -inf for a diverged filter or a point
/// outside the physically meaningful region (non-positive tau).
inline double log_likelihood(const CandidateModel& model, const Eigen::Ref<const Vector>& theta,
                             const ObservationSeries& data, double grid_dt) {
  const OscillatorParams p = model.resolve(theta);
  if (model.structure() == Structure::coloured_forcing && !(p.relaxation_time > 0.0)) return kNegInf;
  const double ll = run_filter(model, p, data, grid_dt).log_lik;
  return std::isnan(ll) ? kNegInf : ll;
}

// ---------------------------------------------------------------------------
// Bands

struct BandRow {
  double t = 0.0;
  double mean = 0.0;
  double lo3 = 0.0;
  double hi3 = 0.0;
};

/// Filtered mean +- 3 standard deviations of one state slot at every grid point.
inline std::vector<BandRow> trajectory_at(const CandidateModel& model, const Eigen::Ref<const Vector>& theta,
                                          const ObservationSeries& data, double grid_dt, std::string_view slot,
                                          std::optional<double> t_end = std::nullopt) {
  const auto index = model.layout().index_of(slot);
  if (!index) {
    throw ConfigError("model " + model.label() + " has no state slot '" + std::string(slot) + "'");
  }
  FilterOptions opts;
  opts.record_beliefs = true;
  opts.t_end = t_end;
  const FilterResult r = run_filter(model, theta, data, grid_dt, opts);
  if (r.diverged()) throw NumericalError("trajectory_at: " + *r.divergence);
  std::vector<BandRow> rows;
  rows.reserve(r.beliefs.size());
  for (const auto& gb : r.beliefs) {
    const auto& b = gb.filtered();
    const double mean = b.mean[*index];
    const double half = 3.0 * b.stddev(*index);
    rows.push_back({gb.t, mean, mean - half, mean + half});
  }
  return rows;
}

/// Slot whose band is reported by default: stiffness when it is part of the
/// state, displacement otherwise.
inline std::string default_band_slot(const CandidateModel& model) {
  return model.structure() == Structure::augmented_stiffness ? "K" : "u";
}

}  // namespace stochcal
