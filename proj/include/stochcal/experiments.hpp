#pragma once

// Synthetic stiffness-degradation datasets and calibration campaigns over the
// candidate set.

#include "stochcal/filtering.hpp"
#include "stochcal/models.hpp"
#include "stochcal/random.hpp"
#include "stochcal/selection.hpp"
#include "stochcal/tmcmc.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace stochcal {

// ---------------------------------------------------------------------------
// Truth dynamics and data

struct TruthConfig {
  int case_id = 1;
  double k1 = 70.0;  // N/mm
  double k2 = 10.0;  // N/mm
  ScheduleKind schedule = ScheduleKind::step;
  double switch_time = 10.0;  // s
  double mass = 1.0;          // kg
  double damping = 0.1;       // Ns/mm
  double forcing = 50.0;      // N
  double u0 = 50.0;           // mm
  double v0 = 0.0;            // mm/s
  double horizon = 20.0;      // s
  double sim_dt = 0.001;      // s
  double sample_rate = 25.0;  // Hz
  double noise_std = 10.0;    // mm
  std::uint64_t seed = 0;

  static TruthConfig for_case(int case_id, std::uint64_t seed = 0) {
    TruthConfig c;
    c.case_id = case_id;
    c.seed = seed;
    switch (case_id) {
      case 1:
        c.k1 = 70.0;
        c.k2 = 10.0;
        c.schedule = ScheduleKind::step;
        break;
      case 2:
        c.k1 = 10.0;
        c.k2 = 70.0;
        c.schedule = ScheduleKind::step;
        break;
      case 3:
        c.k1 = 70.0;
        c.k2 = 10.0;
        c.schedule = ScheduleKind::linear;
        break;
      default:
        throw ConfigError("unknown case id " + std::to_string(case_id) + " (expected 1, 2 or 3)");
    }
    return c;
  }

  StiffnessSchedule stiffness() const {
    switch (schedule) {
      case ScheduleKind::step: return StiffnessSchedule::step(k1, k2, switch_time);
      case ScheduleKind::linear: return StiffnessSchedule::linear(k1, k2, horizon);
      case ScheduleKind::constant: break;
    }
    return StiffnessSchedule::constant(k1 + k2);
  }

  /// Simulation steps per observation interval.
  std::size_t steps_per_sample() const { return static_cast<std::size_t>(std::llround(1.0 / (sample_rate * sim_dt))); }

  void validate() const {
    if (!(sim_dt > 0.0)) throw ConfigError("sim_dt must be positive");
    if (sim_dt > 0.002) throw ConfigError("sim_dt > 0.002 s is rejected as unstable for the oscillator");
    if (!(horizon > 0.0) || !(sample_rate > 0.0)) throw ConfigError("horizon and sample_rate must be positive");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
    if (!(mass > 0.0)) throw ConfigError("mass must be positive");
    const double ratio = 1.0 / (sample_rate * sim_dt);
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
      throw ConfigError("sim_dt must divide the sampling interval");
    }
  }
};

struct Trajectory {
  std::vector<double> t;
  std::vector<double> u;
  std::vector<double> v;
  std::vector<double> stiffness;

  std::size_t size() const { return t.size(); }
  bool empty() const { return t.empty(); }
};

/// Euler-Maruyama integration of m u'' + c u' + K(t) u = sigma W(t) from (u0, v0).
inline Trajectory simulate_truth(const TruthConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto steps = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.sim_dt));
  const StiffnessSchedule schedule = cfg.stiffness();
  const double dt = cfg.sim_dt;
  const double sqdt = std::sqrt(dt);

  Trajectory out;
  out.t.reserve(steps + 1);
  out.u.reserve(steps + 1);
  out.v.reserve(steps + 1);
  out.stiffness.reserve(steps + 1);
  double u = cfg.u0;
  double v = cfg.v0;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double stiffness = eval_stiffness(schedule, t);
    out.t.push_back(t);
    out.u.push_back(u);
    out.v.push_back(v);
    out.stiffness.push_back(stiffness);
    if (k == steps) break;
    const double xi = standard_normal(rng);
    const double u_next = u + dt * v;
    v = detail::next_velocity(u, v, stiffness, cfg.damping, cfg.mass, dt) + sqdt * cfg.forcing * xi / cfg.mass;
    u = u_next;
  }
  return out;
}

/// Root-mean-square of the truth displacement over [0, t_end).
inline double displacement_rms(const Trajectory& traj, double t_end) {
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < traj.size() && traj.t[k] < t_end; ++k) {
    ss += traj.u[k] * traj.u[k];
    ++n;
  }
  return n == 0 ? 0.0 : std::sqrt(ss / static_cast<double>(n));
}

/// Noise-to-signal ratio as a variance ratio, noise_std^2 / rms^2.
inline double noise_to_signal_ratio(double noise_std, double rms) { return (noise_std * noise_std) / (rms * rms); }

struct SyntheticDataset {
  TruthConfig config;
  Trajectory truth;
  ObservationSeries observations;
  double signal_rms = 0.0;   // pre-damage window for step schedules, whole record otherwise
  double noise_ratio = 0.0;  // variance ratio
};

/// Subsamples the displacement at the sampling rate and adds N(0, noise_std^2).
inline SyntheticDataset make_dataset(Trajectory truth, const TruthConfig& cfg, Rng& rng) {
  cfg.validate();
  if (truth.empty() || truth.t.back() < cfg.horizon - 0.5 * cfg.sim_dt) {
    throw ConfigError("make_dataset: trajectory does not cover the horizon");
  }
  const std::size_t stride = cfg.steps_per_sample();
  SyntheticDataset ds;
  ds.config = cfg;
  ds.observations.noise_std = cfg.noise_std > 0.0 ? cfg.noise_std : 1.0;
  for (std::size_t k = 0; k < truth.size(); k += stride) {
    const double noise = cfg.noise_std > 0.0 ? cfg.noise_std * standard_normal(rng) : 0.0;
    ds.observations.times.push_back(truth.t[k]);
    ds.observations.values.push_back(truth.u[k] + noise);
  }
  const double window = cfg.schedule == ScheduleKind::step ? cfg.switch_time : cfg.horizon + cfg.sim_dt;
  ds.signal_rms = displacement_rms(truth, window);
  ds.noise_ratio = noise_to_signal_ratio(cfg.noise_std, ds.signal_rms);
  ds.truth = std::move(truth);
  return ds;
}

/// Truth and sensor noise come from separate substreams of cfg.seed.
inline SyntheticDataset generate_dataset(const TruthConfig& cfg) {
  Rng truth_rng = substream(cfg.seed, {0x7472757468ULL});
  Rng noise_rng = substream(cfg.seed, {0x6e6f697365ULL});
  return make_dataset(simulate_truth(cfg, truth_rng), cfg, noise_rng);
}

// ---------------------------------------------------------------------------
// Campaigns

/// A candidate model plus its optional fixed initial stiffness mean.
struct ModelSpec {
  ModelId id = ModelId::M1;
  std::optional<double> initial_stiffness;

  CandidateModel make_model(InitialBeliefSettings init = {}) const {
    return CandidateModel(id, initial_stiffness, init);
  }
  std::string label() const { return make_model().label(); }

  /// Accepts "M5" or "M5(60)".
  static ModelSpec parse(std::string_view text) {
    ModelSpec spec;
    const auto open = text.find('(');
    if (open == std::string_view::npos) {
      spec.id = parse_model_id(text);
    } else {
      if (text.back() != ')') throw ConfigError("malformed model label '" + std::string(text) + "'");
      spec.id = parse_model_id(text.substr(0, open));
      const std::string value(text.substr(open + 1, text.size() - open - 2));
      try {
        spec.initial_stiffness = std::stod(value);
      } catch (const std::exception&) {
        throw ConfigError("malformed initial stiffness in '" + std::string(text) + "'");
      }
    }
    spec.make_model();  // validates the combination
    return spec;
  }
};

inline constexpr double kErroneousInitialStiffness = 60.0;

/// Every model of the candidate set, with the erroneous-initial-mean variants
/// of M4a, M4b and M5 after their nominal counterparts.
inline std::vector<ModelSpec> full_candidate_set() {
  return {{ModelId::M1, {}},
          {ModelId::M2, {}},
          {ModelId::M3, {}},
          {ModelId::M4a, {}},
          {ModelId::M4a, kErroneousInitialStiffness},
          {ModelId::M4b, {}},
          {ModelId::M4b, kErroneousInitialStiffness},
          {ModelId::M5, {}},
          {ModelId::M5, kErroneousInitialStiffness},
          {ModelId::M6, {}}};
}

struct CampaignOptions {
  TmcmcConfig tmcmc;
  double grid_dt = 0.001;
  bool chib_jeliazkov = false;
  std::size_t cj_draws = 0;
  InitialBeliefSettings initial_belief;
};

struct ModelOutcome {
  std::string label;
  bool ok = false;
  std::string error;
  std::vector<std::string> param_names;
  TmcmcRun run;
  EvidenceReport evidence;                     // stage-wise
  std::optional<EvidenceReport> cj_evidence;   // when requested
  Vector map_theta;
  std::string band_slot;
  std::vector<BandRow> band;
  std::vector<Innovation> innovations;
};

/// Likelihood closure for the sampler.
inline auto make_log_likelihood(const CandidateModel& model, const ObservationSeries& data, double grid_dt) {
  return [&model, &data, grid_dt](const Vector& theta) { return log_likelihood(model, theta, data, grid_dt); };
}

/// TMCMC calibration of one model followed by evidence, Occam split and the
/// MAP filter band. Errors are captured in the outcome.
inline ModelOutcome calibrate_model(const ModelSpec& spec, const ObservationSeries& data,
                                    const CampaignOptions& options) {
  ModelOutcome out;
  const CandidateModel model = spec.make_model(options.initial_belief);
  out.label = model.label();
  out.param_names = model.prior().names();
  try {
    const auto log_lik = make_log_likelihood(model, data, options.grid_dt);
    const auto log_pri = [&model](const Vector& theta) { return model.prior().log_density(theta); };
    const auto sampler = [&model](Rng& rng) { return model.prior().sample(rng); };
    out.run = run_tmcmc(log_pri, log_lik, sampler, options.tmcmc);
    out.evidence = occam_decompose(out.run.posterior_log_liks(), log_evidence_stagewise(out.run));

    const Matrix& post = out.run.posterior_samples();
    const Eigen::Index best = max_log_posterior_index(post, out.run.posterior_log_liks(), log_pri);
    out.map_theta = post.row(best).transpose();
    if (options.chib_jeliazkov) {
      Rng rng = substream(options.tmcmc.seed, {0x636a, stable_hash(out.label)});
      const double cj = log_evidence_chib_jeliazkov(log_pri, log_lik, post, out.run.posterior_log_liks(),
                                                    out.map_theta, out.run.stages.back().proposal_cov, rng,
                                                    {options.cj_draws, options.tmcmc.threads});
      out.cj_evidence = occam_decompose(out.run.posterior_log_liks(), cj, EvidenceEstimator::chib_jeliazkov);
    }
    out.band_slot = default_band_slot(model);
    out.band = trajectory_at(model, out.map_theta, data, options.grid_dt, out.band_slot);
    FilterOptions fo;
    fo.record_innovations = true;
    out.innovations = run_filter(model, out.map_theta, data, options.grid_dt, fo).innovations;
    out.ok = true;
  } catch (const Error& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

struct SubsetRow {
  std::string tag;                      // "*", "**"
  std::vector<std::string> excluded;
  ModelComparison comparison;
};

struct CampaignResult {
  int case_id = 0;
  std::uint64_t seed = 0;
  TruthConfig truth;
  std::vector<ModelOutcome> outcomes;
  ModelComparison comparison;
  std::vector<SubsetRow> subsets;
};

/// Subset rows mirroring the published tables: without the generating model
/// (*) and additionally without correctly initialised augmented models (**)
/// for the step cases; without correctly initialised models (*) for case 3.
inline std::vector<std::pair<std::string, std::vector<std::string>>> default_subsets(int case_id) {
  const std::vector<std::string> correct_init{"M4a", "M4b", "M5"};
  switch (case_id) {
    case 1:
    case 2: {
      std::vector<std::string> both{"M1"};
      both.insert(both.end(), correct_init.begin(), correct_init.end());
      return {{"*", {"M1"}}, {"**", both}};
    }
    case 3:
      return {{"*", correct_init}};
    default:
      return {};
  }
}

inline ModelComparison comparison_from(const std::vector<ModelOutcome>& outcomes) {
  std::vector<ComparisonEntry> entries;
  for (const auto& o : outcomes)
    if (o.ok) entries.push_back({o.label, o.evidence});
  return compare_models(std::move(entries));
}

using ProgressFn = std::function<void(const std::string&)>;

/// Calibrates every requested model on one dataset and assembles the
/// comparison plus subset rows. Each model gets its own sampler seed derived
/// from (seed, label).
inline CampaignResult run_case(const SyntheticDataset& dataset, const std::vector<ModelSpec>& models,
                               const CampaignOptions& options, std::uint64_t seed,
                               const std::vector<std::pair<std::string, std::vector<std::string>>>& subsets,
                               const ProgressFn& progress = {}) {
  CampaignResult result;
  result.case_id = dataset.config.case_id;
  result.seed = seed;
  result.truth = dataset.config;
  for (const auto& spec : models) {
    CampaignOptions opts = options;
    opts.tmcmc.seed = derive_seed(seed, {stable_hash(spec.label())});
    if (progress) progress("calibrating " + spec.label());
    result.outcomes.push_back(calibrate_model(spec, dataset.observations, opts));
    if (progress && !result.outcomes.back().ok) progress(spec.label() + " failed: " + result.outcomes.back().error);
  }
  result.comparison = comparison_from(result.outcomes);
  for (const auto& [tag, excluded] : subsets) {
    result.subsets.push_back({tag, excluded, result.comparison.without(excluded)});
  }
  return result;
}

inline CampaignResult run_case(int case_id, const std::vector<ModelSpec>& models, const CampaignOptions& options,
                               std::uint64_t seed, const ProgressFn& progress = {}) {
  const SyntheticDataset ds = generate_dataset(TruthConfig::for_case(case_id, seed));
  return run_case(ds, models, options, seed, default_subsets(case_id), progress);
}

}  // namespace stochcal
