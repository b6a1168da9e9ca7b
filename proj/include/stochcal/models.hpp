#pragma once

// Candidate state-space models for a single-degree-of-freedom oscillator
//
//     m u'' + c u' + K(t) u = f(t)
//
// discretised with Euler-Maruyama. Units: displacement mm, stiffness N/mm,
// damping Ns/mm, force N, time s. The mass is a known constant (1 kg).

#include "stochcal/belief.hpp"
#include "stochcal/random.hpp"
#include "stochcal/types.hpp"

#include <array>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace stochcal {

// ---------------------------------------------------------------------------
// Stiffness schedules (truth dynamics and model M1)

enum class ScheduleKind { constant, step, linear };

struct StiffnessSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double k1 = 0.0;
  double k2 = 0.0;
  double switch_time = 0.0;  // step only
  double horizon = 20.0;     // linear only

  static StiffnessSchedule constant(double k) { return {ScheduleKind::constant, k, 0.0, 0.0, 20.0}; }
  static StiffnessSchedule step(double k1, double k2, double switch_time) {
    return {ScheduleKind::step, k1, k2, switch_time, 20.0};
  }
  static StiffnessSchedule linear(double k1, double k2, double horizon = 20.0) {
    return {ScheduleKind::linear, k1, k2, 0.0, horizon};
  }
};

/// Stiffness at time t. The step schedule is damaged for t >= switch_time.
inline double eval_stiffness(const StiffnessSchedule& s, double t) {
  switch (s.kind) {
    case ScheduleKind::constant:
      return s.k1;
    case ScheduleKind::step:
      return t < s.switch_time ? s.k1 + s.k2 : s.k1;
    case ScheduleKind::linear:
      return s.k1 + s.k2 * (1.0 - t / s.horizon);
  }
  return s.k1;
}

inline std::string_view to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::step: return "step";
    case ScheduleKind::linear: return "linear";
  }
  return "constant";
}

inline ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "step") return ScheduleKind::step;
  if (s == "linear") return ScheduleKind::linear;
  throw ConfigError("unknown stiffness schedule '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Parameters and priors

/// Named, ordered time-invariant parameter values.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::vector<std::string> names, Vector values)
      : names_(std::move(names)), values_(std::move(values)) {
    require_size(values_.size(), static_cast<Eigen::Index>(names_.size()), "ParamVector");
    std::unordered_set<std::string> seen;
    for (const auto& n : names_) {
      if (!seen.insert(n).second) throw ConfigError("duplicate parameter name '" + n + "'");
    }
    if (!values_.allFinite()) throw ConfigError("ParamVector values must be finite");
  }

  const std::vector<std::string>& names() const { return names_; }
  const Vector& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }

  std::optional<Eigen::Index> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return static_cast<Eigen::Index>(i);
    return std::nullopt;
  }

  double at(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw ConfigError("no parameter named '" + std::string(name) + "'");
    return values_[*i];
  }

 private:
  std::vector<std::string> names_;
  Vector values_;
};

struct UniformBound {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
};

/// Independent uniform priors on a box.
class PriorSpec {
 public:
  PriorSpec() = default;
  explicit PriorSpec(std::vector<UniformBound> bounds) : bounds_(std::move(bounds)) {
    std::unordered_set<std::string> seen;
    log_volume_ = 0.0;
    for (const auto& b : bounds_) {
      if (!(b.lo < b.hi)) throw ConfigError("prior bound for '" + b.name + "' needs lo < hi");
      if (!seen.insert(b.name).second) throw ConfigError("duplicate prior name '" + b.name + "'");
      log_volume_ += std::log(b.hi - b.lo);
    }
  }

  Eigen::Index dim() const { return static_cast<Eigen::Index>(bounds_.size()); }
  const std::vector<UniformBound>& bounds() const { return bounds_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& b : bounds_) out.push_back(b.name);
    return out;
  }

  bool contains(const Eigen::Ref<const Vector>& theta) const {
    require_size(theta.size(), dim(), "PriorSpec::contains");
    for (Eigen::Index i = 0; i < dim(); ++i) {
      const auto& b = bounds_[static_cast<std::size_t>(i)];
      if (!(theta[i] >= b.lo && theta[i] <= b.hi)) return false;
    }
    return true;
  }

  /// -sum ln(hi - lo) inside the box, -inf outside. Never throws on support.
  double log_density(const Eigen::Ref<const Vector>& theta) const {
    return contains(theta) ? -log_volume_ : kNegInf;
  }

  Vector sample(Rng& rng) const {
    Vector out(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) {
      const auto& b = bounds_[static_cast<std::size_t>(i)];
      std::uniform_real_distribution<double> u(b.lo, b.hi);
      out[i] = u(rng);
    }
    return out;
  }

 private:
  std::vector<UniformBound> bounds_;
  double log_volume_ = 0.0;
};

// ---------------------------------------------------------------------------
// Candidate models

enum class ModelId { M1, M2, M3, M4a, M4b, M5, M6 };

inline constexpr std::array<ModelId, 7> kAllModelIds{ModelId::M1,  ModelId::M2,  ModelId::M3, ModelId::M4a,
                                                     ModelId::M4b, ModelId::M5, ModelId::M6};

inline std::string_view to_string(ModelId id) {
  switch (id) {
    case ModelId::M1: return "M1";
    case ModelId::M2: return "M2";
    case ModelId::M3: return "M3";
    case ModelId::M4a: return "M4a";
    case ModelId::M4b: return "M4b";
    case ModelId::M5: return "M5";
    case ModelId::M6: return "M6";
  }
  return "M1";
}

inline ModelId parse_model_id(std::string_view s) {
  for (ModelId id : kAllModelIds)
    if (to_string(id) == s) return id;
  throw ConfigError("unknown model id '" + std::string(s) + "' (expected M1, M2, M3, M4a, M4b, M5 or M6)");
}

/// How the stiffness and forcing enter the state-space model.
enum class Structure {
  step_stiffness,      // M1: K(t) step function of static parameters
  constant_stiffness,  // M2
  coloured_forcing,    // M3: Ornstein-Uhlenbeck forcing appended to the state
  augmented_stiffness  // M4a, M4b, M5, M6: K appended to the state as a random walk
};

struct StateLayout {
  std::vector<std::string> slots;
  int noise_dim = 1;

  int state_dim() const { return static_cast<int>(slots.size()); }

  std::optional<Eigen::Index> index_of(std::string_view slot) const {
    for (std::size_t i = 0; i < slots.size(); ++i)
      if (slots[i] == slot) return static_cast<Eigen::Index>(i);
    return std::nullopt;
  }
};

/// Physical parameters resolved from a sample-space point plus fixed settings.
struct OscillatorParams {
  StiffnessSchedule stiffness;        // M1 step, M2/M3 constant
  double mass = 1.0;
  double damping = 0.0;               // c
  double forcing = 0.0;               // sigma
  double relaxation_time = 1.0;       // tau (M3)
  double stiffness_diffusion = 0.0;   // gamma (M4-M6)
  double initial_stiffness = 0.0;     // E[K(0)] (M4-M6)
};

/// Prior standard deviations of the initial belief; the displacement variance
/// is the sensor noise variance.
struct InitialBeliefSettings {
  double velocity_std = 50.0;   // mm/s
  double stiffness_std = 25.0;  // N/mm
};

class CandidateModel {
 public:
  static constexpr double kMass = 1.0;
  static constexpr double kNominalInitialStiffness = 80.0;

  explicit CandidateModel(ModelId id, std::optional<double> initial_stiffness = std::nullopt,
                          InitialBeliefSettings init = {})
      : id_(id), init_(init) {
    const UniformBound damping{"c", 0.0, 5.0};
    const UniformBound forcing{"sigma", 0.0, 1000.0};
    const UniformBound gamma{"gamma", 0.0, 1000.0};
    switch (id) {
      case ModelId::M1:
        structure_ = Structure::step_stiffness;
        layout_ = {{"u", "v"}, 1};
        prior_ = PriorSpec({{"k1", 0.0, 1000.0}, {"k2", 0.0, 1000.0}, {"ts", 0.0, 20.0}, damping, forcing});
        break;
      case ModelId::M2:
        structure_ = Structure::constant_stiffness;
        layout_ = {{"u", "v"}, 1};
        prior_ = PriorSpec({{"K", 0.0, 1000.0}, damping, forcing});
        break;
      case ModelId::M3:
        structure_ = Structure::coloured_forcing;
        layout_ = {{"u", "v", "f"}, 1};
        prior_ = PriorSpec({{"K", 0.0, 1000.0}, damping, forcing, {"tau", 0.0, 10.0}});
        break;
      case ModelId::M4a:
      case ModelId::M4b:
        structure_ = Structure::augmented_stiffness;
        layout_ = {{"u", "v", "K"}, 2};
        prior_ = PriorSpec({damping, forcing});
        fixed_gamma_ = id == ModelId::M4a ? 1.0 : 10.0;
        break;
      case ModelId::M5:
        structure_ = Structure::augmented_stiffness;
        layout_ = {{"u", "v", "K"}, 2};
        prior_ = PriorSpec({damping, forcing, gamma});
        break;
      case ModelId::M6:
        structure_ = Structure::augmented_stiffness;
        layout_ = {{"u", "v", "K"}, 2};
        prior_ = PriorSpec({{"K0", 0.0, 100.0}, damping, forcing, gamma});
        break;
    }
    const bool fixed_mean = id == ModelId::M4a || id == ModelId::M4b || id == ModelId::M5;
    if (fixed_mean) {
      fixed_initial_stiffness_ = initial_stiffness.value_or(kNominalInitialStiffness);
    } else if (initial_stiffness) {
      throw ConfigError("model " + std::string(to_string(id)) + " does not take a fixed initial stiffness");
    }
  }

  ModelId id() const { return id_; }
  Structure structure() const { return structure_; }
  const StateLayout& layout() const { return layout_; }
  const PriorSpec& prior() const { return prior_; }
  const InitialBeliefSettings& initial_belief_settings() const { return init_; }
  std::optional<double> fixed_gamma() const { return fixed_gamma_; }
  std::optional<double> fixed_initial_stiffness() const { return fixed_initial_stiffness_; }

  /// "M5" for the nominal initial stiffness, "M5(60)" otherwise.
  std::string label() const {
    std::string out(to_string(id_));
    if (fixed_initial_stiffness_ && *fixed_initial_stiffness_ != kNominalInitialStiffness) {
      std::ostringstream os;
      os << '(' << *fixed_initial_stiffness_ << ')';
      out += os.str();
    }
    return out;
  }

  ParamVector make_params(const Vector& theta) const { return ParamVector(prior_.names(), theta); }

  /// Maps a sample-space point to physical parameters.
  OscillatorParams resolve(const Eigen::Ref<const Vector>& theta) const {
    require_size(theta.size(), prior_.dim(), "CandidateModel::resolve");
    OscillatorParams p;
    p.mass = kMass;
    switch (id_) {
      case ModelId::M1:
        p.stiffness = StiffnessSchedule::step(theta[0], theta[1], theta[2]);
        p.damping = theta[3];
        p.forcing = theta[4];
        break;
      case ModelId::M2:
        p.stiffness = StiffnessSchedule::constant(theta[0]);
        p.damping = theta[1];
        p.forcing = theta[2];
        break;
      case ModelId::M3:
        p.stiffness = StiffnessSchedule::constant(theta[0]);
        p.damping = theta[1];
        p.forcing = theta[2];
        p.relaxation_time = theta[3];
        break;
      case ModelId::M4a:
      case ModelId::M4b:
        p.damping = theta[0];
        p.forcing = theta[1];
        p.stiffness_diffusion = *fixed_gamma_;
        p.initial_stiffness = *fixed_initial_stiffness_;
        break;
      case ModelId::M5:
        p.damping = theta[0];
        p.forcing = theta[1];
        p.stiffness_diffusion = theta[2];
        p.initial_stiffness = *fixed_initial_stiffness_;
        break;
      case ModelId::M6:
        p.initial_stiffness = theta[0];
        p.damping = theta[1];
        p.forcing = theta[2];
        p.stiffness_diffusion = theta[3];
        break;
    }
    if (structure_ == Structure::augmented_stiffness) p.stiffness = StiffnessSchedule::constant(p.initial_stiffness);
    return p;
  }

  /// Initial belief from the first observation: u ~ N(d0, noise_var),
  /// v ~ N(0, velocity_std^2); the third slot is the stiffness
  /// (N(E[K(0)], stiffness_std^2)) or the OU forcing at its stationary law.
  GaussianBelief<> initial_belief(const OscillatorParams& p, double first_observation, double noise_var) const {
    const int n = layout_.state_dim();
    GaussianBelief<> b{Vector::Zero(n), Matrix::Zero(n, n)};
    b.mean[0] = first_observation;
    b.cov(0, 0) = noise_var;
    b.cov(1, 1) = init_.velocity_std * init_.velocity_std;
    if (structure_ == Structure::augmented_stiffness) {
      b.mean[2] = p.initial_stiffness;
      b.cov(2, 2) = init_.stiffness_std * init_.stiffness_std;
    } else if (structure_ == Structure::coloured_forcing) {
      b.cov(2, 2) = 0.5 * p.forcing * p.forcing * p.relaxation_time;
    }
    return b;
  }

 private:
  ModelId id_;
  Structure structure_ = Structure::constant_stiffness;
  StateLayout layout_;
  PriorSpec prior_;
  InitialBeliefSettings init_;
  std::optional<double> fixed_gamma_;
  std::optional<double> fixed_initial_stiffness_;
};

// ---------------------------------------------------------------------------
// Discrete dynamics

namespace detail {

// Shared by every structure so that M4-M6 with a frozen stiffness slot
// reproduce M2 bit for bit.
inline double next_velocity(double u, double v, double stiffness, double damping, double mass, double dt) {
  return -dt / mass * u * stiffness + (1.0 - dt * damping / mass) * v;
}

}  // namespace detail

/// One Euler-Maruyama step of a candidate model with fixed-size state (N) and
/// noise (Q) dimensions: (2,1) for M1/M2, (3,1) for M3, (3,2) for M4-M6.
template <int N, int Q>
class OscillatorDynamics {
 public:
  static constexpr int kStateDim = N;
  static constexpr int kNoiseDim = Q;
  using State = Eigen::Matrix<double, N, 1>;
  using Noise = Eigen::Matrix<double, Q, 1>;
  using StateJacobian = Eigen::Matrix<double, N, N>;
  using NoiseJacobian = Eigen::Matrix<double, N, Q>;

  OscillatorDynamics(Structure structure, const OscillatorParams& params) : s_(structure), p_(params) {
    const bool ok = (N == 2 && Q == 1 &&
                     (s_ == Structure::step_stiffness || s_ == Structure::constant_stiffness)) ||
                    (N == 3 && Q == 1 && s_ == Structure::coloured_forcing) ||
                    (N == 3 && Q == 2 && s_ == Structure::augmented_stiffness);
    if (!ok) throw DimensionError("OscillatorDynamics: structure does not match state/noise dimensions");
  }

  const OscillatorParams& params() const { return p_; }

  State step(const State& x, double t, double dt, const Noise& xi) const {
    const double m = p_.mass;
    const double sqdt = std::sqrt(dt);
    State out;
    out[0] = x[0] + dt * x[1];
    if constexpr (N == 2) {
      const double k = eval_stiffness(p_.stiffness, t);
      out[1] = detail::next_velocity(x[0], x[1], k, p_.damping, m, dt) + sqdt * p_.forcing * xi[0] / m;
    } else if constexpr (Q == 1) {
      const double k = p_.stiffness.k1;
      out[1] = detail::next_velocity(x[0], x[1], k, p_.damping, m, dt) + dt / m * x[2];
      out[2] = (1.0 - dt / p_.relaxation_time) * x[2] + sqdt * p_.forcing * xi[0];
    } else {
      out[1] = detail::next_velocity(x[0], x[1], x[2], p_.damping, m, dt) + sqdt * p_.forcing * xi[0] / m;
      out[2] = x[2] + sqdt * p_.stiffness_diffusion * xi[1];
    }
    return out;
  }

  State propagate(const State& x, double t, double dt) const { return step(x, t, dt, Noise::Zero()); }

  StateJacobian state_jacobian(const State& x, double t, double dt) const {
    const double m = p_.mass;
    StateJacobian a = StateJacobian::Zero();
    a(0, 0) = 1.0;
    a(0, 1) = dt;
    a(1, 1) = 1.0 - dt * p_.damping / m;
    if constexpr (N == 2) {
      a(1, 0) = -dt / m * eval_stiffness(p_.stiffness, t);
    } else if constexpr (Q == 1) {
      a(1, 0) = -dt / m * p_.stiffness.k1;
      a(1, 2) = dt / m;
      a(2, 2) = 1.0 - dt / p_.relaxation_time;
    } else {
      a(1, 0) = -dt / m * x[2];
      a(1, 2) = -dt / m * x[0];
      a(2, 2) = 1.0;
    }
    return a;
  }

  NoiseJacobian noise_jacobian(const State& /*x*/, double /*t*/, double dt) const {
    const double sqdt = std::sqrt(dt);
    NoiseJacobian b = NoiseJacobian::Zero();
    if constexpr (N == 2) {
      b(1, 0) = sqdt * p_.forcing / p_.mass;
    } else if constexpr (Q == 1) {
      b(2, 0) = sqdt * p_.forcing;
    } else {
      b(1, 0) = sqdt * p_.forcing / p_.mass;
      b(2, 1) = sqdt * p_.stiffness_diffusion;
    }
    return b;
  }

 private:
  Structure s_;
  OscillatorParams p_;
};

/// Calls fn(dynamics) with the fixed-size dynamics matching the model.
template <class Fn>
decltype(auto) visit_dynamics(const CandidateModel& model, const OscillatorParams& params, Fn&& fn) {
  switch (model.structure()) {
    case Structure::step_stiffness:
    case Structure::constant_stiffness:
      return fn(OscillatorDynamics<2, 1>(model.structure(), params));
    case Structure::coloured_forcing:
      return fn(OscillatorDynamics<3, 1>(model.structure(), params));
    case Structure::augmented_stiffness:
      break;
  }
  return fn(OscillatorDynamics<3, 2>(model.structure(), params));
}

// Dynamic-size entry points. `t` is the time at the start of the step; only
// M1 depends on it.

inline Vector step_state(const CandidateModel& model, const OscillatorParams& params, const Vector& x, double dt,
                         const Vector& xi, double t = 0.0) {
  require_size(x.size(), model.layout().state_dim(), "step_state: state");
  require_size(xi.size(), model.layout().noise_dim, "step_state: noise");
  if (!(dt > 0.0)) throw ConfigError("step_state: dt must be positive");
  return visit_dynamics(model, params, [&](const auto& dyn) -> Vector {
    using D = std::decay_t<decltype(dyn)>;
    return dyn.step(typename D::State(x), t, dt, typename D::Noise(xi));
  });
}

inline Matrix jacobian_state(const CandidateModel& model, const OscillatorParams& params, const Vector& x, double dt,
                             double t = 0.0) {
  require_size(x.size(), model.layout().state_dim(), "jacobian_state: state");
  return visit_dynamics(model, params, [&](const auto& dyn) -> Matrix {
    using D = std::decay_t<decltype(dyn)>;
    return dyn.state_jacobian(typename D::State(x), t, dt);
  });
}

inline Matrix jacobian_noise(const CandidateModel& model, const OscillatorParams& params, const Vector& x, double dt,
                             double t = 0.0) {
  require_size(x.size(), model.layout().state_dim(), "jacobian_noise: state");
  return visit_dynamics(model, params, [&](const auto& dyn) -> Matrix {
    using D = std::decay_t<decltype(dyn)>;
    return dyn.noise_jacobian(typename D::State(x), t, dt);
  });
}

/// Displacement observation d = u + eps.
inline double measure(const Eigen::Ref<const Vector>& x) { return x[0]; }

struct MeasurementJacobian {
  Eigen::RowVectorXd state;  // C
  double noise = 1.0;        // D
};

inline MeasurementJacobian jacobian_meas(const CandidateModel& model) {
  MeasurementJacobian j{Eigen::RowVectorXd::Zero(model.layout().state_dim()), 1.0};
  j.state[0] = 1.0;
  return j;
}

inline double log_prior(const Eigen::Ref<const Vector>& theta, const PriorSpec& prior) {
  return prior.log_density(theta);
}

inline ParamVector sample_prior(const CandidateModel& model, Rng& rng) {
  return model.make_params(model.prior().sample(rng));
}

}  // namespace stochcal
