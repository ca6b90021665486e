#include "obed/models/source.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "obed/json_eigen.hpp"

namespace obed {

void SourceConfig::validate() const {
  if (sensors.empty()) throw std::invalid_argument("source.sensors must not be empty");
  if (strength.size() != num_sensors()) {
    throw std::invalid_argument("source.strength must have one entry per sensor");
  }
  if ((strength.array() <= 0.0).any()) throw std::invalid_argument("source.strength must be > 0");
  if (!(background > 0.0)) throw std::invalid_argument("source.background must be > 0");
  if (!(saturation > 0.0)) throw std::invalid_argument("source.saturation must be > 0");
  if (!(directivity_d >= 0.0 && directivity_d <= 1.0)) {
    throw std::invalid_argument("source.directivity_d must lie in [0, 1]");
  }
  if (!(directivity_k >= 1.0)) throw std::invalid_argument("source.directivity_k must be >= 1");
  if (!(noise_var > 0.0)) throw std::invalid_argument("source.noise_var must be > 0");
  if (!(step > 0.0)) throw std::invalid_argument("source.step must be > 0");
  if ((process_var.array() < 0.0).any()) {
    throw std::invalid_argument("source.process_var must be >= 0");
  }
  if ((prior_lower.array() >= prior_upper.array()).any()) {
    throw std::invalid_argument("source.prior_lower must be below source.prior_upper");
  }
}

nlohmann::json SourceConfig::to_json() const {
  nlohmann::json s = nlohmann::json::array();
  for (const auto& p : sensors) s.push_back(p);
  return {{"type", "source"},
          {"sensors", s},
          {"strength", strength},
          {"background", background},
          {"saturation", saturation},
          {"directivity_d", directivity_d},
          {"directivity_k", directivity_k},
          {"noise_var", noise_var},
          {"step", step},
          {"process_var", process_var},
          {"angular_velocity", angular_velocity},
          {"prior_lower", prior_lower},
          {"prior_upper", prior_upper},
          {"true_param", true_param},
          {"initial_state", initial_state}};
}

SourceConfig SourceConfig::from_json(const nlohmann::json& j) {
  SourceConfig c;
  read_optional(j, "sensors", c.sensors);
  if (j.contains("sensors") && !j.contains("strength")) {
    c.strength = Eigen::VectorXd::Constant(c.num_sensors(), 5.0);
  }
  read_optional(j, "strength", c.strength);
  read_optional(j, "background", c.background);
  read_optional(j, "saturation", c.saturation);
  read_optional(j, "directivity_d", c.directivity_d);
  read_optional(j, "directivity_k", c.directivity_k);
  read_optional(j, "noise_var", c.noise_var);
  read_optional(j, "step", c.step);
  read_optional(j, "process_var", c.process_var);
  read_optional(j, "angular_velocity", c.angular_velocity);
  read_optional(j, "prior_lower", c.prior_lower);
  read_optional(j, "prior_upper", c.prior_upper);
  read_optional(j, "true_param", c.true_param);
  read_optional(j, "initial_state", c.initial_state);
  c.validate();
  return c;
}

double directivity_derivative(double delta, double d, double k) {
  const double base = (1.0 + d * std::cos(delta)) / (1.0 + d);
  return k * std::pow(base, k - 1.0) * (-d * std::sin(delta)) / (1.0 + d);
}

SourceState source_step(const SourceState& state, const ConstVec& theta,
                        const SourceConfig& config, const Eigen::Vector3d& noise) {
  const double dt = config.step;
  SourceState next;
  next(0) = state(0) + theta(0) * std::cos(state(2)) * dt;
  next(1) = state(1) + theta(1) * std::sin(state(2)) * dt;
  next(2) = state(2) + config.angular_velocity * dt;
  next.array() += (config.process_var.array() * dt).sqrt() * noise.array();
  next(2) = wrap_angle(next(2));
  return next;
}

SourceState source_step(const SourceState& state, const ConstVec& theta,
                        const SourceConfig& config, RngStream& rng) {
  Eigen::Vector3d noise;
  for (int k = 0; k < 3; ++k) noise(k) = rng.normal();
  return source_step(state, theta, config, noise);
}

Eigen::VectorXd source_bearings(const SourceState& state, const SourceConfig& config) {
  Eigen::VectorXd psi(config.num_sensors());
  for (Eigen::Index j = 0; j < psi.size(); ++j) {
    const Eigen::Vector2d& s = config.sensors[static_cast<std::size_t>(j)];
    psi(j) = std::atan2(state(1) - s(1), state(0) - s(0));
  }
  return psi;
}

namespace {

void check_design(const ConstVec& xi, const SourceConfig& config) {
  if (xi.size() != config.num_sensors()) {
    throw std::invalid_argument("source design must have one orientation per sensor");
  }
}

void check_positive(const ConstVec& y, const SourceConfig& config) {
  if (y.size() != config.num_sensors()) {
    throw std::invalid_argument("source observation must have one entry per sensor");
  }
  if (!(y.array() > 0.0).all()) {
    throw std::invalid_argument("source observation must be strictly positive");
  }
}

// Median intensity of sensor j and its derivative in the orientation xi_j.
void sensor_response(const SourceState& state, Eigen::Index j, double xi_j,
                     const SourceConfig& config, double& mu, double& dmu) {
  const Eigen::Vector2d& s = config.sensors[static_cast<std::size_t>(j)];
  const double dx = state(0) - s(0);
  const double dy = state(1) - s(1);
  const double a = config.strength(j) / (config.saturation + dx * dx + dy * dy);
  const double delta = xi_j - std::atan2(dy, dx);
  const double d = config.directivity_d;
  const double k = config.directivity_k;
  const double base = (1.0 + d * std::cos(delta)) / (1.0 + d);
  const double pk1 = std::pow(base, k - 1.0);
  mu = config.background + a * pk1 * base;
  dmu = a * k * pk1 * (-d * std::sin(delta)) / (1.0 + d);
}

}  // namespace

Eigen::VectorXd source_mu(const SourceState& state, const ConstVec& xi,
                          const SourceConfig& config) {
  check_design(xi, config);
  Eigen::VectorXd mu(config.num_sensors());
  double dmu = 0.0;
  for (Eigen::Index j = 0; j < mu.size(); ++j) sensor_response(state, j, xi(j), config, mu(j), dmu);
  return mu;
}

Eigen::VectorXd source_mu_derivative(const SourceState& state, const ConstVec& xi,
                                     const SourceConfig& config) {
  check_design(xi, config);
  Eigen::VectorXd d(config.num_sensors());
  double mu = 0.0;
  for (Eigen::Index j = 0; j < d.size(); ++j) sensor_response(state, j, xi(j), config, mu, d(j));
  return d;
}

double source_log_obs(const ConstVec& y, const SourceState& state, const ConstVec& xi,
                      const SourceConfig& config) {
  check_positive(y, config);
  const Eigen::VectorXd mu = source_mu(state, xi, config);
  const double s2 = config.noise_var;
  double lp = 0.0;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    const double z = std::log(y(j)) - std::log(mu(j));
    lp += -std::log(y(j)) - 0.5 * std::log(2.0 * std::numbers::pi * s2) - 0.5 * z * z / s2;
  }
  return lp;
}

Eigen::VectorXd source_grad_xi_log_obs(const ConstVec& y, const SourceState& state,
                                       const ConstVec& xi, const SourceConfig& config) {
  check_positive(y, config);
  const Eigen::VectorXd mu = source_mu(state, xi, config);
  const Eigen::VectorXd dmu = source_mu_derivative(state, xi, config);
  Eigen::VectorXd g(mu.size());
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    g(j) = (std::log(y(j)) - std::log(mu(j))) / config.noise_var * dmu(j) / mu(j);
  }
  return g;
}

Eigen::VectorXd pointing_error(const ConstVec& xi, const SourceState& state,
                               const SourceConfig& config) {
  check_design(xi, config);
  const Eigen::VectorXd psi = source_bearings(state, config);
  Eigen::VectorXd err(psi.size());
  for (Eigen::Index j = 0; j < err.size(); ++j) {
    const Eigen::Vector2d& s = config.sensors[static_cast<std::size_t>(j)];
    if ((state.head<2>() - s).squaredNorm() == 0.0) {
      err(j) = std::numeric_limits<double>::quiet_NaN();
    } else {
      err(j) = std::abs(wrap_angle(xi(j) - psi(j))) * 180.0 / std::numbers::pi;
    }
  }
  return err;
}

SourceModel::SourceModel(SourceConfig config) : config_(std::move(config)) { config_.validate(); }

Eigen::VectorXd SourceModel::sample_param_prior(RngStream& rng) const {
  Eigen::VectorXd theta(2);
  for (int i = 0; i < 2; ++i) {
    theta(i) = config_.prior_lower(i) + (config_.prior_upper(i) - config_.prior_lower(i)) * rng.uniform();
  }
  return theta;
}

Eigen::VectorXd SourceModel::sample_state_prior(RngStream&) const { return config_.initial_state; }

void SourceModel::sample_transition(const ConstVec& x_prev, const ConstVec& theta, const ConstVec&,
                                    RngStream& rng, VecRef out) const {
  out = source_step(SourceState(x_prev), theta, config_, rng);
}

double SourceModel::log_transition(const ConstVec& x_new, const ConstVec& x_prev,
                                   const ConstVec& theta, const ConstVec&) const {
  const SourceState mean = source_step(SourceState(x_prev), theta, config_, Eigen::Vector3d::Zero());
  Eigen::Vector3d d = x_new - mean;
  d(2) = wrap_angle(d(2));
  double lp = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double var = config_.process_var(k) * config_.step;
    if (var > 0.0) {
      lp += -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * d(k) * d(k) / var;
    } else if (std::abs(d(k)) > 1e-12) {
      return -std::numeric_limits<double>::infinity();
    }
  }
  return lp;
}

Eigen::VectorXd SourceModel::grad_xi_log_transition(const ConstVec&, const ConstVec&,
                                                    const ConstVec&, const ConstVec&) const {
  return Eigen::VectorXd::Zero(design_dim());
}

void SourceModel::sample_observation(const ConstVec& x, const ConstVec&, const ConstVec& xi,
                                     RngStream& rng, VecRef out) const {
  const Eigen::VectorXd mu = source_mu(SourceState(x), xi, config_);
  const double sd = std::sqrt(config_.noise_var);
  for (Eigen::Index j = 0; j < mu.size(); ++j) out(j) = mu(j) * std::exp(sd * rng.normal());
}

double SourceModel::log_observation(const ConstVec& y, const ConstVec& x, const ConstVec&,
                                    const ConstVec& xi) const {
  return source_log_obs(y, SourceState(x), xi, config_);
}

Eigen::VectorXd SourceModel::grad_xi_log_observation(const ConstVec& y, const ConstVec& x,
                                                     const ConstVec&, const ConstVec& xi) const {
  return source_grad_xi_log_obs(y, SourceState(x), xi, config_);
}

Eigen::VectorXd SourceModel::project_state(const ConstVec& x) const {
  Eigen::VectorXd out = x;
  out(2) = wrap_angle(out(2));
  return out;
}

double SourceModel::observation_statistic(const ConstVec& y, VecRef stat) const {
  check_positive(y, config_);
  const double s2 = config_.noise_var;
  double h = -0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi * s2);
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    const double ly = std::log(y(j));
    stat(j) = ly;
    h += -ly - 0.5 * ly * ly / s2;
  }
  return h;
}

double SourceModel::observation_natural(const ConstVec& x, const ConstVec&, const ConstVec& xi,
                                        VecRef natural, MatRef natural_grad,
                                        VecRef normalizer_grad) const {
  check_design(xi, config_);
  const SourceState state(x);
  const double s2 = config_.noise_var;
  natural_grad.setZero();
  double normalizer = 0.0;
  for (Eigen::Index j = 0; j < config_.num_sensors(); ++j) {
    double mu = 0.0, dmu = 0.0;
    sensor_response(state, j, xi(j), config_, mu, dmu);
    const double lm = std::log(mu);
    const double dlm = dmu / mu;
    natural(j) = lm / s2;
    natural_grad(j, j) = dlm / s2;
    normalizer += 0.5 * lm * lm / s2;
    normalizer_grad(j) = lm * dlm / s2;
  }
  return normalizer;
}

DesignVector SourceModel::random_design(RngStream& rng) const {
  return uniform_design(Reparam::AngleWrap, design_dim(), rng, -std::numbers::pi, std::numbers::pi);
}

Eigen::VectorXd SourceModel::design_diagnostics(const ConstVec& xi, const ConstVec& x_true) const {
  return pointing_error(xi, SourceState(x_true), config_);
}

}  // namespace obed
