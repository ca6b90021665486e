#include "obed/models/sir.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "obed/json_eigen.hpp"

namespace obed {

void SirConfig::validate() const {
  if ((population.array() <= 0.0).any()) throw std::invalid_argument("sir.population must be > 0");
  if ((detection.array() <= 0.0).any()) throw std::invalid_argument("sir.detection must be > 0");
  if (!(sampling_effort > 0.0)) throw std::invalid_argument("sir.sampling_effort must be > 0");
  if (!(step > 0.0)) throw std::invalid_argument("sir.step must be > 0");
  if ((mixing.array() < 0.0).any() ||
      ((mixing.rowwise().sum().array() - 1.0).abs() > 1e-9).any()) {
    throw std::invalid_argument("sir.mixing must be nonnegative with rows summing to 1");
  }
  if ((initial_infected.array() < 0.0).any() ||
      (initial_infected.array() > population.array()).any()) {
    throw std::invalid_argument("sir.initial_infected must lie in [0, population]");
  }
  if ((prior_lower.array() >= prior_upper.array()).any()) {
    throw std::invalid_argument("sir.prior_lower must be below sir.prior_upper");
  }
  if (!(rate_floor >= 0.0)) throw std::invalid_argument("sir.rate_floor must be >= 0");
  if (beta2 < 0.0 || gamma2 < 0.0 || (true_param.array() < 0.0).any()) {
    throw std::invalid_argument("sir rates must be >= 0");
  }
}

nlohmann::json SirConfig::to_json() const {
  return {{"type", "sir"},
          {"population", population},
          {"initial_infected", initial_infected},
          {"detection", detection},
          {"sampling_effort", sampling_effort},
          {"mixing", mixing},
          {"step", step},
          {"beta2", beta2},
          {"gamma2", gamma2},
          {"prior_lower", prior_lower},
          {"prior_upper", prior_upper},
          {"true_param", true_param},
          {"rate_floor", rate_floor}};
}

SirConfig SirConfig::from_json(const nlohmann::json& j) {
  SirConfig c;
  read_optional(j, "population", c.population);
  read_optional(j, "initial_infected", c.initial_infected);
  read_optional(j, "detection", c.detection);
  read_optional(j, "sampling_effort", c.sampling_effort);
  read_optional(j, "mixing", c.mixing);
  read_optional(j, "step", c.step);
  read_optional(j, "beta2", c.beta2);
  read_optional(j, "gamma2", c.gamma2);
  read_optional(j, "prior_lower", c.prior_lower);
  read_optional(j, "prior_upper", c.prior_upper);
  read_optional(j, "true_param", c.true_param);
  read_optional(j, "rate_floor", c.rate_floor);
  c.validate();
  return c;
}

const Eigen::Matrix4d& sir_stoichiometry() {
  static const Eigen::Matrix4d S =
      (Eigen::Matrix4d() << -1, 0, 0, 0,
                             1, -1, 0, 0,
                             0, 0, -1, 0,
                             0, 0, 1, -1).finished();
  return S;
}

SirState sir_project(const SirState& state, const SirConfig& config) {
  SirState out;
  for (int g = 0; g < 2; ++g) {
    const double n = config.population(g);
    const double s = std::min(n, std::max(0.0, state(2 * g)));
    const double i = std::min(n - s, std::max(0.0, state(2 * g + 1)));
    out(2 * g) = s;
    out(2 * g + 1) = i;
  }
  return out;
}

SirState sir_em_step(const SirState& state, const Eigen::Vector2d& beta,
                     const Eigen::Vector2d& gamma, const SirConfig& config,
                     const Eigen::Vector4d& dW) {
  const Eigen::Vector4d a = sir_rates<double>(state, beta, gamma, config);
  if ((a.array() < 0.0).any() || !a.allFinite()) {
    throw std::domain_error("negative or non-finite SIR rate; state is infeasible");
  }
  const Eigen::Matrix4d& S = sir_stoichiometry();
  const SirState raw = state + S * (a * config.step) + S * (a.array().sqrt() * dW.array()).matrix();
  return sir_project(raw, config);
}

SirState sir_em_step(const SirState& state, const Eigen::Vector2d& beta,
                     const Eigen::Vector2d& gamma, const SirConfig& config, RngStream& rng) {
  const double sd = std::sqrt(config.step);
  Eigen::Vector4d dW;
  for (int k = 0; k < 4; ++k) dW(k) = sd * rng.normal();
  return sir_em_step(state, beta, gamma, config, dW);
}

namespace {

// kappa rho_g I^g / N_g, the rate per unit of design.
Eigen::Vector2d effort_slope(const SirState& state, const SirConfig& config) {
  return {config.sampling_effort * config.detection(0) * state(1) / config.population(0),
          config.sampling_effort * config.detection(1) * state(3) / config.population(1)};
}

void check_counts(const ConstVec& y) {
  if (y.size() != 2) throw std::invalid_argument("SIR observation must have 2 components");
  for (Eigen::Index g = 0; g < 2; ++g) {
    if (!(y(g) >= 0.0) || y(g) != std::floor(y(g))) {
      throw std::invalid_argument("SIR observation must be a nonnegative integer count, got " +
                                  std::to_string(y(g)));
    }
  }
}

}  // namespace

Eigen::Vector2d sir_obs_rate(const SirState& state, const ConstVec& xi, const SirConfig& config) {
  const Eigen::Vector2d slope = effort_slope(state, config);
  return {std::max(xi(0) * slope(0), config.rate_floor),
          std::max(xi(1) * slope(1), config.rate_floor)};
}

double sir_log_obs(const ConstVec& y, const SirState& state, const ConstVec& xi,
                   const SirConfig& config) {
  check_counts(y);
  const Eigen::Vector2d lambda = sir_obs_rate(state, xi, config);
  double lp = 0.0;
  for (int g = 0; g < 2; ++g) {
    // y log(0) with y = 0 is taken as 0
    const double term = y(g) == 0.0 ? 0.0 : y(g) * std::log(lambda(g));
    lp += term - lambda(g) - std::lgamma(y(g) + 1.0);
  }
  return lp;
}

Eigen::Vector2d sir_grad_xi_log_obs(const ConstVec& y, const SirState& state, const ConstVec& xi,
                                    const SirConfig& config) {
  check_counts(y);
  const Eigen::Vector2d slope = effort_slope(state, config);
  Eigen::Vector2d grad;
  for (int g = 0; g < 2; ++g) {
    const double raw = xi(g) * slope(g);
    grad(g) = raw > config.rate_floor && raw > 0.0 ? (y(g) / raw - 1.0) * slope(g) : 0.0;
  }
  return grad;
}

SirModel::SirModel(SirConfig config) : config_(std::move(config)) { config_.validate(); }

Eigen::VectorXd SirModel::sample_param_prior(RngStream& rng) const {
  Eigen::VectorXd theta(2);
  for (int i = 0; i < 2; ++i) {
    theta(i) = config_.prior_lower(i) + (config_.prior_upper(i) - config_.prior_lower(i)) * rng.uniform();
  }
  return theta;
}

Eigen::VectorXd SirModel::true_initial_state() const {
  Eigen::VectorXd x(4);
  x << config_.population(0) - config_.initial_infected(0), config_.initial_infected(0),
      config_.population(1) - config_.initial_infected(1), config_.initial_infected(1);
  return x;
}

Eigen::VectorXd SirModel::sample_state_prior(RngStream&) const { return true_initial_state(); }

void SirModel::sample_transition(const ConstVec& x_prev, const ConstVec& theta, const ConstVec&,
                                 RngStream& rng, VecRef out) const {
  out = sir_em_step(x_prev, {theta(0), config_.beta2}, {theta(1), config_.gamma2}, config_, rng);
}

double SirModel::log_transition(const ConstVec& x_new, const ConstVec& x_prev,
                                const ConstVec& theta, const ConstVec&) const {
  // Density of the unprojected Euler-Maruyama increment; states on the
  // projection boundary are scored as if no clamp had been applied.
  const Eigen::Vector4d a = sir_rates<double>(SirState(x_prev), Eigen::Vector2d(theta(0), config_.beta2),
                                              Eigen::Vector2d(theta(1), config_.gamma2), config_);
  const Eigen::Vector4d d = x_new - x_prev;
  Eigen::Vector4d u;
  u << -d(0), -d(0) - d(1), -d(2), -d(2) - d(3);
  u -= a * config_.step;
  double lp = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double var = a(k) * config_.step;
    if (var > 0.0) {
      lp += -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * u(k) * u(k) / var;
    } else if (std::abs(u(k)) > 1e-12) {
      return -std::numeric_limits<double>::infinity();
    }
  }
  return lp;
}

Eigen::VectorXd SirModel::grad_xi_log_transition(const ConstVec&, const ConstVec&, const ConstVec&,
                                                 const ConstVec&) const {
  return Eigen::VectorXd::Zero(2);
}

void SirModel::sample_observation(const ConstVec& x, const ConstVec&, const ConstVec& xi,
                                  RngStream& rng, VecRef out) const {
  const Eigen::Vector2d lambda = sir_obs_rate(SirState(x), xi, config_);
  for (int g = 0; g < 2; ++g) {
    std::poisson_distribution<long> pois(lambda(g));
    out(g) = static_cast<double>(pois(rng));
  }
}

double SirModel::log_observation(const ConstVec& y, const ConstVec& x, const ConstVec&,
                                 const ConstVec& xi) const {
  return sir_log_obs(y, SirState(x), xi, config_);
}

Eigen::VectorXd SirModel::grad_xi_log_observation(const ConstVec& y, const ConstVec& x,
                                                  const ConstVec&, const ConstVec& xi) const {
  return sir_grad_xi_log_obs(y, SirState(x), xi, config_);
}

Eigen::VectorXd SirModel::project_state(const ConstVec& x) const {
  return sir_project(SirState(x), config_);
}

double SirModel::observation_statistic(const ConstVec& y, VecRef stat) const {
  check_counts(y);
  stat = y;
  return -std::lgamma(y(0) + 1.0) - std::lgamma(y(1) + 1.0);
}

double SirModel::observation_natural(const ConstVec& x, const ConstVec&, const ConstVec& xi,
                                     VecRef natural, MatRef natural_grad,
                                     VecRef normalizer_grad) const {
  const Eigen::Vector2d slope = effort_slope(SirState(x), config_);
  natural_grad.setZero();
  double normalizer = 0.0;
  for (int g = 0; g < 2; ++g) {
    const double raw = xi(g) * slope(g);
    const bool active = raw > config_.rate_floor && raw > 0.0;
    const double lambda = active ? raw : config_.rate_floor;
    // With a zero floor an empty group contributes log(0) = -inf, matching sir_log_obs.
    natural(g) = std::log(lambda);
    normalizer += lambda;
    natural_grad(g, g) = active ? slope(g) / lambda : 0.0;
    normalizer_grad(g) = active ? slope(g) : 0.0;
  }
  return normalizer;
}

}  // namespace obed
