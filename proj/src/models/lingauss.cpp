#include "obed/models/lingauss.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "obed/json_eigen.hpp"

namespace obed {

void LinGaussConfig::validate() const {
  if (!(process_var >= 0.0)) throw std::invalid_argument("lingauss.process_var must be >= 0");
  if (!(obs_var > 0.0)) throw std::invalid_argument("lingauss.obs_var must be > 0");
  if (!(prior_var >= 0.0)) throw std::invalid_argument("lingauss.prior_var must be >= 0");
  if (!(state_var >= 0.0)) throw std::invalid_argument("lingauss.state_var must be >= 0");
  if (!(design_lower < design_upper)) {
    throw std::invalid_argument("lingauss.design_lower must be below lingauss.design_upper");
  }
}

nlohmann::json LinGaussConfig::to_json() const {
  return {{"type", "lingauss"},         {"transition", transition},
          {"control_gain", control_gain}, {"process_var", process_var},
          {"obs_var", obs_var},         {"prior_mean", prior_mean},
          {"prior_var", prior_var},     {"state_mean", state_mean},
          {"state_var", state_var},     {"true_param", true_param},
          {"true_initial", true_initial}, {"design_lower", design_lower},
          {"design_upper", design_upper}};
}

LinGaussConfig LinGaussConfig::from_json(const nlohmann::json& j) {
  LinGaussConfig c;
  read_optional(j, "transition", c.transition);
  read_optional(j, "control_gain", c.control_gain);
  read_optional(j, "process_var", c.process_var);
  read_optional(j, "obs_var", c.obs_var);
  read_optional(j, "prior_mean", c.prior_mean);
  read_optional(j, "prior_var", c.prior_var);
  read_optional(j, "state_mean", c.state_mean);
  read_optional(j, "state_var", c.state_var);
  read_optional(j, "true_param", c.true_param);
  read_optional(j, "true_initial", c.true_initial);
  read_optional(j, "design_lower", c.design_lower);
  read_optional(j, "design_upper", c.design_upper);
  c.validate();
  return c;
}

LinGaussModel::LinGaussModel(LinGaussConfig config) : config_(config) { config_.validate(); }

Eigen::VectorXd LinGaussModel::sample_param_prior(RngStream& rng) const {
  return Eigen::VectorXd::Constant(1, config_.prior_mean + std::sqrt(config_.prior_var) * rng.normal());
}

Eigen::VectorXd LinGaussModel::sample_state_prior(RngStream& rng) const {
  return Eigen::VectorXd::Constant(1, config_.state_mean + std::sqrt(config_.state_var) * rng.normal());
}

void LinGaussModel::sample_transition(const ConstVec& x_prev, const ConstVec&, const ConstVec& xi,
                                      RngStream& rng, VecRef out) const {
  out(0) = config_.transition * x_prev(0) + config_.control_gain * xi(0) +
           std::sqrt(config_.process_var) * rng.normal();
}

double LinGaussModel::log_transition(const ConstVec& x_new, const ConstVec& x_prev,
                                     const ConstVec&, const ConstVec& xi) const {
  if (config_.process_var == 0.0) return 0.0;
  const double d = x_new(0) - config_.transition * x_prev(0) - config_.control_gain * xi(0);
  const double q = config_.process_var;
  return -0.5 * std::log(2.0 * std::numbers::pi * q) - 0.5 * d * d / q;
}

Eigen::VectorXd LinGaussModel::grad_xi_log_transition(const ConstVec& x_new, const ConstVec& x_prev,
                                                      const ConstVec&, const ConstVec& xi) const {
  if (!transition_depends_on_design()) return Eigen::VectorXd::Zero(1);
  const double d = x_new(0) - config_.transition * x_prev(0) - config_.control_gain * xi(0);
  return Eigen::VectorXd::Constant(1, config_.control_gain * d / config_.process_var);
}

bool LinGaussModel::transition_depends_on_design() const {
  return config_.control_gain != 0.0 && config_.process_var > 0.0;
}

void LinGaussModel::sample_observation(const ConstVec& x, const ConstVec& theta, const ConstVec& xi,
                                       RngStream& rng, VecRef out) const {
  out(0) = gain(xi(0)) * (theta(0) + x(0)) + std::sqrt(config_.obs_var) * rng.normal();
}

double LinGaussModel::log_observation(const ConstVec& y, const ConstVec& x, const ConstVec& theta,
                                      const ConstVec& xi) const {
  const double d = y(0) - gain(xi(0)) * (theta(0) + x(0));
  const double r = config_.obs_var;
  return -0.5 * std::log(2.0 * std::numbers::pi * r) - 0.5 * d * d / r;
}

Eigen::VectorXd LinGaussModel::grad_xi_log_observation(const ConstVec& y, const ConstVec& x,
                                                       const ConstVec& theta,
                                                       const ConstVec& xi) const {
  const double z = theta(0) + x(0);
  const double d = y(0) - gain(xi(0)) * z;
  return Eigen::VectorXd::Constant(1, d * gain_derivative(xi(0)) * z / config_.obs_var);
}

double LinGaussModel::observation_statistic(const ConstVec& y, VecRef stat) const {
  const double r = config_.obs_var;
  stat(0) = y(0);
  return -0.5 * std::log(2.0 * std::numbers::pi * r) - 0.5 * y(0) * y(0) / r;
}

double LinGaussModel::observation_natural(const ConstVec& x, const ConstVec& theta,
                                          const ConstVec& xi, VecRef natural, MatRef natural_grad,
                                          VecRef normalizer_grad) const {
  const double z = theta(0) + x(0);
  const double mu = gain(xi(0)) * z;
  const double dmu = gain_derivative(xi(0)) * z;
  const double r = config_.obs_var;
  natural(0) = mu / r;
  natural_grad(0, 0) = dmu / r;
  normalizer_grad(0) = mu * dmu / r;
  return 0.5 * mu * mu / r;
}

DesignVector LinGaussModel::random_design(RngStream& rng) const {
  return uniform_design(Reparam::Unconstrained, 1, rng, config_.design_lower, config_.design_upper);
}

Eigen::VectorXd LinGaussModel::true_param() const {
  return Eigen::VectorXd::Constant(1, config_.true_param);
}

Eigen::VectorXd LinGaussModel::true_initial_state() const {
  return Eigen::VectorXd::Constant(1, config_.true_initial);
}

GaussianBelief LinGaussModel::prior_belief() const {
  GaussianBelief b;
  b.mean << config_.prior_mean, config_.state_mean;
  b.cov << config_.prior_var, 0.0, 0.0, config_.state_var;
  return b;
}

GaussianBelief LinGaussModel::predict(const GaussianBelief& belief, double xi) const {
  Eigen::Matrix2d F;
  F << 1.0, 0.0, 0.0, config_.transition;
  GaussianBelief out;
  out.mean = F * belief.mean;
  out.mean(1) += config_.control_gain * xi;
  out.cov = F * belief.cov * F.transpose();
  out.cov(1, 1) += config_.process_var;
  return out;
}

GaussianBelief LinGaussModel::update(const GaussianBelief& predicted, double y, double xi) const {
  const Eigen::Vector2d H = gain(xi) * Eigen::Vector2d::Ones();
  const double S = H.dot(predicted.cov * H) + config_.obs_var;
  const Eigen::Vector2d K = predicted.cov * H / S;
  GaussianBelief out;
  out.mean = predicted.mean + K * (y - H.dot(predicted.mean));
  out.cov = predicted.cov - K * (H.transpose() * predicted.cov);
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

double LinGaussModel::exact_eig(const GaussianBelief& belief, double xi) const {
  const GaussianBelief p = predict(belief, xi);
  const double g2 = gain(xi) * gain(xi);
  const double var_z = p.cov.sum();
  const double var_z_given_theta =
      p.cov(0, 0) > 0.0 ? p.cov(1, 1) - p.cov(0, 1) * p.cov(0, 1) / p.cov(0, 0) : p.cov(1, 1);
  const double r = config_.obs_var;
  return 0.5 * std::log((g2 * var_z + r) / (g2 * var_z_given_theta + r));
}

double LinGaussModel::exact_eig_derivative(const GaussianBelief& belief, double xi, double h) const {
  return (exact_eig(belief, xi + h) - exact_eig(belief, xi - h)) / (2.0 * h);
}

}  // namespace obed
