#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "obed/model.hpp"

namespace obed {

/// Scalar linear-Gaussian model with closed-form information gain:
///
///     theta ~ N(prior_mean, prior_var),   x_0 ~ N(state_mean, state_var)
///     x_t = a x_{t-1} + c xi + N(0, q)
///     y_t = gain(xi) (theta + x_t) + N(0, r)
///
/// q = 0 gives a deterministic state and prior_var = 0 a known parameter.
struct LinGaussConfig {
  double transition = 0.9;
  double control_gain = 0.0;
  double process_var = 0.5;
  double obs_var = 1.0;
  double prior_mean = 0.0;
  double prior_var = 1.0;
  double state_mean = 0.0;
  double state_var = 1.0;
  double true_param = 0.5;
  double true_initial = 0.0;
  double design_lower = -1.5;
  double design_upper = 1.5;

  void validate() const;
  nlohmann::json to_json() const;
  static LinGaussConfig from_json(const nlohmann::json& j);
};

/// Joint Gaussian belief over (theta, x_t).
struct GaussianBelief {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
};

class LinGaussModel : public ModelSpec {
 public:
  explicit LinGaussModel(LinGaussConfig config = {});

  const LinGaussConfig& config() const { return config_; }

  /// Observation gain as a function of the design; identity by default.
  virtual double gain(double xi) const { return xi; }
  virtual double gain_derivative(double) const { return 1.0; }

  std::string name() const override { return "lingauss"; }
  Eigen::Index param_dim() const override { return 1; }
  Eigen::Index state_dim() const override { return 1; }
  Eigen::Index obs_dim() const override { return 1; }
  Eigen::Index design_dim() const override { return 1; }
  Reparam reparam() const override { return Reparam::Unconstrained; }

  Eigen::VectorXd sample_param_prior(RngStream& rng) const override;
  Eigen::VectorXd sample_state_prior(RngStream& rng) const override;
  void sample_transition(const ConstVec& x_prev, const ConstVec& theta, const ConstVec& xi,
                         RngStream& rng, VecRef out) const override;
  /// With q = 0 the transition is a point mass and this returns 0.
  double log_transition(const ConstVec& x_new, const ConstVec& x_prev, const ConstVec& theta,
                        const ConstVec& xi) const override;
  Eigen::VectorXd grad_xi_log_transition(const ConstVec& x_new, const ConstVec& x_prev,
                                         const ConstVec& theta,
                                         const ConstVec& xi) const override;
  bool transition_depends_on_design() const override;
  void sample_observation(const ConstVec& x, const ConstVec& theta, const ConstVec& xi,
                          RngStream& rng, VecRef out) const override;
  double log_observation(const ConstVec& y, const ConstVec& x, const ConstVec& theta,
                         const ConstVec& xi) const override;
  Eigen::VectorXd grad_xi_log_observation(const ConstVec& y, const ConstVec& x,
                                          const ConstVec& theta,
                                          const ConstVec& xi) const override;

  Eigen::Index statistic_dim() const override { return 1; }
  double observation_statistic(const ConstVec& y, VecRef stat) const override;
  double observation_natural(const ConstVec& x, const ConstVec& theta, const ConstVec& xi,
                             VecRef natural, MatRef natural_grad,
                             VecRef normalizer_grad) const override;

  DesignVector random_design(RngStream& rng) const override;
  Eigen::VectorXd true_param() const override;
  Eigen::VectorXd true_initial_state() const override;
  nlohmann::json to_json() const override { return config_.to_json(); }

  /// Prior belief over (theta, x_0).
  GaussianBelief prior_belief() const;
  /// Propagates (theta, x) through the transition under design xi.
  GaussianBelief predict(const GaussianBelief& belief, double xi) const;
  /// Conditions a predicted belief on y.
  GaussianBelief update(const GaussianBelief& predicted, double y, double xi) const;
  /// Exact I(theta; y_t | history) for a filtered belief over (theta, x_{t-1}).
  double exact_eig(const GaussianBelief& belief, double xi) const;
  /// d exact_eig / d xi by central differences.
  double exact_eig_derivative(const GaussianBelief& belief, double xi, double h = 1e-5) const;

 private:
  LinGaussConfig config_;
};

}  // namespace obed
