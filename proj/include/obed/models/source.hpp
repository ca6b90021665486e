#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <vector>

#include "obed/model.hpp"

namespace obed {

/// Moving directional source observed by fixed sensors with steerable
/// orientations. The unknown parameter is the pair of linear speeds (v1, v2).
struct SourceConfig {
  std::vector<Eigen::Vector2d> sensors{{3.0, 0.0}, {0.0, 3.0}};
  Eigen::VectorXd strength = Eigen::VectorXd::Constant(2, 5.0);
  double background = 0.1;
  /// Saturation constant m in alpha / (m + r^2).
  double saturation = 0.1;
  /// Directivity D(delta) = ((1 + d cos delta) / (1 + d))^k.
  double directivity_d = 1.0;
  double directivity_k = 4.0;
  /// Variance of the log-normal observation noise.
  double noise_var = 0.1;
  double step = 0.1;
  Eigen::Vector3d process_var{0.2, 0.2, 1e-2};
  double angular_velocity = 0.3;
  Eigen::Vector2d prior_lower{0.5, 0.5};
  Eigen::Vector2d prior_upper{1.5, 1.5};
  Eigen::Vector2d true_param{1.0, 1.0};
  Eigen::Vector3d initial_state{0.0, 0.0, 0.0};

  Eigen::Index num_sensors() const { return static_cast<Eigen::Index>(sensors.size()); }
  void validate() const;
  nlohmann::json to_json() const;
  static SourceConfig from_json(const nlohmann::json& j);
};

/// (x, y, phi), heading wrapped to [-pi, pi).
using SourceState = Eigen::Vector3d;

template <typename Scalar>
Scalar directivity(Scalar delta, double d, double k) {
  using std::cos;
  using std::pow;
  return pow((Scalar(1) + Scalar(d) * cos(delta)) / Scalar(1 + d), Scalar(k));
}

double directivity_derivative(double delta, double d, double k);

/// One Euler-Maruyama step for a given standard-normal draw `noise`:
/// position advances with speed v_1 cos phi, v_2 sin phi, heading with the
/// fixed angular velocity; process noise has covariance step * diag(process_var).
SourceState source_step(const SourceState& state, const ConstVec& theta,
                        const SourceConfig& config, const Eigen::Vector3d& noise);

SourceState source_step(const SourceState& state, const ConstVec& theta,
                        const SourceConfig& config, RngStream& rng);

/// Bearing from each sensor to the source.
Eigen::VectorXd source_bearings(const SourceState& state, const SourceConfig& config);
/// Median intensities b + alpha_j / (m + r_j^2) D(xi_j - psi_j).
Eigen::VectorXd source_mu(const SourceState& state, const ConstVec& xi,
                          const SourceConfig& config);
/// d mu_j / d xi_j.
Eigen::VectorXd source_mu_derivative(const SourceState& state, const ConstVec& xi,
                                     const SourceConfig& config);
double source_log_obs(const ConstVec& y, const SourceState& state, const ConstVec& xi,
                      const SourceConfig& config);
Eigen::VectorXd source_grad_xi_log_obs(const ConstVec& y, const SourceState& state,
                                       const ConstVec& xi, const SourceConfig& config);
/// |wrap(xi_j - psi_j)| per sensor in degrees; NaN for a sensor coinciding with the source.
Eigen::VectorXd pointing_error(const ConstVec& xi, const SourceState& state,
                               const SourceConfig& config);

class SourceModel final : public ModelSpec {
 public:
  explicit SourceModel(SourceConfig config = {});

  const SourceConfig& config() const { return config_; }

  std::string name() const override { return "source"; }
  Eigen::Index param_dim() const override { return 2; }
  Eigen::Index state_dim() const override { return 3; }
  Eigen::Index obs_dim() const override { return config_.num_sensors(); }
  Eigen::Index design_dim() const override { return config_.num_sensors(); }
  Reparam reparam() const override { return Reparam::AngleWrap; }
  Eigen::VectorXd param_lower() const override { return config_.prior_lower; }
  Eigen::VectorXd param_upper() const override { return config_.prior_upper; }

  Eigen::VectorXd sample_param_prior(RngStream& rng) const override;
  Eigen::VectorXd sample_state_prior(RngStream& rng) const override;
  void sample_transition(const ConstVec& x_prev, const ConstVec& theta, const ConstVec& xi,
                         RngStream& rng, VecRef out) const override;
  double log_transition(const ConstVec& x_new, const ConstVec& x_prev, const ConstVec& theta,
                        const ConstVec& xi) const override;
  Eigen::VectorXd grad_xi_log_transition(const ConstVec& x_new, const ConstVec& x_prev,
                                         const ConstVec& theta,
                                         const ConstVec& xi) const override;
  void sample_observation(const ConstVec& x, const ConstVec& theta, const ConstVec& xi,
                          RngStream& rng, VecRef out) const override;
  double log_observation(const ConstVec& y, const ConstVec& x, const ConstVec& theta,
                         const ConstVec& xi) const override;
  Eigen::VectorXd grad_xi_log_observation(const ConstVec& y, const ConstVec& x,
                                          const ConstVec& theta,
                                          const ConstVec& xi) const override;
  Eigen::VectorXd project_state(const ConstVec& x) const override;

  Eigen::Index statistic_dim() const override { return config_.num_sensors(); }
  double observation_statistic(const ConstVec& y, VecRef stat) const override;
  double observation_natural(const ConstVec& x, const ConstVec& theta, const ConstVec& xi,
                             VecRef natural, MatRef natural_grad,
                             VecRef normalizer_grad) const override;

  DesignVector random_design(RngStream& rng) const override;
  Eigen::VectorXd true_param() const override { return config_.true_param; }
  Eigen::VectorXd true_initial_state() const override { return config_.initial_state; }
  /// Pointing errors in degrees.
  Eigen::VectorXd design_diagnostics(const ConstVec& xi, const ConstVec& x_true) const override;
  nlohmann::json to_json() const override { return config_.to_json(); }

 private:
  SourceConfig config_;
};

}  // namespace obed
