#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "obed/model.hpp"

namespace obed {

/// Two-group stochastic SIR with Poisson incidence observations. The design
/// splits a fixed sampling effort between the two groups.
struct SirConfig {
  Eigen::Vector2d population{200.0, 200.0};
  Eigen::Vector2d initial_infected{5.0, 5.0};
  Eigen::Vector2d detection{0.95, 0.5};
  double sampling_effort = 100.0;
  Eigen::Matrix2d mixing = (Eigen::Matrix2d() << 0.9, 0.1, 0.1, 0.9).finished();
  double step = 0.1;
  /// Known second-group rates.
  double beta2 = 0.55;
  double gamma2 = 0.15;
  /// Uniform prior box for the unknown (beta1, gamma1).
  Eigen::Vector2d prior_lower{0.1, 0.1};
  Eigen::Vector2d prior_upper{1.0, 1.0};
  /// Data-generating (beta1, gamma1).
  Eigen::Vector2d true_param{0.65, 0.15};
  /// Poisson rates are clamped below at this value so that the likelihood stays
  /// strictly positive when I = 0 or a group receives no effort.
  double rate_floor = 1e-8;

  void validate() const;
  nlohmann::json to_json() const;
  static SirConfig from_json(const nlohmann::json& j);
};

/// (S1, I1, S2, I2), real-valued counts.
using SirState = Eigen::Vector4d;

/// Population-level transition rates (lambda_1, r_1, lambda_2, r_2) with
/// lambda_g = beta_g S^g sum_h M_gh I^h / N_h and r_g = gamma_g I^g.
template <typename Scalar>
Eigen::Matrix<Scalar, 4, 1> sir_rates(const Eigen::Matrix<Scalar, 4, 1>& state,
                                      const Eigen::Matrix<Scalar, 2, 1>& beta,
                                      const Eigen::Matrix<Scalar, 2, 1>& gamma,
                                      const SirConfig& config) {
  const Scalar p1 = state(1) / Scalar(config.population(0));
  const Scalar p2 = state(3) / Scalar(config.population(1));
  Eigen::Matrix<Scalar, 4, 1> a;
  a(0) = beta(0) * state(0) * (Scalar(config.mixing(0, 0)) * p1 + Scalar(config.mixing(0, 1)) * p2);
  a(1) = gamma(0) * state(1);
  a(2) = beta(1) * state(2) * (Scalar(config.mixing(1, 0)) * p1 + Scalar(config.mixing(1, 1)) * p2);
  a(3) = gamma(1) * state(3);
  return a;
}

/// Stoichiometry of (infection 1, recovery 1, infection 2, recovery 2) on (S1, I1, S2, I2).
const Eigen::Matrix4d& sir_stoichiometry();

/// Per-group clamp 0 <= S <= N, 0 <= I <= N - S.
SirState sir_project(const SirState& state, const SirConfig& config);

/// One Euler-Maruyama step for a given Wiener increment dW ~ N(0, step I), then
/// projection. Passing dW = 0 gives the deterministic drift step.
SirState sir_em_step(const SirState& state, const Eigen::Vector2d& beta,
                     const Eigen::Vector2d& gamma, const SirConfig& config,
                     const Eigen::Vector4d& dW);

/// As above with dW drawn from `rng`.
SirState sir_em_step(const SirState& state, const Eigen::Vector2d& beta,
                     const Eigen::Vector2d& gamma, const SirConfig& config, RngStream& rng);

/// Clamped Poisson rates kappa xi_g rho_g I^g / N_g.
Eigen::Vector2d sir_obs_rate(const SirState& state, const ConstVec& xi, const SirConfig& config);
double sir_log_obs(const ConstVec& y, const SirState& state, const ConstVec& xi,
                   const SirConfig& config);
/// d log g / d xi_g = (y_g / lambda_g - 1) kappa rho_g I^g / N_g, zero where the clamp is active.
Eigen::Vector2d sir_grad_xi_log_obs(const ConstVec& y, const SirState& state, const ConstVec& xi,
                                    const SirConfig& config);

class SirModel final : public ModelSpec {
 public:
  explicit SirModel(SirConfig config = {});

  const SirConfig& config() const { return config_; }

  std::string name() const override { return "sir"; }
  Eigen::Index param_dim() const override { return 2; }
  Eigen::Index state_dim() const override { return 4; }
  Eigen::Index obs_dim() const override { return 2; }
  Eigen::Index design_dim() const override { return 2; }
  Reparam reparam() const override { return Reparam::SimplexSigmoid; }
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

  Eigen::Index statistic_dim() const override { return 2; }
  double observation_statistic(const ConstVec& y, VecRef stat) const override;
  double observation_natural(const ConstVec& x, const ConstVec& theta, const ConstVec& xi,
                             VecRef natural, MatRef natural_grad,
                             VecRef normalizer_grad) const override;

  Eigen::VectorXd true_param() const override { return config_.true_param; }
  Eigen::VectorXd true_initial_state() const override;
  nlohmann::json to_json() const override { return config_.to_json(); }

 private:
  SirConfig config_;
};

}  // namespace obed
