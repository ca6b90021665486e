#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "obed/design.hpp"
#include "obed/rng.hpp"

namespace obed {

using ConstVec = Eigen::Ref<const Eigen::VectorXd>;
using VecRef = Eigen::Ref<Eigen::VectorXd>;
using MatRef = Eigen::Ref<Eigen::MatrixXd>;

/// The state-space model contract: priors, transition f(x_t | x_{t-1}, theta, xi),
/// observation g(y_t | x_t, theta, xi), their log-densities and analytic design
/// gradients.
///
/// Implementations are stateless after construction and may be called
/// concurrently. All randomness arrives through the RngStream argument.
///
/// Besides the pointwise densities, the estimators need the observation density
/// in exponential-family form
///
///     log g(y | x, theta, xi) = <T(y), eta(x, theta, xi)> - B(x, theta, xi) + h(y)
///
/// so that one bank of propagated particles can be prepared once and then
/// scored against many pseudo-observations. `observation_statistic` returns
/// T(y) and h(y); `observation_natural` returns eta, B and their xi-gradients.
class ModelSpec {
 public:
  virtual ~ModelSpec() = default;

  virtual std::string name() const = 0;
  virtual Eigen::Index param_dim() const = 0;
  virtual Eigen::Index state_dim() const = 0;
  virtual Eigen::Index obs_dim() const = 0;
  virtual Eigen::Index design_dim() const = 0;
  virtual Reparam reparam() const = 0;

  /// Prior support, possibly infinite per coordinate.
  virtual Eigen::VectorXd param_lower() const;
  virtual Eigen::VectorXd param_upper() const;

  virtual Eigen::VectorXd sample_param_prior(RngStream& rng) const = 0;
  virtual Eigen::VectorXd sample_state_prior(RngStream& rng) const = 0;

  /// Draws x_t ~ f(. | x_prev, theta, xi) into `out`, feasibility projection included.
  virtual void sample_transition(const ConstVec& x_prev, const ConstVec& theta,
                                 const ConstVec& xi, RngStream& rng, VecRef out) const = 0;
  virtual double log_transition(const ConstVec& x_new, const ConstVec& x_prev,
                                const ConstVec& theta, const ConstVec& xi) const = 0;
  virtual Eigen::VectorXd grad_xi_log_transition(const ConstVec& x_new, const ConstVec& x_prev,
                                                 const ConstVec& theta,
                                                 const ConstVec& xi) const = 0;
  /// False when f does not depend on xi; the gradient is then the zero vector
  /// and estimators may skip evaluating it.
  virtual bool transition_depends_on_design() const { return false; }

  virtual void sample_observation(const ConstVec& x, const ConstVec& theta, const ConstVec& xi,
                                  RngStream& rng, VecRef out) const = 0;
  virtual double log_observation(const ConstVec& y, const ConstVec& x, const ConstVec& theta,
                                 const ConstVec& xi) const = 0;
  virtual Eigen::VectorXd grad_xi_log_observation(const ConstVec& y, const ConstVec& x,
                                                  const ConstVec& theta,
                                                  const ConstVec& xi) const = 0;

  virtual Eigen::VectorXd project_state(const ConstVec& x) const { return x; }

  /// Dimension of T(y).
  virtual Eigen::Index statistic_dim() const = 0;
  /// Writes T(y) and returns h(y). Throws std::invalid_argument outside the support.
  virtual double observation_statistic(const ConstVec& y, VecRef stat) const = 0;
  /// Writes eta (k), d eta / d xi (k x d_xi), dB / d xi (d_xi) and returns B.
  virtual double observation_natural(const ConstVec& x, const ConstVec& theta,
                                     const ConstVec& xi, VecRef natural, MatRef natural_grad,
                                     VecRef normalizer_grad) const = 0;

  /// Uniform draw over the design space (used for initialisation and the
  /// random baseline).
  virtual DesignVector random_design(RngStream& rng) const;

  /// Data-generating parameter and initial state used by the experiment harness.
  virtual Eigen::VectorXd true_param() const = 0;
  virtual Eigen::VectorXd true_initial_state() const = 0;
  /// Per-design metrics against the true state; empty when the model has none.
  virtual Eigen::VectorXd design_diagnostics(const ConstVec& xi, const ConstVec& x_true) const;

  /// Full parameter block, as it appears in an experiment configuration.
  virtual nlohmann::json to_json() const = 0;
};

struct Violation {
  int probe = 0;
  std::string kind;
  std::string message;
};

struct ValidationReport {
  int probes = 0;
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Smoke-checks a model on random probes: likelihood positivity and
/// finiteness (own and cross-probe observations), gradient dimensions and
/// finiteness, agreement of the pointwise and exponential-family densities,
/// and the zero-gradient convention for design-independent transitions.
ValidationReport validate_model(const ModelSpec& model, int probes, RngStream rng);

}  // namespace obed
