#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "obed/eig.hpp"
#include "obed/models/lingauss.hpp"

namespace obed::testing {

/// Linear-Gaussian model whose observation gain ignores the design, so neither
/// density depends on xi.
class DesignFreeModel : public LinGaussModel {
 public:
  using LinGaussModel::LinGaussModel;
  double gain(double) const override { return 1.0; }
  double gain_derivative(double) const override { return 0.0; }
};

/// Gain exp(-(xi - peak)^2 / 2): the exact EIG is a smooth concave bump with
/// its maximum at xi = peak.
class PeakedGainModel : public LinGaussModel {
 public:
  PeakedGainModel(LinGaussConfig c, double peak) : LinGaussModel(c), peak_(peak) {}
  double gain(double xi) const override { return std::exp(-0.5 * (xi - peak_) * (xi - peak_)); }
  double gain_derivative(double xi) const override { return -(xi - peak_) * gain(xi); }

 private:
  double peak_;
};

/// Grad of the observation density with the wrong dimension.
class WrongGradientModel : public LinGaussModel {
 public:
  using LinGaussModel::LinGaussModel;
  Eigen::VectorXd grad_xi_log_observation(const ConstVec&, const ConstVec&, const ConstVec&,
                                          const ConstVec&) const override {
    return Eigen::VectorXd::Zero(2);
  }
};

/// Static state, known theta: y = xi (theta + x) + noise.
inline LinGaussConfig static_state_config() {
  LinGaussConfig c;
  c.transition = 1.0;
  c.process_var = 0.0;
  c.state_var = 0.0;
  return c;
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

/// The estimator at design xi with every draw frozen at xi0 and each Gamma sample
/// reweighted by its generative density ratio p(x~, y~ | xi) / p(x~, y~ | xi0).
/// Its derivative at xi0 is the score-function gradient of the estimator, so
/// finite differences of this function are an oracle for eig_grad_hat. Inner
/// particle sets are not reweighted; that is exact for design-free transitions.
inline double reweighted_estimate(const EigDraws& draws, const Eigen::VectorXd& xi0,
                                  const Eigen::VectorXd& xi, const ModelSpec& model) {
  EigDraws d = draws;
  const GammaBatch& g = draws.gamma;
  for (Eigen::Index l = 0; l < g.size(); ++l) {
    if (g.weight(l) == 0.0) continue;
    const auto y = g.pseudo_obs.col(l), x = g.pred_state.col(l), xp = g.prev_state.col(l), th = g.theta.col(l);
    double log_ratio = model.log_observation(y, x, th, xi) - model.log_observation(y, x, th, xi0);
    if (model.transition_depends_on_design()) {
      log_ratio += model.log_transition(x, xp, th, xi) - model.log_transition(x, xp, th, xi0);
    }
    d.gamma.weight(l) = g.weight(l) * std::exp(log_ratio);
  }
  return evaluate_eig(d, xi, model, false).value;
}

/// Central differences of reweighted_estimate at xi0.
inline Eigen::VectorXd reweighted_fd_gradient(const EigDraws& draws, const Eigen::VectorXd& xi0,
                                              const ModelSpec& model, double h) {
  Eigen::VectorXd g(xi0.size());
  for (Eigen::Index k = 0; k < xi0.size(); ++k) {
    Eigen::VectorXd a = xi0, b = xi0;
    a(k) += h;
    b(k) -= h;
    g(k) = (reweighted_estimate(draws, xi0, a, model) - reweighted_estimate(draws, xi0, b, model)) / (2 * h);
  }
  return g;
}

}  // namespace obed::testing
