#include "obed/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace obed {

Eigen::VectorXd ModelSpec::param_lower() const {
  return Eigen::VectorXd::Constant(param_dim(), -std::numeric_limits<double>::infinity());
}

Eigen::VectorXd ModelSpec::param_upper() const {
  return Eigen::VectorXd::Constant(param_dim(), std::numeric_limits<double>::infinity());
}

DesignVector ModelSpec::random_design(RngStream& rng) const {
  return uniform_design(reparam(), design_dim(), rng);
}

Eigen::VectorXd ModelSpec::design_diagnostics(const ConstVec&, const ConstVec&) const {
  return {};
}

namespace {

double natural_log_density(const ModelSpec& model, const ConstVec& y, const ConstVec& x,
                           const ConstVec& theta, const ConstVec& xi) {
  const Eigen::Index k = model.statistic_dim();
  Eigen::VectorXd stat(k), natural(k), normalizer_grad(model.design_dim());
  Eigen::MatrixXd natural_grad(k, model.design_dim());
  const double base = model.observation_statistic(y, stat);
  const double normalizer =
      model.observation_natural(x, theta, xi, natural, natural_grad, normalizer_grad);
  return stat.dot(natural) - normalizer + base;
}

}  // namespace

ValidationReport validate_model(const ModelSpec& model, int probes, RngStream rng) {
  if (probes < 1) throw std::invalid_argument("probe budget must be >= 1");
  ValidationReport report;
  report.probes = probes;
  const Eigen::Index dxi = model.design_dim();

  Eigen::VectorXd y_prev;
  for (int p = 0; p < probes; ++p) {
    RngStream r = rng.split(static_cast<std::uint64_t>(p));
    auto flag = [&](std::string kind, std::string msg) {
      report.violations.push_back({p, std::move(kind), std::move(msg)});
    };
    try {
      const Eigen::VectorXd theta = model.sample_param_prior(r);
      const Eigen::VectorXd x0 = model.sample_state_prior(r);
      const DesignVector xi = model.random_design(r);
      Eigen::VectorXd x1(model.state_dim()), y(model.obs_dim());
      model.sample_transition(x0, theta, xi.values, r, x1);
      model.sample_observation(x1, theta, xi.values, r, y);

      const double lg = model.log_observation(y, x1, theta, xi.values);
      if (!std::isfinite(lg)) {
        flag("likelihood", "log g(y | x) = " + std::to_string(lg) + " at own observation");
      }
      if (y_prev.size() == y.size()) {
        const double lc = model.log_observation(y_prev, x1, theta, xi.values);
        if (!std::isfinite(lc)) {
          flag("likelihood", "log g(y' | x) = " + std::to_string(lc) + " at cross observation");
        }
      }
      if (std::isfinite(lg)) {
        const double ln = natural_log_density(model, y, x1, theta, xi.values);
        if (!std::isfinite(ln)) {
          flag("likelihood", "exponential-family density is " + std::to_string(ln));
        } else if (!(std::abs(ln - lg) <= 1e-8 * (1.0 + std::abs(lg)))) {
          flag("natural-form", "exponential-family density " + std::to_string(ln) +
                                   " differs from log_observation " + std::to_string(lg));
        }
      }

      const Eigen::VectorXd gg = model.grad_xi_log_observation(y, x1, theta, xi.values);
      if (gg.size() != dxi) {
        flag("gradient-dimension", "grad_xi_log_observation has dimension " +
                                       std::to_string(gg.size()) + ", expected " +
                                       std::to_string(dxi));
      } else if (!gg.allFinite()) {
        flag("gradient", "grad_xi_log_observation is not finite");
      }
      const Eigen::VectorXd gf = model.grad_xi_log_transition(x1, x0, theta, xi.values);
      if (gf.size() != dxi) {
        flag("gradient-dimension", "grad_xi_log_transition has dimension " +
                                       std::to_string(gf.size()) + ", expected " +
                                       std::to_string(dxi));
      } else if (!gf.allFinite()) {
        flag("gradient", "grad_xi_log_transition is not finite");
      } else if (!model.transition_depends_on_design() && !(gf.array() == 0.0).all()) {
        flag("gradient", "design-independent transition returned a nonzero gradient");
      }
      y_prev = y;
    } catch (const std::exception& e) {
      flag("exception", e.what());
    }
  }
  return report;
}

}  // namespace obed
