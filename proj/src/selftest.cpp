#include "obed/selftest.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "obed/design.hpp"
#include "obed/eig.hpp"
#include "obed/models/lingauss.hpp"
#include "obed/models/sir.hpp"
#include "obed/models/source.hpp"
#include "obed/npf.hpp"

namespace obed {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

SelfCheck check_exact_eig() {
  LinGaussConfig c;
  c.transition = 0.0;
  c.process_var = 0.0;
  c.state_var = 0.0;
  LinGaussModel m(c);
  const double v = m.exact_eig(m.prior_belief(), 1.0);
  return {"lingauss closed-form EIG", std::abs(v - 0.5 * std::log(2.0)) < 1e-12, "I = " + fmt(v)};
}

SelfCheck check_transform_jacobian() {
  RngStream rng(11);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    for (Reparam r : {Reparam::SimplexSigmoid, Reparam::AngleWrap}) {
      const Eigen::Index d = r == Reparam::SimplexSigmoid ? 3 : 2;
      Eigen::VectorXd z(latent_dimension(r, d));
      for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = 4.0 * rng.normal();
      const Eigen::MatrixXd J = transform_jacobian(z, r, d);
      for (Eigen::Index k = 0; k < z.size(); ++k) {
        Eigen::VectorXd zp = z, zm = z;
        zp(k) += 1e-5;
        zm(k) -= 1e-5;
        Eigen::VectorXd fd = (transform_design(zp, r, d).values - transform_design(zm, r, d).values) / 2e-5;
        if (r == Reparam::AngleWrap) fd = fd.unaryExpr([](double v) { return std::abs(v) > 1e3 ? 1.0 : v; });
        worst = std::max(worst, (fd - J.col(k)).norm() / std::max(1e-3, J.col(k).norm()));
      }
    }
  }
  return {"reparameterization Jacobian vs finite differences", worst < 1e-6, "max rel err " + fmt(worst)};
}

double observation_gradient_error(const ModelSpec& model, RngStream rng, int probes) {
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    RngStream r = rng.split(static_cast<std::uint64_t>(p));
    const Eigen::VectorXd theta = model.sample_param_prior(r);
    Eigen::VectorXd x = model.sample_state_prior(r);
    Eigen::VectorXd x1(model.state_dim()), y(model.obs_dim());
    const DesignVector xi = model.random_design(r);
    for (int s = 0; s < 5; ++s) {
      model.sample_transition(x, theta, xi.values, r, x1);
      x = x1;
    }
    model.sample_observation(x, theta, xi.values, r, y);
    const Eigen::VectorXd g = model.grad_xi_log_observation(y, x, theta, xi.values);
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      Eigen::VectorXd a = xi.values, b = xi.values;
      a(k) += 1e-5;
      b(k) -= 1e-5;
      const double fd = (model.log_observation(y, x, theta, a) - model.log_observation(y, x, theta, b)) / 2e-5;
      worst = std::max(worst, std::abs(fd - g(k)) / std::max(1.0, std::abs(g(k))));
    }
  }
  return worst;
}

SelfCheck check_gradients() {
  SirModel sir;
  SourceModel src;
  LinGaussModel lg;
  const double e = std::max({observation_gradient_error(sir, RngStream(1), 50),
                             observation_gradient_error(src, RngStream(2), 50),
                             observation_gradient_error(lg, RngStream(3), 50)});
  return {"analytic observation gradients vs finite differences", e < 1e-6, "max rel err " + fmt(e)};
}

SelfCheck check_filter() {
  SirModel sir;
  RngStream rng(5);
  NestedEnsemble ens = init_ensemble(sir, 20, 20, rng.split("init"));
  Eigen::VectorXd x = sir.true_initial_state(), x1(4), y(2), xi(2);
  xi << 0.6, 0.4;
  const JitterKernel k{2.0};
  try {
    for (int t = 0; t < 10; ++t) {
      RngStream s = rng.split(static_cast<std::uint64_t>(t));
      sir.sample_transition(x, sir.true_param(), xi, s, x1);
      x = x1;
      sir.sample_observation(x, sir.true_param(), xi, s, y);
      ens = npf_step(ens, y, xi, sir, k, s.split("npf"));
      ens.check_invariants();
    }
  } catch (const std::exception& e) {
    return {"nested filter weight normalization", false, e.what()};
  }
  return {"nested filter weight normalization", true, "10 SIR steps"};
}

SelfCheck check_resampling() {
  Eigen::VectorXd w(4);
  w << 0.1, 0.2, 0.3, 0.4;
  RngStream rng(9);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(4);
  const int trials = 2000;
  const Eigen::Index n = 10;
  for (int i = 0; i < trials; ++i) {
    for (auto idx : resample(w, n, ResampleScheme::Systematic, rng)) counts(idx) += 1.0;
  }
  double worst = 0.0;
  for (Eigen::Index i = 0; i < 4; ++i) {
    const double expect = trials * n * w(i);
    const double se = std::sqrt(trials * n * w(i) * (1 - w(i)));
    worst = std::max(worst, std::abs(counts(i) - expect) / se);
  }
  return {"systematic resampling unbiasedness", worst < 3.0, "max deviation " + fmt(worst) + " SE"};
}

SelfCheck check_determinism() {
  SourceModel src;
  const NestedEnsemble ens = init_ensemble(src, 10, 10, RngStream(3));
  Eigen::VectorXd xi(2);
  xi << 0.1, 2.0;
  const EigEstimate a = eig_grad_hat(ens, xi, src, JitterKernel{0.15}, 0, RngStream(4));
  const EigEstimate b = eig_grad_hat(ens, xi, src, JitterKernel{0.15}, 0, RngStream(4));
  const double v = eig_hat(ens, xi, src, JitterKernel{0.15}, 0, RngStream(4));
  const bool ok = a.value == b.value && (a.gradient.array() == b.gradient.array()).all() && v == a.value;
  return {"bit-identical estimator reruns", ok, "I = " + fmt(a.value)};
}

}  // namespace

std::vector<SelfCheck> run_selftest() {
  std::vector<SelfCheck> out;
  out.push_back(check_exact_eig());
  out.push_back(check_transform_jacobian());
  out.push_back(check_gradients());
  out.push_back(check_filter());
  out.push_back(check_resampling());
  out.push_back(check_determinism());
  return out;
}

}  // namespace obed
