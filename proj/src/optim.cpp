#include "obed/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace obed {

std::string to_string(Schedule s) {
  return s == Schedule::InverseSqrt ? "inverse-sqrt" : "constant";
}

Schedule schedule_from_string(const std::string& s) {
  if (s == "constant") return Schedule::Constant;
  if (s == "inverse-sqrt") return Schedule::InverseSqrt;
  throw std::invalid_argument("unknown schedule '" + s + "'");
}

double AdamConfig::step_size(long k) const {
  if (schedule == Schedule::InverseSqrt) return learning_rate / std::sqrt(static_cast<double>(std::max(1L, k)));
  return learning_rate;
}

AdamState adam_init(const AdamConfig& config, Eigen::Index dim) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(dim);
  s.v = Eigen::VectorXd::Zero(dim);
  s.config = config;
  return s;
}

std::pair<AdamState, Eigen::VectorXd> adam_step(const AdamState& state,
                                                const Eigen::VectorXd& gradient) {
  if (!gradient.allFinite()) throw std::domain_error("non-finite gradient passed to Adam");
  if (gradient.size() != state.m.size()) throw std::invalid_argument("gradient dimension mismatch");
  const AdamConfig& c = state.config;
  AdamState next = state;
  next.iteration = state.iteration + 1;
  next.m = c.beta1 * state.m + (1.0 - c.beta1) * gradient;
  next.v = c.beta2 * state.v + (1.0 - c.beta2) * gradient.cwiseAbs2();
  const double k = static_cast<double>(next.iteration);
  const double bc1 = 1.0 - std::pow(c.beta1, k);
  const double bc2 = 1.0 - std::pow(c.beta2, k);
  const Eigen::ArrayXd mhat = next.m.array() / bc1;
  const Eigen::ArrayXd vhat = next.v.array() / bc2;
  Eigen::VectorXd update = (c.step_size(next.iteration) * mhat / (vhat.sqrt() + c.epsilon)).matrix();
  return {std::move(next), std::move(update)};
}

DesignVector apply_latent_step(const DesignVector& design, const Eigen::VectorXd& step) {
  DesignVector out = transform_design(design.latent + step, design.reparam, design.values.size());
  if (out.reparam == Reparam::AngleWrap) out.latent = out.values;
  return out;
}

namespace {

Eigen::VectorXd latent_gradient(const DesignVector& design, const Eigen::VectorXd& grad) {
  return transform_jacobian(design.latent, design.reparam, design.values.size()).transpose() * grad;
}

}  // namespace

OptimizeResult optimize_design(const NestedEnsemble& ens, const ModelSpec& model,
                               const JitterKernel& kernel, const OptimizeOptions& options,
                               RngStream rng) {
  if (options.iterations < 1) throw std::invalid_argument("optimize_design requires K >= 1");
  OptimizeResult res;
  RngStream init = rng.split("init");
  res.design = model.random_design(init);
  AdamState adam = adam_init(options.adam, res.design.latent.size());
  const RngStream iter = rng.split("iter");
  res.trace.reserve(static_cast<std::size_t>(options.iterations));
  for (Eigen::Index k = 0; k < options.iterations; ++k) {
    const EigEstimate est = eig_grad_hat(ens, res.design.values, model, kernel, options.batch,
                                         iter.split(static_cast<std::uint64_t>(k)));
    res.trace.push_back(est.value);
    auto [next, update] = adam_step(adam, latent_gradient(res.design, est.gradient));
    adam = std::move(next);
    res.design = apply_latent_step(res.design, update);
  }
  return res;
}

DesignVector random_design(const ModelSpec& model, RngStream rng) {
  return model.random_design(rng);
}

StaticResult static_optimize(const ModelSpec& model, const JitterKernel& kernel,
                             const StaticOptions& options, RngStream rng) {
  const Eigen::Index T = options.horizon;
  if (T < 1) throw std::invalid_argument("static_optimize requires T >= 1");
  if (T > options.max_horizon) {
    throw std::invalid_argument("static horizon " + std::to_string(T) +
                                " exceeds the configured cap " + std::to_string(options.max_horizon));
  }
  if (options.optimize.iterations < 1) throw std::invalid_argument("static_optimize requires K >= 1");
  const NestedEnsemble prior = init_ensemble(model, options.M, options.N, rng.split("ensemble"));
  const RngStream per_t = rng.split("t");
  const RngStream rollout = rng.split("rollout");

  StaticResult res;
  std::vector<RngStream> iter_streams;
  for (Eigen::Index t = 0; t < T; ++t) {
    const RngStream st = per_t.split(static_cast<std::uint64_t>(t));
    RngStream init = st.split("init");
    res.designs.push_back(model.random_design(init));
    iter_streams.push_back(st.split("iter"));
  }
  const Eigen::Index dl = res.designs.front().latent.size();
  AdamState adam = adam_init(options.optimize.adam, dl * T);

  Eigen::VectorXd grad(dl * T);
  Eigen::VectorXd x(model.state_dim()), y(model.obs_dim());
  for (Eigen::Index k = 0; k < options.optimize.iterations; ++k) {
    const RngStream rk = rollout.split(static_cast<std::uint64_t>(k));
    RngStream truth = rk.split("truth");
    const Eigen::VectorXd theta = model.sample_param_prior(truth);
    Eigen::VectorXd x_prev = model.sample_state_prior(truth);
    NestedEnsemble ens = prior;
    double total = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
      const DesignVector& d = res.designs[static_cast<std::size_t>(t)];
      const EigEstimate est =
          eig_grad_hat(ens, d.values, model, kernel, options.optimize.batch,
                       iter_streams[static_cast<std::size_t>(t)].split(static_cast<std::uint64_t>(k)));
      total += est.value;
      grad.segment(t * dl, dl) = latent_gradient(d, est.gradient);
      if (t + 1 == T) break;
      RngStream step = rk.split(static_cast<std::uint64_t>(t));
      RngStream sim = step.split("simulate");
      model.sample_transition(x_prev, theta, d.values, sim, x);
      model.sample_observation(x, theta, d.values, sim, y);
      x_prev = x;
      ens = npf_step(ens, y, d.values, model, kernel, step.split("filter"), options.resampling);
    }
    res.trace.push_back(total);
    auto [next, update] = adam_step(adam, grad);
    adam = std::move(next);
    for (Eigen::Index t = 0; t < T; ++t) {
      auto& d = res.designs[static_cast<std::size_t>(t)];
      d = apply_latent_step(d, update.segment(t * dl, dl));
    }
  }
  return res;
}

std::string to_string(PolicyTag tag) {
  switch (tag) {
    case PolicyTag::Badpods: return "badpods";
    case PolicyTag::Random: return "random";
    case PolicyTag::Static: return "static";
  }
  return "badpods";
}

PolicyTag policy_from_string(const std::string& s) {
  if (s == "badpods") return PolicyTag::Badpods;
  if (s == "random") return PolicyTag::Random;
  if (s == "static") return PolicyTag::Static;
  throw std::invalid_argument("unknown policy '" + s + "'");
}

}  // namespace obed
