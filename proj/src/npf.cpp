#include "obed/npf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace obed {

double JitterKernel::variance(Eigen::Index M) const {
  return scale / std::pow(static_cast<double>(M), 1.5);
}

std::string to_string(ResampleScheme scheme) {
  switch (scheme) {
    case ResampleScheme::Systematic: return "systematic";
    case ResampleScheme::Multinomial: return "multinomial";
    case ResampleScheme::None: return "none";
  }
  return "systematic";
}

ResampleScheme resample_scheme_from_string(const std::string& name) {
  if (name == "systematic") return ResampleScheme::Systematic;
  if (name == "multinomial") return ResampleScheme::Multinomial;
  if (name == "none") return ResampleScheme::None;
  throw std::invalid_argument("unknown resampling scheme '" + name + "'");
}

DegenerateWeights::DegenerateWeights(std::string level, long index, const std::string& what)
    : std::runtime_error(what), level_(std::move(level)), index_(index) {}

void NestedEnsemble::check_invariants(double tol) const {
  const Eigen::Index m = params.cols();
  const Eigen::Index n = state_weights.rows();
  if (param_weights.size() != m || state_weights.cols() != m || states.cols() != m * n) {
    throw std::logic_error("nested ensemble shapes are inconsistent");
  }
  if ((param_weights.array() < 0.0).any() || (state_weights.array() < 0.0).any()) {
    throw std::logic_error("negative particle weight");
  }
  if (std::abs(param_weights.sum() - 1.0) > tol) {
    throw std::logic_error("parameter weights do not sum to one");
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    if (std::abs(state_weights.col(k).sum() - 1.0) > tol) {
      throw std::logic_error("state weights of bank " + std::to_string(k) + " do not sum to one");
    }
  }
}

nlohmann::json NestedEnsemble::to_json() const {
  nlohmann::json p = nlohmann::json::array(), pw = nlohmann::json::array();
  nlohmann::json s = nlohmann::json::array(), sw = nlohmann::json::array();
  for (Eigen::Index m = 0; m < M(); ++m) {
    p.push_back(std::vector<double>(params.col(m).data(), params.col(m).data() + params.rows()));
    pw.push_back(param_weights(m));
    nlohmann::json b = nlohmann::json::array(), bw = nlohmann::json::array();
    for (Eigen::Index n = 0; n < N(); ++n) {
      const auto c = states.col(m * N() + n);
      b.push_back(std::vector<double>(c.data(), c.data() + c.size()));
      bw.push_back(state_weights(n, m));
    }
    s.push_back(std::move(b));
    sw.push_back(std::move(bw));
  }
  return {{"t", t}, {"M", M()}, {"N", N()}, {"params", p}, {"param_weights", pw},
          {"states", s}, {"state_weights", sw}};
}

NestedEnsemble NestedEnsemble::from_json(const nlohmann::json& j) {
  NestedEnsemble e;
  const auto M = j.at("M").get<Eigen::Index>();
  const auto N = j.at("N").get<Eigen::Index>();
  e.t = j.at("t").get<int>();
  const auto& p = j.at("params");
  const auto& s = j.at("states");
  const Eigen::Index dp = M > 0 ? static_cast<Eigen::Index>(p.at(0).size()) : 0;
  const Eigen::Index dx = M > 0 && N > 0 ? static_cast<Eigen::Index>(s.at(0).at(0).size()) : 0;
  e.params.resize(dp, M);
  e.param_weights.resize(M);
  e.states.resize(dx, M * N);
  e.state_weights.resize(N, M);
  for (Eigen::Index m = 0; m < M; ++m) {
    for (Eigen::Index k = 0; k < dp; ++k) e.params(k, m) = p.at(m).at(k).get<double>();
    e.param_weights(m) = j.at("param_weights").at(m).get<double>();
    for (Eigen::Index n = 0; n < N; ++n) {
      for (Eigen::Index k = 0; k < dx; ++k) e.states(k, m * N + n) = s.at(m).at(n).at(k).get<double>();
      e.state_weights(n, m) = j.at("state_weights").at(m).at(n).get<double>();
    }
  }
  e.check_invariants();
  return e;
}

NestedEnsemble init_ensemble(const ModelSpec& model, Eigen::Index M, Eigen::Index N, RngStream rng) {
  if (M < 1 || N < 1) throw std::invalid_argument("init_ensemble requires M >= 1 and N >= 1");
  NestedEnsemble e;
  e.params.resize(model.param_dim(), M);
  e.states.resize(model.state_dim(), M * N);
  RngStream prng = rng.split("param");
  RngStream srng = rng.split("state");
  for (Eigen::Index m = 0; m < M; ++m) {
    e.params.col(m) = model.sample_param_prior(prng);
    for (Eigen::Index n = 0; n < N; ++n) e.states.col(m * N + n) = model.sample_state_prior(srng);
  }
  e.param_weights = Eigen::VectorXd::Constant(M, 1.0 / static_cast<double>(M));
  e.state_weights = Eigen::MatrixXd::Constant(N, M, 1.0 / static_cast<double>(N));
  return e;
}

double reflect_into(double v, double lower, double upper) {
  const bool lo = std::isfinite(lower);
  const bool hi = std::isfinite(upper);
  if (lo && hi) {
    const double w = upper - lower;
    if (w <= 0.0) return lower;
    double y = std::fmod(v - lower, 2.0 * w);
    if (y < 0.0) y += 2.0 * w;
    if (y > w) y = 2.0 * w - y;
    return lower + y;
  }
  if (lo && v < lower) return 2.0 * lower - v;
  if (hi && v > upper) return 2.0 * upper - v;
  return v;
}

Eigen::MatrixXd jitter(const Eigen::MatrixXd& params, const JitterKernel& kernel,
                       const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, RngStream rng) {
  const double var = kernel.variance(params.cols());
  if (var < 0.0 || !std::isfinite(var)) throw std::invalid_argument("jitter variance must be >= 0");
  if (var == 0.0) return params;
  const double sd = std::sqrt(var);
  Eigen::MatrixXd out(params.rows(), params.cols());
  for (Eigen::Index m = 0; m < params.cols(); ++m) {
    for (Eigen::Index k = 0; k < params.rows(); ++k) {
      out(k, m) = reflect_into(params(k, m) + sd * rng.normal(), lower(k), upper(k));
    }
  }
  return out;
}

std::vector<Eigen::Index> resample(const Eigen::VectorXd& weights, Eigen::Index count,
                                   ResampleScheme scheme, RngStream& rng) {
  if ((weights.array() < 0.0).any() || !weights.allFinite()) {
    throw std::invalid_argument("resampling weights must be finite and nonnegative");
  }
  const double total = weights.sum();
  if (!(total > 0.0)) throw DegenerateWeights("param", -1, "all resampling weights are zero");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(count));
  if (scheme == ResampleScheme::None) {
    if (count != weights.size()) throw std::invalid_argument("identity resampling needs count == size");
    for (Eigen::Index i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
  }
  const Eigen::Index n = weights.size();
  if (scheme == ResampleScheme::Systematic) {
    const double step = total / static_cast<double>(count);
    double u = rng.uniform() * step;
    double cum = weights(0);
    Eigen::Index i = 0;
    for (Eigen::Index k = 0; k < count; ++k) {
      while (u >= cum && i < n - 1) cum += weights(++i);
      // skip trailing zero-weight entries reached through rounding
      while (weights(i) == 0.0 && i > 0) --i;
      idx[static_cast<std::size_t>(k)] = i;
      u += step;
    }
    return idx;
  }
  Eigen::VectorXd cdf(n);
  double cum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) cdf(i) = (cum += weights(i));
  for (Eigen::Index k = 0; k < count; ++k) {
    const double u = rng.uniform() * cum;
    auto it = std::upper_bound(cdf.data(), cdf.data() + n, u);
    Eigen::Index i = std::min<Eigen::Index>(it - cdf.data(), n - 1);
    while (weights(i) == 0.0 && i > 0) --i;
    idx[static_cast<std::size_t>(k)] = i;
  }
  return idx;
}

double normalize_log_weights(Eigen::Ref<Eigen::VectorXd> lw) {
  const double mx = lw.maxCoeff();
  if (!std::isfinite(mx)) {
    lw.setZero();
    return -std::numeric_limits<double>::infinity();
  }
  double s = 0.0;
  for (Eigen::Index i = 0; i < lw.size(); ++i) {
    lw(i) = std::exp(lw(i) - mx);
    s += lw(i);
  }
  lw /= s;
  return mx + std::log(s);
}

NestedEnsemble npf_step(const NestedEnsemble& ens, const ConstVec& y, const ConstVec& xi,
                        const ModelSpec& model, const JitterKernel& kernel, RngStream rng,
                        ResampleScheme scheme) {
  const Eigen::Index M = ens.M();
  const Eigen::Index N = ens.N();
  NestedEnsemble next;
  next.t = ens.t + 1;
  next.params = jitter(ens.params, kernel, model.param_lower(), model.param_upper(), rng.split("jitter"));
  next.states.resize(ens.states.rows(), ens.states.cols());
  next.state_weights.resize(N, M);

  RngStream prop = rng.split("propagate");
  RngStream rstate = rng.split("resample-state");
  Eigen::VectorXd bank_log(M);
  Eigen::VectorXd lw(N);
  Eigen::MatrixXd moved(ens.states.rows(), N);
  bool any_alive = false;
  long first_dead = -1;
  for (Eigen::Index m = 0; m < M; ++m) {
    RngStream pm = prop.split(static_cast<std::uint64_t>(m));
    const auto theta = next.params.col(m);
    for (Eigen::Index n = 0; n < N; ++n) {
      model.sample_transition(ens.states.col(m * N + n), theta, xi, pm, moved.col(n));
      const double lg = model.log_observation(y, moved.col(n), theta, xi);
      if (std::isnan(lg)) {
        throw std::domain_error("NaN observation log-density at particle (" + std::to_string(m) +
                                ", " + std::to_string(n) + ")");
      }
      lw(n) = std::log(ens.state_weights(n, m)) + lg;
    }
    if (lw.maxCoeff() < kLogWeightFloor) {
      // Dead bank: its parameter particle receives zero weight.
      bank_log(m) = -std::numeric_limits<double>::infinity();
      next.state_weights.col(m).setConstant(1.0 / static_cast<double>(N));
      next.bank(m) = moved;
      if (first_dead < 0) first_dead = static_cast<long>(m);
      continue;
    }
    any_alive = true;
    bank_log(m) = normalize_log_weights(lw);
    if (scheme == ResampleScheme::None) {
      next.bank(m) = moved;
      next.state_weights.col(m) = lw;
    } else {
      RngStream rm = rstate.split(static_cast<std::uint64_t>(m));
      const auto anc = resample(lw, N, scheme, rm);
      for (Eigen::Index n = 0; n < N; ++n) next.states.col(m * N + n) = moved.col(anc[static_cast<std::size_t>(n)]);
      next.state_weights.col(m).setConstant(1.0 / static_cast<double>(N));
    }
  }
  if (!any_alive) {
    throw DegenerateWeights("state", first_dead,
                            "every inner bank has log-weights below the floor at t=" +
                                std::to_string(next.t));
  }

  Eigen::VectorXd plw = ens.param_weights.array().log().matrix() + bank_log;
  if (plw.maxCoeff() < kLogWeightFloor) {
    throw DegenerateWeights("param", -1,
                            "parameter log-weights below the floor at t=" + std::to_string(next.t));
  }
  normalize_log_weights(plw);
  if (scheme == ResampleScheme::None) {
    next.param_weights = plw;
    return next;
  }
  RngStream rp = rng.split("resample-param");
  const auto anc = resample(plw, M, scheme, rp);
  NestedEnsemble out;
  out.t = next.t;
  out.params.resize(next.params.rows(), M);
  out.states.resize(next.states.rows(), next.states.cols());
  out.state_weights.resize(N, M);
  for (Eigen::Index m = 0; m < M; ++m) {
    const Eigen::Index a = anc[static_cast<std::size_t>(m)];
    out.params.col(m) = next.params.col(a);
    out.bank(m) = next.bank(a);
    out.state_weights.col(m) = next.state_weights.col(a);
  }
  out.param_weights = Eigen::VectorXd::Constant(M, 1.0 / static_cast<double>(M));
  return out;
}

PosteriorSummary posterior_summary(const NestedEnsemble& ens) {
  PosteriorSummary s;
  s.param_mean = ens.params * ens.param_weights;
  const Eigen::MatrixXd centered = ens.params.colwise() - s.param_mean;
  s.param_cov = centered * ens.param_weights.asDiagonal() * centered.transpose();
  s.state_mean = Eigen::VectorXd::Zero(ens.states.rows());
  for (Eigen::Index m = 0; m < ens.M(); ++m) {
    s.state_mean += ens.param_weights(m) * (ens.bank(m) * ens.state_weights.col(m));
  }
  return s;
}

}  // namespace obed
