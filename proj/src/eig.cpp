#include "obed/eig.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace obed {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Exponential-family coefficients of a particle set at one design: column a
// of `eta` is component a over particles. Rows of `deriv` are d eta(a, d) at
// a * dxi + d, then -dB/dxi, then grad log f.
struct PreparedSet {
  Eigen::MatrixXd eta;
  Eigen::VectorXd normalizer;
  Eigen::VectorXd log_weight;
  Eigen::MatrixXd deriv;
  /// Full row of each stored row of `deriv`; rows that are zero for every
  /// particle are dropped.
  std::vector<Eigen::Index> deriv_rows;
  Eigen::Index k = 0;
  Eigen::Index dxi = 0;
  Eigen::Index bank_size = 0;
};

PreparedSet prepare(const ParticleSet& set, const ConstVec& xi, const ModelSpec& model,
                    bool with_gradient) {
  PreparedSet p;
  const Eigen::Index P = set.state.cols();
  p.k = model.statistic_dim();
  p.dxi = xi.size();
  p.bank_size = set.bank_size;
  p.eta.resize(P, p.k);
  p.normalizer.resize(P);
  p.log_weight = set.log_weight;
  if (with_gradient) p.deriv.setZero(p.k * p.dxi + 2 * p.dxi, P);
  Eigen::VectorXd natural(p.k);
  Eigen::MatrixXd dnat(p.k, p.dxi);
  Eigen::VectorXd dnorm(p.dxi);
  const bool score_f = with_gradient && model.transition_depends_on_design();
  for (Eigen::Index i = 0; i < P; ++i) {
    p.normalizer(i) = model.observation_natural(set.state.col(i), set.theta.col(i), xi, natural,
                                                dnat, dnorm);
    p.eta.row(i) = natural.transpose();
    if (!with_gradient) continue;
    for (Eigen::Index a = 0; a < p.k; ++a) {
      for (Eigen::Index d = 0; d < p.dxi; ++d) p.deriv(a * p.dxi + d, i) = dnat(a, d);
    }
    p.deriv.col(i).segment(p.k * p.dxi, p.dxi) = -dnorm;
    if (score_f) {
      p.deriv.col(i).segment(p.k * p.dxi + p.dxi, p.dxi) =
          model.grad_xi_log_transition(set.state.col(i), set.prev_state.col(i), set.theta.col(i), xi);
    }
  }
  if (with_gradient) {
    for (Eigen::Index r = 0; r < p.deriv.rows(); ++r) {
      if ((p.deriv.row(r).array() != 0.0).any()) p.deriv_rows.push_back(r);
    }
    if (static_cast<Eigen::Index>(p.deriv_rows.size()) < p.deriv.rows()) {
      Eigen::MatrixXd packed(static_cast<Eigen::Index>(p.deriv_rows.size()), P);
      for (std::size_t r = 0; r < p.deriv_rows.size(); ++r) {
        packed.row(static_cast<Eigen::Index>(r)) = p.deriv.row(p.deriv_rows[r]);
      }
      p.deriv = std::move(packed);
    }
  }
  return p;
}

// log sum_p w_p g(y | particle p) over columns [begin, begin + count), and the
// normalized gradient sum_p P_p (grad log g_p + grad log f_p) when requested.
// The arithmetic per column does not depend on the range, so overlapping
// ranges of identical particles give identical results.
double score_range(const PreparedSet& p, Eigen::Index begin, Eigen::Index count,
                   const Eigen::VectorXd& stat, double h, Eigen::VectorXd* grad, long& floored,
                   Eigen::ArrayXd& buf) {
  const auto lw = p.log_weight.segment(begin, count).array();
  buf.resize(count);
  buf = (h + lw) - p.normalizer.segment(begin, count).array();
  for (Eigen::Index a = 0; a < p.k; ++a) buf += stat(a) * p.eta.col(a).segment(begin, count).array();
  std::vector<Eigen::Index> flagged;
  if (((buf - lw) < kLogWeightFloor).any()) {
    for (Eigen::Index i = 0; i < count; ++i) {
      if (buf(i) - lw(i) < kLogWeightFloor) {
        flagged.push_back(i);
        buf(i) = kLogWeightFloor + lw(i);
      }
    }
    floored += static_cast<long>(flagged.size());
  }
  const double mx = buf.maxCoeff();
  if (!std::isfinite(mx)) {
    throw std::domain_error("particle set has no positive weight or a non-finite density");
  }
  buf = (buf - mx).exp();
  const double s = buf.sum();
  const double value = mx + std::log(s);
  if (std::isnan(value)) throw std::domain_error("non-finite observation density");
  if (grad != nullptr) {
    buf /= s;
    const Eigen::Index base = p.k * p.dxi;
    Eigen::VectorXd r = Eigen::VectorXd::Zero(base + 2 * p.dxi);
    if (!p.deriv_rows.empty()) {
      const Eigen::VectorXd packed = p.deriv.middleCols(begin, count) * buf.matrix();
      for (std::size_t q = 0; q < p.deriv_rows.size(); ++q) r(p.deriv_rows[q]) = packed(static_cast<Eigen::Index>(q));
    }
    grad->resize(p.dxi);
    for (Eigen::Index d = 0; d < p.dxi; ++d) {
      double g = r(base + d) + r(base + p.dxi + d);
      for (Eigen::Index a = 0; a < p.k; ++a) g += stat(a) * r(a * p.dxi + d);
      (*grad)(d) = g;
    }
    // A floored density is locally constant: drop its g-score contribution.
    for (Eigen::Index i : flagged) {
      const Eigen::Index c = begin + i;
      Eigen::VectorXd full = Eigen::VectorXd::Zero(base + 2 * p.dxi);
      for (std::size_t q = 0; q < p.deriv_rows.size(); ++q) full(p.deriv_rows[q]) = p.deriv(static_cast<Eigen::Index>(q), c);
      for (Eigen::Index d = 0; d < p.dxi; ++d) {
        double g = full(base + d);
        for (Eigen::Index a = 0; a < p.k; ++a) g += stat(a) * full(a * p.dxi + d);
        (*grad)(d) -= buf(i) * g;
      }
    }
  }
  return value;
}

double statistic_of(const ModelSpec& model, const ConstVec& y, Eigen::VectorXd& stat) {
  stat.resize(model.statistic_dim());
  return model.observation_statistic(y, stat);
}

bool column_less(const Eigen::MatrixXd& m, Eigen::Index a, Eigen::Index b) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (m(r, a) < m(r, b)) return true;
    if (m(r, a) > m(r, b)) return false;
  }
  return false;
}

bool column_equal(const Eigen::MatrixXd& m, Eigen::Index a, Eigen::Index b) {
  return (m.col(a).array() == m.col(b).array()).all();
}

void check_finite(const Eigen::VectorXd& g, const char* term) {
  if (!g.allFinite()) {
    throw std::domain_error(std::string("non-finite EIG gradient in the ") + term + " term");
  }
}

}  // namespace

GammaBatch sample_gamma(const NestedEnsemble& ens, const ConstVec& xi, const ModelSpec& model,
                        Eigen::Index batch, RngStream rng) {
  const Eigen::Index M = ens.M();
  const Eigen::Index N = ens.N();
  const Eigen::Index total = M * N;
  std::vector<Eigen::Index> ids(static_cast<std::size_t>(total));
  std::iota(ids.begin(), ids.end(), Eigen::Index{0});
  if (batch > 0 && batch < total) {
    RngStream sub = rng.split("subsample");
    for (Eigen::Index i = 0; i < batch; ++i) {
      const auto span = static_cast<std::uint64_t>(total - i);
      const auto j = i + static_cast<Eigen::Index>(sub() % span);
      std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    }
    ids.resize(static_cast<std::size_t>(batch));
    std::sort(ids.begin(), ids.end());
  }
  const auto L = static_cast<Eigen::Index>(ids.size());
  GammaBatch g;
  g.outer.resize(ids.size());
  g.inner.resize(ids.size());
  g.theta.resize(ens.params.rows(), L);
  g.prev_state.resize(ens.states.rows(), L);
  g.pred_state.resize(ens.states.rows(), L);
  g.pseudo_obs.resize(model.obs_dim(), L);
  g.weight.resize(L);
  RngStream draw = rng.split("draw");
  for (Eigen::Index l = 0; l < L; ++l) {
    const Eigen::Index id = ids[static_cast<std::size_t>(l)];
    const Eigen::Index m = id / N;
    const Eigen::Index n = id % N;
    g.outer[static_cast<std::size_t>(l)] = m;
    g.inner[static_cast<std::size_t>(l)] = n;
    g.theta.col(l) = ens.params.col(m);
    g.prev_state.col(l) = ens.states.col(id);
    RngStream s = draw.split(static_cast<std::uint64_t>(id));
    model.sample_transition(g.prev_state.col(l), g.theta.col(l), xi, s, g.pred_state.col(l));
    model.sample_observation(g.pred_state.col(l), g.theta.col(l), xi, s, g.pseudo_obs.col(l));
    g.weight(l) = ens.param_weights(m) * ens.state_weights(n, m);
  }
  const double total_weight = g.weight.sum();
  if (!(total_weight > 0.0)) {
    throw DegenerateWeights("param", -1, "Gamma batch carries no weight");
  }
  g.weight /= total_weight;
  return g;
}

namespace {

ParticleSet propagate_set(const NestedEnsemble& ens, const Eigen::MatrixXd& theta, bool joint_weight,
                          const ConstVec& xi, const ModelSpec& model, RngStream prop) {
  const Eigen::Index M = ens.M();
  const Eigen::Index N = ens.N();
  ParticleSet s;
  s.bank_size = N;
  s.theta.resize(theta.rows(), M * N);
  s.prev_state = ens.states;
  s.state.resize(ens.states.rows(), M * N);
  s.log_weight.resize(M * N);
  for (Eigen::Index m = 0; m < M; ++m) {
    RngStream pm = prop.split(static_cast<std::uint64_t>(m));
    const double lw_theta = joint_weight ? std::log(ens.param_weights(m)) : 0.0;
    for (Eigen::Index n = 0; n < N; ++n) {
      const Eigen::Index c = m * N + n;
      s.theta.col(c) = theta.col(m);
      model.sample_transition(ens.states.col(c), theta.col(m), xi, pm, s.state.col(c));
      s.log_weight(c) = lw_theta + std::log(ens.state_weights(n, m));
    }
  }
  return s;
}

}  // namespace

ParticleSet propagate_likelihood_set(const NestedEnsemble& ens, const ConstVec& xi,
                                     const ModelSpec& model, RngStream rng) {
  return propagate_set(ens, ens.params, false, xi, model, rng.split("propagate"));
}

ParticleSet propagate_evidence_set(const NestedEnsemble& ens, const ConstVec& xi,
                                   const ModelSpec& model, const JitterKernel& kernel,
                                   RngStream rng) {
  const Eigen::MatrixXd jittered =
      jitter(ens.params, kernel, model.param_lower(), model.param_upper(), rng.split("jitter"));
  return propagate_set(ens, jittered, true, xi, model, rng.split("propagate"));
}

EigDraws draw_eig_samples(const NestedEnsemble& ens, const ConstVec& xi, const ModelSpec& model,
                          const JitterKernel& kernel, Eigen::Index batch, RngStream rng) {
  EigDraws d;
  d.M = ens.M();
  d.N = ens.N();
  d.gamma = sample_gamma(ens, xi, model, batch, rng.split("gamma"));
  const RngStream inner = rng.split("inner");
  d.likelihood = propagate_likelihood_set(ens, xi, model, inner);
  d.evidence = propagate_evidence_set(ens, xi, model, kernel, inner);
  return d;
}

EigEstimate evaluate_eig(const EigDraws& draws, const ConstVec& xi, const ModelSpec& model,
                         bool with_gradient) {
  const GammaBatch& g = draws.gamma;
  const Eigen::Index L = g.size();
  const Eigen::Index dxi = xi.size();
  const PreparedSet lik = prepare(draws.likelihood, xi, model, with_gradient);
  const PreparedSet ev = prepare(draws.evidence, xi, model, with_gradient);
  const Eigen::Index N = draws.likelihood.bank_size;

  EigEstimate est;
  est.diagnostics.L = L;
  est.diagnostics.M = draws.M;
  est.diagnostics.N = draws.N;
  est.gradient = Eigen::VectorXd::Zero(dxi);

  std::vector<Eigen::Index> active;
  for (Eigen::Index l = 0; l < L; ++l) {
    if (g.weight(l) > 0.0) active.push_back(l);
  }
  Eigen::MatrixXd stats(model.statistic_dim(), L);
  Eigen::VectorXd hs(L);
  Eigen::VectorXd stat;
  for (Eigen::Index l : active) {
    hs(l) = statistic_of(model, g.pseudo_obs.col(l), stat);
    stats.col(l) = stat;
  }

  // Evidence once per distinct pseudo-observation.
  std::vector<Eigen::Index> order = active;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (column_less(g.pseudo_obs, a, b)) return true;
    if (column_less(g.pseudo_obs, b, a)) return false;
    return a < b;
  });
  Eigen::VectorXd log_z(L);
  Eigen::MatrixXd grad_z(dxi, with_gradient ? L : 0);
  Eigen::ArrayXd buf;
  Eigen::VectorXd gvec;
  long floored = 0;
  Eigen::Index unique = 0;
  const Eigen::Index P = draws.evidence.state.cols();
  for (std::size_t i = 0; i < order.size();) {
    const Eigen::Index head = order[i];
    const double lz = score_range(ev, 0, P, stats.col(head), hs(head),
                                  with_gradient ? &gvec : nullptr, floored, buf);
    ++unique;
    std::size_t j = i;
    while (j < order.size() && column_equal(g.pseudo_obs, order[j], head)) {
      log_z(order[j]) = lz;
      if (with_gradient) grad_z.col(order[j]) = gvec;
      ++j;
    }
    i = j;
  }

  double value = 0.0;
  EigDiagnostics& diag = est.diagnostics;
  diag.min_log_likelihood = diag.min_log_evidence = diag.min_log_ratio = kInf;
  diag.max_log_likelihood = diag.max_log_evidence = diag.max_log_ratio = -kInf;
  Eigen::VectorXd term_l = Eigen::VectorXd::Zero(dxi);
  Eigen::VectorXd term_z = Eigen::VectorXd::Zero(dxi);
  Eigen::VectorXd term_s = Eigen::VectorXd::Zero(dxi);
  const bool score_f = with_gradient && model.transition_depends_on_design();
  for (Eigen::Index l : active) {
    const Eigen::Index m = g.outer[static_cast<std::size_t>(l)];
    const double ll = score_range(lik, m * N, N, stats.col(l), hs(l),
                                  with_gradient ? &gvec : nullptr, floored, buf);
    const double ratio = ll - log_z(l);
    value += g.weight(l) * ratio;
    diag.min_log_likelihood = std::min(diag.min_log_likelihood, ll);
    diag.max_log_likelihood = std::max(diag.max_log_likelihood, ll);
    diag.min_log_evidence = std::min(diag.min_log_evidence, log_z(l));
    diag.max_log_evidence = std::max(diag.max_log_evidence, log_z(l));
    diag.min_log_ratio = std::min(diag.min_log_ratio, ratio);
    diag.max_log_ratio = std::max(diag.max_log_ratio, ratio);
    if (!with_gradient) continue;
    term_l += g.weight(l) * gvec;
    term_z += g.weight(l) * grad_z.col(l);
    if (ratio != 0.0) {
      Eigen::VectorXd score = model.grad_xi_log_observation(g.pseudo_obs.col(l), g.pred_state.col(l),
                                                            g.theta.col(l), xi);
      if (score_f) {
        score += model.grad_xi_log_transition(g.pred_state.col(l), g.prev_state.col(l),
                                              g.theta.col(l), xi);
      }
      term_s += (g.weight(l) * ratio) * score;
    }
  }
  diag.floored = floored;
  diag.unique_obs = unique;
  if (!std::isfinite(value)) throw std::domain_error("non-finite EIG estimate");
  est.value = value;
  if (with_gradient) {
    check_finite(term_l, "likelihood");
    check_finite(term_z, "evidence");
    check_finite(term_s, "score");
    est.gradient = term_l - term_z + term_s;
  }
  return est;
}

double log_likelihood_hat(const ConstVec& y, Eigen::Index m, const ParticleSet& set,
                          const ConstVec& xi, const ModelSpec& model, Eigen::VectorXd* grad) {
  const PreparedSet p = prepare(set, xi, model, grad != nullptr);
  Eigen::VectorXd stat;
  const double h = statistic_of(model, y, stat);
  long floored = 0;
  Eigen::ArrayXd buf;
  return score_range(p, m * set.bank_size, set.bank_size, stat, h, grad, floored, buf);
}

double log_evidence_hat(const ConstVec& y, const ParticleSet& set, const ConstVec& xi,
                        const ModelSpec& model, Eigen::VectorXd* grad) {
  const PreparedSet p = prepare(set, xi, model, grad != nullptr);
  Eigen::VectorXd stat;
  const double h = statistic_of(model, y, stat);
  long floored = 0;
  Eigen::ArrayXd buf;
  return score_range(p, 0, set.state.cols(), stat, h, grad, floored, buf);
}

double likelihood_hat(const ConstVec& y, Eigen::Index m, const NestedEnsemble& ens,
                      const ConstVec& xi, const ModelSpec& model, RngStream rng) {
  if (m < 0 || m >= ens.M()) throw std::invalid_argument("outer index out of range");
  return std::exp(log_likelihood_hat(y, m, propagate_likelihood_set(ens, xi, model, rng), xi, model));
}

double evidence_hat(const ConstVec& y, const NestedEnsemble& ens, const ConstVec& xi,
                    const ModelSpec& model, const JitterKernel& kernel, RngStream rng) {
  return std::exp(log_evidence_hat(y, propagate_evidence_set(ens, xi, model, kernel, rng), xi, model));
}

Eigen::VectorXd likelihood_grad_hat(const ConstVec& y, Eigen::Index m, const NestedEnsemble& ens,
                                    const ConstVec& xi, const ModelSpec& model, RngStream rng) {
  if (m < 0 || m >= ens.M()) throw std::invalid_argument("outer index out of range");
  Eigen::VectorXd g;
  const double lv =
      log_likelihood_hat(y, m, propagate_likelihood_set(ens, xi, model, rng), xi, model, &g);
  return std::exp(lv) * g;
}

Eigen::VectorXd evidence_grad_hat(const ConstVec& y, const NestedEnsemble& ens, const ConstVec& xi,
                                  const ModelSpec& model, const JitterKernel& kernel,
                                  RngStream rng) {
  Eigen::VectorXd g;
  const double lv =
      log_evidence_hat(y, propagate_evidence_set(ens, xi, model, kernel, rng), xi, model, &g);
  return std::exp(lv) * g;
}

double eig_hat(const NestedEnsemble& ens, const ConstVec& xi, const ModelSpec& model,
               const JitterKernel& kernel, Eigen::Index batch, RngStream rng) {
  return evaluate_eig(draw_eig_samples(ens, xi, model, kernel, batch, rng), xi, model, false).value;
}

EigEstimate eig_grad_hat(const NestedEnsemble& ens, const ConstVec& xi, const ModelSpec& model,
                         const JitterKernel& kernel, Eigen::Index batch, RngStream rng) {
  return evaluate_eig(draw_eig_samples(ens, xi, model, kernel, batch, rng), xi, model, true);
}

}  // namespace obed
