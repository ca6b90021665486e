#pragma once

#include <Eigen/Dense>
#include <vector>

#include "obed/model.hpp"
#include "obed/npf.hpp"
#include "obed/rng.hpp"

namespace obed {

/// Joint draws (theta, x_{t-1}, x~_t, y~_t, w_y) from the one-step generative
/// distribution at a candidate design. Column l of each matrix is sample l.
struct GammaBatch {
  std::vector<Eigen::Index> outer;  // m of each sample
  std::vector<Eigen::Index> inner;  // n of each sample
  Eigen::MatrixXd theta;
  Eigen::MatrixXd prev_state;
  Eigen::MatrixXd pred_state;
  Eigen::MatrixXd pseudo_obs;
  Eigen::VectorXd weight;

  Eigen::Index size() const { return weight.size(); }
};

/// Propagated particles backing one sub-estimator: particle p carries
/// theta(:, p), its previous state and its propagated state, with log-weight
/// log_weight(p). For the likelihood set the weight is log w_x; for the
/// evidence set it is log w_theta + log w_x and theta is jittered.
struct ParticleSet {
  Eigen::MatrixXd theta;       // d_theta x P
  Eigen::MatrixXd prev_state;  // d_x x P
  Eigen::MatrixXd state;       // d_x x P
  Eigen::VectorXd log_weight;  // P
  Eigen::Index bank_size = 0;  // N; bank m is [m N, (m+1) N)
};

/// Everything random about one estimator evaluation. Holding the draws
/// fixed and re-evaluating at a new design reproduces the estimator with
/// common random numbers.
struct EigDraws {
  GammaBatch gamma;
  ParticleSet likelihood;
  ParticleSet evidence;
  Eigen::Index M = 0;
  Eigen::Index N = 0;
};

struct EigDiagnostics {
  Eigen::Index L = 0;
  Eigen::Index M = 0;
  Eigen::Index N = 0;
  /// Extremes of log L^ and log Z^ over the batch.
  double min_log_likelihood = 0.0;
  double max_log_likelihood = 0.0;
  double min_log_evidence = 0.0;
  double max_log_evidence = 0.0;
  /// Extremes of log(L^/Z^) over the batch.
  double min_log_ratio = 0.0;
  double max_log_ratio = 0.0;
  /// Observation log-densities raised to the floor.
  long floored = 0;
  /// Distinct pseudo-observations scored against the evidence set.
  Eigen::Index unique_obs = 0;
};

struct EigEstimate {
  double value = 0.0;
  Eigen::VectorXd gradient;
  EigDiagnostics diagnostics;
};

/// Draws the Gamma batch. batch = 0 or batch >= M N uses every (m, n) pair;
/// otherwise `batch` distinct pairs are picked uniformly and their weights
/// renormalized.
GammaBatch sample_gamma(const NestedEnsemble& ens, const ConstVec& xi, const ModelSpec& model,
                        Eigen::Index batch, RngStream rng);

/// Inner particles x.. ~ f(. | x, theta^(m), xi), stream "propagate"/m.
ParticleSet propagate_likelihood_set(const NestedEnsemble& ens, const ConstVec& xi,
                                     const ModelSpec& model, RngStream rng);
/// Jittered theta. ~ kappa(. | theta) (stream "jitter") and x. ~ f(. | x, theta., xi)
/// (stream "propagate"/i). With a zero-variance kernel the propagated states
/// coincide with propagate_likelihood_set on the same stream.
ParticleSet propagate_evidence_set(const NestedEnsemble& ens, const ConstVec& xi,
                                   const ModelSpec& model, const JitterKernel& kernel,
                                   RngStream rng);

/// Streams: "gamma" for the batch and "inner" shared by both particle sets.
EigDraws draw_eig_samples(const NestedEnsemble& ens, const ConstVec& xi, const ModelSpec& model,
                          const JitterKernel& kernel, Eigen::Index batch, RngStream rng);

/// Scores the frozen draws at design xi. The gradient is filled only when requested.
EigEstimate evaluate_eig(const EigDraws& draws, const ConstVec& xi, const ModelSpec& model,
                         bool with_gradient);

/// log L^(y) over inner bank m of `set` and, when grad is non-null, grad L^ / L^.
double log_likelihood_hat(const ConstVec& y, Eigen::Index m, const ParticleSet& set,
                          const ConstVec& xi, const ModelSpec& model,
                          Eigen::VectorXd* grad = nullptr);
/// log Z^(y) over the whole set and, when grad is non-null, grad Z^ / Z^.
double log_evidence_hat(const ConstVec& y, const ParticleSet& set, const ConstVec& xi,
                        const ModelSpec& model, Eigen::VectorXd* grad = nullptr);

double likelihood_hat(const ConstVec& y, Eigen::Index m, const NestedEnsemble& ens,
                      const ConstVec& xi, const ModelSpec& model, RngStream rng);
double evidence_hat(const ConstVec& y, const NestedEnsemble& ens, const ConstVec& xi,
                    const ModelSpec& model, const JitterKernel& kernel, RngStream rng);
/// Unnormalized gradients grad L^ and grad Z^.
Eigen::VectorXd likelihood_grad_hat(const ConstVec& y, Eigen::Index m, const NestedEnsemble& ens,
                                    const ConstVec& xi, const ModelSpec& model, RngStream rng);
Eigen::VectorXd evidence_grad_hat(const ConstVec& y, const NestedEnsemble& ens, const ConstVec& xi,
                                  const ModelSpec& model, const JitterKernel& kernel,
                                  RngStream rng);

double eig_hat(const NestedEnsemble& ens, const ConstVec& xi, const ModelSpec& model,
               const JitterKernel& kernel, Eigen::Index batch, RngStream rng);
EigEstimate eig_grad_hat(const NestedEnsemble& ens, const ConstVec& xi, const ModelSpec& model,
                         const JitterKernel& kernel, Eigen::Index batch, RngStream rng);

}  // namespace obed
