#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "obed/design.hpp"
#include "obed/eig.hpp"
#include "obed/model.hpp"
#include "obed/npf.hpp"

namespace obed {

enum class Schedule { Constant, InverseSqrt };

std::string to_string(Schedule s);
Schedule schedule_from_string(const std::string& s);

struct AdamConfig {
  double learning_rate = 0.03;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  Schedule schedule = Schedule::Constant;

  /// Step size at 1-based iteration k.
  double step_size(long k) const;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long iteration = 0;
  AdamConfig config;
};

AdamState adam_init(const AdamConfig& config, Eigen::Index dim);

/// Bias-corrected Adam for ascent: callers apply latent += update.
std::pair<AdamState, Eigen::VectorXd> adam_step(const AdamState& state,
                                                const Eigen::VectorXd& gradient);

struct OptimizeOptions {
  Eigen::Index iterations = 100;
  /// Outer batch L' for each gradient estimate; 0 uses every particle pair.
  Eigen::Index batch = 0;
  AdamConfig adam;
};

struct OptimizeResult {
  DesignVector design;
  /// EIG estimate at each iterate before its update.
  std::vector<double> trace;
};

/// Adds a latent step and re-applies the reparameterization. Angle latents are
/// kept wrapped.
DesignVector apply_latent_step(const DesignVector& design, const Eigen::VectorXd& step);

/// Stochastic gradient ascent on the EIG from a random start. Streams: "init"
/// for the start, "iter"/k for the k-th gradient estimate.
OptimizeResult optimize_design(const NestedEnsemble& ens, const ModelSpec& model,
                               const JitterKernel& kernel, const OptimizeOptions& options,
                               RngStream rng);

DesignVector random_design(const ModelSpec& model, RngStream rng);

struct StaticOptions {
  Eigen::Index horizon = 1;
  Eigen::Index M = 50;
  Eigen::Index N = 50;
  /// Refuse horizons above this cap.
  Eigen::Index max_horizon = 200;
  ResampleScheme resampling = ResampleScheme::Systematic;
  OptimizeOptions optimize;
};

struct StaticResult {
  std::vector<DesignVector> designs;
  /// Sum over timesteps of the EIG estimates, per iteration.
  std::vector<double> trace;
};

/// Joint offline optimization of xi_{1:T} against prior-predictive rollouts:
/// each iteration draws a pseudo-truth from the prior, simulates its
/// observations under the current designs and filters them from the prior
/// ensemble, scoring every timestep's one-step EIG on the way.
///
/// Streams: "ensemble" for the prior ensemble, "t"/t/"init" and
/// "t"/t/"iter"/k for timestep t, and "rollout"/k for the pseudo-truth and
/// filter updates. With T = 1 this is optimize_design on the prior ensemble
/// with stream "t"/0.
StaticResult static_optimize(const ModelSpec& model, const JitterKernel& kernel,
                             const StaticOptions& options, RngStream rng);

enum class PolicyTag { Badpods, Random, Static };

std::string to_string(PolicyTag tag);
PolicyTag policy_from_string(const std::string& s);

struct DesignPolicy {
  PolicyTag tag = PolicyTag::Badpods;
  /// Precomputed designs of the static policy, one per timestep.
  std::vector<DesignVector> designs;
};

}  // namespace obed
