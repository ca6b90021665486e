#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "obed/model.hpp"
#include "obed/rng.hpp"

namespace obed {

/// Log-weights below this are treated as zero likelihood.
inline constexpr double kLogWeightFloor = -700.0;

/// Gaussian jitter with per-coordinate variance scale / M^1.5, reflected into the prior box.
struct JitterKernel {
  double scale = 0.0;

  double variance(Eigen::Index M) const;
};

enum class ResampleScheme {
  Systematic,
  Multinomial,
  /// No resampling: weights are carried forward (sequential importance sampling).
  None,
};

std::string to_string(ResampleScheme scheme);
ResampleScheme resample_scheme_from_string(const std::string& name);

/// Raised when every unnormalized weight at a level underflows the floor.
class DegenerateWeights : public std::runtime_error {
 public:
  DegenerateWeights(std::string level, long index, const std::string& what);

  /// "state" or "param".
  const std::string& level() const { return level_; }
  /// Offending outer index for the state level, -1 when not tied to one.
  long index() const { return index_; }

 private:
  std::string level_;
  long index_;
};

/// Two-level particle approximation. Inner bank m occupies columns [m N, (m+1) N)
/// of `states`; column m of `state_weights` holds its weights.
struct NestedEnsemble {
  Eigen::MatrixXd params;         // d_theta x M
  Eigen::VectorXd param_weights;  // M
  Eigen::MatrixXd states;         // d_x x (M N)
  Eigen::MatrixXd state_weights;  // N x M
  int t = 0;

  Eigen::Index M() const { return params.cols(); }
  Eigen::Index N() const { return state_weights.rows(); }
  auto bank(Eigen::Index m) { return states.middleCols(m * N(), N()); }
  auto bank(Eigen::Index m) const { return states.middleCols(m * N(), N()); }

  /// Throws std::logic_error when shapes disagree, a weight is negative, or a
  /// weight layer does not sum to one within tol.
  void check_invariants(double tol = 1e-9) const;

  /// Snapshot layout: {"t", "M", "N", "params": [M][d_theta],
  /// "param_weights": [M], "states": [M][N][d_x], "state_weights": [M][N]}.
  nlohmann::json to_json() const;
  static NestedEnsemble from_json(const nlohmann::json& j);
};

NestedEnsemble init_ensemble(const ModelSpec& model, Eigen::Index M, Eigen::Index N,
                             RngStream rng);

/// Reflects v into [lower, upper]; infinite bounds are left open.
double reflect_into(double v, double lower, double upper);

/// Adds N(0, kernel.variance(M)) noise to each coordinate of each column, reflecting
/// at the bounds. A zero variance returns the input unchanged.
Eigen::MatrixXd jitter(const Eigen::MatrixXd& params, const JitterKernel& kernel,
                       const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, RngStream rng);

/// Ancestor indices for normalized or unnormalized nonnegative weights.
std::vector<Eigen::Index> resample(const Eigen::VectorXd& weights, Eigen::Index count,
                                   ResampleScheme scheme, RngStream& rng);

/// Normalizes log-weights in place to probabilities and returns the log of their sum.
double normalize_log_weights(Eigen::Ref<Eigen::VectorXd> log_weights);

/// One filter update with observation y at design xi. Streams: "jitter",
/// "propagate"/m, "resample-state"/m, "resample-param".
NestedEnsemble npf_step(const NestedEnsemble& ens, const ConstVec& y, const ConstVec& xi,
                        const ModelSpec& model, const JitterKernel& kernel, RngStream rng,
                        ResampleScheme scheme = ResampleScheme::Systematic);

struct PosteriorSummary {
  Eigen::VectorXd param_mean;
  Eigen::MatrixXd param_cov;
  Eigen::VectorXd state_mean;
};

PosteriorSummary posterior_summary(const NestedEnsemble& ens);

}  // namespace obed
