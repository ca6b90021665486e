#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>

#include "obed/rng.hpp"

namespace obed {

/// How the optimizer's unconstrained latent maps onto the design space.
enum class Reparam {
  SimplexSigmoid,  ///< d components on the probability simplex, d-1 latents
  AngleWrap,       ///< each component an angle in [-pi, pi)
  Unconstrained,   ///< identity
};

std::string to_string(Reparam r);
Reparam reparam_from_string(const std::string& s);

/// Wraps an angle into [-pi, pi).
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  constexpr Scalar two_pi = 2 * pi;
  Scalar r = std::fmod(a + pi, two_pi);
  if (r < 0) r += two_pi;
  r -= pi;
  // fmod can land exactly on +pi after rounding
  if (r >= pi) r -= two_pi;
  return r;
}

/// Numerically stable logistic function.
template <typename Scalar>
Scalar logistic(Scalar z) {
  if (z >= 0) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

/// A point of the design space together with the latent that produced it.
/// `values` is always the transform of `latent`.
struct DesignVector {
  Eigen::VectorXd values;
  Eigen::VectorXd latent;
  Reparam reparam = Reparam::Unconstrained;

  Eigen::Index size() const { return values.size(); }
};

Eigen::Index latent_dimension(Reparam reparam, Eigen::Index design_dim);

/// Maps a latent vector onto the design space. The simplex case uses a softmax
/// with the last latent pinned to zero, which for d = 2 is the logistic
/// function applied to the single latent (second component = complement).
DesignVector transform_design(const Eigen::VectorXd& latent, Reparam reparam,
                              Eigen::Index design_dim);

/// d(values)/d(latent), design_dim x latent_dim.
Eigen::MatrixXd transform_jacobian(const Eigen::VectorXd& latent, Reparam reparam,
                                   Eigen::Index design_dim);

/// Inverse of transform_design on the interior of the constraint set.
DesignVector design_from_values(const Eigen::VectorXd& values, Reparam reparam);

/// Uniform draw over the constraint set: flat Dirichlet on the simplex (for
/// d = 2 that is xi_1 ~ U(0,1)), U[-pi, pi) per angle. Unconstrained designs
/// are drawn uniformly from the box [lower, upper].
DesignVector uniform_design(Reparam reparam, Eigen::Index design_dim, RngStream& rng,
                            double lower = -1.0, double upper = 1.0);

/// True when `values` satisfies the constraint set of its reparameterization.
bool satisfies_constraints(const DesignVector& design, double tol = 1e-9);

}  // namespace obed
