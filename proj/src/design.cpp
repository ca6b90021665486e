#include "obed/design.hpp"

#include <stdexcept>

namespace obed {

std::string to_string(Reparam r) {
  switch (r) {
    case Reparam::SimplexSigmoid: return "simplex-sigmoid";
    case Reparam::AngleWrap: return "angle-wrap";
    case Reparam::Unconstrained: return "unconstrained";
  }
  return "unconstrained";
}

Reparam reparam_from_string(const std::string& s) {
  if (s == "simplex-sigmoid") return Reparam::SimplexSigmoid;
  if (s == "angle-wrap") return Reparam::AngleWrap;
  if (s == "unconstrained") return Reparam::Unconstrained;
  throw std::invalid_argument("unknown reparameterization '" + s + "'");
}

Eigen::Index latent_dimension(Reparam reparam, Eigen::Index design_dim) {
  if (reparam == Reparam::SimplexSigmoid) return design_dim - 1;
  return design_dim;
}

namespace {

void check_latent(const Eigen::VectorXd& latent, Reparam reparam, Eigen::Index design_dim) {
  if (design_dim < 1 || (reparam == Reparam::SimplexSigmoid && design_dim < 2)) {
    throw std::invalid_argument("design dimension " + std::to_string(design_dim) +
                                " is not valid for " + to_string(reparam));
  }
  if (latent.size() != latent_dimension(reparam, design_dim)) {
    throw std::invalid_argument("latent has dimension " + std::to_string(latent.size()) +
                                ", expected " +
                                std::to_string(latent_dimension(reparam, design_dim)) +
                                " for " + to_string(reparam));
  }
}

// Simplex latents saturate here. Beyond it a component would round to exactly
// 0 or 1 in double precision and leave the open simplex.
constexpr double kLatentSaturation = 18.0;

Eigen::VectorXd saturate(const Eigen::VectorXd& latent) {
  return latent.cwiseMax(-kLatentSaturation).cwiseMin(kLatentSaturation);
}

Eigen::VectorXd softmax_pinned(const Eigen::VectorXd& raw) {
  const Eigen::VectorXd latent = saturate(raw);
  const Eigen::Index d = latent.size() + 1;
  Eigen::VectorXd v(d);
  if (d == 2) {
    v(0) = logistic(latent(0));
    v(1) = logistic(-latent(0));
    return v;
  }
  v.head(d - 1) = latent;
  v(d - 1) = 0.0;
  const double mx = v.maxCoeff();
  v = (v.array() - mx).exp();
  return v / v.sum();
}

}  // namespace

DesignVector transform_design(const Eigen::VectorXd& latent, Reparam reparam,
                              Eigen::Index design_dim) {
  check_latent(latent, reparam, design_dim);
  DesignVector out;
  out.latent = latent;
  out.reparam = reparam;
  switch (reparam) {
    case Reparam::SimplexSigmoid:
      out.values = softmax_pinned(latent);
      break;
    case Reparam::AngleWrap:
      out.values = latent.unaryExpr([](double a) { return wrap_angle(a); });
      break;
    case Reparam::Unconstrained:
      out.values = latent;
      break;
  }
  return out;
}

Eigen::MatrixXd transform_jacobian(const Eigen::VectorXd& latent, Reparam reparam,
                                   Eigen::Index design_dim) {
  check_latent(latent, reparam, design_dim);
  if (reparam != Reparam::SimplexSigmoid) {
    return Eigen::MatrixXd::Identity(design_dim, design_dim);
  }
  const Eigen::VectorXd v = softmax_pinned(latent);
  Eigen::MatrixXd jac(design_dim, design_dim - 1);
  for (Eigen::Index i = 0; i < design_dim; ++i) {
    for (Eigen::Index k = 0; k < design_dim - 1; ++k) {
      jac(i, k) = std::abs(latent(k)) > kLatentSaturation ? 0.0 : v(i) * ((i == k ? 1.0 : 0.0) - v(k));
    }
  }
  return jac;
}

DesignVector design_from_values(const Eigen::VectorXd& values, Reparam reparam) {
  Eigen::VectorXd latent;
  switch (reparam) {
    case Reparam::SimplexSigmoid: {
      if (values.size() < 2 || (values.array() <= 0.0).any()) {
        throw std::invalid_argument("simplex design must have >= 2 positive components");
      }
      const Eigen::Index d = values.size();
      latent = (values.head(d - 1).array() / values(d - 1)).log().matrix();
      break;
    }
    case Reparam::AngleWrap:
      latent = values.unaryExpr([](double a) { return wrap_angle(a); });
      break;
    case Reparam::Unconstrained:
      latent = values;
      break;
  }
  return transform_design(latent, reparam, values.size());
}

DesignVector uniform_design(Reparam reparam, Eigen::Index design_dim, RngStream& rng,
                            double lower, double upper) {
  Eigen::VectorXd values(design_dim);
  switch (reparam) {
    case Reparam::SimplexSigmoid: {
      if (design_dim == 2) {
        double u = rng.uniform();
        while (u == 0.0) u = rng.uniform();
        values << u, 1.0 - u;
      } else {
        for (Eigen::Index i = 0; i < design_dim; ++i) {
          double u = rng.uniform();
          while (u == 0.0) u = rng.uniform();
          values(i) = -std::log(u);
        }
        values /= values.sum();
      }
      break;
    }
    case Reparam::AngleWrap:
      for (Eigen::Index i = 0; i < design_dim; ++i) {
        values(i) = wrap_angle(-std::numbers::pi + 2.0 * std::numbers::pi * rng.uniform());
      }
      break;
    case Reparam::Unconstrained:
      for (Eigen::Index i = 0; i < design_dim; ++i) {
        values(i) = lower + (upper - lower) * rng.uniform();
      }
      break;
  }
  return design_from_values(values, reparam);
}

bool satisfies_constraints(const DesignVector& design, double tol) {
  const auto& v = design.values;
  if (!v.allFinite()) return false;
  switch (design.reparam) {
    case Reparam::SimplexSigmoid:
      return (v.array() > 0.0).all() && (v.array() < 1.0).all() &&
             std::abs(v.sum() - 1.0) <= tol;
    case Reparam::AngleWrap:
      return (v.array() >= -std::numbers::pi).all() && (v.array() < std::numbers::pi).all();
    case Reparam::Unconstrained:
      return true;
  }
  return false;
}

}  // namespace obed
