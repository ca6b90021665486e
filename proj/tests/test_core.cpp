#include <doctest.h>

#include <numbers>

#include "helpers.hpp"
#include "obed/design.hpp"
#include "obed/model.hpp"
#include "obed/models/sir.hpp"
#include "obed/models/source.hpp"
#include "obed/rng.hpp"

using namespace obed;
using obed::testing::vec;
constexpr double pi = std::numbers::pi;

TEST_SUITE("ssm-core") {

TEST_CASE("identical seed and path give identical draw sequences") {
  RngStream a = RngStream(42).split("truth").split(3);
  RngStream b = RngStream(42).split("truth").split(3);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(a() == b());
    REQUIRE(a.normal() == b.normal());
  }
}

TEST_CASE("a child stream does not depend on how much the parent was consumed") {
  RngStream parent(7);
  const RngStream before = parent.split("x");
  for (int i = 0; i < 10; ++i) parent();
  RngStream after = parent.split("x");
  RngStream b = before;
  CHECK(after() == b());
}

TEST_CASE("disjoint paths give uncorrelated streams") {
  RngStream a = RngStream(1).split("a"), b = RngStream(1).split("b");
  RngStream i0 = RngStream(1).split(0), i1 = RngStream(1).split(1);
  const int n = 20000;
  double sab = 0, s01 = 0;
  for (int i = 0; i < n; ++i) {
    sab += a.normal() * b.normal();
    s01 += i0.normal() * i1.normal();
  }
  CHECK(std::abs(sab / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(s01 / n) < 4.0 / std::sqrt(n));
}

TEST_CASE("uniform draws lie in [0, 1) with the right mean") {
  RngStream r(3);
  double s = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    s += u;
  }
  CHECK(s / 1e5 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("transform_design examples") {
  SUBCASE("zero latent on the 2-simplex is the midpoint") {
    const DesignVector d = transform_design(vec({0.0}), Reparam::SimplexSigmoid, 2);
    CHECK(d.values(0) == 0.5);
    CHECK(d.values(1) == 0.5);
  }
  SUBCASE("3pi/2 wraps to -pi/2") {
    const DesignVector d = transform_design(vec({3 * pi / 2}), Reparam::AngleWrap, 1);
    CHECK(d.values(0) == doctest::Approx(-pi / 2).epsilon(1e-14));
  }
  SUBCASE("a large latent saturates to the vertex") {
    const DesignVector d = transform_design(vec({50.0}), Reparam::SimplexSigmoid, 2);
    CHECK(d.values(0) == doctest::Approx(1.0));
    CHECK(d.values(1) == doctest::Approx(0.0));
    CHECK(d.values(1) >= 0.0);
  }
  SUBCASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(transform_design(vec({0.0, 1.0}), Reparam::SimplexSigmoid, 2), std::invalid_argument);
    CHECK_THROWS_AS(transform_design(vec({0.0}), Reparam::AngleWrap, 2), std::invalid_argument);
  }
}

TEST_CASE("wrap_angle maps onto [-pi, pi)") {
  CHECK(wrap_angle(pi) == -pi);
  CHECK(wrap_angle(-pi) == -pi);
  CHECK(wrap_angle(pi + 0.1) == doctest::Approx(-pi + 0.1));
  CHECK(wrap_angle(-6.0) == doctest::Approx(2 * pi - 6.0));
}

TEST_CASE("reparameterization round trip satisfies the constraints for 10^4 latents per tag") {
  RngStream rng(17);
  for (Reparam r : {Reparam::SimplexSigmoid, Reparam::AngleWrap, Reparam::Unconstrained}) {
    for (Eigen::Index d : {2, 3}) {
      for (int i = 0; i < 10000; ++i) {
        Eigen::VectorXd z(latent_dimension(r, d));
        for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = 10.0 * rng.normal();
        const DesignVector x = transform_design(z, r, d);
        REQUIRE(x.values.size() == d);
        REQUIRE(satisfies_constraints(x));
        if (r == Reparam::SimplexSigmoid) {
          REQUIRE(std::abs(x.values.sum() - 1.0) <= 1e-9);
          REQUIRE((x.values.array() >= 0.0).all());
        }
        if (r == Reparam::AngleWrap) {
          REQUIRE((x.values.array() >= -pi).all());
          REQUIRE((x.values.array() < pi).all());
        }
      }
    }
  }
}

TEST_CASE("transform Jacobian matches central differences at step 1e-5") {
  RngStream rng(5);
  for (Reparam r : {Reparam::SimplexSigmoid, Reparam::AngleWrap, Reparam::Unconstrained}) {
    for (int i = 0; i < 500; ++i) {
      const Eigen::Index d = 3;
      Eigen::VectorXd z(latent_dimension(r, d));
      // Keep angle probes away from the wrap seam, where the map is discontinuous.
      for (Eigen::Index k = 0; k < z.size(); ++k) {
        z(k) = r == Reparam::AngleWrap ? 3.0 * (2 * rng.uniform() - 1) : 3.0 * rng.normal();
      }
      const Eigen::MatrixXd J = transform_jacobian(z, r, d);
      REQUIRE(J.rows() == d);
      REQUIRE(J.cols() == z.size());
      for (Eigen::Index k = 0; k < z.size(); ++k) {
        Eigen::VectorXd zp = z, zm = z;
        zp(k) += 1e-5;
        zm(k) -= 1e-5;
        const Eigen::VectorXd fd = (transform_design(zp, r, d).values - transform_design(zm, r, d).values) / 2e-5;
        const double err = (fd - J.col(k)).norm() / std::max(J.col(k).norm(), 1e-3);
        REQUIRE(err <= 1e-6);
      }
    }
  }
}

TEST_CASE("design_from_values inverts the transform") {
  const DesignVector d = design_from_values(vec({0.3, 0.7}), Reparam::SimplexSigmoid);
  CHECK(d.values(0) == doctest::Approx(0.3).epsilon(1e-12));
  const DesignVector back = transform_design(d.latent, Reparam::SimplexSigmoid, 2);
  CHECK(back.values(0) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("validate_model examples") {
  SUBCASE("linear-Gaussian model has no violations over 100 probes") {
    LinGaussModel m;
    const ValidationReport r = validate_model(m, 100, RngStream(1));
    CHECK(r.probes == 100);
    CHECK(r.violations.empty());
  }
  SUBCASE("a wrong gradient dimension is flagged on every probe") {
    obed::testing::WrongGradientModel m;
    const ValidationReport r = validate_model(m, 100, RngStream(1));
    CHECK(r.violations.size() == 100);
    for (const auto& v : r.violations) CHECK(v.kind == "gradient-dimension");
  }
  SUBCASE("SIR at I = 0 is flagged only without the rate clamp") {
    SirConfig c;
    c.initial_infected = {0.0, 0.0};
    c.rate_floor = 0.0;
    const ValidationReport raw = validate_model(SirModel(c), 20, RngStream(2));
    CHECK(raw.violations.size() >= 20);
    bool saw_likelihood = false;
    for (const auto& v : raw.violations) saw_likelihood = saw_likelihood || v.kind == "likelihood";
    CHECK(saw_likelihood);
    c.rate_floor = 1e-8;
    CHECK(validate_model(SirModel(c), 20, RngStream(2)).ok());
  }
  SUBCASE("both testbeds pass") {
    CHECK(validate_model(SirModel(), 50, RngStream(3)).ok());
    CHECK(validate_model(SourceModel(), 50, RngStream(3)).ok());
  }
  SUBCASE("a zero probe budget is rejected") {
    CHECK_THROWS_AS(validate_model(LinGaussModel(), 0, RngStream(1)), std::invalid_argument);
  }
}

TEST_CASE("sampling operations are deterministic in (seed, path)") {
  SirModel sir;
  SourceModel src;
  for (const ModelSpec* m : {static_cast<const ModelSpec*>(&sir), static_cast<const ModelSpec*>(&src)}) {
    RngStream a(9), b(9);
    const Eigen::VectorXd ta = m->sample_param_prior(a), tb = m->sample_param_prior(b);
    CHECK((ta.array() == tb.array()).all());
    const Eigen::VectorXd xa = m->sample_state_prior(a), xb = m->sample_state_prior(b);
    CHECK((xa.array() == xb.array()).all());
    Eigen::VectorXd x1a(m->state_dim()), x1b(m->state_dim()), ya(m->obs_dim()), yb(m->obs_dim());
    const DesignVector da = m->random_design(a), db = m->random_design(b);
    CHECK((da.values.array() == db.values.array()).all());
    m->sample_transition(xa, ta, da.values, a, x1a);
    m->sample_transition(xb, tb, db.values, b, x1b);
    CHECK((x1a.array() == x1b.array()).all());
    m->sample_observation(x1a, ta, da.values, a, ya);
    m->sample_observation(x1b, tb, db.values, b, yb);
    CHECK((ya.array() == yb.array()).all());
  }
}

TEST_CASE("design-independent transitions return the exact zero gradient") {
  SirModel sir;
  SourceModel src;
  RngStream rng(4);
  for (const ModelSpec* m : {static_cast<const ModelSpec*>(&sir), static_cast<const ModelSpec*>(&src)}) {
    CHECK_FALSE(m->transition_depends_on_design());
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd th = m->sample_param_prior(rng), x0 = m->sample_state_prior(rng);
      const DesignVector xi = m->random_design(rng);
      Eigen::VectorXd x1(m->state_dim());
      m->sample_transition(x0, th, xi.values, rng, x1);
      const Eigen::VectorXd g = m->grad_xi_log_transition(x1, x0, th, xi.values);
      REQUIRE(g.size() == m->design_dim());
      REQUIRE((g.array() == 0.0).all());
    }
  }
}

}  // TEST_SUITE
