#include <doctest.h>

#include <numbers>

#include "helpers.hpp"
#include "obed/experiments.hpp"
#include "obed/models/sir.hpp"
#include "obed/models/source.hpp"
#include "obed/optim.hpp"

using namespace obed;
using obed::testing::vec;

namespace {

LinGaussConfig peaked_config() {
  LinGaussConfig c = obed::testing::static_state_config();
  c.design_lower = -1.0;
  c.design_upper = 1.5;
  return c;
}

}  // namespace

TEST_SUITE("design-opt") {

TEST_CASE("the first Adam step moves each coordinate by the learning rate") {
  AdamConfig c;
  c.learning_rate = 0.03;
  c.epsilon = 1e-14;
  const auto [s, u] = adam_step(adam_init(c, 3), vec({2.0, -0.001, 50.0}));
  CHECK(u(0) == doctest::Approx(0.03).epsilon(1e-9));
  CHECK(u(1) == doctest::Approx(-0.03).epsilon(1e-9));
  CHECK(u(2) == doctest::Approx(0.03).epsilon(1e-9));
  CHECK(s.iteration == 1);
}

TEST_CASE("a zero first gradient gives a zero update") {
  const auto [s, u] = adam_step(adam_init(AdamConfig{}, 2), Eigen::VectorXd::Zero(2));
  CHECK((u.array() == 0.0).all());
}

TEST_CASE("a constant gradient drives the update magnitude to the learning rate") {
  AdamConfig c;
  c.learning_rate = 0.01;
  AdamState s = adam_init(c, 1);
  Eigen::VectorXd u;
  for (int k = 0; k < 5000; ++k) std::tie(s, u) = adam_step(s, vec({0.7}));
  CHECK(u(0) == doctest::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("Adam rejects non-finite gradients and is deterministic") {
  CHECK_THROWS_AS(adam_step(adam_init(AdamConfig{}, 1), vec({std::nan("")})), std::domain_error);
  AdamState a = adam_init(AdamConfig{}, 2), b = a;
  RngStream r(1);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd g = vec({r.normal(), r.normal()});
    Eigen::VectorXd ua, ub;
    std::tie(a, ua) = adam_step(a, g);
    std::tie(b, ub) = adam_step(b, g);
    REQUIRE((ua.array() == ub.array()).all());
  }
  CHECK((a.m.array() == b.m.array()).all());
  CHECK((a.v.array() == b.v.array()).all());
}

TEST_CASE("the inverse-sqrt schedule decays the step") {
  AdamConfig c;
  c.schedule = Schedule::InverseSqrt;
  CHECK(c.step_size(1) == doctest::Approx(c.learning_rate));
  CHECK(c.step_size(4) == doctest::Approx(c.learning_rate / 2));
  CHECK(schedule_from_string(to_string(Schedule::InverseSqrt)) == Schedule::InverseSqrt);
}

TEST_CASE("one iteration on a design-free model returns the random start") {
  obed::testing::DesignFreeModel m;
  const NestedEnsemble e = init_ensemble(m, 10, 10, RngStream(1));
  OptimizeOptions o;
  o.iterations = 1;
  const OptimizeResult r = optimize_design(e, m, JitterKernel{2.0}, o, RngStream(2));
  const DesignVector start = random_design(m, RngStream(2).split("init"));
  CHECK(r.design.values(0) == start.values(0));
  CHECK(r.trace.size() == 1);
}

TEST_CASE("gradient ascent finds the peak of a concave test objective") {
  obed::testing::PeakedGainModel m(peaked_config(), 0.3);
  const NestedEnsemble e = init_ensemble(m, 30, 30, RngStream(1));
  OptimizeOptions o;
  o.iterations = 200;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const OptimizeResult r = optimize_design(e, m, JitterKernel{0.0}, o, RngStream(s));
    CHECK(std::abs(r.design.values(0) - 0.3) <= 0.05);
  }
}

TEST_CASE("ascent improves the exact objective in at least 90% of seeded runs") {
  obed::testing::PeakedGainModel m(peaked_config(), 0.3);
  const NestedEnsemble e = init_ensemble(m, 20, 20, RngStream(1));
  const GaussianBelief b = m.prior_belief();
  OptimizeOptions o;
  o.iterations = 50;
  int improved = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const OptimizeResult r = optimize_design(e, m, JitterKernel{0.0}, o, RngStream(s));
    const double start = random_design(m, RngStream(s).split("init")).values(0);
    if (m.exact_eig(b, r.design.values(0)) >= m.exact_eig(b, start)) ++improved;
  }
  CHECK(improved >= 45);
}

TEST_CASE("latent steps keep designs on their constraint sets") {
  SirModel sir;
  SourceModel src;
  RngStream r(4);
  for (const ModelSpec* m : {static_cast<const ModelSpec*>(&sir), static_cast<const ModelSpec*>(&src)}) {
    DesignVector d = m->random_design(r);
    for (int k = 0; k < 10000; ++k) {
      Eigen::VectorXd step(d.latent.size());
      for (Eigen::Index i = 0; i < step.size(); ++i) step(i) = 2.0 * r.normal();
      d = apply_latent_step(d, step);
      REQUIRE(satisfies_constraints(d, 1e-9));
      if (d.reparam == Reparam::SimplexSigmoid) REQUIRE(std::abs(d.values.sum() - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("optimized designs satisfy their constraints") {
  SourceModel src;
  const NestedEnsemble e = init_ensemble(src, 20, 20, RngStream(1));
  OptimizeOptions o;
  o.iterations = 30;
  o.batch = 100;
  o.adam.learning_rate = 0.5;
  const OptimizeResult r = optimize_design(e, src, JitterKernel{0.15}, o, RngStream(3));
  CHECK(satisfies_constraints(r.design));
  CHECK(r.trace.size() == 30);
}

TEST_CASE("the SIR gradient trace trends upward") {
  SirModel sir;
  OptimizeOptions o;
  o.iterations = 100;
  o.batch = 2500;
  std::vector<double> mean(100, 0.0);
  const int seeds = 5;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const NestedEnsemble e = init_ensemble(sir, 50, 50, RngStream(s));
    const OptimizeResult r = optimize_design(e, sir, JitterKernel{2.0}, o, RngStream(100 + s));
    for (int k = 0; k < 100; ++k) mean[k] += r.trace[k] / seeds;
  }
  double first = 0, last = 0;
  for (int k = 0; k < 50; ++k) {
    first += mean[k] / 50;
    last += mean[50 + k] / 50;
  }
  CHECK(last >= first);
}

TEST_CASE("random designs are uniform over the constraint set") {
  SirModel sir;
  SourceModel src;
  RngStream r(5);
  double s = 0;
  for (int i = 0; i < 10000; ++i) {
    RngStream d = r.split(static_cast<std::uint64_t>(i));
    const DesignVector x = random_design(sir, d);
    REQUIRE(std::abs(x.values.sum() - 1.0) <= 1e-12);
    s += x.values(0);
    const DesignVector a = random_design(src, d);
    REQUIRE((a.values.array() >= -std::numbers::pi).all());
    REQUIRE((a.values.array() < std::numbers::pi).all());
  }
  CHECK(std::abs(s / 1e4 - 0.5) <= 0.02);
}

TEST_CASE("static optimization over one step is optimize_design on the prior") {
  SirModel sir;
  StaticOptions so;
  so.horizon = 1;
  so.M = 20;
  so.N = 20;
  so.optimize.iterations = 15;
  so.optimize.batch = 200;
  const RngStream rng(7);
  const StaticResult s = static_optimize(sir, JitterKernel{2.0}, so, rng);
  const NestedEnsemble e = init_ensemble(sir, 20, 20, rng.split("ensemble"));
  const OptimizeResult o = optimize_design(e, sir, JitterKernel{2.0}, so.optimize, rng.split("t").split(std::uint64_t{0}));
  REQUIRE(s.designs.size() == 1);
  CHECK((s.designs[0].values.array() == o.design.values.array()).all());
  CHECK(s.trace == o.trace);
}

TEST_CASE("static optimization of a design-free model returns the random starts") {
  obed::testing::DesignFreeModel m;
  StaticOptions so;
  so.horizon = 4;
  so.M = 10;
  so.N = 10;
  so.optimize.iterations = 10;
  const RngStream rng(3);
  const StaticResult s = static_optimize(m, JitterKernel{2.0}, so, rng);
  REQUIRE(s.designs.size() == 4);
  for (std::uint64_t t = 0; t < 4; ++t) {
    RngStream init = rng.split("t").split(t).split("init");
    CHECK(s.designs[t].values(0) == m.random_design(init).values(0));
  }
}

TEST_CASE("static optimization refuses horizons beyond the cap") {
  StaticOptions so;
  so.horizon = 11;
  so.max_horizon = 10;
  CHECK_THROWS_AS(static_optimize(SirModel(), JitterKernel{2.0}, so, RngStream(1)), std::invalid_argument);
  so.horizon = 0;
  CHECK_THROWS_AS(static_optimize(SirModel(), JitterKernel{2.0}, so, RngStream(1)), std::invalid_argument);
}

TEST_CASE("static SIR designs do not beat adaptive ones over ten steps") {
  SirModel sir;
  RunSettings rs;
  rs.horizon = 10;
  rs.budgets = {50, 50, 2500, 100};
  rs.eval_batch = 2500;
  rs.kernel = JitterKernel{2.0};
  StaticOptions so;
  so.horizon = 10;
  so.M = 50;
  so.N = 50;
  so.optimize.iterations = 100;
  so.optimize.batch = 2500;
  double adaptive = 0, fixed = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DesignPolicy p{PolicyTag::Static, static_optimize(sir, rs.kernel, so, RngStream(seed).split("static")).designs};
    for (const auto& d : p.designs) REQUIRE(satisfies_constraints(d));
    fixed += run_sequential(sir, p, rs, seed).teig(10) / 10;
    adaptive += run_sequential(sir, DesignPolicy{PolicyTag::Badpods, {}}, rs, seed).teig(10) / 10;
  }
  MESSAGE("mean TEIG over 10 steps: adaptive " << adaptive << ", static " << fixed);
  CHECK(fixed <= adaptive);
}

TEST_CASE("policy names") {
  for (PolicyTag t : {PolicyTag::Badpods, PolicyTag::Random, PolicyTag::Static}) CHECK(policy_from_string(to_string(t)) == t);
  CHECK_THROWS_AS(policy_from_string("greedy"), std::invalid_argument);
}

}  // TEST_SUITE
