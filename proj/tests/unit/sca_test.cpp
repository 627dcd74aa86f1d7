#include <cmath>
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include "otafl/ota.hpp"
#include "otafl/sca.hpp"

using namespace otafl;

namespace {

struct Instance {
  SystemConfig cfg;
  ChannelRealization real;
  AstarsState stars;
  std::vector<int> K;
  ScaProblem problem;
  CVec f;
};

Instance make_instance(std::uint64_t seed, LinkModel link = {}) {
  Instance in;
  in.cfg = config_from_pairs({{"J", "3"}, {"Q", "8"}, {"N", "3"}, {"M", "3"}});
  Rng r(seed);
  const Geometry geo = place_users(in.cfg, r);
  in.real = sample_channels(in.cfg, geo, r);
  in.stars = AstarsState::random(in.cfg, r);
  in.K = assign_data(in.cfg, DataMode::kSet2, r).K;
  in.problem = make_problem(in.real, link, in.K, GainConvention::kPerUser);
  in.f = initial_beamformer(effective_channels(in.problem, in.stars.diag_n(), in.stars.diag_m()), in.K);
  return in;
}

ScaSettings quick_settings() {
  ScaSettings s;
  s.restarts = 1;
  s.imax = 20;
  s.zeta.iters = 400;
  return s;
}

double eval(const Instance& in, const CVec& f, const AstarsState& st) {
  return objective(f, effective_channels(in.problem, st.diag_n(), st.diag_m()), in.K, in.problem.n_reflection,
                   in.problem.conv);
}

}  // namespace

TEST(Objective, HandExample) {
  EffectiveChannels eff;
  eff.h = {CVec::Zero(2), CVec::Zero(2)};
  eff.h[0](0) = 2.0;
  eff.h[1](0) = 3.0;
  CVec f = CVec::Zero(2);
  f(0) = 1.0;
  EXPECT_DOUBLE_EQ(objective(f, eff, {1, 1}, 1, GainConvention::kPerUser), -4.0);
  EXPECT_DOUBLE_EQ(objective(f, eff, {1, 3}, 1, GainConvention::kPerUser), -1.0);
}

TEST(Objective, GlobalPhaseInvariance) {
  const Instance in = make_instance(1);
  const double base = eval(in, in.f, in.stars);
  EXPECT_NEAR(eval(in, in.f * std::polar(1.0, 0.77), in.stars), base, 1e-12 * std::abs(base));
}

TEST(Surrogate, TangentAtExpansionPoint) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Instance in = make_instance(10 + s);
    // Unit-scale channels so the proximal terms do not swamp the gains.
    const auto eff = effective_channels(in.problem, in.stars.diag_n(), in.stars.diag_m());
    double peak = 0.0;
    for (const auto& h : eff.h) peak = std::max(peak, h.norm());
    for (auto& l : in.problem.links) l.h0 /= peak, l.A /= peak;
    in.K.assign(in.K.size(), 1);
    in.problem.K = in.K;
    const SurrogateCoeffs co = surrogate_coeffs(in.problem, in.f, in.stars, 0.3);
    const double obj = eval(in, in.f, in.stars);
    EXPECT_LE(std::abs(surrogate_value(co, in.f, in.stars, in.K) - obj), 1e-10);
  }
}

TEST(UpdateF, ClosedFormExamples) {
  std::vector<CVec> b{CVec(2)};
  b[0] << cdouble(3.0, 0.0), cdouble(0.0, 4.0);
  const CVec f = update_f(Vec::Ones(1), b, CVec::Zero(2));
  EXPECT_NEAR(std::abs(f(0) - cdouble(0.6, 0.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(f(1) - cdouble(0.0, 0.8)), 0.0, 1e-15);

  std::vector<CVec> same(4, b[0]);
  Vec z(4);
  z << 0.1, 2.0, 0.0, 5.0;
  EXPECT_LE((update_f(z, same, CVec::Zero(2)) - f).norm(), 1e-15);

  bool degenerate = false;
  const CVec prev = CVec::Ones(2) / std::sqrt(2.0);
  EXPECT_EQ(update_f(Vec::Zero(1), b, prev, &degenerate), prev);
  EXPECT_TRUE(degenerate);
}

TEST(UpdateF, AlwaysUnitNorm) {
  Rng r(3);
  for (int i = 0; i < 100; ++i) {
    std::vector<CVec> b(3, CVec(4));
    for (auto& v : b)
      for (int j = 0; j < 4; ++j) v(j) = complex_normal(r, 1.0);
    const Vec z = (Vec::Random(3).array().abs() + 0.01).matrix();
    EXPECT_NEAR(update_f(z, b, CVec::Zero(4)).norm(), 1.0, 1e-12);
  }
}

TEST(UpdateTheta, ArgumentsAndScaleInvariance) {
  std::vector<CVec> c{CVec(3)};
  c[0] << cdouble(1.0, 1.0), cdouble(-1.0, 0.0), cdouble(0.0, 0.0);
  const Vec prev = Vec::Constant(3, 0.25);
  const Vec t = update_theta(Vec::Ones(1), c, prev);
  EXPECT_NEAR(t(0), std::numbers::pi / 4.0, 1e-15);
  EXPECT_NEAR(t(1), std::numbers::pi, 1e-15);
  EXPECT_EQ(t(2), 0.25);
  EXPECT_EQ(update_theta(Vec::Constant(1, 7.5), c, prev), t);
}

TEST(Zeta, SingleUserIsInverseKSquared) {
  const Instance in = make_instance(4);
  ScaProblem one = in.problem;
  one.links.resize(1);
  one.K = {3};
  const SurrogateCoeffs co = surrogate_coeffs(one, in.f, in.stars, 0.1);
  const Vec z = solve_zeta(co, one.K, in.stars.amp_n(), in.stars.amp_m());
  ASSERT_EQ(z.size(), 1);
  EXPECT_NEAR(z(0), 1.0 / 9.0, 1e-15);
}

TEST(Zeta, FeasibleAndNoWorseThanUniform) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Instance in = make_instance(20 + s);
    const SurrogateCoeffs co = surrogate_coeffs(in.problem, in.f, in.stars, 0.1);
    const Vec z = solve_zeta(co, in.K, in.stars.amp_n(), in.stars.amp_m());
    double sum = 0.0;
    for (int u = 0; u < z.size(); ++u) {
      EXPECT_GE(z(u), 0.0);
      sum += double(in.K[u]) * in.K[u] * z(u);
    }
    EXPECT_NEAR(sum, 1.0, 1e-10);
    Vec uni(z.size());
    for (int u = 0; u < z.size(); ++u) uni(u) = 1.0 / (double(z.size()) * in.K[u] * in.K[u]);
    EXPECT_LE(dual_objective(z, co, in.stars.amp_n(), in.stars.amp_m()),
              dual_objective(uni, co, in.stars.amp_n(), in.stars.amp_m()) + 1e-12);
  }
}

TEST(Simplex, ProjectionExamplesAndOptimality) {
  Vec a(2), b(3);
  a << 2.0, 0.0;
  b << 1.0, 1.0, 1.0;
  EXPECT_TRUE(project_simplex(a).isApprox(Vec::Unit(2, 0)));
  EXPECT_TRUE(project_simplex(b).isApprox(Vec::Constant(3, 1.0 / 3.0)));
  Rng r(5);
  for (int i = 0; i < 200; ++i) {
    const Vec v = 3.0 * Vec::Random(5);
    const Vec p = project_simplex(v);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
    Vec q(5);
    for (int j = 0; j < 5; ++j) q(j) = uniform(r, 0.0, 1.0);
    q /= q.sum();
    EXPECT_LE((v - p).norm(), (v - q).norm() + 1e-12);
  }
}

TEST(StepSchedule, DiminishingValuesAndSummability) {
  const auto a = step_size_schedule(StepKind::kDiminishing, 1.0, 1000);
  EXPECT_DOUBLE_EQ(a[0], 1.0);
  EXPECT_DOUBLE_EQ(a[1], 0.5);
  EXPECT_DOUBLE_EQ(a[2], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(a[3], 0.25);
  double s2 = 0.0;
  for (double x : a) s2 += x * x;
  EXPECT_LE(s2, std::numbers::pi * std::numbers::pi / 6.0);
  EXPECT_THROW(require_theorem3_schedule(StepKind::kConstant), Error);
  EXPECT_THROW(require_theorem3_schedule(StepKind::kNone), Error);
  EXPECT_NO_THROW(require_theorem3_schedule(StepKind::kDiminishing));
  EXPECT_THROW(step_size_schedule(StepKind::kConstant, 1.5, 3), Error);
  EXPECT_THROW(parse_step_kind("adam"), Error);
}

TEST(Optimize, InfiniteToleranceStopsAfterOneIteration) {
  const Instance in = make_instance(6);
  ScaSettings s = quick_settings();
  s.xi = std::numeric_limits<double>::infinity();
  Rng r(1);
  EXPECT_EQ(optimize(in.problem, in.stars, in.f, s, r).iterations, 1);
}

TEST(Optimize, DescentAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance in = make_instance(100 + seed);
    Rng r(seed);
    const ScaResult res = optimize(in.problem, in.stars, in.f, quick_settings(), r);
    EXPECT_LE(res.obj_last, res.obj_initial);
    EXPECT_LE(res.obj, res.obj_last);
    EXPECT_NEAR(res.f.norm(), 1.0, 1e-12);
    for (Eigen::Index q = 0; q < res.stars.theta_n.size(); ++q)
      EXPECT_NEAR(std::abs(res.stars.diag_n()(q)), std::sqrt(in.stars.lambda_amp * in.stars.beta_r), 1e-12);
    EXPECT_NEAR(eval(in, res.f, res.stars), res.obj, 1e-9 * std::abs(res.obj));
    for (std::size_t i = 1; i < res.trace.size(); ++i) EXPECT_LE(res.trace[i].obj, res.trace[i - 1].obj);
  }
}

TEST(Optimize, AmplificationHelpsCascadeOnlyLinks) {
  // Without direct links every gain scales with lambda at fixed f and phases.
  Instance in = make_instance(7, LinkModel{true, 0.0});
  for (auto& l : in.problem.links) l.h0.setZero();
  Rng r(2);
  AstarsState passive = in.stars;
  passive.lambda_amp = 1.0;
  const ScaResult p = optimize(in.problem, passive, in.f, quick_settings(), r);
  AstarsState active = p.stars;
  active.lambda_amp = in.stars.lambda_amp;
  EXPECT_NEAR(eval(in, p.f, active), in.stars.lambda_amp * p.obj, 1e-9 * std::abs(p.obj));
  EXPECT_LT(eval(in, p.f, active), p.obj);
}

TEST(Optimize, Deterministic) {
  const Instance in = make_instance(8);
  ScaSettings s = quick_settings();
  s.restarts = 3;
  Rng a(9), b(9);
  const ScaResult x = optimize(in.problem, in.stars, in.f, s, a);
  const ScaResult y = optimize(in.problem, in.stars, in.f, s, b);
  EXPECT_EQ(x.obj, y.obj);
  EXPECT_EQ(x.f, y.f);
  EXPECT_EQ(x.stars.theta_m, y.stars.theta_m);
}

TEST(Optimize, RejectsBadSettings) {
  const Instance in = make_instance(9);
  Rng r(1);
  ScaSettings s = quick_settings();
  s.varpi = 0.0;
  EXPECT_THROW(optimize(in.problem, in.stars, in.f, s, r), Error);
  EXPECT_THROW(optimize(in.problem, in.stars, 2.0 * in.f, quick_settings(), r), Error);
}

TEST(Optimize, ActiveNoWorseThanPassiveOnSameDraw) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Instance in = make_instance(200 + seed);
    AstarsState passive = in.stars;
    passive.lambda_amp = 1.0;
    Rng a(seed), b(seed);
    const ScaResult act = optimize(in.problem, in.stars, in.f, quick_settings(), a);
    const ScaResult pas = optimize(in.problem, passive, in.f, quick_settings(), b);
    EXPECT_LE(act.obj, pas.obj) << "seed " << seed;
  }
}
