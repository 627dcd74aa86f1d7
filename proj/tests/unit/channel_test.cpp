#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "otafl/channel.hpp"

using namespace otafl;

namespace {

struct Instance {
  SystemConfig cfg;
  Geometry geo;
  ChannelRealization real;
  AstarsState stars;
};

Instance make_instance(std::uint64_t seed, std::map<std::string, std::string> pairs = {}) {
  Instance in;
  in.cfg = config_from_pairs(pairs);
  Rng r(seed);
  in.geo = place_users(in.cfg, r);
  in.real = sample_channels(in.cfg, in.geo, r);
  in.stars = AstarsState::random(in.cfg, r);
  return in;
}

// Naive loops, no Eigen products.
CVec dense_effective(const ChannelRealization& real, const AstarsState& s, int u) {
  const bool refl = real.is_reflection(u);
  const CVec theta = refl ? s.diag_n() : s.diag_m();
  CVec h(real.J());
  for (int j = 0; j < real.J(); ++j) {
    cdouble acc = refl ? real.h_sn[u](j) : cdouble(0.0);
    for (int q = 0; q < real.Q(); ++q) acc += real.H_sr(j, q) * theta(q) * real.h_r[u](q);
    h(j) = acc;
  }
  return h;
}

}  // namespace

TEST(Channel, PathAmplitudeHandValue) {
  SystemConfig c = default_config();
  EXPECT_NEAR(path_amplitude(c, 50.0), std::sqrt(4e-7), 1e-15);
  EXPECT_NEAR(path_amplitude(c, 50.0), 6.325e-4, 1e-7);
}

TEST(Channel, PureLineOfSightLimit) {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const cdouble e = rician_entry(1e12, r);
    EXPECT_NEAR(e.real(), 1.0, 1e-5);
    EXPECT_NEAR(e.imag(), 0.0, 1e-5);
  }
}

TEST(Channel, RicianMomentsMatchWithinThreeSigma) {
  const double kappa = std::pow(10.0, -0.5);
  Rng r(2);
  const int n = 100000;
  cdouble sum = 0.0;
  double sq = 0.0;
  std::vector<cdouble> xs(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = rician_entry(kappa, r);
    sum += xs[i];
  }
  const cdouble mean = sum / double(n);
  for (const auto& x : xs) sq += std::norm(x - mean);
  const double var = sq / (n - 1);
  const double los = std::sqrt(kappa / (kappa + 1.0));
  const double se = std::sqrt(1.0 / (kappa + 1.0) / 2.0 / n);
  EXPECT_LT(std::abs(mean.real() - los), 3.0 * se);
  EXPECT_LT(std::abs(mean.imag()), 3.0 * se);
  EXPECT_NEAR(var, 1.0 / (kappa + 1.0), 0.02);
}

TEST(Channel, ShapesAndDeterminism) {
  const Instance a = make_instance(9), b = make_instance(9);
  EXPECT_EQ(a.real.J(), 5);
  EXPECT_EQ(a.real.Q(), 30);
  EXPECT_EQ(a.real.N(), 40);
  EXPECT_EQ(a.real.users(), 80);
  EXPECT_EQ(a.real.h_direct_tx.size(), 40u);
  EXPECT_EQ(a.real.H_sr, b.real.H_sr);
  for (int u = 0; u < 80; ++u) EXPECT_EQ(a.real.h_r[u], b.real.h_r[u]);
}

TEST(Theta, ReferenceModulus) {
  const CVec d = build_theta(Vec::Zero(30), 5.0, 0.7);
  for (int q = 0; q < 30; ++q) EXPECT_NEAR(std::abs(d(q) - cdouble(std::sqrt(3.5), 0.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::sqrt(3.5), 1.8708, 1e-4);
}

TEST(Theta, PassiveLosslessIsIdentity) {
  const CVec d = build_theta(Vec::Zero(4), 1.0, 1.0);
  EXPECT_TRUE(d.isApprox(CVec::Ones(4)));
}

TEST(Theta, PhaseFlip) {
  const CVec d = build_theta(Vec::Constant(3, std::numbers::pi), 5.0, 0.3);
  for (int q = 0; q < 3; ++q) {
    EXPECT_NEAR(d(q).real(), -std::sqrt(1.5), 1e-12);
    EXPECT_NEAR(d(q).imag(), 0.0, 1e-12);
  }
}

TEST(Theta, ExactModulusAndWrappedPhases) {
  const SystemConfig c = default_config();
  Rng r(3);
  Vec n(30), m(30);
  for (int q = 0; q < 30; ++q) n(q) = uniform(r, -50.0, 50.0), m(q) = uniform(r, -50.0, 50.0);
  const AstarsState s = AstarsState::from_config(c, n, m);
  for (int q = 0; q < 30; ++q) {
    EXPECT_GE(s.theta_n(q), 0.0);
    EXPECT_LT(s.theta_n(q), 2.0 * std::numbers::pi);
    EXPECT_NEAR(std::abs(s.diag_n()(q)), std::sqrt(3.5), 1e-15);
    EXPECT_NEAR(std::abs(s.diag_m()(q)), std::sqrt(1.5), 1e-15);
  }
  Vec bad = Vec::Zero(2);
  bad(1) = std::nan("");
  EXPECT_THROW(build_theta(bad, 1.0, 1.0), Error);
}

TEST(EffectiveChannel, SurfaceOffLeavesDirectLink) {
  Instance in = make_instance(4);
  in.stars.lambda_amp = 0.0;
  for (int u = 0; u < in.real.N(); ++u) EXPECT_EQ(effective_channel(in.real, in.stars, u), in.real.h_sn[u]);
}

TEST(EffectiveChannel, TransmissionUserWithoutCascadeIsZero) {
  Instance in = make_instance(5);
  in.real.H_sr.setZero();
  for (int u = in.real.N(); u < in.real.users(); ++u)
    EXPECT_EQ(effective_channel(in.real, in.stars, u).norm(), 0.0);
}

TEST(EffectiveChannel, MatchesDenseLoopOracle) {
  const Instance in = make_instance(6);
  const EffectiveChannels all = effective_channels(in.real, in.stars);
  for (int u = 0; u < in.real.users(); ++u) {
    const CVec oracle = dense_effective(in.real, in.stars, u);
    EXPECT_LE((all.h[u] - oracle).norm(), 1e-12 * oracle.norm());
    EXPECT_LE((effective_channel(in.real, in.stars, u) - oracle).norm(), 1e-12 * oracle.norm());
  }
}

TEST(EffectiveChannel, GaugeRotationInvariance) {
  Instance in = make_instance(7);
  const int u = in.real.N() + 2;
  const double before = effective_channel(in.real, in.stars, u).norm();
  const double psi = 1.234;
  in.stars.set_phases(in.stars.theta_n, (in.stars.theta_m.array() + psi).matrix());
  in.real.h_r[u] *= std::polar(1.0, -psi);
  EXPECT_NEAR(effective_channel(in.real, in.stars, u).norm(), before, 1e-12 * before);
}

TEST(EffectiveChannel, AmplificationScalesCascadeBySqrt) {
  Instance in = make_instance(8);
  const int u = 3;
  AstarsState s = in.stars;
  const CVec base = effective_channel(in.real, s, u);
  const CVec direct = in.real.h_sn[u];
  s.lambda_amp *= 4.0;
  const CVec scaled = effective_channel(in.real, s, u);
  EXPECT_LE(((scaled - direct) - 2.0 * (base - direct)).norm(), 1e-12 * (base - direct).norm());
}

TEST(EffectiveChannel, LinkModelSwitches) {
  const Instance in = make_instance(10);
  LinkModel nocascade{false, 0.01};
  const EffectiveChannels e = effective_channels(in.real, in.stars, nocascade);
  for (int u = 0; u < in.real.N(); ++u) EXPECT_EQ(e.h[u], in.real.h_sn[u]);
  for (int u = in.real.N(); u < in.real.users(); ++u)
    EXPECT_TRUE(e.h[u].isApprox(0.1 * in.real.h_direct_tx[u - in.real.N()]));
  EXPECT_THROW(effective_channel(in.real, in.stars, 80), Error);
}

TEST(ChannelCsv, RowCount) {
  const Instance in = make_instance(12, {{"N", "2"}, {"M", "1"}, {"Q", "3"}, {"J", "2"}});
  std::ostringstream os;
  write_channel_csv(os, in.real);
  const std::string s = os.str();
  const long lines = std::count(s.begin(), s.end(), '\n');
  // header + H_sr + direct links + surface links
  EXPECT_EQ(lines, 1 + 2 * 3 + 3 * 2 + 3 * 3);
  EXPECT_EQ(s.rfind("link,user,row,col,re,im", 0), 0u);
}
