#include "otafl/channel.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

namespace otafl {

double path_amplitude(const SystemConfig& cfg, double distance) {
  return std::sqrt(cfg.eta0 * std::pow(distance, -cfg.alpha));
}

cdouble rician_entry(double kappa, Rng& rng) {
  const double los = std::sqrt(kappa / (kappa + 1.0));
  const double nlos = std::sqrt(1.0 / (kappa + 1.0));
  return los + nlos * complex_normal(rng, 1.0);
}

namespace {
CVec rician_vector(int n, double kappa, double scale, Rng& rng) {
  CVec v(n);
  for (int i = 0; i < n; ++i) v(i) = scale * rician_entry(kappa, rng);
  return v;
}
}  // namespace

ChannelRealization sample_channels(const SystemConfig& cfg, const Geometry& geometry, Rng& rng) {
  const int phi = int(geometry.user_pos.size());
  const double d_sr = geometry.d_sr();
  if (!(d_sr > 0.0)) throw Error("channel: BS and surface coincide");

  ChannelRealization r;
  const double a_sr = path_amplitude(cfg, d_sr);
  r.H_sr.resize(cfg.J, cfg.Q);
  for (int j = 0; j < cfg.J; ++j)
    for (int q = 0; q < cfg.Q; ++q) r.H_sr(j, q) = a_sr * rician_entry(cfg.kappa, rng);

  r.h_r.reserve(phi);
  for (int u = 0; u < phi; ++u) {
    const double d = geometry.d_r(u);
    if (!(d > 0.0)) throw Error("channel: user " + std::to_string(u) + " sits on the surface");
    r.h_r.push_back(rician_vector(cfg.Q, cfg.kappa, path_amplitude(cfg, d), rng));
  }
  for (int u = 0; u < phi; ++u) {
    const double d = geometry.d_direct(u);
    CVec h = rician_vector(cfg.J, cfg.kappa, path_amplitude(cfg, d), rng);
    if (geometry.region[u] == Region::kReflection) r.h_sn.push_back(std::move(h));
    else r.h_direct_tx.push_back(std::move(h));
  }
  return r;
}

double wrap_phase(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double t = std::fmod(theta, two_pi);
  if (t < 0.0) t += two_pi;
  if (t >= two_pi) t = 0.0;
  return t;
}

CVec build_theta(const Vec& phases, double amp, double beta) {
  const double mod = std::sqrt(amp * beta);
  CVec d(phases.size());
  for (Eigen::Index q = 0; q < phases.size(); ++q) {
    if (!std::isfinite(phases(q))) throw Error("channel: non-finite phase at element " + std::to_string(q));
    d(q) = std::polar(mod, phases(q));
  }
  return d;
}

AstarsState AstarsState::from_config(const SystemConfig& cfg, Vec theta_n, Vec theta_m) {
  AstarsState s;
  s.lambda_amp = cfg.lambda_amp;
  s.beta_r = cfg.beta_r;
  s.beta_t = cfg.beta_t;
  s.set_phases(theta_n, theta_m);
  return s;
}

AstarsState AstarsState::random(const SystemConfig& cfg, Rng& rng) {
  Vec n(cfg.Q), m(cfg.Q);
  for (int q = 0; q < cfg.Q; ++q) n(q) = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  for (int q = 0; q < cfg.Q; ++q) m(q) = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return from_config(cfg, n, m);
}

double AstarsState::amp_n() const { return std::sqrt(lambda_amp * beta_r); }
double AstarsState::amp_m() const { return std::sqrt(lambda_amp * beta_t); }

void AstarsState::set_phases(const Vec& n, const Vec& m) {
  theta_n = n.unaryExpr([](double t) { return wrap_phase(t); });
  theta_m = m.unaryExpr([](double t) { return wrap_phase(t); });
}

CVec effective_channel(const ChannelRealization& real, const AstarsState& stars, int user,
                       const LinkModel& link) {
  if (user < 0 || user >= real.users()) throw Error("channel: user index " + std::to_string(user) + " out of range");
  const bool refl = real.is_reflection(user);
  CVec h = CVec::Zero(real.J());
  if (refl) h = real.h_sn[user];
  else if (link.direct_tx_gain > 0.0) h = std::sqrt(link.direct_tx_gain) * real.h_direct_tx[user - real.N()];
  if (link.cascaded) {
    const CVec theta = refl ? stars.diag_n() : stars.diag_m();
    h += real.H_sr * theta.cwiseProduct(real.h_r[user]);
  }
  return h;
}

EffectiveChannels effective_channels(const ChannelRealization& real, const AstarsState& stars,
                                     const LinkModel& link) {
  EffectiveChannels e;
  e.h.reserve(real.users());
  const CVec tn = stars.diag_n();
  const CVec tm = stars.diag_m();
  for (int u = 0; u < real.users(); ++u) {
    const bool refl = real.is_reflection(u);
    CVec h = CVec::Zero(real.J());
    if (refl) h = real.h_sn[u];
    else if (link.direct_tx_gain > 0.0) h = std::sqrt(link.direct_tx_gain) * real.h_direct_tx[u - real.N()];
    if (link.cascaded) h += real.H_sr * (refl ? tn : tm).cwiseProduct(real.h_r[u]);
    e.h.push_back(std::move(h));
  }
  return e;
}

void write_channel_csv(std::ostream& os, const ChannelRealization& real) {
  os << "link,user,row,col,re,im\n";
  os << std::setprecision(17);
  for (int j = 0; j < real.J(); ++j)
    for (int q = 0; q < real.Q(); ++q)
      os << "H_sr,-1," << j << "," << q << "," << real.H_sr(j, q).real() << "," << real.H_sr(j, q).imag() << "\n";
  for (int n = 0; n < real.N(); ++n)
    for (int j = 0; j < real.J(); ++j)
      os << "h_sn," << n << "," << j << ",0," << real.h_sn[n](j).real() << "," << real.h_sn[n](j).imag() << "\n";
  for (std::size_t m = 0; m < real.h_direct_tx.size(); ++m)
    for (int j = 0; j < real.J(); ++j)
      os << "h_direct_tx," << real.N() + int(m) << "," << j << ",0," << real.h_direct_tx[m](j).real() << ","
         << real.h_direct_tx[m](j).imag() << "\n";
  for (int u = 0; u < real.users(); ++u)
    for (int q = 0; q < real.Q(); ++q)
      os << "h_r," << u << "," << q << ",0," << real.h_r[u](q).real() << "," << real.h_r[u](q).imag() << "\n";
}

}  // namespace otafl
