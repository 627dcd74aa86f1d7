#include "otafl/ota.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace otafl {

NormalizedGradient normalize_gradient(const Vec& g, bool allow_degenerate) {
  if (g.size() < 2) throw Error("ota: gradient dimension must be at least 2");
  NormalizedGradient out;
  out.g_bar = g.mean();
  const double var = (g.array() - out.g_bar).square().mean();
  if (!(var > 0.0)) {
    if (!allow_degenerate) throw Error("ota: degenerate gradient (zero variance)");
    out.x = Vec::Zero(g.size());
    out.nu = kDegenerateNu;
    return out;
  }
  out.nu = std::sqrt(var);
  out.x = (g.array() - out.g_bar) / out.nu;
  return out;
}

Vec user_gains(const CVec& f, const EffectiveChannels& eff) {
  Vec g(eff.users());
  for (int u = 0; u < eff.users(); ++u) g(u) = std::norm(f.dot(eff.h[u]));
  return g;
}

std::vector<std::vector<int>> term_groups(int users, int n_reflection, GainConvention conv) {
  std::vector<std::vector<int>> groups(users);
  const int m_count = users - n_reflection;
  for (int u = 0; u < users; ++u) {
    groups[u].push_back(u);
    if (conv != GainConvention::kPaired) continue;
    if (u < n_reflection && u < m_count) groups[u].push_back(n_reflection + u);
    if (u >= n_reflection && u - n_reflection < n_reflection) groups[u].insert(groups[u].begin(), u - n_reflection);
  }
  return groups;
}

Vec term_gains(const CVec& f, const EffectiveChannels& eff, int n_reflection, GainConvention conv) {
  const Vec g = user_gains(f, eff);
  const auto groups = term_groups(eff.users(), n_reflection, conv);
  Vec out(eff.users());
  for (int u = 0; u < eff.users(); ++u) {
    double s = 0.0;
    for (int v : groups[u]) s += g(v);
    out(u) = s;
  }
  return out;
}

namespace {
void check_sizes(const EffectiveChannels& eff, const std::vector<int>& K, const std::vector<double>& nu) {
  if (int(K.size()) != eff.users() || int(nu.size()) != eff.users())
    throw Error("ota: K/nu length does not match user count");
}
}  // namespace

double compute_mu(const CVec& f, const EffectiveChannels& eff, double p_max, const std::vector<int>& K,
                  const std::vector<double>& nu, int n_reflection, GainConvention conv) {
  check_sizes(eff, K, nu);
  const Vec gain = term_gains(f, eff, n_reflection, conv);
  double mu = std::numeric_limits<double>::infinity();
  for (int u = 0; u < eff.users(); ++u) {
    if (!(gain(u) > 0.0)) throw Error("ota: unreachable user " + std::to_string(u) + " (zero channel gain)");
    if (!(nu[u] > 0.0)) throw Error("ota: user " + std::to_string(u) + " reports nu <= 0");
    const double k = K[u];
    mu = std::min(mu, p_max * gain(u) / (k * k * nu[u] * nu[u]));
  }
  return mu;
}

PowerAllocation allocate_power(const CVec& f, const EffectiveChannels& eff, double p_max,
                               const std::vector<int>& K, const std::vector<double>& nu, int n_reflection,
                               GainConvention conv) {
  PowerAllocation p;
  p.mu = compute_mu(f, eff, p_max, K, nu, n_reflection, conv);
  const Vec gain = term_gains(f, eff, n_reflection, conv);
  p.b.resize(eff.users());
  const double sm = std::sqrt(p.mu);
  for (int u = 0; u < eff.users(); ++u) {
    const cdouble z = f.dot(eff.h[u]);
    const double amp = sm * K[u] * nu[u];
    if (conv == GainConvention::kPerUser) {
      p.b(u) = amp / z;
    } else {
      const double az = std::abs(z);
      const cdouble phase = az > 0.0 ? std::conj(z) / az : cdouble(1.0, 0.0);
      p.b(u) = amp / std::sqrt(gain(u)) * phase;
    }
  }
  return p;
}

CVec transmit_round(const std::vector<NormalizedGradient>& xs, const PowerAllocation& power,
                    const ChannelRealization& real, const AstarsState& stars, const LinkModel& link,
                    const CVec& f, const EffectiveChannels& eff, const NoiseParams& noise, Rng& rng) {
  if (xs.empty()) throw Error("ota: no users");
  const Eigen::Index D = xs.front().x.size();
  CVec coef(eff.users());
  for (int u = 0; u < eff.users(); ++u) coef(u) = f.dot(eff.h[u]) * power.b(u);

  CVec y = CVec::Zero(D);
  for (int u = 0; u < eff.users(); ++u) y += coef(u) * xs[u].x.cast<cdouble>();

  const bool stars_noise = link.cascaded && noise.sigma_s2 > 0.0;
  // f^H H_sr Theta n_s = a^H n_s with a = Theta^H H_sr^H f.
  CVec a_n, a_m;
  if (stars_noise) {
    const CVec hf = real.H_sr.adjoint() * f;
    a_n = stars.diag_n().conjugate().cwiseProduct(hf);
    a_m = stars.diag_m().conjugate().cwiseProduct(hf);
  }
  const Eigen::Index Q = stars_noise ? a_n.size() : 0;
  for (Eigen::Index d = 0; d < D; ++d) {
    cdouble s = 0.0;
    for (Eigen::Index q = 0; q < Q; ++q) s += std::conj(a_n(q)) * complex_normal(rng, noise.sigma_s2);
    for (Eigen::Index q = 0; q < Q; ++q) s += std::conj(a_m(q)) * complex_normal(rng, noise.sigma_s2);
    if (noise.sigma_02 > 0.0) s += complex_normal(rng, noise.sigma_02);
    y(d) += s;
  }
  return y;
}

Vec estimate(const CVec& y, double mu, double sum_k_gbar) {
  if (!(mu > 0.0)) throw Error("ota: mu must be positive");
  return (y.real().array() / std::sqrt(mu) + sum_k_gbar).matrix();
}

OtaRoundResult ota_round(const std::vector<Vec>& grads, const std::vector<int>& K, const OtaContext& ctx,
                         Rng& rng) {
  const int phi = int(grads.size());
  if (phi != ctx.eff.users() || int(K.size()) != phi) throw Error("ota: gradient count does not match user count");
  OtaRoundResult r;
  r.r_true = Vec::Zero(grads.front().size());
  for (int u = 0; u < phi; ++u) r.r_true += double(K[u]) * grads[u];
  if (ctx.ideal) {
    r.r_hat = r.r_true;
    r.y = CVec::Zero(r.r_true.size());
    r.mu = 1.0;
    r.nu.assign(phi, 0.0);
    return r;
  }
  std::vector<NormalizedGradient> xs;
  xs.reserve(phi);
  double sum_k_gbar = 0.0;
  for (int u = 0; u < phi; ++u) {
    xs.push_back(normalize_gradient(grads[u], true));
    r.nu.push_back(xs.back().nu);
    sum_k_gbar += K[u] * xs.back().g_bar;
  }
  const int n_refl = ctx.real->N();
  const PowerAllocation p = allocate_power(ctx.f, ctx.eff, ctx.p_max, K, r.nu, n_refl, ctx.conv);
  r.mu = p.mu;
  r.y = transmit_round(xs, p, *ctx.real, *ctx.stars, ctx.link, ctx.f, ctx.eff, ctx.noise, rng);
  r.r_hat = estimate(r.y, p.mu, sum_k_gbar);
  return r;
}

void decompose_error(OtaRoundResult& round, const Vec& grad_true, const std::vector<int>& K) {
  const double sk = std::accumulate(K.begin(), K.end(), 0.0);
  round.e1 = grad_true - round.r_true / sk;
  round.e2 = (round.r_true - round.r_hat) / sk;
  round.e2_norm2 = round.e2.squaredNorm();
}

double tau(const SystemConfig& cfg, const AstarsState& stars, const Geometry& geometry) {
  const double k = cfg.kappa;
  return stars.lambda_amp * (stars.beta_t + stars.beta_r) * cfg.eta0 * std::pow(geometry.d_sr(), -cfg.alpha) *
         cfg.J * cfg.Q * (cfg.Q * k + 1.0) / (k + 1.0);
}

double closed_form_e2(const SystemConfig& cfg, const Geometry& geometry, const AstarsState& stars,
                      const CVec& f, const EffectiveChannels& eff, const std::vector<int>& K,
                      const std::vector<double>& nu) {
  check_sizes(eff, K, nu);
  const Vec gain = term_gains(f, eff, cfg.N, cfg.gain_convention);
  double worst = 0.0;
  for (int u = 0; u < eff.users(); ++u) {
    if (!(gain(u) > 0.0)) throw Error("ota: unreachable user " + std::to_string(u) + " (zero channel gain)");
    const double k = K[u];
    worst = std::max(worst, k * k * nu[u] * nu[u] / gain(u));
  }
  const double sk = std::accumulate(K.begin(), K.end(), 0.0);
  const double noise = tau(cfg, stars, geometry) * cfg.sigma_s2 + cfg.sigma_02;
  return eff.users() * noise / (cfg.p_max * sk * sk) * worst;
}

double conditional_e2(const ChannelRealization& real, const AstarsState& stars, const LinkModel& link,
                      const CVec& f, const NoiseParams& noise, double mu, int D, double sum_k) {
  double amp_gain = 0.0;
  if (link.cascaded) {
    const CVec hf = real.H_sr.adjoint() * f;
    amp_gain = stars.diag_n().cwiseProduct(hf).squaredNorm() + stars.diag_m().cwiseProduct(hf).squaredNorm();
  }
  return D * (noise.sigma_s2 * amp_gain + noise.sigma_02) / (2.0 * mu * sum_k * sum_k);
}

}  // namespace otafl
