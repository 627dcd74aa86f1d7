#pragma once

#include <vector>

#include "otafl/channel.hpp"
#include "otafl/rng.hpp"
#include "otafl/scenario.hpp"
#include "otafl/types.hpp"

namespace otafl {

struct NormalizedGradient {
  Vec x;            // (g - g_bar) / nu
  double g_bar = 0.0;
  double nu = 0.0;  // empirical standard deviation
};

// Reported standard deviation of a converged (constant) gradient.
inline constexpr double kDegenerateNu = 1e-12;

// Throws "degenerate gradient" on zero variance unless allow_degenerate, in
// which case x = 0 and nu = kDegenerateNu.
NormalizedGradient normalize_gradient(const Vec& g, bool allow_degenerate = false);

// |f^H h_phi|^2 per user.
Vec user_gains(const CVec& f, const EffectiveChannels& eff);

// Gain entering the power rule and the worst-user max for each user. Per-user:
// its own gain. Paired: gain of (i-th reflection, i-th transmission) summed,
// unpaired users alone.
Vec term_gains(const CVec& f, const EffectiveChannels& eff, int n_reflection, GainConvention conv);

// For each user the set of users whose gains form its term.
std::vector<std::vector<int>> term_groups(int users, int n_reflection, GainConvention conv);

// mu = min_phi P * gain_phi / (K_phi^2 nu_phi^2).
double compute_mu(const CVec& f, const EffectiveChannels& eff, double p_max, const std::vector<int>& K,
                  const std::vector<double>& nu, int n_reflection, GainConvention conv);

struct PowerAllocation {
  CVec b;  // complex transmit coefficient per user; |b|^2 is the power
  double mu = 0.0;
};

// Per-user: b = sqrt(mu) K nu / (f^H h), exact channel inversion.
// Paired: |b|^2 = K^2 mu nu^2 / pair_gain with the phase of (f^H h)^*.
PowerAllocation allocate_power(const CVec& f, const EffectiveChannels& eff, double p_max,
                               const std::vector<int>& K, const std::vector<double>& nu, int n_reflection,
                               GainConvention conv);

struct NoiseParams {
  double sigma_s2 = 0.0;
  double sigma_02 = 0.0;
};

// One complex sample per gradient dimension. Amplifier noise is drawn per
// side and per element, fresh for each dimension.
CVec transmit_round(const std::vector<NormalizedGradient>& xs, const PowerAllocation& power,
                    const ChannelRealization& real, const AstarsState& stars, const LinkModel& link,
                    const CVec& f, const EffectiveChannels& eff, const NoiseParams& noise, Rng& rng);

// r_hat = Re(y)/sqrt(mu) + sum_phi K_phi g_bar_phi.
Vec estimate(const CVec& y, double mu, double sum_k_gbar);

struct OtaRoundResult {
  CVec y;
  Vec r_hat;
  Vec r_true;
  Vec e1;
  Vec e2;
  double e2_norm2 = 0.0;
  double mu = 0.0;
  std::vector<double> nu;
};

struct OtaContext {
  const ChannelRealization* real = nullptr;
  const AstarsState* stars = nullptr;
  LinkModel link;
  CVec f;
  EffectiveChannels eff;
  NoiseParams noise;
  double p_max = 0.1;
  GainConvention conv = GainConvention::kPerUser;
  bool ideal = false;  // error-free aggregation, r_hat = r
};

// Normalize, allocate power, transmit, estimate. grads[phi] is the local
// gradient of user phi; e1/e2 are left empty (see decompose_error).
OtaRoundResult ota_round(const std::vector<Vec>& grads, const std::vector<int>& K, const OtaContext& ctx,
                         Rng& rng);

// e1 = grad_true - r/sumK, e2 = (r - r_hat)/sumK.
void decompose_error(OtaRoundResult& round, const Vec& grad_true, const std::vector<int>& K);

// lambda (beta_t + beta_r) eta0 d_sr^-alpha J Q (Q kappa + 1)/(kappa + 1).
double tau(const SystemConfig& cfg, const AstarsState& stars, const Geometry& geometry);

// Phi (tau sigma_s^2 + sigma_0^2) / (P (sum K)^2) * max K^2 nu^2 / gain.
double closed_form_e2(const SystemConfig& cfg, const Geometry& geometry, const AstarsState& stars,
                      const CVec& f, const EffectiveChannels& eff, const std::vector<int>& K,
                      const std::vector<double>& nu);

// Exact E||e2||^2 of the simulated chain for fixed (f, Theta, channels, mu):
// D (sigma_s^2 (||Theta_n^H H^H f||^2 + ||Theta_m^H H^H f||^2) + sigma_0^2) / (2 mu (sum K)^2).
double conditional_e2(const ChannelRealization& real, const AstarsState& stars, const LinkModel& link,
                      const CVec& f, const NoiseParams& noise, double mu, int D, double sum_k);

}  // namespace otafl
