#pragma once

#include <iosfwd>
#include <vector>

#include "otafl/rng.hpp"
#include "otafl/scenario.hpp"
#include "otafl/types.hpp"

namespace otafl {

// One draw of every complex link, path loss included. Users are indexed as in
// Geometry: reflection users [0, N), transmission users [N, N+M).
struct ChannelRealization {
  CMat H_sr;                   // J x Q, acts uplink as f^H H_sr Theta h_r
  std::vector<CVec> h_sn;      // N direct links (J) of reflection users
  std::vector<CVec> h_direct_tx;  // M direct links of transmission users, before penetration loss
  std::vector<CVec> h_r;       // N+M surface-to-user links (Q)

  int J() const { return int(H_sr.rows()); }
  int Q() const { return int(H_sr.cols()); }
  int N() const { return int(h_sn.size()); }
  int users() const { return int(h_r.size()); }
  bool is_reflection(int user) const { return user < N(); }
};

// sqrt(eta0 * d^-alpha).
double path_amplitude(const SystemConfig& cfg, double distance);

// Small-scale Rician entry sqrt(k/(k+1)) + sqrt(1/(k+1)) CN(0,1).
cdouble rician_entry(double kappa, Rng& rng);

ChannelRealization sample_channels(const SystemConfig& cfg, const Geometry& geometry, Rng& rng);

// Diagonal entries sqrt(amp * beta) * exp(j theta_q).
CVec build_theta(const Vec& phases, double amp, double beta);

double wrap_phase(double theta);

struct AstarsState {
  Vec theta_n;  // reflection phases, [0, 2pi)
  Vec theta_m;  // transmission phases
  double lambda_amp = 1.0;
  double beta_r = 0.5;
  double beta_t = 0.5;

  static AstarsState from_config(const SystemConfig& cfg, Vec theta_n, Vec theta_m);
  static AstarsState random(const SystemConfig& cfg, Rng& rng);

  double amp_n() const;
  double amp_m() const;
  CVec diag_n() const { return build_theta(theta_n, lambda_amp, beta_r); }
  CVec diag_m() const { return build_theta(theta_m, lambda_amp, beta_t); }
  void set_phases(const Vec& n, const Vec& m);
};

// Which physical paths reach the BS. The default is the surface-assisted
// uplink; baselines switch the cascade off or give transmission users an
// attenuated direct path.
struct LinkModel {
  bool cascaded = true;
  double direct_tx_gain = 0.0;  // power factor on h_direct_tx; 0 blocks it
};

struct EffectiveChannels {
  std::vector<CVec> h;  // per user, length J
  int users() const { return int(h.size()); }
};

CVec effective_channel(const ChannelRealization& real, const AstarsState& stars, int user,
                       const LinkModel& link = {});
EffectiveChannels effective_channels(const ChannelRealization& real, const AstarsState& stars,
                                     const LinkModel& link = {});

// Writes `link,user,row,col,re,im` rows.
void write_channel_csv(std::ostream& os, const ChannelRealization& real);

}  // namespace otafl
