#pragma once

#include <functional>
#include <string>
#include <vector>

#include "otafl/channel.hpp"
#include "otafl/rng.hpp"
#include "otafl/scenario.hpp"
#include "otafl/types.hpp"

namespace otafl {

// max over users of -gain_phi / K_phi^2, ties to the lowest index.
double objective(const CVec& f, const EffectiveChannels& eff, const std::vector<int>& K, int n_reflection,
                 GainConvention conv);

// Per-user links in the form h_u = h0_u + A_u v, where v is the diagonal of
// Theta for the user's side and A_u = H_sr diag(h_r,u).
struct UserLink {
  CVec h0;
  CMat A;  // J x Q, zero when the cascade is off
  bool reflection = true;
};

struct ScaProblem {
  std::vector<UserLink> links;
  std::vector<int> K;
  int n_reflection = 0;
  GainConvention conv = GainConvention::kPerUser;

  int users() const { return int(links.size()); }
  int J() const { return int(links.front().h0.size()); }
};

ScaProblem make_problem(const ChannelRealization& real, const LinkModel& link, const std::vector<int>& K,
                        GainConvention conv);

EffectiveChannels effective_channels(const ScaProblem& p, const CVec& v_n, const CVec& v_m);

// Proximal-linear surrogate per user: for unit f and constant-modulus v,
//   S_phi = a - 2Re{b^H f} - 2Re{c^H v_n} - 2Re{d^H v_m},
// tangent to -gain_phi at the expansion point.
struct SurrogateCoeffs {
  Vec a;
  std::vector<CVec> b;  // J
  std::vector<CVec> c;  // Q, reflection side
  std::vector<CVec> d;  // Q, transmission side
};

SurrogateCoeffs surrogate_coeffs(const ScaProblem& p, const CVec& f, const AstarsState& stars, double varpi);
// Per-user proximal weights.
SurrogateCoeffs surrogate_coeffs(const ScaProblem& p, const CVec& f, const AstarsState& stars, const Vec& varpi);

// max_phi S_phi(f, v) / K_phi^2.
double surrogate_value(const SurrogateCoeffs& co, const CVec& f, const AstarsState& stars,
                       const std::vector<int>& K);

// Unit vector along sum zeta b; keeps f_prev when the aggregate vanishes.
CVec update_f(const Vec& zeta, const std::vector<CVec>& b, const CVec& f_prev, bool* degenerate = nullptr);

// Phases arg(sum zeta c), elementwise; zero elements keep their old phase.
Vec update_theta(const Vec& zeta, const std::vector<CVec>& c, const Vec& prev_phases);

// 2||sum zeta b|| + 2 amp_n ||sum zeta c||_1 + 2 amp_m ||sum zeta d||_1 - sum zeta a.
double dual_objective(const Vec& zeta, const SurrogateCoeffs& co, double amp_n, double amp_m);

// Euclidean projection onto {x >= 0, sum x = 1}.
Vec project_simplex(const Vec& v);

struct ZetaOptions {
  int iters = 2000;
  double alpha0 = 0.5;
  Vec start;  // optional starting xi on the unit simplex; uniform when empty
};

// Projected subgradient over xi = K^2 zeta on the unit simplex, steps
// alpha0/sqrt(k+1) along the normalized subgradient; returns the best iterate.
Vec solve_zeta(const SurrogateCoeffs& co, const std::vector<int>& K, double amp_n, double amp_m,
               const ZetaOptions& opt = {});

enum class StepKind { kNone, kConstant, kDiminishing };

StepKind parse_step_kind(const std::string& s);

// kConstant: alpha0 each step. kDiminishing: alpha0/(k+1). kNone: all ones.
std::vector<double> step_size_schedule(StepKind kind, double alpha0, int n);

// Throws when a schedule cannot satisfy sum alpha = inf, sum alpha^2 < inf.
void require_theorem3_schedule(StepKind kind);

struct ScaSettings {
  int imax = 50;
  double xi = 1e-4;
  double varpi = 1e-2;
  int restarts = 4;
  ZetaOptions zeta;
  StepKind step = StepKind::kNone;
  double step_alpha0 = 1.0;
  // Proximal weight control: after a step that raises the objective, varpi
  // grows 4x and the update is recomputed; accepted steps halve it again,
  // never below `varpi`.
  bool adaptive_varpi = true;
  int max_retries = 30;
  // Restart 0 starts from the given state; later restarts draw random phases
  // and a random f.
  bool optimize_theta = true;

  static ScaSettings from(const ScaOptions& o);
};

struct ScaIterate {
  int restart = 0;
  int iter = 0;
  double obj = 0.0;         // original units
  double rel_change = 0.0;  // |obj_{i+1} - obj_i| / |obj_{i+1}|
  CVec f;
  Vec theta_n;
  Vec theta_m;
};

struct ScaResult {
  CVec f;
  AstarsState stars;
  Vec zeta;
  double obj = 0.0;          // best over restarts and iterates
  double obj_initial = 0.0;  // restart 0, before the first update
  double obj_last = 0.0;     // restart 0, last iterate
  int iterations = 0;        // restart 0
  std::vector<ScaIterate> trace;
};

// Outer SCA loop. Channels are rescaled internally so the weakest initial
// gain is 1 and K has unit mean; reported objectives are in original units.
// The closed-form point can raise the objective (the unit-norm and
// constant-modulus sets are not convex), hence the adaptive varpi.
ScaResult optimize(const ScaProblem& problem, const AstarsState& init_stars, const CVec& init_f,
                   const ScaSettings& settings, Rng& rng,
                   const std::function<void(const ScaIterate&)>& on_iterate = {});

// Unit f along the strongest eigenvector of sum_u h_u h_u^H / K_u^2, a cheap
// starting point.
CVec initial_beamformer(const EffectiveChannels& eff, const std::vector<int>& K);

}  // namespace otafl
