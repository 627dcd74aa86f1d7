#include "otafl/sca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "otafl/ota.hpp"

namespace otafl {

double objective(const CVec& f, const EffectiveChannels& eff, const std::vector<int>& K, int n_reflection,
                 GainConvention conv) {
  const Vec gain = term_gains(f, eff, n_reflection, conv);
  double best = -std::numeric_limits<double>::infinity();
  for (int u = 0; u < eff.users(); ++u) {
    const double k = K[u];
    best = std::max(best, -gain(u) / (k * k));
  }
  return best;
}

ScaProblem make_problem(const ChannelRealization& real, const LinkModel& link, const std::vector<int>& K,
                        GainConvention conv) {
  if (int(K.size()) != real.users()) throw Error("sca: K length does not match user count");
  ScaProblem p;
  p.K = K;
  p.n_reflection = real.N();
  p.conv = conv;
  for (int u = 0; u < real.users(); ++u) {
    UserLink l;
    l.reflection = real.is_reflection(u);
    if (l.reflection) l.h0 = real.h_sn[u];
    else if (link.direct_tx_gain > 0.0) l.h0 = std::sqrt(link.direct_tx_gain) * real.h_direct_tx[u - real.N()];
    else l.h0 = CVec::Zero(real.J());
    if (link.cascaded) l.A = real.H_sr * real.h_r[u].asDiagonal();
    else l.A = CMat::Zero(real.J(), real.Q());
    p.links.push_back(std::move(l));
  }
  return p;
}

EffectiveChannels effective_channels(const ScaProblem& p, const CVec& v_n, const CVec& v_m) {
  EffectiveChannels e;
  for (const auto& l : p.links) e.h.push_back(l.h0 + l.A * (l.reflection ? v_n : v_m));
  return e;
}

SurrogateCoeffs surrogate_coeffs(const ScaProblem& p, const CVec& f, const AstarsState& stars, double varpi) {
  return surrogate_coeffs(p, f, stars, Vec::Constant(p.users(), varpi));
}

SurrogateCoeffs surrogate_coeffs(const ScaProblem& p, const CVec& f, const AstarsState& stars, const Vec& varpi) {
  const CVec vn = stars.diag_n();
  const CVec vm = stars.diag_m();
  const int phi = p.users();
  // Per-user pieces, then summed over each user's term group.
  std::vector<cdouble> z(phi), casc(phi);
  std::vector<CVec> h(phi), w(phi);
  for (int u = 0; u < phi; ++u) {
    const auto& l = p.links[u];
    const CVec& v = l.reflection ? vn : vm;
    const CVec av = l.A * v;
    h[u] = l.h0 + av;
    z[u] = f.dot(h[u]);
    casc[u] = f.dot(av);
    w[u] = l.A.adjoint() * f;  // diag(h_r)^* H_sr^H f
  }
  const double prox = 2.0 * (1.0 + vn.squaredNorm() + vm.squaredNorm());
  const auto groups = term_groups(phi, p.n_reflection, p.conv);
  SurrogateCoeffs co;
  co.a.resize(phi);
  for (int u = 0; u < phi; ++u) {
    CVec b = varpi(u) * f;
    CVec c = varpi(u) * vn;
    CVec d = varpi(u) * vm;
    double a = varpi(u) * prox;
    for (int g : groups[u]) {
      b += h[g] * std::conj(z[g]);
      (p.links[g].reflection ? c : d) += z[g] * w[g];
      a += std::norm(z[g]) + 2.0 * std::real(std::conj(z[g]) * casc[g]);
    }
    co.a(u) = a;
    co.b.push_back(std::move(b));
    co.c.push_back(std::move(c));
    co.d.push_back(std::move(d));
  }
  return co;
}

double surrogate_value(const SurrogateCoeffs& co, const CVec& f, const AstarsState& stars,
                       const std::vector<int>& K) {
  const CVec vn = stars.diag_n();
  const CVec vm = stars.diag_m();
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index u = 0; u < co.a.size(); ++u) {
    const double s = co.a(u) - 2.0 * std::real(co.b[u].dot(f)) - 2.0 * std::real(co.c[u].dot(vn)) -
                     2.0 * std::real(co.d[u].dot(vm));
    const double k = K[u];
    best = std::max(best, s / (k * k));
  }
  return best;
}

CVec update_f(const Vec& zeta, const std::vector<CVec>& b, const CVec& f_prev, bool* degenerate) {
  CVec s = CVec::Zero(b.front().size());
  for (std::size_t u = 0; u < b.size(); ++u) s += zeta(Eigen::Index(u)) * b[u];
  const double n = s.norm();
  if (degenerate) *degenerate = !(n > 0.0);
  if (!(n > 0.0)) return f_prev;
  return s / n;
}

Vec update_theta(const Vec& zeta, const std::vector<CVec>& c, const Vec& prev_phases) {
  CVec s = CVec::Zero(c.front().size());
  for (std::size_t u = 0; u < c.size(); ++u) s += zeta(Eigen::Index(u)) * c[u];
  Vec out(s.size());
  for (Eigen::Index q = 0; q < s.size(); ++q)
    out(q) = std::abs(s(q)) > 0.0 ? wrap_phase(std::arg(s(q))) : prev_phases(q);
  return out;
}

namespace {
struct Aggregates {
  CVec B, C, D;
};

Aggregates aggregate(const Vec& zeta, const SurrogateCoeffs& co) {
  Aggregates g{CVec::Zero(co.b.front().size()), CVec::Zero(co.c.front().size()), CVec::Zero(co.d.front().size())};
  for (Eigen::Index u = 0; u < zeta.size(); ++u) {
    if (zeta(u) == 0.0) continue;
    g.B += zeta(u) * co.b[u];
    g.C += zeta(u) * co.c[u];
    g.D += zeta(u) * co.d[u];
  }
  return g;
}

double l1(const CVec& v) { return v.cwiseAbs().sum(); }
}  // namespace

double dual_objective(const Vec& zeta, const SurrogateCoeffs& co, double amp_n, double amp_m) {
  const Aggregates g = aggregate(zeta, co);
  return 2.0 * g.B.norm() + 2.0 * amp_n * l1(g.C) + 2.0 * amp_m * l1(g.D) - zeta.dot(co.a);
}

Vec project_simplex(const Vec& v) {
  const Eigen::Index n = v.size();
  std::vector<double> s(v.data(), v.data() + n);
  std::sort(s.begin(), s.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cum += s[i];
    const double t = (cum - 1.0) / double(i + 1);
    if (s[i] - t > 0.0) theta = t;
  }
  Vec x = (v.array() - theta).cwiseMax(0.0);
  // Remove rounding drift so the equality holds to machine precision.
  const double sum = x.sum();
  if (sum > 0.0) x /= sum;
  return x;
}

namespace {
// Descent direction -g projected onto {d : sum d = 0, d_u >= 0 where xi_u = 0}.
Vec tangent_direction(const Vec& xi, const Vec& g) {
  const Eigen::Index n = xi.size();
  std::vector<bool> free(n, true);
  Vec d(n);
  for (;;) {
    double sum = 0.0;
    int cnt = 0;
    for (Eigen::Index u = 0; u < n; ++u)
      if (free[u]) {
        sum += g(u);
        ++cnt;
      }
    if (cnt == 0) return Vec::Zero(n);
    const double m = sum / cnt;
    bool changed = false;
    for (Eigen::Index u = 0; u < n; ++u) {
      d(u) = free[u] ? -(g(u) - m) : 0.0;
      if (free[u] && xi(u) <= 0.0 && d(u) < 0.0) {
        free[u] = false;
        changed = true;
      }
    }
    if (!changed) return d;
  }
}
}  // namespace

Vec solve_zeta(const SurrogateCoeffs& co, const std::vector<int>& K, double amp_n, double amp_m,
               const ZetaOptions& opt) {
  const Eigen::Index phi = co.a.size();
  Vec k2(phi);
  for (Eigen::Index u = 0; u < phi; ++u) k2(u) = double(K[u]) * K[u];
  if (!co.a.allFinite()) throw Error("sca: non-finite surrogate coefficients");
  if (phi == 1) return Vec::Constant(1, 1.0 / k2(0));

  auto to_zeta = [&](const Vec& xi) { return Vec(xi.array() / k2.array()); };
  Vec xi = opt.start.size() == phi ? project_simplex(opt.start) : Vec::Constant(phi, 1.0 / double(phi));
  Vec best_xi = xi;
  double best = dual_objective(to_zeta(xi), co, amp_n, amp_m);
  Vec g(phi);
  for (int k = 0; k < opt.iters; ++k) {
    const Vec zeta = to_zeta(xi);
    const Aggregates ag = aggregate(zeta, co);
    const double bn = ag.B.norm();
    const CVec ub = bn > 0.0 ? CVec(ag.B / bn) : CVec::Zero(ag.B.size());
    const CVec sc = ag.C.unaryExpr([](cdouble x) { return std::abs(x) > 0.0 ? x / std::abs(x) : cdouble(0.0); });
    const CVec sd = ag.D.unaryExpr([](cdouble x) { return std::abs(x) > 0.0 ? x / std::abs(x) : cdouble(0.0); });
    for (Eigen::Index u = 0; u < phi; ++u) {
      const double dz = 2.0 * std::real(ub.dot(co.b[u])) + 2.0 * amp_n * std::real(sc.dot(co.c[u])) +
                        2.0 * amp_m * std::real(sd.dot(co.d[u])) - co.a(u);
      g(u) = dz / k2(u);
    }
    // Restrict the step to the tangent cone of the simplex: coordinates at
    // zero that would turn negative drop out, the rest loses its mean.
    const Vec dir = tangent_direction(xi, g);
    const double dn = dir.norm();
    if (!(dn > 0.0)) break;
    xi = project_simplex(xi + (opt.alpha0 / std::sqrt(double(k + 1))) * dir / dn);
    const double val = dual_objective(to_zeta(xi), co, amp_n, amp_m);
    if (!std::isfinite(val)) throw Error("sca: non-finite dual objective in the multiplier subproblem");
    if (val < best) {
      best = val;
      best_xi = xi;
    }
  }
  return to_zeta(best_xi);
}

StepKind parse_step_kind(const std::string& s) {
  if (s == "none") return StepKind::kNone;
  if (s == "constant") return StepKind::kConstant;
  if (s == "diminishing") return StepKind::kDiminishing;
  throw Error("sca: unknown step schedule '" + s + "'");
}

std::vector<double> step_size_schedule(StepKind kind, double alpha0, int n) {
  if (!(alpha0 > 0.0 && alpha0 <= 1.0)) throw Error("sca: step alpha0 must lie in (0,1]");
  std::vector<double> a(std::max(n, 0), 1.0);
  for (int k = 0; k < n; ++k) {
    if (kind == StepKind::kConstant) a[k] = alpha0;
    if (kind == StepKind::kDiminishing) a[k] = alpha0 / (k + 1);
  }
  return a;
}

void require_theorem3_schedule(StepKind kind) {
  if (kind != StepKind::kDiminishing)
    throw Error("sca: step schedule violates sum alpha^2 < inf; the averaged-sequence check needs 'diminishing'");
}

ScaSettings ScaSettings::from(const ScaOptions& o) {
  ScaSettings s;
  s.imax = o.imax;
  s.xi = o.xi;
  s.varpi = o.varpi;
  s.restarts = o.restarts;
  s.zeta.iters = o.inner_iters;
  return s;
}

CVec initial_beamformer(const EffectiveChannels& eff, const std::vector<int>& K) {
  const int J = int(eff.h.front().size());
  CMat R = CMat::Zero(J, J);
  for (int u = 0; u < eff.users(); ++u) {
    const double n2 = eff.h[u].squaredNorm();
    if (n2 > 0.0) R += eff.h[u] * eff.h[u].adjoint() / (n2 * double(K[u]) * K[u]);
  }
  Eigen::SelfAdjointEigenSolver<CMat> es(R);
  CVec f = es.eigenvectors().col(J - 1);
  // Fix the global phase for reproducibility.
  const Eigen::Index j = 0;
  if (std::abs(f(j)) > 0.0) f *= std::conj(f(j)) / std::abs(f(j));
  return f / f.norm();
}

namespace {

// Scales every link so the weakest initial gain is 1; returns the gain scale.
ScaProblem rescaled(const ScaProblem& p, const CVec& f, const AstarsState& stars, double* g_scale) {
  const EffectiveChannels eff = effective_channels(p, stars.diag_n(), stars.diag_m());
  const Vec gain = user_gains(f, eff);
  double gmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index u = 0; u < gain.size(); ++u)
    if (gain(u) > 0.0) gmin = std::min(gmin, gain(u));
  if (!std::isfinite(gmin)) gmin = 1.0;
  const double s = 1.0 / std::sqrt(gmin);
  ScaProblem q = p;
  for (auto& l : q.links) {
    l.h0 *= s;
    l.A *= s;
  }
  *g_scale = s * s;
  return q;
}

void blend_phases(const CVec& from, const CVec& to, double alpha, Vec& phases) {
  const CVec v = from + alpha * (to - from);
  for (Eigen::Index q = 0; q < v.size(); ++q)
    if (std::abs(v(q)) > 0.0) phases(q) = std::arg(v(q));
}

}  // namespace

ScaResult optimize(const ScaProblem& problem, const AstarsState& init_stars, const CVec& init_f,
                   const ScaSettings& settings, Rng& rng, const std::function<void(const ScaIterate&)>& on_iterate) {
  if (!(settings.varpi > 0.0)) throw Error("sca: varpi must be positive");
  if (settings.imax < 1) throw Error("sca: imax must be positive");
  if (std::abs(init_f.norm() - 1.0) > 1e-9) throw Error("sca: initial beamformer must have unit norm");
  const int restarts = std::max(1, settings.restarts);
  const auto steps = step_size_schedule(settings.step, settings.step_alpha0, settings.imax);
  const int phi = problem.users();
  const double kbar = std::accumulate(problem.K.begin(), problem.K.end(), 0.0) / phi;
  // K/kbar keeps varpi dimensionless; the multiplier problem then runs on
  // unit weights with coefficients divided by (K/kbar)^2.
  std::vector<double> kw(problem.K.begin(), problem.K.end());
  for (auto& k : kw) k /= kbar;
  const std::vector<int> ones(phi, 1);

  ScaResult res;
  res.obj = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    AstarsState stars = init_stars;
    CVec f = init_f;
    if (r > 0) {
      Vec tn(stars.theta_n.size()), tm(stars.theta_m.size());
      for (Eigen::Index q = 0; q < tn.size(); ++q) tn(q) = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      for (Eigen::Index q = 0; q < tm.size(); ++q) tm(q) = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      if (settings.optimize_theta) stars.set_phases(tn, tm);
      f = initial_beamformer(effective_channels(problem, stars.diag_n(), stars.diag_m()), problem.K);
    }
    double gs = 1.0;
    const ScaProblem np = rescaled(problem, f, stars, &gs);
    const double to_orig = 1.0 / (gs * kbar * kbar);
    auto obj_norm = [&](const CVec& ff, const AstarsState& st) {
      return objective(ff, effective_channels(np, st.diag_n(), st.diag_m()), problem.K, np.n_reflection, np.conv) *
             kbar * kbar;
    };

    double obj = obj_norm(f, stars);
    if (!std::isfinite(obj)) throw Error("sca: non-finite objective at start");
    auto emit = [&](int iter, double o, double rel) {
      ScaIterate it{r, iter, o * to_orig, rel, f, stars.theta_n, stars.theta_m};
      if (on_iterate) on_iterate(it);
      res.trace.push_back(std::move(it));
    };
    auto keep_best = [&] {
      if (obj * to_orig < res.obj) {
        res.obj = obj * to_orig;
        res.f = f;
        res.stars = stars;
      }
    };
    emit(0, obj, 0.0);
    if (r == 0) res.obj_initial = obj * to_orig;
    keep_best();

    double varpi = settings.varpi;
    int iters = 0;
    for (int i = 1; i <= settings.imax; ++i) {
      CVec f_next = f;
      AstarsState s_next = stars;
      double next = obj;
      bool accepted = false;
      for (int attempt = 0; attempt <= settings.max_retries; ++attempt) {
        SurrogateCoeffs co = surrogate_coeffs(np, f, stars, varpi);
        for (int u = 0; u < phi; ++u) {
          const double w2 = 1.0 / (kw[u] * kw[u]);
          co.a(u) *= w2;
          co.b[u] *= w2;
          co.c[u] *= w2;
          co.d[u] *= w2;
        }
        const Vec zeta = solve_zeta(co, ones, stars.amp_n(), stars.amp_m(), settings.zeta);
        res.zeta = zeta;
        const CVec f_hat = update_f(zeta, co.b, f);
        Vec tn = stars.theta_n, tm = stars.theta_m;
        if (settings.optimize_theta) {
          tn = update_theta(zeta, co.c, stars.theta_n);
          tm = update_theta(zeta, co.d, stars.theta_m);
        }
        const double alpha = steps[i - 1];
        if (alpha < 1.0) {
          const CVec mix = f + alpha * (f_hat - f);
          f_next = mix.norm() > 0.0 ? CVec(mix / mix.norm()) : f_hat;
          Vec pn = stars.theta_n, pm = stars.theta_m;
          blend_phases(stars.diag_n(), build_theta(tn, stars.lambda_amp, stars.beta_r), alpha, pn);
          blend_phases(stars.diag_m(), build_theta(tm, stars.lambda_amp, stars.beta_t), alpha, pm);
          tn = pn;
          tm = pm;
        } else {
          f_next = f_hat;
        }
        s_next = stars;
        s_next.set_phases(tn, tm);
        next = obj_norm(f_next, s_next);
        if (!std::isfinite(next)) throw Error("sca: non-finite objective at iteration " + std::to_string(i));
        if (!settings.adaptive_varpi || next <= obj) {
          accepted = true;
          break;
        }
        varpi *= 4.0;
      }
      if (accepted) {
        f = f_next;
        stars = s_next;
        if (settings.adaptive_varpi) varpi = std::max(settings.varpi, 0.5 * varpi);
      } else {
        next = obj;
      }
      const double rel = std::abs(next - obj) / std::abs(next);
      obj = next;
      iters = i;
      emit(i, obj, rel);
      keep_best();
      if (rel <= settings.xi) break;
    }
    if (r == 0) {
      res.obj_last = obj * to_orig;
      res.iterations = iters;
    }
  }
  return res;
}

}  // namespace otafl
