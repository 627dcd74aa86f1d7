#include "otafl/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "otafl/ota.hpp"

namespace otafl {

double lambda_max_gram(const Mat& X, int max_iter, double tol) {
  if (X.size() == 0) return 0.0;
  Vec v = Vec::Ones(X.cols()) / std::sqrt(double(X.cols()));
  double lam = 0.0;
  for (int i = 0; i < max_iter; ++i) {
    Vec w = X.transpose() * (X * v);
    const double n = w.norm();
    if (!(n > 0.0)) return 0.0;
    const double next = v.dot(w);
    v = w / n;
    if (std::abs(next - lam) <= tol * std::abs(next)) return next;
    lam = next;
  }
  return lam;
}

SmoothnessParams logreg_smoothness(const Dataset& data, double rho) {
  if (data.empty()) throw Error("bounds: empty dataset");
  Mat Xb(data.size(), data.dim() + 1);
  Xb.leftCols(data.dim()) = data.X;
  Xb.col(data.dim()).setOnes();
  SmoothnessParams p;
  p.rho = rho;
  p.L = rho + 0.5 * lambda_max_gram(Xb) / data.size();
  return p;
}

void fit_gradient_bound(const Model& model, const Dataset& data, double rho, const std::vector<Vec>& iterates,
                        SmoothnessParams& params) {
  if (iterates.empty()) throw Error("bounds: no iterates to fit the gradient bound on");
  std::vector<double> xs, ys;
  Model m = model;
  for (const Vec& w : iterates) {
    m.w = w;
    double worst = 0.0;
    for (int k = 0; k < data.size(); ++k) worst = std::max(worst, sample_gradient(m, data, k, rho).squaredNorm());
    xs.push_back(local_gradient(m, data, rho).squaredNorm());
    ys.push_back(worst);
  }
  const double n = double(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  double a2 = sxx > 0.0 ? std::max(0.0, sxy / sxx) : 0.0;
  double a1 = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) a1 = std::max(a1, ys[i] - a2 * xs[i]);
  params.alpha1 = 1.1 * a1;
  params.alpha2 = 1.1 * a2;
}

SmoothnessParams estimate_params(const Model& model, const Dataset& data, double rho,
                                 const std::vector<Vec>& iterates) {
  if (model.kind != ModelKind::kLogReg) throw Error("bounds require convex model");
  SmoothnessParams p = logreg_smoothness(data, rho);
  fit_gradient_bound(model, data, rho, iterates, p);
  return p;
}

OptimumResult solve_optimum(const Model& init, const Dataset& data, double rho, double L, double tol,
                            int max_iter) {
  OptimumResult r;
  Model m = init;
  Vec g = local_gradient(m, data, rho);
  int next_keep = 0;
  for (int i = 0; i < max_iter; ++i) {
    if (i == next_keep) {
      r.iterates.push_back(m.w);
      next_keep = next_keep == 0 ? 1 : 2 * next_keep;
    }
    if (g.norm() <= tol) break;
    m.w -= g / L;
    g = local_gradient(m, data, rho);
    r.iterations = i + 1;
  }
  r.w_star = m.w;
  r.grad_norm = g.norm();
  r.F_star = loss(m, data, rho);
  if (r.grad_norm > tol) throw Error("bounds: optimum search stopped at ||grad F|| = " + std::to_string(r.grad_norm));
  return r;
}

double d_value(const SystemConfig& cfg, const Geometry& geometry, const AstarsState& stars, const CVec& f,
               const EffectiveChannels& eff, const std::vector<int>& K) {
  const Vec gain = term_gains(f, eff, cfg.N, cfg.gain_convention);
  double worst = 0.0;
  for (int u = 0; u < eff.users(); ++u) {
    if (!(gain(u) > 0.0)) throw Error("bounds: zero channel gain for user " + std::to_string(u));
    const double k = K[u];
    worst = std::max(worst, k * k / gain(u));
  }
  const double sk = std::accumulate(K.begin(), K.end(), 0.0);
  return (tau(cfg, stars, geometry) * cfg.sigma_s2 + cfg.sigma_02) / (cfg.p_max * sk * sk) * worst;
}

double upsilon(const SmoothnessParams& p, double d) { return 1.0 - p.rho / p.L + (p.rho / p.L) * p.alpha2 * d; }

McStat mc_stat(const std::vector<double>& xs) {
  McStat s;
  if (xs.empty()) return s;
  const double n = double(xs.size());
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return s;
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.se = std::sqrt(ss / (n - 1.0) / n);
  return s;
}

Theorem1Result theorem1_check(double F_t, const McStat& F_t1, double grad_norm2, const McStat& e_norm2, double L) {
  Theorem1Result r;
  r.lhs = F_t1.mean;
  r.rhs = F_t - grad_norm2 / (2.0 * L) + e_norm2.mean / (2.0 * L);
  const double se_e = e_norm2.se / (2.0 * L);
  r.slack = 3.0 * std::sqrt(F_t1.se * F_t1.se + se_e * se_e);
  // Round-off floor: the quadratic tight case is an equality.
  const double eps = 1e-12 * std::max({1.0, std::abs(F_t), std::abs(r.lhs)});
  r.holds = r.lhs <= r.rhs + r.slack + eps;
  return r;
}

double theorem2_bound(int t, const SmoothnessParams& p, double d, double gap0, std::string* warning) {
  const double u = upsilon(p, d);
  if (warning) *warning = u >= 1.0 ? "bound non-contractive" : "";
  const double c = p.alpha1 * d / (2.0 * p.L);
  const double ut = std::pow(u, t);
  if (u == 1.0) return gap0 + t * c;
  return ut * gap0 + c * (1.0 - ut) / (1.0 - u);
}

double corollary_limit(const SmoothnessParams& p, double d, CorollaryForm form) {
  if (p.alpha2 > 0.0 && d > 1.0 / p.alpha2) throw Error("bounds: corollary needs d <= 1/alpha2");
  if (!(upsilon(p, d) < 1.0)) throw Error("bounds: corollary needs a contractive bound (Upsilon < 1)");
  if (form == CorollaryForm::kPrinted) return p.alpha1 * d / (2.0 * p.rho * (1.0 + p.alpha2 * d));
  return p.alpha1 * d / (2.0 * p.rho * (1.0 - p.alpha2 * d));
}

}  // namespace otafl
