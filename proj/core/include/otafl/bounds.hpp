#pragma once

#include <string>
#include <vector>

#include "otafl/channel.hpp"
#include "otafl/fl.hpp"
#include "otafl/scenario.hpp"
#include "otafl/types.hpp"

namespace otafl {

struct SmoothnessParams {
  double rho = 0.0;
  double L = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
};

// Largest eigenvalue of X^T X by power iteration on X (X^T X never formed).
double lambda_max_gram(const Mat& X, int max_iter = 1000, double tol = 1e-12);

// rho = rho_reg; L = rho_reg + lambda_max(Xb^T Xb) / (2K) with Xb the
// bias-augmented design. 1/2 bounds the softmax cross-entropy Hessian.
SmoothnessParams logreg_smoothness(const Dataset& data, double rho);

// Envelope fit of max_k ||grad f(w; x_k, y_k)||^2 <= alpha1 + alpha2 ||grad F(w)||^2
// over the given iterates: least-squares line, shifted up to cover every
// point, then both constants inflated by 10%.
void fit_gradient_bound(const Model& model, const Dataset& data, double rho, const std::vector<Vec>& iterates,
                        SmoothnessParams& params);

// Throws "bounds require convex model" for anything but LogReg.
SmoothnessParams estimate_params(const Model& model, const Dataset& data, double rho,
                                 const std::vector<Vec>& iterates);

struct OptimumResult {
  Vec w_star;
  double F_star = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  std::vector<Vec> iterates;  // a thinned copy of the path, for fitting
};

// Noise-free centralized gradient descent with step 1/L until
// ||grad F|| <= tol.
OptimumResult solve_optimum(const Model& init, const Dataset& data, double rho, double L, double tol = 1e-10,
                            int max_iter = 200000);

// (tau sigma_s^2 + sigma_0^2) / (P (sum K)^2) * max K^2 / gain.
double d_value(const SystemConfig& cfg, const Geometry& geometry, const AstarsState& stars, const CVec& f,
               const EffectiveChannels& eff, const std::vector<int>& K);

// 1 - rho/L + (rho/L) alpha2 d.
double upsilon(const SmoothnessParams& p, double d);

struct McStat {
  double mean = 0.0;
  double se = 0.0;
};
McStat mc_stat(const std::vector<double>& xs);

struct Theorem1Result {
  double lhs = 0.0;  // mean F(w_{t+1})
  double rhs = 0.0;  // mean F(w_t) - ||grad F||^2/2L + mean ||e||^2/2L
  double slack = 0.0;
  bool holds = false;
};

// lhs <= rhs + 3 standard errors (of F_{t+1} and of ||e||^2/2L, combined).
Theorem1Result theorem1_check(double F_t, const McStat& F_t1, double grad_norm2, const McStat& e_norm2, double L);

// Upsilon^t gap0 + alpha1 d/(2L) (1 - Upsilon^t)/(1 - Upsilon); t alpha1 d/2L
// when Upsilon == 1. `warning` receives "bound non-contractive" when
// Upsilon >= 1.
double theorem2_bound(int t, const SmoothnessParams& p, double d, double gap0, std::string* warning = nullptr);

// Printed: alpha1 d / (2 rho (1 + alpha2 d)). Series (t -> inf of the
// finite-t bound): alpha1 d / (2 rho (1 - alpha2 d)).
double corollary_limit(const SmoothnessParams& p, double d, CorollaryForm form = CorollaryForm::kPrinted);

struct BoundRow {
  int t = 0;
  double lhs_mc = 0.0;
  double lhs_se = 0.0;
  double rhs_bound = 0.0;
  double d = 0.0;
  double upsilon = 0.0;
};

}  // namespace otafl
