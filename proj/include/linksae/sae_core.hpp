#pragma once

#include "linksae/types.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace linksae {

/// Unit-level sample for the nested-error model y = X beta + u_d + e, plus
/// the population quantities each area prediction needs.
struct UnitSample {
  Vector y;                  // n
  Matrix X;                  // n x p, intercept included by the caller
  std::vector<int> domain;   // n entries in [0, n_domains)
  int n_domains = 0;
  Vector pop_size;           // N_d
  Matrix pop_xbar;           // D x p population covariate means
  std::vector<std::string> covariate_names;

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(X.cols()); }
};

/// Throws ConfigError on inconsistent dimensions or N_d < n_d.
void validate_sample(const UnitSample& s);

/// Per-domain counts and sample means of y and X.
struct DomainSums {
  Vector n;      // D
  Vector ybar;   // D, zero for empty domains
  Matrix xbar;   // D x p
};

DomainSums domain_sums(const UnitSample& s);

inline constexpr double kVarianceFloor = 1e-10;

struct MseComponents {
  Vector g1;
  Vector g2;
  Vector g3;
  Vector mse;  // g1 + g2 + 2 g3
  bool g3_available = true;
};

struct MixedFit {
  Vector beta;
  double sigma2_u = 0.0;
  double sigma2_e = 0.0;
  Vector u_hat;
  Vector area_pred;
  MseComponents mse;
  Matrix fisher_info;  // 2 x 2, order (sigma2_e, sigma2_u)
  Matrix beta_cov;     // (X' V^-1 X)^-1
  std::vector<double> loglik_trace;
  int iterations = 0;
  bool converged = false;
  bool sigma2_u_at_floor = false;
  bool sigma2_e_at_floor = false;
};

struct FitOptions {
  double tol = 1e-8;
  int max_iter = 500;
};

/// shrinkage factor sigma2_u / (sigma2_u + sigma2_e / n_d); zero for n_d = 0.
template <typename Scalar>
Scalar shrinkage(Scalar sigma2_u, Scalar sigma2_e, Scalar n_d) {
  if (n_d <= Scalar(0)) return Scalar(0);
  return sigma2_u / (sigma2_u + sigma2_e / n_d);
}

/// Gaussian log-likelihood of the nested-error model, in closed form per domain.
double mixed_loglik(const UnitSample& s, const Vector& beta, double sigma2_e, double sigma2_u);

struct GlsResult {
  Vector beta;
  Matrix xtvx;  // X' V^-1 X
};

/// GLS coefficients under V_d = sigma2_e I + sigma2_u 1 1'. Throws
/// NumericalError naming collinear columns when X' V^-1 X is singular.
GlsResult gls_beta(const UnitSample& s, double sigma2_e, double sigma2_u);

/// Expected information for (sigma2_e, sigma2_u).
Matrix fisher_information(const Vector& n_d, double sigma2_e, double sigma2_u);

/// Fisher scoring step for (sigma2_e, sigma2_u). A component sitting at the
/// variance floor whose step points below it is held fixed and the other is
/// updated alone; a singular information falls back to a scaled gradient.
Eigen::Vector2d projected_scoring_step(const Eigen::Matrix2d& info, const Eigen::Vector2d& score, double sigma2_e,
                                       double sigma2_u);

/// Log-likelihood slack within which a scoring step counts as no worse; keeps
/// rounding noise near the optimum from stalling the iteration.
inline double loglik_slack(double loglik) { return 1e-10 * (1.0 + std::abs(loglik)); }

/// ML by Fisher scoring on the variance components with profiled GLS beta.
MixedFit fit_ml(const UnitSample& s, const FitOptions& options = {});

Vector blup_random_effects(const UnitSample& s, const Vector& beta, double sigma2_e, double sigma2_u);

/// Finite-population EBLUP of each area mean: observed sample total plus
/// predicted non-sample total, divided by N_d.
Vector eblup_area_means(const UnitSample& s, const Vector& beta, const Vector& u_hat);

MseComponents prasad_rao_mse(const UnitSample& s, const MixedFit& fit);

/// Ordinary least squares; throws NumericalError naming collinear columns.
Vector ols(const Matrix& X, const Vector& y, const std::vector<std::string>& names = {});

/// Throws NumericalError when X has deficient column rank.
void check_full_rank(const Matrix& X, const std::vector<std::string>& names);

}  // namespace linksae
