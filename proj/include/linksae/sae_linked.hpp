#pragma once

#include "linksae/datamodel.hpp"
#include "linksae/sae_core.hpp"

#include <vector>

namespace linksae {

/// Exchangeable linkage errors per domain: a linked unit carries its own
/// covariates with probability lambda_d and those of any other linked unit
/// of the domain with probability gamma_d = (1 - lambda_d) / (n_d - 1).
struct LinkErrorSpec {
  Vector lambda;
  Vector gamma;
  Vector n;                    // linked sample size per domain
  std::vector<bool> unaudited;  // lambda defaulted to 1 for lack of audited links

  int n_domains() const { return static_cast<int>(lambda.size()); }
};

/// Computes gamma; forces lambda = 1 where n_d <= 1. Throws ConfigError for
/// lambda outside (0, 1].
LinkErrorSpec make_link_error_spec(const Vector& lambda, const Vector& n);

/// G_d = (lambda - gamma) I + gamma 1 1'.
template <typename Scalar>
MatrixX<Scalar> exchangeable_block(Scalar lambda, int n) {
  if (n <= 1) return MatrixX<Scalar>::Identity(n, n);
  const Scalar gamma = (Scalar(1) - lambda) / Scalar(n - 1);
  MatrixX<Scalar> g = MatrixX<Scalar>::Constant(n, n, gamma);
  g.diagonal().setConstant(lambda);
  return g;
}

/// Units of each domain in sample order.
std::vector<std::vector<int>> domain_members(const std::vector<int>& domain, int n_domains);

/// Block-diagonal G laid out in the unit order of `domain`.
Matrix build_G(const LinkErrorSpec& spec, const std::vector<int>& domain);

/// lambda_d = correct / audited links among the declared links of domain d.
/// A link is audited when either record appears in the audit deck. Domains
/// without audited links get lambda = 1 and are flagged.
LinkErrorSpec estimate_lambda(const MatchMatrix& links, const TruthDeck& audit, int n_domains);

/// Diagonal of the extra variance induced by linkage errors at fitted values
/// f of one domain, floored at zero.
Vector linkage_variance(const Vector& f, double lambda);

/// Sigma_d = sigma2_u 1 1' + sigma2_e I + diag(linkage_variance) per domain.
std::vector<Matrix> build_Sigma(const LinkErrorSpec& spec, const std::vector<std::vector<int>>& members,
                                const Vector& fitted, double sigma2_u, double sigma2_e);

struct AdjustedFit {
  Vector beta_r;
  Vector beta_blue;
  double sigma2_u = 0.0;
  double sigma2_e = 0.0;
  std::vector<Matrix> sigma_blocks;
  Vector u_hat;
  Vector area_pred;
  Matrix beta_cov;
  std::vector<double> loglik_trace;
  int iterations = 0;
  bool converged = false;
};

/// Fits y* ~ N(G X beta, Sigma): ratio estimator as a starting point, then
/// alternating BLUE and scoring updates of the variance components.
AdjustedFit fit_adjusted(const UnitSample& linked, const LinkErrorSpec& spec, const FitOptions& options = {});

/// Unit sample pairing each file-1 record with the covariates of its linked
/// file-2 record; unlinked rows are dropped. X gets a leading intercept
/// column and `pop_xbar` must already include it.
UnitSample assemble_linked(const RecordFile& f1, const RecordFile& f2, const std::vector<int>& row_to_col,
                           const Vector& pop_size, const Matrix& pop_xbar);

/// Area means with sampled y* and predicted non-sample units.
Vector adjusted_eblup(const AdjustedFit& fit, const UnitSample& linked, const LinkErrorSpec& spec);

}  // namespace linksae
