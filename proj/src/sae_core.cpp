#include "linksae/sae_core.hpp"

#include "linksae/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace linksae {

namespace {

std::string column_name(const std::vector<std::string>& names, Eigen::Index j) {
  if (j < static_cast<Eigen::Index>(names.size())) return names[j];
  return "x" + std::to_string(j);
}

}  // namespace

void check_full_rank(const Matrix& X, const std::vector<std::string>& names) {
  if (X.rows() < X.cols()) throw NumericalError("singular design: fewer rows than columns");
  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() == X.cols()) return;
  // Name the columns, in design order, that lie in the span of earlier ones.
  std::vector<Eigen::Index> kept;
  std::vector<std::string> dependent;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    Matrix sub(X.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
    for (std::size_t k = 0; k < kept.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = X.col(kept[k]);
    sub.col(sub.cols() - 1) = X.col(j);
    Eigen::ColPivHouseholderQR<Matrix> part(sub);
    part.setThreshold(1e-10);
    if (part.rank() == sub.cols()) {
      kept.push_back(j);
    } else {
      dependent.push_back(column_name(names, j));
    }
  }
  std::ostringstream msg;
  msg << "singular design: collinear columns {";
  for (std::size_t i = 0; i < dependent.size(); ++i) msg << (i ? ", " : "") << dependent[i];
  msg << "} depend on earlier columns";
  throw NumericalError(msg.str());
}

Vector ols(const Matrix& X, const Vector& y, const std::vector<std::string>& names) {
  check_full_rank(X, names);
  return X.colPivHouseholderQr().solve(y);
}

void validate_sample(const UnitSample& s) {
  const int n = s.n();
  if (s.X.rows() != n || static_cast<int>(s.domain.size()) != n) {
    throw ConfigError("unit sample: y, X and domain lengths differ");
  }
  if (s.n_domains < 1) throw ConfigError("unit sample: need at least one domain");
  if (s.pop_size.size() != s.n_domains || s.pop_xbar.rows() != s.n_domains || s.pop_xbar.cols() != s.p()) {
    throw ConfigError("unit sample: population table does not match domains / covariates");
  }
  Vector counts = Vector::Zero(s.n_domains);
  for (int d : s.domain) {
    if (d < 0 || d >= s.n_domains) throw ConfigError("unit sample: domain index out of range");
    counts(d) += 1.0;
  }
  for (int d = 0; d < s.n_domains; ++d) {
    if (s.pop_size(d) < counts(d)) {
      throw ConfigError("domain " + std::to_string(d) + ": population size " + std::to_string(s.pop_size(d)) +
                        " below sample size " + std::to_string(counts(d)));
    }
  }
}

DomainSums domain_sums(const UnitSample& s) {
  DomainSums out{Vector::Zero(s.n_domains), Vector::Zero(s.n_domains), Matrix::Zero(s.n_domains, s.p())};
  for (int i = 0; i < s.n(); ++i) {
    const int d = s.domain[i];
    out.n(d) += 1.0;
    out.ybar(d) += s.y(i);
    out.xbar.row(d) += s.X.row(i);
  }
  for (int d = 0; d < s.n_domains; ++d) {
    if (out.n(d) > 0) {
      out.ybar(d) /= out.n(d);
      out.xbar.row(d) /= out.n(d);
    }
  }
  return out;
}

double mixed_loglik(const UnitSample& s, const Vector& beta, double sigma2_e, double sigma2_u) {
  const Vector r = s.y - s.X * beta;
  Vector sum_r = Vector::Zero(s.n_domains);
  Vector n_d = Vector::Zero(s.n_domains);
  for (int i = 0; i < s.n(); ++i) {
    sum_r(s.domain[i]) += r(i);
    n_d(s.domain[i]) += 1.0;
  }
  double logdet = 0.0;
  double quad = r.squaredNorm() / sigma2_e;
  for (int d = 0; d < s.n_domains; ++d) {
    if (n_d(d) == 0) continue;
    const double lambda = sigma2_e + n_d(d) * sigma2_u;
    logdet += (n_d(d) - 1.0) * std::log(sigma2_e) + std::log(lambda);
    quad -= sigma2_u * sum_r(d) * sum_r(d) / (sigma2_e * lambda);
  }
  return -0.5 * (s.n() * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

GlsResult gls_beta(const UnitSample& s, double sigma2_e, double sigma2_u) {
  const int p = s.p();
  Matrix sum_x = Matrix::Zero(s.n_domains, p);
  Vector sum_y = Vector::Zero(s.n_domains);
  Vector n_d = Vector::Zero(s.n_domains);
  for (int i = 0; i < s.n(); ++i) {
    sum_x.row(s.domain[i]) += s.X.row(i);
    sum_y(s.domain[i]) += s.y(i);
    n_d(s.domain[i]) += 1.0;
  }
  // V_d^-1 = (I - c_d 1 1') / sigma2_e with c_d = sigma2_u / (sigma2_e + n_d sigma2_u).
  Matrix xtvx = s.X.transpose() * s.X;
  Vector xtvy = s.X.transpose() * s.y;
  for (int d = 0; d < s.n_domains; ++d) {
    if (n_d(d) == 0) continue;
    const double c = sigma2_u / (sigma2_e + n_d(d) * sigma2_u);
    xtvx.noalias() -= c * sum_x.row(d).transpose() * sum_x.row(d);
    xtvy.noalias() -= c * sum_y(d) * sum_x.row(d).transpose();
  }
  xtvx /= sigma2_e;
  xtvy /= sigma2_e;
  xtvx = 0.5 * (xtvx + xtvx.transpose()).eval();
  Eigen::LDLT<Matrix> ldlt(xtvx);
  const double scale = xtvx.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 1e-12 * std::max(scale, 1e-300)) {
    check_full_rank(s.X, s.covariate_names);
    throw NumericalError("singular X' V^-1 X");
  }
  return {ldlt.solve(xtvy), xtvx};
}

Matrix fisher_information(const Vector& n_d, double sigma2_e, double sigma2_u) {
  Matrix info = Matrix::Zero(2, 2);
  for (Eigen::Index d = 0; d < n_d.size(); ++d) {
    const double n = n_d(d);
    if (n == 0) continue;
    const double lambda = sigma2_e + n * sigma2_u;
    info(0, 0) += (n - 1.0) / (sigma2_e * sigma2_e) + 1.0 / (lambda * lambda);
    info(1, 1) += (n / lambda) * (n / lambda);
    info(0, 1) += n / (lambda * lambda);
  }
  info(1, 0) = info(0, 1);
  return 0.5 * info;
}

namespace {

// Score for (sigma2_e, sigma2_u) at fixed beta.
Eigen::Vector2d variance_score(const UnitSample& s, const Vector& beta, const Vector& n_d, double sigma2_e,
                               double sigma2_u) {
  const Vector r = s.y - s.X * beta;
  Vector sum_r = Vector::Zero(s.n_domains);
  for (int i = 0; i < s.n(); ++i) sum_r(s.domain[i]) += r(i);
  Eigen::Vector2d score = Eigen::Vector2d::Zero();
  // V^-1 r within domain d: (r - sigma2_u sum_r / lambda) / sigma2_e.
  double vr_sq = 0.0;
  for (int i = 0; i < s.n(); ++i) {
    const int d = s.domain[i];
    const double lambda = sigma2_e + n_d(d) * sigma2_u;
    const double v = (r(i) - sigma2_u * sum_r(d) / lambda) / sigma2_e;
    vr_sq += v * v;
  }
  double trace = 0.0;
  for (int d = 0; d < s.n_domains; ++d) {
    if (n_d(d) == 0) continue;
    const double lambda = sigma2_e + n_d(d) * sigma2_u;
    trace += (n_d(d) - 1.0) / sigma2_e + 1.0 / lambda;
    score(1) += -0.5 * (n_d(d) / lambda - (sum_r(d) / lambda) * (sum_r(d) / lambda));
  }
  score(0) = -0.5 * (trace - vr_sq);
  return score;
}

}  // namespace

MixedFit fit_ml(const UnitSample& s, const FitOptions& options) {
  validate_sample(s);
  if (s.n() <= s.p() + 2) throw NumericalError("fit_ml: need more than p + 2 units");
  const DomainSums sums = domain_sums(s);
  int occupied = 0;
  for (int d = 0; d < s.n_domains; ++d) occupied += sums.n(d) > 0;
  if (occupied < 2) throw NumericalError("fit_ml: need at least two sampled domains");

  // Start from OLS: total residual variance split evenly.
  const Vector b0 = ols(s.X, s.y, s.covariate_names);
  const double rss = (s.y - s.X * b0).squaredNorm();
  double s2e = std::max(rss / (s.n() - s.p()), kVarianceFloor);
  double s2u = std::max(0.5 * s2e, kVarianceFloor);
  s2e = std::max(0.5 * s2e, kVarianceFloor);

  MixedFit fit;
  GlsResult gls = gls_beta(s, s2e, s2u);
  double ll = mixed_loglik(s, gls.beta, s2e, s2u);
  fit.loglik_trace.push_back(ll);
  for (int it = 0; it < options.max_iter; ++it) {
    const Eigen::Matrix2d info = fisher_information(sums.n, s2e, s2u);
    const Eigen::Vector2d score = variance_score(s, gls.beta, sums.n, s2e, s2u);
    const Eigen::Vector2d step = projected_scoring_step(info, score, s2e, s2u);
    double t = 1.0;
    double ne = s2e, nu = s2u, nll = ll;
    GlsResult ngls;
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      ne = std::max(s2e + t * step(0), kVarianceFloor);
      nu = std::max(s2u + t * step(1), kVarianceFloor);
      ngls = gls_beta(s, ne, nu);
      nll = mixed_loglik(s, ngls.beta, ne, nu);
      if (nll >= ll - loglik_slack(ll)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // no admissible step: leave converged unset
    const double change = std::hypot(ne - s2e, nu - s2u) / std::max(std::hypot(s2e, s2u), kVarianceFloor);
    s2e = ne;
    s2u = nu;
    gls = std::move(ngls);
    ll = nll;
    fit.loglik_trace.push_back(ll);
    fit.iterations = it + 1;
    if (change < options.tol) {
      fit.converged = true;
      break;
    }
  }

  fit.beta = gls.beta;
  fit.sigma2_e = s2e;
  fit.sigma2_u = s2u;
  fit.sigma2_e_at_floor = s2e <= kVarianceFloor;
  fit.sigma2_u_at_floor = s2u <= kVarianceFloor;
  fit.fisher_info = fisher_information(sums.n, s2e, s2u);
  fit.beta_cov = gls.xtvx.ldlt().solve(Matrix::Identity(s.p(), s.p()));
  fit.u_hat = blup_random_effects(s, fit.beta, s2e, s2u);
  fit.area_pred = eblup_area_means(s, fit.beta, fit.u_hat);
  fit.mse = prasad_rao_mse(s, fit);
  return fit;
}

Eigen::Vector2d projected_scoring_step(const Eigen::Matrix2d& info, const Eigen::Vector2d& score, double sigma2_e,
                                       double sigma2_u) {
  const Eigen::FullPivLU<Eigen::Matrix2d> lu(info);
  Eigen::Vector2d step = lu.isInvertible() ? Eigen::Vector2d(lu.solve(score))
                                           : Eigen::Vector2d(score / std::max(info.trace(), 1e-300));
  const bool fix_e = sigma2_e <= kVarianceFloor && step(0) < 0.0;
  const bool fix_u = sigma2_u <= kVarianceFloor && step(1) < 0.0;
  if (fix_e && fix_u) return Eigen::Vector2d::Zero();
  if (fix_e) return {0.0, info(1, 1) > 0.0 ? score(1) / info(1, 1) : 0.0};
  if (fix_u) return {info(0, 0) > 0.0 ? score(0) / info(0, 0) : 0.0, 0.0};
  return step;
}

Vector blup_random_effects(const UnitSample& s, const Vector& beta, double sigma2_e, double sigma2_u) {
  const DomainSums sums = domain_sums(s);
  Vector u = Vector::Zero(s.n_domains);
  for (int d = 0; d < s.n_domains; ++d) {
    const double phi = shrinkage(sigma2_u, sigma2_e, sums.n(d));
    if (sums.n(d) > 0) u(d) = phi * (sums.ybar(d) - sums.xbar.row(d).dot(beta));
  }
  return u;
}

Vector eblup_area_means(const UnitSample& s, const Vector& beta, const Vector& u_hat) {
  validate_sample(s);
  const DomainSums sums = domain_sums(s);
  Vector out(s.n_domains);
  for (int d = 0; d < s.n_domains; ++d) {
    const double n = sums.n(d);
    const double big_n = s.pop_size(d);
    // Non-sample total = population total of predictions minus their sample total.
    const double pop_pred = big_n * s.pop_xbar.row(d).dot(beta);
    const double sample_pred = n * sums.xbar.row(d).dot(beta);
    out(d) = (n * sums.ybar(d) + pop_pred - sample_pred + (big_n - n) * u_hat(d)) / big_n;
  }
  return out;
}

MseComponents prasad_rao_mse(const UnitSample& s, const MixedFit& fit) {
  const DomainSums sums = domain_sums(s);
  const int D = s.n_domains;
  MseComponents out{Vector::Zero(D), Vector::Zero(D), Vector::Zero(D), Vector::Zero(D), true};
  const double s2e = fit.sigma2_e;
  const double s2u = fit.sigma2_u;
  Eigen::FullPivLU<Matrix> lu(fit.fisher_info);
  Matrix vcov = Matrix::Zero(2, 2);
  if (lu.isInvertible()) {
    vcov = lu.inverse();
  } else {
    out.g3_available = false;
  }
  for (int d = 0; d < D; ++d) {
    const double n = sums.n(d);
    const double phi = shrinkage(s2u, s2e, n);
    out.g1(d) = (1.0 - phi) * s2u;
    const Vector a = s.pop_xbar.row(d).transpose() - phi * sums.xbar.row(d).transpose();
    out.g2(d) = std::max(0.0, a.dot(fit.beta_cov * a));
    if (n > 0 && out.g3_available) {
      const double denom = std::pow(s2u + s2e / n, 3);
      const double q = s2e * s2e * vcov(1, 1) + s2u * s2u * vcov(0, 0) - 2.0 * s2e * s2u * vcov(0, 1);
      out.g3(d) = std::max(0.0, q / (n * n * denom));
    } else if (!out.g3_available) {
      out.g3(d) = std::numeric_limits<double>::quiet_NaN();
    }
    out.mse(d) = out.g1(d) + out.g2(d) + 2.0 * (out.g3_available ? out.g3(d) : 0.0);
  }
  return out;
}

}  // namespace linksae
