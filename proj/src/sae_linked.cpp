#include "linksae/sae_linked.hpp"

#include "linksae/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace linksae {

LinkErrorSpec make_link_error_spec(const Vector& lambda, const Vector& n) {
  if (lambda.size() != n.size()) throw ConfigError("lambda and domain sizes differ in length");
  LinkErrorSpec spec{lambda, Vector::Zero(n.size()), n, std::vector<bool>(n.size(), false)};
  for (Eigen::Index d = 0; d < n.size(); ++d) {
    if (!(lambda(d) > 0.0 && lambda(d) <= 1.0)) {
      throw ConfigError("lambda for domain " + std::to_string(d) + " must lie in (0, 1]");
    }
    if (n(d) <= 1) {
      spec.lambda(d) = 1.0;
    } else {
      spec.gamma(d) = (1.0 - spec.lambda(d)) / (n(d) - 1.0);
    }
  }
  return spec;
}

std::vector<std::vector<int>> domain_members(const std::vector<int>& domain, int n_domains) {
  std::vector<std::vector<int>> out(n_domains);
  for (int i = 0; i < static_cast<int>(domain.size()); ++i) out[domain[i]].push_back(i);
  return out;
}

Matrix build_G(const LinkErrorSpec& spec, const std::vector<int>& domain) {
  const auto members = domain_members(domain, spec.n_domains());
  const int n = static_cast<int>(domain.size());
  Matrix g = Matrix::Zero(n, n);
  for (int d = 0; d < spec.n_domains(); ++d) {
    const auto& m = members[d];
    const Matrix block = exchangeable_block(spec.lambda(d), static_cast<int>(m.size()));
    for (std::size_t a = 0; a < m.size(); ++a) {
      for (std::size_t b = 0; b < m.size(); ++b) g(m[a], m[b]) = block(a, b);
    }
  }
  return g;
}

LinkErrorSpec estimate_lambda(const MatchMatrix& links, const TruthDeck& audit, int n_domains) {
  std::unordered_set<int> rows, cols;
  for (const Link& l : audit.links()) {
    rows.insert(l.row);
    cols.insert(l.col);
  }
  Vector audited = Vector::Zero(n_domains), correct = Vector::Zero(n_domains), n = Vector::Zero(n_domains);
  for (const Link& l : links.links()) {
    const int d = links.domain1()[l.row];
    n(d) += 1.0;
    if (rows.contains(l.row) || cols.contains(l.col)) {
      audited(d) += 1.0;
      if (audit.contains(l)) correct(d) += 1.0;
    }
  }
  Vector lambda = Vector::Ones(n_domains);
  std::vector<bool> unaudited(n_domains, false);
  for (int d = 0; d < n_domains; ++d) {
    if (audited(d) == 0) {
      unaudited[d] = true;
      continue;
    }
    const double lo = n(d) > 1 ? std::min(1.0, 1.0 / n(d) + 1e-6) : 1.0;
    lambda(d) = std::clamp(correct(d) / audited(d), lo, 1.0);
  }
  LinkErrorSpec spec = make_link_error_spec(lambda, n);
  spec.unaudited = std::move(unaudited);
  return spec;
}

Vector linkage_variance(const Vector& f, double lambda) {
  if (f.size() == 0) return f;
  const double mean = f.mean();
  const double mean_sq = f.squaredNorm() / static_cast<double>(f.size());
  const Vector dev2 = (f.array() - mean).square().matrix();
  return ((1.0 - lambda) * (lambda * dev2.array() + mean_sq - mean * mean)).cwiseMax(0.0).matrix();
}

std::vector<Matrix> build_Sigma(const LinkErrorSpec& spec, const std::vector<std::vector<int>>& members,
                                const Vector& fitted, double sigma2_u, double sigma2_e) {
  std::vector<Matrix> out(members.size());
  for (std::size_t d = 0; d < members.size(); ++d) {
    const auto& m = members[d];
    const int n = static_cast<int>(m.size());
    Vector f(n);
    for (int i = 0; i < n; ++i) f(i) = fitted(m[i]);
    out[d] = Matrix::Constant(n, n, sigma2_u);
    out[d].diagonal().array() += sigma2_e;
    out[d].diagonal() += linkage_variance(f, spec.lambda(d));
  }
  return out;
}

namespace {

struct DomainData {
  Matrix gx;  // G_d X_d
  Vector y;
  Matrix x;
};

std::vector<DomainData> split_domains(const UnitSample& s, const LinkErrorSpec& spec,
                                      const std::vector<std::vector<int>>& members) {
  std::vector<DomainData> out(members.size());
  for (std::size_t d = 0; d < members.size(); ++d) {
    const auto& m = members[d];
    const int n = static_cast<int>(m.size());
    DomainData& dd = out[d];
    dd.x.resize(n, s.p());
    dd.y.resize(n);
    for (int i = 0; i < n; ++i) {
      dd.x.row(i) = s.X.row(m[i]);
      dd.y(i) = s.y(m[i]);
    }
    // G_d X_d = (lambda - gamma) X_d + gamma 1 (1' X_d)
    const double lambda = spec.lambda(d);
    const double gamma = spec.gamma(d);
    dd.gx = (lambda - gamma) * dd.x;
    if (n > 0) dd.gx.rowwise() += gamma * dd.x.colwise().sum();
  }
  return out;
}

struct BlueResult {
  Vector beta;
  Matrix info;  // (GX)' Sigma^-1 GX
};

BlueResult blue_step(const std::vector<DomainData>& data, const std::vector<Eigen::LLT<Matrix>>& chol, int p) {
  Matrix a = Matrix::Zero(p, p);
  Vector b = Vector::Zero(p);
  for (std::size_t d = 0; d < data.size(); ++d) {
    if (data[d].y.size() == 0) continue;
    const Matrix sx = chol[d].solve(data[d].gx);
    a.noalias() += data[d].gx.transpose() * sx;
    b.noalias() += sx.transpose() * data[d].y;
  }
  a = 0.5 * (a + a.transpose()).eval();
  Eigen::LDLT<Matrix> ldlt(a);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 1e-12 * a.diagonal().cwiseAbs().maxCoeff()) {
    throw NumericalError("singular (GX)' Sigma^-1 GX");
  }
  return {ldlt.solve(b), a};
}

std::vector<Eigen::LLT<Matrix>> factor(const std::vector<Matrix>& blocks) {
  std::vector<Eigen::LLT<Matrix>> out;
  out.reserve(blocks.size());
  for (const Matrix& m : blocks) {
    out.emplace_back(m);
    if (out.back().info() != Eigen::Success) throw NumericalError("Sigma block is not positive definite");
  }
  return out;
}

double gaussian_loglik(const std::vector<DomainData>& data, const std::vector<Eigen::LLT<Matrix>>& chol,
                       const Vector& beta) {
  double ll = 0.0;
  for (std::size_t d = 0; d < data.size(); ++d) {
    const Eigen::Index n = data[d].y.size();
    if (n == 0) continue;
    const Vector r = data[d].y - data[d].gx * beta;
    const Vector z = chol[d].matrixL().solve(r);
    const double logdet = 2.0 * chol[d].matrixLLT().diagonal().array().log().sum();
    ll -= 0.5 * (n * std::log(2.0 * std::numbers::pi) + logdet + z.squaredNorm());
  }
  return ll;
}

Vector fitted_values(const UnitSample& s, const Vector& beta) { return s.X * beta; }

}  // namespace

AdjustedFit fit_adjusted(const UnitSample& linked, const LinkErrorSpec& spec, const FitOptions& options) {
  validate_sample(linked);
  if (spec.n_domains() != linked.n_domains) throw ConfigError("link error spec and sample disagree on domains");
  const auto members = domain_members(linked.domain, linked.n_domains);
  for (int d = 0; d < linked.n_domains; ++d) {
    if (static_cast<double>(members[d].size()) != spec.n(d)) {
      throw ConfigError("link error spec sizes do not match the linked sample in domain " + std::to_string(d));
    }
  }
  const int p = linked.p();
  const auto data = split_domains(linked, spec, members);

  // Ratio estimator with the naive covariance as weight.
  const MixedFit naive = fit_ml(linked, options);
  AdjustedFit fit;
  {
    Matrix a = Matrix::Zero(p, p);
    Vector b = Vector::Zero(p);
    for (int d = 0; d < linked.n_domains; ++d) {
      const Eigen::Index n = data[d].y.size();
      if (n == 0) continue;
      const double c = naive.sigma2_u / (naive.sigma2_e + n * naive.sigma2_u);
      // V_d^-1 M = (M - c 1 1'M) / sigma2_e
      Matrix vx = data[d].x;
      vx.rowwise() -= c * data[d].x.colwise().sum();
      vx /= naive.sigma2_e;
      a.noalias() += vx.transpose() * data[d].gx;
      b.noalias() += vx.transpose() * data[d].y;
    }
    Eigen::FullPivLU<Matrix> lu(a);
    if (!lu.isInvertible()) throw NumericalError("singular X' V^-1 G X");
    fit.beta_r = lu.solve(b);
  }

  Vector beta = fit.beta_r;
  double s2e = naive.sigma2_e;
  double s2u = naive.sigma2_u;
  auto loglik_at = [&](const Vector& b, const Vector& fitted, double e, double u) {
    return gaussian_loglik(data, factor(build_Sigma(spec, members, fitted, u, e)), b);
  };

  for (int it = 0; it < options.max_iter; ++it) {
    // BLUE at the current variance components, then one scoring step on
    // (sigma2_e, sigma2_u) with beta held fixed.
    Vector fitted = fitted_values(linked, beta);
    const Vector nbeta = blue_step(data, factor(build_Sigma(spec, members, fitted, s2u, s2e)), p).beta;
    fitted = fitted_values(linked, nbeta);
    const auto chol = factor(build_Sigma(spec, members, fitted, s2u, s2e));
    const double ll = gaussian_loglik(data, chol, nbeta);
    fit.loglik_trace.push_back(ll);
    Eigen::Vector2d score = Eigen::Vector2d::Zero();
    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
    for (int d = 0; d < linked.n_domains; ++d) {
      const Eigen::Index n = data[d].y.size();
      if (n == 0) continue;
      const Matrix inv = chol[d].solve(Matrix::Identity(n, n));
      const Vector r = data[d].y - data[d].gx * nbeta;
      const Vector sr = inv * r;
      const Vector s1 = inv.rowwise().sum();
      const double one_s_one = s1.sum();
      score(0) += -0.5 * inv.trace() + 0.5 * sr.squaredNorm();
      score(1) += -0.5 * one_s_one + 0.5 * sr.sum() * sr.sum();
      info(0, 0) += 0.5 * inv.squaredNorm();
      info(1, 1) += 0.5 * one_s_one * one_s_one;
      info(0, 1) += 0.5 * s1.squaredNorm();
    }
    info(1, 0) = info(0, 1);
    const Eigen::Vector2d step = projected_scoring_step(info, score, s2e, s2u);
    double t = 1.0;
    double ne = s2e, nu = s2u;
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      ne = std::max(s2e + t * step(0), kVarianceFloor);
      nu = std::max(s2u + t * step(1), kVarianceFloor);
      if (loglik_at(nbeta, fitted, ne, nu) >= ll - loglik_slack(ll)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      beta = nbeta;
      break;
    }
    Vector old(p + 2), now(p + 2);
    old << beta, s2e, s2u;
    now << nbeta, ne, nu;
    const double change = (now - old).norm() / std::max(old.norm(), kVarianceFloor);
    beta = nbeta;
    s2e = ne;
    s2u = nu;
    fit.iterations = it + 1;
    if (change < options.tol) {
      fit.converged = true;
      break;
    }
  }

  fit.beta_blue = beta;
  fit.sigma2_e = s2e;
  fit.sigma2_u = s2u;
  fit.sigma_blocks = build_Sigma(spec, members, fitted_values(linked, beta), s2u, s2e);
  const auto chol = factor(fit.sigma_blocks);
  fit.beta_cov = blue_step(data, chol, p).info.ldlt().solve(Matrix::Identity(p, p));
  fit.u_hat = Vector::Zero(linked.n_domains);
  for (int d = 0; d < linked.n_domains; ++d) {
    if (data[d].y.size() == 0) continue;
    const Vector r = data[d].y - data[d].gx * beta;
    fit.u_hat(d) = s2u * chol[d].solve(r).sum();
  }
  fit.area_pred = adjusted_eblup(fit, linked, spec);
  return fit;
}

UnitSample assemble_linked(const RecordFile& f1, const RecordFile& f2, const std::vector<int>& row_to_col,
                           const Vector& pop_size, const Matrix& pop_xbar) {
  if (!f1.y) throw ConfigError("file 1 carries no response");
  if (!f2.x) throw ConfigError("file 2 carries no covariates");
  if (static_cast<int>(row_to_col.size()) != f1.size()) throw std::invalid_argument("assemble_linked: bad mapping");
  const int p = static_cast<int>(f2.x->cols()) + 1;
  int n = 0;
  for (int c : row_to_col) n += c >= 0;
  UnitSample s;
  s.y.resize(n);
  s.X.resize(n, p);
  s.domain.reserve(n);
  int i = 0;
  for (int r = 0; r < f1.size(); ++r) {
    const int c = row_to_col[r];
    if (c < 0) continue;
    s.y(i) = (*f1.y)(r);
    s.X(i, 0) = 1.0;
    s.X.row(i).tail(p - 1) = f2.x->row(c);
    s.domain.push_back(f1.domain[r]);
    ++i;
  }
  s.n_domains = static_cast<int>(pop_size.size());
  s.pop_size = pop_size;
  s.pop_xbar = pop_xbar;
  s.covariate_names.push_back("intercept");
  for (const auto& name : f2.covariate_names) s.covariate_names.push_back(name);
  return s;
}

Vector adjusted_eblup(const AdjustedFit& fit, const UnitSample& linked, const LinkErrorSpec& spec) {
  validate_sample(linked);
  const auto members = domain_members(linked.domain, linked.n_domains);
  const auto data = split_domains(linked, spec, members);
  Vector out(linked.n_domains);
  for (int d = 0; d < linked.n_domains; ++d) {
    const double n = static_cast<double>(members[d].size());
    const double big_n = linked.pop_size(d);
    const double sample_y = data[d].y.sum();
    const double sample_pred = n > 0 ? (data[d].gx * fit.beta_blue).sum() : 0.0;
    const double pop_pred = big_n * linked.pop_xbar.row(d).dot(fit.beta_blue);
    out(d) = (sample_y + pop_pred - sample_pred + (big_n - n) * fit.u_hat(d)) / big_n;
  }
  return out;
}

}  // namespace linksae
