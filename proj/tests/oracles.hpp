#pragma once

// Independent reference computations used by the unit and acceptance tests.
// They work on dense matrices or brute-force enumeration and share no code
// with the library beyond plain data types.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Dense V = s2e I + s2u Z Z' for a domain label per unit.
inline MatrixXd dense_V(const std::vector<int>& domain, double s2e, double s2u) {
  const int n = static_cast<int>(domain.size());
  MatrixXd V = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (domain[i] == domain[j]) V(i, j) = s2u;
    }
    V(i, i) += s2e;
  }
  return V;
}

inline double gaussian_loglik(const VectorXd& r, const MatrixXd& V) {
  const Eigen::LLT<MatrixXd> llt(V);
  const MatrixXd L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  const double quad = r.dot(llt.solve(r));
  return -0.5 * (static_cast<double>(r.size()) * std::log(2.0 * M_PI) + logdet + quad);
}

inline VectorXd dense_gls(const VectorXd& y, const MatrixXd& X, const MatrixXd& V) {
  const MatrixXd Vi = V.inverse();
  return (X.transpose() * Vi * X).inverse() * (X.transpose() * Vi * y);
}

struct MlPoint {
  VectorXd beta;
  double s2e = 0.0;
  double s2u = 0.0;
  double loglik = 0.0;
};

// Profile likelihood maximised by successively refined grids over
// (sigma2_e, sigma2_u), with GLS beta at every grid point.
inline MlPoint grid_ml(const VectorXd& y, const MatrixXd& X, const std::vector<int>& domain, double e_hi,
                       double u_hi, int rounds = 40, int points = 21) {
  auto eval = [&](double s2e, double s2u) {
    const MatrixXd V = dense_V(domain, s2e, s2u);
    MlPoint p;
    p.beta = dense_gls(y, X, V);
    p.s2e = s2e;
    p.s2u = s2u;
    p.loglik = gaussian_loglik(y - X * p.beta, V);
    return p;
  };
  double e_lo = 1e-6, u_lo = 0.0;
  MlPoint best = eval(0.5 * e_hi, 0.5 * u_hi);
  for (int round = 0; round < rounds; ++round) {
    for (int i = 0; i < points; ++i) {
      for (int j = 0; j < points; ++j) {
        const double se = e_lo + (e_hi - e_lo) * i / (points - 1);
        const double su = u_lo + (u_hi - u_lo) * j / (points - 1);
        const MlPoint p = eval(std::max(se, 1e-8), su);
        if (p.loglik > best.loglik) best = p;
      }
    }
    const double we = (e_hi - e_lo) / 4.0, wu = (u_hi - u_lo) / 4.0;
    e_lo = std::max(1e-8, best.s2e - we);
    e_hi = best.s2e + we;
    u_lo = std::max(0.0, best.s2u - wu);
    u_hi = best.s2u + wu;
  }
  return best;
}

// BLUP of the domain effects, V_d inverted densely.
inline VectorXd dense_blup(const VectorXd& y, const MatrixXd& X, const std::vector<int>& domain, int D,
                           const VectorXd& beta, double s2e, double s2u) {
  VectorXd u = VectorXd::Zero(D);
  for (int d = 0; d < D; ++d) {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(domain.size()); ++i) {
      if (domain[i] == d) idx.push_back(i);
    }
    const int n = static_cast<int>(idx.size());
    if (n == 0) continue;
    MatrixXd V = MatrixXd::Constant(n, n, s2u);
    V.diagonal().array() += s2e;
    VectorXd r(n);
    for (int k = 0; k < n; ++k) r(k) = y(idx[k]) - X.row(idx[k]).dot(beta);
    u(d) = s2u * VectorXd::Ones(n).dot(V.inverse() * r);
  }
  return u;
}

// Hit-and-miss linkage model for two files of two records in one block:
// exact posterior over the seven partial matchings, integrating the true
// values, theta (symmetric Dirichlet) and nu (Beta, by quadrature).
struct TinyLinkProblem {
  std::vector<std::vector<int>> w1;  // [record][field], 0 = missing
  std::vector<std::vector<int>> w2;
  std::vector<int> k;
  double nu_a = 1.0;
  double nu_b = 1.0;
  double alpha = 1.0;
};

// Configuration encoded as row -> col (-1 unlinked).
inline std::vector<std::vector<int>> tiny_configurations() {
  return {{-1, -1}, {0, -1}, {1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 0}};
}

inline double log_dirichlet_multinomial(const std::vector<int>& counts, double alpha) {
  const double k = static_cast<double>(counts.size());
  const double m = std::accumulate(counts.begin(), counts.end(), 0.0);
  double out = std::lgamma(k * alpha) - std::lgamma(k * alpha + m);
  for (int c : counts) out += std::lgamma(alpha + c) - std::lgamma(alpha);
  return out;
}

inline std::map<std::vector<int>, double> tiny_link_posterior(const TinyLinkProblem& pb) {
  const auto configs = tiny_configurations();
  const int h = static_cast<int>(pb.k.size());
  // Simpson nodes for the nu integral.
  const int nodes = 2001;
  std::vector<double> nu(nodes), wq(nodes);
  const double step = 1.0 / (nodes - 1);
  const double lbeta = std::lgamma(pb.nu_a) + std::lgamma(pb.nu_b) - std::lgamma(pb.nu_a + pb.nu_b);
  for (int i = 0; i < nodes; ++i) {
    nu[i] = i * step;
    const double simpson = (i == 0 || i == nodes - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    double log_dens = -lbeta;
    if (pb.nu_a != 1.0) log_dens += (pb.nu_a - 1.0) * std::log(nu[i]);
    if (pb.nu_b != 1.0) log_dens += (pb.nu_b - 1.0) * std::log1p(-nu[i]);
    wq[i] = simpson * step / 3.0 * std::exp(log_dens);
  }
  std::map<std::vector<int>, double> post;
  double total = 0.0;
  for (const auto& c : configs) {
    const int t = static_cast<int>((c[0] >= 0) + (c[1] >= 0));
    const double n_configs = t == 0 ? 1.0 : (t == 1 ? 4.0 : 2.0);
    // Entities: file-1 records 0,1 then unlinked file-2 records.
    std::vector<int> ent2(2, -1);
    int m = 2;
    for (int r = 0; r < 2; ++r) {
      if (c[r] >= 0) ent2[c[r]] = r;
    }
    for (int s = 0; s < 2; ++s) {
      if (ent2[s] < 0) ent2[s] = m++;
    }
    double lik = 1.0;
    for (int l = 0; l < h; ++l) {
      const int k = pb.k[l];
      double field = 0.0;
      std::vector<int> z(m, 1);
      while (true) {
        std::vector<int> counts(k, 0);
        for (int e = 0; e < m; ++e) ++counts[z[e] - 1];
        const double prior = std::exp(log_dirichlet_multinomial(counts, pb.alpha));
        double integral = 0.0;
        for (int i = 0; i < nodes; ++i) {
          double p = 1.0;
          auto hm = [&](int obs, int truth) {
            return obs == 0 ? 1.0 : nu[i] * (obs == truth) + (1.0 - nu[i]) / k;
          };
          for (int r = 0; r < 2; ++r) p *= hm(pb.w1[r][l], z[r]);
          for (int s = 0; s < 2; ++s) p *= hm(pb.w2[s][l], z[ent2[s]]);
          integral += wq[i] * p;
        }
        field += prior * integral;
        int pos = 0;
        while (pos < m && z[pos] == k) z[pos++] = 1;
        if (pos == m) break;
        ++z[pos];
      }
      lik *= field;
    }
    const double p = lik / (3.0 * n_configs);
    post[c] = p;
    total += p;
  }
  for (auto& [c, p] : post) p /= total;
  return post;
}

// Random within-block permutation with P(pi(i) = i) = lambda and
// P(pi(i) = j) = (1 - lambda) / (n - 1): identity with probability
// (n lambda - 1) / (n - 1), otherwise uniform. Needs lambda >= 1/n.
inline std::vector<int> exchangeable_permutation(int n, double lambda, std::mt19937_64& gen) {
  std::vector<int> pi(n);
  std::iota(pi.begin(), pi.end(), 0);
  const double keep = (n * lambda - 1.0) / (n - 1.0);
  if (std::uniform_real_distribution<double>(0.0, 1.0)(gen) < keep) return pi;
  std::shuffle(pi.begin(), pi.end(), gen);
  return pi;
}

}  // namespace oracle
