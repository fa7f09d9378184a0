#include "linksae/errors.hpp"
#include "linksae/rng.hpp"
#include "linksae/sae_core.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <numeric>

using namespace linksae;

namespace {

UnitSample simulate(std::uint64_t seed, const std::vector<int>& sizes, double s2u, double s2e) {
  Rng rng(seed);
  UnitSample s;
  const int D = static_cast<int>(sizes.size());
  const int n = std::accumulate(sizes.begin(), sizes.end(), 0);
  s.y = Vector(n);
  s.X = Matrix(n, 2);
  s.n_domains = D;
  s.pop_size = Vector(D);
  s.pop_xbar = Matrix(D, 2);
  s.covariate_names = {"intercept", "x"};
  int i = 0;
  for (int d = 0; d < D; ++d) {
    const double u = rng.normal(0.0, std::sqrt(s2u));
    for (int k = 0; k < sizes[d]; ++k, ++i) {
      const double x = rng.normal(5.0, 2.0);
      s.X(i, 0) = 1.0;
      s.X(i, 1) = x;
      s.y(i) = 1.0 + 0.5 * x + u + rng.normal(0.0, std::sqrt(s2e));
      s.domain.push_back(d);
    }
    s.pop_size(d) = 10.0 * sizes[d] + 5;
    s.pop_xbar(d, 0) = 1.0;
    s.pop_xbar(d, 1) = 5.0 + 0.1 * d;
  }
  return s;
}

}  // namespace

TEST_CASE("closed-form log-likelihood equals the dense Gaussian density") {
  const UnitSample s = simulate(1, {4, 7, 1, 3}, 0.8, 1.5);
  Vector beta(2);
  beta << 0.9, 0.45;
  const double dense = oracle::gaussian_loglik(s.y - s.X * beta, oracle::dense_V(s.domain, 1.3, 0.6));
  CHECK(mixed_loglik(s, beta, 1.3, 0.6) == doctest::Approx(dense).epsilon(1e-12));
}

TEST_CASE("GLS coefficients equal the dense solution") {
  const UnitSample s = simulate(2, {5, 6, 2}, 1.0, 2.0);
  const GlsResult g = gls_beta(s, 2.0, 1.0);
  const Vector dense = oracle::dense_gls(s.y, s.X, oracle::dense_V(s.domain, 2.0, 1.0));
  CHECK((g.beta - dense).norm() < 1e-10);
}

TEST_CASE("Fisher information equals the trace formula") {
  const std::vector<int> dom{0, 0, 0, 1, 1, 2};
  const double s2e = 1.7, s2u = 0.4;
  const Matrix V = oracle::dense_V(dom, s2e, s2u);
  const Matrix Vi = V.inverse();
  const Matrix dE = Matrix::Identity(6, 6);
  const Matrix dU = oracle::dense_V(dom, 0.0, 1.0);
  Vector n(3);
  n << 3, 2, 1;
  const Matrix I = fisher_information(n, s2e, s2u);
  CHECK(I(0, 0) == doctest::Approx(0.5 * (Vi * dE * Vi * dE).trace()));
  CHECK(I(1, 1) == doctest::Approx(0.5 * (Vi * dU * Vi * dU).trace()));
  CHECK(I(0, 1) == doctest::Approx(0.5 * (Vi * dE * Vi * dU).trace()));
}

TEST_CASE("ML fit reaches a stationary point and beats nearby points") {
  const UnitSample s = simulate(3, {8, 12, 10, 9, 11, 7}, 1.0, 2.0);
  const MixedFit fit = fit_ml(s, FitOptions{1e-12, 500});
  CHECK(fit.converged);
  const double best = mixed_loglik(s, fit.beta, fit.sigma2_e, fit.sigma2_u);
  for (double de : {-0.01, 0.01}) {
    for (double du : {-0.01, 0.01}) {
      const Vector b = gls_beta(s, fit.sigma2_e + de, fit.sigma2_u + du).beta;
      CHECK(mixed_loglik(s, b, fit.sigma2_e + de, fit.sigma2_u + du) <= best);
    }
  }
  const Vector u = oracle::dense_blup(s.y, s.X, s.domain, 6, fit.beta, fit.sigma2_e, fit.sigma2_u);
  CHECK((fit.u_hat - u).norm() < 1e-10);
}

TEST_CASE("no between-domain variation drives sigma2_u to the floor") {
  UnitSample s = simulate(4, {6, 6, 6}, 0.0, 1.0);
  // Centre each domain so the between-domain signal vanishes.
  for (int d = 0; d < 3; ++d) {
    double m = 0.0;
    for (int i = 0; i < s.n(); ++i) {
      if (s.domain[i] == d) m += s.y(i) - 0.5 * s.X(i, 1);
    }
    m /= 6.0;
    for (int i = 0; i < s.n(); ++i) {
      if (s.domain[i] == d) s.y(i) -= m;
    }
  }
  const MixedFit fit = fit_ml(s);
  CHECK(fit.sigma2_u_at_floor);
  CHECK(fit.sigma2_u == doctest::Approx(kVarianceFloor));
  CHECK(fit.mse.mse.allFinite());
}

TEST_CASE("collinear design names the offending column") {
  UnitSample s = simulate(5, {5, 5}, 1.0, 1.0);
  Matrix X(s.n(), 3);
  X << s.X, 2.0 * s.X.col(1);
  s.X = X;
  s.pop_xbar = Matrix::Ones(2, 3);
  s.covariate_names = {"intercept", "x", "x_twice"};
  try {
    (void)fit_ml(s);
    FAIL("expected a NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("x_twice") != std::string::npos);
  }
}

TEST_CASE("sample validation") {
  UnitSample s = simulate(6, {3, 3}, 1.0, 1.0);
  s.pop_size(0) = 2.0;
  CHECK_THROWS_AS(validate_sample(s), ConfigError);
}

TEST_CASE("empty domains predict from the synthetic part alone") {
  UnitSample s = simulate(7, {6, 0, 5}, 1.0, 1.0);
  const MixedFit fit = fit_ml(s);
  CHECK(fit.u_hat(1) == 0.0);
  CHECK(fit.area_pred(1) == doctest::Approx(s.pop_xbar.row(1).dot(fit.beta)));
  CHECK(fit.mse.g1(1) == doctest::Approx(fit.sigma2_u));
  CHECK(shrinkage(1.0, 1.0, 0.0) == 0.0);
}
