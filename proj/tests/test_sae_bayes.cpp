#include "linksae/rng.hpp"
#include "linksae/sae_bayes.hpp"

#include <doctest.h>

using namespace linksae;

namespace {

UnitSample simulate(std::uint64_t seed, int D, int nd) {
  Rng rng(seed);
  UnitSample s;
  s.n_domains = D;
  s.y = Vector(D * nd);
  s.X = Matrix(D * nd, 2);
  s.pop_size = Vector::Constant(D, 100.0 * nd);
  s.pop_xbar = Matrix(D, 2);
  s.pop_xbar.col(0).setOnes();
  s.pop_xbar.col(1).setConstant(3.0);
  s.covariate_names = {"intercept", "x"};
  for (int d = 0; d < D; ++d) {
    const double u = rng.normal(0.0, 1.0);
    for (int k = 0; k < nd; ++k) {
      const int i = d * nd + k;
      s.X(i, 0) = 1.0;
      s.X(i, 1) = rng.normal(3.0, 1.0);
      s.y(i) = 1.0 + 2.0 * s.X(i, 1) + u + rng.normal(0.0, 0.5);
      s.domain.push_back(d);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("beta conditional is the regression of y minus the effects") {
  const UnitSample s = simulate(1, 5, 10);
  SaeGibbs g(s, SaePrior{});
  SaeState st;
  st.beta = Vector::Zero(2);
  st.u = Vector::LinSpaced(5, -1.0, 1.0);
  st.sigma2_e = 0.3;
  st.sigma2_u = 1.0;
  g.set_state(st);
  const auto [mean, cov] = g.beta_conditional();
  Vector r = s.y;
  for (int i = 0; i < s.n(); ++i) r(i) -= st.u(s.domain[i]);
  const Matrix xtx = s.X.transpose() * s.X;
  CHECK((mean - xtx.ldlt().solve(s.X.transpose() * r)).norm() < 1e-10);
  CHECK((cov - 0.3 * xtx.inverse()).norm() < 1e-10);
}

TEST_CASE("posterior concentrates near the generating coefficients") {
  const UnitSample s = simulate(2, 12, 30);
  const SaePosterior post = gibbs_sae(s, SaePrior{}, 300, 1500, 4);
  CHECK(post.n_draws() == 1500);
  const Vector m = post.beta_mean(), sd = post.beta_sd();
  CHECK(std::abs(m(1) - 2.0) < 4.0 * sd(1) + 0.02);
  CHECK(post.sigma2_e.mean() == doctest::Approx(0.25).epsilon(0.2));
  CHECK(!post.propriety_warning);
  CHECK((post.sigma2_u.array() > 0.0).all());
}

TEST_CASE("few domains raise the propriety warning under the uniform prior") {
  const UnitSample s = simulate(3, 3, 10);
  SaeGibbs g(s, SaePrior{});
  CHECK(g.propriety_warning());
  CHECK(g.upper() > 1e5);
  SaePrior ig;
  ig.sigma_u_prior = SigmaUPrior::InvGamma;
  CHECK(!SaeGibbs(s, ig).propriety_warning());
}

TEST_CASE("an empty domain draws its effect from the prior") {
  UnitSample s = simulate(4, 4, 10);
  for (int i = 0; i < s.n(); ++i) {
    if (s.domain[i] == 3) s.domain[i] = 2;
  }
  SaeGibbs g(s, SaePrior{});
  SaeState st;
  st.beta = Vector::Zero(2);
  st.u = Vector::Zero(4);
  st.sigma2_e = 1.0;
  st.sigma2_u = 4.0;
  Rng rng(8);
  double sum = 0.0, sq = 0.0;
  const int m = 20000;
  for (int k = 0; k < m; ++k) {
    g.set_state(st);
    g.draw_u(rng);
    const double v = g.state().u(3);
    sum += v;
    sq += v * v;
  }
  CHECK(sum / m == doctest::Approx(0.0).epsilon(0.05));
  CHECK(sq / m == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("fixed seed gives identical draws") {
  const UnitSample s = simulate(5, 6, 8);
  const SaePosterior a = gibbs_sae(s, SaePrior{}, 50, 100, 9);
  const SaePosterior b = gibbs_sae(s, SaePrior{}, 50, 100, 9);
  CHECK(a.beta == b.beta);
  CHECK(a.sigma2_u == b.sigma2_u);
}
