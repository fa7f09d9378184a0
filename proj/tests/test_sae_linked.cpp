#include "linksae/errors.hpp"
#include "linksae/rng.hpp"
#include "linksae/sae_linked.hpp"

#include <doctest.h>

using namespace linksae;

TEST_CASE("exchangeable block has unit row sums") {
  const Matrix g = exchangeable_block(0.7, 4);
  CHECK(g(0, 0) == doctest::Approx(0.7));
  CHECK(g(0, 1) == doctest::Approx(0.1));
  CHECK((g.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-15);
  CHECK(exchangeable_block(0.3, 1)(0, 0) == 1.0);
}

TEST_CASE("G follows the unit order of interleaved domains") {
  Vector lambda(2), n(2);
  lambda << 0.8, 0.5;
  n << 2, 3;
  const LinkErrorSpec spec = make_link_error_spec(lambda, n);
  const Matrix G = build_G(spec, {0, 1, 0, 1, 1});
  CHECK(G(0, 2) == doctest::Approx(0.2));
  CHECK(G(0, 1) == 0.0);
  CHECK(G(1, 3) == doctest::Approx(0.25));
  CHECK(G(4, 4) == doctest::Approx(0.5));
}

TEST_CASE("link error spec validation") {
  Vector lambda(2), n(2);
  lambda << 0.5, 0.4;
  n << 1, 4;
  const LinkErrorSpec spec = make_link_error_spec(lambda, n);
  CHECK(spec.lambda(0) == 1.0);
  CHECK(spec.gamma(1) == doctest::Approx(0.2));
  lambda << 1.2, 0.5;
  CHECK_THROWS_AS(make_link_error_spec(lambda, n), ConfigError);
}

TEST_CASE("lambda estimated from audited links") {
  MatchMatrix links(std::vector<int>{0, 0, 0, 1, 1}, std::vector<int>{0, 0, 0, 1, 1});
  links.link(0, 0);
  links.link(1, 2);
  links.link(2, 1);
  links.link(3, 3);
  const TruthDeck audit({{0, 0}, {1, 1}});
  const LinkErrorSpec spec = estimate_lambda(links, audit, 2);
  // Domain 0: links (0,0) correct, (1,2) and (2,1) touch audited records.
  CHECK(spec.lambda(0) == doctest::Approx(1.0 / 3.0 + 1e-6).epsilon(1e-3));
  CHECK(spec.unaudited[1]);
  CHECK(spec.lambda(1) == 1.0);
}

TEST_CASE("linkage variance vanishes without errors and is non-negative") {
  Vector f(4);
  f << 1.0, 4.0, 2.0, 9.0;
  CHECK(linkage_variance(f, 1.0).norm() == 0.0);
  const Vector v = linkage_variance(f, 0.6);
  CHECK((v.array() >= 0.0).all());
  const double mean = f.mean(), m2 = f.squaredNorm() / 4.0;
  CHECK(v(3) == doctest::Approx(0.4 * (0.6 * (9.0 - mean) * (9.0 - mean) + m2 - mean * mean)));
}

TEST_CASE("adjusted fit recovers the slope under simulated exchangeable errors") {
  Rng rng(21);
  const int D = 10, nd = 40;
  UnitSample s;
  s.n_domains = D;
  s.y = Vector(D * nd);
  s.X = Matrix(D * nd, 2);
  s.pop_size = Vector::Constant(D, 1000.0);
  s.pop_xbar = Matrix::Ones(D, 2);
  s.covariate_names = {"intercept", "x"};
  Vector lambda = Vector::Constant(D, 0.8), n = Vector::Constant(D, nd);
  double slope_sum = 0.0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    s.domain.clear();
    for (int d = 0; d < D; ++d) {
      const double u = rng.normal();
      std::vector<double> x(nd), y(nd);
      for (int k = 0; k < nd; ++k) {
        x[k] = rng.normal(10.0, 3.0);
        y[k] = 2.0 + 0.5 * x[k] + u + rng.normal();
      }
      for (int k = 0; k < nd; ++k) {
        const int i = d * nd + k;
        int j = k;
        if (rng.uniform() >= 0.8) {
          j = static_cast<int>(rng.index(nd - 1));
          if (j >= k) ++j;
        }
        s.X(i, 0) = 1.0;
        s.X(i, 1) = x[k];
        s.y(i) = y[j];
        s.domain.push_back(d);
      }
    }
    const AdjustedFit fit = fit_adjusted(s, make_link_error_spec(lambda, n));
    slope_sum += fit.beta_blue(1);
  }
  CHECK(slope_sum / reps == doctest::Approx(0.5).epsilon(0.05));
}
