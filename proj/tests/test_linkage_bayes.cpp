#include "linksae/errors.hpp"
#include "linksae/linkage_bayes.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace linksae;

namespace {

RecordFile make_file(const std::vector<std::vector<int>>& keys, std::vector<int> domain) {
  RecordFile f;
  f.keys = KeyMatrix(static_cast<Eigen::Index>(keys.size()), static_cast<Eigen::Index>(keys[0].size()));
  for (std::size_t i = 0; i < keys.size(); ++i) {
    for (std::size_t l = 0; l < keys[i].size(); ++l) f.keys(i, l) = keys[i][l];
    f.ids.push_back(std::to_string(i));
  }
  f.domain = std::move(domain);
  f.n_domains = 1 + *std::max_element(f.domain.begin(), f.domain.end());
  return f;
}

// Counts partial matchings with t links inside each block by recursion.
double brute_count(const std::vector<int>& b1, const std::vector<int>& b2, int t) {
  std::function<double(std::size_t, int)> rec = [&](std::size_t d, int left) -> double {
    if (d == b1.size()) return left == 0 ? 1.0 : 0.0;
    double acc = 0.0;
    for (int s = 0; s <= std::min({b1[d], b2[d], left}); ++s) {
      double ways = std::tgamma(b1[d] + 1.0) / (std::tgamma(s + 1.0) * std::tgamma(b1[d] - s + 1.0)) *
                    std::tgamma(b2[d] + 1.0) / std::tgamma(b2[d] - s + 1.0);
      acc += ways * rec(d + 1, left - s);
    }
    return acc;
  };
  return rec(0, t);
}

}  // namespace

TEST_CASE("hit-and-miss likelihood") {
  CHECK(hit_miss_lik(2, 2, 0.8, 4) == doctest::Approx(0.85));
  CHECK(hit_miss_lik(1, 2, 0.8, 4) == doctest::Approx(0.05));
  CHECK(hit_miss_lik(kMissing, 2, 0.8, 4) == 1.0);
}

TEST_CASE("configuration counts match enumeration") {
  const std::vector<int> b1{2, 3, 1}, b2{3, 2, 2};
  const Vector lc = log_configuration_counts(b1, b2);
  REQUIRE(lc.size() == 6 + 1);
  for (int t = 0; t <= 5; ++t) CHECK(std::exp(lc(t)) == doctest::Approx(brute_count(b1, b2, t)));
  CHECK(std::isinf(lc(6)));
}

TEST_CASE("true-value log-likelihood requires linked pairs to agree") {
  KeyMatrix t1(1, 1), t2(1, 1);
  t1 << 1;
  t2 << 2;
  MatchMatrix c(std::vector<int>{0}, std::vector<int>{0});
  std::vector<Vector> theta{Vector::Constant(2, 0.5)};
  CHECK(joint_true_loglik(t1, t2, c, theta) == doctest::Approx(2.0 * std::log(0.5)));
  c.link(0, 0);
  CHECK(std::isinf(joint_true_loglik(t1, t2, c, theta)));
  t2 << 1;
  CHECK(joint_true_loglik(t1, t2, c, theta) == doctest::Approx(std::log(0.5)));
}

TEST_CASE("sampler preserves one-to-one and within-domain links") {
  Rng gen(5);
  std::vector<std::vector<int>> k1, k2;
  std::vector<int> d1, d2;
  for (int i = 0; i < 30; ++i) {
    k1.push_back({1 + static_cast<int>(gen.index(5)), 1 + static_cast<int>(gen.index(4))});
    d1.push_back(i % 3);
  }
  for (int i = 0; i < 40; ++i) {
    k2.push_back({1 + static_cast<int>(gen.index(5)), 1 + static_cast<int>(gen.index(4))});
    d2.push_back(i % 3);
  }
  const RecordFile a = make_file(k1, d1), b = make_file(k2, d2);
  for (bool subset : {false, true}) {
    McmcOptions opt;
    opt.constrained_subset = subset;
    Rng rng(9);
    LinkageSampler s(a, b, {5, 4}, subset ? CPrior::point_mass(30, 30) : CPrior::uniform(30), LinkageHyper{}, opt,
                     rng);
    for (int it = 0; it < 50; ++it) {
      s.sweep(rng);
      const MatchMatrix c = s.current();
      CHECK(c.check_invariants());
      if (subset) CHECK(c.size() == 30);
    }
    CHECK((s.nu().array() > 0).all());
    for (const Vector& th : s.theta()) CHECK(th.sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("infeasible subset constraint is a numerical error") {
  const RecordFile a = make_file({{1}, {1}}, {0, 0});
  const RecordFile b = make_file({{1}, {1}}, {0, 1});
  McmcOptions opt;
  opt.constrained_subset = true;
  opt.n_burn = 1;
  opt.n_draws = 1;
  CHECK_THROWS_AS(run_mcmc(a, b, {2}, CPrior::point_mass(2, 2), LinkageHyper{}, opt), NumericalError);
}

TEST_CASE("a fixed seed reproduces the chain") {
  const RecordFile a = make_file({{1, 2}, {2, 1}, {3, 3}}, {0, 0, 0});
  const RecordFile b = make_file({{1, 2}, {2, 2}, {3, 3}, {1, 1}}, {0, 0, 0, 0});
  McmcOptions opt;
  opt.n_burn = 100;
  opt.n_draws = 300;
  opt.seed = 77;
  const LinkagePosterior p1 = run_mcmc(a, b, {3, 3}, CPrior::uniform(3), LinkageHyper{}, opt);
  const LinkagePosterior p2 = run_mcmc(a, b, {3, 3}, CPrior::uniform(3), LinkageHyper{}, opt);
  REQUIRE(p1.pair_probs.size() == p2.pair_probs.size());
  for (std::size_t i = 0; i < p1.pair_probs.size(); ++i) {
    CHECK(p1.pair_probs[i].link == p2.pair_probs[i].link);
    CHECK(p1.pair_probs[i].score == p2.pair_probs[i].score);
  }
  CHECK(p1.nu_trace == p2.nu_trace);
}

TEST_CASE("short chain agrees with the exact two-by-two posterior") {
  oracle::TinyLinkProblem pb;
  pb.w1 = {{1, 2}, {2, 0}};
  pb.w2 = {{1, 2}, {3, 1}};
  pb.k = {3, 2};
  const auto exact = oracle::tiny_link_posterior(pb);
  const RecordFile a = make_file(pb.w1, {0, 0}), b = make_file(pb.w2, {0, 0});
  McmcOptions opt;
  opt.n_burn = 2000;
  opt.n_draws = 20000;
  opt.seed = 3;
  const LinkagePosterior post = run_mcmc(a, b, pb.k, CPrior::uniform(2), LinkageHyper{}, opt);
  double p00 = 0.0;
  for (const auto& [c, p] : exact) {
    if (c[0] == 0) p00 += p;
  }
  CHECK(post.prob(0, 0) == doctest::Approx(p00).epsilon(0.05));
}

TEST_CASE("point estimate keeps links above one half") {
  LinkagePosterior post;
  post.n1 = 2;
  post.n2 = 2;
  post.domain1 = {0, 0};
  post.domain2 = {0, 0};
  post.pair_probs = {{{0, 0}, 0.9}, {{0, 1}, 0.1}, {{1, 1}, 0.4}};
  const MatchMatrix c = point_estimate(post);
  CHECK(c.size() == 1);
  CHECK(c.contains(0, 0));
}
