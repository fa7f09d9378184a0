#include "linksae/linkage_fs.hpp"
#include "linksae/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

using namespace linksae;

namespace {

RecordFile make_file(std::vector<std::vector<int>> keys, std::vector<int> domain) {
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

}  // namespace

TEST_CASE("comparisons stay within domains and missing never agrees") {
  const RecordFile a = make_file({{1, 2}, {kMissing, 1}}, {0, 1});
  const RecordFile b = make_file({{1, 1}, {1, 1}, {2, 1}}, {0, 0, 1});
  const ComparisonSet cs = build_comparisons(a, b);
  REQUIRE(cs.pairs.size() == 3);
  CHECK(cs.pairs[0].pattern == 0b01u);
  CHECK(cs.pairs[2].row == 1);
  CHECK(cs.pairs[2].agree(0) == 0);
  CHECK(cs.pairs[2].agree(1) == 1);
  const std::vector<int> only_second{1};
  CHECK(build_comparisons(a, b, only_second).pairs[0].pattern == 0u);
}

TEST_CASE("likelihood ratio and posterior probability match hand values") {
  Vector m(2), u(2);
  m << 0.9, 0.8;
  u << 0.2, 0.5;
  Vector q(2);
  q << 1, 0;
  const double psi = likelihood_ratio(q, m, u);
  CHECK(psi == doctest::Approx(0.9 / 0.2 * 0.2 / 0.5));
  const double p = posterior_match_prob(psi, 0.1);
  CHECK(p == doctest::Approx(0.1 * psi / (0.9 + 0.1 * psi)));
  CHECK(posterior_match_prob_log(std::log(psi), 0.1) == doctest::Approx(p));
  CHECK(posterior_match_prob_log(800.0, 0.1) == doctest::Approx(1.0));
  CHECK(posterior_match_prob_log(-800.0, 0.1) == doctest::Approx(0.0));
}

TEST_CASE("greedy decisions are one-to-one by descending score") {
  std::vector<ScoredLink> s{{{0, 0}, 0.9}, {{0, 1}, 0.95}, {{1, 1}, 0.8}, {{1, 0}, 0.7}, {{2, 2}, 0.4}};
  const MatchMatrix c = decide_links(s, {0, 0, 0}, {0, 0, 0}, 0.5);
  CHECK(c.contains(0, 1));
  CHECK(c.contains(1, 0));
  CHECK(c.partner_of_row(2) == -1);
  CHECK(c.size() == 2);
}

TEST_CASE("equal scores break ties by row then column") {
  std::vector<ScoredLink> s{{{1, 0}, 0.9}, {{0, 0}, 0.9}};
  const MatchMatrix c = decide_links(s, {0, 0}, {0}, 0.5);
  CHECK(c.contains(0, 0));
}

TEST_CASE("EM log-likelihood never decreases and parameters stay clamped") {
  Rng rng(11);
  std::vector<std::pair<std::uint32_t, double>> counts;
  std::map<std::uint32_t, double> tally;
  for (int i = 0; i < 20000; ++i) {
    const bool match = rng.uniform() < 0.2;
    std::uint32_t pat = 0;
    const double pm[3] = {0.95, 0.9, 0.99}, pu[3] = {0.05, 0.2, 0.5};
    for (int l = 0; l < 3; ++l) {
      if (rng.uniform() < (match ? pm[l] : pu[l])) pat |= 1u << l;
    }
    tally[pat] += 1.0;
  }
  counts.assign(tally.begin(), tally.end());
  const FsModel fit = fit_em(counts, default_fs_init(3, 2000, 2000, 20000), 1e-10, 2000);
  CHECK(fit.converged);
  for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
    CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1] - 1e-8);
  }
  CHECK(fit.m.maxCoeff() <= 1.0 - kFsClamp);
  CHECK(fit.u.minCoeff() >= kFsClamp);
}

TEST_CASE("a single agreement pattern is flagged degenerate") {
  const std::vector<std::pair<std::uint32_t, double>> counts{{0b11u, 50.0}};
  const FsModel fit = fit_em(counts, default_fs_init(2, 10, 10, 50));
  CHECK(fit.degenerate);
}

TEST_CASE("error-free unique keys link perfectly") {
  Rng rng(31);
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> keys;
  while (keys.size() < 200) {
    std::vector<int> k{1 + static_cast<int>(rng.index(20)), 1 + static_cast<int>(rng.index(20)),
                       1 + static_cast<int>(rng.index(10))};
    if (seen.insert(k).second) keys.push_back(k);
  }
  const RecordFile a = make_file(keys, std::vector<int>(200, 0));
  const RecordFile b = make_file(keys, std::vector<int>(200, 0));
  const FsRun run = run_fellegi_sunter(a, b, FsRunOptions{});
  CHECK(run.matches.size() == 200);
  for (int i = 0; i < 200; ++i) CHECK(run.matches.contains(i, i));
}
