#include "linksae/datamodel.hpp"
#include "linksae/errors.hpp"

#include <doctest.h>

using namespace linksae;

TEST_CASE("schema validation rejects tiny cardinalities and repeated names") {
  CHECK_NOTHROW(validate_schema({{"day", 31, true}, {"gender", 2, true}}));
  CHECK_THROWS_AS(validate_schema({{"day", 1, true}}), ConfigError);
  CHECK_THROWS_AS(validate_schema({{"day", 31, true}, {"day", 31, true}}), ConfigError);
}

TEST_CASE("file validation reports every kind of violation") {
  RecordFile f;
  f.ids = {"a", "b", "a"};
  f.keys = KeyMatrix(3, 2);
  f.keys << 1, 2, 3, kMissing, 1, 1;
  f.domain = {0, 1, 5};
  f.n_domains = 2;
  const KeySchema schema{{"x", 2, true}, {"z", 2, false}};
  const auto v = validate_file(f, schema);
  auto has = [&](Violation::Kind k) {
    return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.kind == k; });
  };
  CHECK(has(Violation::Kind::DuplicateId));
  CHECK(has(Violation::Kind::BadCategory));
  CHECK(has(Violation::Kind::MissingNotAllowed));
  CHECK(has(Violation::Kind::BadDomain));
}

TEST_CASE("matching matrix keeps links one-to-one and within domains") {
  MatchMatrix c(std::vector<int>{0, 0, 1}, std::vector<int>{0, 1, 1});
  c.link(0, 0);
  CHECK(c.contains(0, 0));
  CHECK_THROWS_AS(c.link(1, 0), std::invalid_argument);  // column taken
  CHECK_THROWS_AS(c.link(1, 1), std::invalid_argument);  // other domain
  c.link(2, 2);
  CHECK(c.size() == 2);
  CHECK(c.partner_of_col(2) == 2);
  c.unlink_row(0);
  CHECK(c.partner_of_row(0) == -1);
  CHECK(c.size() == 1);
  CHECK(c.check_invariants());
  const auto links = c.links();
  REQUIRE(links.size() == 1);
  CHECK(links[0] == Link{2, 2});
}

TEST_CASE("truth deck rejects duplicated records") {
  CHECK_THROWS_AS(TruthDeck({{0, 0}, {0, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(TruthDeck({{0, 0}, {1, 0}}), std::invalid_argument);
  const std::vector<int> d1{0, 1}, d2{1, 0};
  CHECK_THROWS_AS(TruthDeck({{0, 0}}, &d1, &d2), std::invalid_argument);
}

TEST_CASE("false and missed link rates") {
  MatchMatrix est(std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 0, 0, 0});
  est.link(0, 0);
  est.link(1, 2);
  est.link(2, 1);
  const TruthDeck truth({{0, 0}, {1, 1}, {2, 2}, {3, 3}});
  const LinkErrorRates r = link_error_rates(est, truth);
  CHECK(r.false_link_rate == doctest::Approx(2.0 / 3.0));
  CHECK(r.missed_link_rate == doctest::Approx(3.0 / 4.0));
  CHECK(r.n_declared == 3);

  MatchMatrix none(std::vector<int>{0}, std::vector<int>{0});
  const LinkErrorRates z = link_error_rates(none, TruthDeck({{0, 0}}));
  CHECK(z.no_declared_links);
  CHECK(z.false_link_rate == 0.0);
  CHECK(z.missed_link_rate == 1.0);
  CHECK_THROWS_AS(link_error_rates(none, TruthDeck()), std::invalid_argument);
}
