#include "clsa/evaluation.hpp"

#include <doctest.h>

#include <cmath>

using namespace clsa;
using namespace clsa::evaluation;

TEST_CASE("classify threshold") {
  const std::vector<double> f{0.7, 0.5, 0.49};
  CHECK(classify(f) == std::vector<int>{1, 1, 0});
}

TEST_CASE("metrics hand counts") {
  const std::vector<int> perfect{1, 0, 1, 0};
  auto m = metrics(perfect, perfect);
  CHECK(m.accuracy == 1.0);
  CHECK(m.classes[0].f1 == 1.0);
  CHECK(m.classes[1].f1 == 1.0);

  const std::vector<int> pred{1, 0, 1, 0}, truth{1, 0, 0, 0};
  m = metrics(pred, truth);
  CHECK(m.accuracy == 0.75);
  CHECK(m.classes[1].precision == 0.5);
  CHECK(m.classes[1].recall == 1.0);
  const auto& c = m.confusion.counts;
  CHECK(static_cast<double>(c[0][0] + c[1][1]) / m.confusion.total() == m.accuracy);

  const std::vector<int> zeros{0, 0, 0, 0}, mixed{1, 0, 1, 0};
  m = metrics(zeros, mixed);
  CHECK(m.classes[1].recall == 0.0);
  CHECK(m.classes[1].precision == 0.0);
  CHECK_FALSE(m.warnings.empty());

  CHECK_THROWS_AS(metrics(std::vector<int>{}, std::vector<int>{}), InputError);
}

TEST_CASE("confusion rows") {
  const std::vector<int> truth{0, 0, 1, 1}, pred{0, 1, 1, 1};
  const auto c = confusion(pred, truth);
  CHECK(c.rates[0][1] == 50.0);
  CHECK(c.rates[1][0] == 0.0);
  const auto p = confusion(truth, truth);
  CHECK(p.rates[0][1] == 0.0);
  CHECK(p.rates[1][0] == 0.0);
  const std::vector<int> ones{1, 1};
  const auto single = confusion(ones, ones);
  CHECK(single.row_defined[1]);
  CHECK_FALSE(single.row_defined[0]);
}

TEST_CASE("summary") {
  const std::vector<double> v{0.9, 0.8, 1.0, 0.7, 0.6};
  const auto s = summarize(v);
  CHECK(s.mean == doctest::Approx(0.8));
  CHECK(s.stddev == doctest::Approx(std::sqrt(0.025)));
}

TEST_CASE("rank_top_k") {
  auto top = rank_top_k({{1, 0.9}, {2, 0.1}, {3, 0.5}}, 2);
  REQUIRE(top.items.size() == 2);
  CHECK(top.items[0].content_id == 1);
  CHECK(top.items[1].content_id == 3);
  CHECK_FALSE(top.shortfall);

  top = rank_top_k({{2, 0.5}, {1, 0.5}}, 1);
  CHECK(top.items[0].content_id == 1);

  top = rank_top_k({{2, 0.5}, {1, 0.5}}, 5);
  CHECK(top.items.size() == 2);
  CHECK(top.shortfall);

  // Order is unchanged by a strictly increasing transform.
  std::vector<ScoredContent> s{{1, 0.2}, {2, 0.7}, {3, 0.4}, {4, 0.9}};
  auto t = s;
  for (auto& x : t) x.score = std::exp(3.0 * x.score) - 7.0;
  const auto a = rank_top_k(s, 3), b = rank_top_k(t, 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.items[i].content_id == b.items[i].content_id);
}
