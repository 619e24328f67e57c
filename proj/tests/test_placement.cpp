#include "clsa/placement.hpp"
#include "support.hpp"

#include <doctest.h>

#include <memory>

using namespace clsa;
using clsa::testing::event;

namespace {

model::ClsaModel small_net() {
  model::ModelConfig c;
  c.feature_dim = 8;
  c.n_obs = 4;
  c.encoder_dim = 6;
  c.decoder_dim = 6;
  c.mlp_dim = 4;
  c.t_total = 12;
  return model::ClsaModel(c, 9);
}

std::vector<ingest::RequestEvent> events() {
  std::vector<ingest::RequestEvent> ev;
  Rng rng(2);
  for (int i = 0; i < 120; ++i) {
    auto e = event(1 + static_cast<int>(uniform_index(rng, 9)), static_cast<int>(uniform_index(rng, 20)));
    e.raw_time += i;
    for (auto& f : e.features) f = standard_normal(rng);
    ev.push_back(e);
  }
  return ev;
}

}  // namespace

TEST_CASE("placement scores ignore events on or after the placement day") {
  const auto ev = events();
  placement::CifPredictor full(small_net(), ev);
  for (int day : {5, 11, 17}) {
    std::vector<ingest::RequestEvent> past;
    for (const auto& e : ev)
      if (e.day <= day - 1) past.push_back(e);
    placement::CifPredictor truncated(small_net(), past);
    const auto a = full(day);
    const auto b = truncated(day);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].content_id == b[i].content_id);
      CHECK(a[i].score == b[i].score);
    }
    CHECK(full(day).size() == a.size());  // memoized call agrees
  }
}

TEST_CASE("single content trace hits after the first placement day") {
  std::vector<ingest::RequestEvent> ev;
  for (int d = 0; d < 6; ++d) ev.push_back(event(7, d));
  const auto trace = placement::trace_from_events(ev);
  auto predictor = std::make_shared<placement::CifPredictor>(small_net(), ev);
  const auto r = cachesim::replay(trace, [predictor] {
    return std::make_unique<cachesim::PlacementCache>(1, [predictor](int d) { return (*predictor)(d); });
  });
  // Day 0 has no history, so nothing is placed; every later day hits.
  CHECK(r.per_day.front().hits == 0);
  CHECK(r.hits == 5);
  CHECK(r.total == 6);
}

TEST_CASE("trace follows raw time") {
  auto a = event(1, 3), b = event(2, 1), c = event(3, 2);
  const auto t = placement::trace_from_events({a, b, c});
  CHECK(t[0].content_id == 2);
  CHECK(t[1].content_id == 3);
  CHECK(t[2].content_id == 1);
}
