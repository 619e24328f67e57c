#include "clsa/ingest.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace clsa;
using namespace clsa::ingest;

namespace {

std::vector<std::string> vocab() {
  return {"administrator", "artist",    "doctor",    "educator",  "engineer",
          "entertainment", "executive", "healthcare", "homemaker", "lawyer",
          "librarian",     "marketing", "none",      "other",     "programmer",
          "retired",       "salesman",  "scientist", "student",   "technician",
          "writer"};
}

std::string what_of(auto&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("parse_ratings") {
  std::istringstream one("196\t242\t3\t881250949\n");
  const auto r = parse_ratings(one);
  REQUIRE(r.size() == 1);
  CHECK(r[0] == RatingRecord{196, 242, 3, 881250949});

  std::istringstream empty("");
  CHECK(parse_ratings(empty).empty());

  std::istringstream bad("196\t242\t3\n");
  CHECK(what_of([&] { parse_ratings(bad); }).find("line 1: expected 4 fields") !=
        std::string::npos);

  std::istringstream order("1\t2\t3\t10\n4\t5\t1\t5\n");
  const auto o = parse_ratings(order);
  CHECK(o[0].user_id == 1);
  CHECK(o[1].user_id == 4);
}

TEST_CASE("parse_users") {
  std::istringstream one("1|24|M|technician|85711\n");
  const auto u = parse_users(one, vocab());
  REQUIRE(u.size() == 1);
  CHECK(u[0] == UserRecord{1, 24, Gender::kMale, "technician", "85711"});

  std::istringstream empty("");
  CHECK(parse_users(empty, vocab()).empty());

  std::istringstream wizard("1|24|M|wizard|85711\n");
  CHECK(what_of([&] { parse_users(wizard, vocab()); }).find("unknown occupation") !=
        std::string::npos);

  std::istringstream age("1|x|M|technician|85711\n");
  CHECK(what_of([&] { parse_users(age, vocab()); }).find("line 1") != std::string::npos);
}

TEST_CASE("layout has 28 columns for the standard vocabulary") {
  const auto layout = FeatureLayout::from_vocabulary(vocab());
  CHECK(layout.total_dim() == 28);
  CHECK(layout.gap_offset() == 27);
  CHECK(FeatureLayout::from_json(layout.to_json()) == layout);
  CHECK(layout.hash() == FeatureLayout::from_json(layout.to_json()).hash());
}

TEST_CASE("zip_to_coords") {
  ZipLookup direct({{"z", {40.0, -74.0}}});
  CHECK(zip_to_coords("z", direct) == GeoPoint{40.0, -74.0});

  ZipLookup two({{"a", {0.0, 0.0}}, {"b", {2.0, 2.0}}});
  std::size_t misses = 0;
  CHECK(zip_to_coords("99999", two, &misses) == GeoPoint{1.0, 1.0});
  CHECK(zip_to_coords("T8H1N", two, &misses) == GeoPoint{1.0, 1.0});
  CHECK(misses == 2);
}

TEST_CASE("zip table loads from csv") {
  const auto path = std::filesystem::temp_directory_path() / "clsa_zip_test.csv";
  {
    std::ofstream out(path);
    out << "zip,lat,lon\n85711,32.2,-110.9\n";
  }
  const auto lookup = ZipLookup::load(path);
  CHECK(lookup.table().at("85711").latitude == doctest::Approx(32.2));
  std::filesystem::remove(path);
}

TEST_CASE("join_and_encode") {
  const auto layout = FeatureLayout::from_vocabulary(vocab());
  const std::vector<UserRecord> users{{1, 24, Gender::kMale, "technician", "a"},
                                      {2, 53, Gender::kFemale, "writer", "b"}};
  ZipLookup zips({{"a", {0.0, 0.0}}, {"b", {2.0, 2.0}}});
  const std::int64_t base = 881250949;
  const std::vector<RatingRecord> ratings{{2, 7, 5, base + 3 * kSecondsPerDay},
                                          {1, 7, 1, base},
                                          {1, 9, 3, base + 100},
                                          {2, 9, 4, base + 200}};
  const auto data = join_and_encode(ratings, users, layout, zips);
  REQUIRE(data.events.size() == 4);
  CHECK(data.events[0].content_id == 7);
  CHECK(data.events[0].raw_time == base);
  CHECK(data.events[1].content_id == 7);
  CHECK(data.events[2].content_id == 9);

  for (const auto& e : data.events) {
    REQUIRE(e.features.size() == 28);
    const double g = e.features[0] + e.features[1];
    double occ = 0.0;
    for (std::size_t i = 2; i < 23; ++i) occ += e.features[i];
    CHECK(g == 1.0);
    CHECK(occ == 1.0);
  }

  // Second request of content 7 is 3 days after the first.
  const double gap_std = data.scaling.gap_std;
  const double raw_gap = data.events[1].features[layout.gap_offset()] * gap_std + data.scaling.gap_mean;
  CHECK(raw_gap == doctest::Approx(3.0));
  CHECK(data.events[1].day - data.events[0].day == 3);
  // 100 s apart on the same day share a day index.
  CHECK(data.events[2].day == data.events[0].day);

  CHECK(data.events[0].features[layout.rating_offset()] == 0.0);
  CHECK(data.events[1].features[layout.rating_offset()] == 1.0);

  const auto again = join_and_encode(ratings, users, layout, zips);
  for (std::size_t i = 0; i < 4; ++i) CHECK(again.events[i].features == data.events[i].features);

  auto orphan = ratings;
  orphan.push_back({3, 7, 2, base});
  CHECK_THROWS_AS(join_and_encode(orphan, users, layout, zips), InputError);
}

TEST_CASE("events round trip") {
  std::vector<RequestEvent> events{{1, 5, 0, 100, {1.0, 0.5}}, {2, 6, 3, 400, {0.0, -1.25}}};
  const auto path = std::filesystem::temp_directory_path() / "clsa_events_test.jsonl";
  write_events(path, events);
  const auto back = read_events(path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].features == events[1].features);
  CHECK(back[1].day == 3);
  CHECK(back[0].user_id == 5);
  std::filesystem::remove(path);
}
