#pragma once

#include "clsa/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

namespace clsa::ingest {

struct RatingRecord {
  int user_id = 0;
  int item_id = 0;
  int rating = 0;
  std::int64_t timestamp = 0;

  bool operator==(const RatingRecord&) const = default;
};

enum class Gender { kMale, kFemale };

struct UserRecord {
  int user_id = 0;
  int age = 0;
  Gender gender = Gender::kMale;
  std::string occupation;
  std::string zip;

  bool operator==(const UserRecord&) const = default;
};

// Column layout of an encoded request feature vector:
//   [gender one-hot (2) | occupation one-hot (|vocab|) | age | rating |
//    latitude | longitude | inter-request gap]
// With the 21 MovieLens occupations the total is 28.
struct FeatureLayout {
  std::vector<std::string> occupations;

  static constexpr std::size_t kGenderOffset = 0;
  static constexpr std::size_t kGenderWidth = 2;
  static constexpr std::size_t kOccupationOffset = 2;

  static FeatureLayout from_vocabulary(std::vector<std::string> occupations);

  std::size_t occupation_width() const { return occupations.size(); }
  std::size_t age_offset() const { return kOccupationOffset + occupations.size(); }
  std::size_t rating_offset() const { return age_offset() + 1; }
  std::size_t latitude_offset() const { return age_offset() + 2; }
  std::size_t longitude_offset() const { return age_offset() + 3; }
  std::size_t gap_offset() const { return age_offset() + 4; }
  std::size_t total_dim() const { return age_offset() + 5; }

  std::size_t occupation_index(const std::string& name) const;
  std::uint64_t hash() const;

  nlohmann::json to_json() const;
  static FeatureLayout from_json(const nlohmann::json& j);

  bool operator==(const FeatureLayout&) const = default;
};

struct GeoPoint {
  double latitude = 0.0;
  double longitude = 0.0;

  bool operator==(const GeoPoint&) const = default;
};

// ZIP -> coordinates table loaded from a `zip,lat,lon` CSV.
class ZipLookup {
 public:
  ZipLookup() = default;
  explicit ZipLookup(std::map<std::string, GeoPoint> table);

  static ZipLookup load(const std::filesystem::path& path);

  const std::map<std::string, GeoPoint>& table() const { return table_; }
  // Mean of every known coordinate; (0,0) when the table is empty.
  GeoPoint centroid() const { return centroid_; }

 private:
  std::map<std::string, GeoPoint> table_;
  GeoPoint centroid_;
};

struct IngestReport {
  std::size_t ratings = 0;
  std::size_t users = 0;
  std::size_t events = 0;
  std::size_t geocode_misses = 0;
};

// Exact lookup hit, or the table centroid with `misses` incremented.
GeoPoint zip_to_coords(const std::string& zip, const ZipLookup& lookup,
                       std::size_t* misses = nullptr);

struct ScalingStats {
  double age_mean = 0.0, age_std = 1.0;
  double latitude_mean = 0.0, latitude_std = 1.0;
  double longitude_mean = 0.0, longitude_std = 1.0;
  double gap_mean = 0.0, gap_std = 1.0;
  double rating_min = 1.0, rating_max = 5.0;

  nlohmann::json to_json() const;
  static ScalingStats from_json(const nlohmann::json& j);
};

struct RequestEvent {
  int content_id = 0;
  int user_id = 0;
  int day = 0;
  std::int64_t raw_time = 0;
  std::vector<double> features;
};

struct EncodedDataset {
  std::vector<RequestEvent> events;  // sorted by (content_id, raw_time)
  FeatureLayout layout;
  ScalingStats scaling;
  std::int64_t day0 = 0;  // unix seconds of midnight UTC before the first rating
  IngestReport report;
};

std::vector<RatingRecord> parse_ratings(std::istream& in);
std::vector<RatingRecord> parse_ratings(const std::filesystem::path& path);

std::vector<std::string> parse_occupations(std::istream& in);
std::vector<std::string> parse_occupations(const std::filesystem::path& path);

std::vector<UserRecord> parse_users(std::istream& in,
                                    const std::vector<std::string>& occupation_vocab);
std::vector<UserRecord> parse_users(const std::filesystem::path& path,
                                    const std::vector<std::string>& occupation_vocab);

EncodedDataset join_and_encode(const std::vector<RatingRecord>& ratings,
                               const std::vector<UserRecord>& users,
                               const FeatureLayout& layout, const ZipLookup& lookup);

constexpr std::int64_t kSecondsPerDay = 86400;

inline std::int64_t midnight_utc(std::int64_t unix_seconds) {
  std::int64_t d = unix_seconds / kSecondsPerDay;
  if (unix_seconds % kSecondsPerDay < 0) --d;
  return d * kSecondsPerDay;
}

// Events file: one JSON object per line {content_id, user_id, day, raw_time, features}.
void write_events(const std::filesystem::path& path, const std::vector<RequestEvent>& events);
std::vector<RequestEvent> read_events(const std::filesystem::path& path);

nlohmann::json metadata_json(const EncodedDataset& data);

}  // namespace clsa::ingest
