#include "clsa/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace clsa::ingest {
namespace {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const std::string tmp(s);
  char* end = nullptr;
  out = std::strtod(tmp.c_str(), &end);
  return end == tmp.c_str() + tmp.size() && std::isfinite(out);
}

[[noreturn]] void fail_line(std::size_t line_no, const std::string& what) {
  throw InputError("line " + std::to_string(line_no) + ": " + what);
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

struct MeanStd {
  double mean = 0.0;
  double std = 1.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  double sum = 0.0;
  for (double x : v) sum += x;
  r.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  r.std = sd > 0.0 ? sd : 1.0;
  return r;
}

}  // namespace

FeatureLayout FeatureLayout::from_vocabulary(std::vector<std::string> occupations) {
  FeatureLayout layout;
  layout.occupations = std::move(occupations);
  return layout;
}

std::size_t FeatureLayout::occupation_index(const std::string& name) const {
  const auto it = std::find(occupations.begin(), occupations.end(), name);
  if (it == occupations.end()) throw InputError("unknown occupation '" + name + "'");
  return static_cast<std::size_t>(it - occupations.begin());
}

std::uint64_t FeatureLayout::hash() const {
  std::string key = "gender2|";
  for (const auto& o : occupations) key += o + ",";
  key += "|age|rating|lat|lon|gap";
  return fnv1a(key);
}

nlohmann::json FeatureLayout::to_json() const {
  return {{"total_dim", total_dim()},
          {"occupations", occupations},
          {"segments",
           {{"gender", {kGenderOffset, kGenderWidth}},
            {"occupation", {kOccupationOffset, occupation_width()}},
            {"age", {age_offset(), 1}},
            {"rating", {rating_offset(), 1}},
            {"latitude", {latitude_offset(), 1}},
            {"longitude", {longitude_offset(), 1}},
            {"gap", {gap_offset(), 1}}}},
          {"hash", hash()}};
}

FeatureLayout FeatureLayout::from_json(const nlohmann::json& j) {
  return from_vocabulary(j.at("occupations").get<std::vector<std::string>>());
}

ZipLookup::ZipLookup(std::map<std::string, GeoPoint> table) : table_(std::move(table)) {
  if (table_.empty()) return;
  double lat = 0.0, lon = 0.0;
  for (const auto& [zip, p] : table_) {
    lat += p.latitude;
    lon += p.longitude;
  }
  const auto n = static_cast<double>(table_.size());
  centroid_ = {lat / n, lon / n};
}

ZipLookup ZipLookup::load(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::map<std::string, GeoPoint> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty()) continue;
    if (line_no == 1 && t.substr(0, 3) == "zip") continue;
    const auto fields = split(t, ',');
    if (fields.size() != 3) fail_line(line_no, "expected 3 fields");
    GeoPoint p;
    if (!parse_double(fields[1], p.latitude) || !parse_double(fields[2], p.longitude))
      fail_line(line_no, "non-numeric coordinate");
    table[std::string(trim(fields[0]))] = p;
  }
  return ZipLookup(std::move(table));
}

GeoPoint zip_to_coords(const std::string& zip, const ZipLookup& lookup, std::size_t* misses) {
  const auto it = lookup.table().find(zip);
  if (it != lookup.table().end()) return it->second;
  if (misses) ++*misses;
  return lookup.centroid();
}

nlohmann::json ScalingStats::to_json() const {
  return {{"age", {{"mean", age_mean}, {"std", age_std}}},
          {"latitude", {{"mean", latitude_mean}, {"std", latitude_std}}},
          {"longitude", {{"mean", longitude_mean}, {"std", longitude_std}}},
          {"gap", {{"mean", gap_mean}, {"std", gap_std}}},
          {"rating", {{"min", rating_min}, {"max", rating_max}}}};
}

ScalingStats ScalingStats::from_json(const nlohmann::json& j) {
  ScalingStats s;
  s.age_mean = j.at("age").at("mean");
  s.age_std = j.at("age").at("std");
  s.latitude_mean = j.at("latitude").at("mean");
  s.latitude_std = j.at("latitude").at("std");
  s.longitude_mean = j.at("longitude").at("mean");
  s.longitude_std = j.at("longitude").at("std");
  s.gap_mean = j.at("gap").at("mean");
  s.gap_std = j.at("gap").at("std");
  s.rating_min = j.at("rating").at("min");
  s.rating_max = j.at("rating").at("max");
  return s;
}

std::vector<RatingRecord> parse_ratings(std::istream& in) {
  std::vector<RatingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), '\t');
    if (f.size() != 4) fail_line(line_no, "expected 4 fields");
    RatingRecord r;
    if (!parse_int(f[0], r.user_id) || !parse_int(f[1], r.item_id) ||
        !parse_int(f[2], r.rating) || !parse_int(f[3], r.timestamp))
      fail_line(line_no, "non-integer field");
    if (r.user_id <= 0 || r.item_id <= 0) fail_line(line_no, "ids must be positive");
    if (r.rating < 1 || r.rating > 5) fail_line(line_no, "rating outside [1,5]");
    if (r.timestamp <= 0) fail_line(line_no, "timestamp must be positive");
    out.push_back(r);
  }
  return out;
}

std::vector<RatingRecord> parse_ratings(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  try {
    return parse_ratings(in);
  } catch (const InputError& e) {
    throw InputError(path.filename().string() + " " + e.what());
  }
}

std::vector<std::string> parse_occupations(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::vector<std::string> parse_occupations(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_occupations(in);
}

std::vector<UserRecord> parse_users(std::istream& in,
                                    const std::vector<std::string>& occupation_vocab) {
  std::vector<UserRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), '|');
    if (f.size() != 5) fail_line(line_no, "expected 5 fields");
    UserRecord u;
    if (!parse_int(f[0], u.user_id) || u.user_id <= 0) fail_line(line_no, "bad user id");
    if (!parse_int(f[1], u.age) || u.age <= 0) fail_line(line_no, "non-integer age");
    if (f[2] == "M") {
      u.gender = Gender::kMale;
    } else if (f[2] == "F") {
      u.gender = Gender::kFemale;
    } else {
      fail_line(line_no, "gender must be M or F");
    }
    u.occupation = std::string(trim(f[3]));
    if (std::find(occupation_vocab.begin(), occupation_vocab.end(), u.occupation) ==
        occupation_vocab.end())
      fail_line(line_no, "unknown occupation '" + u.occupation + "'");
    u.zip = std::string(trim(f[4]));
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<UserRecord> parse_users(const std::filesystem::path& path,
                                    const std::vector<std::string>& occupation_vocab) {
  auto in = open_or_throw(path);
  try {
    return parse_users(in, occupation_vocab);
  } catch (const InputError& e) {
    throw InputError(path.filename().string() + " " + e.what());
  }
}

EncodedDataset join_and_encode(const std::vector<RatingRecord>& ratings,
                               const std::vector<UserRecord>& users,
                               const FeatureLayout& layout, const ZipLookup& lookup) {
  EncodedDataset out;
  out.layout = layout;
  out.report.ratings = ratings.size();
  out.report.users = users.size();
  if (ratings.empty()) return out;

  struct UserInfo {
    const UserRecord* record;
    GeoPoint coords;
  };
  std::unordered_map<int, UserInfo> by_id;
  for (const auto& u : users) {
    by_id[u.user_id] = {&u, zip_to_coords(u.zip, lookup, &out.report.geocode_misses)};
  }

  // Sort by (item, timestamp); stable so equal keys keep file order.
  std::vector<std::size_t> order(ratings.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = ratings[a];
    const auto& rb = ratings[b];
    if (ra.item_id != rb.item_id) return ra.item_id < rb.item_id;
    return ra.timestamp < rb.timestamp;
  });

  std::int64_t min_ts = ratings.front().timestamp;
  for (const auto& r : ratings) min_ts = std::min(min_ts, r.timestamp);
  out.day0 = midnight_utc(min_ts);

  const std::size_t n = ratings.size();
  std::vector<const UserInfo*> who(n);
  std::vector<int> days(n), gaps(n);
  std::vector<double> ages, lats, lons, gap_values;
  ages.reserve(n);
  lats.reserve(n);
  lons.reserve(n);
  gap_values.reserve(n);
  double rmin = 5.0, rmax = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& r = ratings[order[k]];
    const auto it = by_id.find(r.user_id);
    if (it == by_id.end())
      throw InputError("rating references missing user " + std::to_string(r.user_id));
    who[k] = &it->second;
    days[k] = static_cast<int>((r.timestamp - out.day0) / kSecondsPerDay);
    const bool first_of_content = k == 0 || ratings[order[k - 1]].item_id != r.item_id;
    gaps[k] = first_of_content ? 0 : days[k] - days[k - 1];
    ages.push_back(who[k]->record->age);
    lats.push_back(who[k]->coords.latitude);
    lons.push_back(who[k]->coords.longitude);
    gap_values.push_back(gaps[k]);
    rmin = std::min<double>(rmin, r.rating);
    rmax = std::max<double>(rmax, r.rating);
  }

  const auto age_s = mean_std(ages), lat_s = mean_std(lats), lon_s = mean_std(lons),
             gap_s = mean_std(gap_values);
  auto& sc = out.scaling;
  sc.age_mean = age_s.mean;
  sc.age_std = age_s.std;
  sc.latitude_mean = lat_s.mean;
  sc.latitude_std = lat_s.std;
  sc.longitude_mean = lon_s.mean;
  sc.longitude_std = lon_s.std;
  sc.gap_mean = gap_s.mean;
  sc.gap_std = gap_s.std;
  sc.rating_min = rmin;
  sc.rating_max = rmax;
  const double rating_span = rmax > rmin ? rmax - rmin : 1.0;

  out.events.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& r = ratings[order[k]];
    const auto& u = *who[k]->record;
    RequestEvent e;
    e.content_id = r.item_id;
    e.user_id = r.user_id;
    e.day = days[k];
    e.raw_time = r.timestamp;
    e.features.assign(layout.total_dim(), 0.0);
    e.features[FeatureLayout::kGenderOffset + (u.gender == Gender::kMale ? 0 : 1)] = 1.0;
    e.features[FeatureLayout::kOccupationOffset + layout.occupation_index(u.occupation)] = 1.0;
    e.features[layout.age_offset()] = (u.age - sc.age_mean) / sc.age_std;
    e.features[layout.rating_offset()] = (r.rating - rmin) / rating_span;
    e.features[layout.latitude_offset()] =
        (who[k]->coords.latitude - sc.latitude_mean) / sc.latitude_std;
    e.features[layout.longitude_offset()] =
        (who[k]->coords.longitude - sc.longitude_mean) / sc.longitude_std;
    e.features[layout.gap_offset()] = (gaps[k] - sc.gap_mean) / sc.gap_std;
    out.events.push_back(std::move(e));
  }
  out.report.events = out.events.size();
  return out;
}

void write_events(const std::filesystem::path& path, const std::vector<RequestEvent>& events) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& e : events) {
    nlohmann::json j = {{"content_id", e.content_id},
                        {"user_id", e.user_id},
                        {"day", e.day},
                        {"raw_time", e.raw_time},
                        {"features", e.features}};
    out << j.dump() << '\n';
  }
}

std::vector<RequestEvent> read_events(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<RequestEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RequestEvent e;
      e.content_id = j.at("content_id");
      e.user_id = j.value("user_id", 0);
      e.day = j.at("day");
      e.raw_time = j.at("raw_time");
      e.features = j.at("features").get<std::vector<double>>();
      events.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw InputError(path.filename().string() + " line " + std::to_string(line_no) + ": " +
                       ex.what());
    }
  }
  return events;
}

nlohmann::json metadata_json(const EncodedDataset& data) {
  return {{"layout", data.layout.to_json()},
          {"scaling", data.scaling.to_json()},
          {"day0", data.day0},
          {"counts",
           {{"ratings", data.report.ratings},
            {"users", data.report.users},
            {"events", data.report.events}}},
          {"geocode_misses", data.report.geocode_misses}};
}

}  // namespace clsa::ingest
