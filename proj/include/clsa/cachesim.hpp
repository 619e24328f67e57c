#pragma once

#include "clsa/common.hpp"
#include "clsa/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <limits>
#include <list>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace clsa::cachesim {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct MixtureComponent {
  Point mean;
  double stddev = 1.0;
  double weight = 1.0;
};

struct TopologySpec {
  double region = 1000.0;  // side of the square region
  int n_fap = 4;
  int n_uav = 2;
  int n_users = 943;
  std::vector<MixtureComponent> mixture;
};

// Default mixture: three clusters inside the region.
std::vector<MixtureComponent> default_mixture(double region);

struct Topology {
  std::vector<Point> faps;
  std::vector<Point> users;
  std::vector<Point> uavs;
  std::vector<int> assignment;  // user -> node; nodes are faps then uavs

  int node_count() const { return static_cast<int>(faps.size() + uavs.size()); }
  nlohmann::json to_json() const;
};

// Lloyd iterations from k distinct seeded starting points until the largest
// centroid shift is below 1e-9 or 300 iterations.
std::vector<Point> kmeans(const std::vector<Point>& points, int k, Rng& rng);

Topology generate_topology(const TopologySpec& spec, std::uint64_t seed);

// ---- Cache policies -------------------------------------------------------

class Cache {
 public:
  virtual ~Cache() = default;
  // Serves one request; returns whether it hit.
  virtual bool request(int content, long tick) = 0;
  // Day boundary hook for proactive policies.
  virtual void begin_day(int /*day*/) {}
  virtual std::size_t size() const = 0;
  virtual std::size_t capacity() const = 0;
  virtual bool contains(int content) const = 0;
};

class LruCache : public Cache {
 public:
  explicit LruCache(std::size_t capacity) : capacity_(capacity) {}
  bool request(int content, long tick) override;
  std::size_t size() const override { return index_.size(); }
  std::size_t capacity() const override { return capacity_; }
  bool contains(int content) const override { return index_.count(content) > 0; }

 private:
  std::size_t capacity_;
  std::list<int> order_;  // front = most recent
  std::unordered_map<int, std::list<int>::iterator> index_;
};

// In-cache LFU: counts reset on eviction; ties evict the least recently used.
class LfuCache : public Cache {
 public:
  explicit LfuCache(std::size_t capacity) : capacity_(capacity) {}
  bool request(int content, long tick) override;
  std::size_t size() const override { return entries_.size(); }
  std::size_t capacity() const override { return capacity_; }
  bool contains(int content) const override { return entries_.count(content) > 0; }

 private:
  struct Entry {
    long frequency = 0;
    long recency = 0;
  };
  std::size_t capacity_;
  std::unordered_map<int, Entry> entries_;
  std::set<std::tuple<long, long, int>> order_;  // (frequency, recency, content)
};

// Holds every content; the upper bound.
class OptimalCache : public Cache {
 public:
  bool request(int, long) override { return true; }
  std::size_t size() const override { return 0; }
  std::size_t capacity() const override { return static_cast<std::size_t>(-1); }
  bool contains(int) const override { return true; }
};

// Proactive placement: at each day boundary the stored set is replaced by
// the Top-K contents returned by `predict(day)`.
class PlacementCache : public Cache {
 public:
  using Predictor = std::function<std::vector<evaluation::ScoredContent>(int day)>;
  PlacementCache(std::size_t capacity, Predictor predict)
      : capacity_(capacity), predict_(std::move(predict)) {}
  bool request(int content, long) override { return stored_.count(content) > 0; }
  void begin_day(int day) override;
  std::size_t size() const override { return stored_.size(); }
  std::size_t capacity() const override { return capacity_; }
  bool contains(int content) const override { return stored_.count(content) > 0; }
  std::size_t shortfall_days() const { return shortfall_days_; }

 private:
  std::size_t capacity_;
  Predictor predict_;
  std::unordered_set<int> stored_;
  std::size_t shortfall_days_ = 0;
};

// K = ceil(fraction * library size), computed without floating drift.
std::size_t capacity_for(double fraction, std::size_t library_size);

// ---- Replay ---------------------------------------------------------------

struct TraceRequest {
  int day = 0;
  int user_id = 0;
  int content_id = 0;
};

std::vector<TraceRequest> read_trace_csv(const std::filesystem::path& path);
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRequest>& trace);

struct DayHits {
  int day = 0;
  long hits = 0;
  long total = 0;
};

struct ReplayResult {
  long hits = 0;
  long total = 0;
  std::vector<DayHits> per_day;
  std::size_t max_occupancy = 0;  // largest cache size seen at any tick

  double ratio() const { return total ? static_cast<double>(hits) / total : 0.0; }
};

using CacheFactory = std::function<std::unique_ptr<Cache>()>;

// Requests before `count_from` warm reactive caches but are not counted, and
// proactive placement starts on that day.
inline constexpr int kCountAll = std::numeric_limits<int>::min();

// Aggregate mode: one cache serves the trace.
ReplayResult replay(const std::vector<TraceRequest>& trace, const CacheFactory& make,
                    int count_from = kCountAll);
// Per-node mode: each request is served by the cache of its user's node.
// `user_node` maps user id -> node index.
ReplayResult replay_per_node(const std::vector<TraceRequest>& trace, const CacheFactory& make,
                             const std::unordered_map<int, int>& user_node, int nodes,
                             int count_from = kCountAll);

// Users (sorted by id) mapped onto topology users in order.
std::unordered_map<int, int> map_users(const std::vector<TraceRequest>& trace,
                                       const Topology& topology);

// "a:b:s" -> a, a+s, ..., b (inclusive within half a step); a single number -> {a}.
std::vector<double> parse_sweep(const std::string& spec);

}  // namespace clsa::cachesim
