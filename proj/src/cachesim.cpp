#include "clsa/cachesim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace clsa::cachesim {

std::vector<MixtureComponent> default_mixture(double region) {
  return {{{0.25 * region, 0.30 * region}, 0.08 * region, 0.4},
          {{0.70 * region, 0.65 * region}, 0.10 * region, 0.35},
          {{0.40 * region, 0.80 * region}, 0.06 * region, 0.25}};
}

nlohmann::json Topology::to_json() const {
  auto pts = [](const std::vector<Point>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : v) a.push_back({p.x, p.y});
    return a;
  };
  return {{"faps", pts(faps)}, {"uavs", pts(uavs)}, {"users", pts(users)},
          {"assignment", assignment}};
}

std::vector<Point> kmeans(const std::vector<Point>& points, int k, Rng& rng) {
  if (k <= 0) throw InputError("k must be positive");
  if (points.size() < static_cast<std::size_t>(k)) throw InputError("fewer points than clusters");
  // k distinct starting indices by partial Fisher-Yates.
  std::vector<std::size_t> idx(points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (int c = 0; c < k; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    std::swap(idx[cu], idx[cu + uniform_index(rng, idx.size() - cu)]);
  }
  std::vector<Point> centers;
  for (int c = 0; c < k; ++c) centers.push_back(points[idx[static_cast<std::size_t>(c)]]);

  std::vector<int> label(points.size(), 0);
  for (int iter = 0; iter < 300; ++iter) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const auto& m = centers[static_cast<std::size_t>(c)];
        const double d = (points[i].x - m.x) * (points[i].x - m.x) +
                         (points[i].y - m.y) * (points[i].y - m.y);
        if (d < best) {
          best = d;
          label[i] = c;
        }
      }
    }
    std::vector<Point> sum(static_cast<std::size_t>(k));
    std::vector<long> count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto c = static_cast<std::size_t>(label[i]);
      sum[c].x += points[i].x;
      sum[c].y += points[i].y;
      ++count[c];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (count[c] == 0) continue;  // empty cluster keeps its centre
      const Point next{sum[c].x / count[c], sum[c].y / count[c]};
      shift = std::max(shift, std::hypot(next.x - centers[c].x, next.y - centers[c].y));
      centers[c] = next;
    }
    if (shift < 1e-9) break;
  }
  return centers;
}

Topology generate_topology(const TopologySpec& spec, std::uint64_t seed) {
  if (spec.n_fap <= 0 || spec.n_uav <= 0 || spec.n_users <= 0)
    throw InputError("node and user counts must be positive");
  if (spec.mixture.empty()) throw InputError("empty mixture spec");
  double wsum = 0.0;
  for (const auto& m : spec.mixture) {
    if (m.weight < 0.0 || m.stddev < 0.0) throw InputError("invalid mixture component");
    wsum += m.weight;
  }
  if (!(wsum > 0.0)) throw InputError("mixture weights sum to zero");

  Rng rng = make_rng(seed, "topology");
  Topology t;
  for (int i = 0; i < spec.n_fap; ++i)
    t.faps.push_back({uniform01(rng) * spec.region, uniform01(rng) * spec.region});
  for (int u = 0; u < spec.n_users; ++u) {
    double r = uniform01(rng) * wsum;
    std::size_t c = 0;
    while (c + 1 < spec.mixture.size() && r >= spec.mixture[c].weight) r -= spec.mixture[c++].weight;
    const auto& m = spec.mixture[c];
    const double x = m.mean.x + m.stddev * standard_normal(rng);
    const double y = m.mean.y + m.stddev * standard_normal(rng);
    t.users.push_back({std::clamp(x, 0.0, spec.region), std::clamp(y, 0.0, spec.region)});
  }
  t.uavs = kmeans(t.users, spec.n_uav, rng);

  for (const auto& u : t.users) {
    int best_node = 0;
    double best = std::numeric_limits<double>::infinity();
    int node = 0;
    for (const auto* group : {&t.faps, &t.uavs}) {
      for (const auto& p : *group) {
        const double d = std::hypot(u.x - p.x, u.y - p.y);
        if (d < best) {
          best = d;
          best_node = node;
        }
        ++node;
      }
    }
    t.assignment.push_back(best_node);
  }
  return t;
}

bool LruCache::request(int content, long) {
  const auto it = index_.find(content);
  if (it != index_.end()) {
    order_.splice(order_.begin(), order_, it->second);
    return true;
  }
  if (capacity_ == 0) return false;
  if (index_.size() >= capacity_) {
    index_.erase(order_.back());
    order_.pop_back();
  }
  order_.push_front(content);
  index_[content] = order_.begin();
  return false;
}

bool LfuCache::request(int content, long tick) {
  const auto it = entries_.find(content);
  if (it != entries_.end()) {
    order_.erase({it->second.frequency, it->second.recency, content});
    ++it->second.frequency;
    it->second.recency = tick;
    order_.insert({it->second.frequency, it->second.recency, content});
    return true;
  }
  if (capacity_ == 0) return false;
  if (entries_.size() >= capacity_) {
    const auto victim = *order_.begin();
    order_.erase(order_.begin());
    entries_.erase(std::get<2>(victim));
  }
  entries_[content] = {1, tick};
  order_.insert({1, tick, content});
  return false;
}

void PlacementCache::begin_day(int day) {
  stored_.clear();
  if (capacity_ == 0) return;
  const auto top = evaluation::rank_top_k(predict_(day), capacity_);
  if (top.shortfall) ++shortfall_days_;
  for (const auto& s : top.items) stored_.insert(s.content_id);
}

std::size_t capacity_for(double fraction, std::size_t library_size) {
  if (fraction < 0.0) throw InputError("capacity fraction must be non-negative");
  // Round the product to 1e-9 first so 0.1 * 1680 gives 168, not 169.
  const double raw = fraction * static_cast<double>(library_size);
  const double snapped = std::round(raw * 1e9) / 1e9;
  return static_cast<std::size_t>(std::ceil(snapped));
}

std::vector<TraceRequest> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<TraceRequest> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line_no == 1 && line.rfind("day", 0) == 0)) continue;
    std::istringstream ss(line);
    TraceRequest r;
    char c1 = 0, c2 = 0;
    if (!(ss >> r.day >> c1 >> r.user_id >> c2 >> r.content_id) || c1 != ',' || c2 != ',')
      throw InputError(path.filename().string() + " line " + std::to_string(line_no) +
                       ": expected day,user_id,content_id");
    out.push_back(r);
  }
  return out;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRequest>& trace) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "day,user_id,content_id\n";
  for (const auto& r : trace) out << r.day << ',' << r.user_id << ',' << r.content_id << '\n';
}

namespace {

void check_trace(const std::vector<TraceRequest>& trace) {
  if (trace.empty()) throw InputError("empty trace");
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i].day < trace[i - 1].day) throw InputError("trace is not sorted by day");
}

template <typename Route>
ReplayResult run(const std::vector<TraceRequest>& trace, std::vector<std::unique_ptr<Cache>>& caches,
                 Route route, int count_from) {
  check_trace(trace);
  if (trace.back().day < count_from) throw InputError("no requests on or after the first counted day");
  ReplayResult r;
  int day = trace.front().day - 1;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& q = trace[i];
    auto& cache = *caches[static_cast<std::size_t>(route(q))];
    if (q.day < count_from) {
      cache.request(q.content_id, static_cast<long>(i));
      r.max_occupancy = std::max(r.max_occupancy, cache.size());
      continue;
    }
    if (q.day != day) {
      day = q.day;
      for (auto& c : caches) c->begin_day(day);
      r.per_day.push_back({day, 0, 0});
    }
    const bool hit = cache.request(q.content_id, static_cast<long>(i));
    r.max_occupancy = std::max(r.max_occupancy, cache.size());
    r.hits += hit ? 1 : 0;
    ++r.total;
    r.per_day.back().hits += hit ? 1 : 0;
    ++r.per_day.back().total;
  }
  return r;
}

}  // namespace

ReplayResult replay(const std::vector<TraceRequest>& trace, const CacheFactory& make,
                    int count_from) {
  std::vector<std::unique_ptr<Cache>> caches;
  caches.push_back(make());
  return run(trace, caches, [](const TraceRequest&) { return 0; }, count_from);
}

ReplayResult replay_per_node(const std::vector<TraceRequest>& trace, const CacheFactory& make,
                             const std::unordered_map<int, int>& user_node, int nodes,
                             int count_from) {
  if (nodes <= 0) throw InputError("node count must be positive");
  std::vector<std::unique_ptr<Cache>> caches;
  for (int n = 0; n < nodes; ++n) caches.push_back(make());
  return run(trace, caches, [&](const TraceRequest& q) {
    const auto it = user_node.find(q.user_id);
    if (it == user_node.end())
      throw InputError("user " + std::to_string(q.user_id) + " has no caching node");
    return it->second;
  }, count_from);
}

std::unordered_map<int, int> map_users(const std::vector<TraceRequest>& trace,
                                       const Topology& topology) {
  std::set<int> ids;
  for (const auto& r : trace) ids.insert(r.user_id);
  if (ids.size() > topology.users.size())
    throw InputError("trace has " + std::to_string(ids.size()) + " users but topology has " +
                     std::to_string(topology.users.size()));
  std::unordered_map<int, int> out;
  std::size_t k = 0;
  for (int id : ids) out[id] = topology.assignment[k++];
  return out;
}

std::vector<double> parse_sweep(const std::string& spec) {
  auto num = [&spec](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw InputError("bad capacity fraction '" + spec + "'");
    return v;
  };
  const auto c1 = spec.find(':');
  if (c1 == std::string::npos) return {num(spec)};
  const auto c2 = spec.find(':', c1 + 1);
  if (c2 == std::string::npos) throw InputError("sweep must be start:stop:step");
  const double a = num(spec.substr(0, c1));
  const double b = num(spec.substr(c1 + 1, c2 - c1 - 1));
  const double s = num(spec.substr(c2 + 1));
  if (!(s > 0.0) || b < a) throw InputError("sweep needs start <= stop and a positive step");
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((b - a) / s + 0.5));
  for (long i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * s);
  return out;
}

}  // namespace clsa::cachesim
