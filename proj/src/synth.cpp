#include "clsa/synth.hpp"

#include "clsa/common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace clsa::synth {

namespace {

const char* const kOccupations[] = {
    "administrator", "artist",    "doctor",     "educator",  "engineer",  "entertainment",
    "executive",     "healthcare", "homemaker", "lawyer",    "librarian", "marketing",
    "none",          "other",     "programmer", "retired",   "salesman",  "scientist",
    "student",       "technician", "writer"};

// Knuth's method on engine bits.
int poisson(Rng& rng, double lambda) {
  const double limit = std::exp(-lambda);
  int k = 0;
  double p = uniform01(rng);
  while (p > limit) {
    ++k;
    p *= uniform01(rng);
  }
  return k;
}

struct Rating {
  int user, item, rating;
  std::int64_t ts;
};

}  // namespace

std::size_t write_corpus(const std::filesystem::path& dir, const SynthSpec& spec) {
  if (spec.users <= 0 || spec.items <= 0 || spec.days <= 1 || spec.target_events <= 0)
    throw InputError("synthetic corpus sizes must be positive");
  std::filesystem::create_directories(dir);
  Rng rng = make_rng(spec.seed, "synth");

  std::ofstream occ(dir / "u.occupation");
  for (const char* o : kOccupations) occ << o << '\n';

  const int n_zip = 12;
  std::ofstream zips(dir / "zip_coords.csv");
  zips << "zip,lat,lon\n";
  std::vector<std::string> zip_codes;
  for (int z = 0; z < n_zip; ++z) {
    const std::string code = std::to_string(10000 + 7919 * z % 89999);
    zip_codes.push_back(code);
    zips << code << ',' << 30.0 + 15.0 * uniform01(rng) << ',' << -120.0 + 45.0 * uniform01(rng)
         << '\n';
  }

  std::ofstream users(dir / "u.user");
  for (int u = 1; u <= spec.users; ++u) {
    const int age = 15 + static_cast<int>(uniform_index(rng, 50));
    const char gender = uniform01(rng) < 0.7 ? 'M' : 'F';
    const char* o = kOccupations[uniform_index(rng, std::size(kOccupations))];
    // One user in ten has a ZIP missing from the table.
    const std::string zip =
        u % 10 == 0 ? "T8H1N" : zip_codes[uniform_index(rng, zip_codes.size())];
    users << u << '|' << age << '|' << gender << '|' << o << '|' << zip << '\n';
  }

  // Each item has a popularity level and a few burst days.
  std::vector<double> base(static_cast<std::size_t>(spec.items));
  std::vector<std::set<int>> bursts(static_cast<std::size_t>(spec.items));
  for (int i = 0; i < spec.items; ++i) {
    base[static_cast<std::size_t>(i)] = std::pow(uniform01(rng), 2.0);
    const int nb = static_cast<int>(uniform_index(rng, 4));
    for (int b = 0; b < nb; ++b) {
      const int start = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(spec.days)));
      for (int d = start; d < std::min(spec.days, start + 3); ++d)
        bursts[static_cast<std::size_t>(i)].insert(d);
    }
  }
  double mass = 0.0;
  for (int i = 0; i < spec.items; ++i)
    for (int d = 0; d < spec.days; ++d)
      mass += base[static_cast<std::size_t>(i)] +
              (bursts[static_cast<std::size_t>(i)].count(d) ? 1.0 : 0.0);
  const double scale = spec.target_events / std::max(mass, 1e-9);

  const std::int64_t t0 = 874724710;
  std::vector<Rating> ratings;
  for (int d = 0; d < spec.days; ++d) {
    for (int i = 0; i < spec.items; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      const double lambda = scale * (base[iu] + (bursts[iu].count(d) ? 1.0 : 0.0));
      const int n = poisson(rng, lambda);
      for (int k = 0; k < n; ++k) {
        const int user = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(spec.users)));
        const int rating = 1 + static_cast<int>(uniform_index(rng, 5));
        const std::int64_t ts = t0 + static_cast<std::int64_t>(d) * 86400 +
                                static_cast<std::int64_t>(uniform_index(rng, 86400));
        ratings.push_back({user, i + 1, rating, ts});
      }
    }
  }
  std::sort(ratings.begin(), ratings.end(),
            [](const Rating& a, const Rating& b) { return a.ts < b.ts; });

  std::ofstream data(dir / "u.data");
  for (const auto& r : ratings)
    data << r.user << '\t' << r.item << '\t' << r.rating << '\t' << r.ts << '\n';
  return ratings.size();
}

}  // namespace clsa::synth
