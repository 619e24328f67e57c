#pragma once

#include "clsa/common.hpp"
#include "clsa/ingest.hpp"
#include "clsa/windows.hpp"

#include <vector>

namespace clsa::testing {

// Window with `real` random rows at the end, days increasing by 0..2 per row.
inline windows::ContentWindow random_window(Rng& rng, int n_obs, int dim, int real, int y,
                                            int content_id = 1) {
  windows::ContentWindow w;
  w.content_id = content_id;
  w.x = Matrix::Zero(n_obs, dim);
  w.t.assign(static_cast<std::size_t>(n_obs), 0);
  w.pad_mask.assign(static_cast<std::size_t>(n_obs), 0);
  w.event_index.assign(static_cast<std::size_t>(n_obs), -1);
  int day = 3 + static_cast<int>(uniform_index(rng, 3));
  const int pad = n_obs - real;
  for (int r = pad; r < n_obs; ++r) {
    if (r > pad) day += static_cast<int>(uniform_index(rng, 3));
    for (int c = 0; c < dim; ++c) w.x(r, c) = standard_normal(rng);
    w.t[static_cast<std::size_t>(r)] = day;
    w.pad_mask[static_cast<std::size_t>(r)] = 1;
    w.event_index[static_cast<std::size_t>(r)] = r;
  }
  for (int r = 0; r < pad; ++r) w.t[static_cast<std::size_t>(r)] = w.t[static_cast<std::size_t>(pad)];
  w.t_last = day;
  w.tau = day + static_cast<int>(uniform_index(rng, 2));
  w.y = y;
  return w;
}

inline ingest::RequestEvent event(int content, int day, int dim = 8) {
  ingest::RequestEvent e;
  e.content_id = content;
  e.day = day;
  e.raw_time = static_cast<std::int64_t>(day) * ingest::kSecondsPerDay;
  e.features.assign(static_cast<std::size_t>(dim), static_cast<double>(day));
  return e;
}

}  // namespace clsa::testing

namespace clsa::testing {

// Windows whose label is 1 iff the mean of feature 0 over real rows is
// positive; feature width 8 (one occupation). With `fixed_span` every window
// is full with one request per day ending the day before tau, so all windows
// sit at the same place on the survival grid.
inline windows::PreparedDataset toy_dataset(int n, int n_obs, std::uint64_t seed, int k = 0,
                                            bool fixed_span = false) {
  windows::PreparedDataset ds;
  ds.n_obs = n_obs;
  ds.t_study = 1;
  ds.layout = ingest::FeatureLayout::from_vocabulary({"a"});
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const int real = fixed_span ? n_obs
                                : 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n_obs)));
    auto w = random_window(rng, n_obs, 8, real, 0, i + 1);
    if (fixed_span) {
      for (int r = 0; r < n_obs; ++r) w.t[static_cast<std::size_t>(r)] = 10 + r;
      w.t_last = 10 + n_obs - 1;
      w.tau = w.t_last + 1;
    }
    const double shift = i % 2 == 0 ? 1.0 : -1.0;
    for (int r = n_obs - real; r < n_obs; ++r) w.x(r, 0) += shift;
    w.y = w.x.col(0).sum() > 0.0 ? 1 : 0;
    ds.windows.push_back(std::move(w));
  }
  ds.t_total = windows::compute_t_total(ds.windows, ds.t_study);
  if (k > 0) {
    ds.k = k;
    ds.fold_seed = seed;
    ds.folds = windows::kfold_split(ds, k, seed);
  }
  return ds;
}

}  // namespace clsa::testing
