#pragma once

#include "clsa/common.hpp"
#include "clsa/ingest.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace clsa::windows {

// Fixed-length observational window of one content ending at day `tau`.
// Rows are ordered oldest to newest; padded rows form a prefix and are zero.
struct ContentWindow {
  int content_id = 0;
  int tau = 0;
  Matrix x;                         // n_obs x feature_dim
  std::vector<int> t;               // day of each row; padded rows repeat the first real day
  std::vector<std::uint8_t> pad_mask;  // 1 = real event, 0 = padding
  std::vector<long> event_index;    // row -> index into the events table, -1 for padding
  int y = 0;
  int t_last = 0;                   // day of the newest real event

  int n_obs() const { return static_cast<int>(t.size()); }
  int real_count() const;
  int first_real_index() const { return n_obs() - real_count(); }
  // Earliest real day; anchors the survival grid.
  int first_day() const { return t[static_cast<std::size_t>(first_real_index())]; }
  // Days covered by the observational window, inclusive of both ends.
  int span() const { return tau - first_day() + 1; }
};

struct TauRange {
  int first = 0;
  int last = 0;  // inclusive
  int stride = 1;
};

struct PreparedDataset {
  std::vector<ContentWindow> windows;
  int n_obs = 0;
  int t_study = 1;
  int t_total = 0;
  ingest::FeatureLayout layout;
  ingest::ScalingStats scaling;
  std::vector<int> folds;  // per window, 1..k; empty until kfold_split
  int k = 0;
  std::uint64_t fold_seed = 0;

  std::size_t positives() const;
};

// `content_events` holds one content's events sorted by time; `base_index` is
// the position of its first element in the global events table.
std::optional<ContentWindow> build_window(std::span<const ingest::RequestEvent> content_events,
                                          int tau, int n_obs, long base_index = 0);

int label_window(std::span<const ingest::RequestEvent> content_events, int tau, int t_study);

// Every day from the first event day to (last event day - t_study).
TauRange default_tau_range(std::span<const ingest::RequestEvent> events, int t_study,
                           int stride = 1);

// `events` sorted by (content_id, raw_time). Output ordered by (content_id, tau).
PreparedDataset build_dataset(std::span<const ingest::RequestEvent> events, int n_obs,
                              const TauRange& taus, int t_study);

// Largest span plus the study window.
int compute_t_total(const std::vector<ContentWindow>& windows, int t_study);

// Training subset `indices` balanced by duplicating minority-class members
// drawn uniformly at random. Returns originals followed by duplicates.
std::vector<std::size_t> oversample_indices(const std::vector<ContentWindow>& windows,
                                            const std::vector<std::size_t>& indices,
                                            std::uint64_t seed);

// Balances every fold except `holdout_fold` (0 = balance all folds).
// Duplicates keep their fold id and are appended after the originals.
PreparedDataset oversample(const PreparedDataset& dataset, std::uint64_t seed,
                           int holdout_fold = 0);

// Stratified shuffled assignment into folds 1..k.
std::vector<int> kfold_split(const PreparedDataset& dataset, int k, std::uint64_t seed);

// windows.jsonl + dataset.json in `dir`. Feature rows are stored by
// reference to the events table and rebuilt on load.
void write_prepared(const std::filesystem::path& dir, const PreparedDataset& dataset);
PreparedDataset read_prepared(const std::filesystem::path& dir,
                              std::span<const ingest::RequestEvent> events);

}  // namespace clsa::windows
