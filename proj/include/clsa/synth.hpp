#pragma once

#include <cstdint>
#include <filesystem>

namespace clsa::synth {

// Small MovieLens-format corpus (u.data, u.user, u.occupation,
// zip_coords.csv) with bursty per-item request rates. Rates are scaled so
// the expected number of ratings is `target_events`.
struct SynthSpec {
  int users = 60;
  int items = 40;
  int days = 30;
  int target_events = 450;
  std::uint64_t seed = 1;
};

// Returns the number of ratings written.
std::size_t write_corpus(const std::filesystem::path& dir, const SynthSpec& spec);

}  // namespace clsa::synth
