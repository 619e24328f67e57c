#pragma once

#include "clsa/common.hpp"
#include "clsa/model.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace clsa::evaluation {

std::vector<int> classify(std::span<const double> cif_values, double threshold = 0.5);

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;  // truth count
};

struct Confusion {
  std::array<std::array<long, 2>, 2> counts{};  // [truth][prediction]
  std::array<std::array<double, 2>, 2> rates{};  // row-normalized, in percent
  std::array<bool, 2> row_defined{};             // false when the truth class is absent

  long total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }
};

struct MetricsReport {
  int fold = 0;
  int n_obs = 0;
  double accuracy = 0.0;
  std::array<ClassStats, 2> classes;
  Confusion confusion;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

Confusion confusion(std::span<const int> pred, std::span<const int> truth);
// Undefined precision/recall (class absent) is reported as 0 with a warning.
MetricsReport metrics(std::span<const int> pred, std::span<const int> truth);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single value
};
Summary summarize(std::span<const double> values);

struct ScoredContent {
  int content_id = 0;
  double score = 0.0;
};

struct TopK {
  std::vector<ScoredContent> items;  // descending score, ties by ascending id
  bool shortfall = false;            // fewer candidates than K
};

TopK rank_top_k(std::vector<ScoredContent> scores, std::size_t k);

// One row per window: content_id, tau, y, z_0..z_{d-1}.
void write_embeddings_csv(std::ostream& out, const model::ClsaModel& net,
                          std::span<const windows::ContentWindow* const> windows,
                          std::size_t batch_size = 256);

void write_confusion_csv(std::ostream& out, const std::vector<MetricsReport>& reports);

}  // namespace clsa::evaluation
