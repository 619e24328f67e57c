#pragma once

#include "clsa/cachesim.hpp"
#include "clsa/evaluation.hpp"
#include "clsa/ingest.hpp"
#include "clsa/model.hpp"

#include <map>
#include <utility>
#include <vector>

namespace clsa::placement {

// Scores every content for day `d` with the CIF predicted from its window at
// tau = d - 1, so only events up to the previous day are used. Results are
// memoized per day.
class CifPredictor {
 public:
  CifPredictor(model::ClsaModel net, std::vector<ingest::RequestEvent> events);

  std::vector<evaluation::ScoredContent> operator()(int day);

 private:
  model::ClsaModel net_;
  std::vector<ingest::RequestEvent> events_;  // sorted by (content_id, raw_time)
  std::vector<std::pair<std::size_t, std::size_t>> spans_;
  std::map<int, std::vector<evaluation::ScoredContent>> memo_;
};

// Requests in time order (ties keep the input order).
std::vector<cachesim::TraceRequest> trace_from_events(const std::vector<ingest::RequestEvent>& events);

}  // namespace clsa::placement
