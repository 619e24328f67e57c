#include "clsa/placement.hpp"

#include "clsa/training.hpp"
#include "clsa/windows.hpp"

#include <algorithm>
#include <numeric>

namespace clsa::placement {

CifPredictor::CifPredictor(model::ClsaModel net, std::vector<ingest::RequestEvent> events)
    : net_(std::move(net)), events_(std::move(events)) {
  std::stable_sort(events_.begin(), events_.end(), [](const auto& a, const auto& b) {
    return a.content_id != b.content_id ? a.content_id < b.content_id : a.raw_time < b.raw_time;
  });
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= events_.size(); ++i)
    if (i == events_.size() || events_[i].content_id != events_[begin].content_id) {
      spans_.push_back({begin, i});
      begin = i;
    }
}

std::vector<evaluation::ScoredContent> CifPredictor::operator()(int day) {
  const auto hit = memo_.find(day);
  if (hit != memo_.end()) return hit->second;
  const int tau = day - 1;
  std::vector<windows::ContentWindow> built;
  for (const auto& [b, e] : spans_) {
    const std::span<const ingest::RequestEvent> content(events_.data() + b, e - b);
    auto w = windows::build_window(content, tau, net_.config().n_obs, static_cast<long>(b));
    if (w) built.push_back(std::move(*w));
  }
  std::vector<const windows::ContentWindow*> ptrs;
  for (const auto& w : built) ptrs.push_back(&w);
  const auto cif = training::predict_cif(net_, ptrs);
  std::vector<evaluation::ScoredContent> scores;
  for (std::size_t i = 0; i < built.size(); ++i) scores.push_back({built[i].content_id, cif[i]});
  memo_[day] = scores;
  return scores;
}

std::vector<cachesim::TraceRequest> trace_from_events(
    const std::vector<ingest::RequestEvent>& events) {
  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return events[a].raw_time < events[b].raw_time;
  });
  std::vector<cachesim::TraceRequest> trace;
  trace.reserve(events.size());
  for (auto i : order) trace.push_back({events[i].day, events[i].user_id, events[i].content_id});
  return trace;
}

}  // namespace clsa::placement
