#pragma once

#include "clsa/windows.hpp"
#include "support.hpp"

#include <vector>

namespace clsa::testing {

// Six contents, evaluation day 8, four requests per window.
//   c1: 6 7 8 8 | 9     four requests inside a 3-day window, requested on day 9
//   c2: 3 5 7 8 | 10    four requests inside a 6-day window, quiet on day 9
//   c3: 7 8 | 9         fewer than four requests, requested on day 8
//   c4: 1 2 4 6 7       at least four requests, none on day 8
//   c5: 5               fewer than four requests, none on day 8
//   c6: | 9 10          nothing up to day 8
inline std::vector<ingest::RequestEvent> worked_example_events() {
  const std::vector<std::pair<int, std::vector<int>>> days{
      {1, {6, 7, 8, 8, 9}}, {2, {3, 5, 7, 8, 10}}, {3, {7, 8, 9}},
      {4, {1, 2, 4, 6, 7}}, {5, {5}},              {6, {9, 10}}};
  std::vector<ingest::RequestEvent> out;
  for (const auto& [c, ds] : days)
    for (int d : ds) out.push_back(event(c, d));
  return out;
}

}  // namespace clsa::testing
