#pragma once

#include <utility>
#include <vector>

#include "objnav/autodiff/graph.hpp"

namespace objnav::objectives {

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (slot, annotation), ascending by slot
  std::vector<int> unmatched;              // slots without an annotation
  double cost = 0.0;                       // sum of matched costs, accumulated in slot order
};

// Minimum-cost assignment of maximum cardinality min(K, N) for a K x N cost
// matrix (Kuhn-Munkres with potentials). Among optimal assignments the
// lexicographically smallest pair list is returned.
Assignment hungarian(const ad::Matrix& cost);

}  // namespace objnav::objectives
