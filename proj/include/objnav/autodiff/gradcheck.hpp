#pragma once

#include <map>
#include <string>

#include "objnav/autodiff/graph.hpp"

namespace objnav::ad {

struct ParameterCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_at_kink = 0;
  Index worst_index = -1;  // row-major coordinate of the largest error
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::map<std::string, ParameterCheck> per_parameter;
  double worst = 0.0;
  bool passed = true;
};

enum class Difference {
  kCentral,     // (f(θ+h) - f(θ-h)) / 2h
  kRichardson,  // (4 D(h/2) - D(h)) / 3 with D the central difference; O(h^4)
};

// Compares the reverse-mode gradient of `output` against central differences
// (f(θ+h) - f(θ-h)) / 2h, one coordinate at a time. The error is relative,
// |a - n| / max(|a|, |n|), falling back to the absolute difference when both
// magnitudes are below 1e-8. Coordinates whose perturbation flips a min/max/abs
// branch anywhere in the graph are skipped. The graph is restored on return.
GradCheckReport finite_difference_check(Graph& graph, Var output, double step, double tolerance,
                                        Difference scheme = Difference::kCentral);

}  // namespace objnav::ad
