#include "objnav/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "objnav/common/errors.hpp"

namespace objnav::ad {

GradCheckReport finite_difference_check(Graph& graph, Var output, double step, double tolerance, Difference scheme) {
  if (!(step > 0.0)) throw ContractError("finite_difference_check: step must be positive");

  graph.replay();
  const GradientReport analytic = gradient(graph, output);
  const std::vector<std::uint8_t> base_signature = graph.branch_signature();

  GradCheckReport report;
  for (const auto& [name, id] : graph.parameters()) {
    const Matrix original = graph.value(id);
    const Matrix& grad = analytic.gradients.at(name);
    const std::size_t from = graph.first_consumer(id);
    ParameterCheck check;

    Matrix probe = original;
    // f at θ_k + offset; sets `kink` when any branch differs from the unperturbed pass.
    auto at = [&](Index k, double offset, bool& kink) {
      probe.data()[k] = original.data()[k] + offset;
      graph.bind_parameter(name, probe);
      graph.replay(from);
      kink = kink || graph.branch_signature() != base_signature;
      return graph.value(output.id)(0, 0);
    };
    for (Index k = 0; k < probe.size(); ++k) {
      bool kink = false;
      const double central = (at(k, step, kink) - at(k, -step, kink)) / (2.0 * step);
      double numeric = central;
      if (scheme == Difference::kRichardson) {
        const double half = (at(k, step / 2, kink) - at(k, -step / 2, kink)) / step;
        numeric = (4.0 * half - central) / 3.0;
      }
      probe.data()[k] = original.data()[k];
      if (kink) {
        ++check.skipped_at_kink;
        continue;
      }

      const double exact = grad.data()[k];
      const double scale = std::max(std::abs(numeric), std::abs(exact));
      const double err = scale < 1e-8 ? std::abs(numeric - exact) : std::abs(numeric - exact) / scale;
      if (err > check.max_relative_error || check.worst_index < 0) {
        check.max_relative_error = err;
        check.worst_index = k;
        check.worst_analytic = exact;
        check.worst_numeric = numeric;
      }
      ++check.checked;
    }

    graph.bind_parameter(name, original);
    graph.replay(from);
    report.worst = std::max(report.worst, check.max_relative_error);
    report.per_parameter[name] = check;
  }
  report.passed = report.worst < tolerance;
  return report;
}

}  // namespace objnav::ad
