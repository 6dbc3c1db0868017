#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ocrrestore/neural/params.hpp"

namespace ocrrestore {
namespace neural {

// Central-difference comparison of analytic gradients in a ParamStore.
//
// `run` must (a) be deterministic given identical parameter values — any
// randomness (dropout, sampling) must be re-seeded identically inside it —
// and (b) return the scalar loss; when `fill_grads` is true it must also
// leave d(loss)/d(param) in the store's grad buffers.
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  Index checked = 0;
};

inline GradCheckReport gradient_check(
    ParamStore<double>& store, const std::function<double(bool fill_grads)>& run,
    double h = 1e-5, Index max_checks_per_param = -1) {
  store.zero_grads();
  (void)run(true);
  // Snapshot analytic grads; the probe runs below overwrite nothing but we
  // keep them safe regardless.
  std::vector<Tensor<double>> analytic;
  analytic.reserve(store.entries().size());
  for (const auto& e : store.entries()) analytic.push_back(e.grad);

  GradCheckReport report;
  constexpr double kFloor = 1e-6;
  for (std::size_t pi = 0; pi < store.entries().size(); ++pi) {
    auto& e = store.entries()[pi];
    const Index n = e.value.numel();
    const Index stride =
        (max_checks_per_param > 0 && n > max_checks_per_param) ? n / max_checks_per_param : 1;
    for (Index j = 0; j < n; j += stride) {
      const double saved = e.value.at(j);
      e.value.at(j) = saved + h;
      const double lp = run(false);
      e.value.at(j) = saved - h;
      const double lm = run(false);
      e.value.at(j) = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[pi].at(j);
      const double rel = std::abs(a - numeric) / std::max(kFloor, std::abs(a) + std::abs(numeric));
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = e.name;
        report.worst_index = j;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace neural
}  // namespace ocrrestore
