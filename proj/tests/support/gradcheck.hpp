// Central finite-difference gradient checks, 64-bit. Independent of the
// backward implementation it verifies.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "wwm/autodiff.hpp"

namespace testsupport {

using wwm::ad::Var;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// leaves: parameters to perturb (must have requires_grad).
// forward: rebuilds the graph from current leaf values, returns scalar loss.
inline GradCheckResult grad_check(std::vector<Var<double>> leaves,
                                  const std::function<Var<double>()>& forward,
                                  double h = 1e-6) {
  for (auto& l : leaves) l->zero_grad();
  auto loss = forward();
  wwm::ad::backward(loss);
  std::vector<wwm::Tensor<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& l : leaves) analytic.push_back(l->grad_or_zeros());

  GradCheckResult res;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& t = leaves[li]->val;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = t.v[i];
      const double step = h * std::max(1.0, std::fabs(orig));
      t.v[i] = orig + step;
      const double fp = forward()->val.v[0];
      t.v[i] = orig - step;
      const double fm = forward()->val.v[0];
      t.v[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[li].v[i];
      const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      res.max_rel_err = std::max(res.max_rel_err, std::fabs(a - numeric) / denom);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace testsupport
