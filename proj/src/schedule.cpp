#include <cmath>

#include "wwm/jepa.hpp"

namespace wwm {

double lr_schedule(std::size_t step, std::size_t total_steps,
                   std::size_t warmup_steps, double lr_start, double lr_peak,
                   double lr_final) {
  if (warmup_steps > 0 && step < warmup_steps)
    return lr_start + (lr_peak - lr_start) * static_cast<double>(step) /
                          static_cast<double>(warmup_steps);
  if (step >= total_steps) return lr_final;
  const double span = static_cast<double>(total_steps - warmup_steps);
  const double x = span > 0 ? static_cast<double>(step - warmup_steps) / span : 1.0;
  return lr_final +
         (lr_peak - lr_final) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * x));
}

}  // namespace wwm
