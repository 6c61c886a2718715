#include <cmath>

#include "poly/clf.hpp"

namespace poly::clf {

std::size_t warmup_steps(std::size_t total_steps, double warmup_proportion) {
  // the epsilon keeps e.g. 0.07 * 100 from ceiling to 8
  const double exact = warmup_proportion * static_cast<double>(total_steps);
  return static_cast<std::size_t>(std::ceil(exact - 1e-9));
}

double learning_rate_at(std::size_t step, std::size_t total_steps, double peak,
                        double warmup_proportion) {
  if (total_steps == 0 || step == 0 || step > total_steps) return 0.0;
  const std::size_t warm = warmup_steps(total_steps, warmup_proportion);
  if (step <= warm) return peak * static_cast<double>(step) / static_cast<double>(warm);
  return peak * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warm);
}

}  // namespace poly::clf
