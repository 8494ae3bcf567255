#include "toxctx/schedule.h"

#include <cmath>
#include <numbers>

#include "toxctx/error.h"

namespace toxctx {

double CosineLr(double initial_lr, std::size_t step, std::size_t total_steps,
                std::size_t period_steps) {
  if (step > total_steps) {
    throw Error(ErrorKind::kInput, "scheduler step beyond the last step");
  }
  if (period_steps == 0) return initial_lr;
  // Fraction first: step / period is exact at the half period, so the
  // final rate is exactly half the initial one.
  const double fraction =
      static_cast<double>(step) / static_cast<double>(period_steps);
  return initial_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * fraction));
}

}  // namespace toxctx
