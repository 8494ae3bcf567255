#ifndef TOXCTX_SCHEDULE_H_
#define TOXCTX_SCHEDULE_H_

#include <cstddef>

namespace toxctx {

// Half-period cosine decay: initial_lr * 0.5 * (1 + cos(pi * step / period)).
// With the default period of twice the run length the rate ends at half the
// initial value instead of zero.
double CosineLr(double initial_lr, std::size_t step, std::size_t total_steps,
                std::size_t period_steps);

inline double CosineLr(double initial_lr, std::size_t step,
                       std::size_t total_steps) {
  return CosineLr(initial_lr, step, total_steps, 2 * total_steps);
}

}  // namespace toxctx

#endif  // TOXCTX_SCHEDULE_H_
