#pragma once

#include <cmath>
#include <string>

#include "depthfill/core/errors.hpp"

namespace depthfill::train {

// Poly policy: base * (1 - iter/max_iter)^power, applied per iteration.
inline double poly_lr(double base_lr, long long iter, long long max_iter, double power) {
    if (max_iter <= 0) throw ScheduleError("poly_lr: max_iter must be positive");
    if (iter < 0 || iter > max_iter) {
        throw ScheduleError("poly_lr: iteration " + std::to_string(iter) + " outside [0, " +
                            std::to_string(max_iter) + "]");
    }
    const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
    return base_lr * std::pow(frac, power);
}

// Constant until decay_start, then linear to exactly 0 at `total`.
inline double linear_decay_lr(double base_lr, long long epoch, long long decay_start,
                              long long total) {
    if (total <= 0 || decay_start < 0 || decay_start >= total) {
        throw ScheduleError("linear_decay_lr: require 0 <= decay_start < total");
    }
    if (epoch < 0 || epoch > total) {
        throw ScheduleError("linear_decay_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(total) + "]");
    }
    if (epoch < decay_start) return base_lr;
    return base_lr * static_cast<double>(total - epoch) / static_cast<double>(total - decay_start);
}

}  // namespace depthfill::train
