// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/core.hpp"

#include <cmath>

namespace strata {

struct AdamWConfig {
    double learning_rate = 1e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamWState {
    Vector first_moment;
    Vector second_moment;
    long step = 0;

    void reset(Eigen::Index n) {
        first_moment = Vector::Zero(n);
        second_moment = Vector::Zero(n);
        step = 0;
    }
};

/// One AdamW update. Weight decay is decoupled: params shrink by
/// (1 - lr * wd) before the bias-corrected adaptive step is applied.
template <typename Derived>
void adamw_step(Eigen::MatrixBase<Derived>& params, const Vector& grads, AdamWState& state,
                const AdamWConfig& config) {
    if (state.first_moment.size() != params.size()) state.reset(params.size());
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);

    state.first_moment = config.beta1 * state.first_moment + (1.0 - config.beta1) * grads;
    state.second_moment = config.beta2 * state.second_moment + (1.0 - config.beta2) * grads.cwiseAbs2();

    params *= 1.0 - config.learning_rate * config.weight_decay;
    params.array() -= config.learning_rate * (state.first_moment.array() / correction1) /
                      ((state.second_moment.array() / correction2).sqrt() + config.eps);
}

}  // namespace strata
