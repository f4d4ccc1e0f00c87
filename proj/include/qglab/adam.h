// Copyright (c) 2026 the qglab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "qglab/kernels.h"

namespace qglab {

// Adam with bias-corrected moments. One state tracks one parameter vector;
// the trainer keeps a state per named parameter tensor.
template <class S>
struct AdamStateT {
    std::int64_t step = 0;
    std::vector<S> m;
    std::vector<S> v;
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S epsilon = S(1e-8);
    S learning_rate = S(1e-3);

    explicit AdamStateT(std::int64_t n = 0)
        : m(static_cast<std::size_t>(n), S(0)), v(static_cast<std::size_t>(n), S(0)) {}
};

template <class S>
void adam_step(std::span<S> params, std::span<const S> grads, AdamStateT<S>& state) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        state.m.size() != state.v.size()) {
        throw std::invalid_argument(
            "adam_step: params/grads/state lengths disagree (" +
            std::to_string(params.size()) + "/" + std::to_string(grads.size()) +
            "/" + std::to_string(state.m.size()) + ")");
    }
    state.step += 1;
    kernels::adam_update(params.data(), grads.data(), state.m.data(),
                         state.v.data(), static_cast<std::int64_t>(params.size()),
                         state.step, state.learning_rate, state.beta1,
                         state.beta2, state.epsilon);
}

using AdamState = AdamStateT<float>;

}  // namespace qglab
