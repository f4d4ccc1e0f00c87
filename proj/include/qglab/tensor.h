// Copyright (c) 2026 the qglab authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor with tape-based reverse-mode autodiff.
//
// A TensorT is a value type: copies share the underlying data and gradient
// buffers. Data is written once, when the producing op runs, and treated as
// immutable afterwards. Ops record backward closures on a Tape; running the
// tape in reverse accumulates gradients into every tensor that requires them.
//
// Training uses float; a double instantiation exists for the
// finite-difference gradient checks.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "qglab/common.h"

namespace qglab {

template <class S>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape shape, S fill = S(0))
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<S>>(numel(shape_), fill)) {}

    static TensorT from(Shape shape, std::vector<S> values) {
        if (numel(shape) != static_cast<std::int64_t>(values.size())) {
            throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                        " does not match " +
                                        std::to_string(values.size()) + " values");
        }
        TensorT t;
        t.shape_ = std::move(shape);
        t.data_ = std::make_shared<std::vector<S>>(std::move(values));
        return t;
    }

    static TensorT scalar(S value) { return from({1}, {value}); }

    const Shape& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(std::int64_t i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }
    bool defined() const { return static_cast<bool>(data_); }

    S* data() { return data_->data(); }
    const S* data() const { return data_->data(); }
    const std::vector<S>& values() const { return *data_; }

    bool requires_grad() const { return static_cast<bool>(grad_); }

    // Allocates (zeroed) gradient storage; marks the tensor as a grad target.
    void enable_grad() {
        if (!grad_) grad_ = std::make_shared<std::vector<S>>(data_->size(), S(0));
    }

    void zero_grad() {
        if (grad_) std::fill(grad_->begin(), grad_->end(), S(0));
    }

    S* grad() { return grad_ ? grad_->data() : nullptr; }
    const S* grad() const { return grad_ ? grad_->data() : nullptr; }
    const std::vector<S>& grad_values() const { return *grad_; }

    // Shares the same data and grad buffers under a new shape. No tape node is
    // needed: gradients accumulate into the shared buffer.
    TensorT reshaped(Shape new_shape) const {
        if (numel(new_shape) != size()) {
            throw std::invalid_argument("reshape: " + shape_str(shape_) + " -> " +
                                        shape_str(new_shape) + " changes element count");
        }
        TensorT t;
        t.shape_ = std::move(new_shape);
        t.data_ = data_;
        t.grad_ = grad_;
        return t;
    }

    bool same_storage(const TensorT& other) const { return data_ == other.data_; }

private:
    Shape shape_;
    std::shared_ptr<std::vector<S>> data_;
    std::shared_ptr<std::vector<S>> grad_;
};

// Append-only record of backward closures. Creation order is a topological
// order of the computation, so running the closures in reverse implements
// reverse-mode accumulation.
template <class S>
class Tape {
public:
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

    std::size_t size() const { return nodes_.size(); }

    void run_backward() {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    void clear() { nodes_.clear(); }

private:
    std::vector<std::function<void()>> nodes_;
};

// Seeds d(loss)/d(loss) = 1 and runs the tape. `loss` must be a scalar
// produced by ops recorded on `tape`.
template <class S>
void backward(TensorT<S>& loss, Tape<S>& tape) {
    if (loss.size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw std::invalid_argument("backward: loss does not require grad");
    }
    loss.grad()[0] = S(1);
    tape.run_backward();
}

using Tensor = TensorT<float>;

}  // namespace qglab
