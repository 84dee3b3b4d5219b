#pragma once

// Index arithmetic shared by permutation, matching and merge surgery.
//
// A producer weight is viewed as [dim, row] (one row per output feature,
// flattened over inputs and kernel taps). A consumer weight is viewed as
// [out, dim, slice] where slice is the number of columns each feature owns:
// the spatial block for Linear-after-Flatten, kh*kw for Conv2d.

#include <cstddef>

#include "featmerge/network.hpp"

namespace featmerge::detail {

struct ProducerView {
    std::size_t dim = 0;
    std::size_t row = 0;
};

struct ConsumerView {
    std::size_t out = 0;
    std::size_t dim = 0;
    std::size_t slice = 0;

    std::size_t index(std::size_t o, std::size_t f, std::size_t s) const noexcept {
        return (o * dim + f) * slice + s;
    }
};

inline ProducerView producer_view(const Network& net, const MergeablePosition& pos) {
    const Tensor& w = net.weight(pos.producer);
    return {pos.dim, w.size() / pos.dim};
}

inline ConsumerView consumer_view(const Network& net, const MergeablePosition& pos, const ConsumerBlock& c) {
    const LayerSpec& spec = net.layer(c.layer);
    const Tensor& w = net.weight(c.layer);
    std::size_t slice = spec.kind == LayerKind::Conv2d ? spec.kernel_h * spec.kernel_w : c.block;
    return {w.dim(0), pos.dim, slice};
}

}  // namespace featmerge::detail
