#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "featmerge/matching.hpp"
#include "featmerge/network.hpp"
#include "featmerge/toytrain.hpp"

namespace oracle {

using namespace featmerge;

// Double loop over raw weight layouts: producer [d, ...] rows, then bias,
// then each consumer [out, d * slice] (linear) or [out, d, kh, kw] (conv).
inline std::vector<double> naive_distances(const Network& net, std::size_t producer, bool bias) {
    const Tensor& w = net.weight(producer);
    const std::size_t d = w.dim(0);
    const std::size_t row = w.size() / d;
    const Tensor* b = net.bias(producer);
    const MergeablePosition pos = find_position(net, producer);
    std::vector<double> out(d * d, 0.0);
    for (std::size_t m = 0; m < d; ++m) {
        for (std::size_t n = 0; n < d; ++n) {
            if (m == n) continue;
            double acc = 0.0;
            for (std::size_t k = 0; k < row; ++k) {
                const double diff = w[m * row + k] - w[n * row + k];
                acc += diff * diff;
            }
            if (bias && b) {
                const double diff = (*b)[m] - (*b)[n];
                acc += diff * diff;
            }
            for (const ConsumerBlock& c : pos.consumers) {
                const Tensor& v = net.weight(c.layer);
                const std::size_t outs = v.dim(0);
                const std::size_t slice = v.size() / (outs * d);
                for (std::size_t o = 0; o < outs; ++o) {
                    for (std::size_t s = 0; s < slice; ++s) {
                        const double diff = v[(o * d + m) * slice + s] - v[(o * d + n) * slice + s];
                        acc += diff * diff;
                    }
                }
            }
            out[m * d + n] = acc;
        }
    }
    return out;
}

inline bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
    }
    return true;
}

inline double loss_with(const Network& net, const std::string& name, std::size_t i, double value, const Tensor& x,
                        std::span<const std::int64_t> labels) {
    auto params = net.params();
    params[name][i] = value;
    return loss_and_gradients(Network(net.input_shape(), net.layers(), params), x, labels).loss;
}

// Largest relative gap between analytic and central-difference gradients
// over `probes` randomly chosen parameter entries (all entries when 0).
inline double gradient_error(const Network& net, const Tensor& x, std::span<const std::int64_t> labels,
                             std::size_t probes, std::mt19937_64& rng) {
    const LossGradients g = loss_and_gradients(net, x, labels);
    std::vector<std::pair<std::string, std::size_t>> entries;
    for (const auto& [name, t] : net.params())
        for (std::size_t i = 0; i < t.size(); ++i) entries.emplace_back(name, i);
    if (probes > 0) {
        std::shuffle(entries.begin(), entries.end(), rng);
        entries.resize(std::min(probes, entries.size()));
    }
    constexpr double h = 1e-5;
    double worst = 0.0;
    for (const auto& [name, i] : entries) {
        const double p = net.params().at(name)[i];
        const double fd = (loss_with(net, name, i, p + h, x, labels) - loss_with(net, name, i, p - h, x, labels)) / (2 * h);
        const double an = g.grads.at(name)[i];
        worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
    }
    return worst;
}

}  // namespace oracle
