#include "featmerge/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "featmerge/error.hpp"
#include "random.hpp"

namespace featmerge {

std::vector<double> default_alphas() {
    std::vector<double> a;
    for (int i = 0; i <= 10; ++i) a.push_back(i / 10.0);
    return a;
}

namespace {

void check_partition(const MergeRecord& r) {
    std::vector<char> seen(r.original_dim, 0);
    std::size_t total = 0;
    for (const auto& cluster : r.clusters) {
        for (std::size_t i : cluster) {
            if (i >= r.original_dim || seen[i]) {
                fail(ErrorKind::InvalidArgument, "record at layer " + std::to_string(r.producer) +
                                                     " does not partition its features");
            }
            seen[i] = 1;
            ++total;
        }
    }
    if (total != r.original_dim) {
        fail(ErrorKind::InvalidArgument, "record at layer " + std::to_string(r.producer) + " misses features");
    }
}

std::vector<double> sorted_alphas(std::span<const double> alphas) {
    if (alphas.empty()) fail(ErrorKind::InvalidArgument, "alpha list is empty");
    std::vector<double> a(alphas.begin(), alphas.end());
    for (double x : a) {
        if (!(x >= 0.0 && x <= 1.0)) fail(ErrorKind::InvalidArgument, "alpha values must lie in [0, 1]");
    }
    std::sort(a.begin(), a.end());
    return a;
}

}  // namespace

Permutation build_swap_permutation(const std::vector<MergeRecord>& records) {
    Permutation perm;
    for (const MergeRecord& r : records) {
        check_partition(r);
        std::vector<std::size_t> dest(r.original_dim);
        for (std::size_t i = 0; i < dest.size(); ++i) dest[i] = i;
        for (const auto& cluster : r.clusters) {
            if (cluster.size() < 2) continue;
            std::vector<std::size_t> c = cluster;
            std::sort(c.begin(), c.end());
            for (std::size_t i = 0; i < c.size(); ++i) dest[c[i]] = c[(i + 1) % c.size()];
        }
        perm.set(r.producer, std::move(dest));
    }
    return perm;
}

Permutation build_swap_permutation(const Network& net, const std::vector<MergeRecord>& records) {
    for (const MergeRecord& r : records) {
        MergeablePosition pos = find_position(net, r.producer);
        if (pos.dim != r.original_dim) {
            fail(ErrorKind::Structure, "record at layer " + std::to_string(r.producer) + " covers " +
                                           std::to_string(r.original_dim) + " features, network has " +
                                           std::to_string(pos.dim));
        }
    }
    return build_swap_permutation(records);
}

Permutation random_swap_permutation(const std::vector<MergeRecord>& records, std::uint64_t seed, bool avoid_clusters) {
    std::mt19937_64 rng(seed);
    Permutation perm;
    for (const MergeRecord& r : records) {
        check_partition(r);
        std::size_t moved = 0;
        std::vector<std::size_t> pool;
        for (const auto& cluster : r.clusters) {
            if (cluster.size() >= 2) moved += cluster.size();
            if (cluster.size() == 1 || !avoid_clusters) pool.insert(pool.end(), cluster.begin(), cluster.end());
        }
        std::sort(pool.begin(), pool.end());
        moved = std::min(moved, pool.size());
        if (moved < 2) moved = 0;

        // Partial Fisher-Yates: the first `moved` slots become the sample.
        for (std::size_t i = 0; i < moved; ++i) std::swap(pool[i], pool[i + detail::draw_index(rng, pool.size() - i)]);

        std::vector<std::size_t> dest(r.original_dim);
        for (std::size_t i = 0; i < dest.size(); ++i) dest[i] = i;
        for (std::size_t i = 0; i < moved; ++i) dest[pool[i]] = pool[(i + 1) % moved];
        perm.set(r.producer, std::move(dest));
    }
    return perm;
}

InterpolationCurve interpolation_curve(const Network& net, const Permutation& perm, const LabeledDataset& data,
                                       std::span<const double> alphas) {
    if (data.size() == 0) fail(ErrorKind::Validation, "cannot evaluate an empty dataset");
    InterpolationCurve curve;
    curve.alphas = sorted_alphas(alphas);
    const Network permuted = apply_permutation(net, perm);
    for (double a : curve.alphas) curve.metrics.push_back(evaluate(interpolate_params(net, permuted, a), data));
    return curve;
}

LmcBarrier lmc_barrier(const Network& a, const Network& b, const LabeledDataset& data, std::span<const double> alphas) {
    if (!same_architecture(a, b)) fail(ErrorKind::Structure, "networks differ in structure");
    LmcBarrier out;
    out.alphas = sorted_alphas(alphas);
    const double endpoint = std::max(evaluate(a, data).loss, evaluate(b, data).loss);
    out.max_loss_deviation = -std::numeric_limits<double>::infinity();
    for (double alpha : out.alphas) {
        const double loss = evaluate(interpolate_params(a, b, alpha), data).loss;
        out.losses.push_back(loss);
        out.max_loss_deviation = std::max(out.max_loss_deviation, loss - endpoint);
    }
    return out;
}

double llfc_residual(const Network& a, const Network& b, const LabeledDataset& data, std::size_t layer,
                     std::span<const double> alphas) {
    if (!same_architecture(a, b)) fail(ErrorKind::Structure, "networks differ in structure");
    if (layer >= a.num_layers()) fail(ErrorKind::InvalidArgument, "layer " + std::to_string(layer) + " out of range");
    if (data.size() == 0) fail(ErrorKind::Validation, "cannot evaluate an empty dataset");
    const std::vector<double> sorted = sorted_alphas(alphas);

    std::vector<Network> mixed;
    for (double alpha : sorted) mixed.push_back(interpolate_params(a, b, alpha));

    double worst = 0.0;
    constexpr std::size_t chunk = 1024;
    for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
        const std::size_t end = std::min(data.size(), begin + chunk);
        const Tensor batch = slice_batch(data.inputs(), begin, end);
        const Tensor za = layer_features(a, batch, layer).values;
        const Tensor zb = layer_features(b, batch, layer).values;
        const std::size_t width = za.size() / (end - begin);
        for (std::size_t k = 0; k < sorted.size(); ++k) {
            const double alpha = sorted[k];
            const Tensor zi = layer_features(mixed[k], batch, layer).values;
            for (std::size_t s = 0; s < end - begin; ++s) {
                double num = 0.0, den = 0.0;
                for (std::size_t j = s * width; j < (s + 1) * width; ++j) {
                    const double target = alpha * za[j] + (1.0 - alpha) * zb[j];
                    num += (zi[j] - target) * (zi[j] - target);
                    den += target * target;
                }
                worst = std::max(worst, std::sqrt(num) / (std::sqrt(den) + kLlfcEpsilon));
            }
        }
    }
    return worst;
}

}  // namespace featmerge
