#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "featmerge/ifm.hpp"
#include "featmerge/inference.hpp"
#include "featmerge/network.hpp"

namespace featmerge {

struct InterpolationCurve {
    std::vector<double> alphas;  // ascending
    std::vector<Metrics> metrics;
};

/// Eleven evenly spaced points 0, 0.1, ..., 1.
std::vector<double> default_alphas();

/// Cyclically shifts the original indices inside every cluster of size >= 2
/// (ascending c0 -> c1 -> ... -> c0); singletons stay fixed.
Permutation build_swap_permutation(const std::vector<MergeRecord>& records);
/// Same, after checking every record matches a position of `net`.
Permutation build_swap_permutation(const Network& net, const std::vector<MergeRecord>& records);

/// Per position, moves as many indices as the matched swap would, chosen
/// uniformly with a seeded generator and cycled in sampled order. With
/// avoid_clusters the sample is drawn only from singleton clusters.
Permutation random_swap_permutation(const std::vector<MergeRecord>& records, std::uint64_t seed,
                                    bool avoid_clusters = false);

/// Evaluates interpolate_params(net, apply_permutation(net, perm), alpha)
/// at each alpha.
InterpolationCurve interpolation_curve(const Network& net, const Permutation& perm, const LabeledDataset& data,
                                       std::span<const double> alphas);

struct LmcBarrier {
    double max_loss_deviation = 0.0;
    std::vector<double> alphas;
    std::vector<double> losses;
};

/// max over alpha of loss(alpha a + (1 - alpha) b) - max(loss(a), loss(b)).
LmcBarrier lmc_barrier(const Network& a, const Network& b, const LabeledDataset& data,
                       std::span<const double> alphas);

/// Largest per-sample relative gap between the features of the
/// interpolated network at `layer` and the interpolation of the endpoint
/// features, over all samples and alphas.
double llfc_residual(const Network& a, const Network& b, const LabeledDataset& data, std::size_t layer,
                     std::span<const double> alphas);

inline constexpr double kLlfcEpsilon = 1e-12;

}  // namespace featmerge
