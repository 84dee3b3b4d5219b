#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "featmerge/inference.hpp"
#include "featmerge/network.hpp"

namespace featmerge {

struct IfmConfig {
    /// Stopping tolerance: merging at a position stops once the smallest
    /// off-diagonal distance exceeds beta times the largest.
    double beta = 0.1;
    /// Producer layer indices to merge; nullopt selects every mergeable
    /// position (residual-block interiors only with the opt-in below).
    std::optional<std::vector<std::size_t>> positions;
    std::optional<std::size_t> max_merges;
    bool bias_in_distance = true;
    bool merge_residual_interior = false;
    /// Update only the merged feature's distances after each merge instead
    /// of recomputing the whole matrix. Both paths give identical results.
    bool incremental = true;

    void validate() const;
};

struct MergeStep {
    std::size_t m = 0;  // current indices at the time of the merge
    std::size_t n = 0;
    double distance = 0.0;

    friend bool operator==(const MergeStep&, const MergeStep&) = default;
};

/// Clustering of the original features at one position. clusters[i] lists
/// the original indices folded into current feature i (ascending).
struct MergeRecord {
    std::size_t producer = 0;
    std::size_t original_dim = 0;
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<std::size_t> counts;
    std::vector<MergeStep> merge_log;
    std::vector<double> iteration_seconds;

    std::size_t final_dim() const noexcept { return clusters.size(); }
    static MergeRecord singletons(std::size_t producer, std::size_t dim);
};

struct IfmResult {
    Network net;
    std::vector<MergeRecord> records;
};

/// Folds feature n into feature m. The merged feature takes index
/// min(m, n); its producer row and bias are the sums of the two, and every
/// consumer column block becomes the count-weighted mean using `counts`
/// (current per-feature cluster sizes).
Network merge_pair(const Network& net, const MergeablePosition& pos, std::size_t m, std::size_t n,
                   std::span<const std::size_t> counts);

std::pair<Network, MergeRecord> ifm_position(const Network& net, const MergeablePosition& pos,
                                             const IfmConfig& config);

/// Runs ifm_position over the selected positions in ascending layer order.
IfmResult ifm(const Network& net, const IfmConfig& config);

std::vector<MergeablePosition> selected_positions(const Network& net, const IfmConfig& config);

struct ComplexityEntry {
    std::size_t layer = 0;
    std::size_t original = 0;
    std::size_t remaining = 0;
};
using ComplexityProfile = std::vector<ComplexityEntry>;

ComplexityProfile complexity_profile(const Network& net, const IfmConfig& config);
ComplexityProfile complexity_profile(const std::vector<MergeRecord>& records);

std::vector<double> default_beta_grid();

struct GridRow {
    double beta = 0.0;
    std::size_t params = 0;
    double param_fraction = 0.0;
    double accuracy = 0.0;
    double loss = 0.0;
};

struct GridResult {
    double baseline_accuracy = 0.0;
    double baseline_loss = 0.0;
    std::size_t baseline_params = 0;
    double retention = 0.95;
    std::vector<GridRow> rows;
    /// Largest beta whose accuracy is at least retention * baseline.
    std::optional<double> best_beta;
};

GridResult beta_grid_search(const Network& net, std::span<const double> betas, const LabeledDataset& data,
                            double retention = 0.95, const IfmConfig& base = {});

struct IterationTiming {
    std::size_t iterations = 0;
    double mean_seconds = 0.0;
    double std_seconds = 0.0;
    std::vector<double> samples;
};

IterationTiming summarize_timing(std::vector<double> samples);

/// Wall time of one merge iteration (distance matrix, stopping statistics,
/// merge of the closest pair), measured `repeats` times cycling over the
/// selected positions of the unmerged network.
IterationTiming time_ifm_iterations(const Network& net, const IfmConfig& config, std::size_t repeats);

}  // namespace featmerge
