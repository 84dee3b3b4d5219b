#pragma once

#include <cstddef>
#include <vector>

#include "featmerge/network.hpp"

namespace featmerge {

/// The two operands of the weight distance for one feature: the producer
/// row (bias appended when requested) and the concatenated consumer column
/// blocks.
struct FeatureVectors {
    std::vector<double> row;
    std::vector<double> col;
};

FeatureVectors feature_vectors(const Network& net, const MergeablePosition& pos, std::size_t m,
                               bool bias_in_distance = true);

/// Symmetric matrix of squared weight distances, zero diagonal.
class DistanceMatrix {
public:
    DistanceMatrix(MergeablePosition position, std::size_t dim);

    const MergeablePosition& position() const noexcept { return position_; }
    std::size_t dim() const noexcept { return dim_; }
    double operator()(std::size_t m, std::size_t n) const { return values_[m * dim_ + n]; }
    void set(std::size_t m, std::size_t n, double v) {
        values_[m * dim_ + n] = v;
        values_[n * dim_ + m] = v;
    }
    const std::vector<double>& values() const noexcept { return values_; }

    /// Drops one feature, shifting later indices down.
    void erase(std::size_t index);

    struct OffDiagonal {
        double min = 0.0;
        double max = 0.0;
        double mean = 0.0;
        std::size_t argmin_m = 0;
        std::size_t argmin_n = 0;
    };
    /// Extremes over m < n. The argmin is the lexicographically smallest
    /// (m, n) attaining the minimum. Requires dim >= 2.
    OffDiagonal off_diagonal() const;

    friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

private:
    MergeablePosition position_;
    std::size_t dim_ = 0;
    std::vector<double> values_;
};

/// Squared Euclidean distance between two features, row part then column
/// part, accumulated left to right in one double.
double feature_distance(const FeatureVectors& a, const FeatureVectors& b) noexcept;

DistanceMatrix distance_matrix(const Network& net, const MergeablePosition& pos, bool bias_in_distance = true);

}  // namespace featmerge
