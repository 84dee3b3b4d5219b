#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "featmerge/network.hpp"
#include "featmerge/tensor.hpp"

namespace featmerge {

/// f32 inputs [N, ...] with integer labels in [0, num_classes). N may be zero;
/// evaluation refuses empty datasets.
class LabeledDataset {
public:
    LabeledDataset(Tensor inputs, std::vector<std::int64_t> labels, std::size_t num_classes);

    const Tensor& inputs() const noexcept { return inputs_; }
    const std::vector<std::int64_t>& labels() const noexcept { return labels_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    std::size_t size() const noexcept { return labels_.size(); }
    /// Per-sample shape (inputs shape without the leading N).
    Shape sample_shape() const;

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

private:
    Tensor inputs_;
    std::vector<std::int64_t> labels_;
    std::size_t num_classes_ = 0;
};

struct FeatureMap {
    std::size_t layer = 0;
    Tensor values;  // [batch, d] or [batch, C, H, W]
};

struct Metrics {
    double accuracy = 0.0;
    double loss = 0.0;
};

/// Runs the whole network on a [N, input...] batch; returns f64 logits.
Tensor forward(const Network& net, const Tensor& batch);

/// Output of layer `layer` (0-based) for the batch.
FeatureMap layer_features(const Network& net, const Tensor& batch, std::size_t layer);

/// Runs layers [first_layer, end) on features shaped like the input of
/// first_layer. Residual sources before first_layer are unavailable.
Tensor forward_from(const Network& net, const Tensor& features, std::size_t first_layer);

/// Accuracy (argmax, ties to the lowest class) and mean cross-entropy.
Metrics evaluate(const Network& net, const LabeledDataset& data);
Metrics evaluate_logits(const Tensor& logits, std::span<const std::int64_t> labels);

std::size_t argmax_lowest(std::span<const double> values);

/// Rows [begin, end) of a batch tensor.
Tensor slice_batch(const Tensor& batch, std::size_t begin, std::size_t end);

}  // namespace featmerge
