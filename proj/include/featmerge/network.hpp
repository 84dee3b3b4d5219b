#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "featmerge/tensor.hpp"

namespace featmerge {

enum class LayerKind {
    Linear,
    Conv2d,
    ReLU,
    MaxPool2d,
    AvgPool2d,
    GlobalAvgPool,
    Flatten,
    ResidualAdd,
};

const char* to_string(LayerKind kind) noexcept;
LayerKind layer_kind_from_string(const std::string& name);

/// One layer of a feedforward network. Linear uses in/out as feature counts,
/// Conv2d as channel counts. Pools use kernel_h/kernel_w and stride.
/// ResidualAdd adds the output of layer `source` to its input.
struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    std::string name;
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool has_bias = false;
    std::size_t source = 0;

    static LayerSpec linear(std::string name, std::size_t in, std::size_t out, bool bias = true);
    static LayerSpec conv2d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel_h,
                            std::size_t kernel_w, std::size_t stride = 1, std::size_t padding = 0,
                            bool bias = true);
    static LayerSpec relu(std::string name);
    static LayerSpec max_pool(std::string name, std::size_t k, std::size_t stride);
    static LayerSpec avg_pool(std::string name, std::size_t k, std::size_t stride);
    static LayerSpec global_avg_pool(std::string name);
    static LayerSpec flatten(std::string name);
    static LayerSpec residual_add(std::string name, std::size_t source);

    bool parametric() const noexcept { return kind == LayerKind::Linear || kind == LayerKind::Conv2d; }
    Shape weight_shape() const;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

std::string weight_name(const LayerSpec& layer);
std::string bias_name(const LayerSpec& layer);

/// Ordered layers plus their parameters. Construction validates the whole
/// graph: shapes chain, every parametric layer has its tensors, residual
/// sources are earlier layers of identical shape, and all values are finite.
class Network {
public:
    Network(Shape input_shape, std::vector<LayerSpec> layers, std::map<std::string, Tensor> params);

    const Shape& input_shape() const noexcept { return input_shape_; }
    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    const LayerSpec& layer(std::size_t index) const { return layers_.at(index); }
    std::size_t num_layers() const noexcept { return layers_.size(); }

    const std::map<std::string, Tensor>& params() const noexcept { return params_; }
    const Tensor& weight(std::size_t layer_index) const;
    const Tensor* bias(std::size_t layer_index) const;

    /// Output shape (without batch axis) of every layer.
    const std::vector<Shape>& feature_shapes() const noexcept { return feature_shapes_; }
    /// Leading extent of a layer's output: channels for conv maps, features otherwise.
    std::size_t feature_dim(std::size_t layer_index) const { return feature_shapes_.at(layer_index).at(0); }
    const Shape& output_shape() const { return feature_shapes_.back(); }

    std::size_t parameter_count() const noexcept;
    DType dtype() const noexcept { return dtype_; }
    Network as_dtype(DType dtype) const;

    /// Weight surgery: replaces one parametric layer and its tensors. Shapes
    /// may disagree with neighbouring layers until commit() revalidates.
    void stage_layer(std::size_t layer_index, LayerSpec spec, Tensor weight, std::optional<Tensor> bias);
    void commit();

    friend bool operator==(const Network& a, const Network& b) noexcept;

private:
    void validate(bool check_values);

    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    std::map<std::string, Tensor> params_;
    std::vector<Shape> feature_shapes_;
    DType dtype_ = DType::f32;
};

/// Where one mergeable feature is read: a consumer layer and the number of
/// consecutive input columns (or kernel input-channel slices) per feature.
struct ConsumerBlock {
    std::size_t layer = 0;
    std::size_t block = 1;

    friend bool operator==(const ConsumerBlock&, const ConsumerBlock&) = default;
};

struct MergeablePosition {
    std::size_t producer = 0;
    std::vector<ConsumerBlock> consumers;
    std::size_t dim = 0;
    // Producer sits strictly inside a residual block (between a skip source
    // and its add); such positions merge only on explicit opt-in.
    bool in_residual_block = false;

    friend bool operator==(const MergeablePosition&, const MergeablePosition&) = default;
};

/// Every position where a parametric layer's output feeds another parametric
/// layer through activations, pools and flattening only. The classifier
/// output and channels on a residual stream are excluded.
std::vector<MergeablePosition> enumerate_mergeable_positions(const Network& net);

/// Looks up the position produced by `producer`; throws a structure error
/// when that layer is not a mergeable producer.
MergeablePosition find_position(const Network& net, std::size_t producer);

/// Per-position index bijections. `dest[i]` is where old feature i moves.
/// Positions without an entry are the identity.
class Permutation {
public:
    Permutation() = default;

    static Permutation identity() { return {}; }

    void set(std::size_t producer, std::vector<std::size_t> dest);
    const std::map<std::size_t, std::vector<std::size_t>>& maps() const noexcept { return maps_; }
    const std::vector<std::size_t>* find(std::size_t producer) const;

    Permutation inverse() const;
    /// Number of indices not mapped to themselves, summed over positions.
    std::size_t moved() const noexcept;

    friend bool operator==(const Permutation&, const Permutation&) = default;

private:
    std::map<std::size_t, std::vector<std::size_t>> maps_;
};

/// Relabels features; the returned network computes the same function.
Network apply_permutation(const Network& net, const Permutation& perm);

/// alpha * a + (1 - alpha) * b for every parameter tensor.
Network interpolate_params(const Network& a, const Network& b, double alpha);

bool same_architecture(const Network& a, const Network& b) noexcept;

}  // namespace featmerge
