#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "featmerge/inference.hpp"
#include "featmerge/network.hpp"

namespace featmerge {

/// SGD with momentum and L2 weight decay on an MLP (Linear/ReLU stack,
/// linear classifier head). Learning rate is multiplied by lr_decay at each
/// milestone epoch.
struct TrainConfig {
    std::vector<std::size_t> hidden{16};
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::vector<std::size_t> milestones;
    double lr_decay = 0.1;
    std::uint64_t seed = 0;
    DType dtype = DType::f32;

    void validate() const;
};

/// Weights and biases uniform in +-1/sqrt(fan_in), layer by layer.
Network init_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t classes, std::uint64_t seed,
                 DType dtype = DType::f32);

bool is_mlp(const Network& net) noexcept;

Network train_mlp(const TrainConfig& config, const LabeledDataset& data);
/// Continues training from `start`, which must be an MLP.
Network train_mlp(const TrainConfig& config, const LabeledDataset& data, const Network& start);

struct LossGradients {
    double loss = 0.0;
    std::map<std::string, std::vector<double>> grads;  // keyed like Network::params()
};

/// Mean cross-entropy and its exact gradient (no weight decay), in double.
LossGradients loss_and_gradients(const Network& net, const Tensor& inputs, std::span<const std::int64_t> labels);

struct PlantSpec {
    std::size_t source = 0;
    std::size_t count = 0;
};

/// Appends `count` exact copies of each source feature at a position and
/// divides the source's consumer columns by count + 1 across the copies, so
/// the network function is unchanged for ReLU networks.
Network plant_duplicates(const Network& net, std::size_t producer, std::span<const PlantSpec> plants,
                         std::optional<std::size_t> max_width = std::nullopt);

enum class SyntheticKind { Blobs, XorGrid, Ring };

const char* to_string(SyntheticKind kind) noexcept;
SyntheticKind synthetic_kind_from_string(const std::string& name);

/// 2-D point sets with balanced labels (label = sample index mod classes).
///  blobs: `classes` unit disks centred on a radius-3 circle.
///  xor-grid: two classes on opposite quadrant pairs.
///  ring: class 0 fills the unit disk, class 1 the annulus 1.3 <= r <= 1.6.
/// `noise` is the standard deviation of added Gaussian jitter.
LabeledDataset make_synthetic_dataset(SyntheticKind kind, std::size_t n, double noise, std::uint64_t seed,
                                      std::size_t classes = 2);

}  // namespace featmerge
