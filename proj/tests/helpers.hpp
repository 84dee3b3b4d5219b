#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "featmerge/inference.hpp"
#include "featmerge/network.hpp"
#include "featmerge/tensor.hpp"

namespace testutil {

using namespace featmerge;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0, DType dtype = DType::f64) {
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> v(shape_product(shape));
    for (double& x : v) x = dist(rng);
    Tensor t(std::move(shape), std::move(v), DType::f64);
    return t.as_dtype(dtype);
}

inline Tensor random_batch(std::size_t n, const Shape& sample, std::mt19937_64& rng, double scale = 1.0) {
    Shape shape{n};
    shape.insert(shape.end(), sample.begin(), sample.end());
    return random_tensor(shape, rng, scale);
}

/// Fills every parameter of the given layers with Gaussian values.
inline Network with_random_params(Shape input, std::vector<LayerSpec> layers, std::mt19937_64& rng,
                                  DType dtype = DType::f64, double scale = 0.5) {
    std::map<std::string, Tensor> params;
    for (const LayerSpec& l : layers) {
        if (!l.parametric()) continue;
        params[weight_name(l)] = random_tensor(l.weight_shape(), rng, scale, dtype);
        if (l.has_bias) params[bias_name(l)] = random_tensor({l.out}, rng, scale, dtype);
    }
    return Network(std::move(input), std::move(layers), std::move(params));
}

inline Network random_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                          std::mt19937_64& rng, DType dtype = DType::f64, bool bias = true) {
    std::vector<LayerSpec> layers;
    std::size_t prev = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        layers.push_back(LayerSpec::linear("fc" + std::to_string(i), prev, hidden[i], bias));
        layers.push_back(LayerSpec::relu("relu" + std::to_string(i)));
        prev = hidden[i];
    }
    layers.push_back(LayerSpec::linear("fc" + std::to_string(hidden.size()), prev, out, bias));
    return with_random_params({in}, std::move(layers), rng, dtype);
}

/// Conv-ReLU-Conv-ReLU-MaxPool-Flatten-Linear on [c, 6, 6] inputs.
inline Network random_vgg_like(std::mt19937_64& rng, std::size_t c = 2, std::size_t c1 = 4, std::size_t c2 = 3,
                               std::size_t classes = 5) {
    std::vector<LayerSpec> layers{
        LayerSpec::conv2d("conv0", c, c1, 3, 3, 1, 1),
        LayerSpec::relu("relu0"),
        LayerSpec::conv2d("conv1", c1, c2, 3, 3, 1, 1),
        LayerSpec::relu("relu1"),
        LayerSpec::max_pool("pool", 2, 2),
        LayerSpec::flatten("flat"),
        LayerSpec::linear("fc", c2 * 9, classes),
    };
    return with_random_params({c, 6, 6}, std::move(layers), rng);
}

/// Largest |a - b| / max(|b|_inf, tiny) over rows of two [N, k] tensors.
inline double max_relative_deviation(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.dim(0);
    const std::size_t k = a.size() / std::max<std::size_t>(n, 1);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double scale = 0.0;
        double diff = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            scale = std::max(scale, std::abs(b[i * k + j]));
            diff = std::max(diff, std::abs(a[i * k + j] - b[i * k + j]));
        }
        worst = std::max(worst, diff / std::max(scale, 1e-30));
    }
    return worst;
}

inline std::filesystem::path temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "featmerge_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace testutil
