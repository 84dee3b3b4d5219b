#include "featmerge/network.hpp"

#include <algorithm>
#include <set>

#include "featmerge/error.hpp"
#include "surgery.hpp"

namespace featmerge {

const char* to_string(LayerKind kind) noexcept {
    switch (kind) {
        case LayerKind::Linear: return "linear";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::ReLU: return "relu";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::AvgPool2d: return "avgpool2d";
        case LayerKind::GlobalAvgPool: return "global_avg_pool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::ResidualAdd: return "residual_add";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
    for (LayerKind k : {LayerKind::Linear, LayerKind::Conv2d, LayerKind::ReLU, LayerKind::MaxPool2d,
                        LayerKind::AvgPool2d, LayerKind::GlobalAvgPool, LayerKind::Flatten,
                        LayerKind::ResidualAdd}) {
        if (name == to_string(k)) return k;
    }
    fail(ErrorKind::Format, "unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::linear(std::string name, std::size_t in, std::size_t out, bool bias) {
    LayerSpec s;
    s.kind = LayerKind::Linear;
    s.name = std::move(name);
    s.in = in;
    s.out = out;
    s.has_bias = bias;
    return s;
}

LayerSpec LayerSpec::conv2d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel_h,
                            std::size_t kernel_w, std::size_t stride, std::size_t padding, bool bias) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.name = std::move(name);
    s.in = in_ch;
    s.out = out_ch;
    s.kernel_h = kernel_h;
    s.kernel_w = kernel_w;
    s.stride = stride;
    s.padding = padding;
    s.has_bias = bias;
    return s;
}

LayerSpec LayerSpec::relu(std::string name) {
    LayerSpec s;
    s.kind = LayerKind::ReLU;
    s.name = std::move(name);
    return s;
}

LayerSpec LayerSpec::max_pool(std::string name, std::size_t k, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool2d;
    s.name = std::move(name);
    s.kernel_h = s.kernel_w = k;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::avg_pool(std::string name, std::size_t k, std::size_t stride) {
    LayerSpec s = max_pool(std::move(name), k, stride);
    s.kind = LayerKind::AvgPool2d;
    return s;
}

LayerSpec LayerSpec::global_avg_pool(std::string name) {
    LayerSpec s;
    s.kind = LayerKind::GlobalAvgPool;
    s.name = std::move(name);
    return s;
}

LayerSpec LayerSpec::flatten(std::string name) {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    s.name = std::move(name);
    return s;
}

LayerSpec LayerSpec::residual_add(std::string name, std::size_t source) {
    LayerSpec s;
    s.kind = LayerKind::ResidualAdd;
    s.name = std::move(name);
    s.source = source;
    return s;
}

Shape LayerSpec::weight_shape() const {
    if (kind == LayerKind::Linear) return {out, in};
    if (kind == LayerKind::Conv2d) return {out, in, kernel_h, kernel_w};
    return {};
}

std::string weight_name(const LayerSpec& layer) { return layer.name + ".weight"; }
std::string bias_name(const LayerSpec& layer) { return layer.name + ".bias"; }

Network::Network(Shape input_shape, std::vector<LayerSpec> layers, std::map<std::string, Tensor> params)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), params_(std::move(params)) {
    validate(true);
}

namespace {

std::string where(std::size_t index, const LayerSpec& spec) {
    return "layer " + std::to_string(index) + " ('" + spec.name + "')";
}

}  // namespace

void Network::validate(bool check_values) {
    if (input_shape_.size() != 1 && input_shape_.size() != 3) {
        fail(ErrorKind::Structure, "input shape must be [features] or [channels, height, width], got " +
                                       shape_string(input_shape_));
    }
    if (std::find(input_shape_.begin(), input_shape_.end(), 0u) != input_shape_.end()) {
        fail(ErrorKind::Structure, "input shape has a zero extent");
    }
    if (layers_.empty()) fail(ErrorKind::Structure, "network has no layers");

    std::set<std::string> names;
    std::set<std::string> expected_params;
    feature_shapes_.clear();
    feature_shapes_.reserve(layers_.size());
    Shape cur = input_shape_;

    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        if (l.name.empty()) fail(ErrorKind::Structure, "layer " + std::to_string(i) + " has no name");
        if (!names.insert(l.name).second) fail(ErrorKind::Structure, "duplicate layer name '" + l.name + "'");

        switch (l.kind) {
            case LayerKind::Linear:
                if (cur.size() != 1 || cur[0] != l.in || l.out == 0) {
                    fail(ErrorKind::Dimension, where(i, l) + " expects [" + std::to_string(l.in) + "] input, got " +
                                                   shape_string(cur));
                }
                cur = {l.out};
                break;
            case LayerKind::Conv2d: {
                if (cur.size() != 3 || cur[0] != l.in || l.out == 0) {
                    fail(ErrorKind::Dimension, where(i, l) + " expects " + std::to_string(l.in) +
                                                   " input channels, got " + shape_string(cur));
                }
                if (l.kernel_h == 0 || l.kernel_w == 0 || l.stride == 0) {
                    fail(ErrorKind::Structure, where(i, l) + " has zero kernel or stride");
                }
                std::size_t h = cur[1] + 2 * l.padding, w = cur[2] + 2 * l.padding;
                if (h < l.kernel_h || w < l.kernel_w) fail(ErrorKind::Dimension, where(i, l) + " kernel exceeds input");
                cur = {l.out, (h - l.kernel_h) / l.stride + 1, (w - l.kernel_w) / l.stride + 1};
                break;
            }
            case LayerKind::ReLU:
                break;
            case LayerKind::MaxPool2d:
            case LayerKind::AvgPool2d:
                if (cur.size() != 3) fail(ErrorKind::Dimension, where(i, l) + " needs a [C, H, W] input");
                if (l.kernel_h == 0 || l.stride == 0) fail(ErrorKind::Structure, where(i, l) + " has zero kernel or stride");
                if (cur[1] < l.kernel_h || cur[2] < l.kernel_w) fail(ErrorKind::Dimension, where(i, l) + " kernel exceeds input");
                cur = {cur[0], (cur[1] - l.kernel_h) / l.stride + 1, (cur[2] - l.kernel_w) / l.stride + 1};
                break;
            case LayerKind::GlobalAvgPool:
                if (cur.size() != 3) fail(ErrorKind::Dimension, where(i, l) + " needs a [C, H, W] input");
                cur = {cur[0]};
                break;
            case LayerKind::Flatten:
                cur = {shape_product(cur)};
                break;
            case LayerKind::ResidualAdd:
                if (l.source >= i) {
                    fail(ErrorKind::Structure, where(i, l) + " has dangling residual source " + std::to_string(l.source));
                }
                if (feature_shapes_[l.source] != cur) {
                    fail(ErrorKind::Dimension, where(i, l) + " adds " + shape_string(feature_shapes_[l.source]) +
                                                   " to " + shape_string(cur));
                }
                break;
        }
        feature_shapes_.push_back(cur);

        if (!l.parametric()) continue;
        const std::string wn = weight_name(l);
        auto w = params_.find(wn);
        if (w == params_.end()) fail(ErrorKind::Structure, where(i, l) + " is missing tensor '" + wn + "'");
        if (w->second.shape() != l.weight_shape()) {
            fail(ErrorKind::Dimension, "tensor '" + wn + "' has shape " + shape_string(w->second.shape()) +
                                           ", layer needs " + shape_string(l.weight_shape()));
        }
        expected_params.insert(wn);
        if (l.has_bias) {
            const std::string bn = bias_name(l);
            auto b = params_.find(bn);
            if (b == params_.end()) fail(ErrorKind::Structure, where(i, l) + " is missing tensor '" + bn + "'");
            if (b->second.shape() != Shape{l.out}) {
                fail(ErrorKind::Dimension, "tensor '" + bn + "' has shape " + shape_string(b->second.shape()));
            }
            expected_params.insert(bn);
        }
    }

    bool first = true;
    for (const auto& [name, t] : params_) {
        if (!expected_params.count(name)) fail(ErrorKind::Structure, "tensor '" + name + "' belongs to no layer");
        if (check_values && !t.all_finite()) fail(ErrorKind::Validation, "tensor '" + name + "' has non-finite values");
        if (first) {
            dtype_ = t.dtype();
            first = false;
        } else if (t.dtype() != dtype_) {
            fail(ErrorKind::Structure, "tensor '" + name + "' has mixed dtype");
        }
    }
}

const Tensor& Network::weight(std::size_t layer_index) const {
    const LayerSpec& l = layer(layer_index);
    if (!l.parametric()) fail(ErrorKind::Structure, where(layer_index, l) + " has no weights");
    return params_.at(weight_name(l));
}

const Tensor* Network::bias(std::size_t layer_index) const {
    const LayerSpec& l = layer(layer_index);
    if (!l.parametric() || !l.has_bias) return nullptr;
    return &params_.at(bias_name(l));
}

std::size_t Network::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

Network Network::as_dtype(DType dtype) const {
    Network out = *this;
    for (auto& [name, t] : out.params_) t = t.as_dtype(dtype);
    out.dtype_ = dtype;
    return out;
}

void Network::stage_layer(std::size_t layer_index, LayerSpec spec, Tensor weight, std::optional<Tensor> bias) {
    LayerSpec& cur = layers_.at(layer_index);
    if (!cur.parametric() || spec.kind != cur.kind || spec.name != cur.name) {
        fail(ErrorKind::Structure, "stage_layer may only reshape an existing parametric layer");
    }
    if (!weight.all_finite() || (bias && !bias->all_finite())) {
        fail(ErrorKind::Validation, "staged tensors for '" + cur.name + "' have non-finite values");
    }
    params_.erase(bias_name(cur));
    cur = std::move(spec);
    params_[weight_name(cur)] = std::move(weight);
    if (bias) params_[bias_name(cur)] = std::move(*bias);
}

void Network::commit() { validate(false); }

bool operator==(const Network& a, const Network& b) noexcept {
    return a.input_shape_ == b.input_shape_ && a.layers_ == b.layers_ && a.params_ == b.params_;
}

std::vector<MergeablePosition> enumerate_mergeable_positions(const Network& net) {
    const auto& layers = net.layers();
    std::set<std::size_t> skip_sources;
    for (const LayerSpec& l : layers) {
        if (l.kind == LayerKind::ResidualAdd) skip_sources.insert(l.source);
    }

    std::vector<MergeablePosition> out;
    for (std::size_t p = 0; p < layers.size(); ++p) {
        if (!layers[p].parametric()) continue;
        bool on_stream = skip_sources.count(p) > 0;
        std::size_t block = 1;
        std::optional<std::size_t> consumer;
        for (std::size_t i = p + 1; i < layers.size() && !on_stream; ++i) {
            const LayerSpec& l = layers[i];
            if (l.kind == LayerKind::ResidualAdd) {
                on_stream = true;
                break;
            }
            if (l.parametric()) {
                consumer = i;
                break;
            }
            if (l.kind == LayerKind::Flatten) {
                const Shape& before = net.feature_shapes()[i - 1];
                if (before.size() == 3) block *= before[1] * before[2];
            }
            if (skip_sources.count(i)) on_stream = true;
        }
        if (on_stream || !consumer) continue;

        MergeablePosition pos;
        pos.producer = p;
        pos.consumers.push_back({*consumer, block});
        pos.dim = layers[p].out;
        for (const LayerSpec& l : layers) {
            if (l.kind != LayerKind::ResidualAdd) continue;
            std::size_t add = static_cast<std::size_t>(&l - layers.data());
            if (l.source < p && p < add) pos.in_residual_block = true;
        }
        out.push_back(std::move(pos));
    }
    return out;
}

MergeablePosition find_position(const Network& net, std::size_t producer) {
    for (auto& pos : enumerate_mergeable_positions(net)) {
        if (pos.producer == producer) return pos;
    }
    fail(ErrorKind::Structure, "layer " + std::to_string(producer) + " is not a mergeable position");
}

void Permutation::set(std::size_t producer, std::vector<std::size_t> dest) {
    std::vector<char> seen(dest.size(), 0);
    for (std::size_t d : dest) {
        if (d >= dest.size() || seen[d]) {
            fail(ErrorKind::InvalidArgument, "permutation at layer " + std::to_string(producer) + " is not a bijection");
        }
        seen[d] = 1;
    }
    maps_[producer] = std::move(dest);
}

const std::vector<std::size_t>* Permutation::find(std::size_t producer) const {
    auto it = maps_.find(producer);
    return it == maps_.end() ? nullptr : &it->second;
}

Permutation Permutation::inverse() const {
    Permutation inv;
    for (const auto& [producer, dest] : maps_) {
        std::vector<std::size_t> back(dest.size());
        for (std::size_t i = 0; i < dest.size(); ++i) back[dest[i]] = i;
        inv.maps_[producer] = std::move(back);
    }
    return inv;
}

std::size_t Permutation::moved() const noexcept {
    std::size_t n = 0;
    for (const auto& [producer, dest] : maps_) {
        for (std::size_t i = 0; i < dest.size(); ++i) n += dest[i] != i;
    }
    return n;
}

Network apply_permutation(const Network& net, const Permutation& perm) {
    Network out = net;
    for (const auto& [producer, dest] : perm.maps()) {
        MergeablePosition pos = find_position(out, producer);
        if (dest.size() != pos.dim) {
            fail(ErrorKind::Dimension, "permutation at layer " + std::to_string(producer) + " has length " +
                                           std::to_string(dest.size()) + ", position has " + std::to_string(pos.dim));
        }

        const auto pv = detail::producer_view(out, pos);
        const Tensor& src_w = out.weight(producer);
        Tensor w = src_w;
        for (std::size_t f = 0; f < pv.dim; ++f) {
            for (std::size_t r = 0; r < pv.row; ++r) w[dest[f] * pv.row + r] = src_w[f * pv.row + r];
        }
        std::optional<Tensor> b;
        if (const Tensor* src = out.bias(producer)) {
            b = *src;
            for (std::size_t f = 0; f < pv.dim; ++f) (*b)[dest[f]] = (*src)[f];
        }
        out.stage_layer(producer, out.layer(producer), std::move(w), std::move(b));

        for (const ConsumerBlock& c : pos.consumers) {
            const auto cv = detail::consumer_view(out, pos, c);
            const Tensor& src = out.weight(c.layer);
            Tensor cw = src;
            for (std::size_t o = 0; o < cv.out; ++o) {
                for (std::size_t f = 0; f < cv.dim; ++f) {
                    for (std::size_t s = 0; s < cv.slice; ++s) cw[cv.index(o, dest[f], s)] = src[cv.index(o, f, s)];
                }
            }
            std::optional<Tensor> cb;
            if (const Tensor* bb = out.bias(c.layer)) cb = *bb;
            out.stage_layer(c.layer, out.layer(c.layer), std::move(cw), std::move(cb));
        }
        out.commit();
    }
    return out;
}

bool same_architecture(const Network& a, const Network& b) noexcept {
    if (a.input_shape() != b.input_shape() || a.layers() != b.layers() || a.dtype() != b.dtype()) return false;
    if (a.params().size() != b.params().size()) return false;
    for (const auto& [name, t] : a.params()) {
        auto it = b.params().find(name);
        if (it == b.params().end() || it->second.shape() != t.shape()) return false;
    }
    return true;
}

Network interpolate_params(const Network& a, const Network& b, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::InvalidArgument, "alpha must lie in [0, 1]");
    if (!same_architecture(a, b)) fail(ErrorKind::Structure, "cannot interpolate networks of different structure");
    if (alpha == 1.0) return a;
    if (alpha == 0.0) return b;

    std::map<std::string, Tensor> params;
    for (const auto& [name, ta] : a.params()) {
        const Tensor& tb = b.params().at(name);
        Tensor t(ta.shape(), ta.dtype());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = alpha * ta[i] + (1.0 - alpha) * tb[i];
        t.round_to_dtype();
        params.emplace(name, std::move(t));
    }
    return Network(a.input_shape(), a.layers(), std::move(params));
}

}  // namespace featmerge
