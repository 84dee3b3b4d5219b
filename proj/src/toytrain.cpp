#include "featmerge/toytrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "featmerge/error.hpp"
#include "random.hpp"
#include "surgery.hpp"

namespace featmerge {

void TrainConfig::validate() const {
    if (batch_size == 0) fail(ErrorKind::InvalidArgument, "batch size must be positive");
    if (!(learning_rate > 0.0)) fail(ErrorKind::InvalidArgument, "learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorKind::InvalidArgument, "momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) fail(ErrorKind::InvalidArgument, "weight decay must be non-negative");
    if (!(lr_decay > 0.0)) fail(ErrorKind::InvalidArgument, "lr decay factor must be positive");
    for (std::size_t h : hidden) {
        if (h == 0) fail(ErrorKind::InvalidArgument, "hidden widths must be positive");
    }
}

namespace {

struct Dense {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> w;  // [out, in]
    std::vector<double> b;
    std::string name;
};

std::vector<Dense> dense_layers(const Network& net) {
    if (!is_mlp(net)) fail(ErrorKind::Unsupported, "only Linear/ReLU MLPs with biases can be trained");
    std::vector<Dense> out;
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
        const LayerSpec& l = net.layer(i);
        if (l.kind != LayerKind::Linear) continue;
        const Tensor& w = net.weight(i);
        const Tensor& b = *net.bias(i);
        out.push_back({l.in, l.out, {w.values().begin(), w.values().end()}, {b.values().begin(), b.values().end()}, l.name});
    }
    return out;
}

Network with_dense(const Network& net, const std::vector<Dense>& layers, DType dtype) {
    std::map<std::string, Tensor> params;
    for (const Dense& d : layers) {
        params.emplace(d.name + ".weight", Tensor({d.out, d.in}, d.w, dtype));
        params.emplace(d.name + ".bias", Tensor({d.out}, d.b, dtype));
    }
    return Network(net.input_shape(), net.layers(), std::move(params));
}

// Mean cross-entropy over the batch; fills gradients when `grads` is set.
double run_batch(const std::vector<Dense>& layers, const std::vector<double>& x, const std::vector<std::int64_t>& y,
                 std::vector<Dense>* grads) {
    const std::size_t batch = y.size();
    const std::size_t depth = layers.size();
    std::vector<std::vector<double>> acts(depth + 1);
    acts[0] = x;
    for (std::size_t l = 0; l < depth; ++l) {
        const Dense& d = layers[l];
        std::vector<double>& a = acts[l + 1];
        a.assign(batch * d.out, 0.0);
        for (std::size_t s = 0; s < batch; ++s) {
            const double* in = acts[l].data() + s * d.in;
            for (std::size_t o = 0; o < d.out; ++o) {
                double acc = 0.0;
                for (std::size_t i = 0; i < d.in; ++i) acc += d.w[o * d.in + i] * in[i];
                acc += d.b[o];
                a[s * d.out + o] = (l + 1 < depth && acc < 0.0) ? 0.0 : acc;
            }
        }
    }

    const std::size_t k = layers.back().out;
    std::vector<double> delta(batch * k);
    double loss = 0.0;
    for (std::size_t s = 0; s < batch; ++s) {
        const double* z = acts[depth].data() + s * k;
        const double peak = *std::max_element(z, z + k);
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(z[c] - peak);
        const std::size_t label = static_cast<std::size_t>(y[s]);
        loss += peak + std::log(sum) - z[label];
        for (std::size_t c = 0; c < k; ++c) {
            delta[s * k + c] = (std::exp(z[c] - peak) / sum - (c == label ? 1.0 : 0.0)) / static_cast<double>(batch);
        }
    }
    loss /= static_cast<double>(batch);
    if (!grads) return loss;

    grads->resize(depth);
    for (std::size_t l = depth; l-- > 0;) {
        const Dense& d = layers[l];
        Dense& g = (*grads)[l];
        g.in = d.in;
        g.out = d.out;
        g.name = d.name;
        g.w.assign(d.w.size(), 0.0);
        g.b.assign(d.b.size(), 0.0);
        const std::vector<double>& prev = acts[l];
        for (std::size_t s = 0; s < batch; ++s) {
            for (std::size_t o = 0; o < d.out; ++o) {
                const double dz = delta[s * d.out + o];
                if (dz == 0.0) continue;
                g.b[o] += dz;
                for (std::size_t i = 0; i < d.in; ++i) g.w[o * d.in + i] += dz * prev[s * d.in + i];
            }
        }
        if (l == 0) break;
        std::vector<double> next(batch * d.in, 0.0);
        for (std::size_t s = 0; s < batch; ++s) {
            for (std::size_t i = 0; i < d.in; ++i) {
                // acts[l] is the ReLU output of layer l-1; zero means inactive.
                if (prev[s * d.in + i] <= 0.0) continue;
                double acc = 0.0;
                for (std::size_t o = 0; o < d.out; ++o) acc += delta[s * d.out + o] * d.w[o * d.in + i];
                next[s * d.in + i] = acc;
            }
        }
        delta = std::move(next);
    }
    return loss;
}

void check_train_data(const LabeledDataset& data) {
    if (data.inputs().rank() != 2) fail(ErrorKind::Unsupported, "MLP training needs [N, features] inputs");
    if (data.size() == 0) fail(ErrorKind::Validation, "cannot train on an empty dataset");
}

}  // namespace

bool is_mlp(const Network& net) noexcept {
    if (net.input_shape().size() != 1) return false;
    const auto& layers = net.layers();
    if (layers.empty() || layers.size() % 2 == 0) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        if (i % 2 == 0 && (l.kind != LayerKind::Linear || !l.has_bias)) return false;
        if (i % 2 == 1 && l.kind != LayerKind::ReLU) return false;
    }
    return true;
}

Network init_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t classes, std::uint64_t seed,
                 DType dtype) {
    if (input_dim == 0 || classes == 0) fail(ErrorKind::InvalidArgument, "MLP needs positive input and class counts");
    std::mt19937_64 rng(seed);
    std::vector<LayerSpec> layers;
    std::map<std::string, Tensor> params;
    std::vector<std::size_t> widths{input_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(classes);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t in = widths[l], out = widths[l + 1];
        LayerSpec spec = LayerSpec::linear("fc" + std::to_string(l), in, out, true);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::vector<double> w(in * out), b(out);
        for (double& v : w) v = detail::uniform(rng, -bound, bound);
        for (double& v : b) v = detail::uniform(rng, -bound, bound);
        params.emplace(weight_name(spec), Tensor({out, in}, std::move(w), dtype));
        params.emplace(bias_name(spec), Tensor({out}, std::move(b), dtype));
        layers.push_back(spec);
        if (l + 2 < widths.size()) layers.push_back(LayerSpec::relu("relu" + std::to_string(l)));
    }
    return Network({input_dim}, std::move(layers), std::move(params));
}

Network train_mlp(const TrainConfig& config, const LabeledDataset& data) {
    config.validate();
    check_train_data(data);
    Network start = init_mlp(data.inputs().dim(1), config.hidden, data.num_classes(), config.seed, DType::f64);
    return train_mlp(config, data, start);
}

Network train_mlp(const TrainConfig& config, const LabeledDataset& data, const Network& start) {
    config.validate();
    check_train_data(data);
    std::vector<Dense> layers = dense_layers(start);
    if (layers.front().in != data.inputs().dim(1) || layers.back().out != data.num_classes()) {
        fail(ErrorKind::Dimension, "network does not fit the dataset's feature or class count");
    }

    std::vector<Dense> velocity = layers;
    for (Dense& v : velocity) {
        std::fill(v.w.begin(), v.w.end(), 0.0);
        std::fill(v.b.begin(), v.b.end(), 0.0);
    }
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t n = data.size(), dim = data.inputs().dim(1);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::span<const double> inputs = data.inputs().values();

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double lr = config.learning_rate;
        for (std::size_t m : config.milestones) {
            if (epoch >= m) lr *= config.lr_decay;
        }
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[detail::draw_index(rng, i)]);

        for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            std::vector<double> x;
            std::vector<std::int64_t> y;
            x.reserve((end - begin) * dim);
            for (std::size_t k = begin; k < end; ++k) {
                const std::size_t s = order[k];
                x.insert(x.end(), inputs.begin() + s * dim, inputs.begin() + (s + 1) * dim);
                y.push_back(data.labels()[s]);
            }
            std::vector<Dense> grads;
            run_batch(layers, x, y, &grads);
            for (std::size_t l = 0; l < layers.size(); ++l) {
                auto step = [&](std::vector<double>& p, std::vector<double>& v, const std::vector<double>& g) {
                    for (std::size_t j = 0; j < p.size(); ++j) {
                        v[j] = config.momentum * v[j] + g[j] + config.weight_decay * p[j];
                        p[j] -= lr * v[j];
                    }
                };
                step(layers[l].w, velocity[l].w, grads[l].w);
                step(layers[l].b, velocity[l].b, grads[l].b);
            }
        }
    }
    return with_dense(start, layers, config.dtype);
}

LossGradients loss_and_gradients(const Network& net, const Tensor& inputs, std::span<const std::int64_t> labels) {
    std::vector<Dense> layers = dense_layers(net);
    if (inputs.rank() != 2 || inputs.dim(1) != layers.front().in || inputs.dim(0) != labels.size() || labels.empty()) {
        fail(ErrorKind::Dimension, "inputs do not match the network or labels");
    }
    for (std::int64_t y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= layers.back().out) fail(ErrorKind::Validation, "label out of range");
    }
    std::vector<double> x(inputs.values().begin(), inputs.values().end());
    std::vector<std::int64_t> y(labels.begin(), labels.end());
    std::vector<Dense> grads;
    LossGradients out;
    out.loss = run_batch(layers, x, y, &grads);
    for (const Dense& g : grads) {
        out.grads[g.name + ".weight"] = g.w;
        out.grads[g.name + ".bias"] = g.b;
    }
    return out;
}

Network plant_duplicates(const Network& net, std::size_t producer, std::span<const PlantSpec> plants,
                         std::optional<std::size_t> max_width) {
    const MergeablePosition pos = find_position(net, producer);
    const std::size_t d = pos.dim;
    std::vector<char> used(d, 0);
    std::size_t extra = 0;
    for (const PlantSpec& p : plants) {
        if (p.source >= d) fail(ErrorKind::InvalidArgument, "plant source " + std::to_string(p.source) + " out of range");
        if (used[p.source]) fail(ErrorKind::InvalidArgument, "plant sources must be distinct");
        used[p.source] = 1;
        extra += p.count;
    }
    if (extra == 0) return net;
    const std::size_t nd = d + extra;
    if (max_width && nd > *max_width) {
        fail(ErrorKind::Dimension, "planting grows layer " + std::to_string(producer) + " to " + std::to_string(nd) +
                                       " features, above the limit " + std::to_string(*max_width));
    }

    // origin[f] is the source feature that new feature f copies.
    std::vector<std::size_t> origin(d);
    for (std::size_t f = 0; f < d; ++f) origin[f] = f;
    std::vector<std::size_t> share(d, 1);
    for (const PlantSpec& p : plants) {
        share[p.source] = p.count + 1;
        origin.insert(origin.end(), p.count, p.source);
    }

    Network out = net;
    const DType dtype = net.dtype();
    const auto pv = detail::producer_view(net, pos);
    const Tensor& w = net.weight(producer);
    Shape wshape = w.shape();
    wshape[0] = nd;
    Tensor nw(wshape, dtype);
    for (std::size_t f = 0; f < nd; ++f) {
        for (std::size_t r = 0; r < pv.row; ++r) nw[f * pv.row + r] = w[origin[f] * pv.row + r];
    }
    std::optional<Tensor> nb;
    if (const Tensor* b = net.bias(producer)) {
        nb = Tensor({nd}, dtype);
        for (std::size_t f = 0; f < nd; ++f) (*nb)[f] = (*b)[origin[f]];
    }
    LayerSpec pspec = net.layer(producer);
    pspec.out = nd;
    out.stage_layer(producer, std::move(pspec), std::move(nw), std::move(nb));

    for (const ConsumerBlock& c : pos.consumers) {
        const auto cv = detail::consumer_view(net, pos, c);
        const Tensor& cw = net.weight(c.layer);
        Shape cshape = cw.shape();
        LayerSpec cspec = net.layer(c.layer);
        if (cspec.kind == LayerKind::Conv2d) {
            cshape[1] = nd;
            cspec.in = nd;
        } else {
            cshape[1] = nd * cv.slice;
            cspec.in = nd * cv.slice;
        }
        Tensor ncw(cshape, dtype);
        detail::ConsumerView nv{cv.out, nd, cv.slice};
        for (std::size_t o = 0; o < cv.out; ++o) {
            for (std::size_t f = 0; f < nd; ++f) {
                const std::size_t src = origin[f];
                for (std::size_t s = 0; s < cv.slice; ++s) {
                    ncw[nv.index(o, f, s)] = cw[cv.index(o, src, s)] / static_cast<double>(share[src]);
                }
            }
        }
        ncw.round_to_dtype();
        std::optional<Tensor> cb;
        if (const Tensor* b = net.bias(c.layer)) cb = *b;
        out.stage_layer(c.layer, std::move(cspec), std::move(ncw), std::move(cb));
    }
    out.commit();
    return out;
}

const char* to_string(SyntheticKind kind) noexcept {
    switch (kind) {
        case SyntheticKind::Blobs: return "blobs";
        case SyntheticKind::XorGrid: return "xor-grid";
        case SyntheticKind::Ring: return "ring";
    }
    return "unknown";
}

SyntheticKind synthetic_kind_from_string(const std::string& name) {
    for (SyntheticKind k : {SyntheticKind::Blobs, SyntheticKind::XorGrid, SyntheticKind::Ring}) {
        if (name == to_string(k)) return k;
    }
    fail(ErrorKind::InvalidArgument, "unknown dataset kind '" + name + "'");
}

LabeledDataset make_synthetic_dataset(SyntheticKind kind, std::size_t n, double noise, std::uint64_t seed,
                                      std::size_t classes) {
    if (!(noise >= 0.0)) fail(ErrorKind::InvalidArgument, "noise must be non-negative");
    if (kind != SyntheticKind::Blobs && classes != 2) {
        fail(ErrorKind::InvalidArgument, std::string(to_string(kind)) + " datasets have exactly two classes");
    }
    if (classes < 2) fail(ErrorKind::InvalidArgument, "need at least two classes");

    std::mt19937_64 rng(seed);
    constexpr double tau = 2.0 * std::numbers::pi;
    auto in_annulus = [&](double r_lo, double r_hi, double& x, double& y) {
        const double r = std::sqrt(r_lo * r_lo + detail::uniform01(rng) * (r_hi * r_hi - r_lo * r_lo));
        const double t = tau * detail::uniform01(rng);
        x = r * std::cos(t);
        y = r * std::sin(t);
    };

    std::vector<double> xs;
    std::vector<std::int64_t> labels;
    xs.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % classes;
        double x = 0.0, y = 0.0;
        switch (kind) {
            case SyntheticKind::Blobs: {
                in_annulus(0.0, 1.0, x, y);
                const double t = tau * static_cast<double>(label) / static_cast<double>(classes);
                x += 3.0 * std::cos(t);
                y += 3.0 * std::sin(t);
                break;
            }
            case SyntheticKind::XorGrid: {
                // Class 0 on quadrants I/III, class 1 on II/IV.
                const double sx = detail::uniform01(rng) < 0.5 ? -1.0 : 1.0;
                const double sy = label == 0 ? sx : -sx;
                x = sx * detail::uniform(rng, 0.1, 1.0);
                y = sy * detail::uniform(rng, 0.1, 1.0);
                break;
            }
            case SyntheticKind::Ring:
                if (label == 0) {
                    in_annulus(0.0, 1.0, x, y);
                } else {
                    in_annulus(1.3, 1.6, x, y);
                }
                break;
        }
        if (noise > 0.0) {
            x += noise * detail::normal(rng);
            y += noise * detail::normal(rng);
        }
        xs.push_back(x);
        xs.push_back(y);
        labels.push_back(static_cast<std::int64_t>(label));
    }
    return LabeledDataset(Tensor({n, 2}, std::move(xs), DType::f32), std::move(labels), classes);
}

}  // namespace featmerge
