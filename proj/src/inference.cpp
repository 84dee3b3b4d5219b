#include "featmerge/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "featmerge/error.hpp"
#include "featmerge/parallel.hpp"

namespace featmerge {

LabeledDataset::LabeledDataset(Tensor inputs, std::vector<std::int64_t> labels, std::size_t num_classes)
    : inputs_(inputs.as_dtype(DType::f32)), labels_(std::move(labels)), num_classes_(num_classes) {
    if (inputs_.rank() < 2) fail(ErrorKind::Validation, "dataset inputs need shape [N, ...]");
    if (inputs_.dim(0) != labels_.size()) {
        fail(ErrorKind::Validation, "dataset has " + std::to_string(inputs_.dim(0)) + " inputs but " +
                                        std::to_string(labels_.size()) + " labels");
    }
    if (num_classes_ == 0) fail(ErrorKind::Validation, "dataset needs at least one class");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] < 0 || static_cast<std::size_t>(labels_[i]) >= num_classes_) {
            fail(ErrorKind::Validation, "label " + std::to_string(labels_[i]) + " at sample " + std::to_string(i) +
                                            " outside [0, " + std::to_string(num_classes_) + ")");
        }
    }
    if (!inputs_.all_finite()) fail(ErrorKind::Validation, "dataset inputs have non-finite values");
}

Shape LabeledDataset::sample_shape() const {
    return Shape(inputs_.shape().begin() + 1, inputs_.shape().end());
}

namespace {

using Buffer = std::vector<double>;

Buffer linear(const LayerSpec& l, const Tensor& w, const Tensor* b, const Buffer& x) {
    Buffer y(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
        const double* row = w.values().data() + o * l.in;
        double acc = 0.0;
        for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * x[i];
        y[o] = b ? acc + (*b)[o] : acc;
    }
    return y;
}

// im2col followed by a plain GEMM; zero padding.
Buffer conv2d(const LayerSpec& l, const Tensor& w, const Tensor* b, const Buffer& x, const Shape& in_shape,
              const Shape& out_shape) {
    const std::size_t C = in_shape[0], H = in_shape[1], W = in_shape[2];
    const std::size_t OH = out_shape[1], OW = out_shape[2];
    const std::size_t K = C * l.kernel_h * l.kernel_w, P = OH * OW;
    Buffer cols(K * P, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t kh = 0; kh < l.kernel_h; ++kh) {
            for (std::size_t kw = 0; kw < l.kernel_w; ++kw) {
                const std::size_t k = (c * l.kernel_h + kh) * l.kernel_w + kw;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    const long ih = static_cast<long>(oh * l.stride + kh) - static_cast<long>(l.padding);
                    if (ih < 0 || ih >= static_cast<long>(H)) continue;
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const long iw = static_cast<long>(ow * l.stride + kw) - static_cast<long>(l.padding);
                        if (iw < 0 || iw >= static_cast<long>(W)) continue;
                        cols[k * P + oh * OW + ow] = x[(c * H + ih) * W + iw];
                    }
                }
            }
        }
    }
    Buffer y(l.out * P, 0.0);
    for (std::size_t o = 0; o < l.out; ++o) {
        const double* wrow = w.values().data() + o * K;
        double* yrow = y.data() + o * P;
        for (std::size_t k = 0; k < K; ++k) {
            const double wk = wrow[k];
            const double* crow = cols.data() + k * P;
            for (std::size_t p = 0; p < P; ++p) yrow[p] += wk * crow[p];
        }
        if (b) {
            for (std::size_t p = 0; p < P; ++p) yrow[p] += (*b)[o];
        }
    }
    return y;
}

Buffer pool(const LayerSpec& l, const Buffer& x, const Shape& in_shape, const Shape& out_shape, bool is_max) {
    const std::size_t C = in_shape[0], H = in_shape[1], W = in_shape[2];
    const std::size_t OH = out_shape[1], OW = out_shape[2];
    Buffer y(C * OH * OW);
    const double area = static_cast<double>(l.kernel_h * l.kernel_w);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t oh = 0; oh < OH; ++oh) {
            for (std::size_t ow = 0; ow < OW; ++ow) {
                double acc = is_max ? -std::numeric_limits<double>::infinity() : 0.0;
                for (std::size_t kh = 0; kh < l.kernel_h; ++kh) {
                    for (std::size_t kw = 0; kw < l.kernel_w; ++kw) {
                        const double v = x[(c * H + oh * l.stride + kh) * W + ow * l.stride + kw];
                        acc = is_max ? std::max(acc, v) : acc + v;
                    }
                }
                y[(c * OH + oh) * OW + ow] = is_max ? acc : acc / area;
            }
        }
    }
    (void)H;
    return y;
}

Buffer global_avg_pool(const Buffer& x, const Shape& in_shape) {
    const std::size_t C = in_shape[0], HW = in_shape[1] * in_shape[2];
    Buffer y(C);
    for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < HW; ++i) acc += x[c * HW + i];
        y[c] = acc / static_cast<double>(HW);
    }
    return y;
}

Shape input_shape_of(const Network& net, std::size_t layer) {
    return layer == 0 ? net.input_shape() : net.feature_shapes()[layer - 1];
}

// Runs layers [first, last] on one sample.
Buffer run_sample(const Network& net, Buffer cur, std::size_t first, std::size_t last,
                  const std::set<std::size_t>& sources) {
    std::map<std::size_t, Buffer> saved;
    Shape shape = input_shape_of(net, first);
    for (std::size_t i = first; i <= last; ++i) {
        const LayerSpec& l = net.layer(i);
        const Shape& out_shape = net.feature_shapes()[i];
        switch (l.kind) {
            case LayerKind::Linear: cur = linear(l, net.weight(i), net.bias(i), cur); break;
            case LayerKind::Conv2d: cur = conv2d(l, net.weight(i), net.bias(i), cur, shape, out_shape); break;
            case LayerKind::ReLU:
                for (double& v : cur) v = v > 0.0 ? v : 0.0;
                break;
            case LayerKind::MaxPool2d: cur = pool(l, cur, shape, out_shape, true); break;
            case LayerKind::AvgPool2d: cur = pool(l, cur, shape, out_shape, false); break;
            case LayerKind::GlobalAvgPool: cur = global_avg_pool(cur, shape); break;
            case LayerKind::Flatten: break;
            case LayerKind::ResidualAdd: {
                auto it = saved.find(l.source);
                if (it == saved.end()) {
                    fail(ErrorKind::Structure, "residual source " + std::to_string(l.source) +
                                                   " precedes the first evaluated layer");
                }
                for (std::size_t k = 0; k < cur.size(); ++k) cur[k] += it->second[k];
                break;
            }
        }
        shape = out_shape;
        if (sources.count(i)) saved[i] = cur;
    }
    return cur;
}

Tensor run_range(const Network& net, const Tensor& batch, std::size_t first, std::size_t last) {
    if (last >= net.num_layers() || first > last) fail(ErrorKind::InvalidArgument, "layer index out of range");
    const Shape in_shape = input_shape_of(net, first);
    if (batch.rank() != in_shape.size() + 1 || !std::equal(in_shape.begin(), in_shape.end(), batch.shape().begin() + 1)) {
        fail(ErrorKind::Dimension, "batch of shape " + shape_string(batch.shape()) + " does not match input " +
                                       shape_string(in_shape));
    }
    std::set<std::size_t> sources;
    for (const LayerSpec& l : net.layers()) {
        if (l.kind == LayerKind::ResidualAdd) sources.insert(l.source);
    }

    const std::size_t n = batch.dim(0);
    const std::size_t in_size = shape_product(in_shape);
    const Shape& out_shape = net.feature_shapes()[last];
    const std::size_t out_size = shape_product(out_shape);
    Shape result_shape{n};
    result_shape.insert(result_shape.end(), out_shape.begin(), out_shape.end());
    Tensor result(result_shape, DType::f64);
    std::span<double> dst = result.values();
    std::span<const double> src = batch.values();

    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s) {
            Buffer x(src.begin() + s * in_size, src.begin() + (s + 1) * in_size);
            Buffer y = run_sample(net, std::move(x), first, last, sources);
            std::copy(y.begin(), y.end(), dst.begin() + s * out_size);
        }
    });
    return result;
}

}  // namespace

Tensor forward(const Network& net, const Tensor& batch) {
    return run_range(net, batch, 0, net.num_layers() - 1);
}

FeatureMap layer_features(const Network& net, const Tensor& batch, std::size_t layer) {
    if (layer >= net.num_layers()) fail(ErrorKind::InvalidArgument, "layer " + std::to_string(layer) + " out of range");
    return {layer, run_range(net, batch, 0, layer)};
}

Tensor forward_from(const Network& net, const Tensor& features, std::size_t first_layer) {
    if (first_layer >= net.num_layers()) fail(ErrorKind::InvalidArgument, "layer index out of range");
    return run_range(net, features, first_layer, net.num_layers() - 1);
}

std::size_t argmax_lowest(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

namespace {

void accumulate_logits(const Tensor& logits, std::span<const std::int64_t> labels, std::size_t& correct,
                       double& loss) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size()) fail(ErrorKind::Dimension, "logits/labels mismatch");
    const std::size_t k = logits.dim(1);
    for (std::size_t s = 0; s < labels.size(); ++s) {
        std::span<const double> row = logits.values().subspan(s * k, k);
        const std::size_t label = static_cast<std::size_t>(labels[s]);
        if (label >= k) fail(ErrorKind::Validation, "label exceeds logit count");
        const double peak = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - peak);
        loss += peak + std::log(sum) - row[label];
        correct += argmax_lowest(row) == label;
    }
}

}  // namespace

Metrics evaluate_logits(const Tensor& logits, std::span<const std::int64_t> labels) {
    if (labels.empty()) fail(ErrorKind::Validation, "cannot evaluate an empty dataset");
    std::size_t correct = 0;
    double loss = 0.0;
    accumulate_logits(logits, labels, correct, loss);
    const double n = static_cast<double>(labels.size());
    return {static_cast<double>(correct) / n, loss / n};
}

Tensor slice_batch(const Tensor& batch, std::size_t begin, std::size_t end) {
    Shape shape = batch.shape();
    const std::size_t row = shape_product(shape) / std::max<std::size_t>(shape[0], 1);
    shape[0] = end - begin;
    std::vector<double> values(batch.values().begin() + begin * row, batch.values().begin() + end * row);
    return Tensor(shape, std::move(values), DType::f64);
}

Metrics evaluate(const Network& net, const LabeledDataset& data) {
    if (data.size() == 0) fail(ErrorKind::Validation, "cannot evaluate an empty dataset");
    constexpr std::size_t chunk = 1024;
    std::size_t correct = 0;
    double loss = 0.0;
    for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
        const std::size_t end = std::min(data.size(), begin + chunk);
        Tensor logits = forward(net, slice_batch(data.inputs(), begin, end));
        accumulate_logits(logits, std::span<const std::int64_t>(data.labels().data() + begin, end - begin), correct,
                          loss);
    }
    const double n = static_cast<double>(data.size());
    return {static_cast<double>(correct) / n, loss / n};
}

}  // namespace featmerge
