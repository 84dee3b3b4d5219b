#include "featmerge/archive.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>

#include "featmerge/error.hpp"

namespace featmerge {

using nlohmann::json;

namespace {

std::size_t dtype_width(const std::string& dtype) {
    if (dtype == "f32") return 4;
    if (dtype == "f64" || dtype == "i64") return 8;
    return 0;
}

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t width) {
    for (std::size_t i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, std::size_t width) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

class Writer {
public:
    explicit Writer(json metadata) { metadata_ = std::move(metadata); }

    void add(const std::string& name, const Tensor& t) {
        const std::string dtype = to_string(t.dtype());
        const std::size_t start = payload_.size();
        for (double v : t.values()) {
            if (t.dtype() == DType::f32) {
                put_le(payload_, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
            } else {
                put_le(payload_, std::bit_cast<std::uint64_t>(v), 8);
            }
        }
        record(name, dtype, t.shape(), start);
    }

    void add(const std::string& name, const std::vector<std::int64_t>& v) {
        const std::size_t start = payload_.size();
        for (std::int64_t x : v) put_le(payload_, static_cast<std::uint64_t>(x), 8);
        record(name, "i64", {v.size()}, start);
    }

    std::vector<std::uint8_t> finish() const {
        json manifest = {{"entries", entries_}, {"metadata", metadata_}};
        const std::string text = manifest.dump();
        std::vector<std::uint8_t> out;
        out.reserve(8 + text.size() + payload_.size());
        put_le(out, text.size(), 8);
        out.insert(out.end(), text.begin(), text.end());
        out.insert(out.end(), payload_.begin(), payload_.end());
        return out;
    }

private:
    void record(const std::string& name, const std::string& dtype, const Shape& shape, std::size_t start) {
        entries_[name] = {{"dtype", dtype},
                          {"shape", shape},
                          {"byte_offset", start},
                          {"byte_length", payload_.size() - start}};
    }

    json entries_ = json::object();
    json metadata_;
    std::vector<std::uint8_t> payload_;
};

struct Reader {
    ArchiveManifest manifest;
    const std::uint8_t* payload = nullptr;

    explicit Reader(const std::vector<std::uint8_t>& bytes) {
        manifest = read_manifest(bytes);
        payload = bytes.data() + 8 + get_le(bytes.data(), 8);
    }

    const ArchiveEntry& entry(const std::string& name) const {
        auto it = manifest.entries.find(name);
        if (it == manifest.entries.end()) fail(ErrorKind::Format, "missing required entry '" + name + "'");
        return it->second;
    }

    Tensor tensor(const std::string& name) const {
        const ArchiveEntry& e = entry(name);
        if (e.dtype == "i64") fail(ErrorKind::Format, "entry '" + name + "' must be floating point");
        const DType dtype = dtype_from_string(e.dtype);
        const std::size_t width = dtype_width(e.dtype);
        std::vector<double> values(shape_product(e.shape));
        const std::uint8_t* p = payload + e.byte_offset;
        for (std::size_t i = 0; i < values.size(); ++i, p += width) {
            values[i] = dtype == DType::f32 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p, 4))))
                                            : std::bit_cast<double>(get_le(p, 8));
        }
        return Tensor(e.shape, std::move(values), dtype);
    }

    std::vector<std::int64_t> integers(const std::string& name) const {
        const ArchiveEntry& e = entry(name);
        if (e.dtype != "i64") fail(ErrorKind::Format, "entry '" + name + "' must be i64");
        std::vector<std::int64_t> values(shape_product(e.shape));
        for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] = static_cast<std::int64_t>(get_le(payload + e.byte_offset + 8 * i, 8));
        }
        return values;
    }
};

json base_metadata(const char* kind) {
    return {{"format_version", kArchiveVersion}, {"kind", kind}};
}

void expect_kind(const ArchiveManifest& m, const std::string& kind) {
    if (!m.metadata.contains("kind") || m.metadata["kind"] != kind) {
        fail(ErrorKind::Format, "archive does not hold a " + kind);
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "short write to '" + path.string() + "'");
}

}  // namespace

json layer_to_json(const LayerSpec& l) {
    json j = {{"name", l.name}, {"kind", to_string(l.kind)}};
    switch (l.kind) {
        case LayerKind::Linear:
            j.update({{"in", l.in}, {"out", l.out}, {"has_bias", l.has_bias}});
            break;
        case LayerKind::Conv2d:
            j.update({{"in", l.in},
                      {"out", l.out},
                      {"kernel_h", l.kernel_h},
                      {"kernel_w", l.kernel_w},
                      {"stride", l.stride},
                      {"padding", l.padding},
                      {"has_bias", l.has_bias}});
            break;
        case LayerKind::MaxPool2d:
        case LayerKind::AvgPool2d:
            j.update({{"kernel", l.kernel_h}, {"stride", l.stride}});
            break;
        case LayerKind::ResidualAdd:
            j["source"] = l.source;
            break;
        default:
            break;
    }
    return j;
}

LayerSpec layer_from_json(const json& j) {
    try {
        const std::string name = j.at("name");
        switch (layer_kind_from_string(j.at("kind"))) {
            case LayerKind::Linear: return LayerSpec::linear(name, j.at("in"), j.at("out"), j.at("has_bias"));
            case LayerKind::Conv2d:
                return LayerSpec::conv2d(name, j.at("in"), j.at("out"), j.at("kernel_h"), j.at("kernel_w"),
                                         j.at("stride"), j.at("padding"), j.at("has_bias"));
            case LayerKind::ReLU: return LayerSpec::relu(name);
            case LayerKind::MaxPool2d: return LayerSpec::max_pool(name, j.at("kernel"), j.at("stride"));
            case LayerKind::AvgPool2d: return LayerSpec::avg_pool(name, j.at("kernel"), j.at("stride"));
            case LayerKind::GlobalAvgPool: return LayerSpec::global_avg_pool(name);
            case LayerKind::Flatten: return LayerSpec::flatten(name);
            case LayerKind::ResidualAdd: return LayerSpec::residual_add(name, j.at("source"));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("bad layer description: ") + e.what());
    }
    fail(ErrorKind::Format, "bad layer description");
}

void validate_manifest(const ArchiveManifest& m, std::uint64_t payload_size) {
    if (!m.metadata.is_object() || !m.metadata.contains("format_version")) {
        fail(ErrorKind::Format, "manifest has no format_version");
    }
    if (m.metadata["format_version"] != kArchiveVersion) {
        fail(ErrorKind::Format, "unsupported format version " + m.metadata["format_version"].dump());
    }
    std::vector<std::pair<std::uint64_t, std::string>> spans;
    for (const auto& [name, e] : m.entries) {
        const std::size_t width = dtype_width(e.dtype);
        if (width == 0) fail(ErrorKind::Format, "entry '" + name + "' has unknown dtype '" + e.dtype + "'");
        if (e.byte_length != shape_product(e.shape) * width) {
            fail(ErrorKind::Format, "entry '" + name + "' byte length " + std::to_string(e.byte_length) +
                                        " disagrees with shape " + shape_string(e.shape));
        }
        if (e.byte_offset > payload_size || e.byte_length > payload_size - e.byte_offset) {
            fail(ErrorKind::Format, "entry '" + name + "' runs past the payload (truncated archive)");
        }
        spans.emplace_back(e.byte_offset, name);
    }
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i) {
        const ArchiveEntry& prev = m.entries.at(spans[i - 1].second);
        if (prev.byte_offset + prev.byte_length > spans[i].first) {
            fail(ErrorKind::Format, "entry '" + spans[i].second + "' overlaps '" + spans[i - 1].second + "'");
        }
    }
}

ArchiveManifest read_manifest(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8) fail(ErrorKind::Format, "archive shorter than its header");
    const std::uint64_t length = get_le(bytes.data(), 8);
    if (length > bytes.size() - 8) fail(ErrorKind::Format, "manifest length exceeds file size");
    ArchiveManifest m;
    try {
        json j = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(length));
        for (const auto& [name, e] : j.at("entries").items()) {
            m.entries[name] = {e.at("dtype").get<std::string>(), e.at("shape").get<Shape>(),
                               e.at("byte_offset").get<std::uint64_t>(), e.at("byte_length").get<std::uint64_t>()};
        }
        m.metadata = j.at("metadata");
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("unreadable manifest: ") + e.what());
    }
    validate_manifest(m, bytes.size() - 8 - length);
    return m;
}

std::vector<std::uint8_t> encode_network(const Network& net) {
    json meta = base_metadata("network");
    meta["input_shape"] = net.input_shape();
    meta["dtype"] = to_string(net.dtype());
    json layers = json::array();
    for (const LayerSpec& l : net.layers()) layers.push_back(layer_to_json(l));
    meta["layers"] = std::move(layers);

    Writer w(std::move(meta));
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
        const LayerSpec& l = net.layer(i);
        if (!l.parametric()) continue;
        w.add(weight_name(l), net.weight(i));
        if (const Tensor* b = net.bias(i)) w.add(bias_name(l), *b);
    }
    return w.finish();
}

Network decode_network(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    expect_kind(r.manifest, "network");
    Shape input_shape;
    std::vector<LayerSpec> layers;
    try {
        input_shape = r.manifest.metadata.at("input_shape").get<Shape>();
        for (const json& l : r.manifest.metadata.at("layers")) layers.push_back(layer_from_json(l));
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("bad network metadata: ") + e.what());
    }
    std::map<std::string, Tensor> params;
    for (const auto& [name, e] : r.manifest.entries) params.emplace(name, r.tensor(name));
    for (const LayerSpec& l : layers) {
        if (l.parametric()) r.entry(weight_name(l));
        if (l.parametric() && l.has_bias) r.entry(bias_name(l));
    }
    return Network(std::move(input_shape), std::move(layers), std::move(params));
}

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& data) {
    json meta = base_metadata("dataset");
    meta["num_classes"] = data.num_classes();
    Writer w(std::move(meta));
    w.add("inputs", data.inputs());
    w.add("labels", data.labels());
    return w.finish();
}

LabeledDataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    expect_kind(r.manifest, "dataset");
    std::size_t classes = 0;
    try {
        classes = r.manifest.metadata.at("num_classes").get<std::size_t>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("bad dataset metadata: ") + e.what());
    }
    if (r.entry("inputs").dtype != "f32") fail(ErrorKind::Format, "entry 'inputs' must be f32");
    return LabeledDataset(r.tensor("inputs"), r.integers("labels"), classes);
}

void save_network(const Network& net, const std::filesystem::path& path) { write_file(path, encode_network(net)); }
Network load_network(const std::filesystem::path& path) { return decode_network(read_file(path)); }
void save_dataset(const LabeledDataset& data, const std::filesystem::path& path) {
    write_file(path, encode_dataset(data));
}
LabeledDataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

}  // namespace featmerge
