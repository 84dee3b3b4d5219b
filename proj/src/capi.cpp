#include "featmerge/featmerge.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "featmerge/archive.hpp"
#include "featmerge/connectivity.hpp"
#include "featmerge/error.hpp"
#include "featmerge/ifm.hpp"
#include "featmerge/inference.hpp"
#include "featmerge/matching.hpp"
#include "featmerge/report.hpp"
#include "featmerge/toytrain.hpp"

struct fm_network {
    featmerge::Network net;
};

struct fm_dataset {
    featmerge::LabeledDataset data;
};

namespace {

using namespace featmerge;
using nlohmann::json;

thread_local std::string last_error;

fm_status status_of(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Dimension: return FM_ERR_DIMENSION;
        case ErrorKind::Structure: return FM_ERR_STRUCTURE;
        case ErrorKind::Format: return FM_ERR_FORMAT;
        case ErrorKind::Validation: return FM_ERR_VALIDATION;
        case ErrorKind::Io: return FM_ERR_IO;
        case ErrorKind::Unsupported: return FM_ERR_UNSUPPORTED;
        case ErrorKind::InvalidArgument: return FM_ERR_INVALID_ARGUMENT;
        case ErrorKind::Invariant: return FM_ERR_INTERNAL;
    }
    return FM_ERR_INTERNAL;
}

template <typename F>
fm_status guarded(F&& body) {
    try {
        body();
        return FM_OK;
    } catch (const Error& e) {
        last_error = e.what();
        return status_of(e.kind());
    } catch (const json::exception& e) {
        last_error = std::string("invalid argument: ") + e.what();
        return FM_ERR_INVALID_ARGUMENT;
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return FM_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = std::string("internal error: ") + e.what();
        return FM_ERR_INTERNAL;
    } catch (...) {
        last_error = "internal error";
        return FM_ERR_INTERNAL;
    }
}

void require(const void* p, const char* what) {
    if (!p) fail(ErrorKind::InvalidArgument, std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

json parse_config(const char* text) {
    if (!text || !*text) return json(nullptr);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
    }
}

std::size_t layer_params(const Network& net, std::size_t layer) {
    std::size_t total = net.weight(layer).size();
    if (const Tensor* b = net.bias(layer)) total += b->size();
    return total;
}

// Parameters held by a position's producer and consumers, before and after merging.
json position_table(const Network& before, const Network& after, const std::vector<MergeRecord>& records) {
    json out = json::array();
    for (const MergeRecord& r : records) {
        const MergeablePosition pos = find_position(before, r.producer);
        std::size_t p0 = layer_params(before, pos.producer);
        std::size_t p1 = layer_params(after, pos.producer);
        for (const ConsumerBlock& c : pos.consumers) {
            p0 += layer_params(before, c.layer);
            p1 += layer_params(after, c.layer);
        }
        out.push_back({{"producer", r.producer},
                       {"original_features", r.original_dim},
                       {"remaining_features", r.final_dim()},
                       {"merges", r.merge_log.size()},
                       {"params_before", p0},
                       {"params_after", p1}});
    }
    return out;
}

IterationTiming merge_timing(const std::vector<MergeRecord>& records) {
    std::vector<double> samples;
    for (const MergeRecord& r : records) samples.insert(samples.end(), r.iteration_seconds.begin(), r.iteration_seconds.end());
    return summarize_timing(std::move(samples));
}

}  // namespace

extern "C" {

const char* fm_version(void) { return "1.0.0"; }

const char* fm_last_error(void) { return last_error.c_str(); }

const char* fm_status_name(fm_status status) {
    switch (status) {
        case FM_OK: return "ok";
        case FM_ERR_INVALID_ARGUMENT: return "invalid argument";
        case FM_ERR_DIMENSION: return "dimension error";
        case FM_ERR_STRUCTURE: return "structural error";
        case FM_ERR_FORMAT: return "format error";
        case FM_ERR_VALIDATION: return "validation error";
        case FM_ERR_IO: return "I/O error";
        case FM_ERR_UNSUPPORTED: return "unsupported";
        case FM_ERR_INTERNAL: return "internal error";
    }
    return "unknown";
}

void fm_string_free(char* s) { std::free(s); }

fm_status fm_network_load(const char* path, fm_network** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new fm_network{load_network(path)};
    });
}

fm_status fm_network_save(const fm_network* net, const char* path) {
    return guarded([&] {
        require(net, "network");
        require(path, "path");
        save_network(net->net, path);
    });
}

fm_status fm_network_clone(const fm_network* net, fm_network** out) {
    return guarded([&] {
        require(net, "network");
        require(out, "out");
        *out = new fm_network{net->net};
    });
}

void fm_network_free(fm_network* net) { delete net; }

fm_status fm_network_param_count(const fm_network* net, uint64_t* out) {
    return guarded([&] {
        require(net, "network");
        require(out, "out");
        *out = net->net.parameter_count();
    });
}

fm_status fm_network_describe(const fm_network* net, char** json_out) {
    return guarded([&] {
        require(net, "network");
        require(json_out, "json_out");
        *json_out = dup_string(describe(net->net).dump());
    });
}

fm_status fm_network_forward(const fm_network* net, const float* inputs, size_t batch, size_t input_len,
                             double* logits, size_t logits_len) {
    return guarded([&] {
        require(net, "network");
        require(inputs, "inputs");
        require(logits, "logits");
        const Network& n = net->net;
        if (input_len != shape_product(n.input_shape())) fail(ErrorKind::Dimension, "input length mismatch");
        if (logits_len != shape_product(n.output_shape())) fail(ErrorKind::Dimension, "logit length mismatch");
        Shape shape{batch};
        shape.insert(shape.end(), n.input_shape().begin(), n.input_shape().end());
        Tensor x(shape, std::vector<double>(inputs, inputs + batch * input_len), DType::f64);
        Tensor y = forward(n, x);
        std::copy(y.values().begin(), y.values().end(), logits);
    });
}

fm_status fm_network_equal(const fm_network* a, const fm_network* b, int* equal) {
    return guarded([&] {
        require(a, "a");
        require(b, "b");
        require(equal, "equal");
        *equal = a->net == b->net ? 1 : 0;
    });
}

fm_status fm_dataset_load(const char* path, fm_dataset** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new fm_dataset{load_dataset(path)};
    });
}

fm_status fm_dataset_save(const fm_dataset* data, const char* path) {
    return guarded([&] {
        require(data, "dataset");
        require(path, "path");
        save_dataset(data->data, path);
    });
}

fm_status fm_dataset_make(const char* kind, size_t n, double noise, uint64_t seed, size_t classes, fm_dataset** out) {
    return guarded([&] {
        require(kind, "kind");
        require(out, "out");
        *out = new fm_dataset{make_synthetic_dataset(synthetic_kind_from_string(kind), n, noise, seed, classes)};
    });
}

void fm_dataset_free(fm_dataset* data) { delete data; }

fm_status fm_dataset_size(const fm_dataset* data, size_t* n) {
    return guarded([&] {
        require(data, "dataset");
        require(n, "n");
        *n = data->data.size();
    });
}

fm_status fm_evaluate(const fm_network* net, const fm_dataset* data, double* accuracy, double* loss) {
    return guarded([&] {
        require(net, "network");
        require(data, "dataset");
        const Metrics m = evaluate(net->net, data->data);
        if (accuracy) *accuracy = m.accuracy;
        if (loss) *loss = m.loss;
    });
}

fm_status fm_analyze(const fm_network* net, long position, int bias_in_distance, char** json_out) {
    return guarded([&] {
        require(net, "network");
        require(json_out, "json_out");
        std::vector<MergeablePosition> positions;
        if (position < 0) {
            positions = enumerate_mergeable_positions(net->net);
        } else {
            positions.push_back(find_position(net->net, static_cast<std::size_t>(position)));
        }
        json out = json::array();
        for (const MergeablePosition& pos : positions) {
            const DistanceMatrix dist = distance_matrix(net->net, pos, bias_in_distance != 0);
            json j = to_json(dist);
            j["csv"] = distance_csv(dist);
            out.push_back(std::move(j));
        }
        *json_out = dup_string(out.dump());
    });
}

fm_status fm_merge(const fm_network* net, const char* config_json, fm_network** merged, char** report_json) {
    return guarded([&] {
        require(net, "network");
        const IfmConfig config = ifm_config_from_json(parse_config(config_json));
        IfmResult result = ifm(net->net, config);
        json records = json::array();
        for (const MergeRecord& r : result.records) records.push_back(to_json(r));
        const json report = {{"config", to_json(config)},
                             {"records", records},
                             {"positions", position_table(net->net, result.net, result.records)},
                             {"profile", to_json(complexity_profile(result.records))},
                             {"params_before", net->net.parameter_count()},
                             {"params_after", result.net.parameter_count()},
                             {"iteration_timing", to_json(merge_timing(result.records))}};
        if (report_json) *report_json = dup_string(report.dump());
        if (merged) *merged = new fm_network{std::move(result.net)};
    });
}

fm_status fm_complexity(const fm_network* net, const char* config_json, char** json_out) {
    return guarded([&] {
        require(net, "network");
        require(json_out, "json_out");
        const IfmConfig config = ifm_config_from_json(parse_config(config_json));
        const ComplexityProfile profile = complexity_profile(net->net, config);
        const json out = {{"beta", config.beta}, {"profile", to_json(profile)}, {"csv", profile_csv(profile)}};
        *json_out = dup_string(out.dump());
    });
}

fm_status fm_grid_search(const fm_network* net, const fm_dataset* data, const double* betas, size_t n_betas,
                         double retention, const char* config_json, char** json_out) {
    return guarded([&] {
        require(net, "network");
        require(data, "dataset");
        require(json_out, "json_out");
        std::vector<double> grid = betas ? std::vector<double>(betas, betas + n_betas) : default_beta_grid();
        const IfmConfig config = ifm_config_from_json(parse_config(config_json));
        const GridResult result = beta_grid_search(net->net, grid, data->data, retention, config);
        json out = to_json(result);
        out["csv"] = grid_csv(result);
        *json_out = dup_string(out.dump());
    });
}

fm_status fm_time_iterations(const fm_network* net, const char* config_json, size_t repeats, char** json_out) {
    return guarded([&] {
        require(net, "network");
        require(json_out, "json_out");
        const IfmConfig config = ifm_config_from_json(parse_config(config_json));
        *json_out = dup_string(to_json(time_ifm_iterations(net->net, config, repeats)).dump());
    });
}

fm_status fm_interpolate(const fm_network* net, const fm_dataset* data, const char* mode, uint64_t seed,
                         int avoid_clusters, const double* alphas, size_t n_alphas, const char* config_json,
                         char** json_out) {
    return guarded([&] {
        require(net, "network");
        require(data, "dataset");
        require(mode, "mode");
        require(json_out, "json_out");
        const std::string m = mode;
        if (m != "matched" && m != "random") fail(ErrorKind::InvalidArgument, "mode must be 'matched' or 'random'");
        const IfmConfig config = ifm_config_from_json(parse_config(config_json));
        const std::vector<MergeRecord> records = ifm(net->net, config).records;
        const Permutation perm = m == "matched" ? build_swap_permutation(net->net, records)
                                                : random_swap_permutation(records, seed, avoid_clusters != 0);
        const std::vector<double> grid = alphas ? std::vector<double>(alphas, alphas + n_alphas) : default_alphas();
        const InterpolationCurve curve = interpolation_curve(net->net, perm, data->data, grid);
        const json out = {{"mode", m},
                          {"beta", config.beta},
                          {"moved", perm.moved()},
                          {"points", to_json(curve)},
                          {"csv", curve_csv(curve)}};
        *json_out = dup_string(out.dump());
    });
}

fm_status fm_train(const fm_dataset* data, const char* config_json, fm_network** out) {
    return guarded([&] {
        require(data, "dataset");
        require(out, "out");
        const TrainConfig config = train_config_from_json(parse_config(config_json));
        *out = new fm_network{train_mlp(config, data->data)};
    });
}

fm_status fm_plant(const fm_network* net, size_t producer, const size_t* sources, const size_t* counts, size_t n,
                   fm_network** out) {
    return guarded([&] {
        require(net, "network");
        require(out, "out");
        if (n > 0) {
            require(sources, "sources");
            require(counts, "counts");
        }
        std::vector<PlantSpec> plants;
        for (size_t i = 0; i < n; ++i) plants.push_back({sources[i], counts[i]});
        *out = new fm_network{plant_duplicates(net->net, producer, plants)};
    });
}

}  // extern "C"
