#include "featmerge/report.hpp"

#include <charconv>
#include <sstream>

#include "featmerge/archive.hpp"
#include "featmerge/error.hpp"

namespace featmerge {

using nlohmann::json;

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

void expect_object(const json& j, const char* what) {
    if (!j.is_null() && !j.is_object()) fail(ErrorKind::InvalidArgument, std::string(what) + " must be a JSON object");
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

IfmConfig ifm_config_from_json(const json& j, IfmConfig c) {
    expect_object(j, "IFM config");
    if (j.is_null()) return c;
    try {
        read_opt(j, "beta", c.beta);
        if (j.contains("positions") && !j["positions"].is_null()) c.positions = j["positions"].get<std::vector<std::size_t>>();
        if (j.contains("max_merges") && !j["max_merges"].is_null()) c.max_merges = j["max_merges"].get<std::size_t>();
        read_opt(j, "bias_in_distance", c.bias_in_distance);
        read_opt(j, "merge_residual_interior", c.merge_residual_interior);
        read_opt(j, "incremental", c.incremental);
    } catch (const json::exception& e) {
        fail(ErrorKind::InvalidArgument, std::string("bad IFM config: ") + e.what());
    }
    return c;
}

json to_json(const IfmConfig& c) {
    json j = {{"beta", c.beta},
              {"bias_in_distance", c.bias_in_distance},
              {"merge_residual_interior", c.merge_residual_interior},
              {"incremental", c.incremental}};
    j["positions"] = c.positions ? json(*c.positions) : json(nullptr);
    j["max_merges"] = c.max_merges ? json(*c.max_merges) : json(nullptr);
    return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    expect_object(j, "training config");
    if (j.is_null()) return c;
    try {
        read_opt(j, "hidden", c.hidden);
        read_opt(j, "epochs", c.epochs);
        read_opt(j, "batch_size", c.batch_size);
        read_opt(j, "learning_rate", c.learning_rate);
        read_opt(j, "momentum", c.momentum);
        read_opt(j, "weight_decay", c.weight_decay);
        read_opt(j, "milestones", c.milestones);
        read_opt(j, "lr_decay", c.lr_decay);
        read_opt(j, "seed", c.seed);
        if (j.contains("dtype")) c.dtype = dtype_from_string(j["dtype"].get<std::string>());
    } catch (const json::exception& e) {
        fail(ErrorKind::InvalidArgument, std::string("bad training config: ") + e.what());
    }
    return c;
}

json to_json(const TrainConfig& c) {
    return {{"hidden", c.hidden},         {"epochs", c.epochs},         {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate}, {"momentum", c.momentum}, {"weight_decay", c.weight_decay},
            {"milestones", c.milestones}, {"lr_decay", c.lr_decay},     {"seed", c.seed},
            {"dtype", to_string(c.dtype)}};
}

json to_json(const MergeablePosition& pos) {
    json consumers = json::array();
    for (const ConsumerBlock& c : pos.consumers) consumers.push_back({{"layer", c.layer}, {"block", c.block}});
    return {{"producer", pos.producer},
            {"dim", pos.dim},
            {"consumers", consumers},
            {"in_residual_block", pos.in_residual_block}};
}

json to_json(const MergeRecord& r) {
    json log = json::array();
    for (const MergeStep& s : r.merge_log) log.push_back({s.m, s.n, s.distance});
    return {{"producer", r.producer},
            {"original_dim", r.original_dim},
            {"final_dim", r.final_dim()},
            {"clusters", r.clusters},
            {"counts", r.counts},
            {"merge_log", log}};
}

json to_json(const ComplexityProfile& profile) {
    json out = json::array();
    for (const ComplexityEntry& e : profile) {
        out.push_back({{"layer", e.layer}, {"original", e.original}, {"remaining", e.remaining}});
    }
    return out;
}

json to_json(const GridResult& g) {
    json rows = json::array();
    for (const GridRow& r : g.rows) {
        rows.push_back({{"beta", r.beta},
                        {"params", r.params},
                        {"param_fraction", r.param_fraction},
                        {"accuracy", r.accuracy},
                        {"loss", r.loss}});
    }
    return {{"baseline_accuracy", g.baseline_accuracy},
            {"baseline_loss", g.baseline_loss},
            {"baseline_params", g.baseline_params},
            {"retention", g.retention},
            {"rows", rows},
            {"best_beta", g.best_beta ? json(*g.best_beta) : json(nullptr)}};
}

json to_json(const InterpolationCurve& curve) {
    json points = json::array();
    for (std::size_t i = 0; i < curve.alphas.size(); ++i) {
        points.push_back(
            {{"alpha", curve.alphas[i]}, {"accuracy", curve.metrics[i].accuracy}, {"loss", curve.metrics[i].loss}});
    }
    return points;
}

json to_json(const IterationTiming& t, bool with_samples) {
    json j = {{"iterations", t.iterations}, {"mean_s", t.mean_seconds}, {"std_s", t.std_seconds}};
    if (with_samples) j["samples_s"] = t.samples;
    return j;
}

json describe(const Network& net) {
    json layers = json::array();
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
        json l = layer_to_json(net.layer(i));
        l["output_shape"] = net.feature_shapes()[i];
        layers.push_back(std::move(l));
    }
    json positions = json::array();
    for (const MergeablePosition& p : enumerate_mergeable_positions(net)) positions.push_back(to_json(p));
    return {{"input_shape", net.input_shape()},
            {"dtype", to_string(net.dtype())},
            {"parameters", net.parameter_count()},
            {"layers", layers},
            {"positions", positions}};
}

json to_json(const DistanceMatrix& dist) {
    json j = {{"producer", dist.position().producer}, {"dim", dist.dim()}};
    if (dist.dim() >= 2) {
        const auto s = dist.off_diagonal();
        j["min"] = s.min;
        j["max"] = s.max;
        j["mean"] = s.mean;
        j["argmin"] = {s.argmin_m, s.argmin_n};
    }
    return j;
}

std::string distance_csv(const DistanceMatrix& dist) {
    std::string out;
    for (std::size_t m = 0; m < dist.dim(); ++m) {
        for (std::size_t n = 0; n < dist.dim(); ++n) {
            if (n) out += ',';
            out += format_double(dist(m, n));
        }
        out += '\n';
    }
    return out;
}

std::string profile_csv(const ComplexityProfile& profile) {
    std::ostringstream out;
    out << "layer,original,remaining\n";
    for (const ComplexityEntry& e : profile) out << e.layer << ',' << e.original << ',' << e.remaining << '\n';
    return out.str();
}

std::string grid_csv(const GridResult& grid) {
    std::string out = "beta,params,param_fraction,accuracy,loss\n";
    for (const GridRow& r : grid.rows) {
        out += format_double(r.beta) + ',' + std::to_string(r.params) + ',' + format_double(r.param_fraction) + ',' +
               format_double(r.accuracy) + ',' + format_double(r.loss) + '\n';
    }
    return out;
}

std::string curve_csv(const InterpolationCurve& curve) {
    std::string out = "alpha,accuracy,loss\n";
    for (std::size_t i = 0; i < curve.alphas.size(); ++i) {
        out += format_double(curve.alphas[i]) + ',' + format_double(curve.metrics[i].accuracy) + ',' +
               format_double(curve.metrics[i].loss) + '\n';
    }
    return out;
}

}  // namespace featmerge
