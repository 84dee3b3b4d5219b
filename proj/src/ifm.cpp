#include "featmerge/ifm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "featmerge/error.hpp"
#include "featmerge/matching.hpp"
#include "surgery.hpp"

namespace featmerge {

void IfmConfig::validate() const {
    if (!(beta > 0.0 && beta < 1.0)) fail(ErrorKind::InvalidArgument, "beta must lie in (0, 1)");
}

MergeRecord MergeRecord::singletons(std::size_t producer, std::size_t dim) {
    MergeRecord r;
    r.producer = producer;
    r.original_dim = dim;
    r.counts.assign(dim, 1);
    r.clusters.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) r.clusters[i] = {i};
    return r;
}

namespace {

void check_position(const Network& net, const MergeablePosition& pos) {
    if (find_position(net, pos.producer) != pos) {
        fail(ErrorKind::Structure, "position at layer " + std::to_string(pos.producer) + " does not match the network");
    }
}

// Merges in place; pos.dim is the dimension before the merge.
void merge_in_place(Network& net, const MergeablePosition& pos, std::size_t m, std::size_t n,
                    std::span<const std::size_t> counts) {
    const std::size_t d = pos.dim;
    if (m == n || m >= d || n >= d) fail(ErrorKind::InvalidArgument, "merge needs two distinct features in range");
    if (counts.size() != d) fail(ErrorKind::Dimension, "counts must have one entry per feature");
    if (counts[m] == 0 || counts[n] == 0) fail(ErrorKind::InvalidArgument, "cluster counts must be positive");
    const std::size_t lo = std::min(m, n), hi = std::max(m, n);
    const DType dtype = net.dtype();

    const auto pv = detail::producer_view(net, pos);
    const Tensor& w = net.weight(pos.producer);
    Shape wshape = w.shape();
    wshape[0] = d - 1;
    Tensor nw(wshape, dtype);
    for (std::size_t f = 0, g = 0; f < d; ++f) {
        if (f == hi) continue;
        for (std::size_t r = 0; r < pv.row; ++r) {
            nw[g * pv.row + r] = f == lo ? w[m * pv.row + r] + w[n * pv.row + r] : w[f * pv.row + r];
        }
        ++g;
    }
    nw.round_to_dtype();
    std::optional<Tensor> nb;
    if (const Tensor* b = net.bias(pos.producer)) {
        nb = Tensor({d - 1}, dtype);
        for (std::size_t f = 0, g = 0; f < d; ++f) {
            if (f == hi) continue;
            (*nb)[g++] = f == lo ? (*b)[m] + (*b)[n] : (*b)[f];
        }
        nb->round_to_dtype();
    }
    LayerSpec pspec = net.layer(pos.producer);
    pspec.out = d - 1;
    net.stage_layer(pos.producer, std::move(pspec), std::move(nw), std::move(nb));

    const double wm = static_cast<double>(counts[m]), wn = static_cast<double>(counts[n]);
    for (const ConsumerBlock& c : pos.consumers) {
        const auto cv = detail::consumer_view(net, pos, c);
        const Tensor& cw = net.weight(c.layer);
        Shape cshape = cw.shape();
        LayerSpec cspec = net.layer(c.layer);
        if (cspec.kind == LayerKind::Conv2d) {
            cshape[1] = d - 1;
            cspec.in = d - 1;
        } else {
            cshape[1] -= cv.slice;
            cspec.in -= cv.slice;
        }
        Tensor ncw(cshape, dtype);
        detail::ConsumerView nv{cv.out, d - 1, cv.slice};
        for (std::size_t o = 0; o < cv.out; ++o) {
            for (std::size_t f = 0, g = 0; f < d; ++f) {
                if (f == hi) continue;
                for (std::size_t s = 0; s < cv.slice; ++s) {
                    ncw[nv.index(o, g, s)] = f == lo ? (wm * cw[cv.index(o, m, s)] + wn * cw[cv.index(o, n, s)]) / (wm + wn)
                                                     : cw[cv.index(o, f, s)];
                }
                ++g;
            }
        }
        ncw.round_to_dtype();
        std::optional<Tensor> cb;
        if (const Tensor* b = net.bias(c.layer)) cb = *b;
        net.stage_layer(c.layer, std::move(cspec), std::move(ncw), std::move(cb));
    }
    net.commit();
}

void fold_record(MergeRecord& rec, std::size_t m, std::size_t n, double distance) {
    const std::size_t lo = std::min(m, n), hi = std::max(m, n);
    auto& target = rec.clusters[lo];
    target.insert(target.end(), rec.clusters[hi].begin(), rec.clusters[hi].end());
    std::sort(target.begin(), target.end());
    rec.clusters.erase(rec.clusters.begin() + static_cast<std::ptrdiff_t>(hi));
    rec.counts[lo] += rec.counts[hi];
    rec.counts.erase(rec.counts.begin() + static_cast<std::ptrdiff_t>(hi));
    rec.merge_log.push_back({m, n, distance});
}

MergeRecord ifm_position_in_place(Network& net, MergeablePosition pos, const IfmConfig& config) {
    MergeRecord rec = MergeRecord::singletons(pos.producer, pos.dim);
    if (pos.dim < 2) return rec;

    std::vector<FeatureVectors> cache;
    if (config.incremental) {
        cache.reserve(pos.dim);
        for (std::size_t m = 0; m < pos.dim; ++m) cache.push_back(feature_vectors(net, pos, m, config.bias_in_distance));
    }
    DistanceMatrix dist = distance_matrix(net, pos, config.bias_in_distance);

    using clock = std::chrono::steady_clock;
    while (dist.dim() >= 2) {
        if (config.max_merges && rec.merge_log.size() >= *config.max_merges) break;
        const auto start = clock::now();
        const auto stats = dist.off_diagonal();
        if (stats.min > config.beta * stats.max) break;

        const std::size_t m = stats.argmin_m, n = stats.argmin_n;
        merge_in_place(net, pos, m, n, rec.counts);
        fold_record(rec, m, n, stats.min);
        const std::size_t lo = std::min(m, n), hi = std::max(m, n);
        pos.dim -= 1;

        if (config.incremental) {
            dist.erase(hi);
            cache.erase(cache.begin() + static_cast<std::ptrdiff_t>(hi));
            cache[lo] = feature_vectors(net, pos, lo, config.bias_in_distance);
            for (std::size_t k = 0; k < pos.dim; ++k) {
                if (k == lo) continue;
                dist.set(std::min(k, lo), std::max(k, lo),
                         k < lo ? feature_distance(cache[k], cache[lo]) : feature_distance(cache[lo], cache[k]));
            }
        } else {
            dist = distance_matrix(net, pos, config.bias_in_distance);
        }
        rec.iteration_seconds.push_back(std::chrono::duration<double>(clock::now() - start).count());
    }
    return rec;
}

}  // namespace

Network merge_pair(const Network& net, const MergeablePosition& pos, std::size_t m, std::size_t n,
                   std::span<const std::size_t> counts) {
    check_position(net, pos);
    Network out = net;
    merge_in_place(out, pos, m, n, counts);
    return out;
}

std::pair<Network, MergeRecord> ifm_position(const Network& net, const MergeablePosition& pos,
                                             const IfmConfig& config) {
    config.validate();
    check_position(net, pos);
    Network out = net;
    MergeRecord rec = ifm_position_in_place(out, pos, config);
    return {std::move(out), std::move(rec)};
}

std::vector<MergeablePosition> selected_positions(const Network& net, const IfmConfig& config) {
    std::vector<MergeablePosition> all = enumerate_mergeable_positions(net);
    std::vector<MergeablePosition> out;
    if (!config.positions) {
        for (auto& p : all) {
            if (!p.in_residual_block || config.merge_residual_interior) out.push_back(std::move(p));
        }
        return out;
    }
    std::set<std::size_t> wanted(config.positions->begin(), config.positions->end());
    for (std::size_t producer : wanted) {
        auto it = std::find_if(all.begin(), all.end(), [&](const auto& p) { return p.producer == producer; });
        if (it == all.end()) fail(ErrorKind::Structure, "layer " + std::to_string(producer) + " is not a mergeable position");
        if (it->in_residual_block && !config.merge_residual_interior) {
            fail(ErrorKind::InvalidArgument, "layer " + std::to_string(producer) +
                                                 " lies inside a residual block; enable residual-interior merging");
        }
        out.push_back(*it);
    }
    return out;
}

IfmResult ifm(const Network& net, const IfmConfig& config) {
    config.validate();
    IfmResult result{net, {}};
    for (const MergeablePosition& selected : selected_positions(net, config)) {
        // Earlier merges may have reshaped this position's producer.
        MergeablePosition pos = find_position(result.net, selected.producer);
        if (pos.in_residual_block && !config.merge_residual_interior) continue;
        result.records.push_back(ifm_position_in_place(result.net, std::move(pos), config));
    }
    return result;
}

ComplexityProfile complexity_profile(const std::vector<MergeRecord>& records) {
    ComplexityProfile profile;
    for (const MergeRecord& r : records) profile.push_back({r.producer, r.original_dim, r.final_dim()});
    return profile;
}

ComplexityProfile complexity_profile(const Network& net, const IfmConfig& config) {
    return complexity_profile(ifm(net, config).records);
}

std::vector<double> default_beta_grid() { return {0.01, 0.03, 0.05, 0.07, 0.1, 0.12, 0.14, 0.15, 0.18, 0.2}; }

GridResult beta_grid_search(const Network& net, std::span<const double> betas, const LabeledDataset& data,
                            double retention, const IfmConfig& base) {
    if (betas.empty()) fail(ErrorKind::InvalidArgument, "beta grid is empty");
    if (!(retention >= 0.0)) fail(ErrorKind::InvalidArgument, "retention must be non-negative");
    GridResult result;
    const Metrics baseline = evaluate(net, data);
    result.baseline_accuracy = baseline.accuracy;
    result.baseline_loss = baseline.loss;
    result.baseline_params = net.parameter_count();
    result.retention = retention;

    for (double beta : betas) {
        IfmConfig cfg = base;
        cfg.beta = beta;
        IfmResult merged = ifm(net, cfg);
        const Metrics m = evaluate(merged.net, data);
        GridRow row;
        row.beta = beta;
        row.params = merged.net.parameter_count();
        row.param_fraction = static_cast<double>(row.params) / static_cast<double>(result.baseline_params);
        row.accuracy = m.accuracy;
        row.loss = m.loss;
        result.rows.push_back(row);
        if (m.accuracy >= retention * baseline.accuracy && (!result.best_beta || beta > *result.best_beta)) {
            result.best_beta = beta;
        }
    }
    return result;
}

IterationTiming summarize_timing(std::vector<double> samples) {
    IterationTiming t;
    t.iterations = samples.size();
    if (!samples.empty()) {
        double sum = 0.0;
        for (double v : samples) sum += v;
        t.mean_seconds = sum / static_cast<double>(samples.size());
        double var = 0.0;
        for (double v : samples) var += (v - t.mean_seconds) * (v - t.mean_seconds);
        t.std_seconds = std::sqrt(var / static_cast<double>(samples.size()));
    }
    t.samples = std::move(samples);
    return t;
}

IterationTiming time_ifm_iterations(const Network& net, const IfmConfig& config, std::size_t repeats) {
    config.validate();
    std::vector<MergeablePosition> positions;
    for (auto& p : selected_positions(net, config)) {
        if (p.dim >= 2) positions.push_back(std::move(p));
    }
    if (positions.empty()) return {};
    using clock = std::chrono::steady_clock;
    std::vector<double> samples;
    samples.reserve(repeats);
    for (std::size_t i = 0; i < repeats; ++i) {
        const MergeablePosition& pos = positions[i % positions.size()];
        const std::vector<std::size_t> counts(pos.dim, 1);
        const auto start = clock::now();
        const DistanceMatrix dist = distance_matrix(net, pos, config.bias_in_distance);
        const auto stats = dist.off_diagonal();
        Network merged = net;
        merge_in_place(merged, pos, stats.argmin_m, stats.argmin_n, counts);
        samples.push_back(std::chrono::duration<double>(clock::now() - start).count());
    }
    return summarize_timing(std::move(samples));
}

}  // namespace featmerge
