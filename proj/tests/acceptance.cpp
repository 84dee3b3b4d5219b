// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <sys/wait.h>

#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "featmerge/archive.hpp"
#include "featmerge/connectivity.hpp"
#include "featmerge/ifm.hpp"
#include "featmerge/inference.hpp"
#include "featmerge/matching.hpp"
#include "featmerge/toytrain.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace featmerge;
using json = nlohmann::json;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

using Clusters = std::set<std::vector<std::size_t>>;

Clusters non_singletons(const MergeRecord& r) {
    Clusters out;
    for (const auto& c : r.clusters)
        if (c.size() > 1) out.insert(c);
    return out;
}

// Each planted source paired with the index its copy was appended at.
Clusters planted_pairs(const std::vector<PlantSpec>& plants, std::size_t first_new) {
    Clusters out;
    std::size_t next = first_new;
    for (const PlantSpec& p : plants) out.insert({p.source, next++});
    return out;
}

std::vector<PlantSpec> sample_pairs(std::size_t width, std::size_t k, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(width);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<PlantSpec> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back({idx[i], 1});
    return out;
}

struct PlantedNet {
    Network base;
    Network net;
    std::vector<Clusters> expected;
};

// Plants `pairs` duplicate pairs into every hidden layer of `base`.
PlantedNet plant_all(const Network& base, std::size_t pairs, std::mt19937_64& rng) {
    PlantedNet p{base, base, {}};
    for (const MergeablePosition& pos : enumerate_mergeable_positions(base)) {
        const std::vector<PlantSpec> plants = sample_pairs(pos.dim, pairs, rng);
        p.net = plant_duplicates(p.net, pos.producer, plants);
        p.expected.push_back(planted_pairs(plants, pos.dim));
    }
    return p;
}

IfmConfig beta_config(double beta) {
    IfmConfig c;
    c.beta = beta;
    return c;
}

void planted_exactness(Outcome& o) {
    const double t0 = cpu_seconds();
    std::mt19937_64 rng(2024);
    std::size_t exact = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t depth = 1 + trial % 2;
        std::vector<std::size_t> hidden;
        for (std::size_t l = 0; l < depth; ++l) hidden.push_back(16 + rng() % 41);
        Network base = testutil::random_mlp(8 + rng() % 9, hidden, 2 + rng() % 9, rng);
        PlantedNet p = plant_all(base, 1 + rng() % 4, rng);
        for (std::size_t l = 0; l < depth; ++l) o.require(p.net.feature_dim(2 * l) <= 64, "width above 64");
        IfmResult r = ifm(p.net, beta_config(0.01));
        bool same = r.records.size() == p.expected.size();
        for (std::size_t i = 0; same && i < r.records.size(); ++i) same = non_singletons(r.records[i]) == p.expected[i];
        exact += same;
        Tensor x = testutil::random_batch(100, base.input_shape(), rng);
        worst = std::max(worst, testutil::max_relative_deviation(forward(r.net, x), forward(p.net, x)));
    }
    const double cpu = cpu_seconds() - t0;
    o.require(exact == 20, "cluster recovery");
    o.require(worst <= 1e-5, "output deviation");
    o.require(cpu < 30.0, "runtime");
    o.detail << exact << "/20 exact, max deviation " << worst << ", " << cpu << " s CPU";
}

void distance_oracle(Outcome& o) {
    const double t0 = cpu_seconds();
    std::mt19937_64 rng(77);
    std::size_t equal = 0;
    std::size_t largest = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const bool conv = trial % 10 == 9;
        const std::size_t producer = conv ? (trial % 20 == 9 ? 0 : 2) : (trial % 4 == 3 ? 2 : 0);
        const std::size_t d = 2 + rng() % 63;
        const Network net =
            conv ? testutil::random_vgg_like(rng, 1 + rng() % 3, 2 + rng() % 20, 2 + rng() % 20, 3)
                 : testutil::random_mlp(1 + rng() % 16, {d, 2 + rng() % 63}, 2 + rng() % 8, rng,
                                        trial % 2 ? DType::f32 : DType::f64, trial % 3 != 0);
        const bool bias = trial % 5 != 4;
        const DistanceMatrix dist = distance_matrix(net, find_position(net, producer), bias);
        largest = std::max(largest, dist.dim());
        equal += oracle::bitwise_equal(dist.values(), oracle::naive_distances(net, producer, bias));
    }
    const double cpu = cpu_seconds() - t0;
    o.require(equal == 50, "bitwise equality");
    o.require(cpu < 10.0, "runtime");
    o.detail << equal << "/50 bitwise equal, largest d " << largest << ", " << cpu << " s CPU";
}

void permutation_interpolation(Outcome& o) {
    const double t0 = cpu_seconds();
    const auto alphas = default_alphas();
    auto train_set = make_synthetic_dataset(SyntheticKind::Ring, 600, 0.0, 11);
    TrainConfig tc;
    tc.hidden = {32, 32};
    tc.epochs = 40;
    tc.seed = 3;
    Network trained = train_mlp(tc, train_set);

    // Random relabelings leave the function unchanged.
    std::mt19937_64 rng(12);
    const Metrics m0 = evaluate(trained, train_set);
    bool preserved = true;
    for (int trial = 0; trial < 10; ++trial) {
        Permutation perm;
        for (std::size_t producer : {0u, 2u}) {
            std::vector<std::size_t> dest(32);
            std::iota(dest.begin(), dest.end(), 0);
            std::shuffle(dest.begin(), dest.end(), rng);
            perm.set(producer, dest);
        }
        const Metrics m = evaluate(apply_permutation(trained, perm), train_set);
        preserved = preserved && m.accuracy == m0.accuracy && std::abs(m.loss - m0.loss) <= 1e-6;
    }
    o.require(preserved, "apply_permutation invariance");

    // Matched swap on the planted copy: clusters come from merging at 0.01.
    PlantedNet p = plant_all(trained, 8, rng);
    const std::vector<MergeRecord> records = ifm(p.net, beta_config(0.01)).records;
    bool recovered = records.size() == p.expected.size();
    for (std::size_t i = 0; recovered && i < records.size(); ++i) recovered = non_singletons(records[i]) == p.expected[i];
    o.require(recovered, "planted clusters recovered");
    const Metrics base = evaluate(p.net, train_set);
    const InterpolationCurve matched = interpolation_curve(p.net, build_swap_permutation(p.net, records), train_set,
                                                           alphas);
    double spread = 0.0;
    for (const Metrics& m : matched.metrics) spread = std::max(spread, std::abs(m.accuracy - base.accuracy));
    o.require(matched.metrics.size() == 11 && spread <= 0.005, "matched curve flat");

    const Permutation random = random_swap_permutation(records, 5, true);
    o.require(random.moved() == build_swap_permutation(p.net, records).moved(), "equal cardinality");
    const std::vector<double> mid{0.5};
    const double drop = base.accuracy - interpolation_curve(p.net, random, train_set, mid).metrics[0].accuracy;
    o.require(drop >= 0.05, "random swap drop");
    const double cpu = cpu_seconds() - t0;
    o.require(cpu < 60.0, "runtime");
    o.detail << "base accuracy " << base.accuracy << ", matched max deviation " << spread << ", random swap of "
             << random.moved() << " features drops " << drop << " at alpha 0.5, " << cpu << " s CPU";
}

void llfc_self_consistency(Outcome& o) {
    const auto alphas = default_alphas();
    auto data = make_synthetic_dataset(SyntheticKind::Ring, 300, 0.05, 21);
    TrainConfig tc;
    tc.hidden = {16, 16};
    tc.epochs = 20;
    Network net = train_mlp(tc, data);
    double self = 0.0;
    for (std::size_t l = 0; l < net.num_layers(); ++l) self = std::max(self, llfc_residual(net, net, data, l, alphas));
    o.require(self <= 1e-6, "self residual");

    std::mt19937_64 rng(22);
    std::vector<LayerSpec> linear{LayerSpec::linear("fc0", 2, 8), LayerSpec::linear("fc1", 8, 6),
                                  LayerSpec::linear("fc2", 6, 2)};
    double first = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        Network a = testutil::with_random_params({2}, linear, rng, DType::f64, 1.0);
        Network b = testutil::with_random_params({2}, linear, rng, DType::f64, 1.0);
        first = std::max(first, llfc_residual(a, b, data, 0, alphas));
    }
    o.require(first <= 1e-6, "linear first-layer residual");
    o.detail << "self max " << self << " over " << net.num_layers() << " layers, linear first-layer max " << first;
}

void gradient_correctness(Outcome& o) {
    std::mt19937_64 rng(31);
    auto data = make_synthetic_dataset(SyntheticKind::XorGrid, 64, 0.05, 32);
    Network net = init_mlp(2, std::vector<std::size_t>{12, 10}, 2, 33, DType::f64);
    const double err = oracle::gradient_error(net, data.inputs().as_dtype(DType::f64), data.labels(), 100, rng);
    o.require(err <= 1e-4, "relative error");
    o.detail << "max relative error " << err << " over 100 probes";
}

void pruning_analog(Outcome& o) {
    const double t0 = cpu_seconds();
    auto train_set = make_synthetic_dataset(SyntheticKind::Ring, 1000, 0.0, 1);
    auto test_set = make_synthetic_dataset(SyntheticKind::Ring, 1000, 0.0, 2);
    TrainConfig tc;
    tc.hidden = {256, 256};
    tc.epochs = 60;
    tc.learning_rate = 0.05;
    tc.weight_decay = 2e-3;
    tc.milestones = {30, 45};
    tc.seed = 0;
    Network net = train_mlp(tc, train_set);
    const double train_acc = evaluate(net, train_set).accuracy;
    o.require(train_acc >= 0.97, "train accuracy");

    const GridResult grid = beta_grid_search(net, default_beta_grid(), test_set, 0.0);
    bool monotone = true;
    std::ostringstream table;
    std::optional<double> chosen;
    double chosen_fraction = 1.0;
    for (std::size_t i = 0; i < grid.rows.size(); ++i) {
        const GridRow& r = grid.rows[i];
        if (i > 0 && r.params > grid.rows[i - 1].params) monotone = false;
        if (!chosen && r.param_fraction <= 0.8 && grid.baseline_accuracy - r.accuracy <= 0.02) {
            chosen = r.beta;
            chosen_fraction = r.param_fraction;
        }
        table << (i ? "; " : "") << r.beta << " " << r.params << " " << r.accuracy;
    }
    o.require(chosen.has_value(), "beta removing >= 20% within 2%");
    o.require(monotone, "remaining parameters monotone in beta");
    const double cpu = cpu_seconds() - t0;
    o.require(cpu < 300.0, "runtime");
    o.detail << "train accuracy " << train_acc << ", test baseline " << grid.baseline_accuracy;
    if (chosen) o.detail << ", beta " << *chosen << " keeps " << 100.0 * chosen_fraction << "% of parameters";
    o.detail << ", " << cpu << " s CPU, (beta params accuracy): " << table.str();
}

void timing_harness(Outcome& o) {
    std::mt19937_64 rng(41);
    const auto model = testutil::temp_path("acceptance_timing.fma");
    const auto report = testutil::temp_path("acceptance_timing.json");
    save_network(testutil::random_mlp(16, {64, 64}, 4, rng), model);
    const std::string cmd = std::string(FEATMERGE_CLI) + " merge " + model.string() + " --beta 0.05 --report " +
                            report.string() + " > /dev/null";
    const int status = std::system(cmd.c_str());
    o.require(WIFEXITED(status) && WEXITSTATUS(status) == 0, "merge exit status");
    std::ifstream in(report);
    json r = json::parse(in, nullptr, false);
    const bool ok = !r.is_discarded() && r.contains("timing");
    o.require(ok, "timing in report");
    if (!ok) return;
    const json& t = r["timing"];
    o.require(t["iterations"].get<std::size_t>() >= 100, "iteration count");
    o.require(t["mean_s"].get<double>() >= 0.0 && t["std_s"].get<double>() >= 0.0, "non-negative statistics");
    o.detail << t["summary"].get<std::string>();
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> checks{
        {"planted-oracle exactness", planted_exactness},
        {"distance oracle equivalence", distance_oracle},
        {"permutation and interpolation properties", permutation_interpolation},
        {"LLFC self-consistency", llfc_self_consistency},
        {"gradient correctness", gradient_correctness},
        {"scaled pruning analog", pruning_analog},
        {"timing harness", timing_harness},
    };
    int failures = 0;
    for (const auto& [name, check] : checks) {
        Outcome o;
        try {
            check(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "[exception: " << e.what() << "]";
        }
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
