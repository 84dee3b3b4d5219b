#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "featmerge/archive.hpp"
#include "featmerge/error.hpp"
#include "featmerge/toytrain.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace featmerge;

using oracle::gradient_error;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Invariant;
}

}  // namespace

TEST_CASE("separable blobs train to high accuracy") {
    auto data = make_synthetic_dataset(SyntheticKind::Blobs, 400, 0.0, 1);
    TrainConfig cfg;
    cfg.hidden = {16};
    cfg.epochs = 50;
    Network net = train_mlp(cfg, data);
    CHECK(evaluate(net, data).accuracy >= 0.99);
    CHECK(net.dtype() == DType::f32);
    CHECK(net.layer(0).name == "fc0");
    CHECK(net.layer(1).kind == LayerKind::ReLU);
}

TEST_CASE("zero epochs return the initialization") {
    auto data = make_synthetic_dataset(SyntheticKind::Ring, 50, 0.0, 2);
    TrainConfig cfg;
    cfg.hidden = {8, 6};
    cfg.epochs = 0;
    cfg.seed = 9;
    const std::vector<std::size_t> hidden{8, 6};
    CHECK(train_mlp(cfg, data) == init_mlp(2, hidden, 2, 9, DType::f32));
    cfg.dtype = DType::f64;
    CHECK(train_mlp(cfg, data) == init_mlp(2, hidden, 2, 9, DType::f64));
}

TEST_CASE("initialization is uniform within 1/sqrt(fan_in)") {
    const std::vector<std::size_t> hidden{30};
    Network net = init_mlp(5, hidden, 3, 4, DType::f64);
    for (std::size_t i : {0u, 2u}) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(net.layer(i).in));
        for (double w : net.weight(i).values()) CHECK(std::abs(w) <= bound);
        for (double b : net.bias(i)->values()) CHECK(std::abs(b) <= bound);
    }
    CHECK(init_mlp(5, hidden, 3, 4) == init_mlp(5, hidden, 3, 4));
    CHECK_FALSE(init_mlp(5, hidden, 3, 4) == init_mlp(5, hidden, 3, 5));
}

TEST_CASE("training is bitwise reproducible for a fixed seed") {
    auto data = make_synthetic_dataset(SyntheticKind::XorGrid, 200, 0.05, 3);
    TrainConfig cfg;
    cfg.hidden = {10, 10};
    cfg.epochs = 5;
    cfg.seed = 11;
    cfg.milestones = {3};
    Network a = train_mlp(cfg, data);
    CHECK(a == train_mlp(cfg, data));
    cfg.seed = 12;
    CHECK_FALSE(a == train_mlp(cfg, data));
}

TEST_CASE("gradients of a four-parameter MLP match finite differences") {
    std::map<std::string, Tensor> params{{"fc0.weight", Tensor({1, 1}, {0.8}, DType::f64)},
                                         {"fc0.bias", Tensor({1}, {0.1}, DType::f64)},
                                         {"fc1.weight", Tensor({1, 1}, {-1.3}, DType::f64)},
                                         {"fc1.bias", Tensor({1}, {0.4}, DType::f64)}};
    Network net({1}, {LayerSpec::linear("fc0", 1, 1), LayerSpec::relu("relu0"), LayerSpec::linear("fc1", 1, 1)},
                params);
    CHECK(net.parameter_count() == 4);
    // A single output class makes cross-entropy constant; use two classes.
    std::map<std::string, Tensor> params2{{"fc0.weight", Tensor({1, 1}, {0.8}, DType::f64)},
                                          {"fc0.bias", Tensor({1}, {0.1}, DType::f64)},
                                          {"fc1.weight", Tensor({2, 1}, {-1.3, 0.6}, DType::f64)},
                                          {"fc1.bias", Tensor({2}, {0.4, -0.2}, DType::f64)}};
    Network net2({1}, {LayerSpec::linear("fc0", 1, 1), LayerSpec::relu("relu0"), LayerSpec::linear("fc1", 1, 2)},
                 params2);
    Tensor x({4, 1}, {0.5, 1.5, 2.0, 0.9}, DType::f64);
    std::vector<std::int64_t> labels{0, 1, 1, 0};
    std::mt19937_64 rng(5);
    CHECK(gradient_error(net2, x, labels, 0, rng) <= 1e-4);
    CHECK(loss_and_gradients(net, x, std::vector<std::int64_t>{0, 0, 0, 0}).loss == 0.0);
}

TEST_CASE("gradients of a random MLP match finite differences") {
    std::mt19937_64 rng(6);
    Network net = init_mlp(3, std::vector<std::size_t>{7, 5}, 4, 6, DType::f64);
    Tensor x = testutil::random_batch(16, {3}, rng);
    std::vector<std::int64_t> labels(16);
    for (auto& l : labels) l = static_cast<std::int64_t>(rng() % 4);
    CHECK(gradient_error(net, x, labels, 40, rng) <= 1e-4);
}

TEST_CASE("trainer rejects unsupported inputs") {
    std::mt19937_64 rng(7);
    auto data = make_synthetic_dataset(SyntheticKind::Blobs, 10, 0.0, 1);
    Network conv = testutil::random_vgg_like(rng);
    TrainConfig cfg;
    CHECK(kind_of([&] { train_mlp(cfg, data, conv); }) == ErrorKind::Unsupported);
    LabeledDataset images(Tensor({2, 1, 2, 2}), {0, 1}, 2);
    CHECK(kind_of([&] { train_mlp(cfg, images); }) == ErrorKind::Unsupported);
    cfg.batch_size = 0;
    CHECK(kind_of([&] { train_mlp(cfg, data); }) == ErrorKind::InvalidArgument);
    cfg = TrainConfig{};
    cfg.momentum = 1.0;
    CHECK(kind_of([&] { train_mlp(cfg, data); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("planting a duplicate preserves the function") {
    std::mt19937_64 rng(8);
    Network net = testutil::random_mlp(4, {9, 7}, 3, rng, DType::f32);
    std::vector<PlantSpec> plants{{3, 1}};
    Network planted = plant_duplicates(net, 0, plants);
    CHECK(planted.feature_dim(0) == 10);
    Tensor x = testutil::random_batch(100, {4}, rng);
    CHECK(testutil::max_relative_deviation(forward(planted, x), forward(net, x)) <= 1e-6);

    std::vector<PlantSpec> many{{0, 2}, {6, 3}};
    Network planted2 = plant_duplicates(net, 2, many);
    CHECK(planted2.feature_dim(2) == 12);
    CHECK(testutil::max_relative_deviation(forward(planted2, x), forward(net, x)) <= 1e-6);
    // Copies sit at the end with identical rows.
    const Tensor& w = planted2.weight(2);
    for (std::size_t k = 0; k < 9; ++k) {
        CHECK(w[7 * 9 + k] == w[0 * 9 + k]);
        CHECK(w[11 * 9 + k] == w[6 * 9 + k]);
    }
}

TEST_CASE("planting with zero counts is the identity") {
    std::mt19937_64 rng(9);
    Network net = testutil::random_mlp(3, {5}, 2, rng);
    std::vector<PlantSpec> none{{0, 0}, {2, 0}};
    CHECK(plant_duplicates(net, 0, none) == net);
    CHECK(plant_duplicates(net, 0, std::vector<PlantSpec>{}) == net);
}

TEST_CASE("planting errors") {
    std::mt19937_64 rng(10);
    Network net = testutil::random_mlp(3, {5}, 2, rng);
    std::vector<PlantSpec> big{{0, 4}};
    CHECK(kind_of([&] { plant_duplicates(net, 0, big, 8); }) == ErrorKind::Dimension);
    CHECK(plant_duplicates(net, 0, big, 9).feature_dim(0) == 9);
    std::vector<PlantSpec> out_of_range{{5, 1}};
    CHECK(kind_of([&] { plant_duplicates(net, 0, out_of_range); }) == ErrorKind::InvalidArgument);
    std::vector<PlantSpec> repeated{{1, 1}, {1, 1}};
    CHECK(kind_of([&] { plant_duplicates(net, 0, repeated); }) == ErrorKind::InvalidArgument);
    std::vector<PlantSpec> one{{0, 1}};
    CHECK(kind_of([&] { plant_duplicates(net, 2, one); }) == ErrorKind::Structure);
}

TEST_CASE("blobs without noise are separated by a hand-written linear rule") {
    auto data = make_synthetic_dataset(SyntheticKind::Blobs, 500, 0.0, 4);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::int64_t guess = data.inputs()[2 * i] > 0.0 ? 0 : 1;
        correct += guess == data.labels()[i];
    }
    CHECK(correct == data.size());
}

TEST_CASE("xor-grid quadrants") {
    auto data = make_synthetic_dataset(SyntheticKind::XorGrid, 400, 0.0, 5);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double x = data.inputs()[2 * i], y = data.inputs()[2 * i + 1];
        CHECK((x * y > 0 ? 0 : 1) == data.labels()[i]);
        CHECK(std::abs(x) >= 0.1f);
        CHECK(std::abs(y) <= 1.0);
    }
}

TEST_CASE("ring is not linearly separable") {
    auto data = make_synthetic_dataset(SyntheticKind::Ring, 1000, 0.0, 6);
    const std::size_t n = data.size();
    double best = 0.0;
    for (int step = 0; step < 360; ++step) {
        const double t = std::numbers::pi * step / 360.0;
        std::vector<std::pair<double, std::int64_t>> proj;
        for (std::size_t i = 0; i < n; ++i) {
            proj.emplace_back(std::cos(t) * data.inputs()[2 * i] + std::sin(t) * data.inputs()[2 * i + 1],
                              data.labels()[i]);
        }
        std::sort(proj.begin(), proj.end());
        // Sweep every threshold; class 1 on the high side or on the low side.
        std::size_t ones_below = 0;
        std::size_t total_ones = 0;
        for (const auto& p : proj) total_ones += p.second == 1;
        for (std::size_t k = 0; k <= n; ++k) {
            const std::size_t zeros_below = k - ones_below;
            const std::size_t high = zeros_below + (total_ones - ones_below);
            best = std::max({best, static_cast<double>(high) / n, static_cast<double>(n - high) / n});
            if (k < n) ones_below += proj[k].second == 1;
        }
    }
    MESSAGE("best linear accuracy on ring: " << best);
    CHECK(best <= 0.70);
}

TEST_CASE("datasets are balanced and seed-stable") {
    for (SyntheticKind kind : {SyntheticKind::Blobs, SyntheticKind::XorGrid, SyntheticKind::Ring}) {
        auto a = make_synthetic_dataset(kind, 101, 0.1, 7);
        auto b = make_synthetic_dataset(kind, 101, 0.1, 7);
        CHECK(encode_dataset(a) == encode_dataset(b));
        CHECK_FALSE(a == make_synthetic_dataset(kind, 101, 0.1, 8));
        std::size_t ones = 0;
        for (auto l : a.labels()) ones += l == 1;
        CHECK(ones == 50);
        CHECK(a.inputs().dtype() == DType::f32);
    }
    auto blobs = make_synthetic_dataset(SyntheticKind::Blobs, 30, 0.0, 1, 5);
    CHECK(blobs.num_classes() == 5);
    CHECK(kind_of([] { make_synthetic_dataset(SyntheticKind::Ring, 10, 0.0, 1, 3); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([] { synthetic_kind_from_string("moons"); }) == ErrorKind::InvalidArgument);
    CHECK(synthetic_kind_from_string("xor-grid") == SyntheticKind::XorGrid);
}
