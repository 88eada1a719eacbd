#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "patchlab/error.hpp"
#include "patchlab/network.hpp"
#include "patchlab/rng.hpp"

using namespace patchlab;

namespace {

// 2 ReLU layers + affine readout, all shapes 2, hand-filled weights.
Network tiny_net() {
    Network net;
    net.config = NetworkConfig{2, 2, 2, 2};
    net.weights = {Matrix(2, 2), Matrix(2, 2), Matrix(2, 2)};
    net.biases = {Vector{0.0, -1.0}, Vector{0.0, 0.0}, Vector{1.0, 1.0}};
    net.weights[0].at(0, 0) = 1.0;
    net.weights[0].at(1, 1) = 1.0;
    net.weights[1].at(0, 0) = 1.0;
    net.weights[1].at(0, 1) = 1.0;
    net.weights[1].at(1, 1) = 1.0;
    net.weights[2].at(0, 0) = 2.0;
    net.weights[2].at(1, 1) = 2.0;
    return net;
}

Network random_net(const NetworkConfig& cfg, std::uint64_t seed) {
    RandomStream s(seed);
    return init_network(cfg, s);
}

Dataset random_dataset(std::size_t n, std::size_t in_dim, std::size_t out_dim,
                       std::uint64_t seed) {
    RandomStream s(seed);
    Dataset ds;
    for (std::size_t i = 0; i < n; ++i) {
        Vector x(in_dim);
        Vector t(out_dim);
        for (double& v : x) v = s.normal();
        for (double& v : t) v = 0.5 * s.normal();
        ds.emplace_back(std::move(x), std::move(t));
    }
    return ds;
}

}  // namespace

TEST_CASE("forward matches a hand computation") {
    Network net = tiny_net();
    // A1 = relu([1, -0.5]) = [1, 0]; A2 = relu([1, 0]) = [1, 0]; y = [3, 1]
    Vector y = forward(net, Vector{1.0, 0.5});
    REQUIRE(y.size() == 2);
    CHECK(y[0] == doctest::Approx(3.0));
    CHECK(y[1] == doctest::Approx(1.0));
}

TEST_CASE("cache holds every layer and the output") {
    Network net = tiny_net();
    auto [y, cache] = forward_with_cache(net, Vector{1.0, 0.5});
    REQUIRE(cache.layers.size() == 3);
    CHECK(cache.at(1) == Vector{1.0, 0.0});
    CHECK(cache.at(2) == Vector{1.0, 0.0});
    CHECK(cache.output() == y);
    CHECK(forward(net, Vector{1.0, 0.5}) == y);
}

TEST_CASE("resume from a cached layer replays the forward bit-exactly") {
    // 100 random nets: resume(l, cache[l]) must equal the forward output.
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        NetworkConfig cfg;
        cfg.n_layers = 2 + seed % 3;
        Network net = random_net(cfg, 1000 + seed);
        RandomStream xs(2000 + seed);
        Vector x(cfg.input_dim);
        for (double& v : x) v = xs.normal();
        auto [y, cache] = forward_with_cache(net, x);
        for (std::size_t l = 1; l < net.total_layers(); ++l) {
            Vector replay = resume_from_layer(net, l, cache.at(l));
            REQUIRE(replay.size() == y.size());
            for (std::size_t i = 0; i < y.size(); ++i) CHECK(replay[i] == y[i]);
        }
    }
}

TEST_CASE("resume rejects out-of-range layers and wrong dims") {
    Network net = random_net(NetworkConfig{}, 5);
    Vector a(net.layer_dim(1), 0.0);
    CHECK_THROWS_AS((void)resume_from_layer(net, 0, a), Error);
    CHECK_THROWS_AS((void)resume_from_layer(net, net.total_layers(), a), Error);
    CHECK_THROWS_AS((void)resume_from_layer(net, 1, Vector{1.0}), Error);
}

TEST_CASE("init produces chained shapes, zero biases, He-scaled weights") {
    NetworkConfig cfg;
    cfg.n_layers = 3;
    cfg.input_dim = 8;
    cfg.hidden_dim = 16;
    cfg.output_dim = 8;
    Network net = random_net(cfg, 77);
    REQUIRE(net.total_layers() == 4);
    CHECK(net.weights[0].rows == 16);
    CHECK(net.weights[0].cols == 8);
    CHECK(net.weights[1].rows == 16);
    CHECK(net.weights[1].cols == 16);
    CHECK(net.weights[3].rows == 8);
    CHECK(net.weights[3].cols == 16);
    for (const auto& b : net.biases)
        for (double v : b) CHECK(v == 0.0);
    // sample std close to sqrt(2 / fan_in) for the largest layer
    double sq = 0.0;
    for (double v : net.weights[1].data) sq += v * v;
    double sd = std::sqrt(sq / static_cast<double>(net.weights[1].data.size()));
    CHECK(sd == doctest::Approx(std::sqrt(2.0 / 16.0)).epsilon(0.25));

    RandomStream s1(77);
    RandomStream s2(77);
    Network a = init_network(cfg, s1);
    Network b = init_network(cfg, s2);
    CHECK(a.weights[2].data == b.weights[2].data);

    RandomStream s3(3);
    NetworkConfig shallow;
    shallow.n_layers = 1;
    CHECK_THROWS_AS((void)init_network(shallow, s3), Error);
}

TEST_CASE("mse_half matches a hand computation") {
    Network net = tiny_net();
    Dataset ds = {{Vector{1.0, 0.5}, Vector{2.0, 2.0}}};
    // y = [3, 1]; (1/2)((3-2)^2 + (1-2)^2) = 1
    CHECK(mse_half(net, ds) == doctest::Approx(1.0));
}

TEST_CASE("analytic gradients match central finite differences") {
    // 20 random small nets, full-batch gradients of mse_half.
    const double h = 1e-5;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        NetworkConfig cfg;
        cfg.n_layers = 2;
        cfg.input_dim = 3;
        cfg.hidden_dim = 4;
        cfg.output_dim = 2;
        Network net = random_net(cfg, 300 + trial);
        Dataset ds = random_dataset(6, 3, 2, 400 + trial);
        Gradients g = compute_gradients(net, ds, 0, ds.size());
        double worst = 0.0;
        for (std::size_t li = 0; li < net.total_layers(); ++li) {
            for (std::size_t j = 0; j < net.weights[li].data.size(); ++j) {
                Network plus = net;
                Network minus = net;
                plus.weights[li].data[j] += h;
                minus.weights[li].data[j] -= h;
                double fd = (mse_half(plus, ds) - mse_half(minus, ds)) / (2.0 * h);
                double an = g.weights[li].data[j];
                double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
                worst = std::max(worst, rel);
            }
            for (std::size_t j = 0; j < net.biases[li].size(); ++j) {
                Network plus = net;
                Network minus = net;
                plus.biases[li][j] += h;
                minus.biases[li][j] -= h;
                double fd = (mse_half(plus, ds) - mse_half(minus, ds)) / (2.0 * h);
                double an = g.biases[li][j];
                double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
                worst = std::max(worst, rel);
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("training reduces the loss and is deterministic") {
    Network net = random_net(NetworkConfig{2, 3, 5, 2}, 9);
    Dataset ds = random_dataset(64, 3, 2, 10);
    double before = mse_half(net, ds);
    Network fit1 = train(net, ds, 50, 0.05);
    Network fit2 = train(net, ds, 50, 0.05);
    double after = mse_half(fit1, ds);
    CHECK(after < 0.5 * before);
    for (std::size_t i = 0; i < fit1.weights.size(); ++i)
        CHECK(fit1.weights[i].data == fit2.weights[i].data);
}

TEST_CASE("first_trainable freezes the early layers") {
    Network net = random_net(NetworkConfig{2, 3, 5, 2}, 21);
    Dataset ds = random_dataset(48, 3, 2, 22);
    Network fit = train(net, ds, 20, 0.05, 1);
    CHECK(fit.weights[0].data == net.weights[0].data);
    CHECK(fit.biases[0] == net.biases[0]);
    CHECK(fit.weights[1].data != net.weights[1].data);
    CHECK(fit.weights[2].data != net.weights[2].data);
}

TEST_CASE("train_from_layer equals training the tail sub-network") {
    NetworkConfig cfg{2, 3, 5, 2};
    Network net = random_net(cfg, 31);
    const std::size_t entry = 1;
    Dataset rows = random_dataset(48, net.layer_dim(entry), 2, 32);
    Network fit = train_from_layer(net, entry, rows, 25, 0.04);

    // layers below the entry are untouched
    CHECK(fit.weights[0].data == net.weights[0].data);
    CHECK(fit.biases[0] == net.biases[0]);

    // the updated tail matches a standalone fit of the same layers
    Network tail;
    tail.config = cfg;
    tail.weights = {net.weights[1], net.weights[2]};
    tail.biases = {net.biases[1], net.biases[2]};
    Network tail_fit = train(tail, rows, 25, 0.04);
    CHECK(fit.weights[1].data == tail_fit.weights[0].data);
    CHECK(fit.weights[2].data == tail_fit.weights[1].data);
    CHECK(fit.biases[1] == tail_fit.biases[0]);
    CHECK(fit.biases[2] == tail_fit.biases[1]);
}

TEST_CASE("train_from_layer validates entry and row dims") {
    Network net = random_net(NetworkConfig{2, 3, 5, 2}, 41);
    Dataset rows = random_dataset(8, 5, 2, 42);
    CHECK_THROWS_AS((void)train_from_layer(net, 0, rows, 5, 0.05), Error);
    CHECK_THROWS_AS((void)train_from_layer(net, 3, rows, 5, 0.05), Error);
    Dataset bad = random_dataset(8, 4, 2, 43);
    CHECK_THROWS_AS((void)train_from_layer(net, 1, bad, 5, 0.05), Error);
}

TEST_CASE("divergent training aborts naming the epoch") {
    Network net = random_net(NetworkConfig{2, 3, 5, 2}, 51);
    Dataset ds = random_dataset(32, 3, 2, 52);
    try {
        (void)train(net, ds, 200, 1e9);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Divergence);
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("train rejects bad arguments") {
    Network net = random_net(NetworkConfig{2, 3, 5, 2}, 61);
    Dataset ds = random_dataset(8, 3, 2, 62);
    CHECK_THROWS_AS((void)train(net, ds, 0, 0.05), Error);
    CHECK_THROWS_AS((void)train(net, ds, 5, 0.0), Error);
    CHECK_THROWS_AS((void)train(net, Dataset{}, 5, 0.05), Error);
    Dataset bad_target = {{Vector{1.0, 2.0, 3.0}, Vector{1.0}}};
    CHECK_THROWS_AS((void)train(net, bad_target, 5, 0.05), Error);
}
