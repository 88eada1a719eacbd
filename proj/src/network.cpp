#include "patchlab/network.hpp"

#include <cmath>
#include <string>

#include "patchlab/error.hpp"

namespace patchlab {

namespace {

// One weight layer: z = W a + b, ReLU on every layer except the last.
// forward, resume and cache construction all route through here so a
// replayed activation reproduces the original arithmetic bit for bit.
Vector layer_step(const Network& net, std::size_t idx, const Vector& a) {
    Vector z = matvec(net.weights[idx], a);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += net.biases[idx][i];
    if (idx + 1 < net.total_layers()) return relu(z);
    return z;
}

}  // namespace

Network init_network(const NetworkConfig& config, RandomStream& stream) {
    if (config.n_layers < 2) throw config_error("network: n_layers must be >= 2");
    if (config.input_dim < 1 || config.hidden_dim < 1 || config.output_dim < 1)
        throw config_error("network: dims must be >= 1");
    std::vector<std::size_t> dims;
    dims.push_back(config.input_dim);
    for (std::size_t i = 0; i < config.n_layers; ++i) dims.push_back(config.hidden_dim);
    dims.push_back(config.output_dim);

    Network net;
    net.config = config;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        Matrix w(dims[i + 1], dims[i]);
        double s = std::sqrt(2.0 / static_cast<double>(dims[i]));
        for (double& x : w.data) x = s * stream.normal();
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(dims[i + 1], 0.0);
    }
    return net;
}

std::pair<Vector, ActivationCache> forward_with_cache(const Network& net, const Vector& x) {
    if (x.size() != net.config.input_dim)
        throw dimension_error("forward: x.dim != input_dim");
    ActivationCache cache;
    Vector h = x;
    for (std::size_t i = 0; i < net.total_layers(); ++i) {
        h = layer_step(net, i, h);
        cache.layers.push_back(h);
    }
    return {h, cache};
}

Vector forward(const Network& net, const Vector& x) {
    if (x.size() != net.config.input_dim)
        throw dimension_error("forward: x.dim != input_dim");
    Vector h = x;
    for (std::size_t i = 0; i < net.total_layers(); ++i) h = layer_step(net, i, h);
    return h;
}

Vector resume_from_layer(const Network& net, std::size_t l, const Vector& a) {
    if (l < 1 || l >= net.total_layers())
        throw dimension_error("resume_from_layer: need 1 <= l <= n-1");
    if (a.size() != net.layer_dim(l))
        throw dimension_error("resume_from_layer: a.dim != layer dim");
    Vector h = a;
    for (std::size_t i = l; i < net.total_layers(); ++i) h = layer_step(net, i, h);
    return h;
}

double mse_half(const Network& net, const Dataset& ds) {
    double acc = 0.0;
    for (const auto& [x, t] : ds) {
        Vector y = forward(net, x);
        if (y.size() != t.size()) throw dimension_error("mse: target dim mismatch");
        for (std::size_t i = 0; i < y.size(); ++i) {
            double d = y[i] - t[i];
            acc += d * d;
        }
    }
    return acc / (2.0 * static_cast<double>(ds.size()));
}

namespace {

struct BatchGrads {
    std::vector<Matrix> gw;
    std::vector<Vector> gb;
};

// Backprop for (1/2B) sum |y - t|^2 over rows [begin, end). Rows enter at
// weight layer `entry` (inputs are A_entry vectors when entry > 0).
BatchGrads backprop(const Network& net, const Dataset& ds, std::size_t begin,
                    std::size_t end, std::size_t entry) {
    std::size_t n = net.total_layers();
    BatchGrads g;
    for (std::size_t i = 0; i < n; ++i) {
        g.gw.emplace_back(net.weights[i].rows, net.weights[i].cols);
        g.gb.emplace_back(net.biases[i].size(), 0.0);
    }
    double inv_b = 1.0 / static_cast<double>(end - begin);
    for (std::size_t r = begin; r < end; ++r) {
        const auto& [x, t] = ds[r];
        // hs[i] is the input to weight layer entry+i; zs[i] its preactivation.
        std::vector<Vector> hs = {x};
        std::vector<Vector> zs;
        Vector h = x;
        for (std::size_t i = entry; i < n; ++i) {
            Vector z = matvec(net.weights[i], h);
            for (std::size_t j = 0; j < z.size(); ++j) z[j] += net.biases[i][j];
            zs.push_back(z);
            h = (i + 1 < n) ? relu(z) : z;
            hs.push_back(h);
        }
        if (h.size() != t.size()) throw dimension_error("train: target dim mismatch");
        Vector delta(h.size());
        for (std::size_t j = 0; j < h.size(); ++j) delta[j] = (h[j] - t[j]) * inv_b;
        for (std::size_t i = n; i-- > entry;) {
            std::size_t k = i - entry;
            Matrix& gw = g.gw[i];
            for (std::size_t row = 0; row < gw.rows; ++row)
                for (std::size_t col = 0; col < gw.cols; ++col)
                    gw.at(row, col) += delta[row] * hs[k][col];
            for (std::size_t row = 0; row < delta.size(); ++row) g.gb[i][row] += delta[row];
            if (i > entry) {
                Vector prev(net.weights[i].cols, 0.0);
                for (std::size_t col = 0; col < prev.size(); ++col) {
                    double acc = 0.0;
                    for (std::size_t row = 0; row < delta.size(); ++row)
                        acc += delta[row] * net.weights[i].at(row, col);
                    prev[col] = zs[k - 1][col] > 0.0 ? acc : 0.0;
                }
                delta = std::move(prev);
            }
        }
    }
    return g;
}

Network sgd(const Network& start, const Dataset& ds, std::size_t epochs, double lr,
            std::size_t first_trainable, std::size_t entry) {
    if (lr <= 0.0) throw config_error("train: lr must be > 0");
    if (epochs < 1) throw config_error("train: epochs must be >= 1");
    if (ds.empty()) throw config_error("train: dataset empty");
    for (const auto& [x, t] : ds) {
        if (x.size() != start.weights[entry].cols)
            throw dimension_error("train: row dim mismatch");
        if (t.size() != start.weights.back().rows)
            throw dimension_error("train: target dim mismatch");
    }
    constexpr std::size_t kBatch = 32;
    Network net = start;
    std::size_t n = net.total_layers();
    for (std::size_t ep = 0; ep < epochs; ++ep) {
        for (std::size_t b0 = 0; b0 < ds.size(); b0 += kBatch) {
            std::size_t b1 = std::min(b0 + kBatch, ds.size());
            // Shapes were validated above, so any in-loop rejection can only
            // be a non-finite value: the loss has diverged.
            try {
                BatchGrads g = backprop(net, ds, b0, b1, entry);
                for (std::size_t i = std::max(first_trainable, entry); i < n; ++i) {
                    for (std::size_t j = 0; j < g.gw[i].data.size(); ++j)
                        net.weights[i].data[j] -= lr * g.gw[i].data[j];
                    for (std::size_t j = 0; j < g.gb[i].size(); ++j)
                        net.biases[i][j] -= lr * g.gb[i][j];
                }
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::Dimension)
                    throw divergence_error("train: non-finite loss at epoch " +
                                           std::to_string(ep));
                throw;
            }
        }
        for (const Matrix& w : net.weights)
            if (!all_finite(w.data))
                throw divergence_error("train: non-finite parameters at epoch " +
                                       std::to_string(ep));
    }
    return net;
}

}  // namespace

Gradients compute_gradients(const Network& net, const Dataset& ds,
                            std::size_t begin, std::size_t end) {
    BatchGrads g = backprop(net, ds, begin, end, 0);
    return {std::move(g.gw), std::move(g.gb)};
}

Network train(const Network& net, const Dataset& ds, std::size_t epochs, double lr,
              std::size_t first_trainable) {
    return sgd(net, ds, epochs, lr, first_trainable, 0);
}

Network train_from_layer(const Network& net, std::size_t entry, const Dataset& ds,
                         std::size_t epochs, double lr) {
    if (entry < 1 || entry >= net.total_layers())
        throw config_error("train_from_layer: bad entry layer");
    for (const auto& [a, t] : ds)
        if (a.size() != net.layer_dim(entry))
            throw dimension_error("train_from_layer: row dim != layer dim");
    return sgd(net, ds, epochs, lr, entry, entry);
}

}  // namespace patchlab
