#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "patchlab/rng.hpp"
#include "patchlab/tensor.hpp"

namespace patchlab {

enum class Activation { ReLU };

// n_layers counts the ReLU layers. The readout that maps the last hidden
// vector to the output is affine and sits on top, so a network has
// n_layers + 1 weight layers and the patchable layers are 1 .. n_layers.
struct NetworkConfig {
    std::size_t n_layers = 3;
    std::size_t input_dim = 8;
    std::size_t hidden_dim = 16;
    std::size_t output_dim = 8;
    Activation activation = Activation::ReLU;
};

struct Network {
    NetworkConfig config;
    std::vector<Matrix> weights;  // weights[i] maps A_i to A_{i+1}, A_0 = x
    std::vector<Vector> biases;

    std::size_t total_layers() const { return weights.size(); }
    // Output dimension of 1-based layer l (cache entry l).
    std::size_t layer_dim(std::size_t l) const { return weights[l - 1].rows; }
};

// cache.layers[l-1] holds A_l; the last entry is the network output y.
struct ActivationCache {
    std::vector<Vector> layers;

    const Vector& at(std::size_t l) const { return layers[l - 1]; }
    const Vector& output() const { return layers.back(); }
};

// He-scaled normal weights, zero biases; deterministic in the stream.
Network init_network(const NetworkConfig& config, RandomStream& stream);

std::pair<Vector, ActivationCache> forward_with_cache(const Network& net, const Vector& x);

Vector forward(const Network& net, const Vector& x);

// Continues the forward pass as if `a` had been layer l's output.
// Valid for 1 <= l <= total_layers - 1.
Vector resume_from_layer(const Network& net, std::size_t l, const Vector& a);

using Dataset = std::vector<std::pair<Vector, Vector>>;

// Half mean squared error over the dataset: (1/2N) sum |f(x) - t|^2.
double mse_half(const Network& net, const Dataset& ds);

// Analytic gradients of mse_half over the batch [begin, end).
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
};
Gradients compute_gradients(const Network& net, const Dataset& ds,
                            std::size_t begin, std::size_t end);

// Minibatch SGD on MSE in fixed dataset order, batch 32, no momentum.
// first_trainable restricts updates to weight layers with 0-based index
// >= first_trainable (used for staged fits and for retraining defenses).
Network train(const Network& net, const Dataset& ds, std::size_t epochs, double lr,
              std::size_t first_trainable = 0);

// SGD over rows that enter the network at layer `entry` (rows are A_entry
// vectors); only the weight layers consuming A_entry onward exist in the
// gradient path and only they are updated.
Network train_from_layer(const Network& net, std::size_t entry, const Dataset& ds,
                         std::size_t epochs, double lr);

}  // namespace patchlab
