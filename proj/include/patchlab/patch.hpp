#pragma once

#include <cstdint>
#include <vector>

#include "patchlab/network.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/tensor.hpp"

namespace patchlab {

struct PatchSpec {
    std::size_t layer = 2;  // 1-based patch target, valid range 1 .. n-1
    double alpha = 0.6;     // blend strength in [0, 1]
    double sigma = 0.0;     // noise scale, >= 0
};

struct PatchedActivation {
    Vector value;
    // provenance
    double alpha = 0.0;
    double sigma = 0.0;
    std::size_t layer = 0;
    std::uint64_t noise_stream_seed = 0;
};

void validate_spec(const PatchSpec& spec, const Network& net);

// (1-alpha) * a_clean + alpha * a_dec + N(0, sigma^2) per component.
// alpha 0 and 1 with sigma 0 return the endpoint vectors unchanged.
PatchedActivation blend(const Vector& a_clean, const Vector& a_dec,
                        const PatchSpec& spec, RandomStream& stream);

// Forward x_t, swap layer `spec.layer` output for the blended activation,
// resume to the output.
Vector patched_forward(const Network& net, const Vector& x_t,
                       const ActivationCache& clean_cache,
                       const ActivationCache& dec_cache,
                       const PatchSpec& spec, RandomStream& stream);

// Repeated intervention: each step feeds the previous output back as the
// next target input; the clean/deceptive caches stay fixed across steps.
// Requires output_dim == input_dim.
std::vector<Vector> sequential_patch(const Network& net, const Vector& x_t,
                                     const ActivationCache& clean_cache,
                                     const ActivationCache& dec_cache,
                                     const PatchSpec& spec, std::size_t chain_len,
                                     RandomStream& stream);

}  // namespace patchlab
