#pragma once

#include <cstdint>
#include <vector>

namespace patchlab {

// Counter-based deterministic stream: draw k is a pure function of
// (seed, k), so substreams never share state and parallel trials can
// derive their randomness independently of execution order.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t position() const noexcept { return position_; }

    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53 random bits.
    double uniform();

    // Standard normal via Box-Muller; two uniforms per draw, no cached spare,
    // so the draw count per normal is fixed.
    double normal();

    // Child seed derivation is pure in (seed, index).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index);

    RandomStream substream(std::uint64_t index) const {
        return RandomStream(derive(seed_, index));
    }

private:
    std::uint64_t seed_;
    std::uint64_t position_ = 0;
};

// dim independent draws from N(0, sigma^2); sigma = 0 yields exact zeros.
// Negative sigma is rejected.
std::vector<double> gaussian(RandomStream& stream, double sigma, std::size_t dim);

}  // namespace patchlab
