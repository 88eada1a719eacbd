#include "patchlab/rng.hpp"

#include <cmath>
#include <numbers>

#include "patchlab/error.hpp"

namespace patchlab {

namespace {

// splitmix64 finalizer; full avalanche, bijective on 64 bits.
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RandomStream::next_u64() {
    return mix64(seed_ ^ mix64(position_++ + 0x632be59bd9b4e019ULL));
}

double RandomStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() {
    // uniform() can return 0; shift into (0, 1] so log() stays finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RandomStream::derive(std::uint64_t seed, std::uint64_t index) {
    return mix64(seed ^ (0x9e3779b97f4a7c15ULL * mix64(index + 1)));
}

std::vector<double> gaussian(RandomStream& stream, double sigma, std::size_t dim) {
    if (sigma < 0.0) throw config_error("gaussian: sigma must be >= 0");
    std::vector<double> out(dim, 0.0);
    if (sigma == 0.0) return out;
    for (std::size_t i = 0; i < dim; ++i) out[i] = sigma * stream.normal();
    return out;
}

}  // namespace patchlab
