#include "patchlab/patch.hpp"

#include "patchlab/error.hpp"

namespace patchlab {

void validate_spec(const PatchSpec& spec, const Network& net) {
    if (spec.layer < 1 || spec.layer >= net.total_layers())
        throw config_error("patch: layer out of range 1 .. n-1");
    if (spec.alpha < 0.0 || spec.alpha > 1.0)
        throw config_error("patch: alpha outside [0, 1]");
    if (spec.sigma < 0.0) throw config_error("patch: sigma must be >= 0");
}

PatchedActivation blend(const Vector& a_clean, const Vector& a_dec,
                        const PatchSpec& spec, RandomStream& stream) {
    if (a_clean.size() != a_dec.size())
        throw dimension_error("blend: endpoint dim mismatch");
    PatchedActivation out;
    out.alpha = spec.alpha;
    out.sigma = spec.sigma;
    out.layer = spec.layer;
    out.noise_stream_seed = stream.seed();
    // Exact endpoints: no arithmetic on the copied vector when sigma is 0.
    if (spec.sigma == 0.0 && spec.alpha == 0.0) {
        out.value = a_clean;
        return out;
    }
    if (spec.sigma == 0.0 && spec.alpha == 1.0) {
        out.value = a_dec;
        return out;
    }
    out.value.resize(a_clean.size());
    for (std::size_t i = 0; i < a_clean.size(); ++i)
        out.value[i] = (1.0 - spec.alpha) * a_clean[i] + spec.alpha * a_dec[i];
    if (spec.sigma > 0.0) {
        Vector eps = gaussian(stream, spec.sigma, out.value.size());
        for (std::size_t i = 0; i < eps.size(); ++i) out.value[i] += eps[i];
    }
    return out;
}

Vector patched_forward(const Network& net, const Vector& x_t,
                       const ActivationCache& clean_cache,
                       const ActivationCache& dec_cache,
                       const PatchSpec& spec, RandomStream& stream) {
    validate_spec(spec, net);
    if (clean_cache.layers.size() != net.total_layers() ||
        dec_cache.layers.size() != net.total_layers())
        throw dimension_error("patched_forward: cache layer count mismatch");
    const Vector& a_c = clean_cache.at(spec.layer);
    const Vector& a_d = dec_cache.at(spec.layer);
    if (a_c.size() != net.layer_dim(spec.layer) || a_d.size() != net.layer_dim(spec.layer))
        throw dimension_error("patched_forward: cache dim mismatch");
    if (x_t.size() != net.config.input_dim)
        throw dimension_error("patched_forward: x_t dim mismatch");
    // An exact-zero patch is a no-op: the unpatched forward pass stands,
    // bit for bit. This also keeps chained no-op patches equal to plain
    // self-composition even though the caches stay fixed across steps.
    if (spec.alpha == 0.0 && spec.sigma == 0.0) return forward(net, x_t);
    // Layers below the patch point do not affect the output; the swap
    // replaces layer l wholesale, so the resume path defines the result.
    PatchedActivation patched = blend(a_c, a_d, spec, stream);
    return resume_from_layer(net, spec.layer, patched.value);
}

std::vector<Vector> sequential_patch(const Network& net, const Vector& x_t,
                                     const ActivationCache& clean_cache,
                                     const ActivationCache& dec_cache,
                                     const PatchSpec& spec, std::size_t chain_len,
                                     RandomStream& stream) {
    if (net.config.output_dim != net.config.input_dim)
        throw dimension_error("sequential_patch: output_dim != input_dim");
    if (chain_len < 1) throw config_error("sequential_patch: chain_len must be >= 1");
    std::vector<Vector> outputs;
    Vector x = x_t;
    for (std::size_t step = 0; step < chain_len; ++step) {
        x = patched_forward(net, x, clean_cache, dec_cache, spec, stream);
        outputs.push_back(x);
    }
    return outputs;
}

}  // namespace patchlab
