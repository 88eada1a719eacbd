#include "patchlab/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "patchlab/error.hpp"

namespace patchlab {

namespace {

// Per-example substream lanes inside the defense stream.
constexpr std::uint64_t kSampleLane = 0;
constexpr std::uint64_t kNoiseLane = 2;
constexpr std::uint64_t kSplitLane = 3;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<std::size_t> shuffled(std::vector<std::size_t> idx, RandomStream& stream) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[stream.next_u64() % i]);
    return idx;
}

}  // namespace

ProbeDataset build_probe_dataset(const Network& net, const Scenario& scenario,
                                 const PatchSpec& spec, std::size_t n,
                                 double patched_fraction, RandomStream& stream) {
    if (n < 10) throw config_error("probe dataset: n must be >= 10");
    if (patched_fraction <= 0.0 || patched_fraction >= 1.0)
        throw config_error("probe dataset: patched_fraction must be in (0, 1)");
    validate_spec(spec, net);
    std::size_t n_patched = static_cast<std::size_t>(n * patched_fraction);
    if (n_patched < 2 || n - n_patched < 2)
        throw config_error("probe dataset: fraction leaves a class under 2 examples");

    ProbeDataset ds;
    ds.probed_layer = spec.layer;
    ds.features.reserve(n);
    ds.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RandomStream ex = stream.substream(i);
        RandomStream sample_stream = ex.substream(kSampleLane);
        RandomStream noise_stream = ex.substream(kNoiseLane);
        std::vector<PromptSample> s =
            generate_samples(1, scenario.params, scenario.geometry, sample_stream);
        if (i < n_patched) {
            ActivationCache cc = forward_with_cache(net, s[0].x_c).second;
            ActivationCache dc = forward_with_cache(net, s[0].x_d).second;
            PatchedActivation pa =
                blend(cc.at(spec.layer), dc.at(spec.layer), spec, noise_stream);
            ds.features.push_back(std::move(pa.value));
            ds.labels.push_back(true);
        } else {
            ActivationCache tc = forward_with_cache(net, s[0].x_t).second;
            ds.features.push_back(tc.at(spec.layer));
            ds.labels.push_back(false);
        }
    }

    // Stratified 80/20: shuffle each class, hold out the leading fifth.
    RandomStream split_stream = stream.substream(kSplitLane);
    for (bool cls : {true, false}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (ds.labels[i] == cls) members.push_back(i);
        members = shuffled(std::move(members), split_stream);
        std::size_t held = std::max<std::size_t>(1, members.size() / 5);
        for (std::size_t i = 0; i < members.size(); ++i)
            (i < held ? ds.heldout_indices : ds.train_indices).push_back(members[i]);
    }
    std::sort(ds.train_indices.begin(), ds.train_indices.end());
    std::sort(ds.heldout_indices.begin(), ds.heldout_indices.end());
    return ds;
}

LinearProbe train_probe(const ProbeDataset& ds, std::size_t epochs, double lr) {
    if (lr <= 0.0) throw config_error("train_probe: lr must be > 0");
    if (ds.train_indices.empty() || ds.heldout_indices.empty())
        throw config_error("train_probe: empty partition");
    std::size_t dim = ds.features.front().size();
    LinearProbe probe;
    probe.probed_layer = ds.probed_layer;
    probe.weights.assign(dim, 0.0);
    double inv_n = 1.0 / static_cast<double>(ds.train_indices.size());
    for (std::size_t ep = 0; ep < epochs; ++ep) {
        Vector gw(dim, 0.0);
        double gb = 0.0;
        double loss = 0.0;
        for (std::size_t i : ds.train_indices) {
            const Vector& a = ds.features[i];
            double y = ds.labels[i] ? 1.0 : 0.0;
            double p = sigmoid(dot(probe.weights, a) + probe.bias);
            double err = (p - y) * inv_n;
            for (std::size_t j = 0; j < dim; ++j) gw[j] += err * a[j];
            gb += err;
            loss -= y * std::log(std::max(p, 1e-300)) +
                    (1.0 - y) * std::log(std::max(1.0 - p, 1e-300));
        }
        if (!std::isfinite(loss))
            throw divergence_error("train_probe: non-finite loss at epoch " + std::to_string(ep));
        for (std::size_t j = 0; j < dim; ++j) probe.weights[j] -= lr * gw[j];
        probe.bias -= lr * gb;
    }
    std::size_t hits = 0;
    for (std::size_t i : ds.heldout_indices) {
        bool flagged = probe_flag(probe, ds.features[i]).flagged;
        if (flagged == ds.labels[i]) ++hits;
    }
    probe.heldout_accuracy =
        static_cast<double>(hits) / static_cast<double>(ds.heldout_indices.size());
    return probe;
}

ProbeDecision probe_flag(const LinearProbe& probe, const Vector& a) {
    if (a.size() != probe.weights.size())
        throw dimension_error("probe_flag: dim mismatch");
    double score = sigmoid(dot(probe.weights, a) + probe.bias);
    return {score, score > 0.5};
}

Vector clamp_activation(const Vector& a, const Vector& reference_mean, double tau) {
    if (a.size() != reference_mean.size())
        throw dimension_error("clamp_activation: dim mismatch");
    if (tau <= 0.0) throw config_error("clamp_activation: tau must be > 0");
    Vector disp = axpy(a, -1.0, reference_mean);
    double d = norm(disp);
    if (d <= tau) return a;
    return axpy(reference_mean, tau / d, disp);
}

CleanReference estimate_clean_reference(const Network& net, const Scenario& scenario,
                                        std::size_t layer, std::size_t n,
                                        RandomStream& stream) {
    if (n < 2) throw config_error("clean reference: n must be >= 2");
    std::vector<Vector> acts;
    acts.reserve(n);
    Vector mean(net.layer_dim(layer), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        RandomStream ex = stream.substream(i);
        Vector x = scenario.geometry.mu_clean;
        for (double& v : x) v += scenario.params.spread_clean * ex.normal();
        Vector a = forward_with_cache(net, x).second.at(layer);
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += a[j];
        acts.push_back(std::move(a));
    }
    for (double& v : mean) v /= static_cast<double>(n);
    std::vector<double> disp;
    disp.reserve(n);
    for (const Vector& a : acts) disp.push_back(norm(axpy(a, -1.0, mean)));
    std::sort(disp.begin(), disp.end());
    // Nearest-rank 95th percentile.
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(n)));
    return {std::move(mean), disp[std::min(rank, n) - 1]};
}

EnsembleResult ensemble_check(const Network& net, const Vector& x, std::size_t k,
                              double probe_sigma, const BehaviorPrototypes& prototypes,
                              const ClassifierThresholds& thresholds, RandomStream& stream) {
    if (k < 2) throw config_error("ensemble_check: K must be >= 2");
    if (probe_sigma < 0.0) throw config_error("ensemble_check: sigma must be >= 0");
    std::vector<Label> labels;
    labels.reserve(k);
    for (std::size_t pass = 0; pass < k; ++pass) {
        Vector xj = x;
        if (probe_sigma > 0.0) {
            Vector eps = gaussian(stream, probe_sigma, x.size());
            for (std::size_t j = 0; j < xj.size(); ++j) xj[j] += eps[j];
        }
        labels.push_back(classify(forward(net, xj), prototypes, thresholds).label);
    }
    std::size_t counts[3] = {0, 0, 0};
    for (Label l : labels) ++counts[static_cast<int>(l)];
    std::size_t best = std::max({counts[0], counts[1], counts[2]});
    Label majority = labels.front();
    for (Label l : labels)
        if (counts[static_cast<int>(l)] == best) {
            majority = l;
            break;
        }
    return {static_cast<double>(best) / static_cast<double>(k), majority};
}

Network robust_retrain(const Network& net, const Scenario& scenario, const PatchSpec& spec,
                       double augment_fraction, std::size_t n_rows, std::size_t epochs,
                       double lr, RandomStream& stream) {
    if (augment_fraction <= 0.0 || augment_fraction >= 1.0)
        throw config_error("robust_retrain: augment_fraction must be in (0, 1)");
    validate_spec(spec, net);
    std::size_t n_patched = static_cast<std::size_t>(n_rows * augment_fraction);
    Dataset rows;
    rows.reserve(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) {
        RandomStream ex = stream.substream(i);
        RandomStream sample_stream = ex.substream(kSampleLane);
        RandomStream noise_stream = ex.substream(kNoiseLane);
        std::vector<PromptSample> s =
            generate_samples(1, scenario.params, scenario.geometry, sample_stream);
        if (i < n_patched) {
            ActivationCache cc = forward_with_cache(net, s[0].x_c).second;
            ActivationCache dc = forward_with_cache(net, s[0].x_d).second;
            PatchedActivation pa =
                blend(cc.at(spec.layer), dc.at(spec.layer), spec, noise_stream);
            rows.emplace_back(std::move(pa.value), scenario.prototypes.safe);
        } else {
            ActivationCache tc = forward_with_cache(net, s[0].x_t).second;
            rows.emplace_back(tc.at(spec.layer), scenario.prototypes.safe);
        }
    }
    std::vector<std::size_t> idx(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) idx[i] = i;
    RandomStream split_stream = stream.substream(kSplitLane);
    idx = shuffled(std::move(idx), split_stream);
    Dataset ordered;
    ordered.reserve(n_rows);
    for (std::size_t i : idx) ordered.push_back(std::move(rows[i]));
    return train_from_layer(net, spec.layer, ordered, epochs, lr);
}

}  // namespace patchlab
