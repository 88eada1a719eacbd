#pragma once

#include <cstddef>
#include <vector>

#include "patchlab/network.hpp"
#include "patchlab/patch.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/scenario.hpp"

namespace patchlab {

struct LinearProbe {
    Vector weights;
    double bias = 0.0;
    std::size_t probed_layer = 0;
    double heldout_accuracy = 0.0;
};

// label true = patched activation, false = unpatched.
struct ProbeDataset {
    std::vector<Vector> features;
    std::vector<bool> labels;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> heldout_indices;
    std::size_t probed_layer = 0;
};

// n activation vectors at spec.layer: patched rows are post-blend values,
// unpatched rows come from clean forward passes. The 80/20 split is
// stratified per label so both labels appear in both partitions.
ProbeDataset build_probe_dataset(const Network& net, const Scenario& scenario,
                                 const PatchSpec& spec, std::size_t n,
                                 double patched_fraction, RandomStream& stream);

// Full-batch logistic-loss gradient descent on the train split.
LinearProbe train_probe(const ProbeDataset& ds, std::size_t epochs, double lr);

struct ProbeDecision {
    double score = 0.0;
    bool flagged = false;
};
ProbeDecision probe_flag(const LinearProbe& probe, const Vector& a);

// Radial clamp: inside the ball of radius tau around reference_mean the
// activation passes through; outside it is pulled to the boundary.
Vector clamp_activation(const Vector& a, const Vector& reference_mean, double tau);

// Mean and 95th-percentile displacement of layer-l activations over n
// clean draws; the percentile is the default clamp bound.
struct CleanReference {
    Vector mean;
    double tau95 = 0.0;
};
CleanReference estimate_clean_reference(const Network& net, const Scenario& scenario,
                                        std::size_t layer, std::size_t n,
                                        RandomStream& stream);

struct EnsembleResult {
    double agreement = 0.0;
    Label majority = Label::Safe;
};

// K forward passes under independent N(0, probe_sigma^2) input jitter;
// majority label plus the fraction of passes agreeing with it. Ties go to
// the earliest pass among the tied labels.
EnsembleResult ensemble_check(const Network& net, const Vector& x, std::size_t k,
                              double probe_sigma, const BehaviorPrototypes& prototypes,
                              const ClassifierThresholds& thresholds, RandomStream& stream);

// Retrains the weight layers that consume the patched activation onward.
// augment_fraction of the rows are patched blends, all targeted at the
// safe prototype; the rest are clean-run activations with the same target.
Network robust_retrain(const Network& net, const Scenario& scenario, const PatchSpec& spec,
                       double augment_fraction, std::size_t n_rows, std::size_t epochs,
                       double lr, RandomStream& stream);

}  // namespace patchlab
