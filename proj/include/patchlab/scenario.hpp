#pragma once

#include <cstddef>
#include <vector>

#include "patchlab/network.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/tensor.hpp"

namespace patchlab {

// Unit-norm output-space anchors. misleading sits deliberately close to
// safe (cos in [0.4, 0.7]); evil is near-orthogonal to both.
struct BehaviorPrototypes {
    Vector safe;
    Vector evil;
    Vector misleading;
};

struct PromptSample {
    Vector x_c;  // clean
    Vector x_d;  // deceptive
    Vector x_t;  // target, drawn from the clean cluster
};

enum class Label { Safe, Evil, Deceptive };

inline const char* label_name(Label l) {
    switch (l) {
        case Label::Safe: return "safe";
        case Label::Evil: return "evil";
        default: return "deceptive";
    }
}

struct BehaviorOutcome {
    Vector y;
    double d_score = 0.0;
    Label label = Label::Safe;
};

struct ClassifierThresholds {
    double theta_d = 0.75;  // misleading-proximity threshold
    double theta_s = 0.30;  // apparent-compliance floor
};

// Generator and training knobs. The two input clusters are isotropic
// Gaussian blobs; spread_dec is the knob calibration searches over, the
// clean spread stays fixed so the unpatched baseline stays pure.
struct ScenarioParams {
    double base_scale = 1.5;   // |clean mean|
    double cue_distance = 2.66;   // deceptive mean offset along the cue axis
    double evil_distance = 0.7;   // deceptive mean offset along the evil axis
    double spread_clean = 0.3;
    double spread_dec = 0.45;

    // prototype geometry
    double cos_safe_mis = 0.55;
    double cos_safe_evil = 0.05;
    double cos_evil_mis = 0.15;

    // graded response map: how far along the safe-to-misleading arc a
    // deceptive training row's target sits, as a function of its cue
    // coordinate t and style coordinate eta
    double cue_onset = 1.3;    // below this the target is plain safe
    double sat_scale = 0.45;   // softness of the saturating section
    double sat_max = 0.93;
    double arc_floor = 0.6;    // minimum arc position once past onset
    double arc_cap = 0.97;
    double style_gain = 0.04;  // small style-coordinate modulation
    double ramp_knee = 4.0;    // stage-one linear ramp scale
    double ramp_max = 0.93;

    // training mixture
    std::size_t n_train = 900;
    double dec_share = 0.40;
    double neg_share = 0.08;   // rows just below onset, safe-targeted
    double evil_share = 0.10;
    double neg_mean = -1.5;
    double neg_sd = 0.8;
    double evil_scale = 2.6;   // evil training rows sit this far out
    double evil_sd = 0.35;
    double evil_cut = 2.0;     // rows beyond this evil coordinate target evil

    std::size_t epochs_a = 150;  // full-network stage
    std::size_t epochs_b = 100;  // head-only refinement stage
    double lr = 0.05;
};

// Input-space frame: clean mean plus three orthonormal axes that the
// generator and the training targets share.
struct ScenarioGeometry {
    Vector mu_clean;
    Vector v_cue;
    Vector v_style;
    Vector u_evil;
    Vector dec_mean;  // mu_clean + cue_distance * v_cue + evil_distance * u_evil
};

struct Scenario {
    ScenarioParams params;
    BehaviorPrototypes prototypes;
    ScenarioGeometry geometry;
    ClassifierThresholds thresholds;
};

// Deterministic in the stream; rejects output_dim < 3 (three anchors with
// the required pairwise angles need three independent directions).
BehaviorPrototypes make_prototypes(std::size_t output_dim, RandomStream& stream,
                                   double cos_sm = 0.55, double cos_se = 0.05,
                                   double cos_em = 0.15);

ScenarioGeometry make_geometry(std::size_t input_dim, const ScenarioParams& params,
                               RandomStream& stream);

std::vector<PromptSample> generate_samples(std::size_t count, const ScenarioParams& params,
                                           const ScenarioGeometry& geom,
                                           RandomStream& stream);

// cos(y, misleading); rejects zero-norm y.
double deception_score(const Vector& y, const BehaviorPrototypes& prototypes);

// Evil wins when cos(y, evil) is strictly the largest similarity; otherwise
// Deceptive needs closeness to misleading AND residual closeness to safe;
// everything else is Safe.
BehaviorOutcome classify(const Vector& y, const BehaviorPrototypes& prototypes,
                         const ClassifierThresholds& thresholds);

// Spherical interpolation from a to b; w outside [0, 1] is clamped.
Vector slerp(const Vector& a, const Vector& b, double w);

// Both training stages share rows and row order; only the targets differ.
// Stage A ramps targets linearly in the cue coordinate so the hidden code
// stays linear; stage B imposes the saturating map with onset and floor.
struct TrainingData {
    Dataset stage_a;
    Dataset stage_b;
};
TrainingData make_training_data(const ScenarioParams& params, const ScenarioGeometry& geom,
                                const BehaviorPrototypes& prototypes, RandomStream& stream);

// init + stage A over all layers + stage B over the last hidden layer and
// the readout. Deterministic in the two streams.
Network train_scenario_network(const NetworkConfig& net_config, const ScenarioParams& params,
                               const ScenarioGeometry& geom, const BehaviorPrototypes& prototypes,
                               RandomStream& init_stream, RandomStream& data_stream);

}  // namespace patchlab
