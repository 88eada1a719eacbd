#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "patchlab/defenses.hpp"
#include "patchlab/network.hpp"
#include "patchlab/patch.hpp"
#include "patchlab/scenario.hpp"

namespace patchlab {

// Substream lanes under the master seed. Trial randomness is derived as
// master -> trials lane -> salt -> trial index, so sweep points can share
// trials (same salt) or keep them disjoint (distinct salts).
enum MasterLane : std::uint64_t {
    kLaneGeometry = 1,
    kLaneInit = 2,
    kLaneTrainData = 3,
    kLaneTrials = 4,
    kLaneDefense = 5,
};

// Per-trial lanes: the sample draw, the patch coin and the patch noise come
// from separate child streams so toggling one never shifts the others.
enum TrialLane : std::uint64_t {
    kTrialSample = 0,
    kTrialCoin = 1,
    kTrialNoise = 2,
};

struct TrialConfig {
    std::size_t n_trials = 1000;
    double patch_prob = 0.6;
    PatchSpec spec;
    std::uint64_t master_seed = 0;
    // Trials with equal salts share randomness across runs; the layer sweep
    // sets salt = layer so its points stay disjoint.
    std::uint64_t stream_salt = 0;
    std::size_t workers = 1;
    const Network* net = nullptr;
    const Scenario* scenario = nullptr;
};

struct RateReport {
    std::size_t n_trials = 0;
    std::array<std::size_t, 3> counts = {0, 0, 0};      // Safe, Evil, Deceptive
    std::array<double, 3> proportions = {0.0, 0.0, 0.0};
    std::array<std::pair<double, double>, 3> ci;        // 95% Wilson per label
    double mean_d_score = 0.0;
    std::uint64_t master_seed = 0;
    std::string config_hash;

    double safe() const { return proportions[0]; }
    double evil() const { return proportions[1]; }
    double deceptive() const { return proportions[2]; }
};

// 95% Wilson score interval.
std::pair<double, double> wilson_interval(std::size_t successes, std::size_t n);

RateReport make_rate_report(const std::array<std::size_t, 3>& counts, double d_sum,
                            std::size_t n, std::uint64_t master_seed,
                            const std::string& config_hash);

// One Monte Carlo run: per trial draw a sample, flip the patch coin, run
// the patched or plain forward pass, classify. Worker count never changes
// the result: trials write to disjoint slots and the merge is ordered.
RateReport run_trials(const TrialConfig& cfg);

std::vector<std::pair<std::size_t, RateReport>> layer_sweep(const TrialConfig& cfg,
                                                            const std::vector<std::size_t>& layers);

std::vector<std::pair<double, RateReport>> alpha_sweep(const TrialConfig& cfg,
                                                       const std::vector<double>& alphas);

// Every chain trial is patched; the classified output is the last step's.
std::vector<std::pair<std::size_t, RateReport>> chain_sweep(const TrialConfig& cfg,
                                                            const std::vector<std::size_t>& lengths);

enum class DefenseKind { ProbeGate, Clamp, Retrain, Ensemble };

inline const char* defense_kind_name(DefenseKind k) {
    switch (k) {
        case DefenseKind::ProbeGate: return "probe-gate";
        case DefenseKind::Clamp: return "clamp";
        case DefenseKind::Retrain: return "retrain";
        default: return "ensemble";
    }
}

struct DefenseSettings {
    DefenseKind kind = DefenseKind::Retrain;
    // probe gate
    std::size_t probe_n = 2000;
    double probe_fraction = 0.5;
    std::size_t probe_epochs = 400;
    double probe_lr = 0.5;
    // clamp; tau <= 0 means estimate from clean displacements
    double clamp_tau = 0.0;
    std::size_t clamp_reference_n = 1000;
    // ensemble
    std::size_t ensemble_k = 5;
    double ensemble_sigma = 0.3;
    double ensemble_agree_min = 1.0;
    // retrain
    double retrain_fraction = 0.3;
    std::size_t retrain_rows = 1000;
    std::size_t retrain_epochs = 80;
    double retrain_lr = 0.03;
};

struct MitigationResult {
    RateReport before;
    RateReport after;
    double reduction = 0.0;   // 1 - after.deceptive / before.deceptive
    bool applicable = true;   // false when before.deceptive is zero
};

// Paired evaluation: the after run reuses the before run's substreams.
MitigationResult mitigation_eval(const TrialConfig& cfg, const DefenseSettings& defense);

struct CalibrationBounds {
    std::vector<double> spreads = {1.6, 1.75, 1.9, 2.05, 2.2};
    double theta_d_lo = 0.60;
    double theta_d_hi = 0.99;
    double theta_d_step = 0.0025;
    std::vector<double> theta_s = {0.15, 0.20, 0.25, 0.30, 0.35, 0.39};
    std::vector<double> alphas = {0.55, 0.60, 0.65, 0.70};
};

struct CalibrationTargets {
    double layer1_deceptive = 15.2;
    double layer2_deceptive = 23.9;
    double layer3_deceptive = 10.1;
    double baseline_safe = 72.8;
    double baseline_evil = 3.3;
    // Not part of the fit objective; breaks exact ties between otherwise
    // equal grid points (rates are quantized, ties are common).
    double alpha08_deceptive = 28.0;
};

struct CalibrationOutcome {
    double spread_dec = 0.0;
    double theta_d = 0.0;
    double theta_s = 0.0;
    double alpha = 0.0;
    // achieved percentages at the chosen point
    double layer1_deceptive = 0.0;
    double layer2_deceptive = 0.0;
    double layer3_deceptive = 0.0;
    double baseline_safe = 0.0;
    double baseline_evil = 0.0;
    double alpha08_deceptive = 0.0;  // informational, not in the objective
    double max_deviation = 0.0;
    bool conforming = false;
};

// Inputs describing the world the calibration retrains per spread value.
struct CalibrationProblem {
    NetworkConfig net_config;
    ScenarioParams params;          // spread_dec is overridden by the search
    std::uint64_t master_seed = 0;
    std::size_t n_trials = 1000;
    double patch_prob = 0.6;
    std::size_t baseline_layer = 2;
    CalibrationBounds bounds;
    CalibrationTargets targets;
};

// Exhaustive grid search minimizing the max absolute deviation over the
// three per-layer deceptive rates and the baseline safe/evil rates, using
// the same per-trial substreams the reporting runs use, so the achieved
// numbers are the numbers a run will print. Deterministic; among points
// with equal deviation the one whose alpha-0.8 deceptive rate lands
// closest to its target wins, earliest in iteration order on a repeat.
CalibrationOutcome calibrate(const CalibrationProblem& problem);

}  // namespace patchlab
