#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchlab/experiments.hpp"
#include "patchlab/network.hpp"
#include "patchlab/patch.hpp"
#include "patchlab/scenario.hpp"

namespace patchlab {

// Parsed experiment configuration. `canonical` carries the full document
// with defaults applied and keys sorted; the hash is computed from it, so
// two files that differ only in key order or omitted defaults share a hash.
struct RunConfig {
    NetworkConfig network;
    ScenarioParams scenario;
    ClassifierThresholds thresholds;
    PatchSpec patch;
    std::size_t n_trials = 1000;
    double patch_prob = 0.6;
    std::uint64_t master_seed = 11;
    std::vector<std::size_t> sweep_layers = {1, 2, 3};
    std::vector<double> sweep_alphas = {0.0, 0.2, 0.4, 0.6, 0.8};
    std::vector<std::size_t> sweep_chain_lengths = {1, 2, 3, 4};
    DefenseSettings defense;
    CalibrationBounds calibration_bounds;
    CalibrationTargets calibration_targets;

    nlohmann::json canonical;
    std::string config_hash;
};

// The shipped defaults as a JSON document.
nlohmann::json default_config_json();

// Parse + validate a user document: unknown keys, type mismatches and
// out-of-range values are config errors naming the offending field.
RunConfig parse_config(const nlohmann::json& user);

RunConfig parse_config_text(const std::string& text);

RunConfig load_config_file(const std::string& path);

// FNV-1a 64 over the canonical serialization.
std::string hash_canonical(const nlohmann::json& canonical);

// Override the master seed (CLI flag) and rehash.
void override_seed(RunConfig& cfg, std::uint64_t seed);

// Apply calibrated values from a manifest to the effective config; the
// config hash is left untouched (it identifies the base document).
void apply_calibration(RunConfig& cfg, double spread_dec, double theta_d, double theta_s,
                       double alpha);

struct World {
    Scenario scenario;
    Network net;
};

// Deterministic world construction shared by runs and calibration:
// geometry, prototypes and the two-stage trained network, all derived
// from fixed lanes under the master seed.
World build_world(const RunConfig& cfg);

CalibrationProblem calibration_problem(const RunConfig& cfg);

}  // namespace patchlab
