#include "patchlab/config.hpp"

#include <fstream>
#include <sstream>

#include "patchlab/error.hpp"

namespace patchlab {

using nlohmann::json;

json default_config_json() {
    json j;
    j["network"] = {
        {"n_layers", 3}, {"input_dim", 8}, {"hidden_dim", 16}, {"output_dim", 8}};
    j["scenario"] = {
        {"base_scale", 1.5},    {"cue_distance", 2.66}, {"evil_distance", 0.7},
        {"spread_clean", 0.3},  {"spread_dec", 0.45},   {"cos_safe_mis", 0.55},
        {"cos_safe_evil", 0.05}, {"cos_evil_mis", 0.15}, {"cue_onset", 1.3},
        {"sat_scale", 0.45},    {"sat_max", 0.93},      {"arc_floor", 0.6},
        {"arc_cap", 0.97},      {"style_gain", 0.04},   {"ramp_knee", 4.0},
        {"ramp_max", 0.93},     {"n_train", 900},       {"dec_share", 0.4},
        {"neg_share", 0.08},    {"evil_share", 0.1},    {"neg_mean", -1.5},
        {"neg_sd", 0.8},        {"evil_scale", 2.6},    {"evil_sd", 0.35},
        {"evil_cut", 2.0},      {"epochs_a", 150},      {"epochs_b", 100},
        {"lr", 0.05},           {"theta_d", 0.75},      {"theta_s", 0.3}};
    j["patch"] = {{"layer", 2}, {"alpha", 0.6}, {"sigma", 0.0}};
    j["trial"] = {{"n_trials", 1000}, {"patch_prob", 0.6}, {"master_seed", 11}};
    j["sweeps"] = {{"layers", {1, 2, 3}},
                   {"alphas", {0.0, 0.2, 0.4, 0.6, 0.8}},
                   {"chain_lengths", {1, 2, 3, 4}}};
    j["defense"] = {{"kind", "retrain"},
                    {"probe_n", 2000},
                    {"probe_fraction", 0.5},
                    {"probe_epochs", 400},
                    {"probe_lr", 0.5},
                    {"clamp_tau", 0.0},
                    {"clamp_reference_n", 1000},
                    {"ensemble_k", 5},
                    {"ensemble_sigma", 0.3},
                    {"ensemble_agree_min", 1.0},
                    {"retrain_fraction", 0.3},
                    {"retrain_rows", 1000},
                    {"retrain_epochs", 80},
                    {"retrain_lr", 0.03}};
    j["calibration"] = {{"spreads", {1.6, 1.75, 1.9, 2.05, 2.2}},
                        {"theta_d_lo", 0.6},
                        {"theta_d_hi", 0.99},
                        {"theta_d_step", 0.0025},
                        {"theta_s", {0.15, 0.2, 0.25, 0.3, 0.35, 0.39}},
                        {"alphas", {0.55, 0.6, 0.65, 0.7}},
                        {"targets",
                         {{"layer1_deceptive", 15.2},
                          {"layer2_deceptive", 23.9},
                          {"layer3_deceptive", 10.1},
                          {"baseline_safe", 72.8},
                          {"baseline_evil", 3.3},
                          {"alpha08_deceptive", 28.0}}}};
    return j;
}

namespace {

// Overlay `user` onto `base`, rejecting keys the defaults do not know and
// values whose JSON type disagrees.
void merge_into(json& base, const json& user, const std::string& path) {
    if (!user.is_object())
        throw config_error("config: expected object at " + (path.empty() ? "root" : path));
    for (auto it = user.begin(); it != user.end(); ++it) {
        std::string sub = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key()))
            throw config_error("config: unknown field '" + sub + "'");
        json& slot = base[it.key()];
        if (slot.is_object()) {
            merge_into(slot, it.value(), sub);
        } else {
            bool ok = (slot.is_number() && it.value().is_number()) ||
                      (slot.is_string() && it.value().is_string()) ||
                      (slot.is_array() && it.value().is_array()) ||
                      (slot.is_boolean() && it.value().is_boolean());
            if (!ok)
                throw config_error("config: wrong type for field '" + sub + "'");
            slot = it.value();
        }
    }
}

double require_range(const json& j, const char* field, double lo, double hi) {
    double v = j.get<double>();
    if (!(v >= lo && v <= hi))
        throw config_error(std::string("config: '") + field + "' outside [" +
                           std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
}

std::size_t require_count(const json& j, const char* field, std::size_t lo) {
    if (!j.is_number_integer() && !j.is_number_unsigned())
        throw config_error(std::string("config: '") + field + "' must be an integer");
    long long v = j.get<long long>();
    if (v < static_cast<long long>(lo))
        throw config_error(std::string("config: '") + field + "' must be >= " +
                           std::to_string(lo));
    return static_cast<std::size_t>(v);
}

}  // namespace

std::string hash_canonical(const json& canonical) {
    std::string dump = canonical.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = hex[h & 0xf];
        h >>= 4;
    }
    return out;
}

RunConfig parse_config(const json& user) {
    json doc = default_config_json();
    merge_into(doc, user, "");

    RunConfig cfg;
    const json& net = doc["network"];
    cfg.network.n_layers = require_count(net["n_layers"], "network.n_layers", 2);
    cfg.network.input_dim = require_count(net["input_dim"], "network.input_dim", 1);
    cfg.network.hidden_dim = require_count(net["hidden_dim"], "network.hidden_dim", 1);
    cfg.network.output_dim = require_count(net["output_dim"], "network.output_dim", 1);

    const json& sc = doc["scenario"];
    ScenarioParams& p = cfg.scenario;
    p.base_scale = sc["base_scale"].get<double>();
    p.cue_distance = sc["cue_distance"].get<double>();
    p.evil_distance = sc["evil_distance"].get<double>();
    p.spread_clean = require_range(sc["spread_clean"], "scenario.spread_clean", 0.0, 1e6);
    p.spread_dec = require_range(sc["spread_dec"], "scenario.spread_dec", 0.0, 1e6);
    p.cos_safe_mis = require_range(sc["cos_safe_mis"], "scenario.cos_safe_mis", 0.4, 0.7);
    p.cos_safe_evil = require_range(sc["cos_safe_evil"], "scenario.cos_safe_evil", -1.0, 0.1);
    p.cos_evil_mis = require_range(sc["cos_evil_mis"], "scenario.cos_evil_mis", -1.0, 0.3);
    p.cue_onset = sc["cue_onset"].get<double>();
    p.sat_scale = require_range(sc["sat_scale"], "scenario.sat_scale", 1e-9, 1e6);
    p.sat_max = require_range(sc["sat_max"], "scenario.sat_max", 0.0, 1.0);
    p.arc_floor = require_range(sc["arc_floor"], "scenario.arc_floor", 0.0, 1.0);
    p.arc_cap = require_range(sc["arc_cap"], "scenario.arc_cap", 0.0, 1.0);
    p.style_gain = sc["style_gain"].get<double>();
    p.ramp_knee = require_range(sc["ramp_knee"], "scenario.ramp_knee", 1e-9, 1e6);
    p.ramp_max = require_range(sc["ramp_max"], "scenario.ramp_max", 0.0, 1.0);
    p.n_train = require_count(sc["n_train"], "scenario.n_train", 10);
    p.dec_share = require_range(sc["dec_share"], "scenario.dec_share", 0.0, 1.0);
    p.neg_share = require_range(sc["neg_share"], "scenario.neg_share", 0.0, 1.0);
    p.evil_share = require_range(sc["evil_share"], "scenario.evil_share", 0.0, 1.0);
    p.neg_mean = sc["neg_mean"].get<double>();
    p.neg_sd = require_range(sc["neg_sd"], "scenario.neg_sd", 0.0, 1e6);
    p.evil_scale = sc["evil_scale"].get<double>();
    p.evil_sd = require_range(sc["evil_sd"], "scenario.evil_sd", 0.0, 1e6);
    p.evil_cut = sc["evil_cut"].get<double>();
    p.epochs_a = require_count(sc["epochs_a"], "scenario.epochs_a", 1);
    p.epochs_b = require_count(sc["epochs_b"], "scenario.epochs_b", 0);
    p.lr = require_range(sc["lr"], "scenario.lr", 1e-12, 1e6);
    cfg.thresholds.theta_d = require_range(sc["theta_d"], "scenario.theta_d", 0.0, 1.0);
    cfg.thresholds.theta_s = require_range(sc["theta_s"], "scenario.theta_s", 0.0, 1.0);

    const json& pa = doc["patch"];
    cfg.patch.layer = require_count(pa["layer"], "patch.layer", 1);
    if (cfg.patch.layer > cfg.network.n_layers)
        throw config_error("config: 'patch.layer' exceeds the last patchable layer");
    cfg.patch.alpha = require_range(pa["alpha"], "patch.alpha", 0.0, 1.0);
    cfg.patch.sigma = require_range(pa["sigma"], "patch.sigma", 0.0, 1e6);

    const json& tr = doc["trial"];
    cfg.n_trials = require_count(tr["n_trials"], "trial.n_trials", 1);
    cfg.patch_prob = require_range(tr["patch_prob"], "trial.patch_prob", 0.0, 1.0);
    cfg.master_seed = tr["master_seed"].get<std::uint64_t>();

    const json& sw = doc["sweeps"];
    cfg.sweep_layers.clear();
    for (const json& v : sw["layers"]) {
        std::size_t l = require_count(v, "sweeps.layers", 1);
        if (l > cfg.network.n_layers)
            throw config_error("config: 'sweeps.layers' exceeds the last patchable layer");
        cfg.sweep_layers.push_back(l);
    }
    cfg.sweep_alphas.clear();
    for (const json& v : sw["alphas"])
        cfg.sweep_alphas.push_back(require_range(v, "sweeps.alphas", 0.0, 1.0));
    cfg.sweep_chain_lengths.clear();
    for (const json& v : sw["chain_lengths"])
        cfg.sweep_chain_lengths.push_back(require_count(v, "sweeps.chain_lengths", 1));

    const json& df = doc["defense"];
    std::string kind = df["kind"].get<std::string>();
    if (kind == "retrain") cfg.defense.kind = DefenseKind::Retrain;
    else if (kind == "probe-gate") cfg.defense.kind = DefenseKind::ProbeGate;
    else if (kind == "clamp") cfg.defense.kind = DefenseKind::Clamp;
    else if (kind == "ensemble") cfg.defense.kind = DefenseKind::Ensemble;
    else throw config_error("config: 'defense.kind' must be one of retrain, probe-gate, clamp, ensemble");
    cfg.defense.probe_n = require_count(df["probe_n"], "defense.probe_n", 10);
    cfg.defense.probe_fraction =
        require_range(df["probe_fraction"], "defense.probe_fraction", 1e-9, 1.0 - 1e-9);
    cfg.defense.probe_epochs = require_count(df["probe_epochs"], "defense.probe_epochs", 1);
    cfg.defense.probe_lr = require_range(df["probe_lr"], "defense.probe_lr", 1e-12, 1e6);
    cfg.defense.clamp_tau = require_range(df["clamp_tau"], "defense.clamp_tau", 0.0, 1e12);
    cfg.defense.clamp_reference_n =
        require_count(df["clamp_reference_n"], "defense.clamp_reference_n", 2);
    cfg.defense.ensemble_k = require_count(df["ensemble_k"], "defense.ensemble_k", 2);
    cfg.defense.ensemble_sigma =
        require_range(df["ensemble_sigma"], "defense.ensemble_sigma", 0.0, 1e6);
    cfg.defense.ensemble_agree_min =
        require_range(df["ensemble_agree_min"], "defense.ensemble_agree_min", 0.0, 1.0);
    cfg.defense.retrain_fraction =
        require_range(df["retrain_fraction"], "defense.retrain_fraction", 1e-9, 1.0 - 1e-9);
    cfg.defense.retrain_rows = require_count(df["retrain_rows"], "defense.retrain_rows", 10);
    cfg.defense.retrain_epochs = require_count(df["retrain_epochs"], "defense.retrain_epochs", 1);
    cfg.defense.retrain_lr = require_range(df["retrain_lr"], "defense.retrain_lr", 1e-12, 1e6);

    const json& cal = doc["calibration"];
    cfg.calibration_bounds.spreads.clear();
    for (const json& v : cal["spreads"])
        cfg.calibration_bounds.spreads.push_back(
            require_range(v, "calibration.spreads", 0.0, 1e6));
    cfg.calibration_bounds.theta_d_lo =
        require_range(cal["theta_d_lo"], "calibration.theta_d_lo", 0.0, 1.0);
    cfg.calibration_bounds.theta_d_hi =
        require_range(cal["theta_d_hi"], "calibration.theta_d_hi", 0.0, 1.0);
    cfg.calibration_bounds.theta_d_step =
        require_range(cal["theta_d_step"], "calibration.theta_d_step", 1e-9, 1.0);
    cfg.calibration_bounds.theta_s.clear();
    for (const json& v : cal["theta_s"])
        cfg.calibration_bounds.theta_s.push_back(
            require_range(v, "calibration.theta_s", 0.0, 1.0));
    cfg.calibration_bounds.alphas.clear();
    for (const json& v : cal["alphas"])
        cfg.calibration_bounds.alphas.push_back(
            require_range(v, "calibration.alphas", 0.0, 1.0));
    const json& tg = cal["targets"];
    cfg.calibration_targets.layer1_deceptive = tg["layer1_deceptive"].get<double>();
    cfg.calibration_targets.layer2_deceptive = tg["layer2_deceptive"].get<double>();
    cfg.calibration_targets.layer3_deceptive = tg["layer3_deceptive"].get<double>();
    cfg.calibration_targets.baseline_safe = tg["baseline_safe"].get<double>();
    cfg.calibration_targets.baseline_evil = tg["baseline_evil"].get<double>();
    cfg.calibration_targets.alpha08_deceptive = tg["alpha08_deceptive"].get<double>();

    double shares = p.dec_share + p.neg_share + p.evil_share;
    if (shares >= 1.0)
        throw config_error("config: scenario shares must leave room for clean rows");

    cfg.canonical = doc;
    cfg.config_hash = hash_canonical(doc);
    return cfg;
}

RunConfig parse_config_text(const std::string& text) {
    json user;
    try {
        user = json::parse(text);
    } catch (const json::parse_error& e) {
        throw config_error(std::string("config: ") + e.what());
    }
    return parse_config(user);
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void override_seed(RunConfig& cfg, std::uint64_t seed) {
    cfg.master_seed = seed;
    cfg.canonical["trial"]["master_seed"] = seed;
    cfg.config_hash = hash_canonical(cfg.canonical);
}

void apply_calibration(RunConfig& cfg, double spread_dec, double theta_d, double theta_s,
                       double alpha) {
    cfg.scenario.spread_dec = spread_dec;
    cfg.thresholds.theta_d = theta_d;
    cfg.thresholds.theta_s = theta_s;
    cfg.patch.alpha = alpha;
}

World build_world(const RunConfig& cfg) {
    RandomStream master(cfg.master_seed);
    RandomStream geom_stream = master.substream(kLaneGeometry);
    BehaviorPrototypes protos =
        make_prototypes(cfg.network.output_dim, geom_stream, cfg.scenario.cos_safe_mis,
                        cfg.scenario.cos_safe_evil, cfg.scenario.cos_evil_mis);
    ScenarioGeometry geom = make_geometry(cfg.network.input_dim, cfg.scenario, geom_stream);
    RandomStream init_stream = master.substream(kLaneInit);
    RandomStream data_stream = master.substream(kLaneTrainData);
    Network net = train_scenario_network(cfg.network, cfg.scenario, geom, protos,
                                         init_stream, data_stream);
    World w;
    w.scenario = Scenario{cfg.scenario, std::move(protos), std::move(geom), cfg.thresholds};
    w.net = std::move(net);
    return w;
}

CalibrationProblem calibration_problem(const RunConfig& cfg) {
    CalibrationProblem prob;
    prob.net_config = cfg.network;
    prob.params = cfg.scenario;
    prob.master_seed = cfg.master_seed;
    prob.n_trials = cfg.n_trials;
    prob.patch_prob = cfg.patch_prob;
    prob.baseline_layer = cfg.patch.layer;
    prob.bounds = cfg.calibration_bounds;
    prob.targets = cfg.calibration_targets;
    return prob;
}

}  // namespace patchlab
