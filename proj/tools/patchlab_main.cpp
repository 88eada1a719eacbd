// patchlab command line: calibrate the scenario operating point, run
// experiments, merge reports.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad config/arguments,
// 3 calibration did not conform to targets, 4 missing calibration manifest,
// 5 merge refused on config-hash mismatch.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "patchlab/config.hpp"
#include "patchlab/defenses.hpp"
#include "patchlab/error.hpp"
#include "patchlab/experiments.hpp"
#include "patchlab/network.hpp"
#include "patchlab/report_io.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/scenario.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace patchlab;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNonConforming = 3;
constexpr int kExitNoManifest = 4;
constexpr int kExitMergeRefused = 5;

struct CliOptions {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;
    bool uncalibrated = false;
    bool force = false;
};

RunConfig load_run_config(const CliOptions& opt) {
    RunConfig cfg = opt.config_path.empty() ? parse_config(default_config_json())
                                            : load_config_file(opt.config_path);
    if (opt.seed) override_seed(cfg, *opt.seed);
    return cfg;
}

fs::path manifest_path(const CliOptions& opt, const RunConfig& cfg) {
    return fs::path(opt.out_dir) / ("calibration-" + cfg.config_hash + ".json");
}

// Loads the manifest produced by `calibrate` and applies the chosen
// operating point to the effective config. Returns the manifest document.
json apply_manifest(const CliOptions& opt, RunConfig& cfg) {
    fs::path path = manifest_path(opt, cfg);
    if (!fs::exists(path))
        throw missing_manifest_error("missing calibration manifest " + path.string() +
                                     " (run `patchlab calibrate` first or pass --uncalibrated)");
    json manifest;
    try {
        manifest = json::parse(read_file(path.string()));
        const auto& chosen = manifest.at("chosen");
        apply_calibration(cfg, chosen.at("spread_dec").get<double>(),
                          chosen.at("theta_d").get<double>(),
                          chosen.at("theta_s").get<double>(), chosen.at("alpha").get<double>());
    } catch (const json::exception& e) {
        throw io_error("malformed calibration manifest " + path.string() + ": " + e.what());
    }
    return manifest;
}

json base_report(const RunConfig& cfg, const std::string& subcommand, bool calibrated,
                 const json& manifest) {
    json j;
    j["config_hash"] = cfg.config_hash;
    j["master_seed"] = cfg.master_seed;
    j["subcommand"] = subcommand;
    j["calibration"]["applied"] = calibrated;
    if (calibrated) {
        j["calibration"]["conforming"] = manifest.value("conforming", false);
        j["calibration"]["chosen"] = manifest.at("chosen");
    }
    return j;
}

void write_outputs(const CliOptions& opt, const RunConfig& cfg, const std::string& subcommand,
                   const json& report, const std::vector<ReportPoint>& points) {
    fs::create_directories(opt.out_dir);
    fs::path base = fs::path(opt.out_dir) / (subcommand + "-" + cfg.config_hash);
    write_file_atomic(base.string() + ".json", report.dump(2) + "\n");
    write_file_atomic(base.string() + ".csv",
                      points_to_csv(points, cfg.config_hash, cfg.master_seed));
}

ReportPoint make_point(std::size_t layer, double alpha, std::size_t k, const RateReport& r) {
    ReportPoint p;
    p.layer = layer;
    p.alpha = alpha;
    p.k = k;
    p.report = r;
    p.report.config_hash.clear();  // the document header carries it
    return p;
}

TrialConfig make_trial_config(const RunConfig& cfg, const World& world, std::size_t workers) {
    TrialConfig trial;
    trial.n_trials = cfg.n_trials;
    trial.patch_prob = cfg.patch_prob;
    trial.spec = cfg.patch;
    trial.master_seed = cfg.master_seed;
    // The standalone runs share the layer sweep's substreams for the
    // configured layer, so the baseline row and the sweep row agree.
    trial.stream_salt = cfg.patch.layer;
    trial.workers = workers;
    trial.net = &world.net;
    trial.scenario = &world.scenario;
    return trial;
}

int run_calibrate(const CliOptions& opt) {
    RunConfig cfg = load_run_config(opt);
    CalibrationOutcome result = calibrate(calibration_problem(cfg));
    json manifest;
    manifest["config_hash"] = cfg.config_hash;
    manifest["master_seed"] = cfg.master_seed;
    manifest["conforming"] = result.conforming;
    manifest["max_abs_deviation_pp"] = result.max_deviation;
    manifest["chosen"] = {{"spread_dec", result.spread_dec},
                          {"theta_d", result.theta_d},
                          {"theta_s", result.theta_s},
                          {"alpha", result.alpha}};
    manifest["achieved"] = {{"layer1_deceptive", result.layer1_deceptive},
                            {"layer2_deceptive", result.layer2_deceptive},
                            {"layer3_deceptive", result.layer3_deceptive},
                            {"baseline_safe", result.baseline_safe},
                            {"baseline_evil", result.baseline_evil},
                            {"alpha08_deceptive", result.alpha08_deceptive}};
    const CalibrationTargets& tg = cfg.calibration_targets;
    manifest["targets"] = {{"layer1_deceptive", tg.layer1_deceptive},
                           {"layer2_deceptive", tg.layer2_deceptive},
                           {"layer3_deceptive", tg.layer3_deceptive},
                           {"baseline_safe", tg.baseline_safe},
                           {"baseline_evil", tg.baseline_evil}};
    manifest["deviations"] = {
        {"layer1_deceptive", result.layer1_deceptive - tg.layer1_deceptive},
        {"layer2_deceptive", result.layer2_deceptive - tg.layer2_deceptive},
        {"layer3_deceptive", result.layer3_deceptive - tg.layer3_deceptive},
        {"baseline_safe", result.baseline_safe - tg.baseline_safe},
        {"baseline_evil", result.baseline_evil - tg.baseline_evil}};
    manifest["notes"] = {{"patch_coin", "per-trial"}, {"noise_sigma_headline", 0.0}};
    fs::create_directories(opt.out_dir);
    write_file_atomic(manifest_path(opt, cfg).string(), manifest.dump(2) + "\n");
    std::cout << "calibration " << (result.conforming ? "conforming" : "NOT conforming")
              << ", max |deviation| " << result.max_deviation << "pp\n"
              << "  spread_dec=" << result.spread_dec << " theta_d=" << result.theta_d
              << " theta_s=" << result.theta_s << " alpha=" << result.alpha << "\n"
              << "  manifest: " << manifest_path(opt, cfg).string() << "\n";
    return result.conforming ? kExitOk : kExitNonConforming;
}

int run_experiment(const CliOptions& opt, const std::string& sub) {
    RunConfig cfg = load_run_config(opt);
    json manifest;
    bool calibrated = false;
    if (!opt.uncalibrated) {
        manifest = apply_manifest(opt, cfg);
        calibrated = true;
    }
    World world = build_world(cfg);
    fs::create_directories(opt.out_dir);
    write_file_atomic(
        (fs::path(opt.out_dir) / ("network-" + cfg.config_hash + ".json")).string(),
        network_to_json(world.net).dump() + "\n");

    TrialConfig trial = make_trial_config(cfg, world, opt.workers);
    json report = base_report(cfg, sub, calibrated, manifest);
    std::vector<ReportPoint> points;
    std::string key_header = "Layer";

    if (sub == "baseline") {
        RateReport r = run_trials(trial);
        points.push_back(make_point(cfg.patch.layer, cfg.patch.alpha, 1, r));
    } else if (sub == "sweep-layer") {
        for (const auto& [layer, r] : layer_sweep(trial, cfg.sweep_layers))
            points.push_back(make_point(layer, cfg.patch.alpha, 1, r));
    } else if (sub == "sweep-alpha") {
        key_header = "Alpha";
        for (const auto& [alpha, r] : alpha_sweep(trial, cfg.sweep_alphas))
            points.push_back(make_point(cfg.patch.layer, alpha, 1, r));
    } else if (sub == "sweep-chain") {
        key_header = "Chain";
        for (const auto& [k, r] : chain_sweep(trial, cfg.sweep_chain_lengths))
            points.push_back(make_point(cfg.patch.layer, cfg.patch.alpha, k, r));
    } else if (sub == "mitigate") {
        MitigationResult m = mitigation_eval(trial, cfg.defense);
        points.push_back(make_point(cfg.patch.layer, cfg.patch.alpha, 1, m.after));
        report["mitigation"] = {
            {"defense", defense_kind_name(cfg.defense.kind)},
            {"applicable", m.applicable},
            {"reduction", m.reduction},
            {"before", point_to_json(make_point(cfg.patch.layer, cfg.patch.alpha, 1, m.before))},
            {"after", point_to_json(make_point(cfg.patch.layer, cfg.patch.alpha, 1, m.after))}};
        std::cout << "defense " << defense_kind_name(cfg.defense.kind) << ": deceptive "
                  << 100.0 * m.before.deceptive() << "% -> " << 100.0 * m.after.deceptive()
                  << "%  (reduction " << 100.0 * m.reduction << "%"
                  << (m.applicable ? "" : ", not applicable") << ")\n";
    } else if (sub == "probe") {
        RandomStream lane = RandomStream(cfg.master_seed).substream(kLaneDefense);
        ProbeDataset ds = build_probe_dataset(world.net, world.scenario, cfg.patch,
                                              cfg.defense.probe_n, cfg.defense.probe_fraction,
                                              lane);
        LinearProbe probe = train_probe(ds, cfg.defense.probe_epochs, cfg.defense.probe_lr);
        report["probe"] = {{"heldout_accuracy", probe.heldout_accuracy},
                           {"layer", probe.probed_layer},
                           {"alpha", cfg.patch.alpha}};
        // weights artifact; "probe-<hash>.json" is taken by the report
        write_file_atomic(
            (fs::path(opt.out_dir) / ("probe-weights-" + cfg.config_hash + ".json")).string(),
            probe_to_json(probe, cfg.config_hash).dump(2) + "\n");
        std::cout << "probe heldout accuracy " << 100.0 * probe.heldout_accuracy
                  << "% at layer " << probe.probed_layer << " alpha " << cfg.patch.alpha << "\n";
    } else {
        throw config_error("unknown run subcommand: " + sub);
    }

    json arr = json::array();
    for (const auto& p : points) arr.push_back(point_to_json(p));
    report["points"] = std::move(arr);
    write_outputs(opt, cfg, sub, report, points);
    if (!points.empty()) std::cout << format_rate_table(points, key_header);
    return kExitOk;
}

int run_report(const CliOptions& opt) {
    // Gathers every per-subcommand report for the config in the out dir and
    // merges them into summary-<hash>.{json,csv}.
    RunConfig cfg = load_run_config(opt);
    std::vector<json> docs;
    const std::vector<std::string> subs = {"baseline", "sweep-layer", "sweep-alpha",
                                           "sweep-chain", "mitigate", "probe"};
    for (const auto& sub : subs) {
        fs::path p = fs::path(opt.out_dir) / (sub + "-" + cfg.config_hash + ".json");
        if (!fs::exists(p)) continue;
        try {
            docs.push_back(json::parse(read_file(p.string())));
        } catch (const json::exception& e) {
            throw io_error("malformed report " + p.string() + ": " + e.what());
        }
    }
    if (docs.empty())
        throw io_error("no reports found for config " + cfg.config_hash + " in " + opt.out_dir);
    MergeResult merged = merge_reports(docs, opt.force);
    fs::path base = fs::path(opt.out_dir) / ("summary-" + cfg.config_hash);
    write_file_atomic(base.string() + ".json", merged.summary.dump(2) + "\n");
    write_file_atomic(base.string() + ".csv", merged.csv);
    std::cout << "merged " << docs.size() << " report(s) -> " << base.string() << ".json\n";
    return kExitOk;
}

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Config:
            return kExitConfig;
        case ErrorKind::MissingManifest:
            return kExitNoManifest;
        case ErrorKind::MergeConflict:
            return kExitMergeRefused;
        default:
            return kExitRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patchlab: activation-patching experiments on toy layered networks"};
    app.require_subcommand(1);

    CliOptions opt;
    app.add_option("--config", opt.config_path, "JSON config file (defaults used when absent)");
    app.add_option("--out", opt.out_dir, "output directory")->capture_default_str();
    std::uint64_t seed_arg = 0;
    auto* seed_opt = app.add_option("--seed", seed_arg, "override the master seed");
    app.add_option("--workers", opt.workers, "worker threads")->capture_default_str();
    app.add_flag("--uncalibrated", opt.uncalibrated,
                 "run with config values, ignore calibration manifest");
    app.add_flag("--force", opt.force, "merge reports despite config-hash mismatch");

    auto* cal = app.add_subcommand("calibrate", "grid-search the scenario operating point");
    auto* run = app.add_subcommand("run", "run one experiment");
    std::string run_what;
    run->add_option("experiment", run_what,
                    "baseline|sweep-layer|sweep-alpha|sweep-chain|mitigate|probe")
        ->required();
    auto* rep = app.add_subcommand("report", "merge per-experiment reports into a summary");
    // Global options may appear after the subcommand name.
    cal->fallthrough();
    run->fallthrough();
    rep->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    if (seed_opt->count() > 0) opt.seed = seed_arg;

    try {
        if (cal->parsed()) return run_calibrate(opt);
        if (run->parsed()) return run_experiment(opt, run_what);
        if (rep->parsed()) return run_report(opt);
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
