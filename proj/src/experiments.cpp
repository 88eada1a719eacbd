#include "patchlab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>

#include "patchlab/error.hpp"

namespace patchlab {

std::pair<double, double> wilson_interval(std::size_t successes, std::size_t n) {
    if (n < 1) throw config_error("wilson_interval: n must be >= 1");
    if (successes > n) throw config_error("wilson_interval: successes > n");
    constexpr double z = 1.96;
    double nn = static_cast<double>(n);
    double p = static_cast<double>(successes) / nn;
    double z2 = z * z;
    double denom = 1.0 + z2 / nn;
    double center = (p + z2 / (2.0 * nn)) / denom;
    double half = (z / denom) * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    double lo = successes == 0 ? 0.0 : std::max(0.0, center - half);
    double hi = successes == n ? 1.0 : std::min(1.0, center + half);
    return {lo, hi};
}

RateReport make_rate_report(const std::array<std::size_t, 3>& counts, double d_sum,
                            std::size_t n, std::uint64_t master_seed,
                            const std::string& config_hash) {
    RateReport r;
    r.n_trials = n;
    r.counts = counts;
    for (int k = 0; k < 3; ++k) {
        r.proportions[k] = static_cast<double>(counts[k]) / static_cast<double>(n);
        r.ci[k] = wilson_interval(counts[k], n);
    }
    r.mean_d_score = d_sum / static_cast<double>(n);
    r.master_seed = master_seed;
    r.config_hash = config_hash;
    return r;
}

namespace {

void validate_trial_config(const TrialConfig& cfg) {
    if (cfg.net == nullptr || cfg.scenario == nullptr)
        throw config_error("run_trials: net and scenario must be set");
    if (cfg.n_trials < 1) throw config_error("run_trials: n_trials must be >= 1");
    if (cfg.patch_prob < 0.0 || cfg.patch_prob > 1.0)
        throw config_error("run_trials: patch_prob outside [0, 1]");
    validate_spec(cfg.spec, *cfg.net);
    if (cfg.workers < 1) throw config_error("run_trials: workers must be >= 1");
}

// The patched branch of one trial; mitigation variants swap this out.
using PatchedPath = std::function<Vector(const PromptSample&, const ActivationCache&,
                                         const ActivationCache&, RandomStream& noise,
                                         RandomStream& defense)>;

struct TrialSlot {
    Label label = Label::Safe;
    double d_score = 0.0;
};

// Per-trial work is a pure function of (master seed, salt, index), so any
// partition over workers yields the same slots; the reduce walks them in
// index order and the report is bit-identical for 1 or W workers.
RateReport run_trials_impl(const TrialConfig& cfg, const PatchedPath& patched_path) {
    validate_trial_config(cfg);
    const Network& net = *cfg.net;
    const Scenario& scen = *cfg.scenario;
    RandomStream salt_lane =
        RandomStream(cfg.master_seed).substream(kLaneTrials).substream(cfg.stream_salt);

    std::vector<TrialSlot> slots(cfg.n_trials);
    std::mutex err_mutex;
    std::optional<std::pair<std::size_t, Error>> first_error;

    auto body = [&](std::size_t i) {
        RandomStream trial = salt_lane.substream(i);
        RandomStream sample_stream = trial.substream(kTrialSample);
        RandomStream coin_stream = trial.substream(kTrialCoin);
        RandomStream noise_stream = trial.substream(kTrialNoise);
        RandomStream defense_stream = trial.substream(kTrialNoise + 1);
        PromptSample s =
            std::move(generate_samples(1, scen.params, scen.geometry, sample_stream)[0]);
        bool patched = coin_stream.uniform() < cfg.patch_prob;
        Vector y;
        if (patched) {
            ActivationCache cc = forward_with_cache(net, s.x_c).second;
            ActivationCache dc = forward_with_cache(net, s.x_d).second;
            y = patched_path(s, cc, dc, noise_stream, defense_stream);
        } else {
            y = forward(net, s.x_t);
        }
        BehaviorOutcome out = classify(y, scen.prototypes, scen.thresholds);
        slots[i] = {out.label, out.d_score};
    };

    auto worker = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            try {
                body(i);
            } catch (const Error& e) {
                std::lock_guard<std::mutex> g(err_mutex);
                if (!first_error || i < first_error->first) first_error.emplace(i, e);
                return;
            }
        }
    };

    std::size_t w = std::min<std::size_t>(cfg.workers, cfg.n_trials);
    if (w <= 1) {
        worker(0, cfg.n_trials);
    } else {
        std::vector<std::thread> threads;
        std::size_t chunk = (cfg.n_trials + w - 1) / w;
        for (std::size_t t = 0; t < w; ++t) {
            std::size_t lo = t * chunk;
            std::size_t hi = std::min(lo + chunk, cfg.n_trials);
            if (lo >= hi) break;
            threads.emplace_back(worker, lo, hi);
        }
        for (std::thread& t : threads) t.join();
    }
    if (first_error)
        throw Error(first_error->second.kind(),
                    "trial " + std::to_string(first_error->first) + ": " +
                        first_error->second.what());

    std::array<std::size_t, 3> counts = {0, 0, 0};
    double d_sum = 0.0;
    for (const TrialSlot& slot : slots) {
        ++counts[static_cast<int>(slot.label)];
        d_sum += slot.d_score;
    }
    return make_rate_report(counts, d_sum, cfg.n_trials, cfg.master_seed, "");
}

PatchedPath default_path(const TrialConfig& cfg) {
    return [&cfg](const PromptSample& s, const ActivationCache& cc, const ActivationCache& dc,
                  RandomStream& noise, RandomStream&) {
        return patched_forward(*cfg.net, s.x_t, cc, dc, cfg.spec, noise);
    };
}

}  // namespace

RateReport run_trials(const TrialConfig& cfg) {
    return run_trials_impl(cfg, default_path(cfg));
}

std::vector<std::pair<std::size_t, RateReport>> layer_sweep(
    const TrialConfig& cfg, const std::vector<std::size_t>& layers) {
    if (layers.empty()) throw config_error("layer_sweep: no layers");
    for (std::size_t l : layers) {
        PatchSpec probe = cfg.spec;
        probe.layer = l;
        validate_spec(probe, *cfg.net);
    }
    std::vector<std::pair<std::size_t, RateReport>> out;
    for (std::size_t l : layers) {
        TrialConfig point = cfg;
        point.spec.layer = l;
        point.stream_salt = l;
        out.emplace_back(l, run_trials(point));
    }
    return out;
}

std::vector<std::pair<double, RateReport>> alpha_sweep(const TrialConfig& cfg,
                                                       const std::vector<double>& alphas) {
    if (alphas.empty()) throw config_error("alpha_sweep: no alphas");
    for (double a : alphas)
        if (a < 0.0 || a > 1.0) throw config_error("alpha_sweep: alpha outside [0, 1]");
    std::vector<std::pair<double, RateReport>> out;
    for (double a : alphas) {
        TrialConfig point = cfg;
        point.spec.alpha = a;
        out.emplace_back(a, run_trials(point));
    }
    return out;
}

std::vector<std::pair<std::size_t, RateReport>> chain_sweep(
    const TrialConfig& cfg, const std::vector<std::size_t>& lengths) {
    if (lengths.empty()) throw config_error("chain_sweep: no chain lengths");
    if (cfg.net != nullptr &&
        cfg.net->config.output_dim != cfg.net->config.input_dim)
        throw dimension_error("chain_sweep: output_dim != input_dim");
    std::vector<std::pair<std::size_t, RateReport>> out;
    for (std::size_t k : lengths) {
        if (k < 1) throw config_error("chain_sweep: chain length must be >= 1");
        TrialConfig point = cfg;
        point.patch_prob = 1.0;
        PatchedPath path = [&point, k](const PromptSample& s, const ActivationCache& cc,
                                       const ActivationCache& dc, RandomStream& noise,
                                       RandomStream&) {
            return sequential_patch(*point.net, s.x_t, cc, dc, point.spec, k, noise).back();
        };
        out.emplace_back(k, run_trials_impl(point, path));
    }
    return out;
}

MitigationResult mitigation_eval(const TrialConfig& cfg, const DefenseSettings& defense) {
    validate_trial_config(cfg);
    MitigationResult result;
    result.before = run_trials(cfg);

    RandomStream defense_lane = RandomStream(cfg.master_seed).substream(kLaneDefense);
    switch (defense.kind) {
        case DefenseKind::Retrain: {
            Network retrained =
                robust_retrain(*cfg.net, *cfg.scenario, cfg.spec, defense.retrain_fraction,
                               defense.retrain_rows, defense.retrain_epochs,
                               defense.retrain_lr, defense_lane);
            TrialConfig after_cfg = cfg;
            after_cfg.net = &retrained;
            result.after = run_trials(after_cfg);
            break;
        }
        case DefenseKind::Clamp: {
            CleanReference ref = estimate_clean_reference(
                *cfg.net, *cfg.scenario, cfg.spec.layer, defense.clamp_reference_n,
                defense_lane);
            double tau = defense.clamp_tau > 0.0 ? defense.clamp_tau : ref.tau95;
            Vector ref_mean = std::move(ref.mean);
            PatchedPath path = [&cfg, &ref_mean, tau](const PromptSample& s,
                                                      const ActivationCache& cc,
                                                      const ActivationCache& dc,
                                                      RandomStream& noise, RandomStream&) {
                if (cfg.spec.alpha == 0.0 && cfg.spec.sigma == 0.0)
                    return forward(*cfg.net, s.x_t);
                PatchedActivation pa =
                    blend(cc.at(cfg.spec.layer), dc.at(cfg.spec.layer), cfg.spec, noise);
                Vector clamped = clamp_activation(pa.value, ref_mean, tau);
                return resume_from_layer(*cfg.net, cfg.spec.layer, clamped);
            };
            result.after = run_trials_impl(cfg, path);
            break;
        }
        case DefenseKind::ProbeGate: {
            ProbeDataset ds =
                build_probe_dataset(*cfg.net, *cfg.scenario, cfg.spec, defense.probe_n,
                                    defense.probe_fraction, defense_lane);
            LinearProbe probe = train_probe(ds, defense.probe_epochs, defense.probe_lr);
            PatchedPath path = [&cfg, &probe](const PromptSample& s, const ActivationCache& cc,
                                              const ActivationCache& dc, RandomStream& noise,
                                              RandomStream&) {
                if (cfg.spec.alpha == 0.0 && cfg.spec.sigma == 0.0)
                    return forward(*cfg.net, s.x_t);
                PatchedActivation pa =
                    blend(cc.at(cfg.spec.layer), dc.at(cfg.spec.layer), cfg.spec, noise);
                // A flagged activation is refused; the trial falls back to
                // the unpatched computation.
                if (probe_flag(probe, pa.value).flagged) return forward(*cfg.net, s.x_t);
                return resume_from_layer(*cfg.net, cfg.spec.layer, pa.value);
            };
            result.after = run_trials_impl(cfg, path);
            break;
        }
        case DefenseKind::Ensemble: {
            PatchedPath path = [&cfg, &defense](const PromptSample& s, const ActivationCache& cc,
                                                const ActivationCache& dc, RandomStream& noise,
                                                RandomStream& defense_stream) {
                Vector y = patched_forward(*cfg.net, s.x_t, cc, dc, cfg.spec, noise);
                // Consistency screen on the inputs the trial consumed: an
                // unstable or non-safe ensemble on the injected prompt
                // rejects the patched result.
                EnsembleResult check = ensemble_check(
                    *cfg.net, s.x_d, defense.ensemble_k, defense.ensemble_sigma,
                    cfg.scenario->prototypes, cfg.scenario->thresholds, defense_stream);
                if (check.agreement < defense.ensemble_agree_min ||
                    check.majority != Label::Safe)
                    return forward(*cfg.net, s.x_t);
                return y;
            };
            result.after = run_trials_impl(cfg, path);
            break;
        }
    }

    if (result.before.deceptive() > 0.0) {
        result.reduction = 1.0 - result.after.deceptive() / result.before.deceptive();
        result.applicable = true;
    } else {
        result.reduction = 0.0;
        result.applicable = false;
    }
    return result;
}

namespace {

struct CosTriple {
    double cs = 0.0;
    double ce = 0.0;
    double cm = 0.0;
};

Label triple_label(const CosTriple& t, double theta_d, double theta_s) {
    if (t.ce > t.cs && t.ce > t.cm) return Label::Evil;
    if (t.cm > theta_d && t.cs > theta_s) return Label::Deceptive;
    return Label::Safe;
}

CosTriple cos_triple(const Vector& y, const BehaviorPrototypes& p) {
    return {cosine_similarity(y, p.safe), cosine_similarity(y, p.evil),
            cosine_similarity(y, p.misleading)};
}

// Everything calibration needs about one layer's trials at one spread.
struct LayerTrials {
    std::vector<CosTriple> unpatched;
    std::vector<char> coin;                          // 1 = patched
    std::vector<std::vector<CosTriple>> per_alpha;   // [alpha index][trial]
};

double rate_percent(const LayerTrials& lt, std::size_t alpha_idx, double theta_d,
                    double theta_s, Label which) {
    std::size_t hits = 0;
    std::size_t n = lt.unpatched.size();
    for (std::size_t i = 0; i < n; ++i) {
        const CosTriple& t = lt.coin[i] ? lt.per_alpha[alpha_idx][i] : lt.unpatched[i];
        if (triple_label(t, theta_d, theta_s) == which) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace

CalibrationOutcome calibrate(const CalibrationProblem& problem) {
    const CalibrationBounds& b = problem.bounds;
    if (b.spreads.empty() || b.alphas.empty() || b.theta_s.empty())
        throw config_error("calibrate: empty search space");
    if (b.theta_d_step <= 0.0 || b.theta_d_hi < b.theta_d_lo)
        throw config_error("calibrate: empty theta_d grid");
    std::size_t n_td = static_cast<std::size_t>(
                           (b.theta_d_hi - b.theta_d_lo) / b.theta_d_step + 1e-9) + 1;

    // The alpha grid the blends are evaluated on; 0.8 rides along for the
    // informational high-alpha reading.
    std::vector<double> alphas_all = b.alphas;
    if (std::find(alphas_all.begin(), alphas_all.end(), 0.8) == alphas_all.end())
        alphas_all.push_back(0.8);
    std::size_t idx08 = std::find(alphas_all.begin(), alphas_all.end(), 0.8) -
                        alphas_all.begin();

    if (problem.net_config.n_layers < 3)
        throw config_error("calibrate: targets cover patch layers 1..3, need n_layers >= 3");

    RandomStream master(problem.master_seed);
    const CalibrationTargets& tg = problem.targets;
    // Grid points whose unpatched baseline stays pure are preferred; if the
    // whole grid fails that screen the best impure point is still reported,
    // flagged non-conforming.
    std::optional<CalibrationOutcome> best;
    std::optional<CalibrationOutcome> best_impure;

    for (double spread : b.spreads) {
        ScenarioParams params = problem.params;
        params.spread_dec = spread;
        RandomStream geo2 = master.substream(kLaneGeometry);
        // Re-derive the full world for this spread; geometry is spread-free
        // but the training draws are not.
        BehaviorPrototypes p2 = make_prototypes(
            problem.net_config.output_dim, geo2, params.cos_safe_mis,
            params.cos_safe_evil, params.cos_evil_mis);
        ScenarioGeometry geom = make_geometry(problem.net_config.input_dim, params, geo2);
        RandomStream init_stream = master.substream(kLaneInit);
        RandomStream data_stream = master.substream(kLaneTrainData);
        Network net = train_scenario_network(problem.net_config, params, geom, p2,
                                             init_stream, data_stream);

        std::array<LayerTrials, 3> layer_trials;
        for (std::size_t l = 1; l <= 3; ++l) {
            LayerTrials& lt = layer_trials[l - 1];
            lt.unpatched.resize(problem.n_trials);
            lt.coin.resize(problem.n_trials);
            lt.per_alpha.assign(alphas_all.size(),
                                std::vector<CosTriple>(problem.n_trials));
            RandomStream salt_lane =
                RandomStream(problem.master_seed).substream(kLaneTrials).substream(l);
            for (std::size_t i = 0; i < problem.n_trials; ++i) {
                RandomStream trial = salt_lane.substream(i);
                RandomStream sample_stream = trial.substream(kTrialSample);
                RandomStream coin_stream = trial.substream(kTrialCoin);
                PromptSample s =
                    std::move(generate_samples(1, params, geom, sample_stream)[0]);
                lt.coin[i] = coin_stream.uniform() < problem.patch_prob ? 1 : 0;
                lt.unpatched[i] = cos_triple(forward(net, s.x_t), p2);
                ActivationCache cc = forward_with_cache(net, s.x_c).second;
                ActivationCache dc = forward_with_cache(net, s.x_d).second;
                for (std::size_t ai = 0; ai < alphas_all.size(); ++ai) {
                    PatchSpec spec{l, alphas_all[ai], 0.0};
                    RandomStream noise = trial.substream(kTrialNoise);
                    Vector y = patched_forward(net, s.x_t, cc, dc, spec, noise);
                    lt.per_alpha[ai][i] = cos_triple(y, p2);
                }
            }
        }

        const LayerTrials& l2 = layer_trials[problem.baseline_layer - 1];
        for (double ts : b.theta_s) {
            for (std::size_t k = 0; k < n_td; ++k) {
                double td = b.theta_d_lo + static_cast<double>(k) * b.theta_d_step;
                // The unpatched baseline must stay essentially pure at the
                // chosen thresholds, otherwise the no-patch run violates
                // its own invariant; such points are excluded outright.
                std::size_t safe_u = 0;
                std::size_t dec_u = 0;
                for (const CosTriple& t : l2.unpatched) {
                    Label lab = triple_label(t, td, ts);
                    if (lab == Label::Safe) ++safe_u;
                    if (lab == Label::Deceptive) ++dec_u;
                }
                double n = static_cast<double>(problem.n_trials);
                bool pure = static_cast<double>(safe_u) / n >= 0.995 &&
                            static_cast<double>(dec_u) / n <= 0.005;
                std::optional<CalibrationOutcome>& bucket = pure ? best : best_impure;
                for (std::size_t ai = 0; ai < b.alphas.size(); ++ai) {
                    double d1 = rate_percent(layer_trials[0], ai, td, ts, Label::Deceptive);
                    double d2 = rate_percent(layer_trials[1], ai, td, ts, Label::Deceptive);
                    double d3 = rate_percent(layer_trials[2], ai, td, ts, Label::Deceptive);
                    double sS = rate_percent(l2, ai, td, ts, Label::Safe);
                    double eE = rate_percent(l2, ai, td, ts, Label::Evil);
                    double dev = std::max({std::abs(d1 - tg.layer1_deceptive),
                                           std::abs(d2 - tg.layer2_deceptive),
                                           std::abs(d3 - tg.layer3_deceptive),
                                           std::abs(sS - tg.baseline_safe),
                                           std::abs(eE - tg.baseline_evil)});
                    // Strict improvement wins; an exact tie on the objective
                    // goes to the point whose high-alpha reading sits closer
                    // to its reference value.
                    bool better = !bucket || dev < bucket->max_deviation - 1e-12;
                    bool tie = bucket && std::abs(dev - bucket->max_deviation) <= 1e-12;
                    double a08 = rate_percent(l2, idx08, td, ts, Label::Deceptive);
                    if (tie && std::abs(a08 - tg.alpha08_deceptive) <
                                   std::abs(bucket->alpha08_deceptive - tg.alpha08_deceptive) -
                                       1e-12)
                        better = true;
                    if (better) {
                        CalibrationOutcome o;
                        o.spread_dec = spread;
                        o.theta_d = td;
                        o.theta_s = ts;
                        o.alpha = b.alphas[ai];
                        o.layer1_deceptive = d1;
                        o.layer2_deceptive = d2;
                        o.layer3_deceptive = d3;
                        o.baseline_safe = sS;
                        o.baseline_evil = eE;
                        o.alpha08_deceptive = a08;
                        o.max_deviation = dev;
                        bucket = o;
                    }
                }
            }
        }
    }
    if (best) {
        best->conforming = best->max_deviation <= 3.0;
        return *best;
    }
    if (best_impure) {
        best_impure->conforming = false;
        return *best_impure;
    }
    throw config_error("calibrate: empty search space");
}

}  // namespace patchlab
