#include "patchlab/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "patchlab/error.hpp"

namespace patchlab {

namespace {

Vector normal_vector(RandomStream& stream, std::size_t dim) {
    Vector v(dim);
    for (double& x : v) x = stream.normal();
    return v;
}

// Gram-Schmidt over fresh normal draws.
std::vector<Vector> orthonormal_set(std::size_t dim, std::size_t n, RandomStream& stream) {
    std::vector<Vector> out;
    for (std::size_t i = 0; i < n; ++i) {
        Vector v = normal_vector(stream, dim);
        for (const Vector& u : out) v = axpy(v, -dot(v, u), u);
        out.push_back(unit(v));
    }
    return out;
}

// Fisher-Yates driven by the stream.
std::vector<std::size_t> permutation(std::size_t n, RandomStream& stream) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = stream.next_u64() % i;
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace

BehaviorPrototypes make_prototypes(std::size_t output_dim, RandomStream& stream,
                                   double cos_sm, double cos_se, double cos_em) {
    if (output_dim < 3)
        throw config_error("prototypes: output_dim must be >= 3");
    std::vector<Vector> u = orthonormal_set(output_dim, 3, stream);
    BehaviorPrototypes p;
    p.safe = u[0];
    p.evil = axpy(scale(u[0], cos_se), std::sqrt(1.0 - cos_se * cos_se), u[1]);
    double d2 = (cos_em - cos_se * cos_sm) / std::sqrt(1.0 - cos_se * cos_se);
    double f2 = 1.0 - cos_sm * cos_sm - d2 * d2;
    if (f2 <= 0.0) throw config_error("prototypes: infeasible angle set");
    Vector m = scale(u[0], cos_sm);
    m = axpy(m, d2, u[1]);
    m = axpy(m, std::sqrt(f2), u[2]);
    p.misleading = m;
    return p;
}

ScenarioGeometry make_geometry(std::size_t input_dim, const ScenarioParams& params,
                               RandomStream& stream) {
    if (input_dim < 4)
        throw config_error("geometry: input_dim must be >= 4 for the axis frame");
    std::vector<Vector> axes = orthonormal_set(input_dim, 4, stream);
    ScenarioGeometry g;
    g.mu_clean = scale(axes[0], params.base_scale);
    g.v_cue = axes[1];
    g.v_style = axes[2];
    g.u_evil = axes[3];
    g.dec_mean = axpy(axpy(g.mu_clean, params.cue_distance, g.v_cue),
                      params.evil_distance, g.u_evil);
    return g;
}

namespace {

Vector blob_draw(const Vector& mean, double spread, RandomStream& stream) {
    Vector x = mean;
    for (double& v : x) v += spread * stream.normal();
    return x;
}

}  // namespace

std::vector<PromptSample> generate_samples(std::size_t count, const ScenarioParams& params,
                                           const ScenarioGeometry& geom,
                                           RandomStream& stream) {
    if (count < 1) throw config_error("generate_samples: count must be >= 1");
    std::vector<PromptSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        PromptSample s;
        s.x_c = blob_draw(geom.mu_clean, params.spread_clean, stream);
        s.x_d = blob_draw(geom.dec_mean, params.spread_dec, stream);
        s.x_t = blob_draw(geom.mu_clean, params.spread_clean, stream);
        out.push_back(std::move(s));
    }
    return out;
}

double deception_score(const Vector& y, const BehaviorPrototypes& prototypes) {
    return cosine_similarity(y, prototypes.misleading);
}

BehaviorOutcome classify(const Vector& y, const BehaviorPrototypes& prototypes,
                         const ClassifierThresholds& thresholds) {
    double cs = cosine_similarity(y, prototypes.safe);
    double ce = cosine_similarity(y, prototypes.evil);
    double cm = cosine_similarity(y, prototypes.misleading);
    BehaviorOutcome out;
    out.y = y;
    out.d_score = cm;
    if (ce > cs && ce > cm) {
        out.label = Label::Evil;
    } else if (cm > thresholds.theta_d && cs > thresholds.theta_s) {
        out.label = Label::Deceptive;
    } else {
        out.label = Label::Safe;
    }
    return out;
}

Vector slerp(const Vector& a, const Vector& b, double w) {
    w = std::clamp(w, 0.0, 1.0);
    double om = std::acos(std::clamp(dot(a, b), -1.0, 1.0));
    double so = std::sin(om);
    if (so == 0.0) return a;
    Vector out(a.size());
    double ca = std::sin((1.0 - w) * om) / so;
    double cb = std::sin(w * om) / so;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = ca * a[i] + cb * b[i];
    return out;
}

namespace {

// Stage B arc position: zero below onset, then a saturating curve with a
// floor, nudged by the style coordinate, capped below 1.
double arc_position_b(double t, double eta, const ScenarioParams& p) {
    if (t <= p.cue_onset) return 0.0;
    double u = t - p.cue_onset;
    double sat = p.sat_max * u / (u + p.sat_scale);
    double w = std::max(p.arc_floor, sat) + p.style_gain * eta;
    return std::clamp(w, 0.0, p.arc_cap);
}

// Stage A arc position: plain linear ramp in the cue coordinate. Keeping
// stage A linear stops the hidden code from saturating, which the blend
// response depends on.
double arc_position_a(double t, double eta, const ScenarioParams& p) {
    double w = std::clamp(t / p.ramp_knee, 0.0, 1.0) * p.ramp_max;
    if (t > p.cue_onset) w += p.style_gain * eta;
    return std::clamp(w, 0.0, p.ramp_max);
}

}  // namespace

TrainingData make_training_data(const ScenarioParams& params, const ScenarioGeometry& geom,
                                const BehaviorPrototypes& prototypes, RandomStream& stream) {
    std::size_t n = params.n_train;
    auto count = [n](double share) { return static_cast<std::size_t>(n * share); };
    std::size_t n_dec = count(params.dec_share);
    std::size_t n_neg = count(params.neg_share);
    std::size_t n_evil = count(params.evil_share);
    if (n_dec + n_neg + n_evil >= n)
        throw config_error("training mix: shares leave no clean rows");
    std::size_t n_clean = n - n_dec - n_neg - n_evil;

    Dataset rows_a;
    Dataset rows_b;
    rows_a.reserve(n);
    rows_b.reserve(n);
    auto push = [&](Vector x, Vector ta, Vector tb) {
        rows_a.emplace_back(x, std::move(ta));
        rows_b.emplace_back(std::move(x), std::move(tb));
    };

    for (std::size_t i = 0; i < n_clean; ++i) {
        Vector x = blob_draw(geom.mu_clean, params.spread_clean, stream);
        push(std::move(x), prototypes.safe, prototypes.safe);
    }
    for (std::size_t i = 0; i < n_dec; ++i) {
        Vector x = blob_draw(geom.dec_mean, params.spread_dec, stream);
        Vector rel = axpy(x, -1.0, geom.mu_clean);
        double t = dot(rel, geom.v_cue);
        double eta = dot(rel, geom.v_style);
        double ec = dot(rel, geom.u_evil);
        Vector ta;
        Vector tb;
        if (ec > params.evil_cut) {
            // Far enough along the evil axis the row is overt, not subtle:
            // both stages target the evil prototype.
            ta = prototypes.evil;
            tb = prototypes.evil;
        } else {
            ta = slerp(prototypes.safe, prototypes.misleading, arc_position_a(t, eta, params));
            tb = slerp(prototypes.safe, prototypes.misleading, arc_position_b(t, eta, params));
        }
        push(std::move(x), std::move(ta), std::move(tb));
    }
    for (std::size_t i = 0; i < n_neg; ++i) {
        Vector x = blob_draw(geom.mu_clean, params.spread_clean, stream);
        double tn = params.neg_mean + params.neg_sd * stream.normal();
        x = axpy(x, tn, geom.v_cue);
        push(std::move(x), prototypes.safe, prototypes.safe);
    }
    for (std::size_t i = 0; i < n_evil; ++i) {
        Vector x = blob_draw(geom.mu_clean, params.spread_clean, stream);
        double ev = 1.0 + params.evil_sd * stream.normal();
        x = axpy(x, ev * params.evil_scale, geom.u_evil);
        push(std::move(x), prototypes.evil, prototypes.evil);
    }

    std::vector<std::size_t> order = permutation(n, stream);
    TrainingData out;
    out.stage_a.reserve(n);
    out.stage_b.reserve(n);
    for (std::size_t i : order) {
        out.stage_a.push_back(rows_a[i]);
        out.stage_b.push_back(rows_b[i]);
    }
    return out;
}

Network train_scenario_network(const NetworkConfig& net_config, const ScenarioParams& params,
                               const ScenarioGeometry& geom, const BehaviorPrototypes& prototypes,
                               RandomStream& init_stream, RandomStream& data_stream) {
    Network net = init_network(net_config, init_stream);
    TrainingData data = make_training_data(params, geom, prototypes, data_stream);
    net = train(net, data.stage_a, params.epochs_a, params.lr);
    if (params.epochs_b > 0)
        net = train(net, data.stage_b, params.epochs_b, params.lr, net_config.n_layers - 1);
    return net;
}

}  // namespace patchlab
