#include "patchlab/report_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

#include "patchlab/error.hpp"

namespace patchlab {

nlohmann::json network_to_json(const Network& net) {
    nlohmann::json j;
    j["n_layers"] = net.config.n_layers;
    j["input_dim"] = net.config.input_dim;
    j["hidden_dim"] = net.config.hidden_dim;
    j["output_dim"] = net.config.output_dim;
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        nlohmann::json w;
        w["rows"] = net.weights[i].rows;
        w["cols"] = net.weights[i].cols;
        w["data"] = net.weights[i].data;
        weights.push_back(std::move(w));
        biases.push_back(net.biases[i]);
    }
    j["weights"] = std::move(weights);
    j["biases"] = std::move(biases);
    return j;
}

Network network_from_json(const nlohmann::json& j) {
    Network net;
    try {
        net.config.n_layers = j.at("n_layers").get<std::size_t>();
        net.config.input_dim = j.at("input_dim").get<std::size_t>();
        net.config.hidden_dim = j.at("hidden_dim").get<std::size_t>();
        net.config.output_dim = j.at("output_dim").get<std::size_t>();
        for (const auto& w : j.at("weights")) {
            Matrix m(w.at("rows").get<std::size_t>(), w.at("cols").get<std::size_t>());
            m.data = w.at("data").get<std::vector<double>>();
            if (m.data.size() != m.rows * m.cols)
                throw dimension_error("network_from_json: weight data size mismatch");
            net.weights.push_back(std::move(m));
        }
        for (const auto& b : j.at("biases"))
            net.biases.push_back(b.get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("network_from_json: ") + e.what());
    }
    // n_layers hidden maps plus the readout
    if (net.weights.size() != net.config.n_layers + 1 || net.biases.size() != net.weights.size())
        throw dimension_error("network_from_json: layer count mismatch");
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        if (net.biases[i].size() != net.weights[i].rows)
            throw dimension_error("network_from_json: bias size mismatch");
        std::size_t want_cols = i == 0 ? net.config.input_dim : net.weights[i - 1].rows;
        if (net.weights[i].cols != want_cols)
            throw dimension_error("network_from_json: layer shape chain mismatch");
    }
    if (net.weights.back().rows != net.config.output_dim)
        throw dimension_error("network_from_json: output dim mismatch");
    return net;
}

nlohmann::json probe_to_json(const LinearProbe& probe, const std::string& config_hash) {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["probed_layer"] = probe.probed_layer;
    j["weights"] = probe.weights;
    j["bias"] = probe.bias;
    j["heldout_accuracy"] = probe.heldout_accuracy;
    return j;
}

LinearProbe probe_from_json(const nlohmann::json& j) {
    LinearProbe p;
    try {
        p.probed_layer = j.at("probed_layer").get<std::size_t>();
        p.weights = j.at("weights").get<std::vector<double>>();
        p.bias = j.at("bias").get<double>();
        p.heldout_accuracy = j.at("heldout_accuracy").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("probe_from_json: ") + e.what());
    }
    return p;
}

nlohmann::json point_to_json(const ReportPoint& p) {
    nlohmann::json j;
    j["layer"] = p.layer;
    j["alpha"] = p.alpha;
    j["k"] = p.k;
    j["n_trials"] = p.report.n_trials;
    j["counts"] = {{"safe", p.report.counts[0]},
                   {"evil", p.report.counts[1]},
                   {"deceptive", p.report.counts[2]}};
    j["rates"] = {{"safe", p.report.proportions[0]},
                  {"evil", p.report.proportions[1]},
                  {"deceptive", p.report.proportions[2]}};
    j["deceptive_ci"] = {{"lo", p.report.ci[2].first}, {"hi", p.report.ci[2].second}};
    j["mean_deception_score"] = p.report.mean_d_score;
    return j;
}

static ReportPoint point_from_json(const nlohmann::json& j) {
    ReportPoint p;
    p.layer = j.at("layer").get<std::size_t>();
    p.alpha = j.at("alpha").get<double>();
    p.k = j.at("k").get<std::size_t>();
    p.report.n_trials = j.at("n_trials").get<std::size_t>();
    p.report.counts[0] = j.at("counts").at("safe").get<std::size_t>();
    p.report.counts[1] = j.at("counts").at("evil").get<std::size_t>();
    p.report.counts[2] = j.at("counts").at("deceptive").get<std::size_t>();
    p.report.proportions[0] = j.at("rates").at("safe").get<double>();
    p.report.proportions[1] = j.at("rates").at("evil").get<double>();
    p.report.proportions[2] = j.at("rates").at("deceptive").get<double>();
    p.report.ci[2] = {j.at("deceptive_ci").at("lo").get<double>(),
                      j.at("deceptive_ci").at("hi").get<double>()};
    p.report.mean_d_score = j.at("mean_deception_score").get<double>();
    return p;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("write_file_atomic: cannot open " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw io_error("write_file_atomic: write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw io_error("write_file_atomic: rename failed for " + target.string() + ": " +
                       ec.message());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("read_file: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

static std::string fmt_fixed(double v, int prec) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(prec) << v;
    return ss.str();
}

std::string format_rate_table(const std::vector<ReportPoint>& points,
                              const std::string& key_header) {
    std::ostringstream out;
    const int kw = static_cast<int>(std::max<std::size_t>(key_header.size(), 5));
    out << std::left << std::setw(kw) << key_header << " | " << std::right << std::setw(7)
        << "Safe %" << " | " << std::setw(7) << "Evil %" << " | " << std::setw(11)
        << "Deceptive %" << "\n";
    out << std::string(static_cast<std::size_t>(kw) + 1, '-') << "+" << std::string(9, '-')
        << "+" << std::string(9, '-') << "+" << std::string(12, '-') << "\n";
    for (const auto& p : points) {
        std::string key;
        if (key_header == "Alpha")
            key = fmt_fixed(p.alpha, 2);
        else if (key_header == "Chain")
            key = std::to_string(p.k);
        else
            key = std::to_string(p.layer);
        out << std::left << std::setw(kw) << key << " | " << std::right << std::setw(7)
            << fmt_fixed(100.0 * p.report.proportions[0], 1) << " | " << std::setw(7)
            << fmt_fixed(100.0 * p.report.proportions[1], 1) << " | " << std::setw(11)
            << fmt_fixed(100.0 * p.report.proportions[2], 1) << "\n";
    }
    return out.str();
}

std::string points_to_csv(const std::vector<ReportPoint>& points,
                          const std::string& config_hash, std::uint64_t master_seed) {
    std::ostringstream out;
    out << "# config_hash=" << config_hash << " master_seed=" << master_seed << "\n";
    out << "layer,alpha,k,safe,evil,deceptive,ci_lo,ci_hi\n";
    for (const auto& p : points) {
        out << p.layer << ',' << fmt_fixed(p.alpha, 4) << ',' << p.k << ','
            << fmt_fixed(p.report.proportions[0], 6) << ','
            << fmt_fixed(p.report.proportions[1], 6) << ','
            << fmt_fixed(p.report.proportions[2], 6) << ','
            << fmt_fixed(p.report.ci[2].first, 6) << ','
            << fmt_fixed(p.report.ci[2].second, 6) << "\n";
    }
    return out.str();
}

MergeResult merge_reports(const std::vector<nlohmann::json>& reports, bool force) {
    if (reports.empty()) throw config_error("merge_reports: no reports given");
    std::string hash;
    std::uint64_t seed = 0;
    // (layer, alpha, k) keys a point; later documents win on duplicates.
    std::map<std::tuple<std::size_t, std::string, std::size_t>, ReportPoint> merged;
    nlohmann::json extras = nlohmann::json::array();
    for (const auto& r : reports) {
        std::string h;
        try {
            h = r.at("config_hash").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw io_error(std::string("merge_reports: ") + e.what());
        }
        if (hash.empty()) {
            hash = h;
            seed = r.value("master_seed", std::uint64_t{0});
        } else if (h != hash && !force) {
            throw merge_conflict_error("merge_reports: config_hash mismatch (" + hash + " vs " +
                                       h + "); pass --force to merge anyway");
        }
        try {
            if (r.contains("points")) {
                for (const auto& pj : r.at("points")) {
                    ReportPoint p = point_from_json(pj);
                    merged[{p.layer, fmt_fixed(p.alpha, 6), p.k}] = p;
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw io_error(std::string("merge_reports: malformed point: ") + e.what());
        }
        nlohmann::json extra;
        if (r.contains("mitigation")) extra["mitigation"] = r.at("mitigation");
        if (r.contains("probe")) extra["probe"] = r.at("probe");
        if (!extra.empty()) {
            extra["subcommand"] = r.value("subcommand", std::string{});
            extras.push_back(std::move(extra));
        }
    }
    std::vector<ReportPoint> points;
    points.reserve(merged.size());
    for (const auto& [key, p] : merged) points.push_back(p);
    nlohmann::json summary;
    summary["config_hash"] = hash;
    summary["master_seed"] = seed;
    summary["subcommand"] = "merged";
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : points) arr.push_back(point_to_json(p));
    summary["points"] = std::move(arr);
    if (!extras.empty()) summary["sections"] = std::move(extras);
    return MergeResult{std::move(summary), points_to_csv(points, hash, seed)};
}

}  // namespace patchlab
