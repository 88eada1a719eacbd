#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "patchlab/defenses.hpp"
#include "patchlab/experiments.hpp"
#include "patchlab/network.hpp"

namespace patchlab {

// Shape header plus row-major weight arrays.
nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

nlohmann::json probe_to_json(const LinearProbe& probe, const std::string& config_hash);
LinearProbe probe_from_json(const nlohmann::json& j);

// One sweep/config point: the patch coordinates plus the measured rates.
struct ReportPoint {
    std::size_t layer = 0;
    double alpha = 0.0;
    std::size_t k = 1;
    RateReport report;
};

nlohmann::json point_to_json(const ReportPoint& p);

// Write-temp-then-rename; partial files never appear under the final name.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Fixed-width table, one row per point. key_header names the first column
// (Layer, Alpha or Chain).
std::string format_rate_table(const std::vector<ReportPoint>& points,
                              const std::string& key_header);

// layer,alpha,k,safe,evil,deceptive,ci_lo,ci_hi rows; the interval is the
// deceptive proportion's. A comment line carries hash and seed.
std::string points_to_csv(const std::vector<ReportPoint>& points,
                          const std::string& config_hash, std::uint64_t master_seed);

// Merged summary of several report documents. Throws on hash mismatch
// unless force; points are deduplicated and sorted by (layer, alpha, k).
struct MergeResult {
    nlohmann::json summary;
    std::string csv;
};
MergeResult merge_reports(const std::vector<nlohmann::json>& reports, bool force);

}  // namespace patchlab
