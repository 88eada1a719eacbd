#pragma once

#include <stdexcept>
#include <string>

namespace patchlab {

// Error taxonomy doubles as the CLI exit-code contract: config errors map to
// exit 2, a missing calibration manifest to 4, a refused merge to 5, and
// everything else raised during a run maps to exit 1.
enum class ErrorKind {
    Dimension,      // shape mismatch between tensors / layers
    Degenerate,     // zero-norm vector where a direction is required
    Config,         // invalid parameter or config document
    Divergence,     // non-finite loss during training
    Io,             // file read/write failure
    MissingManifest,  // run requested calibrated values but none exist
    MergeConflict,  // merging reports whose config hashes disagree
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error dimension_error(const std::string& msg) { return {ErrorKind::Dimension, msg}; }
inline Error degenerate_error(const std::string& msg) { return {ErrorKind::Degenerate, msg}; }
inline Error config_error(const std::string& msg) { return {ErrorKind::Config, msg}; }
inline Error divergence_error(const std::string& msg) { return {ErrorKind::Divergence, msg}; }
inline Error io_error(const std::string& msg) { return {ErrorKind::Io, msg}; }
inline Error missing_manifest_error(const std::string& msg) {
    return {ErrorKind::MissingManifest, msg};
}
inline Error merge_conflict_error(const std::string& msg) {
    return {ErrorKind::MergeConflict, msg};
}

}  // namespace patchlab
