#ifndef SYSRISK_ERROR_HPP
#define SYSRISK_ERROR_HPP

#include <stdexcept>
#include <string>

namespace sysrisk {

enum class ErrorCode {
    NonPartition,
    BadProbability,
    BadUtility,
    InfeasibleB,
    DimensionMismatch,
    NonPositiveDual,
    InversionFailure,
    NotExponential,
    BracketFailure,
    NonNormalizedQ,
    ZeroDensityScenario,
    NoConvergence,
    NotInC,
    BadSubgroup,
    ShapeMismatch,
    ParseError,
    RaggedRows,
    IoError,
    BadConfig,
    Internal,
};

const char* to_string(ErrorCode code);

// Single exception type; the code carries the failure category so callers
// can branch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

} // namespace sysrisk

#endif
