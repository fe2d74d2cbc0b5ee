#include "sysrisk/error.hpp"

namespace sysrisk {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NonPartition: return "NonPartition";
        case ErrorCode::BadProbability: return "BadProbability";
        case ErrorCode::BadUtility: return "BadUtility";
        case ErrorCode::InfeasibleB: return "InfeasibleB";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonPositiveDual: return "NonPositiveDual";
        case ErrorCode::InversionFailure: return "InversionFailure";
        case ErrorCode::NotExponential: return "NotExponential";
        case ErrorCode::BracketFailure: return "BracketFailure";
        case ErrorCode::NonNormalizedQ: return "NonNormalizedQ";
        case ErrorCode::ZeroDensityScenario: return "ZeroDensityScenario";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::NotInC: return "NotInC";
        case ErrorCode::BadSubgroup: return "BadSubgroup";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::RaggedRows: return "RaggedRows";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::Internal: return "Internal";
    }
    return "Unknown";
}

} // namespace sysrisk
