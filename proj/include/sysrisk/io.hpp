#ifndef SYSRISK_IO_HPP
#define SYSRISK_IO_HPP

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "sysrisk/report.hpp"
#include "sysrisk/types.hpp"

namespace sysrisk {

enum class Method { ClosedForm, Dual, Primal, All };

Method method_from_string(const std::string& name);
std::string method_to_string(Method method);

struct ToleranceConfig {
    double lambda_tol = 1e-12;
    double ascent_tol = 1e-6;
    double fd_eps = 1e-4;
};

// Residual thresholds applied when deciding the process exit status.
struct ResidualThresholds {
    double budget = 1e-8;
    double clearing = 1e-12;
    double duality_gap_rel = 1e-9;      // scaled by 1 + |rho|
    double full_allocation_rel = 1e-9;  // scaled by 1 + |rho|
    double cross_method_rel = 1e-4;     // scaled by 1 + |rho|
};

// Thresholds appropriate for the engine that produced the report. The dual
// ascent clears group sums only up to its stationarity certificate, so its
// clearing gate follows the configured ascent tolerance.
ResidualThresholds thresholds_for(Method method, const ToleranceConfig& tolerances);

struct RunConfig {
    std::vector<double> alphas;   // per-bank exponential coefficients
    bool general_path = false;    // route the alphas through the general machinery
    std::vector<std::vector<std::size_t>> grouping; // 0-based after parsing
    double acceptance_level = 0.0;
    Method method = Method::ClosedForm;
    ToleranceConfig tolerances;
};

// Parses the JSON run configuration. Recognized keys: "utilities" (array of
// alphas, or {"tag": "general", "alpha": [...]}), "grouping" (1-based index
// lists; defaults to a single group), "B", "method", "tolerances"
// ({lambda_tol, ascent_tol, fd_eps}). Unknown keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Reads the scenario CSV: header `scenario,probability,X1,...,XN`, one row
// per scenario. Probabilities within 1e-9 of summing to one are renormalized;
// larger defects are rejected.
std::pair<ScenarioSpace, Positions> load_scenarios(const std::string& path);
std::pair<ScenarioSpace, Positions> parse_scenarios(std::istream& input);

// Direction CSV: header `scenario,V1,...,VN`, same row count as the
// scenario file.
Matrix load_direction(const std::string& path, std::size_t banks, std::size_t scenarios);

Model build_model(const RunConfig& config, ScenarioSpace space, Positions positions);

// Executes the configured engine(s) and assembles the report. method=all
// runs every engine that applies to the utility family and records the
// largest pairwise rho deviation.
RiskReport run(const RunConfig& config, const Model& model);

// True when every residual present in the report is inside the thresholds.
bool residuals_ok(const RiskReport& report,
                  const ResidualThresholds& thresholds = {});

std::string report_to_json(const RiskReport& report);
std::string report_to_text(const RiskReport& report);

// Parses a JSON report back into numbers; used by round-trip checks.
RiskReport report_from_json(const std::string& text);

void emit_report(const RiskReport& report, const std::string& path,
                 const std::string& format);

// Writes the sensitivity TSV: one row per reported quantity with the
// analytic value, the central finite difference and their absolute mismatch.
void emit_sensitivity_table(const Model& model, const Matrix& direction_values,
                            const std::string& out_path, double fd_eps = 1e-4);

} // namespace sysrisk

#endif
