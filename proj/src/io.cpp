#include "sysrisk/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "sysrisk/dual_engine.hpp"
#include "sysrisk/exponential_engine.hpp"
#include "sysrisk/primal_oracle.hpp"
#include "sysrisk/probability.hpp"
#include "sysrisk/sensitivity.hpp"

namespace sysrisk {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

double parse_number(const std::string& text, const char* context) {
    try {
        std::size_t used = 0;
        const double value = std::stod(text, &used);
        while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used])))
            ++used;
        if (used != text.size())
            throw Error(ErrorCode::ParseError, std::string(context) + ": '" + text + "'");
        return value;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, std::string(context) + ": '" + text + "'");
    }
}

std::string trim(const std::string& text) {
    const auto begin = text.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = text.find_last_not_of(" \t\r\n");
    return text.substr(begin, end - begin + 1);
}

UtilityFamily utilities_from_config(const RunConfig& config) {
    UtilityFamily utilities;
    utilities.reserve(config.alphas.size());
    for (double alpha : config.alphas) {
        if (config.general_path) {
            utilities.push_back(Utility::general(
                [alpha](double x) { return -std::exp(-alpha * x) / alpha; },
                [alpha](double x) { return std::exp(-alpha * x); }));
        } else {
            utilities.push_back(Utility::exponential(alpha));
        }
    }
    return utilities;
}

ordered_json densities_json(const DensityVector& q) {
    ordered_json rows = ordered_json::array();
    for (std::size_t m = 0; m < q.densities.rows(); ++m) {
        ordered_json row = ordered_json::array();
        for (double value : q.row(m)) row.push_back(value);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

Method method_from_string(const std::string& name) {
    if (name == "closed-form") return Method::ClosedForm;
    if (name == "dual") return Method::Dual;
    if (name == "primal") return Method::Primal;
    if (name == "all") return Method::All;
    throw Error(ErrorCode::BadConfig, "unknown method '" + name + "'");
}

std::string method_to_string(Method method) {
    switch (method) {
        case Method::ClosedForm: return "closed-form";
        case Method::Dual: return "dual";
        case Method::Primal: return "primal";
        case Method::All: return "all";
    }
    return "?";
}

namespace {

void parse_config_keys(const ordered_json& doc, RunConfig& config, bool& have_utilities,
                       bool& have_level) {
    for (const auto& [key, value] : doc.items()) {
        if (key == "utilities") {
            have_utilities = true;
            if (value.is_array()) {
                for (const auto& alpha : value) config.alphas.push_back(alpha.get<double>());
            } else if (value.is_object()) {
                for (const auto& [ukey, uvalue] : value.items()) {
                    if (ukey == "tag") {
                        if (uvalue.get<std::string>() != "general")
                            throw Error(ErrorCode::BadConfig, "unknown utilities tag");
                        config.general_path = true;
                    } else if (ukey == "alpha") {
                        for (const auto& alpha : uvalue)
                            config.alphas.push_back(alpha.get<double>());
                    } else {
                        throw Error(ErrorCode::BadConfig, "unknown utilities key '" + ukey + "'");
                    }
                }
            } else {
                throw Error(ErrorCode::BadConfig, "utilities must be an array or object");
            }
        } else if (key == "grouping") {
            for (const auto& group : value) {
                std::vector<std::size_t> indices;
                for (const auto& index : group) {
                    const long long one_based = index.get<long long>();
                    if (one_based < 1)
                        throw Error(ErrorCode::BadConfig, "bank indices are 1-based");
                    indices.push_back(static_cast<std::size_t>(one_based - 1));
                }
                config.grouping.push_back(std::move(indices));
            }
        } else if (key == "B") {
            config.acceptance_level = value.get<double>();
            have_level = true;
        } else if (key == "method") {
            config.method = method_from_string(value.get<std::string>());
        } else if (key == "tolerances") {
            for (const auto& [tkey, tvalue] : value.items()) {
                if (tkey == "lambda_tol")
                    config.tolerances.lambda_tol = tvalue.get<double>();
                else if (tkey == "ascent_tol")
                    config.tolerances.ascent_tol = tvalue.get<double>();
                else if (tkey == "fd_eps")
                    config.tolerances.fd_eps = tvalue.get<double>();
                else
                    throw Error(ErrorCode::BadConfig, "unknown tolerance '" + tkey + "'");
                if (!(tvalue.get<double>() > 0.0))
                    throw Error(ErrorCode::BadConfig, "tolerances must be positive");
            }
        } else {
            throw Error(ErrorCode::BadConfig, "unknown config key '" + key + "'");
        }
    }
}

} // namespace

RunConfig parse_config(const std::string& text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::BadConfig, std::string("config JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::BadConfig, "config must be an object");

    RunConfig config;
    bool have_utilities = false, have_level = false;
    try {
        parse_config_keys(doc, config, have_utilities, have_level);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::BadConfig, std::string("config value: ") + e.what());
    }
    if (!have_utilities) throw Error(ErrorCode::BadConfig, "missing 'utilities'");
    if (!have_level) throw Error(ErrorCode::BadConfig, "missing 'B'");
    if (config.alphas.empty()) throw Error(ErrorCode::BadConfig, "empty utilities");
    if (config.grouping.empty()) {
        std::vector<std::size_t> everyone(config.alphas.size());
        for (std::size_t n = 0; n < everyone.size(); ++n) everyone[n] = n;
        config.grouping.push_back(std::move(everyone));
    }
    return config;
}

RunConfig load_config(const std::string& path) {
    std::ifstream input(path);
    if (!input) throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
    std::stringstream buffer;
    buffer << input.rdbuf();
    return parse_config(buffer.str());
}

std::pair<ScenarioSpace, Positions> parse_scenarios(std::istream& input) {
    std::string line;
    if (!std::getline(input, line))
        throw Error(ErrorCode::ParseError, "empty scenario file");
    const std::vector<std::string> header = split_line(trim(line));
    if (header.size() < 3 || trim(header[0]) != "scenario" ||
        trim(header[1]) != "probability")
        throw Error(ErrorCode::ParseError, "expected header scenario,probability,X1,...");
    const std::size_t banks = header.size() - 2;

    std::vector<double> probabilities;
    std::vector<std::vector<double>> rows;
    while (std::getline(input, line)) {
        const std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        const std::vector<std::string> fields = split_line(trimmed);
        if (fields.size() != banks + 2)
            throw Error(ErrorCode::RaggedRows, "row with " + std::to_string(fields.size()) +
                                                   " fields, expected " +
                                                   std::to_string(banks + 2));
        probabilities.push_back(parse_number(trim(fields[1]), "probability"));
        std::vector<double> row(banks);
        for (std::size_t n = 0; n < banks; ++n)
            row[n] = parse_number(trim(fields[n + 2]), "position");
        rows.push_back(std::move(row));
    }
    if (probabilities.empty()) throw Error(ErrorCode::ParseError, "no scenario rows");

    double sum = 0.0;
    for (double p : probabilities) {
        if (!(p > 0.0)) throw Error(ErrorCode::BadProbability, "probability <= 0");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error(ErrorCode::BadProbability, "probabilities sum to " + std::to_string(sum));
    for (double& p : probabilities) p /= sum;

    ScenarioSpace space{std::move(probabilities)};
    Positions positions;
    positions.values = Matrix(banks, space.size());
    for (std::size_t s = 0; s < space.size(); ++s)
        for (std::size_t n = 0; n < banks; ++n)
            positions.values.at(n, s) = rows[s][n];
    return {std::move(space), std::move(positions)};
}

std::pair<ScenarioSpace, Positions> load_scenarios(const std::string& path) {
    std::ifstream input(path);
    if (!input) throw Error(ErrorCode::IoError, "cannot open scenarios '" + path + "'");
    return parse_scenarios(input);
}

Matrix load_direction(const std::string& path, std::size_t banks, std::size_t scenarios) {
    std::ifstream input(path);
    if (!input) throw Error(ErrorCode::IoError, "cannot open direction '" + path + "'");
    std::string line;
    if (!std::getline(input, line))
        throw Error(ErrorCode::ParseError, "empty direction file");
    const std::vector<std::string> header = split_line(trim(line));
    if (header.size() < 2 || trim(header[0]) != "scenario")
        throw Error(ErrorCode::ParseError, "expected header scenario,V1,...");
    if (header.size() - 1 != banks)
        throw Error(ErrorCode::ShapeMismatch, "direction bank count");

    Matrix v(banks, scenarios);
    std::size_t row_index = 0;
    while (std::getline(input, line)) {
        const std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        const std::vector<std::string> fields = split_line(trimmed);
        if (fields.size() != banks + 1)
            throw Error(ErrorCode::RaggedRows, "direction row width");
        if (row_index >= scenarios)
            throw Error(ErrorCode::ShapeMismatch, "direction scenario count");
        for (std::size_t n = 0; n < banks; ++n)
            v.at(n, row_index) = parse_number(trim(fields[n + 1]), "direction");
        ++row_index;
    }
    if (row_index != scenarios)
        throw Error(ErrorCode::ShapeMismatch, "direction scenario count");
    return v;
}

Model build_model(const RunConfig& config, ScenarioSpace space, Positions positions) {
    return validate_model(std::move(space), std::move(positions), config.grouping,
                          utilities_from_config(config), config.acceptance_level);
}

RiskReport run(const RunConfig& config, const Model& model) {
    DualEngineOptions dual_options;
    dual_options.lambda_residual_tol = config.tolerances.lambda_tol;
    dual_options.ascent_tol = config.tolerances.ascent_tol;

    auto dual_report = [&]() {
        const DualAscentState state = maximize_dual(model, dual_options);
        const RhoGivenQ fixed = rho_given_q(model, state.q, dual_options);
        RiskReport report;
        report.rho = state.objective;
        report.allocation = fixed.yhat;
        report.group_levels.assign(model.group_count(), 0.0);
        Allocation alloc;
        alloc.y = fixed.yhat;
        std::vector<double> per_bank(model.banks());
        double allocated = 0.0;
        for (std::size_t n = 0; n < model.banks(); ++n) {
            per_bank[n] = expect_q(model.space, state.q.row(model.grouping.group_of[n]),
                                   fixed.yhat.row(n));
            allocated += per_bank[n];
        }
        for (std::size_t m = 0; m < model.group_count(); ++m) {
            std::vector<double> sums(model.scenarios(), 0.0);
            for (std::size_t bank : model.grouping.groups[m])
                for (std::size_t s = 0; s < model.scenarios(); ++s)
                    sums[s] += fixed.yhat.at(bank, s);
            report.group_levels[m] = expect_p(model.space, sums);
        }
        alloc.d = report.group_levels;
        report.residuals.budget = std::abs(expected_aggregate_utility(model, fixed.yhat) -
                                           model.acceptance_level);
        report.residuals.clearing = clearing_defect(model, alloc);
        report.residuals.duality_gap = std::abs(report.rho - fixed.rho_q);
        report.residuals.full_allocation = std::abs(allocated - report.rho);
        report.penalty = penalty_general(model, state.q, dual_options);
        report.lambda_star = solve_lambda_star(model, state.q, dual_options).value;
        report.dual_densities = state.q;
        report.risk_allocations = std::move(per_bank);
        return report;
    };

    auto primal_report = [&]() {
        const PrimalSolution primal = primal_solve(model);
        RiskReport report;
        report.rho = primal.rho;
        report.group_levels = primal.allocation.d;
        report.allocation = primal.allocation.y;
        report.residuals.budget = std::abs(primal.feasibility_residual);
        report.residuals.clearing = clearing_defect(model, primal.allocation);
        return report;
    };

    switch (config.method) {
        case Method::ClosedForm:
            if (!model.all_exponential())
                throw Error(ErrorCode::NotExponential,
                            "closed-form method needs exponential utilities");
            return risk_report(model);
        case Method::Dual:
            return dual_report();
        case Method::Primal:
            return primal_report();
        case Method::All:
            break;
    }

    // method=all: every engine applicable to the utility family.
    std::vector<double> rhos;
    RiskReport report;
    if (model.all_exponential()) {
        report = risk_report(model);
        rhos.push_back(report.rho);
        rhos.push_back(dual_report().rho);
    } else {
        report = dual_report();
        rhos.push_back(report.rho);
    }
    rhos.push_back(primal_report().rho);
    double cross = 0.0;
    for (std::size_t i = 0; i < rhos.size(); ++i)
        for (std::size_t j = i + 1; j < rhos.size(); ++j)
            cross = std::max(cross, std::abs(rhos[i] - rhos[j]));
    report.residuals.cross_method = cross;
    return report;
}

ResidualThresholds thresholds_for(Method method, const ToleranceConfig& tolerances) {
    ResidualThresholds thresholds;
    // The ascent clears group sums only up to its stationarity certificate,
    // and method=all falls back to the ascent engine off the exponential
    // family.
    if (method == Method::Dual || method == Method::All)
        thresholds.clearing = std::max(thresholds.clearing, tolerances.ascent_tol);
    return thresholds;
}

bool residuals_ok(const RiskReport& report, const ResidualThresholds& thresholds) {
    const double scale = 1.0 + std::abs(report.rho);
    if (report.residuals.budget > thresholds.budget) return false;
    if (report.residuals.clearing > thresholds.clearing) return false;
    if (report.residuals.duality_gap &&
        *report.residuals.duality_gap > thresholds.duality_gap_rel * scale)
        return false;
    if (report.residuals.full_allocation &&
        *report.residuals.full_allocation > thresholds.full_allocation_rel * scale)
        return false;
    if (report.residuals.cross_method &&
        *report.residuals.cross_method > thresholds.cross_method_rel * scale)
        return false;
    return true;
}

std::string report_to_json(const RiskReport& report) {
    ordered_json doc;
    doc["rho"] = report.rho;
    doc["group_levels"] = report.group_levels;
    ordered_json allocation = ordered_json::array();
    for (std::size_t n = 0; n < report.allocation.rows(); ++n) {
        ordered_json row = ordered_json::array();
        for (double value : report.allocation.row(n)) row.push_back(value);
        allocation.push_back(std::move(row));
    }
    doc["allocation"] = std::move(allocation);
    doc["dual_densities"] =
        report.dual_densities ? densities_json(*report.dual_densities) : ordered_json(nullptr);
    doc["risk_allocations"] = report.risk_allocations
                                  ? ordered_json(*report.risk_allocations)
                                  : ordered_json(nullptr);
    doc["penalty"] = report.penalty ? ordered_json(*report.penalty) : ordered_json(nullptr);
    doc["lambda_star"] =
        report.lambda_star ? ordered_json(*report.lambda_star) : ordered_json(nullptr);
    ordered_json residuals;
    residuals["budget"] = report.residuals.budget;
    residuals["clearing"] = report.residuals.clearing;
    residuals["duality_gap"] = report.residuals.duality_gap
                                   ? ordered_json(*report.residuals.duality_gap)
                                   : ordered_json(nullptr);
    residuals["full_allocation"] = report.residuals.full_allocation
                                       ? ordered_json(*report.residuals.full_allocation)
                                       : ordered_json(nullptr);
    if (report.residuals.cross_method)
        residuals["cross_method"] = *report.residuals.cross_method;
    doc["residuals"] = std::move(residuals);
    return doc.dump(2) + "\n";
}

RiskReport report_from_json(const std::string& text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("report JSON: ") + e.what());
    }
    RiskReport report;
    report.rho = doc.at("rho").get<double>();
    report.group_levels = doc.at("group_levels").get<std::vector<double>>();
    const auto& allocation = doc.at("allocation");
    if (!allocation.empty()) {
        report.allocation = Matrix(allocation.size(), allocation[0].size());
        for (std::size_t n = 0; n < allocation.size(); ++n)
            for (std::size_t s = 0; s < allocation[n].size(); ++s)
                report.allocation.at(n, s) = allocation[n][s].get<double>();
    }
    if (!doc.at("dual_densities").is_null()) {
        const auto& rows = doc.at("dual_densities");
        DensityVector q;
        q.densities = Matrix(rows.size(), rows[0].size());
        for (std::size_t m = 0; m < rows.size(); ++m)
            for (std::size_t s = 0; s < rows[m].size(); ++s)
                q.densities.at(m, s) = rows[m][s].get<double>();
        report.dual_densities = std::move(q);
    }
    if (!doc.at("risk_allocations").is_null())
        report.risk_allocations = doc.at("risk_allocations").get<std::vector<double>>();
    if (!doc.at("penalty").is_null()) report.penalty = doc.at("penalty").get<double>();
    if (!doc.at("lambda_star").is_null())
        report.lambda_star = doc.at("lambda_star").get<double>();
    const auto& residuals = doc.at("residuals");
    report.residuals.budget = residuals.at("budget").get<double>();
    report.residuals.clearing = residuals.at("clearing").get<double>();
    if (!residuals.at("duality_gap").is_null())
        report.residuals.duality_gap = residuals.at("duality_gap").get<double>();
    if (!residuals.at("full_allocation").is_null())
        report.residuals.full_allocation = residuals.at("full_allocation").get<double>();
    if (residuals.contains("cross_method"))
        report.residuals.cross_method = residuals.at("cross_method").get<double>();
    return report;
}

std::string report_to_text(const RiskReport& report) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "rho: " << report.rho << "\n";
    os << "group levels:";
    for (double d : report.group_levels) os << " " << d;
    os << "\n";
    if (report.lambda_star) os << "lambda*: " << *report.lambda_star << "\n";
    if (report.penalty) os << "penalty: " << *report.penalty << "\n";
    if (report.risk_allocations) {
        os << "risk allocations:";
        for (double r : *report.risk_allocations) os << " " << r;
        os << "\n";
    }
    os << "allocation (bank x scenario):\n";
    for (std::size_t n = 0; n < report.allocation.rows(); ++n) {
        os << "  Y" << (n + 1) << ":";
        for (double y : report.allocation.row(n)) os << " " << y;
        os << "\n";
    }
    if (report.dual_densities) {
        os << "dual densities (group x scenario):\n";
        for (std::size_t m = 0; m < report.dual_densities->densities.rows(); ++m) {
            os << "  Q" << (m + 1) << ":";
            for (double xi : report.dual_densities->row(m)) os << " " << xi;
            os << "\n";
        }
    }
    os << "residuals: budget " << report.residuals.budget << ", clearing "
       << report.residuals.clearing;
    if (report.residuals.duality_gap) os << ", duality_gap " << *report.residuals.duality_gap;
    if (report.residuals.full_allocation)
        os << ", full_allocation " << *report.residuals.full_allocation;
    if (report.residuals.cross_method)
        os << ", cross_method " << *report.residuals.cross_method;
    os << "\n";
    return os.str();
}

void emit_report(const RiskReport& report, const std::string& path,
                 const std::string& format) {
    std::string body;
    if (format == "json")
        body = report_to_json(report);
    else if (format == "text")
        body = report_to_text(report);
    else
        throw Error(ErrorCode::BadConfig, "unknown format '" + format + "'");
    std::ofstream output(path, std::ios::binary);
    if (!output) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
    output << body;
    if (!output) throw Error(ErrorCode::IoError, "write failed for '" + path + "'");
}

void emit_sensitivity_table(const Model& model, const Matrix& direction_values,
                            const std::string& out_path, double fd_eps) {
    const Direction direction = make_direction(model, direction_values);
    const SensitivityReport report = allocation_sensitivities(model, direction, fd_eps);
    std::ofstream output(out_path, std::ios::binary);
    if (!output) throw Error(ErrorCode::IoError, "cannot write '" + out_path + "'");
    output << std::setprecision(12);
    output << "name\tanalytic\tfinite_difference\tabs_mismatch\n";
    for (const FdEntry& entry : report.fd_residuals)
        output << entry.name << "\t" << entry.analytic << "\t" << entry.finite_difference
               << "\t" << entry.mismatch << "\n";
    if (!output) throw Error(ErrorCode::IoError, "write failed for '" + out_path + "'");
}

} // namespace sysrisk
