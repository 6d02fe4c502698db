#include "eqport/coeffs.hpp"

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace eqport {

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty() && cell.back() == '\r') {
            cell.pop_back();
        }
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

double parse_cell(const std::string& s, std::size_t row)
{
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "bad number '" + s + "' in row " + std::to_string(row));
    }
}

} // namespace

void write_coefficients_csv(std::ostream& os, const CoefficientCurves& c, const ScalarCurve& residual)
{
    const auto& g = c.grid();
    const auto d = c.alpha[0].size();
    os << "s,M,N,Gamma,Phi";
    for (Eigen::Index j = 0; j < d; ++j) {
        os << ",alpha_" << (j + 1);
    }
    os << ",lambda,residual\n";
    const auto old_flags = os.flags();
    const auto old_prec = os.precision();
    os << std::setprecision(17);
    for (std::size_t i = 0; i < g.size(); ++i) {
        os << g[i] << ',' << c.M[i] << ',';
        if (c.N) {
            os << (*c.N)[i];
        }
        os << ',' << c.Gamma[i] << ',';
        if (c.Phi) {
            os << (*c.Phi)[i];
        }
        for (Eigen::Index j = 0; j < d; ++j) {
            os << ',' << c.alpha[i](j);
        }
        os << ',';
        if (c.lambda) {
            os << (*c.lambda)[i];
        }
        os << ',' << residual[i] << '\n';
    }
    os.flags(old_flags);
    os.precision(old_prec);
}

CoefficientTable read_coefficients_csv(std::istream& is, Utility utility)
{
    std::string line;
    if (!std::getline(is, line)) {
        throw Error(ErrorCode::ParseError, "empty coefficient file");
    }
    const auto header = split_csv(line);
    if (header.size() < 8 || header[0] != "s" || header[1] != "M" || header[2] != "N" || header[3] != "Gamma"
        || header[4] != "Phi" || header[header.size() - 2] != "lambda" || header.back() != "residual") {
        throw Error(ErrorCode::ParseError, "unexpected coefficient header: " + line);
    }
    const std::size_t d = header.size() - 7;
    for (std::size_t j = 0; j < d; ++j) {
        if (header[5 + j] != "alpha_" + std::to_string(j + 1)) {
            throw Error(ErrorCode::ParseError, "unexpected column " + header[5 + j]);
        }
    }

    std::vector<double> s;
    std::vector<double> m;
    std::vector<double> n;
    std::vector<double> gamma;
    std::vector<double> phi;
    std::vector<double> lambda;
    std::vector<double> res;
    std::vector<Eigen::VectorXd> alpha;
    bool has_n = true;
    bool has_phi = true;
    bool has_lambda = true;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw Error(ErrorCode::ParseError, "row " + std::to_string(row) + " has " + std::to_string(cells.size())
                                                   + " cells, expected " + std::to_string(header.size()));
        }
        s.push_back(parse_cell(cells[0], row));
        m.push_back(parse_cell(cells[1], row));
        has_n = has_n && !cells[2].empty();
        n.push_back(cells[2].empty() ? 0.0 : parse_cell(cells[2], row));
        gamma.push_back(parse_cell(cells[3], row));
        has_phi = has_phi && !cells[4].empty();
        phi.push_back(cells[4].empty() ? 0.0 : parse_cell(cells[4], row));
        Eigen::VectorXd a(static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < d; ++j) {
            a(static_cast<Eigen::Index>(j)) = parse_cell(cells[5 + j], row);
        }
        alpha.push_back(std::move(a));
        has_lambda = has_lambda && !cells[5 + d].empty();
        lambda.push_back(cells[5 + d].empty() ? 0.0 : parse_cell(cells[5 + d], row));
        res.push_back(parse_cell(cells[6 + d], row));
    }

    CoefficientTable t;
    CoefficientCurves& c = t.curves;
    c.utility = utility;
    c.M = ScalarCurve(s, m);
    c.Gamma = ScalarCurve(s, gamma);
    if (has_n) {
        c.N = ScalarCurve(s, n);
    }
    if (has_phi) {
        c.Phi = ScalarCurve(s, phi);
    }
    if (has_lambda) {
        c.lambda = ScalarCurve(s, lambda);
    }
    c.alpha = VectorCurve(s, alpha);
    t.residual = ScalarCurve(s, res);

    const bool needs_n = utility == Utility::Cubic || utility == Utility::Quartic;
    if (needs_n && !c.N) {
        throw Error(ErrorCode::ParseError, "column N is required for " + std::string(utility_name(utility)));
    }
    if (utility == Utility::Quartic && !c.Phi) {
        throw Error(ErrorCode::ParseError, "column Phi is required for quartic");
    }
    if (utility == Utility::Quadratic && !c.lambda) {
        throw Error(ErrorCode::ParseError, "column lambda is required for quadratic");
    }
    if (needs_n && d != 1) {
        throw Error(ErrorCode::ParseError, "power utilities carry a single alpha column");
    }

    std::vector<double> cons(s.size(), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double a = alpha[i](0);
        if (utility == Utility::Cubic) {
            cons[i] = -(1.0 + 2.0 * a) * m[i] + (1.0 + a) * n[i] - gamma[i];
        } else if (utility == Utility::Quartic) {
            cons[i] = (1.0 + 3.0 * a) * m[i] - (1.0 + 2.0 * a) * n[i] + (1.0 + a) * gamma[i] - phi[i];
        }
    }
    c.consistency = ScalarCurve(s, std::move(cons));
    c.r_hat = ScalarCurve(s, std::vector<double>(s.size(), 0.0));
    return t;
}

} // namespace eqport
