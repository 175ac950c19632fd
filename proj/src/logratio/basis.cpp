#include "coda/logratio/basis.hpp"

#include "coda/errors.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace coda {

namespace {

void require_parts(const std::vector<std::string>& parts) {
    if (parts.size() < 2)
        throw parameter_error("a basis needs at least 2 parts");
    std::unordered_set<std::string> seen;
    for (const auto& p : parts)
        if (!seen.insert(p).second)
            throw parameter_error("duplicate part name '" + p + "'");
}

Eigen::Index index_of(const std::vector<std::string>& parts, const std::string& name) {
    for (size_t j = 0; j < parts.size(); ++j)
        if (parts[j] == name)
            return static_cast<Eigen::Index>(j);
    throw lookup_error("unknown part '" + name + "'");
}

std::string join_parts(const std::vector<std::string>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i)
            s += '.';
        s += v[i];
    }
    return s;
}

} // namespace

LogRatioBasis alr_basis(const std::vector<std::string>& parts, const std::string& denominator) {
    require_parts(parts);
    const auto d = static_cast<Eigen::Index>(parts.size());
    const Eigen::Index den = index_of(parts, denominator);
    LogRatioBasis b;
    b.kind = BasisKind::kAlr;
    b.part_names = parts;
    b.denominator_index = den;
    b.q_matrix = Eigen::MatrixXd::Zero(d - 1, d);
    Eigen::Index row = 0;
    for (Eigen::Index j = 0; j < d; ++j) {
        if (j == den)
            continue;
        b.q_matrix(row, j) = 1.0;
        b.q_matrix(row, den) = -1.0;
        b.coordinate_names.push_back(parts[static_cast<size_t>(j)] + "/" + denominator);
        ++row;
    }
    return b;
}

LogRatioBasis clr_basis(const std::vector<std::string>& parts) {
    require_parts(parts);
    const auto d = static_cast<Eigen::Index>(parts.size());
    LogRatioBasis b;
    b.kind = BasisKind::kClr;
    b.part_names = parts;
    b.q_matrix = Eigen::MatrixXd::Constant(d, d, -1.0 / static_cast<double>(d));
    b.q_matrix.diagonal().array() += 1.0;
    for (const auto& p : parts)
        b.coordinate_names.push_back(p + "/gmean");
    return b;
}

LogRatioBasis ilr_basis(const std::vector<std::string>& parts) {
    return ilr_basis(parts, parts);
}

LogRatioBasis ilr_basis(const std::vector<std::string>& parts,
                        const std::vector<std::string>& pivot_order) {
    require_parts(parts);
    if (pivot_order.size() != parts.size())
        throw parameter_error("pivot order must list every part exactly once");
    std::vector<Eigen::Index> order;
    order.reserve(pivot_order.size());
    std::unordered_set<std::string> seen;
    for (const auto& p : pivot_order) {
        if (!seen.insert(p).second)
            throw parameter_error("pivot order repeats part '" + p + "'");
        order.push_back(index_of(parts, p));
    }
    const auto d = static_cast<Eigen::Index>(parts.size());
    LogRatioBasis b;
    b.kind = BasisKind::kIlr;
    b.part_names = parts;
    b.q_matrix = Eigen::MatrixXd::Zero(d - 1, d);
    for (Eigen::Index j = 0; j < d - 1; ++j) {
        const double tail = static_cast<double>(d - 1 - j); // parts after the pivot
        const double a = std::sqrt(tail / (tail + 1.0));
        b.q_matrix(j, order[static_cast<size_t>(j)]) = a;
        for (Eigen::Index t = j + 1; t < d; ++t)
            b.q_matrix(j, order[static_cast<size_t>(t)]) = -a / tail;
        b.coordinate_names.push_back("pivot_" + std::to_string(j + 1));
    }
    return b;
}

LogRatioBasis ilr_basis(const std::vector<std::string>& parts,
                        const std::vector<ContrastNode>& tree) {
    require_parts(parts);
    const auto d = static_cast<Eigen::Index>(parts.size());
    if (static_cast<Eigen::Index>(tree.size()) != d - 1)
        throw parameter_error("a contrast tree for " + std::to_string(d) + " parts needs " +
                              std::to_string(d - 1) + " nodes, got " +
                              std::to_string(tree.size()));
    LogRatioBasis b;
    b.kind = BasisKind::kIlr;
    b.part_names = parts;
    b.q_matrix = Eigen::MatrixXd::Zero(d - 1, d);
    for (size_t node = 0; node < tree.size(); ++node) {
        const auto& [num, den] = tree[node];
        if (num.empty() || den.empty())
            throw parameter_error("contrast node " + std::to_string(node + 1) +
                                  " has an empty side");
        std::unordered_set<std::string> in_node;
        for (const auto& p : num)
            if (!in_node.insert(p).second)
                throw parameter_error("contrast node " + std::to_string(node + 1) +
                                      " repeats part '" + p + "'");
        for (const auto& p : den)
            if (!in_node.insert(p).second)
                throw parameter_error("contrast node " + std::to_string(node + 1) +
                                      " repeats part '" + p + "'");
        const double r = static_cast<double>(num.size());
        const double s = static_cast<double>(den.size());
        const double a = std::sqrt(r * s / (r + s));
        const auto row = static_cast<Eigen::Index>(node);
        for (const auto& p : num)
            b.q_matrix(row, index_of(parts, p)) = a / r;
        for (const auto& p : den)
            b.q_matrix(row, index_of(parts, p)) = -a / s;
        b.coordinate_names.push_back(join_parts(num) + "/" + join_parts(den));
    }
    const Eigen::MatrixXd gram = b.q_matrix * b.q_matrix.transpose();
    if ((gram - Eigen::MatrixXd::Identity(d - 1, d - 1)).cwiseAbs().maxCoeff() > 1e-10)
        throw parameter_error("contrast tree is not a sequential binary partition "
                              "(rows are not orthonormal)");
    return b;
}

Eigen::MatrixXd transform(const CompositionMatrix& m, const LogRatioBasis& basis) {
    if (m.part_names() != basis.part_names)
        throw inconsistency_error("composition parts do not match the basis parts");
    if (!m.strictly_positive())
        throw domain_error("log-ratio transforms need strictly positive entries; "
                           "run zero replacement first");
    return m.values().array().log().matrix() * basis.q_matrix.transpose();
}

CompositionMatrix inverse_transform(const Eigen::MatrixXd& coords, const LogRatioBasis& basis,
                                    std::vector<std::string> sample_ids) {
    const auto d = static_cast<Eigen::Index>(basis.part_names.size());
    const auto m = basis.q_matrix.rows();
    if (coords.cols() != m)
        throw parameter_error("coordinate matrix has " + std::to_string(coords.cols()) +
                              " columns, basis expects " + std::to_string(m));
    const auto n = coords.rows();
    if (sample_ids.empty())
        for (Eigen::Index i = 0; i < n; ++i)
            sample_ids.push_back(std::to_string(i + 1));

    Eigen::MatrixXd logv(n, d);
    switch (basis.kind) {
    case BasisKind::kAlr: {
        Eigen::Index row = 0;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (j == basis.denominator_index) {
                logv.col(j).setZero();
                continue;
            }
            logv.col(j) = coords.col(row);
            ++row;
        }
        break;
    }
    case BasisKind::kClr: {
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::abs(coords.row(i).sum()) > 1e-8)
                throw inconsistency_error("CLR coordinates in row " + std::to_string(i + 1) +
                                          " do not sum to zero");
        logv = coords;
        break;
    }
    case BasisKind::kIlr:
        // rows are orthonormal, so Q^T maps coordinates to CLR values
        logv = coords * basis.q_matrix;
        break;
    }

    Eigen::MatrixXd values(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        // subtract the row max before exponentiating to dodge overflow;
        // closure removes the constant again
        const double shift = logv.row(i).maxCoeff();
        values.row(i) = (logv.row(i).array() - shift).exp();
    }
    return close(values, basis.part_names, std::move(sample_ids));
}

} // namespace coda
