#include "coda/cli/ingest.hpp"

#include "coda/errors.hpp"
#include "coda/io/csv.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

namespace coda::cli {

namespace {

bool missing_cell(std::string cell) {
    for (auto& c : cell)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    cell.erase(std::remove_if(cell.begin(), cell.end(),
                              [](char c) { return c == ' ' || c == '\t'; }),
               cell.end());
    return cell.empty() || cell == "na" || cell == "nan" || cell == "null";
}

} // namespace

Ingested ingest_csv(const std::filesystem::path& path, const AnalysisConfig& config) {
    if (config.part_columns.size() < 2)
        throw parameter_error("at least 2 part columns are required");
    const io::CsvTable table = io::read_csv(path);
    if (table.rows.empty())
        throw degenerate_data_error("'" + path.string() + "' has a header but no data rows");

    std::vector<Eigen::Index> part_cols;
    for (const auto& p : config.part_columns)
        part_cols.push_back(table.column(p));
    std::vector<Eigen::Index> cov_cols;
    for (const auto& c : config.covariates)
        cov_cols.push_back(table.column(c.column));
    const Eigen::Index id_col = config.id_column ? table.column(*config.id_column) : -1;

    struct Row {
        std::string id;
        std::vector<double> parts;
        std::vector<std::string> covariates; // raw cells, parsed after level scan
    };
    IngestReport report;
    std::vector<Row> kept;
    for (size_t r = 0; r < table.rows.size(); ++r) {
        const auto& cells = table.rows[r];
        Row row;
        row.id = id_col >= 0 ? cells[static_cast<size_t>(id_col)] : std::to_string(r + 1);

        bool exclude = false;
        std::string reason;
        for (size_t j = 0; j < part_cols.size() && !exclude; ++j) {
            const auto& cell = cells[static_cast<size_t>(part_cols[j])];
            const double v = io::parse_double(cell, r + 1, config.part_columns[j]);
            if (!std::isfinite(v)) {
                exclude = true;
                reason = "non-finite value in part '" + config.part_columns[j] + "'";
            }
            row.parts.push_back(v);
        }
        for (size_t j = 0; j < cov_cols.size() && !exclude; ++j) {
            const auto& spec = config.covariates[j];
            const auto& cell = cells[static_cast<size_t>(cov_cols[j])];
            if (missing_cell(cell)) {
                exclude = true;
                reason = "missing covariate '" + spec.column + "'";
                break;
            }
            if (!spec.categorical) {
                const double v = io::parse_double(cell, r + 1, spec.column);
                if (!std::isfinite(v)) {
                    exclude = true;
                    reason = "non-finite covariate '" + spec.column + "'";
                }
            }
            row.covariates.push_back(cell);
        }
        if (exclude)
            report.excluded_rows.push_back(row.id + ": " + reason);
        else
            kept.push_back(std::move(row));
    }
    if (kept.empty())
        throw degenerate_data_error("every row was excluded; nothing to analyze");

    const auto n = static_cast<Eigen::Index>(kept.size());
    const auto d = static_cast<Eigen::Index>(part_cols.size());
    Eigen::MatrixXd raw(n, d);
    std::vector<std::string> ids;
    for (Eigen::Index i = 0; i < n; ++i) {
        ids.push_back(kept[static_cast<size_t>(i)].id);
        for (Eigen::Index j = 0; j < d; ++j)
            raw(i, j) = kept[static_cast<size_t>(i)].parts[static_cast<size_t>(j)];
    }
    double median_sum = 0.0;
    {
        std::vector<double> sums(static_cast<size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i)
            sums[static_cast<size_t>(i)] = raw.row(i).sum();
        std::sort(sums.begin(), sums.end());
        median_sum = sums[sums.size() / 2];
    }
    report.percent_scale = median_sum > 50.0;

    Eigen::VectorXd explicit_w;
    if (config.weights_mode == WeightsMode::kExplicit) {
        if (static_cast<Eigen::Index>(config.explicit_weights.size()) != d)
            throw parameter_error("explicit weights must list one value per part");
        explicit_w = Eigen::Map<const Eigen::VectorXd>(config.explicit_weights.data(), d);
    }

    // design: intercept, then covariates in declared order
    std::vector<std::string> names{"intercept"};
    std::vector<CovariateGroup> groups;
    std::map<std::string, std::map<std::string, double>> encodings;
    std::vector<Eigen::VectorXd> columns;
    for (size_t j = 0; j < config.covariates.size(); ++j) {
        const auto& spec = config.covariates[j];
        if (!spec.categorical) {
            Eigen::VectorXd col(n);
            for (Eigen::Index i = 0; i < n; ++i)
                col(i) = io::parse_double(kept[static_cast<size_t>(i)].covariates[j], 0,
                                          spec.column);
            groups.push_back({spec.column,
                              {static_cast<Eigen::Index>(names.size())}});
            names.push_back(spec.column);
            columns.push_back(std::move(col));
            continue;
        }
        std::set<std::string> levels;
        for (const auto& row : kept)
            levels.insert(row.covariates[j]);
        if (levels.size() < 2)
            throw degenerate_data_error("covariate '" + spec.column +
                                        "' has a single level; nothing to contrast");
        std::string reference = spec.reference_level;
        if (reference.empty())
            reference = *levels.begin();
        else if (!levels.count(reference))
            throw lookup_error("reference level '" + reference + "' not found in '" +
                               spec.column + "'");
        encodings[spec.column][reference] = 0.0;
        CovariateGroup group{spec.column, {}};
        double code = 1.0;
        for (const auto& level : levels) {
            if (level == reference)
                continue;
            Eigen::VectorXd col(n);
            for (Eigen::Index i = 0; i < n; ++i)
                col(i) = kept[static_cast<size_t>(i)].covariates[j] == level ? 1.0 : 0.0;
            encodings[spec.column][level] = code;
            code += 1.0;
            group.columns.push_back(static_cast<Eigen::Index>(names.size()));
            names.push_back(levels.size() == 2 ? spec.column : spec.column + "=" + level);
            columns.push_back(std::move(col));
        }
        groups.push_back(std::move(group));
    }
    Eigen::MatrixXd design(n, static_cast<Eigen::Index>(columns.size()) + 1);
    design.col(0).setOnes();
    for (size_t j = 0; j < columns.size(); ++j)
        design.col(static_cast<Eigen::Index>(j) + 1) = columns[j];

    Ingested out{close(raw, config.part_columns, ids, config.weights_mode, explicit_w),
                 make_design(std::move(design), std::move(names), std::move(groups),
                             std::move(encodings)),
                 std::move(report),
                 {}};
    for (size_t j = 0; j < config.covariates.size(); ++j) {
        if (!config.covariates[j].categorical)
            continue;
        auto& labels = out.categorical_labels[config.covariates[j].column];
        for (const auto& row : kept)
            labels.push_back(row.covariates[j]);
    }
    out.report.n_samples = out.composition.n_samples();
    out.report.n_parts = out.composition.n_parts();
    out.report.zero_total = 0;
    for (Eigen::Index j = 0; j < out.composition.n_parts(); ++j) {
        const auto zeros = (out.composition.values().col(j).array() == 0.0).count();
        out.report.zero_counts.emplace_back(out.composition.part_names()[static_cast<size_t>(j)],
                                            zeros);
        out.report.zero_total += zeros;
    }
    return out;
}

} // namespace coda::cli
