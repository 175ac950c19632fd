#pragma once

#include "coda/cli/config.hpp"
#include "coda/composition.hpp"
#include "coda/logratio/regression.hpp"

#include <map>
#include <string>
#include <vector>

namespace coda::cli {

struct IngestReport {
    Eigen::Index n_samples = 0;
    Eigen::Index n_parts = 0;
    std::vector<std::pair<std::string, Eigen::Index>> zero_counts; // per part
    Eigen::Index zero_total = 0;
    bool percent_scale = false; // raw rows summed to ~100
    std::vector<std::string> excluded_rows; // sample id + reason
};

struct Ingested {
    CompositionMatrix composition;
    DesignMatrix design;
    IngestReport report;
    // raw level strings per categorical covariate, aligned with the rows
    std::map<std::string, std::vector<std::string>> categorical_labels;
};

/// Read the CSV, close the part columns into a composition, and encode the
/// covariates (categoricals become dummies against the reference level).
/// Rows with missing or non-finite covariates are excluded with a warning
/// in the report.
Ingested ingest_csv(const std::filesystem::path& path, const AnalysisConfig& config);

} // namespace coda::cli
