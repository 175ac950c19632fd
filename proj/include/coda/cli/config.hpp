#pragma once

#include "coda/composition.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace coda::cli {

struct CovariateSpec {
    std::string column;
    bool categorical = false;
    std::string reference_level; // categorical only; empty = lowest level
};

struct BootstrapConfig {
    bool enabled = true;
    int replicates = 10000;
    std::optional<std::uint64_t> seed;
    int threads = 1; // 0 = hardware concurrency
};

struct AnalysisConfig {
    std::filesystem::path input;
    std::optional<std::string> id_column;
    std::vector<std::string> part_columns;
    std::vector<CovariateSpec> covariates;

    int zero_replacement_k = 5;
    bool pre_imputed = false; // input is already strictly positive

    WeightsMode weights_mode = WeightsMode::kAverage;
    std::vector<double> explicit_weights;

    std::string alr_denominator = "auto"; // "auto" = best-ranked part
    std::string basis = "alr";            // alr | clr | ilr
    Eigen::Index lra_rank = 2;

    std::vector<std::string> subcomposition_parts; // empty = all parts
    std::vector<std::string> slr_numerator;
    std::vector<std::string> slr_denominator;
    std::vector<std::string> dirichlet_covariates; // empty = all covariates

    BootstrapConfig bootstrap;

    std::filesystem::path output_dir = ".";
    bool emit_json = true;
    bool emit_csv = true;
    bool emit_svg = false;
};

} // namespace coda::cli
