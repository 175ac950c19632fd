#include "coda/cli/run.hpp"

#include "coda/cli/pipeline.hpp"
#include "coda/errors.hpp"
#include "coda/numerics/optimize.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <set>
#include <string>
#include <vector>

namespace coda::cli {

namespace {

struct RawOptions {
    std::string input;
    std::string id_column;
    std::vector<std::string> parts;
    std::vector<std::string> numeric;
    std::vector<std::string> categorical; // NAME or NAME=REFERENCE
    int impute_k = 5;
    bool pre_imputed = false;
    std::string weights = "average";
    std::vector<double> part_weights;
    std::string denominator = "auto";
    std::string basis = "alr";
    int lra_rank = 2;
    std::vector<std::string> subcomposition;
    std::vector<std::string> slr_numerator;
    std::vector<std::string> slr_denominator;
    std::vector<std::string> dirichlet_covariates;
    int bootstrap_replicates = 10000;
    bool no_bootstrap = false;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string output_dir;
    std::vector<std::string> formats = {"json", "csv"};
};

std::string default_output_dir() {
    const char* env = std::getenv("CODA_OUTPUT_DIR");
    return env && *env ? env : ".";
}

void add_common_options(CLI::App& sub, RawOptions& raw) {
    sub.add_option("-i,--input", raw.input, "input CSV file")->required();
    sub.add_option("--id-column", raw.id_column, "column holding sample identifiers");
    sub.add_option("-p,--parts", raw.parts, "composition part columns")
        ->required()
        ->delimiter(',');
    sub.add_option("--numeric", raw.numeric, "numeric covariate column (repeatable)")
        ->delimiter(',');
    sub.add_option("--categorical", raw.categorical,
                   "categorical covariate column, NAME or NAME=REFERENCE (repeatable)")
        ->delimiter(',');
    sub.add_option("--impute-k", raw.impute_k, "donor count for zero replacement")
        ->capture_default_str();
    sub.add_flag("--pre-imputed", raw.pre_imputed, "input is already strictly positive");
    sub.add_option("--weights", raw.weights, "part weights: average, uniform or explicit")
        ->capture_default_str();
    sub.add_option("--part-weights", raw.part_weights,
                   "explicit part weights (with --weights explicit)")
        ->delimiter(',');
    sub.add_option("--denominator", raw.denominator,
                   "ALR denominator part, or auto to pick the best-ranked one")
        ->capture_default_str();
    sub.add_option("--basis", raw.basis, "regression basis: alr, clr or ilr")
        ->capture_default_str();
    sub.add_option("--lra-rank", raw.lra_rank, "dimensions kept in the log-ratio analysis")
        ->capture_default_str();
    sub.add_option("--subcomposition", raw.subcomposition,
                   "restrict the analysis to these parts")
        ->delimiter(',');
    sub.add_option("--slr-numerator", raw.slr_numerator, "numerator parts of the summated ratio")
        ->delimiter(',');
    sub.add_option("--slr-denominator", raw.slr_denominator,
                   "denominator parts of the summated ratio")
        ->delimiter(',');
    sub.add_option("--dirichlet-covariates", raw.dirichlet_covariates,
                   "covariates for the Dirichlet model (default: all)")
        ->delimiter(',');
    sub.add_option("--bootstrap", raw.bootstrap_replicates, "bootstrap replicate count")
        ->capture_default_str();
    sub.add_flag("--no-bootstrap", raw.no_bootstrap, "skip bootstrap intervals");
    sub.add_option("--seed", raw.seed, "random seed (required when the bootstrap runs)");
    sub.add_option("--threads", raw.threads, "bootstrap worker threads, 0 = all cores")
        ->capture_default_str();
    sub.add_option("-o,--output-dir", raw.output_dir,
                   "output directory (default: CODA_OUTPUT_DIR or .)");
    sub.add_option("--formats", raw.formats, "outputs to write: json, csv, svg")
        ->delimiter(',');
}

AnalysisConfig build_config(const CLI::App& sub, const RawOptions& raw) {
    AnalysisConfig cfg;
    cfg.input = raw.input;
    if (!raw.id_column.empty())
        cfg.id_column = raw.id_column;
    cfg.part_columns = raw.parts;
    for (const auto& name : raw.numeric)
        cfg.covariates.push_back({name, false, ""});
    for (const auto& item : raw.categorical) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            cfg.covariates.push_back({item, true, ""});
        else
            cfg.covariates.push_back({item.substr(0, eq), true, item.substr(eq + 1)});
    }
    if (raw.impute_k < 1)
        throw parameter_error("--impute-k must be at least 1");
    cfg.zero_replacement_k = raw.impute_k;
    cfg.pre_imputed = raw.pre_imputed;
    if (raw.weights == "average")
        cfg.weights_mode = WeightsMode::kAverage;
    else if (raw.weights == "uniform")
        cfg.weights_mode = WeightsMode::kUniform;
    else if (raw.weights == "explicit")
        cfg.weights_mode = WeightsMode::kExplicit;
    else
        throw parameter_error("--weights must be average, uniform or explicit");
    cfg.explicit_weights = raw.part_weights;
    if (cfg.weights_mode == WeightsMode::kExplicit && cfg.explicit_weights.empty())
        throw parameter_error("--weights explicit needs --part-weights");
    cfg.alr_denominator = raw.denominator;
    cfg.basis = raw.basis;
    if (raw.lra_rank < 1)
        throw parameter_error("--lra-rank must be at least 1");
    cfg.lra_rank = raw.lra_rank;
    cfg.subcomposition_parts = raw.subcomposition;
    cfg.slr_numerator = raw.slr_numerator;
    cfg.slr_denominator = raw.slr_denominator;
    cfg.dirichlet_covariates = raw.dirichlet_covariates;
    if (raw.bootstrap_replicates < 0)
        throw parameter_error("--bootstrap must be non-negative");
    cfg.bootstrap.enabled = !raw.no_bootstrap && raw.bootstrap_replicates > 0;
    cfg.bootstrap.replicates = raw.bootstrap_replicates;
    if (sub.count("--seed"))
        cfg.bootstrap.seed = raw.seed;
    if (raw.threads < 0)
        throw parameter_error("--threads must be non-negative");
    cfg.bootstrap.threads = raw.threads;
    cfg.output_dir = raw.output_dir.empty() ? default_output_dir() : raw.output_dir;
    cfg.emit_json = cfg.emit_csv = cfg.emit_svg = false;
    for (const auto& f : raw.formats) {
        if (f == "json")
            cfg.emit_json = true;
        else if (f == "csv")
            cfg.emit_csv = true;
        else if (f == "svg")
            cfg.emit_svg = true;
        else
            throw parameter_error("unknown output format '" + f + "'");
    }
    return cfg;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"compositional data analysis: log-ratio and Dirichlet regression"};
    app.require_subcommand(1);

    RawOptions raw;
    raw.output_dir.clear();

    std::vector<std::pair<CLI::App*, std::string>> subs;
    for (const auto& stage : pipeline_stages()) {
        CLI::App* sub = app.add_subcommand(stage, "run the " + stage + " stage");
        add_common_options(*sub, raw);
        subs.emplace_back(sub, stage);
    }
    CLI::App* full = app.add_subcommand("run", "run every stage");
    add_common_options(*full, raw);
    subs.emplace_back(full, "");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const CLI::App* active = nullptr;
    std::string stage_name;
    for (const auto& [sub, name] : subs)
        if (sub->parsed()) {
            active = sub;
            stage_name = name;
        }

    try {
        const AnalysisConfig cfg = build_config(*active, raw);
        std::set<std::string> stages;
        if (stage_name.empty())
            stages.insert(pipeline_stages().begin(), pipeline_stages().end());
        else
            stages.insert(stage_name);
        run_pipeline(cfg, stages);
        return 0;
    } catch (const schema_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const parse_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const parameter_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const lookup_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}

} // namespace coda::cli
