#include "coda/cli/ingest.hpp"
#include "coda/cli/pipeline.hpp"
#include "coda/cli/run.hpp"
#include "coda/errors.hpp"
#include "coda/io/csv.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace coda;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("coda_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& body) {
    const fs::path p = dir / name;
    std::ofstream f(p, std::ios::binary);
    f << body;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

// 16 samples, 4 parts, one zero cell in row s3, balanced race groups
std::string fixture_csv() {
    return "sample,cd8,cd4,b,macro,race,age\n"
           "s1,0.30,0.25,0.15,0.30,AA,52\n"
           "s2,0.22,0.31,0.12,0.35,EA,61\n"
           "s3,0.18,0.27,0,0.55,AA,47\n"
           "s4,0.35,0.20,0.10,0.35,EA,58\n"
           "s5,0.28,0.22,0.18,0.32,AA,66\n"
           "s6,0.19,0.33,0.14,0.34,EA,41\n"
           "s7,0.26,0.24,0.11,0.39,AA,73\n"
           "s8,0.31,0.18,0.16,0.35,EA,55\n"
           "s9,0.24,0.29,0.13,0.34,AA,62\n"
           "s10,0.21,0.26,0.17,0.36,EA,49\n"
           "s11,0.33,0.21,0.12,0.34,AA,57\n"
           "s12,0.25,0.28,0.15,0.32,EA,64\n"
           "s13,0.29,0.23,0.14,0.34,AA,45\n"
           "s14,0.20,0.30,0.16,0.34,EA,69\n"
           "s15,0.27,0.26,0.13,0.34,AA,53\n"
           "s16,0.23,0.24,0.18,0.35,EA,60\n";
}

cli::AnalysisConfig fixture_config(const fs::path& input, const fs::path& out) {
    cli::AnalysisConfig cfg;
    cfg.input = input;
    cfg.id_column = "sample";
    cfg.part_columns = {"cd8", "cd4", "b", "macro"};
    cfg.covariates = {{"race", true, "EA"}, {"age", false, ""}};
    cfg.zero_replacement_k = 3;
    cfg.bootstrap.replicates = 300;
    cfg.bootstrap.seed = 11;
    cfg.output_dir = out;
    return cfg;
}

std::set<std::string> all_stages() {
    return {cli::pipeline_stages().begin(), cli::pipeline_stages().end()};
}

double csv_cell(const io::CsvTable& t, size_t row, const std::string& col) {
    return io::parse_double(t.rows[row][static_cast<size_t>(t.column(col))], row + 1, col);
}

int cli_exit(std::initializer_list<std::string> args) {
    std::vector<std::string> owned{"coda"};
    owned.insert(owned.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : owned)
        argv.push_back(a.c_str());
    return cli::run_cli(static_cast<int>(argv.size()), argv.data());
}

} // namespace

TEST_CASE("ingest encodes covariates and reports zeros") {
    const fs::path dir = fresh_dir("ingest_basic");
    const fs::path input = write_file(dir, "cells.csv", fixture_csv());
    const cli::AnalysisConfig cfg = fixture_config(input, dir / "out");

    const cli::Ingested got = cli::ingest_csv(input, cfg);
    CHECK(got.report.n_samples == 16);
    CHECK(got.report.n_parts == 4);
    CHECK(got.report.zero_total == 1);
    CHECK_FALSE(got.report.percent_scale);
    CHECK(got.report.excluded_rows.empty());

    // part "b" has the single zero
    for (const auto& [part, count] : got.report.zero_counts)
        CHECK(count == (part == "b" ? 1 : 0));

    CHECK(got.composition.sample_ids()[2] == "s3");
    CHECK((got.composition.values().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);

    REQUIRE(got.design.covariate_names.size() == 3);
    CHECK(got.design.covariate_names[0] == "intercept");
    CHECK(got.design.covariate_names[1] == "race"); // two levels: one dummy, plain name
    CHECK(got.design.covariate_names[2] == "age");
    CHECK(got.design.values(0, 1) == 1.0);
    CHECK(got.design.values(1, 1) == 0.0);
    CHECK(got.design.values(0, 2) == 52.0);
    CHECK(got.categorical_labels.at("race")[0] == "AA");
}

TEST_CASE("ingest closes percent-scale rows and flags them") {
    const fs::path dir = fresh_dir("ingest_percent");
    const fs::path input = write_file(dir, "pct.csv",
                                      "id,a,b,c\n"
                                      "r1,50,30,20\n"
                                      "r2,10,45,45\n"
                                      "r3,25,25,50\n");
    cli::AnalysisConfig cfg;
    cfg.input = input;
    cfg.id_column = "id";
    cfg.part_columns = {"a", "b", "c"};
    const cli::Ingested got = cli::ingest_csv(input, cfg);
    CHECK(got.report.percent_scale);
    CHECK((got.composition.values().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(got.composition.values()(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ingest excludes rows with unusable covariates and says why") {
    const fs::path dir = fresh_dir("ingest_exclude");
    const fs::path input = write_file(dir, "gap.csv",
                                      "id,a,b,race,age\n"
                                      "r1,0.5,0.5,AA,50\n"
                                      "r2,0.4,0.6,EA,\n"
                                      "r3,0.3,0.7,AA,61\n"
                                      "r4,0.2,0.8,EA,58\n"
                                      "r5,0.6,0.4,,44\n"
                                      "r6,0.7,0.3,EA,39\n");
    cli::AnalysisConfig cfg;
    cfg.input = input;
    cfg.id_column = "id";
    cfg.part_columns = {"a", "b"};
    cfg.covariates = {{"race", true, ""}, {"age", false, ""}};
    const cli::Ingested got = cli::ingest_csv(input, cfg);
    CHECK(got.report.n_samples == 4);
    REQUIRE(got.report.excluded_rows.size() == 2);
    CHECK(got.report.excluded_rows[0].find("r2") != std::string::npos);
    CHECK(got.report.excluded_rows[0].find("age") != std::string::npos);
    CHECK(got.report.excluded_rows[1].find("r5") != std::string::npos);
    CHECK(got.composition.sample_ids() ==
          std::vector<std::string>{"r1", "r3", "r4", "r6"});
}

TEST_CASE("ingest reports precise parse and schema failures") {
    const fs::path dir = fresh_dir("ingest_errors");
    cli::AnalysisConfig cfg;
    cfg.id_column = "id";
    cfg.part_columns = {"a", "b"};

    const fs::path bad_cell = write_file(dir, "bad.csv",
                                         "id,a,b\nr1,0.5,0.5\nr2,oops,0.6\n");
    cfg.input = bad_cell;
    try {
        cli::ingest_csv(bad_cell, cfg);
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(e.row == 2);
        CHECK(e.column == "a");
    }

    const fs::path header_only = write_file(dir, "empty.csv", "id,a,b\n");
    cfg.input = header_only;
    CHECK_THROWS_AS(cli::ingest_csv(header_only, cfg), degenerate_data_error);

    const fs::path missing = write_file(dir, "missing.csv", "id,a\nr1,1\n");
    cfg.input = missing;
    CHECK_THROWS_AS(cli::ingest_csv(missing, cfg), schema_error);

    cfg.input = bad_cell;
    cfg.part_columns = {"a", "b"};
    cfg.covariates = {{"race", true, ""}};
    CHECK_THROWS_AS(cli::ingest_csv(bad_cell, cfg), schema_error);

    const fs::path ok = write_file(dir, "ok.csv",
                                   "id,a,b,race\nr1,0.5,0.5,AA\nr2,0.4,0.6,EA\n");
    cfg.input = ok;
    cfg.covariates = {{"race", true, "ZZ"}};
    CHECK_THROWS_AS(cli::ingest_csv(ok, cfg), lookup_error);
}

TEST_CASE("full pipeline emits matching csv and json tables") {
    const fs::path dir = fresh_dir("pipeline_full");
    const fs::path input = write_file(dir, "cells.csv", fixture_csv());
    cli::AnalysisConfig cfg = fixture_config(input, dir / "out");
    cfg.slr_numerator = {"cd8", "cd4"};
    cfg.slr_denominator = {"macro"};

    const ordered_json report = cli::run_pipeline(cfg, all_stages());
    CHECK(report.at("schema_version") == cli::kSchemaVersion);
    CHECK(report.at("ingest").at("n_samples") == 16);

    for (const char* name :
         {"report.json", "imputed.csv", "alr_ranking.csv", "lra_variance.csv",
          "lra_scores.csv", "lra_loadings.csv", "slr_values.csv", "slr_groups.csv",
          "slr_test.csv", "regression_coefficients.csv", "regression_log_contrast.csv",
          "manova.csv", "dirichlet_coefficients.csv", "diagnostics_residuals.csv",
          "diagnostics_influence.csv", "diagnostics_overdispersion.csv",
          "diagnostics_flagged.csv"})
        CHECK_MESSAGE(fs::exists(cfg.output_dir / name), name);

    // the persisted report equals the returned one
    const ordered_json disk = ordered_json::parse(slurp(cfg.output_dir / "report.json"));
    CHECK(disk == report);

    // ranking table: csv text parses to exactly the json numbers
    {
        const io::CsvTable t = io::read_csv(cfg.output_dir / "alr_ranking.csv");
        const auto& j = report.at("rank_alr");
        REQUIRE(t.rows.size() == j.size());
        for (size_t r = 0; r < t.rows.size(); ++r) {
            CHECK(t.rows[r][0] == j[r].at("part").get<std::string>());
            CHECK(csv_cell(t, r, "weight") == j[r].at("weight").get<double>());
            CHECK(csv_cell(t, r, "correlation") == j[r].at("correlation").get<double>());
        }
    }
    // manova table
    {
        const io::CsvTable t = io::read_csv(cfg.output_dir / "manova.csv");
        const auto& j = report.at("manova");
        REQUIRE(t.rows.size() == j.size());
        for (size_t r = 0; r < t.rows.size(); ++r) {
            CHECK(t.rows[r][0] == j[r].at("covariate").get<std::string>());
            CHECK(csv_cell(t, r, "pillai") == j[r].at("pillai").get<double>());
            CHECK(csv_cell(t, r, "approx_f") == j[r].at("approx_f").get<double>());
            CHECK(csv_cell(t, r, "p_value") == j[r].at("p_value").get<double>());
        }
    }
    // dirichlet coefficients: csv rows iterate parts x covariates
    {
        const io::CsvTable t = io::read_csv(cfg.output_dir / "dirichlet_coefficients.csv");
        const auto& j = report.at("dirichlet");
        const auto& beta = j.at("beta");
        const auto& se = j.at("standard_errors");
        const size_t p = j.at("covariates").size();
        REQUIRE(t.rows.size() == beta.size() * p);
        for (size_t r = 0; r < t.rows.size(); ++r) {
            const size_t d = r / p, k = r % p;
            CHECK(csv_cell(t, r, "estimate") == beta[d][k].get<double>());
            CHECK(csv_cell(t, r, "std_error") == se[d][k].get<double>());
        }
        CHECK(j.at("converged").get<bool>());
    }
    // regression coefficients with bootstrap columns
    {
        const io::CsvTable t = io::read_csv(cfg.output_dir / "regression_coefficients.csv");
        const auto& j = report.at("regress");
        const auto& coef = j.at("coefficients");
        const auto& lo = j.at("bootstrap").at("coef_lo");
        const size_t p = j.at("covariates").size();
        REQUIRE(t.rows.size() == coef.size() * p);
        for (size_t r = 0; r < t.rows.size(); ++r) {
            const size_t c = r / p, k = r % p;
            CHECK(csv_cell(t, r, "estimate") == coef[c][k].get<double>());
            CHECK(csv_cell(t, r, "lo95") == lo[c][k].get<double>());
        }
    }
    // slr test statistics
    {
        const io::CsvTable t = io::read_csv(cfg.output_dir / "slr_test.csv");
        REQUIRE(t.rows.size() == 1);
        CHECK(csv_cell(t, 0, "p_value") == report.at("slr").at("p_value").get<double>());
    }
}

TEST_CASE("fixed seed reproduces report.json byte for byte") {
    const fs::path dir = fresh_dir("pipeline_repro");
    const fs::path input = write_file(dir, "cells.csv", fixture_csv());

    cli::AnalysisConfig a = fixture_config(input, dir / "a");
    cli::AnalysisConfig b = fixture_config(input, dir / "b");

    const ordered_json ra = cli::run_pipeline(a, all_stages());
    cli::run_pipeline(b, all_stages());
    std::string ja = slurp(dir / "a" / "report.json");
    std::string jb = slurp(dir / "b" / "report.json");
    // output_dir is recorded in the config block; neutralize that one difference
    const auto pos = ja.find("\"/");
    REQUIRE(pos != std::string::npos);
    ja.replace(ja.find("/a\"", pos), 3, "/b\"");
    CHECK(ja == jb);

    // splitting the bootstrap across threads draws the same replicates
    cli::AnalysisConfig c = fixture_config(input, dir / "c");
    c.bootstrap.threads = 3;
    const ordered_json rc = cli::run_pipeline(c, all_stages());
    CHECK(ra.at("regress").at("bootstrap") == rc.at("regress").at("bootstrap"));
}

TEST_CASE("rerunning from the imputed intermediate matches the full pipeline") {
    const fs::path dir = fresh_dir("pipeline_rerun");
    const fs::path input = write_file(dir, "cells.csv", fixture_csv());
    cli::AnalysisConfig first = fixture_config(input, dir / "full");
    const ordered_json full = cli::run_pipeline(first, all_stages());

    cli::AnalysisConfig second = fixture_config(dir / "full" / "imputed.csv", dir / "redo");
    second.pre_imputed = true;
    const ordered_json redo = cli::run_pipeline(second, all_stages());

    CHECK(redo.at("ingest").at("zero_total") == 0);
    CHECK(redo.at("impute").at("skipped") == true);

    const auto close_enough = [](const ordered_json& x, const ordered_json& y) {
        REQUIRE(x.size() == y.size());
        for (size_t i = 0; i < x.size(); ++i)
            for (size_t k = 0; k < x[i].size(); ++k)
                CHECK(x[i][k].get<double>() ==
                      doctest::Approx(y[i][k].get<double>()).epsilon(1e-12));
    };
    close_enough(full.at("regress").at("coefficients"),
                 redo.at("regress").at("coefficients"));
    close_enough(full.at("regress").at("log_contrast"),
                 redo.at("regress").at("log_contrast"));
    close_enough(full.at("regress").at("bootstrap").at("coef_lo"),
                 redo.at("regress").at("bootstrap").at("coef_lo"));
    close_enough(full.at("dirichlet").at("beta"), redo.at("dirichlet").at("beta"));
    for (size_t r = 0; r < full.at("manova").size(); ++r)
        CHECK(full.at("manova")[r].at("pillai").get<double>() ==
              doctest::Approx(redo.at("manova")[r].at("pillai").get<double>())
                  .epsilon(1e-12));
    CHECK(full.at("lra").at("total_variance").get<double>() ==
          doctest::Approx(redo.at("lra").at("total_variance").get<double>())
              .epsilon(1e-12));
}

TEST_CASE("requesting a subset runs only the dependency closure") {
    const fs::path dir = fresh_dir("pipeline_subset");
    const fs::path input = write_file(dir, "cells.csv", fixture_csv());
    cli::AnalysisConfig cfg = fixture_config(input, dir / "out");

    const ordered_json report = cli::run_pipeline(cfg, {"lra"});
    CHECK(report.contains("impute"));
    CHECK(report.contains("lra"));
    CHECK_FALSE(report.contains("regress"));
    CHECK_FALSE(report.contains("dirichlet"));
    CHECK(fs::exists(cfg.output_dir / "lra_scores.csv"));
    CHECK_FALSE(fs::exists(cfg.output_dir / "regression_coefficients.csv"));

    CHECK_THROWS_AS(cli::run_pipeline(cfg, {"made-up"}), parameter_error);
}

TEST_CASE("a stage failure leaves error.json and the finished outputs") {
    const fs::path dir = fresh_dir("pipeline_error");
    const fs::path input = write_file(dir, "cells.csv", fixture_csv());
    cli::AnalysisConfig cfg = fixture_config(input, dir / "out");
    cfg.bootstrap.seed.reset(); // regress stage requires one

    CHECK_THROWS_AS(cli::run_pipeline(cfg, all_stages()), parameter_error);

    const ordered_json err = ordered_json::parse(slurp(cfg.output_dir / "error.json"));
    CHECK(err.at("stage") == "regress");
    CHECK(err.at("error_type") == "parameter");
    CHECK(err.at("message").get<std::string>().find("--seed") != std::string::npos);

    // stages before the failure already wrote their files and report entries
    CHECK(fs::exists(cfg.output_dir / "imputed.csv"));
    CHECK(fs::exists(cfg.output_dir / "alr_ranking.csv"));
    const ordered_json report = ordered_json::parse(slurp(cfg.output_dir / "report.json"));
    CHECK(report.contains("rank_alr"));
    CHECK(report.at("error") == err);
}

TEST_CASE("command line maps failures to documented exit codes") {
    const fs::path dir = fresh_dir("cli_codes");
    const fs::path input = write_file(dir, "cells.csv", fixture_csv());
    const std::string in = input.string();

    const int ok = cli_exit({"run", "-i", in, "--id-column", "sample", "-p",
                             "cd8,cd4,b,macro", "--categorical", "race=EA", "--numeric",
                             "age", "--seed", "5", "--bootstrap", "200", "-o",
                             (dir / "ok").string()});
    CHECK(ok == 0);
    CHECK(fs::exists(dir / "ok" / "report.json"));

    // unreadable input
    CHECK(cli_exit({"run", "-i", (dir / "nope.csv").string(), "-p", "a,b", "-o",
                    (dir / "e1").string()}) == 2);

    // missing required --parts
    CHECK(cli_exit({"run", "-i", in}) == 2);

    // unknown part column
    CHECK(cli_exit({"lra", "-i", in, "--id-column", "sample", "-p", "cd8,ghost", "-o",
                    (dir / "e2").string()}) == 2);

    // structurally valid but empty data: a numeric failure, not a usage one
    const fs::path header_only = write_file(dir, "empty.csv", "sample,a,b\n");
    CHECK(cli_exit({"lra", "-i", header_only.string(), "--id-column", "sample", "-p",
                    "a,b", "-o", (dir / "e3").string()}) == 3);

    // single stage subcommand works and writes only its closure
    const int lra_code = cli_exit({"lra", "-i", in, "--id-column", "sample", "-p",
                                   "cd8,cd4,b,macro", "--categorical", "race=EA",
                                   "--numeric", "age", "-o", (dir / "lra").string()});
    CHECK(lra_code == 0);
    CHECK(fs::exists(dir / "lra" / "lra_scores.csv"));
    CHECK_FALSE(fs::exists(dir / "lra" / "manova.csv"));
}
