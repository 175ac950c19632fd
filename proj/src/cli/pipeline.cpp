#include "coda/cli/pipeline.hpp"

#include "coda/cli/ingest.hpp"
#include "coda/cli/svg.hpp"
#include "coda/dirichlet.hpp"
#include "coda/errors.hpp"
#include "coda/io/csv.hpp"
#include "coda/logratio/basis.hpp"
#include "coda/logratio/geometry.hpp"
#include "coda/logratio/regression.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>

namespace coda::cli {

namespace {

using nlohmann::ordered_json;
using io::format_double;

const std::vector<std::string> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                           "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
                                           "#bcbd22"};

ordered_json jvec(const Eigen::VectorXd& v) {
    ordered_json a = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        a.push_back(v(i));
    return a;
}

ordered_json jmat(const Eigen::MatrixXd& m) {
    ordered_json a = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back(m(i, j));
        a.push_back(std::move(row));
    }
    return a;
}

std::string weights_mode_name(WeightsMode mode) {
    switch (mode) {
    case WeightsMode::kAverage: return "average";
    case WeightsMode::kUniform: return "uniform";
    case WeightsMode::kExplicit: return "explicit";
    }
    return "average";
}

ordered_json config_json(const AnalysisConfig& cfg) {
    ordered_json j;
    j["input"] = cfg.input.string();
    j["id_column"] = cfg.id_column ? ordered_json(*cfg.id_column) : ordered_json(nullptr);
    j["parts"] = cfg.part_columns;
    ordered_json covs = ordered_json::array();
    for (const auto& c : cfg.covariates)
        covs.push_back({{"column", c.column},
                        {"categorical", c.categorical},
                        {"reference_level", c.reference_level}});
    j["covariates"] = std::move(covs);
    j["zero_replacement_k"] = cfg.zero_replacement_k;
    j["pre_imputed"] = cfg.pre_imputed;
    j["weights_mode"] = weights_mode_name(cfg.weights_mode);
    if (cfg.weights_mode == WeightsMode::kExplicit)
        j["explicit_weights"] = cfg.explicit_weights;
    j["alr_denominator"] = cfg.alr_denominator;
    j["basis"] = cfg.basis;
    j["lra_rank"] = cfg.lra_rank;
    j["subcomposition"] = cfg.subcomposition_parts;
    j["slr_numerator"] = cfg.slr_numerator;
    j["slr_denominator"] = cfg.slr_denominator;
    j["dirichlet_covariates"] = cfg.dirichlet_covariates;
    j["bootstrap"] = {{"enabled", cfg.bootstrap.enabled},
                      {"replicates", cfg.bootstrap.replicates},
                      {"seed", cfg.bootstrap.seed ? ordered_json(*cfg.bootstrap.seed)
                                                  : ordered_json(nullptr)},
                      {"threads", cfg.bootstrap.threads}};
    j["output_dir"] = cfg.output_dir.string();
    ordered_json fmts = ordered_json::array();
    if (cfg.emit_json)
        fmts.push_back("json");
    if (cfg.emit_csv)
        fmts.push_back("csv");
    if (cfg.emit_svg)
        fmts.push_back("svg");
    j["formats"] = std::move(fmts);
    return j;
}

struct Context {
    const AnalysisConfig& cfg;
    ordered_json report;
    std::optional<Ingested> data;
    std::optional<CompositionMatrix> positive;
    std::optional<std::vector<AlrRankEntry>> ranking;
    std::optional<DesignMatrix> dirichlet_design;
    std::optional<DirichletFit> dirichlet_fit;

    std::filesystem::path out(const std::string& name) const { return cfg.output_dir / name; }

    void csv(const std::string& name, const std::vector<std::string>& header,
             const std::vector<std::vector<std::string>>& rows) const {
        if (cfg.emit_csv)
            io::write_csv(out(name), header, rows);
    }

    void svg_file(const std::string& name, const std::string& content) const {
        if (!cfg.emit_svg)
            return;
        std::ofstream f(out(name), std::ios::binary);
        if (!f)
            throw schema_error("cannot write '" + out(name).string() + "'");
        f << content;
    }

    // first categorical covariate with exactly two observed levels
    const std::pair<const std::string, std::vector<std::string>>* binary_grouping() const {
        for (const auto& spec : cfg.covariates) {
            if (!spec.categorical)
                continue;
            const auto it = data->categorical_labels.find(spec.column);
            if (it == data->categorical_labels.end())
                continue;
            const std::set<std::string> levels(it->second.begin(), it->second.end());
            if (levels.size() == 2)
                return &*it;
        }
        return nullptr;
    }
};

std::string chosen_denominator(Context& ctx) {
    if (ctx.cfg.alr_denominator != "auto") {
        ctx.positive->part_index(ctx.cfg.alr_denominator); // validates the name
        return ctx.cfg.alr_denominator;
    }
    if (!ctx.ranking)
        ctx.ranking = rank_alr_denominators(*ctx.positive);
    return ctx.ranking->front().part;
}

LogRatioBasis make_basis(Context& ctx) {
    const auto& parts = ctx.positive->part_names();
    if (ctx.cfg.basis == "alr")
        return alr_basis(parts, chosen_denominator(ctx));
    if (ctx.cfg.basis == "clr")
        return clr_basis(parts);
    if (ctx.cfg.basis == "ilr")
        return ilr_basis(parts);
    throw parameter_error("unknown basis '" + ctx.cfg.basis + "' (use alr, clr or ilr)");
}

void stage_impute(Context& ctx) {
    const CompositionMatrix& src = ctx.data->composition;
    const auto zeros = (src.values().array() == 0.0).count();
    ordered_json j;
    if (ctx.cfg.pre_imputed) {
        if (zeros > 0)
            throw domain_error("input declared pre-imputed but contains " +
                               std::to_string(zeros) + " zero cells");
        ctx.positive = src;
        j["skipped"] = true;
        j["reason"] = "pre-imputed input";
    } else if (zeros == 0) {
        ctx.positive = src;
        j["skipped"] = true;
        j["reason"] = "no zero cells";
    } else {
        ctx.positive = replace_zeros_knn(src, ctx.cfg.zero_replacement_k);
        j["skipped"] = false;
        j["k"] = ctx.cfg.zero_replacement_k;
    }
    j["imputed_cells"] = static_cast<std::int64_t>(zeros);

    // a complete intermediate: parts plus the covariates, so any later stage
    // can be re-run from this file alone
    const auto& m = *ctx.positive;
    const DesignMatrix& x = ctx.data->design;
    std::vector<std::string> header{"sample"};
    for (const auto& p : m.part_names())
        header.push_back(p);
    for (const auto& spec : ctx.cfg.covariates)
        header.push_back(spec.column);
    std::vector<std::vector<std::string>> rows;
    ordered_json values = ordered_json::array();
    for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
        std::vector<std::string> row{m.sample_ids()[static_cast<size_t>(i)]};
        ordered_json jrow = ordered_json::array();
        for (Eigen::Index d = 0; d < m.n_parts(); ++d) {
            row.push_back(format_double(m.values()(i, d)));
            jrow.push_back(m.values()(i, d));
        }
        for (const auto& spec : ctx.cfg.covariates) {
            if (spec.categorical) {
                row.push_back(ctx.data->categorical_labels.at(spec.column)[
                    static_cast<size_t>(i)]);
            } else {
                const auto it = std::find(x.covariate_names.begin(), x.covariate_names.end(),
                                          spec.column);
                const auto c = static_cast<Eigen::Index>(
                    std::distance(x.covariate_names.begin(), it));
                row.push_back(format_double(x.values(i, c)));
            }
        }
        rows.push_back(std::move(row));
        values.push_back(std::move(jrow));
    }
    ctx.csv("imputed.csv", header, rows);
    j["parts"] = m.part_names();
    j["values"] = std::move(values);
    ctx.report["impute"] = std::move(j);
}

void stage_rank_alr(Context& ctx) {
    if (!ctx.ranking)
        ctx.ranking = rank_alr_denominators(*ctx.positive);
    std::vector<std::vector<std::string>> rows;
    ordered_json j = ordered_json::array();
    for (const auto& e : *ctx.ranking) {
        rows.push_back({e.part, format_double(e.weight), format_double(e.correlation)});
        j.push_back({{"part", e.part}, {"weight", e.weight}, {"correlation", e.correlation}});
    }
    ctx.csv("alr_ranking.csv", {"part", "weight", "correlation"}, rows);
    ctx.report["rank_alr"] = std::move(j);
}

void stage_lra(Context& ctx) {
    const auto& m = *ctx.positive;
    const auto max_rank = std::min(m.n_samples() - 1, m.n_parts() - 1);
    if (ctx.cfg.lra_rank < 1)
        throw parameter_error("lra rank must be at least 1");
    const auto rank = std::min<Eigen::Index>(ctx.cfg.lra_rank, max_rank);
    const LraResult res = weighted_lra(m, rank);

    ordered_json j;
    j["rank"] = rank;
    j["total_variance"] = res.total_variance;
    j["variance_explained"] = jvec(res.variance_explained);
    j["row_scores"] = jmat(res.row_scores);
    j["column_loadings"] = jmat(res.column_loadings);

    std::vector<std::string> dim_names;
    for (Eigen::Index k = 0; k < rank; ++k)
        dim_names.push_back("dim" + std::to_string(k + 1));

    {
        std::vector<std::vector<std::string>> rows;
        for (Eigen::Index k = 0; k < rank; ++k)
            rows.push_back({dim_names[static_cast<size_t>(k)],
                            format_double(res.variance_explained(k))});
        ctx.csv("lra_variance.csv", {"component", "variance_explained"}, rows);
    }
    const auto* grouping = ctx.binary_grouping();
    {
        std::vector<std::string> header{"sample"};
        if (grouping)
            header.push_back(grouping->first);
        header.insert(header.end(), dim_names.begin(), dim_names.end());
        std::vector<std::vector<std::string>> rows;
        for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
            std::vector<std::string> row{m.sample_ids()[static_cast<size_t>(i)]};
            if (grouping)
                row.push_back(grouping->second[static_cast<size_t>(i)]);
            for (Eigen::Index k = 0; k < rank; ++k)
                row.push_back(format_double(res.row_scores(i, k)));
            rows.push_back(std::move(row));
        }
        ctx.csv("lra_scores.csv", header, rows);
    }
    {
        std::vector<std::string> header{"part", "weight"};
        header.insert(header.end(), dim_names.begin(), dim_names.end());
        std::vector<std::vector<std::string>> rows;
        for (Eigen::Index d = 0; d < m.n_parts(); ++d) {
            std::vector<std::string> row{m.part_names()[static_cast<size_t>(d)],
                                         format_double(m.weights()(d))};
            for (Eigen::Index k = 0; k < rank; ++k)
                row.push_back(format_double(res.column_loadings(d, k)));
            rows.push_back(std::move(row));
        }
        ctx.csv("lra_loadings.csv", header, rows);
    }
    if (ctx.cfg.emit_svg && rank >= 2) {
        std::vector<svg::Series> series;
        if (grouping) {
            std::vector<std::string> levels(grouping->second.begin(), grouping->second.end());
            std::sort(levels.begin(), levels.end());
            levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
            for (size_t g = 0; g < levels.size(); ++g) {
                svg::Series s{levels[g], kPalette[g % kPalette.size()], {}, {}};
                for (Eigen::Index i = 0; i < m.n_samples(); ++i)
                    if (grouping->second[static_cast<size_t>(i)] == levels[g]) {
                        s.x.push_back(res.row_scores(i, 0));
                        s.y.push_back(res.row_scores(i, 1));
                    }
                series.push_back(std::move(s));
            }
        } else {
            svg::Series s{"samples", kPalette[0], {}, {}};
            for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
                s.x.push_back(res.row_scores(i, 0));
                s.y.push_back(res.row_scores(i, 1));
            }
            series.push_back(std::move(s));
        }
        ctx.svg_file("lra.svg", svg::scatter_plot("log-ratio analysis", "dim1", "dim2", series));
    }

    if (grouping) {
        const DiscriminantAxis disc = discriminant_axis(m, grouping->second);
        ordered_json dj;
        dj["grouping"] = grouping->first;
        dj["axis"] = jvec(disc.axis);
        dj["scores"] = jvec(disc.scores);
        dj["residual_variance_explained"] = jvec(disc.residual_lra.variance_explained);
        dj["residual_total_variance"] = disc.residual_lra.total_variance;
        j["discriminant"] = std::move(dj);

        {
            std::vector<std::vector<std::string>> rows;
            for (Eigen::Index d = 0; d < m.n_parts(); ++d)
                rows.push_back({m.part_names()[static_cast<size_t>(d)],
                                format_double(disc.axis(d))});
            ctx.csv("discriminant_axis.csv", {"part", "coefficient"}, rows);
        }
        {
            std::vector<std::vector<std::string>> rows;
            for (Eigen::Index i = 0; i < m.n_samples(); ++i)
                rows.push_back({m.sample_ids()[static_cast<size_t>(i)],
                                grouping->second[static_cast<size_t>(i)],
                                format_double(disc.scores(i)),
                                format_double(disc.residual_lra.row_scores(i, 0))});
            ctx.csv("discriminant_scores.csv",
                    {"sample", grouping->first, "axis_score", "residual_dim1"}, rows);
        }
        if (ctx.cfg.emit_svg) {
            std::vector<std::string> levels(grouping->second.begin(), grouping->second.end());
            std::sort(levels.begin(), levels.end());
            levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
            std::vector<svg::Series> series;
            for (size_t g = 0; g < levels.size(); ++g) {
                svg::Series s{levels[g], kPalette[g % kPalette.size()], {}, {}};
                for (Eigen::Index i = 0; i < m.n_samples(); ++i)
                    if (grouping->second[static_cast<size_t>(i)] == levels[g]) {
                        s.x.push_back(disc.scores(i));
                        s.y.push_back(disc.residual_lra.row_scores(i, 0));
                    }
                series.push_back(std::move(s));
            }
            ctx.svg_file("discriminant.svg",
                         svg::scatter_plot("group discriminant axis", "axis score",
                                           "residual dim1", series));
        }
    } else {
        j["discriminant"] = {{"skipped", true},
                             {"reason", "no two-level categorical covariate"}};
    }
    ctx.report["lra"] = std::move(j);
}

void stage_slr(Context& ctx) {
    ordered_json j;
    if (ctx.cfg.slr_numerator.empty() || ctx.cfg.slr_denominator.empty()) {
        j["skipped"] = true;
        j["reason"] = "no part sets configured";
        ctx.report["slr"] = std::move(j);
        return;
    }
    const auto& m = *ctx.positive;
    const Eigen::VectorXd values =
        summated_logratio(m, ctx.cfg.slr_numerator, ctx.cfg.slr_denominator);
    j["numerator"] = ctx.cfg.slr_numerator;
    j["denominator"] = ctx.cfg.slr_denominator;
    j["values"] = jvec(values);

    const auto* grouping = ctx.binary_grouping();
    {
        std::vector<std::string> header{"sample"};
        if (grouping)
            header.push_back(grouping->first);
        header.push_back("log_ratio");
        std::vector<std::vector<std::string>> rows;
        for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
            std::vector<std::string> row{m.sample_ids()[static_cast<size_t>(i)]};
            if (grouping)
                row.push_back(grouping->second[static_cast<size_t>(i)]);
            row.push_back(format_double(values(i)));
            rows.push_back(std::move(row));
        }
        ctx.csv("slr_values.csv", header, rows);
    }
    if (grouping) {
        if (!ctx.cfg.bootstrap.seed)
            throw parameter_error("--seed is required for bootstrap group summaries");
        const GroupMeanSummary summary = group_mean_summary(
            values, grouping->second, *ctx.cfg.bootstrap.seed, ctx.cfg.bootstrap.replicates);
        ordered_json gj = ordered_json::array();
        std::vector<std::vector<std::string>> rows;
        std::vector<svg::IntervalBox> boxes;
        for (const auto& g : summary.groups) {
            rows.push_back({g.label, std::to_string(g.count), format_double(g.mean),
                            format_double(g.lo50), format_double(g.hi50),
                            format_double(g.lo95), format_double(g.hi95)});
            gj.push_back({{"group", g.label},
                          {"count", g.count},
                          {"mean", g.mean},
                          {"lo50", g.lo50},
                          {"hi50", g.hi50},
                          {"lo95", g.lo95},
                          {"hi95", g.hi95}});
            boxes.push_back({g.label, g.mean, g.lo50, g.hi50, g.lo95, g.hi95});
        }
        ctx.csv("slr_groups.csv",
                {"group", "count", "mean", "lo50", "hi50", "lo95", "hi95"}, rows);
        ctx.csv("slr_test.csv", {"t_statistic", "dof", "p_value"},
                {{format_double(summary.t_statistic), format_double(summary.dof),
                  format_double(summary.p_value)}});
        j["groups"] = std::move(gj);
        j["t_statistic"] = summary.t_statistic;
        j["dof"] = summary.dof;
        j["p_value"] = summary.p_value;
        ctx.svg_file("slr.svg", svg::interval_plot("summated log-ratio by group",
                                                   "log-ratio mean", boxes, 0.0));
    } else {
        j["groups"] = {{"skipped", true},
                       {"reason", "no two-level categorical covariate"}};
    }
    ctx.report["slr"] = std::move(j);
}

void stage_regress(Context& ctx) {
    const auto& m = *ctx.positive;
    const LogRatioBasis basis = make_basis(ctx);
    const DesignMatrix& x = ctx.data->design;
    LogRatioRegressionFit fit = fit_logratio_regression(m, basis, x);

    const bool with_bootstrap = ctx.cfg.bootstrap.enabled && ctx.cfg.bootstrap.replicates > 0;
    if (with_bootstrap) {
        if (!ctx.cfg.bootstrap.seed)
            throw parameter_error("--seed is required when the bootstrap is enabled");
        fit.bootstrap =
            bootstrap_coefficients(m, basis, x, ctx.cfg.bootstrap.replicates,
                                   *ctx.cfg.bootstrap.seed, ctx.cfg.bootstrap.threads);
    }

    ordered_json j;
    j["basis"] = ctx.cfg.basis;
    if (basis.kind == BasisKind::kAlr)
        j["denominator"] = basis.part_names[static_cast<size_t>(basis.denominator_index)];
    j["coordinates"] = basis.coordinate_names;
    j["covariates"] = x.covariate_names;
    j["coefficients"] = jmat(fit.coefficients);
    j["multiplicative"] = jmat(fit.multiplicative);
    j["log_contrast_parts"] = basis.part_names;
    j["log_contrast"] = jmat(fit.log_contrast);

    {
        std::vector<std::string> header{"coordinate", "covariate", "estimate", "multiplicative"};
        if (fit.bootstrap) {
            header.insert(header.end(), {"lo95", "hi95", "exp_lo95", "exp_hi95", "p_bootstrap"});
        }
        std::vector<std::vector<std::string>> rows;
        for (Eigen::Index r = 0; r < fit.coefficients.rows(); ++r) {
            for (Eigen::Index c = 0; c < fit.coefficients.cols(); ++c) {
                std::vector<std::string> row{
                    basis.coordinate_names[static_cast<size_t>(r)],
                    x.covariate_names[static_cast<size_t>(c)],
                    format_double(fit.coefficients(r, c)),
                    format_double(fit.multiplicative(r, c))};
                if (fit.bootstrap) {
                    row.push_back(format_double(fit.bootstrap->coef_lo(r, c)));
                    row.push_back(format_double(fit.bootstrap->coef_hi(r, c)));
                    row.push_back(format_double(std::exp(fit.bootstrap->coef_lo(r, c))));
                    row.push_back(format_double(std::exp(fit.bootstrap->coef_hi(r, c))));
                    row.push_back(format_double(fit.bootstrap->coef_p(r, c)));
                }
                rows.push_back(std::move(row));
            }
        }
        ctx.csv("regression_coefficients.csv", header, rows);
    }
    {
        std::vector<std::string> header{"covariate", "part", "phi", "exp_phi"};
        if (fit.bootstrap)
            header.insert(header.end(), {"lo95", "hi95", "p_bootstrap"});
        std::vector<std::vector<std::string>> rows;
        for (Eigen::Index c = 0; c < fit.log_contrast.rows(); ++c) {
            for (Eigen::Index d = 0; d < fit.log_contrast.cols(); ++d) {
                std::vector<std::string> row{x.covariate_names[static_cast<size_t>(c)],
                                             basis.part_names[static_cast<size_t>(d)],
                                             format_double(fit.log_contrast(c, d)),
                                             format_double(std::exp(fit.log_contrast(c, d)))};
                if (fit.bootstrap) {
                    row.push_back(format_double(fit.bootstrap->phi_lo(c, d)));
                    row.push_back(format_double(fit.bootstrap->phi_hi(c, d)));
                    row.push_back(format_double(fit.bootstrap->phi_p(c, d)));
                }
                rows.push_back(std::move(row));
            }
        }
        ctx.csv("regression_log_contrast.csv", header, rows);
    }
    if (fit.bootstrap) {
        j["bootstrap"] = {{"replicates", fit.bootstrap->replicates},
                          {"discarded", fit.bootstrap->discarded},
                          {"discard_warning", fit.bootstrap->discard_warning},
                          {"coef_lo", jmat(fit.bootstrap->coef_lo)},
                          {"coef_hi", jmat(fit.bootstrap->coef_hi)},
                          {"coef_p", jmat(fit.bootstrap->coef_p)},
                          {"phi_lo", jmat(fit.bootstrap->phi_lo)},
                          {"phi_hi", jmat(fit.bootstrap->phi_hi)},
                          {"phi_p", jmat(fit.bootstrap->phi_p)}};
        if (ctx.cfg.emit_svg) {
            for (size_t g = 0; g < x.groups.size(); ++g) {
                const auto& grp = x.groups[g];
                if (grp.columns.size() != 1)
                    continue;
                const auto c = grp.columns.front();
                std::vector<svg::IntervalBox> boxes;
                for (Eigen::Index d = 0; d < fit.log_contrast.cols(); ++d)
                    boxes.push_back({basis.part_names[static_cast<size_t>(d)],
                                     fit.log_contrast(c, d), fit.log_contrast(c, d),
                                     fit.log_contrast(c, d), fit.bootstrap->phi_lo(c, d),
                                     fit.bootstrap->phi_hi(c, d)});
                ctx.svg_file("log_contrast_" + grp.name + ".svg",
                             svg::interval_plot("log-contrast effects of " + grp.name,
                                                "coefficient", boxes, 0.0));
            }
        }
    }
    ctx.report["regress"] = std::move(j);
}

void stage_manova(Context& ctx) {
    ordered_json j;
    const DesignMatrix& x = ctx.data->design;
    if (x.groups.empty()) {
        j["skipped"] = true;
        j["reason"] = "no covariates";
        ctx.report["manova"] = std::move(j);
        return;
    }
    const auto rows = manova_pillai(*ctx.positive, ilr_basis(ctx.positive->part_names()), x);
    ordered_json arr = ordered_json::array();
    std::vector<std::vector<std::string>> csv_rows;
    for (const auto& r : rows) {
        arr.push_back({{"covariate", r.covariate},
                       {"pillai", r.pillai},
                       {"df1", r.df1},
                       {"df2", r.df2},
                       {"approx_f", r.approx_f},
                       {"p_value", r.p_value}});
        csv_rows.push_back({r.covariate, format_double(r.pillai), format_double(r.df1),
                            format_double(r.df2), format_double(r.approx_f),
                            format_double(r.p_value)});
    }
    ctx.csv("manova.csv", {"covariate", "pillai", "df1", "df2", "approx_f", "p_value"},
            csv_rows);
    ctx.report["manova"] = std::move(arr);
}

DesignMatrix dirichlet_design(Context& ctx) {
    const DesignMatrix& full = ctx.data->design;
    if (ctx.cfg.dirichlet_covariates.empty())
        return full;
    std::vector<const CovariateGroup*> picked;
    for (const auto& name : ctx.cfg.dirichlet_covariates) {
        const auto it = std::find_if(full.groups.begin(), full.groups.end(),
                                     [&](const CovariateGroup& g) { return g.name == name; });
        if (it == full.groups.end())
            throw lookup_error("unknown covariate '" + name + "'");
        picked.push_back(&*it);
    }
    Eigen::Index cols = 1;
    for (const auto* g : picked)
        cols += static_cast<Eigen::Index>(g->columns.size());
    Eigen::MatrixXd values(full.values.rows(), cols);
    values.col(0).setOnes();
    std::vector<std::string> names{"intercept"};
    std::vector<CovariateGroup> groups;
    std::map<std::string, std::map<std::string, double>> encodings;
    Eigen::Index at = 1;
    for (const auto* g : picked) {
        CovariateGroup ng{g->name, {}};
        for (const auto c : g->columns) {
            values.col(at) = full.values.col(c);
            names.push_back(full.covariate_names[static_cast<size_t>(c)]);
            ng.columns.push_back(at);
            ++at;
        }
        groups.push_back(std::move(ng));
        const auto enc = full.encodings.find(g->name);
        if (enc != full.encodings.end())
            encodings[g->name] = enc->second;
    }
    return make_design(std::move(values), std::move(names), std::move(groups),
                       std::move(encodings));
}

void stage_dirichlet(Context& ctx) {
    ctx.dirichlet_design = dirichlet_design(ctx);
    ctx.dirichlet_fit = fit_dirichlet_regression(*ctx.positive, *ctx.dirichlet_design);
    const auto& fit = *ctx.dirichlet_fit;
    const auto& m = *ctx.positive;
    const auto& x = *ctx.dirichlet_design;

    ordered_json j;
    j["covariates"] = x.covariate_names;
    j["parts"] = m.part_names();
    j["beta"] = jmat(fit.beta);
    j["exp_beta"] = jmat(fit.beta.array().exp().matrix());
    j["standard_errors"] = jmat(fit.standard_errors);
    j["wald_p"] = jmat(fit.wald_p);
    j["log_likelihood"] = fit.log_likelihood;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;

    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index d = 0; d < fit.beta.rows(); ++d)
        for (Eigen::Index k = 0; k < fit.beta.cols(); ++k)
            rows.push_back({m.part_names()[static_cast<size_t>(d)],
                            x.covariate_names[static_cast<size_t>(k)],
                            format_double(fit.beta(d, k)),
                            format_double(std::exp(fit.beta(d, k))),
                            format_double(fit.standard_errors(d, k)),
                            format_double(fit.wald_p(d, k))});
    ctx.csv("dirichlet_coefficients.csv",
            {"part", "covariate", "estimate", "exp_estimate", "std_error", "p_value"}, rows);
    ctx.report["dirichlet"] = std::move(j);
}

void stage_diagnose(Context& ctx) {
    const auto& m = *ctx.positive;
    const auto& x = *ctx.dirichlet_design;
    const DiagnosticsReport rep = diagnostics(*ctx.dirichlet_fit, m, x);

    ordered_json j;
    j["parts"] = m.part_names();
    j["standardized_residuals"] = jmat(rep.standardized_residuals);
    j["composite_residuals"] = jvec(rep.composite_residuals);
    j["score_residuals"] = jmat(rep.score_residuals);
    j["local_influence"] = jmat(rep.local_influence);
    ordered_json od = ordered_json::array();
    for (size_t k = 0; k < rep.overdispersion.size(); ++k)
        od.push_back({{"covariate", x.covariate_names[k]},
                      {"values", jmat(rep.overdispersion[k])}});
    j["overdispersion"] = std::move(od);
    ordered_json fj = ordered_json::array();
    for (const auto& f : rep.flagged)
        fj.push_back({{"sample", f.sample_id}, {"reason", f.reason}});
    j["flagged"] = std::move(fj);

    {
        std::vector<std::string> header{"sample"};
        for (const auto& p : m.part_names())
            header.push_back(p);
        header.push_back("composite");
        std::vector<std::vector<std::string>> rows;
        for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
            std::vector<std::string> row{m.sample_ids()[static_cast<size_t>(i)]};
            for (Eigen::Index d = 0; d < m.n_parts(); ++d)
                row.push_back(format_double(rep.standardized_residuals(i, d)));
            row.push_back(format_double(rep.composite_residuals(i)));
            rows.push_back(std::move(row));
        }
        ctx.csv("diagnostics_residuals.csv", header, rows);
    }
    {
        std::vector<std::vector<std::string>> rows;
        for (Eigen::Index i = 0; i < m.n_samples(); ++i)
            for (Eigen::Index d = 0; d < m.n_parts(); ++d)
                rows.push_back({m.sample_ids()[static_cast<size_t>(i)],
                                m.part_names()[static_cast<size_t>(d)],
                                format_double(m.values()(i, d)),
                                format_double(rep.score_residuals(i, d)),
                                format_double(rep.local_influence(i, d))});
        ctx.csv("diagnostics_influence.csv",
                {"sample", "part", "value", "score_residual", "local_influence"}, rows);
    }
    {
        std::vector<std::string> header{"covariate", "sample"};
        for (const auto& p : m.part_names())
            header.push_back(p);
        std::vector<std::vector<std::string>> rows;
        for (size_t k = 0; k < rep.overdispersion.size(); ++k)
            for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
                std::vector<std::string> row{x.covariate_names[k],
                                             m.sample_ids()[static_cast<size_t>(i)]};
                for (Eigen::Index d = 0; d < m.n_parts(); ++d)
                    row.push_back(format_double(rep.overdispersion[k](i, d)));
                rows.push_back(std::move(row));
            }
        ctx.csv("diagnostics_overdispersion.csv", header, rows);
    }
    {
        std::vector<std::vector<std::string>> rows;
        for (const auto& f : rep.flagged)
            rows.push_back({f.sample_id, f.reason});
        ctx.csv("diagnostics_flagged.csv", {"sample", "reason"}, rows);
    }
    if (ctx.cfg.emit_svg) {
        std::vector<svg::Series> influence_series;
        for (Eigen::Index d = 0; d < m.n_parts(); ++d) {
            svg::Series s{m.part_names()[static_cast<size_t>(d)],
                          kPalette[static_cast<size_t>(d) % kPalette.size()], {}, {}};
            for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
                s.x.push_back(m.values()(i, d));
                s.y.push_back(rep.local_influence(i, d));
            }
            influence_series.push_back(std::move(s));
        }
        ctx.svg_file("influence.svg", svg::scatter_plot("local influence", "proportion",
                                                        "influence", influence_series));

        const auto* grouping = ctx.binary_grouping();
        std::vector<svg::Series> comp_series;
        if (grouping) {
            std::vector<std::string> levels(grouping->second.begin(), grouping->second.end());
            std::sort(levels.begin(), levels.end());
            levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
            for (size_t g = 0; g < levels.size(); ++g) {
                svg::Series s{levels[g], kPalette[g % kPalette.size()], {}, {}};
                for (Eigen::Index i = 0; i < m.n_samples(); ++i)
                    if (grouping->second[static_cast<size_t>(i)] == levels[g]) {
                        s.x.push_back(static_cast<double>(i + 1));
                        s.y.push_back(rep.composite_residuals(i));
                    }
                comp_series.push_back(std::move(s));
            }
        } else {
            svg::Series s{"samples", kPalette[0], {}, {}};
            for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
                s.x.push_back(static_cast<double>(i + 1));
                s.y.push_back(rep.composite_residuals(i));
            }
            comp_series.push_back(std::move(s));
        }
        ctx.svg_file("composite_residuals.svg",
                     svg::scatter_plot("composite residuals", "sample index",
                                       "composite residual", comp_series));

        const size_t kcov = rep.overdispersion.size() > 1 ? 1 : 0;
        std::vector<svg::Series> od_series;
        for (Eigen::Index d = 0; d < m.n_parts(); ++d) {
            svg::Series s{m.part_names()[static_cast<size_t>(d)],
                          kPalette[static_cast<size_t>(d) % kPalette.size()], {}, {}};
            for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
                s.x.push_back(static_cast<double>(i + 1));
                s.y.push_back(rep.overdispersion[kcov](i, d));
            }
            od_series.push_back(std::move(s));
        }
        ctx.svg_file("overdispersion.svg",
                     svg::scatter_plot("overdispersion statistics (" +
                                           x.covariate_names[kcov] + ")",
                                       "sample index", "delta", od_series));
    }
    ctx.report["diagnose"] = std::move(j);
}

ordered_json error_json(const std::string& stage, const std::exception& e) {
    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["stage"] = stage;
    std::string type = "internal";
    ordered_json details;
    if (dynamic_cast<const schema_error*>(&e))
        type = "schema";
    else if (const auto* pe = dynamic_cast<const parse_error*>(&e)) {
        type = "parse";
        details = {{"row", pe->row}, {"column", pe->column}};
    } else if (dynamic_cast<const parameter_error*>(&e))
        type = "parameter";
    else if (dynamic_cast<const lookup_error*>(&e))
        type = "lookup";
    else if (const auto* ce = dynamic_cast<const collinearity_error*>(&e)) {
        type = "collinearity";
        details = {{"dependent_columns", ce->dependent_columns}};
    } else if (dynamic_cast<const degenerate_data_error*>(&e))
        type = "degenerate_data";
    else if (dynamic_cast<const domain_error*>(&e))
        type = "domain";
    else if (dynamic_cast<const inconsistency_error*>(&e))
        type = "inconsistency";
    else if (dynamic_cast<const error*>(&e))
        type = "numerical";
    j["error_type"] = type;
    j["message"] = e.what();
    if (!details.is_null())
        j["details"] = std::move(details);
    return j;
}

void write_json(const std::filesystem::path& path, const ordered_json& j) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw schema_error("cannot write '" + path.string() + "'");
    f << j.dump(2) << '\n';
}

} // namespace

const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> kStages = {"impute", "rank-alr", "lra",     "slr",
                                                     "regress", "manova",  "dirichlet",
                                                     "diagnose"};
    return kStages;
}

nlohmann::ordered_json run_pipeline(const AnalysisConfig& config,
                                    const std::set<std::string>& stages) {
    for (const auto& s : stages)
        if (std::find(pipeline_stages().begin(), pipeline_stages().end(), s) ==
            pipeline_stages().end())
            throw parameter_error("unknown stage '" + s + "'");

    std::set<std::string> wanted = stages;
    if (wanted.count("diagnose"))
        wanted.insert("dirichlet");
    if (wanted.count("regress") && config.basis == "alr" && config.alr_denominator == "auto")
        wanted.insert("rank-alr");
    wanted.insert("impute"); // source of the positive matrix for every stage

    std::filesystem::create_directories(config.output_dir);
    Context ctx{config, ordered_json(), std::nullopt, std::nullopt,
                std::nullopt, std::nullopt, std::nullopt};
    ctx.report["schema_version"] = kSchemaVersion;
    ctx.report["config"] = config_json(config);

    std::string current = "ingest";
    try {
        ctx.data = ingest_csv(config.input, config);
        if (!config.subcomposition_parts.empty())
            ctx.data->composition =
                subcomposition(ctx.data->composition, config.subcomposition_parts);
        ordered_json ij;
        ij["n_samples"] = ctx.data->report.n_samples;
        ij["n_parts"] = ctx.data->report.n_parts;
        ordered_json zc = ordered_json::array();
        for (const auto& [part, count] : ctx.data->report.zero_counts)
            zc.push_back({{"part", part}, {"zeros", count}});
        ij["zero_counts"] = std::move(zc);
        ij["zero_total"] = ctx.data->report.zero_total;
        ij["percent_scale"] = ctx.data->report.percent_scale;
        ij["excluded_rows"] = ctx.data->report.excluded_rows;
        ctx.report["ingest"] = std::move(ij);

        for (const auto& stage : pipeline_stages()) {
            if (!wanted.count(stage))
                continue;
            current = stage;
            if (stage == "impute")
                stage_impute(ctx);
            else if (stage == "rank-alr")
                stage_rank_alr(ctx);
            else if (stage == "lra")
                stage_lra(ctx);
            else if (stage == "slr")
                stage_slr(ctx);
            else if (stage == "regress")
                stage_regress(ctx);
            else if (stage == "manova")
                stage_manova(ctx);
            else if (stage == "dirichlet")
                stage_dirichlet(ctx);
            else if (stage == "diagnose")
                stage_diagnose(ctx);
        }
    } catch (const std::exception& e) {
        const ordered_json err = error_json(current, e);
        write_json(ctx.out("error.json"), err);
        ctx.report["error"] = err;
        if (config.emit_json)
            write_json(ctx.out("report.json"), ctx.report);
        throw;
    }
    if (config.emit_json)
        write_json(ctx.out("report.json"), ctx.report);
    return ctx.report;
}

} // namespace coda::cli
