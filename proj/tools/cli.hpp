#pragma once

#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "log.hpp"
#include "mlc/bundle.hpp"
#include "mlc/service.hpp"
#include "server.hpp"

namespace mlc::cli {

enum ExitCode { ok = 0, other = 1, usage = 2, missing_file = 3, invalid_input = 4, numeric = 5 };

inline int exit_code(const Error& e) {
    switch (e.kind()) {
    case ErrorKind::missing_file: return missing_file;
    case ErrorKind::invalid_input: return invalid_input;
    default: return numeric;
    }
}

inline void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") std::cout << text;
    else csv::write_file(out, text);
}

inline std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t k = 0; k < idx.size();) {
        std::size_t j = k;
        while (j < idx.size() && v[idx[j]] == v[idx[k]]) ++j;
        for (std::size_t q = k; q < j; ++q) r[idx[q]] = 0.5 * static_cast<double>(k + j - 1);
        k = j;
    }
    return r;
}

inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    Vector x = Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
    Vector y = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
    return pearson(x, y);
}

/// Frontier diagnostics used by `sweep`: per-efficient-model loss, and cost alignment between
/// each model's cost and its tier's fitted cost.
struct FrontierDiagnostics {
    double fit_error = 0;
    double pearson = 0;
    double spearman = 0;
};

inline FrontierDiagnostics diagnose(const FrontierFit& f, const Catalog& cat) {
    FrontierDiagnostics d;
    std::size_t n_eff = 0;
    for (auto& e : f.tiers.efficient) n_eff += e.size();
    d.fit_error = n_eff ? f.fit_loss / static_cast<double>(n_eff) : 0.0;
    std::vector<double> actual, implied;
    for (const auto& m : cat.models) {
        actual.push_back(m.cost);
        implied.push_back(f.tier_costs[f.tiers.tiers.at(m.model_id) - 1]);
    }
    d.pearson = correlation(actual, implied);
    d.spearman = correlation(ranks(actual), ranks(implied));
    return d;
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!csv::trim(item).empty()) out.push_back(csv::trim(item));
    return out;
}

inline ArtifactBundle require_fitted(const std::string& path) {
    auto b = load_bundle(path);
    if (!b.measures) fail("bundle has no measure set; run `extract` first");
    if (!b.frontier) fail("bundle has no frontier fit; run `frontier` first");
    if (b.utilities.empty()) fail("bundle has no utility models; run `utility` first");
    return b;
}

inline StylizedInstance instance_from_json(const json& j) {
    StylizedInstance in;
    try {
        in.beta = vector_from_json(j.at("beta"));
        in.a = vector_from_json(j.at("a"));
        in.b = j.at("b").get<double>();
        in.c0 = j.at("c0").get<double>();
        in.d = j.at("d").get<double>();
        in.R = j.contains("R") ? vector_from_json(j.at("R")) : Vector(Vector::Zero(in.a.size()));
        in.B = j.at("B").get<double>();
        in.lambda = j.at("lambda").get<double>();
    } catch (const json::exception& e) {
        fail(std::string("invalid stylized instance: ") + e.what());
    }
    in.validate();
    return in;
}

inline int run(int argc, char** argv, std::ostream& err = std::cerr) {
    CLI::App app{"Deployment-aware model selection toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    std::string models, schema, interactions, scenario_path, bundle_path, out, context, instance_path;
    std::uint64_t seed = 0;
    int port = 8080;

    // extract
    auto* ex = app.add_subcommand("extract", "raw capabilities -> internal measures; writes a new bundle");
    ExtractConfig xcfg;
    std::string measures_csv;
    ex->add_option("--models", models, "models CSV")->required();
    ex->add_option("--schema", schema, "schema JSON")->required();
    ex->add_option("--out", out, "bundle output")->required();
    ex->add_option("--factors", xcfg.factor_count, "number of internal measures");
    ex->add_option("--threshold", xcfg.refine.threshold, "sparsification threshold");
    ex->add_option("--max-per-row", xcfg.refine.max_per_row, "nonzero loadings kept per raw column (0 = all)");
    bool no_rotate = false;
    ex->add_flag("--no-rotate", no_rotate, "skip varimax");
    ex->add_flag("--bypass", xcfg.bypass, "raw capabilities are already in [0,1]");
    ex->add_option("--measures-csv", measures_csv, "also write model_id,C1..CI");
    ex->add_option("--seed", seed, "unused; accepted for pipeline symmetry");

    // frontier
    auto* fr = app.add_subcommand("frontier", "fit the capability/cost frontier");
    FrontierConfig fcfg;
    std::string cost_agg = "median", tiers_csv;
    fr->add_option("--bundle", bundle_path)->required();
    fr->add_option("--out", out)->required();
    fr->add_option("--tiers", fcfg.tiers, "number of tiers");
    fr->add_option("--tolerance", fcfg.tolerance, "dominance tolerance");
    fr->add_option("--cost-aggregate", cost_agg, "mean | geomean | median");
    fr->add_option("--tiers-csv", tiers_csv, "also write model_id,tier,efficient,ces_score");

    // utility
    auto* ut = app.add_subcommand("utility", "fit per-group utility models");
    std::string estimator = "logistic", group_key, user_key, index_weights;
    bool full_marks = false;
    UtilityConfig ucfg;
    ut->add_option("--bundle", bundle_path)->required();
    ut->add_option("--out", out)->required();
    ut->add_option("--interactions", interactions, "interactions CSV");
    ut->add_option("--group-key", group_key, "context column defining groups (empty = one group)");
    ut->add_option("--user-key", user_key, "context column identifying users for within-user labels");
    ut->add_flag("--full-marks", full_marks, "label = score reaches the maximum");
    ut->add_option("--estimator", estimator, "logistic | trees | index");
    ut->add_option("--l2", ucfg.logistic.l2, "logistic l2 penalty");
    ut->add_option("--trees", ucfg.boost.trees);
    ut->add_option("--depth", ucfg.boost.max_depth);
    ut->add_option("--learning-rate", ucfg.boost.learning_rate);
    ut->add_option("--min-leaf", ucfg.boost.min_leaf);
    ut->add_option("--test-fraction", ucfg.test_fraction);
    ut->add_option("--seed", seed, "split seed");
    ut->add_option("--index-weights", index_weights, "JSON {group: [w1..wI]} of linear index weights (no fitting)");

    // recommend
    auto* rc = app.add_subcommand("recommend", "continuous target + model recommendation");
    rc->add_option("--bundle", bundle_path)->required();
    rc->add_option("--scenario", scenario_path)->required();
    rc->add_option("--context", context, "group id or 'aggregate' (default: per scenario aggregation)");
    rc->add_option("--out", out);

    // leaderboard
    auto* lb = app.add_subcommand("leaderboard", "deployment-aware leaderboard");
    std::string format;
    lb->add_option("--bundle", bundle_path)->required();
    lb->add_option("--scenario", scenario_path)->required();
    lb->add_option("--out", out);
    lb->add_option("--format", format, "csv | json (default from extension, else csv)");

    // statics
    auto* st = app.add_subcommand("statics", "comparative statics of the closed-form solution");
    st->add_option("--instance", instance_path, "stylized instance JSON");
    st->add_option("--bundle", bundle_path);
    st->add_option("--scenario", scenario_path);
    st->add_option("--context", context);
    st->add_option("--out", out);

    // sweep
    auto* sw = app.add_subcommand("sweep", "frontier re-estimation over a configuration grid");
    std::string tiers_list = "2,3,4,5", tol_list = "0", agg_list = "median";
    sw->add_option("--bundle", bundle_path)->required();
    sw->add_option("--tiers-list", tiers_list);
    sw->add_option("--tolerances", tol_list);
    sw->add_option("--aggregates", agg_list);
    sw->add_option("--out", out);

    // serve
    auto* sv = app.add_subcommand("serve", "HTTP JSON service over a fitted bundle");
    std::string host = "127.0.0.1";
    sv->add_option("--bundle", bundle_path)->required();
    sv->add_option("--port", port);
    sv->add_option("--host", host);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp& e) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "mlc: " << e.what() << "\n";
        return usage;
    }

    try {
        if (*ex) {
            auto cat = load_catalog(models, load_schema(schema));
            xcfg.refine.rotate = !no_rotate;
            auto b = make_bundle(cat);
            b.measures = extract_measures(cat, xcfg);
            b.config["extract"] = {{"factor_count", xcfg.factor_count},
                                   {"threshold", xcfg.refine.threshold},
                                   {"max_per_row", xcfg.refine.max_per_row},
                                   {"rotate", xcfg.refine.rotate},
                                   {"bypass", xcfg.bypass}};
            log::info("extracted " + std::to_string(b.dim()) + " measures for " + std::to_string(cat.size()) + " models");
            emit(out, dump_bundle(b));
            if (!measures_csv.empty()) emit(measures_csv, format_measures_csv(*b.measures));
        } else if (*fr) {
            auto b = load_bundle(bundle_path);
            if (!b.measures) fail("bundle has no measure set; run `extract` first");
            fcfg.cost_aggregate = parse_cost_aggregate(cost_agg);
            b.frontier = estimate_frontier(*b.measures, b.catalog, fcfg);
            if (!b.frontier->converged) log::warn("frontier fit hit the iteration limit; best-so-far returned");
            if (!b.frontier->stylized_regime()) log::warn("fitted (b, d) lie outside the closed-form regime");
            b.config["frontier"] = {{"tiers", fcfg.tiers}, {"tolerance", fcfg.tolerance}, {"cost_aggregate", cost_agg}};
            emit(out, dump_bundle(b));
            if (!tiers_csv.empty()) {
                std::string t = "model_id,tier,efficient,ces_score\n";
                for (std::size_t i = 0; i < b.measures->model_ids.size(); ++i) {
                    const auto& id = b.measures->model_ids[i];
                    int tier = b.frontier->tiers.tiers.at(id);
                    const auto& eff = b.frontier->tiers.efficient[tier - 1];
                    bool is_eff = std::find(eff.begin(), eff.end(), id) != eff.end();
                    t += csv::quote(id) + "," + std::to_string(tier) + "," + (is_eff ? "true" : "false") + "," +
                         csv::format_real(b.frontier->capability(b.measures->row(i))) + "\n";
                }
                emit(tiers_csv, t);
            }
        } else if (*ut) {
            auto b = load_bundle(bundle_path);
            if (!b.measures) fail("bundle has no measure set; run `extract` first");
            b.utilities.clear();
            b.utility_metrics.clear();
            if (!index_weights.empty()) {
                json w;
                try {
                    w = json::parse(csv::read_file(index_weights));
                } catch (const json::parse_error& e) {
                    fail("index weights are not valid JSON: " + std::string(e.what()));
                }
                if (!w.is_object() || w.empty()) fail("index weights must be a non-empty object");
                for (auto it = w.begin(); it != w.end(); ++it) {
                    Vector v = vector_from_json(it.value());
                    if (v.size() != b.dim()) fail("index weights for '" + it.key() + "' have the wrong length");
                    b.utilities[it.key()] = linear_score_model(v);
                }
                b.config["utility"] = {{"estimator", "index_weights"}};
            } else {
                if (interactions.empty()) fail("utility needs --interactions or --index-weights");
                auto recs = load_interactions(interactions, &b.catalog);
                label_outcomes(recs, full_marks ? std::string() : user_key);
                auto grouped = group_contexts(recs, *b.measures, group_key);
                ucfg.seed = seed;
                if (estimator == "trees") ucfg.estimator = Estimator::trees;
                else if (estimator == "logistic" || estimator == "index") ucfg.estimator = Estimator::logistic;
                else fail("unknown estimator '" + estimator + "'");
                for (auto& [g, fit] : fit_group_utilities(grouped, ucfg)) {
                    UtilityModel m = fit.model;
                    if (estimator == "index") m = linear_score_model(fit.model.coefficients);
                    if (!fit.model.converged) log::warn("utility fit for '" + g + "' did not converge");
                    b.utilities[g] = m;
                    b.utility_metrics[g] = {fit.train_auc, fit.test_auc, fit.n_train, fit.n_test};
                    log::info("group " + g + ": train AUC " + std::to_string(fit.train_auc) + ", test AUC " +
                              std::to_string(fit.test_auc));
                }
                b.config["utility"] = {{"estimator", estimator}, {"group_key", group_key}, {"user_key", user_key},
                                       {"full_marks", full_marks}, {"seed", seed}, {"l2", ucfg.logistic.l2},
                                       {"test_fraction", ucfg.test_fraction}};
            }
            emit(out, dump_bundle(b));
        } else if (*rc) {
            auto b = require_fitted(bundle_path);
            auto s = load_scenario(scenario_path);
            json recs = json::array();
            if (!context.empty())
                recs.push_back(to_json(recommend(b.catalog, *b.measures, b.utilities, *b.frontier, s, context)));
            else
                for (auto& r : recommend_all(b.catalog, *b.measures, b.utilities, *b.frontier, s)) recs.push_back(to_json(r));
            emit(out, json({{"scenario", scenario_to_json(s)}, {"recommendations", recs}}).dump(2) + "\n");
        } else if (*lb) {
            auto b = load_bundle(bundle_path);
            if (!b.measures || b.utilities.empty()) fail("bundle needs measures and utility models");
            auto s = load_scenario(scenario_path);
            auto rows = leaderboard(b.catalog, *b.measures, b.utilities, s);
            bool as_json = format == "json" || (format.empty() && out.size() > 5 && out.substr(out.size() - 5) == ".json");
            if (!format.empty() && format != "json" && format != "csv") fail("unknown format '" + format + "'");
            emit(out, as_json ? to_json(rows).dump(2) + "\n" : leaderboard_csv(rows));
        } else if (*st) {
            StylizedInstance in;
            if (!instance_path.empty()) {
                json j;
                try {
                    j = json::parse(csv::read_file(instance_path));
                } catch (const json::parse_error& e) {
                    fail("instance is not valid JSON: " + std::string(e.what()));
                }
                in = instance_from_json(j);
            } else {
                if (bundle_path.empty() || scenario_path.empty()) fail("statics needs --instance or --bundle with --scenario");
                auto b = require_fitted(bundle_path);
                auto s = load_scenario(scenario_path);
                auto U = aggregate_objective(b.utilities, s, context.empty() ? kAggregateContext : context);
                auto t = continuous_target(b.catalog, *b.frontier, U, s);
                if (!t.instance) fail("the closed-form solver does not apply (needs a linear index utility and b > 1, d <= 1)");
                in = *t.instance;
            }
            auto sol = solve(in);
            emit(out, json({{"solution", to_json(sol)}, {"sensitivity", to_json(sensitivity_report(in, sol))}}).dump(2) + "\n");
        } else if (*sw) {
            auto b = load_bundle(bundle_path);
            if (!b.measures) fail("bundle has no measure set; run `extract` first");
            std::string table = "tiers,tolerance,aggregate,b,d,c0,fit_error,pearson,spearman\n";
            for (const auto& t : split_list(tiers_list))
                for (const auto& tol : split_list(tol_list))
                    for (const auto& agg : split_list(agg_list)) {
                        FrontierConfig c;
                        c.tiers = std::stoi(t);
                        c.tolerance = std::stod(tol);
                        c.cost_aggregate = parse_cost_aggregate(agg);
                        auto f = estimate_frontier(*b.measures, b.catalog, c);
                        auto d = diagnose(f, b.catalog);
                        table += t + "," + tol + "," + agg + "," + csv::format_real(f.b) + "," + csv::format_real(f.d) +
                                 "," + csv::format_real(f.c0) + "," + csv::format_real(d.fit_error) + "," +
                                 csv::format_real(d.pearson) + "," + csv::format_real(d.spearman) + "\n";
                    }
            emit(out, table);
        } else if (*sv) {
            auto b = require_fitted(bundle_path);
            return serve_bundle(b, host, port);
        }
    } catch (const Error& e) {
        err << "mlc: " << e.what() << "\n";
        return exit_code(e);
    } catch (const std::invalid_argument& e) {
        err << "mlc: invalid argument: " << e.what() << "\n";
        return invalid_input;
    } catch (const std::exception& e) {
        err << "mlc: " << e.what() << "\n";
        return other;
    }
    return ok;
}

} // namespace mlc::cli
