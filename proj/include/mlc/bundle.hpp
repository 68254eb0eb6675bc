#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlc/catalog.hpp"
#include "mlc/frontier.hpp"
#include "mlc/measures.hpp"
#include "mlc/planner.hpp"
#include "mlc/stylized.hpp"
#include "mlc/utility.hpp"

namespace mlc {

using json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "1";

// ---------------------------------------------------------------------------
// primitives

inline json to_json(const Vector& v) {
    json j = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

inline Vector vector_from_json(const json& j) {
    if (!j.is_array()) fail("expected a numeric array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) fail("expected a numeric array");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline json to_json(const Matrix& m) {
    json j = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(to_json(Vector(m.row(r).transpose())));
    return j;
}

inline Matrix matrix_from_json(const json& j, Eigen::Index cols_if_empty = 0) {
    if (!j.is_array()) fail("expected an array of rows");
    if (j.empty()) return Matrix(0, cols_if_empty);
    Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
    for (std::size_t r = 0; r < j.size(); ++r) {
        Vector v = vector_from_json(j[r]);
        if (v.size() != m.cols()) fail("ragged matrix");
        m.row(static_cast<Eigen::Index>(r)) = v.transpose();
    }
    return m;
}

/// FNV-1a, 64 bit, hex.
inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// catalog

inline json to_json(const Catalog& c) {
    json models = json::array();
    for (const auto& m : c.models)
        models.push_back({{"model_id", m.model_id},
                          {"raw_capabilities", m.raw_capabilities},
                          {"raw_costs", m.raw_costs},
                          {"cost", m.cost}});
    return {{"capability_names", c.capability_names}, {"cost_names", c.cost_names}, {"models", models}};
}

inline Catalog catalog_from_json(const json& j) {
    Catalog c;
    try {
        c.capability_names = j.at("capability_names").get<std::vector<std::string>>();
        c.cost_names = j.at("cost_names").get<std::vector<std::string>>();
        for (const auto& m : j.at("models"))
            c.models.push_back({m.at("model_id").get<std::string>(), m.at("raw_capabilities").get<std::vector<double>>(),
                                m.at("raw_costs").get<std::vector<double>>(), m.at("cost").get<double>()});
    } catch (const json::exception& e) {
        fail(std::string("invalid catalog block: ") + e.what());
    }
    c.validate();
    return c;
}

/// Digest of the catalog content, independent of row order.
inline std::string catalog_digest(const Catalog& c) {
    Catalog sorted = c;
    std::sort(sorted.models.begin(), sorted.models.end(),
              [](const ModelRecord& a, const ModelRecord& b) { return a.model_id < b.model_id; });
    return fnv1a_hex(to_json(sorted).dump());
}

// ---------------------------------------------------------------------------
// measures

inline json to_json(const ScalerParams& s) {
    return {{"min", s.min}, {"max", s.max}, {"degenerate", s.degenerate}};
}

inline ScalerParams scaler_from_json(const json& j) {
    ScalerParams s;
    s.min = j.at("min").get<std::vector<double>>();
    s.max = j.at("max").get<std::vector<double>>();
    s.degenerate = j.at("degenerate").get<std::vector<bool>>();
    return s;
}

inline json to_json(const LoadingMatrix& L) {
    return {{"loadings", to_json(L.loadings)},
            {"factor_count", L.factor_count},
            {"explained_variance", L.explained_variance},
            {"rotated", L.rotated},
            {"sparsified", L.sparsified},
            {"varimax_history", L.varimax_history}};
}

inline LoadingMatrix loadings_from_json(const json& j) {
    LoadingMatrix L;
    L.factor_count = j.at("factor_count").get<int>();
    L.loadings = matrix_from_json(j.at("loadings"), L.factor_count);
    L.explained_variance = j.at("explained_variance").get<std::vector<double>>();
    L.rotated = j.at("rotated").get<bool>();
    L.sparsified = j.at("sparsified").get<bool>();
    L.varimax_history = j.value("varimax_history", std::vector<double>{});
    return L;
}

inline json to_json(const MeasureSet& m) {
    json rows = json::object();
    for (std::size_t i = 0; i < m.model_ids.size(); ++i) rows[m.model_ids[i]] = to_json(m.row(i));
    return {{"measures", rows},
            {"order", m.model_ids},
            {"column_mean", m.column_mean},
            {"column_sd", m.column_sd},
            {"bypass", m.bypass}};
}

inline MeasureSet measures_from_json(const json& j, const ScalerParams& scaler, const LoadingMatrix& L) {
    MeasureSet m;
    m.model_ids = j.at("order").get<std::vector<std::string>>();
    const auto& rows = j.at("measures");
    m.measures.resize(static_cast<Eigen::Index>(m.model_ids.size()), L.factor_count);
    for (std::size_t i = 0; i < m.model_ids.size(); ++i) {
        Vector v = vector_from_json(rows.at(m.model_ids[i]));
        if (v.size() != L.factor_count) fail("measure row width does not match factor_count");
        m.measures.row(static_cast<Eigen::Index>(i)) = v.transpose();
    }
    m.column_mean = j.at("column_mean").get<std::vector<double>>();
    m.column_sd = j.at("column_sd").get<std::vector<double>>();
    m.bypass = j.at("bypass").get<bool>();
    m.scaler = scaler;
    m.loading_matrix = L;
    return m;
}

// ---------------------------------------------------------------------------
// frontier

inline json to_json(const TierStructure& t) {
    return {{"layers", t.layers}, {"assignment", t.tiers}, {"efficient", t.efficient}, {"tolerance", t.tolerance}};
}

inline TierStructure tiers_from_json(const json& j) {
    TierStructure t;
    t.layers = j.at("layers").get<std::vector<std::vector<std::string>>>();
    t.tiers = j.at("assignment").get<std::map<std::string, int>>();
    t.efficient = j.at("efficient").get<std::vector<std::vector<std::string>>>();
    t.tolerance = j.at("tolerance").get<double>();
    return t;
}

inline json to_json(const FrontierFit& f) {
    return {{"a", to_json(f.a)},
            {"b", f.b},
            {"tier_levels", f.tier_levels},
            {"c0", f.c0},
            {"d", f.d},
            {"tier_costs", f.tier_costs},
            {"fit_loss", f.fit_loss},
            {"iterations", f.iterations},
            {"converged", f.converged},
            {"degenerate", f.degenerate},
            {"single_tier", f.single_tier},
            {"d_clamped", f.d_clamped},
            {"stylized_regime", f.stylized_regime()},
            {"tiers", to_json(f.tiers)}};
}

inline FrontierFit frontier_from_json(const json& j) {
    FrontierFit f;
    try {
        f.a = vector_from_json(j.at("a"));
        f.b = j.at("b").get<double>();
        f.tier_levels = j.at("tier_levels").get<std::vector<double>>();
        f.c0 = j.at("c0").get<double>();
        f.d = j.at("d").get<double>();
        f.tier_costs = j.at("tier_costs").get<std::vector<double>>();
        f.fit_loss = j.value("fit_loss", 0.0);
        f.iterations = j.value("iterations", 0);
        f.converged = j.value("converged", true);
        f.degenerate = j.value("degenerate", false);
        f.single_tier = j.value("single_tier", false);
        f.d_clamped = j.value("d_clamped", false);
        if (j.contains("tiers")) f.tiers = tiers_from_json(j.at("tiers"));
    } catch (const json::exception& e) {
        fail(std::string("invalid frontier block: ") + e.what());
    }
    if (!(f.b > 0) || !(f.c0 > 0) || !(f.d > 0) || f.a.size() == 0) fail("frontier parameters must be positive");
    return f;
}

// ---------------------------------------------------------------------------
// utility models

inline json tree_node_to_json(const Tree& t, int k) {
    const auto& n = t.nodes[k];
    if (n.feature < 0) return {{"leaf", n.value}};
    return {{"feature", n.feature},
            {"threshold", n.threshold},
            {"left", tree_node_to_json(t, n.left)},
            {"right", tree_node_to_json(t, n.right)}};
}

inline int tree_node_from_json(const json& j, Tree& t) {
    if (j.contains("leaf")) {
        t.nodes.push_back(TreeNode{-1, 0.0, -1, -1, j.at("leaf").get<double>()});
        return static_cast<int>(t.nodes.size()) - 1;
    }
    t.nodes.push_back(TreeNode{j.at("feature").get<int>(), j.at("threshold").get<double>(), -1, -1, 0.0});
    int self = static_cast<int>(t.nodes.size()) - 1;
    int l = tree_node_from_json(j.at("left"), t);
    int r = tree_node_from_json(j.at("right"), t);
    t.nodes[self].left = l;
    t.nodes[self].right = r;
    return self;
}

inline json to_json(const UtilityModel& m) {
    json j = {{"kind", to_string(m.kind)},
              {"intercept", m.intercept},
              {"coefficients", to_json(m.coefficients)},
              {"normalized_weights", to_json(m.normalized_weights)},
              {"converged", m.converged},
              {"flagged", m.flagged}};
    if (m.kind == UtilityKind::tree_ensemble) {
        j["learning_rate"] = m.learning_rate;
        json trees = json::array();
        for (const auto& t : m.trees) trees.push_back(tree_node_to_json(t, 0));
        j["trees"] = trees;
    }
    return j;
}

inline UtilityModel utility_from_json(const json& j) {
    UtilityModel m;
    try {
        m.kind = parse_utility_kind(j.at("kind").get<std::string>());
        m.intercept = j.value("intercept", 0.0);
        m.normalized_weights = vector_from_json(j.at("normalized_weights"));
        m.coefficients = j.contains("coefficients") ? vector_from_json(j.at("coefficients"))
                                                    : Vector(m.normalized_weights);
        m.converged = j.value("converged", true);
        m.flagged = j.value("flagged", false);
        if (m.kind == UtilityKind::tree_ensemble) {
            m.learning_rate = j.at("learning_rate").get<double>();
            for (const auto& tj : j.at("trees")) {
                Tree t;
                tree_node_from_json(tj, t);
                m.trees.push_back(std::move(t));
            }
        }
    } catch (const json::exception& e) {
        fail(std::string("invalid utility model: ") + e.what());
    }
    if (m.coefficients.size() != m.normalized_weights.size()) fail("utility model dimensions disagree");
    return m;
}

struct UtilityMetrics {
    double train_auc = 0.5;
    double test_auc = 0.5;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
};

// ---------------------------------------------------------------------------
// bundle

struct ArtifactBundle {
    std::string schema_version = kSchemaVersion;
    Catalog catalog;
    std::string catalog_digest;
    std::optional<MeasureSet> measures;
    std::optional<FrontierFit> frontier;
    UtilitySet utilities;
    std::map<std::string, UtilityMetrics> utility_metrics;
    json config = json::object();   // settings used to produce the bundle

    int dim() const { return measures ? measures->dim() : 0; }

    void validate() const {
        if (schema_version != kSchemaVersion) fail("unsupported schema_version '" + schema_version + "'");
        if (catalog_digest != mlc::catalog_digest(catalog)) fail("catalog digest does not match the embedded catalog");
        if (!measures) return;
        const int I = measures->dim();
        if (measures->model_ids.size() != catalog.size()) fail("measure set does not cover the catalog");
        for (const auto& m : catalog.models)
            if (!measures->find(m.model_id)) fail("no measures for '" + m.model_id + "'");
        if (frontier && frontier->dim() != I) fail("frontier dimension differs from the measure dimension");
        for (auto& [g, u] : utilities)
            if (u.dim() != I) fail("utility '" + g + "' dimension differs from the measure dimension");
    }
};

inline ArtifactBundle make_bundle(const Catalog& cat) {
    ArtifactBundle b;
    b.catalog = cat;
    b.catalog_digest = catalog_digest(cat);
    return b;
}

inline json to_json(const ArtifactBundle& b) {
    json j = {{"schema_version", b.schema_version},
              {"catalog", to_json(b.catalog)},
              {"catalog_digest", b.catalog_digest},
              {"config", b.config}};
    if (b.measures) {
        j["scaler"] = to_json(b.measures->scaler);
        j["loading_matrix"] = to_json(b.measures->loading_matrix);
        j["measure_set"] = to_json(*b.measures);
    }
    if (b.frontier) j["frontier_fit"] = to_json(*b.frontier);
    if (!b.utilities.empty()) {
        json u = json::object(), m = json::object();
        for (auto& [g, model] : b.utilities) u[g] = to_json(model);
        for (auto& [g, met] : b.utility_metrics)
            m[g] = {{"train_auc", met.train_auc}, {"test_auc", met.test_auc}, {"n_train", met.n_train}, {"n_test", met.n_test}};
        j["utility_models"] = u;
        j["utility_metrics"] = m;
    }
    return j;
}

inline ArtifactBundle bundle_from_json(const json& j) {
    ArtifactBundle b;
    try {
        b.schema_version = j.at("schema_version").get<std::string>();
        if (b.schema_version != kSchemaVersion) fail("unsupported schema_version '" + b.schema_version + "'");
        b.catalog = catalog_from_json(j.at("catalog"));
        b.catalog_digest = j.at("catalog_digest").get<std::string>();
        b.config = j.value("config", json::object());
        if (j.contains("measure_set"))
            b.measures = measures_from_json(j.at("measure_set"), scaler_from_json(j.at("scaler")),
                                            loadings_from_json(j.at("loading_matrix")));
        if (j.contains("frontier_fit")) b.frontier = frontier_from_json(j.at("frontier_fit"));
        if (j.contains("utility_models"))
            for (auto it = j["utility_models"].begin(); it != j["utility_models"].end(); ++it)
                b.utilities[it.key()] = utility_from_json(it.value());
        if (j.contains("utility_metrics"))
            for (auto it = j["utility_metrics"].begin(); it != j["utility_metrics"].end(); ++it)
                b.utility_metrics[it.key()] = {it.value().at("train_auc").get<double>(),
                                               it.value().at("test_auc").get<double>(),
                                               it.value().at("n_train").get<std::size_t>(),
                                               it.value().at("n_test").get<std::size_t>()};
    } catch (const json::exception& e) {
        fail(std::string("invalid bundle: ") + e.what());
    }
    b.validate();
    return b;
}

inline std::string dump_bundle(const ArtifactBundle& b) { return to_json(b).dump(2) + "\n"; }

inline ArtifactBundle load_bundle(const std::string& path) {
    json j;
    try {
        j = json::parse(csv::read_file(path));
    } catch (const json::parse_error& e) {
        fail("bundle '" + path + "' is not valid JSON: " + e.what());
    }
    return bundle_from_json(j);
}

// ---------------------------------------------------------------------------
// planner outputs

inline json to_json(const StylizedSolution& s) {
    json regimes = json::array();
    for (auto r : s.regimes) regimes.push_back(to_string(r));
    return {{"x_star", to_json(s.x_star)},
            {"c_star", s.c_star},
            {"mu0", s.mu0},
            {"regimes", regimes},
            {"budget_binding", s.budget_binding},
            {"zero_solution", s.zero_solution},
            {"objective", s.objective},
            {"kkt_residual", s.kkt_residual}};
}

inline json to_json(const SensitivityReport& r) {
    json j = {{"W_star", r.W},
              {"Y_star", r.Y},
              {"Z_star", r.Z},
              {"Z_int_star", r.Z_int},
              {"budget_binding", r.budget_binding},
              {"interior_empty", r.interior_empty},
              {"spillovers", to_json(r.spillovers)},
              {"dc_dRk", to_json(r.dc_dRk)},
              {"direct", to_json(r.direct)},
              {"regulatory_degenerate", r.regulatory_degenerate}};
    if (r.has_budget) {
        j["eps_B"] = r.eps_B;
        j["dx_dB"] = to_json(r.dx_dB);
    }
    if (r.has_technology) {
        j["eps_c"] = r.eps_c;
        j["eps_d"] = r.eps_d;
        j["gamma"] = r.gamma;
        j["eta_b"] = to_json(r.eta_b);
    }
    return j;
}

inline json to_json(const Target& t) {
    json j = {{"method", t.method}, {"infeasible", t.infeasible}, {"binding", t.binding}};
    if (!t.infeasible) {
        j["x"] = to_json(t.x);
        j["c"] = t.c;
        j["utility"] = t.utility;
        j["objective"] = t.objective;
    }
    if (t.solution) j["stylized"] = to_json(*t.solution);
    return j;
}

inline json to_json(const Recommendation& r) {
    json j = {{"context", r.context},
              {"target", to_json(r.target)},
              {"target_tier", r.target_tier ? json(*r.target_tier) : json(nullptr)},
              {"selected_model", r.selected_model ? json(*r.selected_model) : json(nullptr)},
              {"binding", r.binding},
              {"infeasible", r.infeasible}};
    if (r.selected_model) {
        j["selected_x"] = to_json(r.selected_x);
        j["selected_cost"] = r.selected_cost;
        j["selected_cost_used"] = r.selected_cost_used;
        j["selected_tier"] = r.selected_tier ? json(*r.selected_tier) : json(nullptr);
        j["achieved_utility"] = r.achieved_utility;
        j["deployment_value"] = r.deployment_value;
    }
    return j;
}

inline json to_json(const std::vector<LeaderboardEntry>& rows) {
    json j = json::array();
    for (const auto& e : rows)
        j.push_back({{"rank", e.rank ? json(*e.rank) : json(nullptr)},
                     {"model_id", e.model_id},
                     {"score", e.score},
                     {"feasible", e.feasible},
                     {"cost", e.cost_used},
                     {"utility_by_group", e.utility_by_group}});
    return j;
}

inline std::string leaderboard_csv(const std::vector<LeaderboardEntry>& rows) {
    std::string out = "rank,model_id,score,feasible,cost\n";
    for (const auto& e : rows)
        out += (e.rank ? std::to_string(*e.rank) : std::string()) + "," + csv::quote(e.model_id) + "," +
               csv::format_real(e.score) + "," + (e.feasible ? "true" : "false") + "," + csv::format_real(e.cost_used) +
               "\n";
    return out;
}

} // namespace mlc
