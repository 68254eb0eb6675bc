#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mlc/csv.hpp"
#include "mlc/error.hpp"

namespace mlc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ModelRecord {
    std::string model_id;
    std::vector<double> raw_capabilities;
    std::vector<double> raw_costs;
    double cost = 0.0;
};

/// Column declaration for a models table. `cost` names the scalar deployment cost column;
/// it may be one of `costs` or a separate column. Empty means the first cost column.
struct CatalogSchema {
    std::vector<std::string> capabilities;
    std::vector<std::string> costs;
    std::string cost;

    std::string cost_column() const {
        if (!cost.empty()) return cost;
        if (costs.empty()) fail("schema declares no cost column");
        return costs.front();
    }
};

class Catalog {
public:
    std::vector<ModelRecord> models;
    std::vector<std::string> capability_names;
    std::vector<std::string> cost_names;

    std::size_t size() const { return models.size(); }

    std::optional<std::size_t> find(const std::string& id) const {
        for (std::size_t i = 0; i < models.size(); ++i)
            if (models[i].model_id == id) return i;
        return std::nullopt;
    }

    std::size_t index_of(const std::string& id) const {
        auto i = find(id);
        if (!i) fail("unknown model_id '" + id + "'");
        return *i;
    }

    Matrix capability_matrix() const {
        Matrix X(models.size(), capability_names.size());
        for (std::size_t r = 0; r < models.size(); ++r)
            for (std::size_t c = 0; c < capability_names.size(); ++c) X(r, c) = models[r].raw_capabilities[c];
        return X;
    }

    std::vector<double> costs() const {
        std::vector<double> out;
        out.reserve(models.size());
        for (const auto& m : models) out.push_back(m.cost);
        return out;
    }

    void validate() const {
        if (models.size() < 2) fail("catalog needs at least 2 models, got " + std::to_string(models.size()));
        std::set<std::string> seen;
        for (std::size_t r = 0; r < models.size(); ++r) {
            const auto& m = models[r];
            if (m.model_id.empty()) fail("empty model_id at index " + std::to_string(r));
            if (!seen.insert(m.model_id).second) fail("duplicate model_id '" + m.model_id + "'");
            if (m.raw_capabilities.size() != capability_names.size() || m.raw_costs.size() != cost_names.size())
                fail("model '" + m.model_id + "' has the wrong number of values");
            for (double v : m.raw_capabilities)
                if (!std::isfinite(v)) fail("non-finite capability for '" + m.model_id + "'");
            for (double v : m.raw_costs)
                if (!std::isfinite(v)) fail("non-finite cost component for '" + m.model_id + "'");
            if (!std::isfinite(m.cost) || m.cost < 0) fail("cost must be finite and >= 0 for '" + m.model_id + "'");
        }
    }
};

inline CatalogSchema parse_schema(const nlohmann::json& j) {
    CatalogSchema s;
    try {
        s.capabilities = j.at("capabilities").get<std::vector<std::string>>();
        s.costs = j.value("costs", std::vector<std::string>{});
        s.cost = j.value("cost", std::string{});
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("invalid schema: ") + e.what());
    }
    if (s.capabilities.empty()) fail("schema declares no capability columns");
    if (s.costs.empty() && s.cost.empty()) fail("schema declares no cost column");
    return s;
}

inline CatalogSchema load_schema(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(csv::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail("schema '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_schema(j);
}

inline nlohmann::json schema_to_json(const CatalogSchema& s) {
    return {{"capabilities", s.capabilities}, {"costs", s.costs}, {"cost", s.cost}};
}

inline Catalog parse_catalog(const std::string& text, const CatalogSchema& schema) {
    auto rows = csv::parse(text);
    if (rows.empty()) throw TableError("empty models table", 1, "");
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t c = 0; c < rows[0].size(); ++c) col[csv::trim(rows[0][c])] = c;
    auto need = [&](const std::string& name) {
        auto it = col.find(name);
        if (it == col.end()) throw TableError("missing column", 1, name);
        return it->second;
    };
    std::size_t id_col = need("model_id");
    std::vector<std::size_t> cap_cols, cost_cols;
    for (const auto& n : schema.capabilities) cap_cols.push_back(need(n));
    for (const auto& n : schema.costs) cost_cols.push_back(need(n));
    std::size_t scalar_col = need(schema.cost_column());

    Catalog cat;
    cat.capability_names = schema.capabilities;
    cat.cost_names = schema.costs;
    std::set<std::string> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        std::size_t line = r + 1;
        if (row.size() != rows[0].size())
            throw TableError("expected " + std::to_string(rows[0].size()) + " cells, got " + std::to_string(row.size()),
                             line, "");
        ModelRecord m;
        m.model_id = csv::trim(row[id_col]);
        if (m.model_id.empty()) throw TableError("empty model_id", line, "model_id");
        if (!seen.insert(m.model_id).second) throw TableError("duplicate model_id '" + m.model_id + "'", line, "model_id");
        for (std::size_t k = 0; k < cap_cols.size(); ++k)
            m.raw_capabilities.push_back(csv::to_real(row[cap_cols[k]], line, schema.capabilities[k]));
        for (std::size_t k = 0; k < cost_cols.size(); ++k)
            m.raw_costs.push_back(csv::to_real(row[cost_cols[k]], line, schema.costs[k]));
        m.cost = csv::to_real(row[scalar_col], line, schema.cost_column());
        if (m.cost < 0) throw TableError("negative cost", line, schema.cost_column());
        cat.models.push_back(std::move(m));
    }
    cat.validate();
    return cat;
}

inline Catalog load_catalog(const std::string& path, const CatalogSchema& schema) {
    return parse_catalog(csv::read_file(path), schema);
}

/// Writes model_id, capabilities, costs and (if not among the costs) the scalar cost column.
inline std::string format_catalog(const Catalog& cat, const CatalogSchema& schema) {
    std::string out = "model_id";
    for (const auto& n : cat.capability_names) out += "," + csv::quote(n);
    for (const auto& n : cat.cost_names) out += "," + csv::quote(n);
    std::string cc = schema.cost_column();
    bool separate = std::find(cat.cost_names.begin(), cat.cost_names.end(), cc) == cat.cost_names.end();
    if (separate) out += "," + csv::quote(cc);
    out += "\n";
    for (const auto& m : cat.models) {
        out += csv::quote(m.model_id);
        for (double v : m.raw_capabilities) out += "," + csv::format_real(v);
        for (double v : m.raw_costs) out += "," + csv::format_real(v);
        if (separate) out += "," + csv::format_real(m.cost);
        out += "\n";
    }
    return out;
}

inline void save_catalog(const Catalog& cat, const CatalogSchema& schema, const std::string& path) {
    csv::write_file(path, format_catalog(cat, schema));
}

// ---------------------------------------------------------------------------
// interactions

struct OutcomeRecord {
    std::string interaction_id;
    std::string model_id;
    std::map<std::string, std::string> context;
    std::optional<double> score;
    std::optional<int> label;
};

/// Columns other than interaction_id, model_id, score, label are context columns.
/// Empty score/label cells mean "absent".
inline std::vector<OutcomeRecord> parse_interactions(const std::string& text, const Catalog* catalog = nullptr) {
    auto rows = csv::parse(text);
    if (rows.empty()) throw TableError("empty interactions table", 1, "");
    const auto& header = rows[0];
    std::optional<std::size_t> iid, mid, sc, lb;
    std::vector<std::pair<std::size_t, std::string>> ctx;
    for (std::size_t c = 0; c < header.size(); ++c) {
        std::string h = csv::trim(header[c]);
        if (h == "interaction_id") iid = c;
        else if (h == "model_id") mid = c;
        else if (h == "score") sc = c;
        else if (h == "label") lb = c;
        else ctx.emplace_back(c, h);
    }
    if (!iid) throw TableError("missing column", 1, "interaction_id");
    if (!mid) throw TableError("missing column", 1, "model_id");
    if (!sc && !lb) throw TableError("missing column (need score or label)", 1, "score");
    std::vector<OutcomeRecord> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        std::size_t line = r + 1;
        if (row.size() != header.size()) throw TableError("wrong number of cells", line, "");
        OutcomeRecord rec;
        rec.interaction_id = csv::trim(row[*iid]);
        rec.model_id = csv::trim(row[*mid]);
        if (catalog && !catalog->find(rec.model_id))
            throw TableError("unknown model_id '" + rec.model_id + "'", line, "model_id");
        for (auto& [c, name] : ctx) rec.context[name] = csv::trim(row[c]);
        if (sc && !csv::trim(row[*sc]).empty()) rec.score = csv::to_real(row[*sc], line, "score");
        if (lb && !csv::trim(row[*lb]).empty()) {
            double v = csv::to_real(row[*lb], line, "label");
            if (v != 0.0 && v != 1.0) throw TableError("label must be 0 or 1", line, "label");
            rec.label = static_cast<int>(v);
        }
        if (!rec.score && !rec.label) throw TableError("neither score nor label present", line, "");
        out.push_back(std::move(rec));
    }
    return out;
}

inline std::vector<OutcomeRecord> load_interactions(const std::string& path, const Catalog* catalog = nullptr) {
    return parse_interactions(csv::read_file(path), catalog);
}

// ---------------------------------------------------------------------------
// scenarios

enum class Aggregation { per_type, average, robust };
enum class Strategy { argmax, nearest };
enum class CostNormalization { raw, minmax };

inline const char* to_string(Aggregation a) {
    switch (a) {
    case Aggregation::per_type: return "per_type";
    case Aggregation::average: return "average";
    default: return "robust";
    }
}
inline const char* to_string(Strategy s) { return s == Strategy::argmax ? "argmax" : "nearest"; }
inline const char* to_string(CostNormalization c) { return c == CostNormalization::raw ? "raw" : "minmax"; }

struct Scenario {
    double lambda = 0.0;
    std::optional<double> budget;
    std::map<std::size_t, double> compliance_floors;   // 0-based measure index
    std::map<std::string, double> context_weights;
    Aggregation aggregation = Aggregation::per_type;
    Strategy selection_strategy = Strategy::argmax;
    CostNormalization cost_normalization = CostNormalization::raw;
    bool restrict_to_target_tier = false;

    void validate() const {
        if (!std::isfinite(lambda) || lambda < 0) fail("lambda must be finite and >= 0");
        if (budget && !(std::isfinite(*budget) && *budget > 0)) fail("budget must be positive");
        for (auto& [k, v] : compliance_floors)
            if (!(v >= 0 && v < 1)) fail("compliance floor C" + std::to_string(k + 1) + " must lie in [0,1)");
        double s = 0;
        for (auto& [g, w] : context_weights) {
            if (!(std::isfinite(w) && w >= 0)) fail("context weight for '" + g + "' must be finite and >= 0");
            s += w;
        }
        if (aggregation != Aggregation::per_type && !context_weights.empty() && !(s > 0))
            fail("context weights must have a positive sum");
    }
};

/// Floors are keyed by measure name "C1".."CI" (a bare 1-based integer is also accepted).
inline std::size_t parse_measure_key(const std::string& key) {
    std::string digits = key;
    if (!digits.empty() && (digits[0] == 'C' || digits[0] == 'c')) digits = digits.substr(1);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
        fail("unknown measure key '" + key + "' (expected C1, C2, ...)");
    long k = std::stol(digits);
    if (k < 1) fail("measure keys are 1-based: '" + key + "'");
    return static_cast<std::size_t>(k - 1);
}

inline Scenario parse_scenario(const nlohmann::json& j) {
    if (!j.is_object()) fail("scenario must be a JSON object");
    static const std::set<std::string> known = {"lambda", "budget", "compliance_floors", "context_weights",
                                                "aggregation", "selection_strategy", "cost_normalization",
                                                "restrict_to_target_tier"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) fail("unknown scenario key '" + it.key() + "'");
    Scenario s;
    auto num = [&](const nlohmann::json& v, const std::string& what) {
        if (!v.is_number()) fail(what + " must be a number");
        return v.get<double>();
    };
    if (j.contains("lambda")) s.lambda = num(j["lambda"], "lambda");
    if (j.contains("budget") && !j["budget"].is_null()) s.budget = num(j["budget"], "budget");
    if (j.contains("compliance_floors")) {
        const auto& f = j["compliance_floors"];
        if (!f.is_object()) fail("compliance_floors must be an object");
        for (auto it = f.begin(); it != f.end(); ++it)
            s.compliance_floors[parse_measure_key(it.key())] = num(it.value(), "floor " + it.key());
    }
    if (j.contains("context_weights")) {
        const auto& w = j["context_weights"];
        if (!w.is_object()) fail("context_weights must be an object");
        for (auto it = w.begin(); it != w.end(); ++it) s.context_weights[it.key()] = num(it.value(), "weight " + it.key());
    }
    auto str = [&](const char* key) -> std::optional<std::string> {
        if (!j.contains(key)) return std::nullopt;
        if (!j[key].is_string()) fail(std::string(key) + " must be a string");
        return j[key].get<std::string>();
    };
    if (auto a = str("aggregation")) {
        if (*a == "per_type") s.aggregation = Aggregation::per_type;
        else if (*a == "average") s.aggregation = Aggregation::average;
        else if (*a == "robust") s.aggregation = Aggregation::robust;
        else fail("unknown aggregation '" + *a + "'");
    }
    if (auto a = str("selection_strategy")) {
        if (*a == "argmax") s.selection_strategy = Strategy::argmax;
        else if (*a == "nearest") s.selection_strategy = Strategy::nearest;
        else fail("unknown selection_strategy '" + *a + "'");
    }
    if (auto a = str("cost_normalization")) {
        if (*a == "raw") s.cost_normalization = CostNormalization::raw;
        else if (*a == "minmax") s.cost_normalization = CostNormalization::minmax;
        else fail("unknown cost_normalization '" + *a + "'");
    }
    if (j.contains("restrict_to_target_tier")) {
        if (!j["restrict_to_target_tier"].is_boolean()) fail("restrict_to_target_tier must be a boolean");
        s.restrict_to_target_tier = j["restrict_to_target_tier"].get<bool>();
    }
    s.validate();
    return s;
}

inline Scenario load_scenario(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(csv::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail("scenario '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_scenario(j);
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
    nlohmann::json floors = nlohmann::json::object(), weights = nlohmann::json::object();
    for (auto& [k, v] : s.compliance_floors) floors["C" + std::to_string(k + 1)] = v;
    for (auto& [g, w] : s.context_weights) weights[g] = w;
    return {{"lambda", s.lambda},
            {"budget", s.budget ? nlohmann::json(*s.budget) : nlohmann::json(nullptr)},
            {"compliance_floors", floors},
            {"context_weights", weights},
            {"aggregation", to_string(s.aggregation)},
            {"selection_strategy", to_string(s.selection_strategy)},
            {"cost_normalization", to_string(s.cost_normalization)},
            {"restrict_to_target_tier", s.restrict_to_target_tier}};
}

// ---------------------------------------------------------------------------
// min-max scaling

struct ScalerParams {
    std::vector<double> min;
    std::vector<double> max;
    std::vector<bool> degenerate;   // zero-range columns

    Matrix apply(const Matrix& X) const {
        if (static_cast<std::size_t>(X.cols()) != min.size()) fail("scaler column count mismatch");
        Matrix Y(X.rows(), X.cols());
        for (Eigen::Index c = 0; c < X.cols(); ++c) {
            double range = max[c] - min[c];
            for (Eigen::Index r = 0; r < X.rows(); ++r) Y(r, c) = degenerate[c] ? 0.0 : (X(r, c) - min[c]) / range;
        }
        return Y;
    }

    Matrix invert(const Matrix& Y) const {
        if (static_cast<std::size_t>(Y.cols()) != min.size()) fail("scaler column count mismatch");
        Matrix X(Y.rows(), Y.cols());
        for (Eigen::Index c = 0; c < Y.cols(); ++c)
            for (Eigen::Index r = 0; r < Y.rows(); ++r)
                X(r, c) = degenerate[c] ? min[c] : min[c] + Y(r, c) * (max[c] - min[c]);
        return X;
    }
};

/// Column-wise affine map onto [0,1]; zero-range columns map to 0 and are flagged.
inline std::pair<Matrix, ScalerParams> minmax_scale(const Matrix& X) {
    if (X.rows() == 0 || X.cols() == 0) fail("minmax_scale: empty matrix");
    if (!X.allFinite()) fail("minmax_scale: non-finite entry");
    ScalerParams p;
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        double lo = X.col(c).minCoeff(), hi = X.col(c).maxCoeff();
        p.min.push_back(lo);
        p.max.push_back(hi);
        p.degenerate.push_back(!(hi > lo));
    }
    return {p.apply(X), p};
}

} // namespace mlc
