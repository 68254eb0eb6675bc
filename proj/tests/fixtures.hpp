#pragma once
// Eight-model PRISM catalog (internal measures and blended price) and the per-group linear index weights.

#include <map>
#include <string>

#include "mlc/catalog.hpp"
#include "mlc/frontier.hpp"
#include "mlc/measures.hpp"
#include "mlc/planner.hpp"
#include "mlc/utility.hpp"

namespace fixture {

struct Row {
    const char* id;
    double c1, c2, price;
};

inline const Row kPrism[] = {
    {"cohere-command", 1.00, 0.59, 1.62},
    {"gpt-4-1106-preview", 0.66, 1.00, 15.00},
    {"gpt-4", 0.62, 0.97, 37.50},
    {"claude-2.1", 0.49, 0.77, 12.00},
    {"claude-instant-1", 0.79, 0.71, 1.20},
    {"oasst-pythia-12b", 0.61, 0.00, 0.30},
    {"mistral-7b-instruct-v0.1", 0.58, 0.50, 0.16},
    {"llama-2-7b-chat", 0.60, 0.39, 0.10},
};

inline mlc::Catalog prism_catalog() {
    mlc::Catalog c;
    c.capability_names = {"C1", "C2"};
    c.cost_names = {"price"};
    for (const auto& r : kPrism) c.models.push_back({r.id, {r.c1, r.c2}, {r.price}, r.price});
    return c;
}

inline std::string prism_csv() {
    std::string s = "model_id,C1,C2,price\n";
    for (const auto& r : kPrism)
        s += std::string(r.id) + "," + mlc::csv::format_real(r.c1) + "," + mlc::csv::format_real(r.c2) + "," +
             mlc::csv::format_real(r.price) + "\n";
    return s;
}

inline mlc::CatalogSchema prism_schema() { return {{"C1", "C2"}, {"price"}, "price"}; }

inline mlc::MeasureSet prism_measures(const mlc::Catalog& c) {
    mlc::ExtractConfig cfg;
    cfg.bypass = true;
    return mlc::extract_measures(c, cfg);
}

inline mlc::Vector v2(double x, double y) {
    mlc::Vector v(2);
    v << x, y;
    return v;
}

/// Normalized linear index weights per user type.
inline mlc::UtilitySet prism_utilities() {
    return {{"Ethics-focused", mlc::linear_score_model(v2(1.000, 0.000))},
            {"Safety-focused", mlc::linear_score_model(v2(0.017, 0.983))},
            {"General", mlc::linear_score_model(v2(0.579, 0.421))}};
}

/// Frontier with the reported PRISM parameters; tiers from peeling the fixture measures.
inline mlc::FrontierFit prism_frontier(const mlc::Catalog& c, const mlc::MeasureSet& ms) {
    mlc::FrontierFit f;
    f.a = v2(0.53, 0.47);
    f.b = 2.67;
    f.c0 = 0.49;
    f.d = 0.21;
    f.tier_levels = {0.52, 0.66, 0.79};
    f.tiers = mlc::peel_and_tier(ms, 3, 0.0);
    std::vector<std::vector<double>> tc(3);
    for (const auto& m : c.models) tc[f.tiers.tiers.at(m.model_id) - 1].push_back(m.cost);
    for (auto& v : tc) f.tier_costs.push_back(mlc::aggregate_costs(v, mlc::CostAggregate::median));
    f.tier_costs = mlc::pava(f.tier_costs);
    f.converged = true;
    return f;
}

} // namespace fixture
