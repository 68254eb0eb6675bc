#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mlc/catalog.hpp"
#include "mlc/error.hpp"
#include "mlc/frontier.hpp"
#include "mlc/measures.hpp"
#include "mlc/stylized.hpp"
#include "mlc/utility.hpp"

namespace mlc {

using UtilitySet = std::map<std::string, UtilityModel>;

inline const std::string kAggregateContext = "aggregate";

/// Scenario cost convention: raw cost, or (c - c_min) / (c_max - c_min) over the catalog.
struct CostScale {
    double lo = 0.0;
    double range = 1.0;
    bool minmax = false;

    static CostScale of(const Catalog& cat, CostNormalization how) {
        CostScale s;
        if (how == CostNormalization::minmax) {
            auto c = cat.costs();
            s.minmax = true;
            s.lo = *std::min_element(c.begin(), c.end());
            double hi = *std::max_element(c.begin(), c.end());
            s.range = hi > s.lo ? hi - s.lo : 1.0;
        }
        return s;
    }
    double to_used(double raw) const { return minmax ? (raw - lo) / range : raw; }
    double to_raw(double used) const { return minmax ? lo + used * range : used; }
};

/// Normalised positive group weights. Empty scenario weights mean uniform over every fitted group.
inline std::map<std::string, double> group_weights(const UtilitySet& u, const Scenario& s) {
    if (u.empty()) fail("no utility models");
    std::map<std::string, double> w;
    if (s.context_weights.empty()) {
        for (auto& [g, m] : u) w[g] = 1.0;
    } else {
        for (auto& [g, v] : s.context_weights) {
            if (!u.count(g)) fail("context weight for unknown group '" + g + "'");
            if (v > 0) w[g] = v;
        }
    }
    double total = 0;
    for (auto& [g, v] : w) total += v;
    if (!(total > 0)) fail("context weights must have a positive sum");
    for (auto& [g, v] : w) v /= total;
    return w;
}

/// U(x) for one context, or the average / minimum across weighted groups.
struct UtilityEvaluator {
    std::vector<std::pair<const UtilityModel*, double>> groups;
    bool robust = false;

    double operator()(const Vector& x) const {
        if (robust) {
            double m = std::numeric_limits<double>::infinity();
            for (auto& [u, w] : groups) m = std::min(m, u->predict(x));
            return m;
        }
        double s = 0;
        for (auto& [u, w] : groups) s += w * u->predict(x);
        return s;
    }

    /// Combined normalized weight vector when U is a single linear index; empty otherwise.
    std::optional<Vector> linear_index() const {
        if (robust && groups.size() > 1) return std::nullopt;
        Vector beta = Vector::Zero(groups.front().first->dim());
        for (auto& [u, w] : groups) {
            if (u->kind != UtilityKind::linear_score) return std::nullopt;
            beta += w * u->normalized_weights;
        }
        return beta / beta.sum();
    }
};

inline UtilityEvaluator aggregate_objective(const UtilitySet& u, const Scenario& s, const std::string& context) {
    UtilityEvaluator e;
    if (context != kAggregateContext) {
        auto it = u.find(context);
        if (it == u.end()) fail("no utility model for context '" + context + "'");
        e.groups.emplace_back(&it->second, 1.0);
        return e;
    }
    for (auto& [g, w] : group_weights(u, s)) e.groups.emplace_back(&u.at(g), w);
    e.robust = s.aggregation == Aggregation::robust;
    return e;
}

// ---------------------------------------------------------------------------
// feasibility

struct FeasibleSet {
    std::vector<std::size_t> models;   // catalog indices
    bool infeasible = false;
};

inline bool is_feasible(const Vector& x, double cost_used, const Scenario& s) {
    if (s.budget && cost_used > *s.budget) return false;
    for (auto& [k, r] : s.compliance_floors)
        if (x(static_cast<Eigen::Index>(k)) < r) return false;
    return true;
}

inline void check_floors(const Scenario& s, int I) {
    for (auto& [k, r] : s.compliance_floors)
        if (static_cast<int>(k) >= I) fail("compliance floor on unknown measure C" + std::to_string(k + 1));
}

inline Vector measure_row(const MeasureSet& ms, const std::string& id) {
    auto i = ms.find(id);
    if (!i) fail("no measures for model '" + id + "'");
    return ms.row(*i);
}

inline FeasibleSet feasible_set(const Catalog& cat, const MeasureSet& ms, const Scenario& s) {
    check_floors(s, ms.dim());
    auto scale = CostScale::of(cat, s.cost_normalization);
    FeasibleSet f;
    for (std::size_t m = 0; m < cat.size(); ++m)
        if (is_feasible(measure_row(ms, cat.models[m].model_id), scale.to_used(cat.models[m].cost), s))
            f.models.push_back(m);
    f.infeasible = f.models.empty();
    return f;
}

// ---------------------------------------------------------------------------
// continuous target

struct GridConfig {
    int points = 41;
    int refine_steps = 50;
    unsigned threads = 0;   // 0 = hardware concurrency
};

struct Target {
    Vector x;
    double c = 0.0;          // raw cost units
    double utility = 0.0;
    double objective = 0.0;  // utility - lambda * cost in the scenario's convention
    std::string method;      // "closed_form" or "grid"
    bool infeasible = false;
    std::optional<StylizedInstance> instance;
    std::optional<StylizedSolution> solution;
    std::vector<std::string> binding;
};

namespace detail {

struct GridProblem {
    const FrontierFit& f;
    const UtilityEvaluator& U;
    Vector lo;          // floors
    double lambda_raw;  // per raw cost unit
    double B;           // raw budget

    // objective for x; -inf when the frontier cost exceeds the budget
    double value(const Vector& x, double* c_out = nullptr) const {
        double c = f.min_cost_for(x);
        if (c_out) *c_out = c;
        if (c > B * (1 + 1e-12)) return -std::numeric_limits<double>::infinity();
        return U(x) - lambda_raw * c;
    }
};

} // namespace detail

inline Target continuous_target(const Catalog& cat, const FrontierFit& f, const UtilityEvaluator& U, const Scenario& s,
                                 const GridConfig& gc = {}) {
    const int I = f.dim();
    check_floors(s, I);
    auto scale = CostScale::of(cat, s.cost_normalization);
    const double lambda_raw = s.lambda / scale.range;
    double B = 0;
    if (s.budget) B = scale.to_raw(*s.budget);
    else for (auto& m : cat.models) B = std::max(B, m.cost);
    Vector R = Vector::Zero(I);
    for (auto& [k, r] : s.compliance_floors) R(static_cast<Eigen::Index>(k)) = r;

    Target t;
    auto finish = [&](const Vector& x, double c) {
        t.x = x;
        t.c = c;
        t.utility = U(x);
        t.objective = t.utility - s.lambda * scale.to_used(c);
        for (int i = 0; i < I; ++i) {
            if (x(i) >= 1 - 1e-9) t.binding.push_back("ceiling:C" + std::to_string(i + 1));
            else if (s.compliance_floors.count(i) && x(i) <= R(i) + 1e-9) t.binding.push_back("floor:C" + std::to_string(i + 1));
        }
        if (c >= B * (1 - 1e-9)) t.binding.push_back("budget");
    };

    if (!(B > 0)) { t.infeasible = true; t.method = "none"; return t; }

    auto beta = U.linear_index();
    if (beta && f.stylized_regime()) {
        StylizedInstance in;
        in.beta = *beta;
        in.a = f.a / f.a.sum();
        in.b = f.b;
        in.c0 = f.c0;
        in.d = f.d;
        in.R = R;
        in.B = B;
        in.lambda = lambda_raw;
        t.method = "closed_form";
        if (!check_nondegeneracy(in).ok) { t.infeasible = true; return t; }
        auto sol = solve(in);
        finish(sol.x_star, sol.c_star);
        t.instance = in;
        t.solution = sol;
        return t;
    }

    t.method = "grid";
    detail::GridProblem P{f, U, R, lambda_raw, B};
    if (P.value(R) == -std::numeric_limits<double>::infinity()) { t.infeasible = true; return t; }
    const int G = std::max(gc.points, 2);
    long long total = 1;
    for (int i = 0; i < I; ++i) total *= G;
    auto point = [&](long long idx) {
        Vector x(I);
        for (int i = 0; i < I; ++i) {
            int k = static_cast<int>(idx % G);
            idx /= G;
            x(i) = R(i) + (1 - R(i)) * k / (G - 1);
        }
        return x;
    };
    unsigned W = gc.threads ? gc.threads : std::max(1u, std::thread::hardware_concurrency());
    W = static_cast<unsigned>(std::min<long long>(W, total));
    std::vector<std::pair<double, long long>> best(W, {-std::numeric_limits<double>::infinity(), -1});
    auto shard = [&](unsigned w) {
        for (long long idx = w; idx < total; idx += W) {
            double v = P.value(point(idx));
            if (v > best[w].first) best[w] = {v, idx};
        }
    };
    if (W == 1) shard(0);
    else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < W; ++w) pool.emplace_back(shard, w);
        for (auto& th : pool) th.join();
    }
    std::pair<double, long long> top{-std::numeric_limits<double>::infinity(), -1};
    for (auto& b : best)
        if (b.first > top.first || (b.first == top.first && b.second >= 0 && b.second < top.second)) top = b;
    Vector x = top.second >= 0 ? point(top.second) : R;
    double v = P.value(x);
    double step = 1.0 / (G - 1);
    for (int it = 0; it < gc.refine_steps; ++it) {
        bool improved = false;
        for (int i = 0; i < I; ++i)
            for (double dir : {1.0, -1.0}) {
                Vector y = x;
                y(i) = std::clamp(x(i) + dir * step, R(i), 1.0);
                double vy = P.value(y);
                if (vy > v) { x = y; v = vy; improved = true; }
            }
        if (!improved) step *= 0.5;
    }
    finish(x, f.min_cost_for(x));
    return t;
}

// ---------------------------------------------------------------------------
// recommendations and leaderboards

struct Recommendation {
    std::string context;
    Target target;
    std::optional<int> target_tier;
    std::optional<std::string> selected_model;
    Vector selected_x;
    double selected_cost = 0.0;       // raw
    double selected_cost_used = 0.0;  // scenario convention
    std::optional<int> selected_tier;
    double achieved_utility = 0.0;
    double deployment_value = 0.0;
    std::vector<std::string> binding;
    bool infeasible = false;
};

/// Highest tier whose level does not exceed F_X(x); tier 1 when none does.
inline int tier_of_target(const FrontierFit& f, const Vector& x) {
    double s = f.capability(x);
    int t = 1;
    for (std::size_t k = 0; k < f.tier_levels.size(); ++k)
        if (f.tier_levels[k] <= s + 1e-12) t = static_cast<int>(k) + 1;
    return t;
}

namespace detail {

/// True when (sa, ca, ida) should rank ahead of (sb, cb, idb): higher score, then lower cost, then id.
inline bool ranks_before(double sa, double ca, const std::string& ida, double sb, double cb, const std::string& idb) {
    if (sa != sb) return sa > sb;
    if (ca != cb) return ca < cb;
    return ida < idb;
}

} // namespace detail

inline Recommendation recommend(const Catalog& cat, const MeasureSet& ms, const UtilitySet& u, const FrontierFit& f,
                                const Scenario& s, const std::string& context, const GridConfig& gc = {}) {
    auto U = aggregate_objective(u, s, context);
    auto scale = CostScale::of(cat, s.cost_normalization);
    Recommendation r;
    r.context = context;
    r.target = continuous_target(cat, f, U, s, gc);
    if (!r.target.infeasible) r.target_tier = tier_of_target(f, r.target.x);
    r.binding = r.target.binding;

    auto feas = feasible_set(cat, ms, s);
    if (feas.infeasible) {
        r.infeasible = true;
        return r;
    }
    std::vector<std::size_t> pool = feas.models;
    if (s.selection_strategy == Strategy::nearest && s.restrict_to_target_tier && r.target_tier) {
        std::vector<std::size_t> same;
        for (auto m : pool) {
            auto it = f.tiers.tiers.find(cat.models[m].model_id);
            if (it != f.tiers.tiers.end() && it->second == *r.target_tier) same.push_back(m);
        }
        if (!same.empty()) pool = same;
    }

    std::optional<std::size_t> best;
    double best_key = 0;
    auto cost_norm = CostScale::of(cat, CostNormalization::minmax);
    for (auto m : pool) {
        const auto& rec = cat.models[m];
        Vector x = measure_row(ms, rec.model_id);
        double key;
        if (s.selection_strategy == Strategy::argmax || r.target.infeasible) {
            key = U(x) - s.lambda * scale.to_used(rec.cost);
        } else {
            double dc = cost_norm.to_used(rec.cost) - cost_norm.to_used(r.target.c);
            key = -std::sqrt((x - r.target.x).squaredNorm() + dc * dc);
        }
        if (!best || detail::ranks_before(key, rec.cost, rec.model_id, best_key, cat.models[*best].cost,
                                          cat.models[*best].model_id)) {
            best = m;
            best_key = key;
        }
    }
    const auto& sel = cat.models[*best];
    r.selected_model = sel.model_id;
    r.selected_x = measure_row(ms, sel.model_id);
    r.selected_cost = sel.cost;
    r.selected_cost_used = scale.to_used(sel.cost);
    auto it = f.tiers.tiers.find(sel.model_id);
    if (it != f.tiers.tiers.end()) r.selected_tier = it->second;
    r.achieved_utility = U(r.selected_x);
    r.deployment_value = r.achieved_utility - s.lambda * r.selected_cost_used;
    return r;
}

/// Recommendations for every weighted group (per_type) or for the aggregate context.
inline std::vector<Recommendation> recommend_all(const Catalog& cat, const MeasureSet& ms, const UtilitySet& u,
                                                 const FrontierFit& f, const Scenario& s, const GridConfig& gc = {}) {
    std::vector<Recommendation> out;
    if (s.aggregation == Aggregation::per_type)
        for (auto& [g, w] : group_weights(u, s)) out.push_back(recommend(cat, ms, u, f, s, g, gc));
    else
        out.push_back(recommend(cat, ms, u, f, s, kAggregateContext, gc));
    return out;
}

struct LeaderboardEntry {
    std::string model_id;
    double score = 0.0;
    std::map<std::string, double> utility_by_group;
    double cost_used = 0.0;
    bool feasible = false;
    std::optional<int> rank;
};

/// Score = sum_z w_z U_z(x(m)) - lambda cost(m) (minimum over groups under robust aggregation).
inline std::vector<LeaderboardEntry> leaderboard(const Catalog& cat, const MeasureSet& ms, const UtilitySet& u,
                                                 const Scenario& s) {
    if (cat.size() == 0) fail("leaderboard: empty catalog");
    check_floors(s, ms.dim());
    auto U = aggregate_objective(u, s, kAggregateContext);
    auto weights = group_weights(u, s);
    auto scale = CostScale::of(cat, s.cost_normalization);
    std::vector<LeaderboardEntry> rows;
    std::vector<double> raw_cost;
    for (const auto& m : cat.models) {
        LeaderboardEntry e;
        e.model_id = m.model_id;
        Vector x = measure_row(ms, m.model_id);
        for (auto& [g, w] : weights) e.utility_by_group[g] = u.at(g).predict(x);
        e.cost_used = scale.to_used(m.cost);
        e.score = U(x) - s.lambda * e.cost_used;
        e.feasible = is_feasible(x, e.cost_used, s);
        rows.push_back(std::move(e));
    }
    std::map<std::string, double> cost;
    for (const auto& m : cat.models) cost[m.model_id] = m.cost;
    std::sort(rows.begin(), rows.end(), [&](const LeaderboardEntry& a, const LeaderboardEntry& b) {
        if (a.feasible != b.feasible) return a.feasible;
        if (!a.feasible) return a.model_id < b.model_id;
        return detail::ranks_before(a.score, cost[a.model_id], a.model_id, b.score, cost[b.model_id], b.model_id);
    });
    int r = 0;
    for (auto& e : rows)
        if (e.feasible) e.rank = ++r;
    return rows;
}

/// Mean over groups (scenario weights, uniform by default) of U_z(x(selected_z)) - lambda cost(selected_z).
inline double evaluate_policy(const std::map<std::string, std::string>& selections, const UtilitySet& u,
                              const Catalog& cat, const MeasureSet& ms, const Scenario& s) {
    if (selections.empty()) fail("evaluate_policy: no selections");
    auto scale = CostScale::of(cat, s.cost_normalization);
    std::map<std::string, double> w;
    for (auto& [g, m] : selections) {
        if (!u.count(g)) fail("evaluate_policy: no utility for group '" + g + "'");
        auto it = s.context_weights.find(g);
        w[g] = s.context_weights.empty() ? 1.0 : (it == s.context_weights.end() ? 0.0 : it->second);
    }
    double total = 0;
    for (auto& [g, v] : w) total += v;
    if (!(total > 0)) fail("evaluate_policy: weights of the selected groups sum to zero");
    double value = 0;
    for (auto& [g, id] : selections) {
        auto idx = cat.find(id);
        if (!idx) fail("evaluate_policy: selection '" + id + "' is not in the catalog");
        Vector x = measure_row(ms, id);
        value += w[g] / total * (u.at(g).predict(x) - s.lambda * scale.to_used(cat.models[*idx].cost));
    }
    return value;
}

} // namespace mlc
