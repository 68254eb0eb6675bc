#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mlc/catalog.hpp"
#include "mlc/error.hpp"
#include "mlc/measures.hpp"

namespace mlc {

inline bool dominates(const Vector& x, const Vector& y, double tol = 0.0) {
    if (x.size() != y.size()) fail("dominates: dimension mismatch");
    bool strict = false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x(i) < y(i) - tol) return false;
        if (x(i) > y(i) + tol) strict = true;
    }
    return strict;
}

struct TierStructure {
    std::vector<std::vector<std::string>> layers;      // peel order, strongest first
    std::map<std::string, int> tiers;                  // 1 = weakest
    std::vector<std::vector<std::string>> efficient;   // efficient[t-1]
    double tolerance = 0.0;

    int tier_count() const { return static_cast<int>(efficient.size()); }
};

/// Iterated non-dominated-set removal. Returns layers as row indices, strongest first.
/// If tolerance creates a dominance cycle with no undominated member, the remainder forms one layer.
inline std::vector<std::vector<std::size_t>> peel_layers(const Matrix& X, double tol = 0.0) {
    std::vector<std::size_t> remaining(X.rows());
    std::iota(remaining.begin(), remaining.end(), 0);
    std::vector<std::vector<std::size_t>> layers;
    while (!remaining.empty()) {
        std::vector<std::size_t> front, rest;
        for (auto i : remaining) {
            bool dom = false;
            for (auto j : remaining)
                if (j != i && dominates(X.row(j).transpose(), X.row(i).transpose(), tol)) { dom = true; break; }
            (dom ? rest : front).push_back(i);
        }
        if (front.empty()) { front = remaining; rest.clear(); }
        layers.push_back(front);
        remaining = rest;
    }
    return layers;
}

/// Non-dominated subset of the given rows.
inline std::vector<std::size_t> efficient_subset(const Matrix& X, const std::vector<std::size_t>& rows, double tol) {
    std::vector<std::size_t> out;
    for (auto i : rows) {
        bool dom = false;
        for (auto j : rows)
            if (j != i && dominates(X.row(j).transpose(), X.row(i).transpose(), tol)) { dom = true; break; }
        if (!dom) out.push_back(i);
    }
    if (out.empty()) out = rows;
    return out;
}

/// Greedy grouping of adjacent layer sizes into `groups` blocks of near-equal total count.
/// Returns the block index of each layer (0 = first layer).
inline std::vector<int> merge_layers(const std::vector<std::size_t>& sizes, int groups) {
    const int L = static_cast<int>(sizes.size());
    if (groups < 1 || groups > L) fail("target_tiers must lie in [1, " + std::to_string(L) + "]");
    std::vector<int> block(L);
    std::size_t left = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    int pos = 0;
    for (int g = 0; g < groups; ++g) {
        int groups_after = groups - g - 1;
        double target = static_cast<double>(left) / (groups - g);
        std::size_t count = 0;
        do {
            block[pos] = g;
            count += sizes[pos];
            ++pos;
            if (g == groups - 1) continue;   // last block takes everything
            if (L - pos <= groups_after) break;
            double next = static_cast<double>(count + sizes[pos]);
            if (std::abs(next - target) >= std::abs(static_cast<double>(count) - target)) break;
        } while (pos < L);
        left -= count;
    }
    return block;
}

inline TierStructure peel_and_tier(const std::vector<std::string>& ids, const Matrix& X, int target_tiers,
                                   double tolerance = 0.0) {
    if (X.rows() == 0) fail("peel_and_tier: empty catalog");
    if (static_cast<std::size_t>(X.rows()) != ids.size()) fail("peel_and_tier: id count mismatch");
    if (!(tolerance >= 0)) fail("tolerance must be >= 0");
    auto layers = peel_layers(X, tolerance);
    auto by_id = [&](std::vector<std::size_t> v) {
        std::sort(v.begin(), v.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
        return v;
    };
    std::vector<std::size_t> sizes;
    for (auto& l : layers) sizes.push_back(l.size());
    if (target_tiers < 1 || target_tiers > static_cast<int>(layers.size()))
        fail("target_tiers " + std::to_string(target_tiers) + " exceeds the " + std::to_string(layers.size()) +
             " peel layers");
    auto block = merge_layers(sizes, target_tiers);

    TierStructure ts;
    ts.tolerance = tolerance;
    std::vector<std::vector<std::size_t>> members(target_tiers);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto sorted = by_id(layers[l]);
        std::vector<std::string> names;
        for (auto i : sorted) names.push_back(ids[i]);
        ts.layers.push_back(names);
        int tier = target_tiers - block[l];   // first block is the strongest
        for (auto i : sorted) {
            ts.tiers[ids[i]] = tier;
            members[tier - 1].push_back(i);
        }
    }
    for (int t = 0; t < target_tiers; ++t) {
        auto eff = by_id(efficient_subset(X, members[t], tolerance));
        std::vector<std::string> names;
        for (auto i : eff) names.push_back(ids[i]);
        ts.efficient.push_back(names);
    }
    return ts;
}

inline TierStructure peel_and_tier(const MeasureSet& ms, int target_tiers, double tolerance = 0.0) {
    return peel_and_tier(ms.model_ids, ms.measures, target_tiers, tolerance);
}

// ---------------------------------------------------------------------------
// CES score and isotonic regression

inline double ces_score(const Vector& x, const Vector& a, double b) {
    if (x.size() != a.size()) fail("ces_score: dimension mismatch");
    if (!(b > 0)) fail("ces_score: b must be positive");
    double s = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x(i) > 0) s += a(i) * std::pow(x(i), b);
    return s > 0 ? std::pow(s, 1.0 / b) : 0.0;
}

/// Weighted least-squares isotonic (nondecreasing) regression by pool-adjacent-violators.
inline std::vector<double> pava(const std::vector<double>& y, const std::vector<double>& w) {
    if (y.empty()) fail("pava: empty input");
    if (y.size() != w.size()) fail("pava: length mismatch");
    for (double wi : w)
        if (!(wi > 0)) fail("pava: weights must be positive");
    std::vector<double> val, wt;
    std::vector<std::size_t> len;
    for (std::size_t i = 0; i < y.size(); ++i) {
        val.push_back(y[i]);
        wt.push_back(w[i]);
        len.push_back(1);
        while (val.size() > 1 && val[val.size() - 2] > val.back()) {
            std::size_t k = val.size() - 1;
            double W = wt[k - 1] + wt[k];
            val[k - 1] = (wt[k - 1] * val[k - 1] + wt[k] * val[k]) / W;
            wt[k - 1] = W;
            len[k - 1] += len[k];
            val.pop_back();
            wt.pop_back();
            len.pop_back();
        }
    }
    std::vector<double> out;
    for (std::size_t k = 0; k < val.size(); ++k) out.insert(out.end(), len[k], val[k]);
    return out;
}

inline std::vector<double> pava(const std::vector<double>& y) { return pava(y, std::vector<double>(y.size(), 1.0)); }

inline double soft_l1(double r) { return 2.0 * (std::sqrt(1.0 + r * r) - 1.0); }
inline double soft_l1_grad(double r) { return 2.0 * r / std::sqrt(1.0 + r * r); }

/// argmin_v sum soft_l1(r_i - v); the objective is strictly convex so bisection on the derivative is exact.
inline double robust_location(const std::vector<double>& r) {
    double lo = *std::min_element(r.begin(), r.end()), hi = *std::max_element(r.begin(), r.end());
    if (!(hi > lo)) return lo;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        double g = 0;
        for (double v : r) g += soft_l1_grad(v - mid);
        (g > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Isotonic fit of tier levels under soft-l1 loss: pool-adjacent-violators where each block's
/// value is the robust location of all its residual samples.
inline std::vector<double> robust_isotonic(const std::vector<std::vector<double>>& samples) {
    struct Block { std::vector<double> pts; double val; std::size_t len; };
    std::vector<Block> blocks;
    for (const auto& s : samples) {
        if (s.empty()) fail("robust_isotonic: empty tier");
        blocks.push_back({s, robust_location(s), 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].val > blocks.back().val) {
            Block top = std::move(blocks.back());
            blocks.pop_back();
            auto& prev = blocks.back();
            prev.pts.insert(prev.pts.end(), top.pts.begin(), top.pts.end());
            prev.len += top.len;
            prev.val = robust_location(prev.pts);
        }
    }
    std::vector<double> out;
    for (auto& b : blocks) out.insert(out.end(), b.len, b.val);
    return out;
}

// ---------------------------------------------------------------------------
// capability frontier

struct CapabilityFitConfig {
    double b_lo = 0.2;
    double b_hi = 10.0;
    int max_iterations = 500;
    double tol = 1e-12;          // relative loss improvement
    double a_floor = 1e-9;
};

struct CapabilityFit {
    Vector a;
    double b = 1.5;
    std::vector<double> lambda;
    double loss = 0.0;
    std::vector<double> loss_history;
    int iterations = 0;
    bool converged = false;
    bool degenerate = false;     // every efficient point identical: (a, b) not identified
};

namespace detail {

inline double frontier_loss(const Matrix& X, const std::vector<int>& tier, const Vector& a, double b,
                            const std::vector<double>& lam) {
    double L = 0;
    for (Eigen::Index m = 0; m < X.rows(); ++m) L += soft_l1(ces_score(X.row(m).transpose(), a, b) - lam[tier[m]]);
    return L;
}

/// Euclidean projection onto {a : a_i >= floor, sum a = 1}.
inline Vector project_simplex(const Vector& y, double floor) {
    const Eigen::Index n = y.size();
    const double mass = 1.0 - floor * static_cast<double>(n);
    Vector z = y.array() - floor;
    std::vector<double> u(z.data(), z.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double css = 0, theta = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
        css += u[k];
        double t = (css - mass) / static_cast<double>(k + 1);
        if (u[k] - t > 0) theta = t;
    }
    Vector out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = std::max(z(i) - theta, 0.0) + floor;
    return out / out.sum();
}

inline Vector loss_grad_a(const Matrix& X, const std::vector<int>& tier, const Vector& a, double b,
                          const std::vector<double>& lam) {
    Vector g = Vector::Zero(a.size());
    for (Eigen::Index m = 0; m < X.rows(); ++m) {
        Vector x = X.row(m).transpose();
        double s = ces_score(x, a, b);
        if (!(s > 0)) continue;
        double rho = soft_l1_grad(s - lam[tier[m]]);
        double f = std::pow(s, 1.0 - b) / b;
        for (Eigen::Index i = 0; i < a.size(); ++i)
            if (x(i) > 0) g(i) += rho * f * std::pow(x(i), b);
    }
    return g;
}

} // namespace detail

/// Alternating minimisation of sum soft_l1(s(m;a,b) - lambda_t(m)) over efficient points.
/// `tier` holds 0-based tier indices; tier_count is T. Every step is accepted only if the loss does not rise.
inline CapabilityFit fit_capability_frontier(const Matrix& X, const std::vector<int>& tier, int tier_count,
                                             const CapabilityFitConfig& cfg = {}) {
    const Eigen::Index n = X.rows(), I = X.cols();
    if (n == 0 || static_cast<Eigen::Index>(tier.size()) != n) fail("fit_capability_frontier: bad inputs");
    std::vector<std::size_t> count(tier_count, 0);
    for (int t : tier) {
        if (t < 0 || t >= tier_count) fail("fit_capability_frontier: tier index out of range");
        ++count[t];
    }
    for (int t = 0; t < tier_count; ++t)
        if (count[t] == 0) fail("tier " + std::to_string(t + 1) + " has no efficient model");
    if (!(cfg.b_lo > 0 && cfg.b_hi > cfg.b_lo)) fail("invalid b bounds");

    CapabilityFit fit;
    fit.a = Vector::Constant(I, 1.0 / static_cast<double>(I));
    fit.b = std::clamp(1.5, cfg.b_lo, cfg.b_hi);
    fit.lambda.assign(tier_count, 0.0);
    for (Eigen::Index m = 0; m < n; ++m) fit.lambda[tier[m]] += ces_score(X.row(m).transpose(), fit.a, fit.b);
    for (int t = 0; t < tier_count; ++t) fit.lambda[t] /= static_cast<double>(count[t]);
    fit.lambda = pava(fit.lambda, std::vector<double>(count.begin(), count.end()));

    bool identical = true;
    for (Eigen::Index m = 1; m < n && identical; ++m) identical = (X.row(m) == X.row(0));
    fit.degenerate = identical || I == 1;

    auto loss = [&](const Vector& a, double b, const std::vector<double>& lam) {
        return detail::frontier_loss(X, tier, a, b, lam);
    };
    double cur = loss(fit.a, fit.b, fit.lambda);
    fit.loss_history.push_back(cur);

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        const double start = cur;

        // lambda-step
        {
            std::vector<std::vector<double>> samples(tier_count);
            for (Eigen::Index m = 0; m < n; ++m) samples[tier[m]].push_back(ces_score(X.row(m).transpose(), fit.a, fit.b));
            auto lam = robust_isotonic(samples);
            double l = loss(fit.a, fit.b, lam);
            if (l <= cur) { fit.lambda = lam; cur = l; }
        }

        // a-step: projected gradient with Armijo backtracking
        if (I > 1) {
            double step = 1.0;
            for (int k = 0; k < 200; ++k) {
                Vector g = detail::loss_grad_a(X, tier, fit.a, fit.b, fit.lambda);
                bool moved = false;
                for (int bt = 0; bt < 60; ++bt) {
                    Vector cand = detail::project_simplex(fit.a - step * g, cfg.a_floor);
                    double l = loss(cand, fit.b, fit.lambda);
                    double decrease = g.dot(fit.a - cand);
                    if (l <= cur - 1e-4 * decrease && l <= cur) {
                        moved = (cand - fit.a).lpNorm<Eigen::Infinity>() > 1e-15;
                        fit.a = cand;
                        cur = l;
                        step *= 2.0;
                        break;
                    }
                    step *= 0.5;
                }
                if (!moved) break;
            }
        }

        // b-step: coarse log grid then golden section around the best cell
        if (!fit.degenerate) {
            auto f = [&](double b) { return loss(fit.a, b, fit.lambda); };
            const int G = 48;
            double lb = std::log(cfg.b_lo), ub = std::log(cfg.b_hi);
            int best = 0;
            double bestv = std::numeric_limits<double>::infinity();
            for (int k = 0; k <= G; ++k) {
                double v = f(std::exp(lb + (ub - lb) * k / G));
                if (v < bestv) { bestv = v; best = k; }
            }
            double lo = lb + (ub - lb) * std::max(best - 1, 0) / G;
            double hi = lb + (ub - lb) * std::min(best + 1, G) / G;
            const double gr = (std::sqrt(5.0) - 1) / 2;
            double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
            double fc = f(std::exp(c)), fd = f(std::exp(d));
            for (int k = 0; k < 100 && hi - lo > 1e-13; ++k) {
                if (fc < fd) { hi = d; d = c; fd = fc; c = hi - gr * (hi - lo); fc = f(std::exp(c)); }
                else { lo = c; c = d; fc = fd; d = lo + gr * (hi - lo); fd = f(std::exp(d)); }
            }
            double bnew = std::exp(0.5 * (lo + hi));
            double l = f(bnew);
            if (l <= cur) { fit.b = bnew; cur = l; }
        }

        fit.loss_history.push_back(cur);
        fit.iterations = iter + 1;
        if (start - cur <= cfg.tol * std::max(start, 1e-300) || cur == 0.0) {
            fit.converged = true;
            break;
        }
    }
    fit.loss = cur;
    return fit;
}

// ---------------------------------------------------------------------------
// cost frontier

enum class CostAggregate { mean, geomean, median };

inline const char* to_string(CostAggregate a) {
    switch (a) {
    case CostAggregate::mean: return "mean";
    case CostAggregate::geomean: return "geomean";
    default: return "median";
    }
}

inline CostAggregate parse_cost_aggregate(const std::string& s) {
    if (s == "mean") return CostAggregate::mean;
    if (s == "geomean") return CostAggregate::geomean;
    if (s == "median") return CostAggregate::median;
    fail("unknown cost aggregate '" + s + "'");
}

struct CostFit {
    double c0 = 1.0;
    double d = 1.0;
    std::vector<double> tier_costs;
    bool single_tier = false;   // slope undefined; d fixed at 1
    bool d_clamped = false;     // OLS slope was not positive
};

inline double aggregate_costs(std::vector<double> v, CostAggregate how) {
    switch (how) {
    case CostAggregate::mean: return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    case CostAggregate::geomean: {
        double s = 0;
        for (double c : v) s += std::log(c);
        return std::exp(s / static_cast<double>(v.size()));
    }
    default: {
        std::sort(v.begin(), v.end());
        std::size_t k = v.size();
        return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
    }
    }
}

inline CostFit fit_cost_frontier(const std::vector<double>& lambda, const std::vector<std::vector<double>>& tier_costs_raw,
                                 CostAggregate how = CostAggregate::median) {
    const std::size_t T = lambda.size();
    if (T == 0 || tier_costs_raw.size() != T) fail("fit_cost_frontier: tier count mismatch");
    std::vector<double> rep, w;
    for (std::size_t t = 0; t < T; ++t) {
        if (tier_costs_raw[t].empty()) fail("tier " + std::to_string(t + 1) + " has no cost samples");
        for (double c : tier_costs_raw[t])
            if (!(c > 0) || !std::isfinite(c)) fail("tier costs must be positive and finite");
        if (!(lambda[t] > 0)) fail_numeric("tier level " + std::to_string(t + 1) + " is not positive");
        rep.push_back(aggregate_costs(tier_costs_raw[t], how));
        w.push_back(static_cast<double>(tier_costs_raw[t].size()));
    }
    CostFit fit;
    fit.tier_costs = pava(rep, w);
    if (T == 1) {
        fit.single_tier = true;
        fit.d = 1.0;
    } else {
        double mx = 0, my = 0;
        for (std::size_t t = 0; t < T; ++t) { mx += std::log(fit.tier_costs[t]); my += std::log(lambda[t]); }
        mx /= static_cast<double>(T);
        my /= static_cast<double>(T);
        double sxy = 0, sxx = 0;
        for (std::size_t t = 0; t < T; ++t) {
            double dx = std::log(fit.tier_costs[t]) - mx;
            sxx += dx * dx;
            sxy += dx * (std::log(lambda[t]) - my);
        }
        double slope = sxx > 0 ? sxy / sxx : 0.0;
        if (slope > 1e-6) fit.d = slope;
        else { fit.d = 1e-6; fit.d_clamped = true; }
    }
    fit.c0 = 0;
    for (std::size_t t = 0; t < T; ++t) fit.c0 = std::max(fit.c0, lambda[t] / std::pow(fit.tier_costs[t], fit.d));
    return fit;
}

// ---------------------------------------------------------------------------
// full pipeline

struct FrontierConfig {
    int tiers = 3;
    double tolerance = 0.0;
    CostAggregate cost_aggregate = CostAggregate::median;
    CapabilityFitConfig capability;
};

struct FrontierFit {
    Vector a;
    double b = 1.0;
    std::vector<double> tier_levels;
    double c0 = 1.0;
    double d = 1.0;
    std::vector<double> tier_costs;
    double fit_loss = 0.0;
    TierStructure tiers;
    int iterations = 0;
    bool converged = false;
    bool degenerate = false;
    bool single_tier = false;
    bool d_clamped = false;

    int dim() const { return static_cast<int>(a.size()); }
    double capability(const Vector& x) const { return ces_score(x, a, b); }
    double cost_capacity(double c) const { return c0 * std::pow(c, d); }
    /// Smallest cost whose frontier level reaches F_X(x).
    double min_cost_for(const Vector& x) const { return std::pow(capability(x) / c0, 1.0 / d); }
    bool stylized_regime() const { return b > 1.0 && d > 0 && d <= 1.0; }
};

inline FrontierFit estimate_frontier(const MeasureSet& ms, const Catalog& cat, const FrontierConfig& cfg) {
    if (ms.model_ids.size() != cat.size()) fail("measure set does not cover the catalog");
    // Work in model_id order so the fit does not depend on catalog row order.
    auto order = id_order(cat);
    std::vector<std::string> ids;
    Matrix X(ms.measures.rows(), ms.measures.cols());
    std::vector<double> cost;
    for (std::size_t r = 0; r < order.size(); ++r) {
        const auto& id = cat.models[order[r]].model_id;
        auto mi = ms.find(id);
        if (!mi) fail("measure set has no row for '" + id + "'");
        ids.push_back(id);
        X.row(r) = ms.measures.row(*mi);
        cost.push_back(cat.models[order[r]].cost);
    }
    FrontierFit out;
    out.tiers = peel_and_tier(ids, X, cfg.tiers, cfg.tolerance);
    const int T = out.tiers.tier_count();

    std::map<std::string, std::size_t> pos;
    for (std::size_t r = 0; r < ids.size(); ++r) pos[ids[r]] = r;
    std::vector<int> tier_of;
    std::vector<Eigen::Index> eff_rows;
    for (int t = 0; t < T; ++t)
        for (const auto& id : out.tiers.efficient[t]) {
            eff_rows.push_back(static_cast<Eigen::Index>(pos[id]));
            tier_of.push_back(t);
        }
    Matrix E(eff_rows.size(), X.cols());
    for (std::size_t k = 0; k < eff_rows.size(); ++k) E.row(k) = X.row(eff_rows[k]);
    auto cap = fit_capability_frontier(E, tier_of, T, cfg.capability);

    std::vector<std::vector<double>> tc(T);
    for (std::size_t r = 0; r < ids.size(); ++r) tc[out.tiers.tiers[ids[r]] - 1].push_back(cost[r]);
    auto cf = fit_cost_frontier(cap.lambda, tc, cfg.cost_aggregate);

    out.a = cap.a;
    out.b = cap.b;
    out.tier_levels = cap.lambda;
    out.fit_loss = cap.loss;
    out.iterations = cap.iterations;
    out.converged = cap.converged;
    out.degenerate = cap.degenerate;
    out.c0 = cf.c0;
    out.d = cf.d;
    out.tier_costs = cf.tier_costs;
    out.single_tier = cf.single_tier;
    out.d_clamped = cf.d_clamped;
    return out;
}

} // namespace mlc
