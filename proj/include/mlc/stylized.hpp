#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlc/catalog.hpp"
#include "mlc/error.hpp"

namespace mlc {

/// max beta.x - lambda c  s.t.  (sum a_i x_i^b)^(1/b) <= c0 c^d,  R <= x <= 1,  c <= B.
struct StylizedInstance {
    Vector beta;
    Vector a;
    double b = 2.0;
    double c0 = 1.0;
    double d = 1.0;
    Vector R;
    double B = 1.0;
    double lambda = 0.0;

    int dim() const { return static_cast<int>(a.size()); }

    void validate() const {
        const auto I = a.size();
        if (I < 1 || beta.size() != I || R.size() != I) fail("stylized: beta, a and R must share a dimension");
        if (!(b > 1)) fail("stylized: b must exceed 1");
        if (!(d > 0 && d <= 1)) fail("stylized: d must lie in (0,1]");
        if (!(c0 > 0) || !(B > 0) || !std::isfinite(B)) fail("stylized: c0 and B must be positive");
        if (!(lambda >= 0) || !std::isfinite(lambda)) fail("stylized: lambda must be >= 0");
        if ((a.array() <= 0).any() || std::abs(a.sum() - 1) > 1e-9) fail("stylized: a must be a positive simplex vector");
        if ((beta.array() < 0).any() || std::abs(beta.sum() - 1) > 1e-9) fail("stylized: beta must lie on the simplex");
        if ((R.array() < 0).any() || (R.array() >= 1).any()) fail("stylized: floors must lie in [0,1)");
    }

    double frontier_mass(const Vector& x) const {
        double s = 0;
        for (Eigen::Index i = 0; i < x.size(); ++i)
            if (x(i) > 0) s += a(i) * std::pow(x(i), b);
        return s;
    }
    double capacity(double c) const { return std::pow(c0, b) * std::pow(c, b * d); }   // c0^b c^{bd}
    double objective(const Vector& x, double c) const { return beta.dot(x) - lambda * c; }
};

struct NondegeneracyReport {
    bool ok = false;
    double slack = 0.0;   // c0^b B^{bd} - sum a_i R_i^b
};

inline NondegeneracyReport check_nondegeneracy(const StylizedInstance& in) {
    NondegeneracyReport r;
    r.slack = in.capacity(in.B) - in.frontier_mass(in.R);
    r.ok = r.slack > 0;
    return r;
}

enum class Regime { floor, interior, ceiling };

inline const char* to_string(Regime r) {
    switch (r) {
    case Regime::floor: return "floor";
    case Regime::interior: return "interior";
    default: return "ceiling";
    }
}

/// Three-regime response of x to the frontier multiplier.
inline Vector x_given_mu0(const StylizedInstance& in, double mu0) {
    Vector x(in.dim());
    for (int i = 0; i < in.dim(); ++i) {
        const double k = mu0 * in.a(i) * in.b;
        if (in.beta(i) >= k) x(i) = 1.0;
        else if (in.beta(i) <= k * std::pow(in.R(i), in.b - 1)) x(i) = in.R(i);
        else x(i) = std::pow(in.beta(i) / k, 1.0 / (in.b - 1));
    }
    return x;
}

struct Mu0Response {
    Vector x;
    double c = 0.0;
    bool degenerate = false;   // bd = 1 and the budget rule fails: cost not determined by mu0
};

/// Closed-form (x, c) for a given multiplier, with the budget rule for c.
inline Mu0Response solve_given_mu0(const StylizedInstance& in, double mu0) {
    if (!(mu0 > 0)) fail("solve_given_mu0: mu0 must be positive");
    Mu0Response r;
    r.x = x_given_mu0(in, mu0);
    const double K = mu0 * std::pow(in.c0, in.b) * in.b * in.d;
    const double e = in.b * in.d - 1;
    if (K * std::pow(in.B, e) >= in.lambda) r.c = in.B;
    else if (std::abs(e) < 1e-14) { r.c = in.B; r.degenerate = true; }
    else r.c = std::pow(in.lambda / K, 1.0 / e);
    return r;
}

struct StylizedSolution {
    Vector x_star;
    double c_star = 0.0;
    double mu0 = 0.0;
    std::vector<Regime> regimes;
    bool budget_binding = false;
    bool zero_solution = false;   // lambda exceeds every marginal gain; x = R, c at its minimum
    double objective = 0.0;
    double kkt_residual = 0.0;
};

struct KktReport {
    double stationarity = 0.0;     // interior |beta_i - mu0 a_i b x_i^{b-1}|
    double multiplier_sign = 0.0;  // negative floor/ceiling/budget multipliers
    double cost_stationarity = 0.0;
    double frontier = 0.0;         // |sum a x^b - c0^b c^{bd}|
    double feasibility = 0.0;      // box and budget violations
    double max() const { return std::max({stationarity, multiplier_sign, cost_stationarity, frontier, feasibility}); }
};

inline std::vector<Regime> classify(const StylizedInstance& in, const Vector& x, double tol = 1e-12) {
    std::vector<Regime> r;
    for (int i = 0; i < in.dim(); ++i) {
        if (x(i) >= 1.0 - tol) r.push_back(Regime::ceiling);
        else if (x(i) <= in.R(i) + tol) r.push_back(Regime::floor);
        else r.push_back(Regime::interior);
    }
    return r;
}

/// KKT residuals at (x, c, mu0). Regimes are read off x.
inline KktReport kkt_residuals(const StylizedInstance& in, const Vector& x, double c, double mu0) {
    KktReport k;
    auto reg = classify(in, x);
    for (int i = 0; i < in.dim(); ++i) {
        const double m = mu0 * in.a(i) * in.b;
        k.feasibility = std::max({k.feasibility, in.R(i) - x(i), x(i) - 1.0});
        switch (reg[i]) {
        case Regime::interior:
            k.stationarity = std::max(k.stationarity, std::abs(in.beta(i) - m * std::pow(x(i), in.b - 1)));
            break;
        case Regime::floor:
            k.multiplier_sign = std::max(k.multiplier_sign, -(m * std::pow(in.R(i), in.b - 1) - in.beta(i)));
            break;
        case Regime::ceiling:
            // an x at both bounds cannot occur since R < 1
            k.multiplier_sign = std::max(k.multiplier_sign, -(in.beta(i) - m));
            break;
        }
    }
    k.feasibility = std::max(k.feasibility, c - in.B);
    k.frontier = std::abs(in.frontier_mass(x) - in.capacity(c));
    if (c > 0) {
        const double marginal = mu0 * std::pow(in.c0, in.b) * in.b * in.d * std::pow(c, in.b * in.d - 1);
        if (c >= in.B * (1 - 1e-15)) k.multiplier_sign = std::max(k.multiplier_sign, in.lambda - marginal);
        else k.cost_stationarity = std::abs(in.lambda - marginal);
    }
    return k;
}

inline KktReport kkt_residuals(const StylizedInstance& in, const StylizedSolution& s) {
    return kkt_residuals(in, s.x_star, s.c_star, s.mu0);
}

namespace detail {

/// Geometric bisection for an increasing predicate boundary: returns the smallest hi with pred(hi) true,
/// given pred(lo) false and pred(hi) true, to machine precision.
template <class Pred>
double geometric_bisect(double lo, double hi, Pred pred) {
    for (int it = 0; it < 400; ++it) {
        double mid = lo > 0 ? std::sqrt(lo * hi) : 0.5 * hi;
        if (!(mid > lo && mid < hi)) break;
        (pred(mid) ? hi : lo) = mid;
    }
    return hi;
}

} // namespace detail

/// Closed-form solution with the frontier multiplier found by bisection along the frontier.
/// For each mu0 the capability profile follows the three-regime formulas and the cost is the one
/// that makes the frontier bind; mu0 is then fixed by cost stationarity (or by the budget).
inline StylizedSolution solve(const StylizedInstance& in) {
    in.validate();
    auto nd = check_nondegeneracy(in);
    if (!nd.ok)
        throw Error(ErrorKind::infeasible, "compliance floors exceed the frontier at the budget (slack " +
                                               std::to_string(nd.slack) + ")");
    const double bd = in.b * in.d;
    const double cb = std::pow(in.c0, in.b);
    const double KB = in.capacity(in.B);
    const double K = cb * in.b * in.d;
    auto h = [&](double mu) { return in.frontier_mass(x_given_mu0(in, mu)); };
    auto cost_on_frontier = [&](double mu) { return std::pow(h(mu) / cb, 1.0 / bd); };
    auto psi = [&](double mu) { return mu * K * std::pow(cost_on_frontier(mu), bd - 1) - in.lambda; };

    // mu_B: smallest multiplier whose profile fits within the budget
    double mu_B = 0.0;
    if (h(0.0) > KB) {
        double hi = 1.0;
        int guard = 0;
        while (h(hi) > KB) {
            hi *= 4;
            if (++guard > 600) fail_numeric("bracket failure while locating the budget multiplier");
        }
        double lo = hi / 4;
        guard = 0;
        while (h(lo) <= KB) {
            lo /= 4;
            if (++guard > 600) fail_numeric("bracket failure while locating the budget multiplier");
        }
        mu_B = detail::geometric_bisect(lo, hi, [&](double m) { return h(m) <= KB; });
    }

    StylizedSolution s;
    if (in.lambda == 0.0) {
        s.mu0 = mu_B;
        s.x_star = x_given_mu0(in, mu_B);
        s.budget_binding = mu_B > 0;
        s.c_star = s.budget_binding ? in.B : std::min(in.B, cost_on_frontier(0.0));
    } else if (mu_B > 0 && psi(mu_B) >= 0) {
        s.mu0 = mu_B;
        s.x_star = x_given_mu0(in, mu_B);
        s.c_star = in.B;
        s.budget_binding = true;
    } else {
        double lo = mu_B, hi = std::max(mu_B * 4, 1.0);
        int guard = 0;
        bool found = true;
        while (psi(hi) < 0) {
            lo = hi;
            hi *= 4;
            if (++guard > 500) { found = false; break; }
        }
        if (!found) {
            s.zero_solution = true;
            s.mu0 = hi;
            s.x_star = in.R;
            double m = in.frontier_mass(in.R);
            s.c_star = m > 0 ? std::pow(m / cb, 1.0 / bd) : 0.0;
        } else {
            if (lo == 0.0) {
                lo = hi / 4;
                for (int g = 0; g < 600 && psi(lo) >= 0; ++g) lo /= 4;
            }
            s.mu0 = detail::geometric_bisect(lo, hi, [&](double m) { return psi(m) >= 0; });
            s.x_star = x_given_mu0(in, s.mu0);
            s.c_star = std::min(cost_on_frontier(s.mu0), in.B);
            s.budget_binding = s.c_star >= in.B;
        }
    }
    s.regimes = classify(in, s.x_star);
    s.objective = in.objective(s.x_star, s.c_star);
    s.kkt_residual = kkt_residuals(in, s).max();
    return s;
}

// ---------------------------------------------------------------------------
// comparative statics

struct SensitivityReport {
    double W = 0, Y = 0, Z = 0, Z_int = 0;
    bool interior_empty = true;
    bool budget_binding = false;
    // budget
    bool has_budget = false;
    double eps_B = 0;
    Vector dx_dB;
    // compliance floors: spillovers(k, i) = dx_i / dR_k
    Matrix spillovers;
    Vector dc_dRk;
    Vector direct;
    std::vector<bool> regulatory_degenerate;
    // technology
    bool has_technology = false;
    double eps_c = 0, eps_d = 0, gamma = 0;
    Vector eta_b;
};

struct Aggregates {
    double W = 0, Y = 0, Z = 0, Z_int = 0;
};

inline Aggregates frontier_aggregates(const StylizedInstance& in, const StylizedSolution& s, int exclude = -1) {
    Aggregates g;
    for (int i = 0; i < in.dim(); ++i) {
        double x = s.x_star(i);
        if (!(x > 0)) continue;
        double m = in.a(i) * std::pow(x, in.b);
        g.W += m;
        g.Z += m * std::log(x);
        if (s.regimes[i] == Regime::interior && i != exclude) {
            g.Y += m;
            g.Z_int += m * std::log(x);
        }
    }
    return g;
}

struct BudgetSensitivity {
    double eps_B = 0;
    Vector dx_dB;
};

inline BudgetSensitivity budget_sensitivity(const StylizedInstance& in, const StylizedSolution& s) {
    if (!s.budget_binding) fail("budget_sensitivity: budget is not binding");
    auto g = frontier_aggregates(in, s);
    if (!(g.Y > 0)) fail_numeric("budget_sensitivity: no interior dimension (Y* = 0)");
    BudgetSensitivity r;
    r.eps_B = in.d * g.W / g.Y;
    r.dx_dB = Vector::Zero(in.dim());
    for (int i = 0; i < in.dim(); ++i)
        if (s.regimes[i] == Regime::interior) r.dx_dB(i) = r.eps_B * s.x_star(i) / in.B;
    return r;
}

struct RegulatorySensitivity {
    double direct = 0;
    Vector spillovers;   // dx_i / dR_k
    double dc_dRk = 0;
    bool degenerate = false;
};

inline RegulatorySensitivity regulatory_sensitivity(const StylizedInstance& in, const StylizedSolution& s, int k) {
    if (k < 0 || k >= in.dim()) fail("regulatory_sensitivity: index out of range");
    RegulatorySensitivity r;
    r.spillovers = Vector::Zero(in.dim());
    if (s.regimes[k] != Regime::floor) return r;
    r.direct = 1.0;
    r.spillovers(k) = 1.0;
    const double push = in.a(k) * std::pow(in.R(k), in.b - 1);
    auto g = frontier_aggregates(in, s, k);
    if (s.budget_binding) {
        if (!(g.Y > 0)) { r.degenerate = true; return r; }
        for (int i = 0; i < in.dim(); ++i)
            if (i != k && s.regimes[i] == Regime::interior) r.spillovers(i) = -push * s.x_star(i) / g.Y;
        return r;
    }
    const double ratio = (in.b * in.d - 1) / (in.b - 1);
    const double denom = in.d * g.W - ratio * g.Y;
    if (!(std::abs(denom) > 1e-14 * std::max(g.W, 1e-300))) { r.degenerate = true; return r; }
    r.dc_dRk = push * s.c_star / denom;
    for (int i = 0; i < in.dim(); ++i)
        if (i != k && s.regimes[i] == Regime::interior) r.spillovers(i) = ratio * s.x_star(i) * r.dc_dRk / s.c_star;
    return r;
}

struct TechnologySensitivity {
    double eps_c = 0, eps_d = 0, gamma = 0;
    Vector eta_b;   // d ln x_i / d b
};

inline TechnologySensitivity technology_sensitivity(const StylizedInstance& in, const StylizedSolution& s) {
    if (!s.budget_binding) fail("technology_sensitivity: budget is not binding");
    auto g = frontier_aggregates(in, s);
    if (!(g.Y > 0)) fail_numeric("technology_sensitivity: no interior dimension (Y* = 0)");
    TechnologySensitivity t;
    t.eps_c = g.W / g.Y;
    t.eps_d = g.W / g.Y * std::log(in.B);
    t.gamma = g.Z_int / g.Y +
              (in.b - 1) / in.b * (g.W / g.Y) * (std::log(in.c0) + in.d * std::log(in.B) - g.Z / g.W);
    t.eta_b = Vector::Zero(in.dim());
    for (int i = 0; i < in.dim(); ++i)
        if (s.regimes[i] == Regime::interior) t.eta_b(i) = (t.gamma - std::log(s.x_star(i))) / (in.b - 1);
    return t;
}

/// Every applicable derivative at once; inapplicable blocks are left empty and flagged.
inline SensitivityReport sensitivity_report(const StylizedInstance& in, const StylizedSolution& s) {
    SensitivityReport r;
    auto g = frontier_aggregates(in, s);
    r.W = g.W;
    r.Y = g.Y;
    r.Z = g.Z;
    r.Z_int = g.Z_int;
    r.interior_empty = !(g.Y > 0);
    r.budget_binding = s.budget_binding;
    const int I = in.dim();
    r.dx_dB = Vector::Zero(I);
    r.eta_b = Vector::Zero(I);
    if (s.budget_binding && !r.interior_empty) {
        auto bs = budget_sensitivity(in, s);
        r.has_budget = true;
        r.eps_B = bs.eps_B;
        r.dx_dB = bs.dx_dB;
        auto ts = technology_sensitivity(in, s);
        r.has_technology = true;
        r.eps_c = ts.eps_c;
        r.eps_d = ts.eps_d;
        r.gamma = ts.gamma;
        r.eta_b = ts.eta_b;
    }
    r.spillovers = Matrix::Zero(I, I);
    r.dc_dRk = Vector::Zero(I);
    r.direct = Vector::Zero(I);
    for (int k = 0; k < I; ++k) {
        auto rs = regulatory_sensitivity(in, s, k);
        r.spillovers.row(k) = rs.spillovers.transpose();
        r.dc_dRk(k) = rs.dc_dRk;
        r.direct(k) = rs.direct;
        r.regulatory_degenerate.push_back(rs.degenerate);
    }
    return r;
}

} // namespace mlc
