#include <gtest/gtest.h>

#include <random>

#include "generators.hpp"
#include "mlc/stylized.hpp"
#include "oracles.hpp"
#include "statics_checks.hpp"

using namespace mlc;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(v.size());
    int k = 0;
    for (double x : v) out(k++) = x;
    return out;
}

StylizedInstance prism_low_lambda() {
    StylizedInstance in;
    in.beta = vec({0.02, 0.98});
    in.a = vec({0.53, 0.47});
    in.b = 2.67;
    in.c0 = 0.49;
    in.d = 0.21;
    in.R = vec({0, 0});
    in.B = 37.5;
    in.lambda = 0.05;
    return in;
}

} // namespace

TEST(Stylized, ResponseToMultiplier) {
    StylizedInstance in;
    in.beta = vec({0.5, 0.5});
    in.a = vec({0.5, 0.5});
    in.b = 2;
    in.c0 = 1;
    in.d = 0.25;
    in.R = vec({0, 0.6});
    in.B = 100;
    in.lambda = 0.1;
    auto r = solve_given_mu0(in, 1.0);
    EXPECT_DOUBLE_EQ(r.x(0), 0.5);
    EXPECT_DOUBLE_EQ(r.x(1), 0.6);
    EXPECT_NEAR(r.c, 25.0, 1e-12);
    auto top = solve_given_mu0(in, 0.25);
    EXPECT_EQ(top.x, vec({1, 1}));
    in.lambda = 0.01;
    EXPECT_DOUBLE_EQ(solve_given_mu0(in, 1.0).c, 100.0);
    in.d = 0.5;   // bd = 1
    in.lambda = 2;
    EXPECT_TRUE(solve_given_mu0(in, 1.0).degenerate);
    EXPECT_THROW(solve_given_mu0(in, 0.0), Error);
}

TEST(Stylized, NondegeneracyMatchesSlaterGrid) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0, 1);
    for (int trial = 0; trial < 300; ++trial) {
        StylizedInstance in;
        in.a = gen::dirichlet(rng, 2, 0.05);
        in.beta = gen::dirichlet(rng, 2);
        in.b = 1.1 + 3 * U(rng);
        in.d = 0.05 + 0.95 * U(rng);
        in.c0 = 0.2 + U(rng);
        in.B = 0.1 + 2 * U(rng);
        in.R = vec({0.95 * U(rng), 0.95 * U(rng)});
        // strictly feasible point on a grid over the box and (0, B]
        bool slater = false;
        for (int p = 0; p <= 40 && !slater; ++p)
            for (int q = 0; q <= 40 && !slater; ++q) {
                Vector x = vec({in.R(0) + (1 - in.R(0)) * p / 40.0, in.R(1) + (1 - in.R(1)) * q / 40.0});
                for (int m = 1; m <= 40 && !slater; ++m)
                    slater = in.frontier_mass(x) < in.capacity(in.B * m / 40.0);
            }
        EXPECT_EQ(check_nondegeneracy(in).ok, slater);
    }
}

TEST(Stylized, InfeasibleFloorsRejected) {
    auto in = prism_low_lambda();
    in.R = vec({0.9, 0.9});
    in.B = 0.01;
    try {
        solve(in);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::infeasible);
    }
}

TEST(Stylized, PrismLowLambda) {
    auto in = prism_low_lambda();
    auto s = solve(in);
    EXPECT_NEAR(s.x_star(0), 0.07, 0.03);
    EXPECT_NEAR(s.x_star(1), 0.84, 0.02);
    EXPECT_NEAR(s.c_star, 3.39, 0.3);
    EXPECT_FALSE(s.budget_binding);
    EXPECT_NEAR(std::pow(in.frontier_mass(s.x_star), 1 / in.b), in.c0 * std::pow(s.c_star, in.d), 1e-8);
    EXPECT_LE((x_given_mu0(in, s.mu0) - s.x_star).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(s.kkt_residual, 1e-8);
}

TEST(Stylized, PerturbationBreaksStationarity) {
    auto in = prism_low_lambda();
    auto s = solve(in);
    Vector x = s.x_star;
    x(0) += 0.01;
    EXPECT_GE(kkt_residuals(in, x, s.c_star, s.mu0).stationarity, 1e-3);
}

TEST(Stylized, MatchesMultistartOracle) {
    std::mt19937_64 rng(7), orng(8);
    for (int trial = 0; trial < 40; ++trial) {
        auto in = gen::stylized(rng);
        auto s = solve(in);
        auto o = oracle::solve(gen::as_problem(in), orng);
        EXPECT_GE(s.objective, o.objective - 1e-6);
        EXPECT_LE(s.kkt_residual, 1e-8);
    }
}

TEST(Stylized, InvariantsOnRandomInstances) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        auto in = gen::stylized(rng);
        auto s = solve(in);
        for (int i = 0; i < in.dim(); ++i) {
            EXPECT_GE(s.x_star(i), in.R(i));
            EXPECT_LE(s.x_star(i), 1.0);
            const double k = s.mu0 * in.a(i) * in.b;
            switch (s.regimes[i]) {
            case Regime::floor: EXPECT_GE(k * std::pow(in.R(i), in.b - 1) - in.beta(i), -1e-10); break;
            case Regime::ceiling: EXPECT_GE(in.beta(i) - k, -1e-10); break;
            case Regime::interior:
                EXPECT_NEAR(in.beta(i), k * std::pow(s.x_star(i), in.b - 1), 1e-9);
                break;
            }
        }
        EXPECT_GT(s.c_star, 0.0);
        EXPECT_LE(s.c_star, in.B);
        EXPECT_LE(std::abs(in.frontier_mass(s.x_star) - in.capacity(s.c_star)), 1e-8);
    }
}

TEST(Stylized, NoFeasiblePointBeatsSolution) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        auto in = gen::stylized(rng);
        auto s = solve(in);
        auto p = gen::as_problem(in);
        for (const auto& x : oracle::random_feasible(p, rng, 1000)) EXPECT_LE(p.objective(x), s.objective + 1e-9);
    }
}

TEST(Stylized, ZeroPriceUsesBudgetOrSaturates) {
    auto in = prism_low_lambda();
    in.lambda = 0;
    auto s = solve(in);
    EXPECT_TRUE(s.budget_binding || (s.x_star.array() == 1.0).all());
    in.B = 1.0;
    auto t = solve(in);
    EXPECT_TRUE(t.budget_binding);
    EXPECT_DOUBLE_EQ(t.c_star, 1.0);
}

TEST(Stylized, HighPriceHoldsFloors) {
    auto in = prism_low_lambda();
    in.R = vec({0.2, 0.3});
    in.lambda = 1e6;
    auto s = solve(in);
    EXPECT_EQ(s.x_star, in.R);
    EXPECT_LE(std::abs(in.frontier_mass(s.x_star) - in.capacity(s.c_star)), 1e-8);
}

TEST(Statics, AllInteriorBudgetElasticityEqualsD) {
    StylizedInstance in;
    in.beta = vec({0.5, 0.3, 0.2});
    in.a = vec({0.4, 0.35, 0.25});
    in.b = 2.0;
    in.c0 = 1.0;
    in.d = 0.5;
    in.R = vec({0, 0, 0});
    in.B = 0.2;
    in.lambda = 0.01;
    auto s = solve(in);
    ASSERT_TRUE(s.budget_binding);
    for (auto r : s.regimes) ASSERT_EQ(r, Regime::interior);
    EXPECT_NEAR(budget_sensitivity(in, s).eps_B, in.d, 1e-12);
}

TEST(Statics, BudgetMatchesFiniteDifferences) {
    std::mt19937_64 rng(17);
    int used = 0;
    for (int trial = 0; trial < 40; ++trial) {
        auto in = statics::binding_instance(rng);
        auto o = statics::budget(in);
        if (!o.applicable) continue;
        ++used;
        EXPECT_LE(o.worst, 1e-3);
        EXPECT_LE(statics::elasticity_spread(in), 1e-6);
    }
    EXPECT_GE(used, 30);
}

TEST(Statics, BindingSpilloversNegativeAndMatchFiniteDifferences) {
    std::mt19937_64 rng(19);
    int used = 0;
    for (int trial = 0; trial < 200 && used < 20; ++trial) {
        auto in = statics::binding_instance(rng);
        auto s = solve(in);
        auto o = statics::regulatory(in);
        if (!o.applicable) continue;
        ++used;
        EXPECT_LE(o.worst, 1e-3);
        for (int k = 0; k < in.dim(); ++k) {
            if (s.regimes[k] != Regime::floor || !(in.R(k) > 0)) continue;
            auto r = regulatory_sensitivity(in, s, k);
            for (int i = 0; i < in.dim(); ++i)
                if (i != k && s.regimes[i] == Regime::interior) EXPECT_LT(r.spillovers(i), 0.0);
        }
    }
    EXPECT_GE(used, 10);
}

TEST(Statics, SlackBudgetCostRisesWithFloor) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        auto in = statics::slack_instance(rng);
        auto s = solve(in);
        auto o = statics::regulatory(in);
        ASSERT_TRUE(o.applicable);
        EXPECT_LE(o.worst, 1e-3);
        for (int k = 0; k < in.dim(); ++k)
            if (s.regimes[k] == Regime::floor && in.R(k) > 0) EXPECT_GT(regulatory_sensitivity(in, s, k).dc_dRk, 0.0);
    }
}

TEST(Statics, TechnologyMatchesFiniteDifferencesAndEtaOrdering) {
    std::mt19937_64 rng(29);
    int used = 0;
    for (int trial = 0; trial < 40; ++trial) {
        auto in = statics::binding_instance(rng);
        EXPECT_TRUE(statics::eta_ordering(in));
        auto o = statics::technology(in);
        if (!o.applicable) continue;
        ++used;
        EXPECT_LE(o.worst, 1e-3);
    }
    EXPECT_GE(used, 30);
}

TEST(Statics, ReportFlagsInapplicableBlocks) {
    auto in = prism_low_lambda();
    auto s = solve(in);
    auto r = sensitivity_report(in, s);
    EXPECT_FALSE(r.budget_binding);
    EXPECT_FALSE(r.has_budget);
    EXPECT_FALSE(r.has_technology);
    EXPECT_FALSE(r.interior_empty);
    EXPECT_THROW(budget_sensitivity(in, s), Error);
}
