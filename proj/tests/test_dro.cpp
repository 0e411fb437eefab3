// SPDX-License-Identifier: MIT
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "awdro/dro.hpp"
#include "awdro/measures.hpp"
#include "awdro/oracle.hpp"

using namespace awdro;

namespace {

// fixed three-point grid around each atom with the given absolute reach;
// being delta-free keeps the oracle and solver grids aligned and makes the
// budget slack controllable from the instance
GridBuilder fixed_reach_grid(double reach) {
    return [reach](const Kernel& k, double, double) {
        std::vector<double> g(k.points);
        for (double x : k.points) {
            g.push_back(x - reach);
            g.push_back(x + reach);
        }
        std::sort(g.begin(), g.end());
        g.erase(std::unique(g.begin(), g.end()), g.end());
        return g;
    };
}

CostModel path_square_cost(int horizon) {
    CostModel c;
    c.horizon = horizon;
    c.name = "sum_of_squares";
    c.terminal = [horizon](std::span<const double> y, std::span<const double>) {
        double s = 0.0;
        for (int t = 0; t < horizon; ++t) s += y[t] * y[t];
        return s;
    };
    return c;
}

// smallest delta making every coupling on the built grids feasible; with the
// budget never binding the one-step optimizer is a pure per-atom argmax, so
// the coupling and map classes coincide exactly
double full_slack_delta(const AdaptedMeasure& mu, const GridBuilder& grid) {
    double p = mu.p();
    double worst = 0.0;
    auto spend = [&](const Kernel& k) {
        std::vector<double> g = grid(k, 0.0, p);
        double s = 0.0;
        for (int i = 0; i < k.size(); ++i) {
            double far = 0.0;
            for (double y : g) far = std::max(far, pow_abs(k.points[i] - y, p));
            s += k.probs[i] * far;
        }
        return s;
    };
    worst = spend(mu.root_kernel());
    for (int d = 1; d < mu.horizon(); ++d)
        for (int i : mu.layer(d)) worst = std::max(worst, spend(mu.kernel_at(i)));
    return std::pow(worst, 1.0 / p) * (1.0 + 1e-9) + 1e-9;
}

}  // namespace

TEST_CASE("delta=0 reduces to the plain expectation") {
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 10; ++rep) {
        AdaptedMeasure mu = random_tree(rng(), 2, 2);
        CostModel cost = linear_path_cost(2, {1.0, 0.5});
        DroSolution sol = solve_uncontrolled(mu, cost, 0.0);
        double expect = 0.0;
        for (const auto& atom : mu.flatten())
            expect += atom.prob * (atom.values[0] + 0.5 * atom.values[1]);
        CHECK(sol.value == doctest::Approx(expect).epsilon(1e-10));
        CHECK(sol.evaluate(cost) == doctest::Approx(sol.value).epsilon(1e-10));
    }
}

TEST_CASE("one-period analytic case: E[Y] with a unit quadratic budget") {
    AdaptedMeasure mu = AdaptedMeasure::from_paths(1, 2.0, {{{0.0}, 1.0}});
    CostModel cost = linear_path_cost(1);
    DroSolution sol = solve_uncontrolled(mu, cost, 1.0);
    CHECK(sol.value == doctest::Approx(1.0).epsilon(1e-12));
    AdaptedMeasure adv = sol.adversary();
    CHECK(adv.horizon() == 1);
    // worst case concentrates at +1
    CHECK(adv.layer(1).size() == 1);
    CHECK(adv.node(adv.layer(1)[0]).value == doctest::Approx(1.0));
}

TEST_CASE("uncontrolled two-period values match the nested map enumeration") {
    std::mt19937_64 rng(2);
    GridBuilder grid = fixed_reach_grid(0.3);
    oracle::OracleBudget budget;
    budget.max_grid = 9;
    for (int rep = 0; rep < 25; ++rep) {
        double p = rep % 2 ? 1.0 : 2.0;
        AdaptedMeasure mu = random_tree(rng(), 2, 2, -1.0, 1.0, p);
        CostModel cost = path_square_cost(2);
        double delta = full_slack_delta(mu, grid);
        DroOptions opt;
        opt.grid = grid;
        DroSolution sol = solve_uncontrolled(mu, cost, delta, opt);
        double brute = oracle::brute_dro(mu, cost, {}, delta, grid, budget);
        CHECK(sol.value == doctest::Approx(brute).epsilon(1e-9));
        CHECK(sol.evaluate(cost) == doctest::Approx(sol.value).epsilon(1e-9));
    }
}

TEST_CASE("uncontrolled DPP upper-bounds the map oracle under binding budgets") {
    std::mt19937_64 rng(3);
    GridBuilder grid = fixed_reach_grid(0.5);
    for (int rep = 0; rep < 15; ++rep) {
        AdaptedMeasure mu = random_tree(rng(), 2, 2);
        CostModel cost = path_square_cost(2);
        double delta = 0.3;  // moving every atom by 0.5 would overspend
        DroOptions opt;
        opt.grid = grid;
        DroSolution sol = solve_uncontrolled(mu, cost, delta, opt);
        oracle::OracleBudget budget;
        budget.max_grid = 9;
        double brute = oracle::brute_dro(mu, cost, {}, delta, grid, budget);
        CHECK(sol.value >= brute - 1e-9);
    }
}

TEST_CASE("controlled one-period analytic case: tracking under a unit budget") {
    // worst case pushes mass to either end; symmetry pins the control at zero
    AdaptedMeasure mu = AdaptedMeasure::from_paths(1, 2.0, {{{0.0}, 1.0}});
    CostModel cost = quadratic_tracking_cost(1);
    ControlGrid control{-1.0, 1.0, 129};
    DroSolution sol = solve_controlled(mu, cost, control, 1.0);
    CHECK(sol.value == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(sol.layers[0][0].alpha) < 1e-9);
}

TEST_CASE("controlled delta=0 equals the classical control value") {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 8; ++rep) {
        AdaptedMeasure mu = random_tree(rng(), 2, 2);
        CostModel cost = quadratic_tracking_cost(2);
        ControlGrid control{-1.5, 1.5, 65};
        DroSolution sol = solve_controlled(mu, cost, control, 0.0);
        // classical: per node, alpha tracks the conditional mean of the next
        // value; the optimal value is the sum of conditional variances
        double expect = 0.0;
        Kernel root = mu.root_kernel();
        double m1 = root.mean();
        for (int c = 0; c < root.size(); ++c)
            expect += root.probs[c] * (root.points[c] - m1) * (root.points[c] - m1);
        for (int i : mu.layer(1)) {
            Kernel k = mu.kernel_at(i);
            double m2 = k.mean();
            double var = 0.0;
            for (int c = 0; c < k.size(); ++c)
                var += k.probs[c] * (k.points[c] - m2) * (k.points[c] - m2);
            expect += mu.node(i).path_prob * var;
        }
        CHECK(sol.value == doctest::Approx(expect).epsilon(1e-7));
    }
}

TEST_CASE("controlled two-period values meet the oracle on matching grids") {
    std::mt19937_64 rng(5);
    GridBuilder grid = fixed_reach_grid(0.25);
    for (int rep = 0; rep < 6; ++rep) {
        AdaptedMeasure mu = random_tree(rng(), 2, 2);
        CostModel cost = quadratic_tracking_cost(2);
        double delta = full_slack_delta(mu, grid);
        ControlGrid control{-1.0, 1.0, 5};
        DroOptions opt;
        opt.grid = grid;
        opt.polish = false;  // align with the oracle's control grid
        DroSolution sol = solve_controlled(mu, cost, control, delta, opt);
        oracle::OracleBudget budget;
        budget.max_grid = 9;
        double brute = oracle::brute_dro(mu, cost, control.values(), delta, grid, budget);
        CHECK(sol.value >= brute - 1e-9);
        CHECK(sol.value == doctest::Approx(brute).epsilon(1e-7));
    }
}

TEST_CASE("value is nondecreasing in delta") {
    std::mt19937_64 rng(6);
    AdaptedMeasure mu = random_tree(rng(), 2, 2);
    CostModel cost = path_square_cost(2);
    DroOptions opt;
    opt.per_atom_points = 16;
    double prev = -1e300;
    for (double delta : {0.0, 0.1, 0.25, 0.5, 1.0}) {
        double v = solve_uncontrolled(mu, cost, delta, opt).value;
        CHECK(v >= prev - 1e-10);
        prev = v;
    }
}

TEST_CASE("value is nondecreasing under adversary grid refinement") {
    std::mt19937_64 rng(7);
    AdaptedMeasure mu = random_tree(rng(), 2, 2);
    CostModel cost = path_square_cost(2);
    DroOptions coarse, fine;
    coarse.per_atom_points = 4;
    fine.per_atom_points = 16;
    double vc = solve_uncontrolled(mu, cost, 0.5, coarse).value;
    double vf = solve_uncontrolled(mu, cost, 0.5, fine).value;
    CHECK(vc <= vf + 1e-10);
}

TEST_CASE("martingale solves: linear payoffs stay pinned at the root value") {
    AdaptedMeasure mu = random_martingale_tree(11, 2, 2);
    CostModel linear;
    linear.horizon = 2;
    linear.terminal = [](std::span<const double> y, std::span<const double>) { return y[1]; };
    linear.name = "terminal_value";
    for (double delta : {0.0, 0.3, 0.8}) {
        DroSolution sol = solve_martingale(mu, linear, nullptr, delta);
        CHECK(sol.value == doctest::Approx(0.0).epsilon(1e-9));  // root value is 0
    }
}

TEST_CASE("martingale call value sits between plain and unconstrained") {
    AdaptedMeasure mu = AdaptedMeasure::from_paths(
        2, 2.0,
        {{{1.0, 2.0}, 0.25}, {{1.0, 0.0}, 0.25}, {{-1.0, 0.0}, 0.25}, {{-1.0, -2.0}, 0.25}});
    REQUIRE(mu.is_martingale());
    CostModel call = call_payoff_cost(2, 0.5);
    double v0 = solve_uncontrolled(mu, call, 0.0).value;
    double vm = solve_martingale(mu, call, nullptr, 0.4).value;
    double vu = solve_uncontrolled(mu, call, 0.4).value;
    CHECK(vm >= v0 - 1e-10);
    CHECK(vm <= vu + 1e-10);
}

TEST_CASE("mean-pinned value never exceeds the unconstrained value, with controls") {
    std::mt19937_64 rng(41);
    CostModel cost = quadratic_tracking_cost(2);
    ControlGrid control{-2.0, 2.0, 33};
    DroOptions opt;
    opt.per_atom_points = 8;
    for (int rep = 0; rep < 6; ++rep) {
        AdaptedMeasure mu = random_martingale_tree(rng(), 2, 2);
        for (double delta : {0.0, 0.2, 0.5}) {
            double vm = solve_martingale(mu, cost, &control, delta, opt).value;
            double vu = solve_controlled(mu, cost, control, delta, opt).value;
            CHECK(vm <= vu + 1e-10);
            // at delta 0 both collapse to the classical control value
            if (delta == 0.0) CHECK(vm == doctest::Approx(vu).epsilon(1e-12));
        }
    }
}

TEST_CASE("controlled extraction re-evaluates to the solved value") {
    std::mt19937_64 rng(43);
    CostModel cost = quadratic_tracking_cost(2);
    ControlGrid control{-1.5, 1.5, 33};
    DroOptions opt;
    opt.per_atom_points = 8;
    for (int rep = 0; rep < 5; ++rep) {
        AdaptedMeasure mu = random_tree(rng(), 2, 2);
        DroSolution sol = solve_controlled(mu, cost, control, 0.25, opt);
        CHECK(std::abs(sol.evaluate(cost) - sol.value) <= 1e-6 * (1.0 + std::abs(sol.value)));
        AdaptedMeasure adv = sol.adversary();
        double mass = 0.0;
        for (const auto& atom : adv.flatten()) mass += atom.prob;
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("martingale solver refuses non-martingale trees") {
    AdaptedMeasure mu = random_tree(13, 2, 2);
    REQUIRE_FALSE(mu.is_martingale());
    CostModel cost = path_square_cost(2);
    CHECK_THROWS_AS(solve_martingale(mu, cost, nullptr, 0.1), ConstraintError);
}

TEST_CASE("adversary tree reloads and re-evaluates to the same value") {
    std::mt19937_64 rng(17);
    AdaptedMeasure mu = random_tree(rng(), 2, 2);
    CostModel cost = path_square_cost(2);
    DroOptions opt16;
    opt16.per_atom_points = 16;
    DroSolution sol = solve_uncontrolled(mu, cost, 0.4, opt16);
    AdaptedMeasure adv = sol.adversary();
    AdaptedMeasure reloaded = AdaptedMeasure::load_tree(adv.to_json());
    double expect = 0.0;
    for (const auto& atom : reloaded.flatten())
        expect += atom.prob * cost.eval(atom.values, {});
    CHECK(expect == doctest::Approx(sol.value).epsilon(1e-6));
}

TEST_CASE("minimax gap: zero at delta=0, small on convex instances, nonnegative always") {
    std::mt19937_64 rng(19);
    CostModel cost = quadratic_tracking_cost(2);
    ControlGrid control{-1.0, 1.0, 33};
    AdaptedMeasure mu = random_tree(rng(), 2, 2);
    DroOptions opt;
    opt.per_atom_points = 8;

    DroSolution at_zero = solve_controlled(mu, cost, control, 0.0, opt);
    CHECK(std::abs(minimax_gap(at_zero, cost, control, opt)) <= 1e-12);

    DroSolution sol = solve_controlled(mu, cost, control, 0.1, opt);
    double gap = minimax_gap(sol, cost, control, opt);
    CHECK(gap >= -1e-12);
    CHECK(gap <= 1e-4);

    // non-convex in the control: the gap is reported, only weak duality holds
    CostModel bumpy = cost;
    bumpy.convex_in_control = false;
    bumpy.strongly_convex_in_control = false;
    bumpy.name = "bumpy";
    bumpy.terminal = [](std::span<const double> y, std::span<const double> a) {
        double s = 0.0;
        for (std::size_t t = 0; t < y.size(); ++t) {
            double d = y[t] - a[t];
            s += d * d + 0.3 * std::sin(3.0 * a[t]);
        }
        return s;
    };
    for (int t = 1; t <= 2; ++t) {
        bumpy.parts[t - 1] = [t](std::span<const double> y, double at) {
            double d = y[t - 1] - at;
            return d * d + 0.3 * std::sin(3.0 * at);
        };
    }
    DroSolution bs = solve_controlled(mu, bumpy, control, 0.1, opt);
    CHECK(minimax_gap(bs, bumpy, control, opt) >= -1e-12);
}

TEST_CASE("causal-vs-map probe: exact at delta=0 and under slack budgets") {
    std::mt19937_64 rng(23);
    CostModel cost = quadratic_tracking_cost(2);
    ControlGrid control{-1.0, 1.0, 5};
    for (int rep = 0; rep < 5; ++rep) {
        AdaptedMeasure mu = random_tree(rng(), 2, 2);
        DroOptions opt;
        opt.grid = fixed_reach_grid(0.2);
        opt.polish = false;
        oracle::OracleBudget budget;
        budget.max_grid = 9;
        oracle::CausalProbe zero =
            oracle::causal_equals_bicausal_probe(mu, cost, &control, 0.0, opt, budget);
        CHECK(std::abs(zero.diff) <= 1e-9);
        double slack_delta = full_slack_delta(mu, opt.grid);
        oracle::CausalProbe slack =
            oracle::causal_equals_bicausal_probe(mu, cost, &control, slack_delta, opt, budget);
        CHECK(slack.diff >= -1e-9);
        CHECK(std::abs(slack.diff) <= 1e-6);
    }
    // one-period instances: the classes coincide whenever the budget is slack
    for (int rep = 0; rep < 5; ++rep) {
        AdaptedMeasure mu = random_tree(rng(), 1, 3);
        CostModel c1 = quadratic_tracking_cost(1);
        DroOptions opt;
        opt.grid = fixed_reach_grid(0.2);
        opt.polish = false;
        ControlGrid k1{-1.0, 1.0, 5};
        oracle::OracleBudget b1;
        b1.max_grid = 9;
        oracle::CausalProbe probe = oracle::causal_equals_bicausal_probe(
            mu, c1, &k1, full_slack_delta(mu, opt.grid), opt, b1);
        CHECK(std::abs(probe.diff) <= 1e-9);
    }
}

TEST_CASE("missing semi-separable parts fail fast for controlled solves") {
    AdaptedMeasure mu = random_tree(29, 2, 2);
    CostModel cost = path_square_cost(2);  // no parts, uncontrolled
    cost.controlled = true;                // claim controls without parts
    ControlGrid control{-1.0, 1.0, 9};
    CHECK_THROWS_AS(solve_controlled(mu, cost, control, 0.1), CapabilityError);
}

TEST_CASE("three-period controlled solve stays monotone and extractable") {
    AdaptedMeasure mu = random_tree(37, 3, 2);
    CostModel cost = quadratic_tracking_cost(3);
    ControlGrid control{-1.5, 1.5, 17};
    DroOptions opt;
    opt.per_atom_points = 2;
    double prev = -1e300;
    for (double delta : {0.0, 0.1, 0.3}) {
        DroSolution sol = solve_controlled(mu, cost, control, delta, opt);
        CHECK(sol.value >= prev - 1e-10);
        prev = sol.value;
        CHECK(std::abs(sol.evaluate(cost) - sol.value) <= 1e-6 * (1.0 + std::abs(sol.value)));
        CHECK(minimax_gap(sol, cost, control, opt) >= -1e-12);
    }
}

TEST_CASE("solutions are bit-identical across thread counts") {
    AdaptedMeasure mu = random_tree(31, 2, 3);
    CostModel cost = path_square_cost(2);
    DroOptions o1, o4;
    o1.threads = 1;
    o4.threads = 4;
    o1.per_atom_points = o4.per_atom_points = 8;
    double v1 = solve_uncontrolled(mu, cost, 0.3, o1).value;
    double v4 = solve_uncontrolled(mu, cost, 0.3, o4).value;
    CHECK(v1 == v4);
}
