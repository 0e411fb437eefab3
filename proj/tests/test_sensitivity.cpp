// SPDX-License-Identifier: MIT
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "awdro/measures.hpp"
#include "awdro/sensitivity.hpp"

using namespace awdro;

namespace {

AdaptedMeasure two_point(double p) {
    return AdaptedMeasure::from_paths(1, p, {{{-1.0}, 0.5}, {{1.0}, 0.5}});
}

}  // namespace

TEST_CASE("analytic one-period case: unit slope, zero recentered slope") {
    AdaptedMeasure mu = two_point(2.0);
    CostModel cost = linear_path_cost(1);
    SensitivityReport plain = upsilon(mu, cost);
    CHECK(plain.upsilon == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(plain.per_period.size() == 1);
    CHECK(plain.per_period[0] == doctest::Approx(plain.upsilon));

    SensitivityReport mart = upsilon_martingale(mu, cost);
    CHECK(std::abs(mart.upsilon) <= 1e-10);
}

TEST_CASE("constant gradients over two periods add up") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        AdaptedMeasure mu = random_tree(rng(), 2, 2);
        CostModel cost = linear_path_cost(2);  // d_t f = 1
        SensitivityReport rep2 = upsilon(mu, cost);
        CHECK(rep2.upsilon == doctest::Approx(2.0).epsilon(1e-10));
    }
}

TEST_CASE("martingale recentering at p=2 equals the kernel variance formula") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 30; ++rep) {
        AdaptedMeasure mu = random_martingale_tree(rng(), 1 + rep % 3, 2 + rep % 2);
        CostModel cost;
        cost.horizon = mu.horizon();
        int N = mu.horizon();
        cost.terminal = [N](std::span<const double> y, std::span<const double>) {
            double s = 0.0;
            for (int t = 0; t < N; ++t) s += (0.3 + 0.2 * t) * y[t] * y[t] + 0.1 * y[t];
            return s;
        };
        for (int t = 1; t <= N; ++t)
            cost.partials.push_back([t](std::span<const double> y, std::span<const double>) {
                return 2.0 * (0.3 + 0.2 * (t - 1)) * y[t - 1] + 0.1;
            });
        SensitivityReport mart = upsilon_martingale(mu, cost);
        // per history node: inf_l ||g + l||_{L^2(kernel)} = sqrt(Var_kernel g)
        auto grads = conditional_gradients(mu, cost, Policy{});
        double expect = 0.0;
        for (int t = 1; t <= N; ++t) {
            auto blocks = detail::history_blocks(mu, t);
            for (const auto& b : blocks) {
                double mean = 0.0, second = 0.0;
                for (int c = 0; c < b.kernel.size(); ++c) {
                    double gv = grads[t - 1].at(b.children[c]);
                    mean += b.kernel.probs[c] * gv;
                    second += b.kernel.probs[c] * gv * gv;
                }
                expect += b.weight * std::sqrt(std::max(0.0, second - mean * mean));
            }
        }
        CHECK(mart.upsilon == doctest::Approx(expect).epsilon(1e-10));
        SensitivityReport plain = upsilon(mu, cost);
        CHECK(mart.upsilon <= plain.upsilon + 1e-12);
    }
}

TEST_CASE("recentered slope never exceeds the plain slope") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        double p = rep % 2 ? 1.5 : 2.0;
        AdaptedMeasure mu = random_martingale_tree(rng(), 1 + rep % 2, 2, 1.0, p);
        CostModel cost = call_payoff_cost(mu.horizon(), 0.1);
        SensitivityReport plain = upsilon(mu, cost);
        SensitivityReport mart = upsilon_martingale(mu, cost);
        CHECK(mart.upsilon <= plain.upsilon + 1e-12);
        double sum = 0.0;
        for (double term : plain.per_period) sum += term;
        CHECK(plain.upsilon == doctest::Approx(sum));
    }
}

TEST_CASE("duality map: pairing attains the norm at unit L^p size") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        double p = rep % 2 ? 2.0 : 3.0;
        double q = conjugate_exponent(p);
        AdaptedMeasure mu = random_tree(rng(), 2, 3, -1.0, 1.0, p);
        CostModel cost;
        cost.horizon = 2;
        cost.terminal = [](std::span<const double> y, std::span<const double>) {
            return y[0] * y[0] + std::abs(y[1]) * y[1];
        };
        cost.partials.push_back([](std::span<const double> y, std::span<const double>) {
            return 2.0 * y[0];
        });
        cost.partials.push_back([](std::span<const double> y, std::span<const double>) {
            return 2.0 * std::abs(y[1]);
        });
        auto grads = conditional_gradients(mu, cost, Policy{});
        for (int t = 1; t <= 2; ++t) {
            auto T = worst_direction(mu, cost, Policy{}, t);
            for (const auto& block : detail::history_blocks(mu, t)) {
                double pairing = 0.0, lp_norm = 0.0, gnorm = 0.0;
                std::vector<double> g(block.kernel.size());
                for (int c = 0; c < block.kernel.size(); ++c) {
                    g[c] = grads[t - 1].at(block.children[c]);
                    pairing += block.kernel.probs[c] * g[c] * T.at(block.children[c]);
                    lp_norm += block.kernel.probs[c] *
                               std::pow(std::abs(T.at(block.children[c])), p);
                }
                gnorm = detail::lq_norm(g, block.kernel.probs, q);
                if (gnorm > 1e-12) {
                    CHECK(pairing == doctest::Approx(gnorm).epsilon(1e-10));
                    CHECK(std::pow(lp_norm, 1.0 / p) == doctest::Approx(1.0).epsilon(1e-10));
                } else {
                    CHECK(std::abs(pairing) <= 1e-12);
                }
            }
        }
    }
}

TEST_CASE("duality map worked example: two atoms at p = 2") {
    // g = {-1, 2} with equal masses: T is proportional to g with pairing
    // sqrt(2.5)
    AdaptedMeasure mu = two_point(2.0);
    CostModel cost;
    cost.horizon = 1;
    cost.terminal = [](std::span<const double> y, std::span<const double>) {
        double v = y[0];
        return v < 0 ? -v : 2.0 * v;  // derivative -1 below zero, 2 above
    };
    cost.partials.push_back([](std::span<const double> y, std::span<const double>) {
        return y[0] < 0 ? -1.0 : 2.0;
    });
    auto T = worst_direction(mu, cost, Policy{}, 1);
    double norm = std::sqrt(2.5);
    CHECK(T.at(mu.layer(1)[0]) == doctest::Approx(-1.0 / norm).epsilon(1e-12));
    CHECK(T.at(mu.layer(1)[1]) == doctest::Approx(2.0 / norm).epsilon(1e-12));

    // constant gradients recenter to the zero direction in the pinned case
    CostModel lin = linear_path_cost(1);
    auto Tm = worst_direction(mu, lin, Policy{}, 1, true);
    CHECK(std::abs(Tm.at(mu.layer(1)[0])) <= 1e-12);
    CHECK(std::abs(Tm.at(mu.layer(1)[1])) <= 1e-12);
}

TEST_CASE("worst_direction refuses p = 1") {
    AdaptedMeasure mu = two_point(1.0);
    CostModel cost = linear_path_cost(1);
    CHECK_THROWS_AS(worst_direction(mu, cost, Policy{}, 1), CapabilityError);
}

TEST_CASE("empirical slopes converge to the sensitivity on the analytic case") {
    AdaptedMeasure mu = two_point(2.0);
    CostModel cost = linear_path_cost(1);
    SensitivityReport rep = empirical_slope(mu, cost, nullptr, {0.2, 0.1, 0.05, 0.025, 0.0125});
    REQUIRE(rep.slopes.size() == 5);
    double prev_err = 1e300;
    for (const auto& [delta, slope] : rep.slopes) {
        double err = std::abs(slope - rep.upsilon);
        CHECK(err <= prev_err + 1e-12);
        prev_err = err;
    }
    CHECK(prev_err <= 0.05);
    // the first-order adversary is a valid lower bound: V(delta) >= floor
    for (std::size_t k = 0; k < rep.slopes.size(); ++k) {
        double delta = rep.slopes[k].first;
        double v = rep.slopes[k].second * delta;  // V(delta) - V(0), V(0) = 0
        CHECK(v >= rep.floors[k] - 1e-9);
    }
}

TEST_CASE("controlled slope sweep converges to the controlled sensitivity") {
    AdaptedMeasure mu = AdaptedMeasure::from_paths(1, 2.0, {{{-0.5}, 0.5}, {{0.5}, 0.5}});
    CostModel cost = quadratic_tracking_cost(1);
    ControlGrid control{-1.0, 1.0, 65};
    DroOptions opt;
    opt.per_atom_points = 32;
    SensitivityReport rep =
        empirical_slope(mu, cost, &control, {0.2, 0.1, 0.05}, false, opt);
    CHECK(rep.upsilon == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(std::abs(rep.slopes.back().second - rep.upsilon) <= 0.05);
}

TEST_CASE("upsilon of the controlled tracking cost uses the plain optimizer") {
    AdaptedMeasure mu = AdaptedMeasure::from_paths(1, 2.0, {{{-0.5}, 0.5}, {{0.5}, 0.5}});
    CostModel cost = quadratic_tracking_cost(1);
    ControlGrid control{-1.0, 1.0, 65};
    SensitivityReport rep = upsilon(mu, cost, &control);
    // alpha* = mean = 0; gradient 2(y - 0) = {-1, 1}; L^2 norm = 1
    CHECK(rep.policy.controlled);
    CHECK(std::abs(rep.policy.root_alpha) < 1e-9);
    CHECK(rep.upsilon == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("missing derivatives are a capability error") {
    AdaptedMeasure mu = two_point(2.0);
    CostModel cost;
    cost.horizon = 1;
    cost.terminal = [](std::span<const double> y, std::span<const double>) { return y[0]; };
    CHECK_THROWS_AS(upsilon(mu, cost), CapabilityError);
}
