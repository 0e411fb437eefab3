// SPDX-License-Identifier: MIT
#pragma once

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "awdro/adapted_metrics.hpp"
#include "awdro/dro.hpp"
#include "awdro/measures.hpp"
#include "awdro/sensitivity.hpp"
#include "awdro/transport.hpp"

namespace awdro {

/// One row of the closed-form regression table: named desk-scale instances
/// whose values are known exactly.
struct RegressionRow {
    std::string name;
    bool lower_bound = false;  // pass iff actual >= expected - tol
    double expected = 0.0;
    double actual = 0.0;
    double tol = 0.0;
    bool pass = false;
};

namespace detail {

inline RegressionRow row_eq(std::string name, double expected, double actual, double tol) {
    RegressionRow r{std::move(name), false, expected, actual, tol, false};
    r.pass = std::abs(actual - expected) <= tol;
    return r;
}

inline RegressionRow row_ge(std::string name, double bound, double actual, double tol) {
    RegressionRow r{std::move(name), true, bound, actual, tol, false};
    r.pass = actual >= bound - tol;
    return r;
}

inline AdaptedMeasure sign_flip(double eps, double p) {
    return AdaptedMeasure::from_paths(2, p, {{{eps, 1.0}, 0.5}, {{-eps, -1.0}, 0.5}});
}

inline AdaptedMeasure sign_flip_limit(double p) {
    return AdaptedMeasure::from_paths(2, p, {{{0.0, 1.0}, 0.5}, {{0.0, -1.0}, 0.5}});
}

inline AdaptedMeasure heavy_tail(double eps) {
    return AdaptedMeasure::from_paths(
        2, 1.0,
        {{{eps * (eps - 1.0), -1.0 / std::sqrt(eps)}, eps},
         {{eps * eps, std::sqrt(eps) / (1.0 - eps)}, 1.0 - eps}});
}

inline std::string tag(const char* base, double a, double b) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s(%g,p=%g)", base, a, b);
    return buf;
}

}  // namespace detail

/// Runs every named closed-form instance and returns the table.
inline std::vector<RegressionRow> reference_suite() {
    using namespace detail;
    std::vector<RegressionRow> rows;

    // two-period sign-flip family: the flat metric sees eps, the nested one
    // keeps the filtration mismatch 2^{(p-1)/p}
    for (double p : {1.0, 2.0}) {
        for (double eps : {0.5, 0.1, 0.01}) {
            AdaptedMeasure limit = sign_flip_limit(p), tree = sign_flip(eps, p);
            rows.push_back(row_eq(tag("w_sign_flip", eps, p), eps,
                                  wasserstein(limit, tree).value, 1e-9));
            double aw = std::pow(std::pow(eps, p) + std::pow(2.0, p - 1.0), 1.0 / p);
            rows.push_back(row_eq(tag("aw_sign_flip", eps, p), aw,
                                  adapted_wasserstein(limit, tree).value, 1e-9));
        }
    }

    // heavy-tail family at p = 1: nested-sum vanishes, nested-max explodes
    for (double eps : {0.04, 0.01}) {
        AdaptedMeasure point = AdaptedMeasure::from_paths(2, 1.0, {{{0.0, 0.0}, 1.0}});
        AdaptedMeasure tree = heavy_tail(eps);
        double aw1 = 2.0 * eps * eps * (1.0 - eps) + 2.0 * std::sqrt(eps);
        rows.push_back(row_eq(tag("aw1_heavy_tail", eps, 1.0), aw1,
                              adapted_wasserstein(point, tree).value, 1e-9));
        rows.push_back(row_eq(tag("awinf_heavy_tail", eps, 1.0), 1.0 / std::sqrt(eps),
                              adapted_wasserstein_inf(point, tree).value, 1e-9));
    }

    // non-convexity pair and its midpoint mixture
    for (double p : {1.0, 2.0}) {
        AdaptedMeasure mu =
            AdaptedMeasure::from_paths(2, p, {{{1.0, 1.0}, 0.5}, {{0.0, 100.0}, 0.5}});
        AdaptedMeasure nu =
            AdaptedMeasure::from_paths(2, p, {{{1.0, 100.0}, 0.5}, {{0.0, 1.0}, 0.5}});
        AdaptedMeasure mix = AdaptedMeasure::from_paths(2, p,
                                                        {{{1.0, 1.0}, 0.25},
                                                         {{1.0, 100.0}, 0.25},
                                                         {{0.0, 1.0}, 0.25},
                                                         {{0.0, 100.0}, 0.25}});
        rows.push_back(row_eq(tag("awinf_nonconvex_pair", 0, p), 1.0,
                              adapted_wasserstein_inf(mu, nu).value, 1e-9));
        rows.push_back(row_ge(tag("awinf_nonconvex_mixture", 0, p),
                              99.0 * std::pow(0.5, 1.0 / p),
                              adapted_wasserstein_inf(mu, mix).value, 1e-9));
    }

    // escaping-mass family: unit distance for every n
    for (double p : {1.0, 2.0}) {
        for (int n : {2, 10, 100}) {
            AdaptedMeasure mun = AdaptedMeasure::from_paths(
                2, p, {{{0.0, 0.0}, 1.0 - 1.0 / n}, {{1.0, 1.0}, 1.0 / n}});
            AdaptedMeasure point = AdaptedMeasure::from_paths(2, p, {{{0.0, 0.0}, 1.0}});
            rows.push_back(row_eq(tag("awinf_escaping_mass", n, p), 1.0,
                                  adapted_wasserstein_inf(mun, point).value, 1e-12));
        }
    }

    // one-period analytic solves
    {
        AdaptedMeasure point = AdaptedMeasure::from_paths(1, 2.0, {{{0.0}, 1.0}});
        rows.push_back(row_eq("dro_linear_unit_budget", 1.0,
                              solve_uncontrolled(point, linear_path_cost(1), 1.0).value, 1e-9));
        CostModel square;
        square.horizon = 1;
        square.name = "square";
        square.terminal = [](std::span<const double> y, std::span<const double>) {
            return y[0] * y[0];
        };
        rows.push_back(row_eq("dro_martingale_variance", 1.0,
                              solve_martingale(point, square, nullptr, 1.0).value, 1e-9));
        ControlGrid control{-1.0, 1.0, 129};
        rows.push_back(row_eq("dro_tracking_saddle", 1.0,
                              solve_controlled(point, quadratic_tracking_cost(1), control, 1.0)
                                  .value,
                              1e-9));
    }

    // sensitivity analytic case
    {
        AdaptedMeasure two =
            AdaptedMeasure::from_paths(1, 2.0, {{{-1.0}, 0.5}, {{1.0}, 0.5}});
        CostModel lin = linear_path_cost(1);
        rows.push_back(row_eq("sens_two_point_plain", 1.0, upsilon(two, lin).upsilon, 1e-10));
        rows.push_back(
            row_eq("sens_two_point_pinned", 0.0, upsilon_martingale(two, lin).upsilon, 1e-10));
    }

    return rows;
}

inline std::string render_reference(const std::vector<RegressionRow>& rows) {
    std::ostringstream os;
    int failures = 0;
    for (const auto& r : rows) {
        char line[192];
        std::snprintf(line, sizeof line, "%-34s %s expected %s %.12g   actual %.12g\n",
                      r.name.c_str(), r.pass ? "ok  " : "FAIL", r.lower_bound ? ">=" : "==",
                      r.expected, r.actual);
        os << line;
        failures += r.pass ? 0 : 1;
    }
    os << "reference suite: " << rows.size() << " rows, " << failures << " failure(s)\n";
    return os.str();
}

}  // namespace awdro
