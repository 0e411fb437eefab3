// SPDX-License-Identifier: MIT
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "awdro/common.hpp"

namespace awdro {

/// Terminal cost f(y_{1:N}, alpha_{1:N}) with optional semi-separable parts
/// f_t(y_{1:t}, alpha_t) and per-coordinate partial derivatives.
///
/// Convexity and strong convexity in the control are user-asserted flags; the
/// library cannot verify them for arbitrary costs and treats them as given.
struct CostModel {
    using Terminal = std::function<double(std::span<const double>, std::span<const double>)>;
    using Part = std::function<double(std::span<const double>, double)>;

    int horizon = 1;
    bool controlled = false;
    Terminal terminal;                // f(y, a); a is empty when uncontrolled
    std::vector<Part> parts;          // f_t(y_{1:t}, a_t), size horizon when present
    std::vector<Terminal> partials;   // d f / d y_t, size horizon when present
    bool convex_in_control = false;
    bool strongly_convex_in_control = false;
    std::string name = "cost";

    bool has_parts() const { return !parts.empty(); }
    bool has_partials() const { return !partials.empty(); }

    double eval(std::span<const double> y, std::span<const double> a) const {
        return terminal(y, a);
    }

    // t is 1-based
    double part(int t, std::span<const double> y_prefix, double a_t) const {
        return parts[t - 1](y_prefix, a_t);
    }

    double partial(int t, std::span<const double> y, std::span<const double> a) const {
        return partials[t - 1](y, a);
    }

    /// Probes sum_t f_t(y_{1:t}, a_t) == f(y, a) at random points.
    void check_parts_consistency(std::uint64_t seed = 99, int probes = 32, double span = 2.0) const {
        if (!has_parts()) return;
        if (static_cast<int>(parts.size()) != horizon)
            throw SchemaError("cost model has " + std::to_string(parts.size()) + " parts for horizon " +
                              std::to_string(horizon));
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-span, span);
        std::vector<double> y(horizon), a(controlled ? horizon : 0);
        for (int k = 0; k < probes; ++k) {
            for (double& v : y) v = u(rng);
            for (double& v : a) v = u(rng);
            double whole = terminal(y, a);
            double sum = 0.0;
            for (int t = 1; t <= horizon; ++t)
                sum += parts[t - 1](std::span<const double>(y.data(), t), controlled ? a[t - 1] : 0.0);
            if (std::abs(sum - whole) > 1e-9 * (1.0 + std::abs(whole)))
                throw SchemaError("semi-separable parts disagree with the terminal cost (probe " +
                                  std::to_string(k) + ": " + std::to_string(sum) + " vs " +
                                  std::to_string(whole) + ")");
        }
    }
};

/// sum_t (y_t - a_t)^2 - controlled, semi-separable, strongly convex.
inline CostModel quadratic_tracking_cost(int horizon, std::vector<double> y_weights = {}) {
    if (y_weights.empty()) y_weights.assign(horizon, 0.0);
    CostModel c;
    c.horizon = horizon;
    c.controlled = true;
    c.convex_in_control = true;
    c.strongly_convex_in_control = true;
    c.name = "quadratic_tracking";
    c.terminal = [horizon, y_weights](std::span<const double> y, std::span<const double> a) {
        double s = 0.0;
        for (int t = 0; t < horizon; ++t) {
            double d = y[t] - a[t];
            s += d * d + y_weights[t] * y[t];
        }
        return s;
    };
    for (int t = 1; t <= horizon; ++t) {
        double w = y_weights[t - 1];
        c.parts.push_back([t, w](std::span<const double> y, double at) {
            double d = y[t - 1] - at;
            return d * d + w * y[t - 1];
        });
        c.partials.push_back([t, w](std::span<const double> y, std::span<const double> a) {
            return 2.0 * (y[t - 1] - a[t - 1]) + w;
        });
    }
    return c;
}

/// max(y_N - strike, 0) - uncontrolled; the derivative uses the up-branch on
/// ties.
inline CostModel call_payoff_cost(int horizon, double strike) {
    CostModel c;
    c.horizon = horizon;
    c.controlled = false;
    c.name = "call";
    c.terminal = [horizon, strike](std::span<const double> y, std::span<const double>) {
        return std::max(y[horizon - 1] - strike, 0.0);
    };
    for (int t = 1; t <= horizon; ++t) {
        bool last = t == horizon;
        c.partials.push_back([last, strike, horizon](std::span<const double> y, std::span<const double>) {
            if (!last) return 0.0;
            return y[horizon - 1] >= strike ? 1.0 : 0.0;
        });
        c.parts.push_back([last, strike, horizon](std::span<const double> y, double) {
            if (!last) return 0.0;
            return std::max(y[horizon - 1] - strike, 0.0);
        });
    }
    return c;
}

/// sum_t c_t y_t - uncontrolled linear path cost.
inline CostModel linear_path_cost(int horizon, std::vector<double> coeff = {}) {
    if (coeff.empty()) coeff.assign(horizon, 1.0);
    CostModel c;
    c.horizon = horizon;
    c.controlled = false;
    c.name = "linear_path";
    c.terminal = [coeff](std::span<const double> y, std::span<const double>) {
        double s = 0.0;
        for (std::size_t t = 0; t < coeff.size(); ++t) s += coeff[t] * y[t];
        return s;
    };
    for (int t = 1; t <= horizon; ++t) {
        double w = coeff[t - 1];
        c.parts.push_back([t, w](std::span<const double> y, double) { return w * y[t - 1]; });
        c.partials.push_back([w](std::span<const double>, std::span<const double>) { return w; });
    }
    return c;
}

}  // namespace awdro
