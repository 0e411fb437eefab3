// SPDX-License-Identifier: MIT
#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "awdro/common.hpp"
#include "awdro/cost_model.hpp"
#include "awdro/dro.hpp"
#include "awdro/measures.hpp"

namespace awdro {

/// Deterministic policy of the plain (delta = 0) control problem: alpha_{t+1}
/// is attached to the depth-t history node, alpha_1 to the root.
struct Policy {
    bool controlled = false;
    double root_alpha = 0.0;
    std::map<int, double> by_node;  // node index (depth 1..N-1) -> alpha_{depth+1}
    int grid_ties = 0;              // grid minimizers that tied at resolution 1e-12

    std::vector<double> along_path(const AdaptedMeasure& mu, int leaf) const {
        if (!controlled) return {};
        std::vector<double> a(mu.horizon());
        int cur = leaf;
        for (int d = mu.horizon(); d >= 2; --d) {
            int par = mu.node(cur).parent;
            a[d - 1] = by_node.at(par);
            cur = par;
        }
        a[0] = root_alpha;
        return a;
    }
};

namespace detail {

template <class F>
double golden_min(double lo, double hi, F&& f, double tol) {
    constexpr double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

inline double lq_norm(const std::vector<double>& v, const std::vector<double>& w, double q) {
    if (std::isinf(q)) {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += w[i] * std::pow(std::abs(v[i]), q);
    return std::pow(s, 1.0 / q);
}

inline std::vector<double> x_path_of(const AdaptedMeasure& mu, int node) {
    std::vector<double> path(mu.node(node).depth);
    int cur = node;
    for (int d = mu.node(node).depth; d >= 1; --d) {
        path[d - 1] = mu.node(cur).value;
        cur = mu.node(cur).parent;
    }
    return path;
}

}  // namespace detail

/// argmin of the plain dynamic program at delta = 0. Grid scan with a
/// golden-section refinement; ties at grid resolution keep the smallest
/// control and are counted.
inline Policy optimal_policy_at_zero(const AdaptedMeasure& mu, const CostModel& cost,
                                     const ControlGrid* control, const DroOptions& opt = {}) {
    Policy policy;
    if (!cost.controlled) return policy;
    if (!control) throw CapabilityError("controlled cost needs a control grid");
    if (!cost.has_parts())
        throw CapabilityError("the plain policy needs the semi-separable decomposition");
    if (!cost.strongly_convex_in_control)
        throw CapabilityError("policy extraction relies on the asserted strong convexity");
    policy.controlled = true;

    const int N = mu.horizon();
    const std::vector<double> controls = control->values();
    std::map<int, double> w;  // continuation below a node
    for (int i : mu.layer(N)) w[i] = 0.0;

    auto solve_node = [&](const Kernel& kernel, const std::vector<int>& children,
                          const std::vector<double>& parent_path, int t_next, double& alpha_out) {
        std::vector<double> ybuf(parent_path);
        ybuf.push_back(0.0);
        auto objective = [&](double alpha) {
            double v = 0.0;
            for (int c = 0; c < kernel.size(); ++c) {
                ybuf[t_next - 1] = kernel.points[c];
                v += kernel.probs[c] *
                     (cost.part(t_next, ybuf, alpha) + w.at(children[c]));
            }
            return v;
        };
        double best_v = objective(controls.front());
        double best_a = controls.front();
        for (std::size_t i = 1; i < controls.size(); ++i) {
            double v = objective(controls[i]);
            if (v < best_v - 1e-12) {
                best_v = v;
                best_a = controls[i];
            } else if (std::abs(v - best_v) <= 1e-12) {
                ++policy.grid_ties;
            }
        }
        if (opt.polish && controls.size() > 1) {
            double cell = controls[1] - controls[0];
            double a = std::max(control->lo, best_a - cell);
            double b = std::min(control->hi, best_a + cell);
            double xs = detail::golden_min(a, b, objective, 1e-12 * (1.0 + std::abs(b - a)));
            double vs = objective(xs);
            if (vs < best_v) {
                best_v = vs;
                best_a = xs;
            }
        }
        alpha_out = best_a;
        return best_v;
    };

    for (int t = N - 1; t >= 1; --t) {
        for (int i : mu.layer(t)) {
            double alpha;
            double v = solve_node(mu.kernel_at(i), mu.node(i).children, detail::x_path_of(mu, i),
                                  t + 1, alpha);
            w[i] = v;
            policy.by_node[i] = alpha;
        }
    }
    double alpha;
    solve_node(mu.root_kernel(), mu.layer(1), {}, 1, alpha);
    policy.root_alpha = alpha;
    return policy;
}

/// g_t(x_{1:t}) = E[ d_t f(X, alpha*) | X_{1:t} = x_{1:t} ] for every depth-t
/// node, all t, by backward averaging over the tree.
inline std::vector<std::map<int, double>> conditional_gradients(const AdaptedMeasure& mu,
                                                                const CostModel& cost,
                                                                const Policy& policy) {
    if (!cost.has_partials()) throw CapabilityError("cost model has no partial derivatives");
    const int N = mu.horizon();
    auto paths = mu.flatten();
    std::vector<std::map<int, double>> g(N);
    for (int t = 1; t <= N; ++t) {
        // leaf values of d_t f, then average up to depth t
        std::map<int, double> h;
        for (const auto& atom : paths) {
            std::vector<double> a = policy.along_path(mu, atom.leaf);
            h[atom.leaf] = cost.partial(t, atom.values, a);
        }
        for (int d = N - 1; d >= t; --d) {
            for (int i : mu.layer(d)) {
                Kernel k = mu.kernel_at(i);
                const auto& children = mu.node(i).children;
                double acc = 0.0;
                for (int c = 0; c < k.size(); ++c) acc += k.probs[c] * h.at(children[c]);
                h[i] = acc;
            }
        }
        for (int i : mu.layer(t)) g[t - 1][i] = h.at(i);
    }
    return g;
}

struct SensitivityReport {
    bool martingale = false;
    double upsilon = 0.0;
    std::vector<double> per_period;                      // exact summands of upsilon
    Policy policy;                                       // alpha* used
    std::vector<std::map<int, double>> gradients;        // [t-1]: depth-t node -> g_t
    std::vector<std::map<int, double>> lambda_by_period; // [t-1]: history node (-1 root) -> lambda*
    std::vector<std::pair<double, double>> slopes;       // (delta, (V(delta)-V(0))/delta)
    std::vector<double> floors;                          // first-order adversary values per delta
    std::vector<std::map<int, double>> directions;       // [t-1]: depth-t node -> T_t (p > 1)
    double upsilon_tilde = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

struct HistoryBlock {
    int history;                 // node index at depth t-1, or -1 for the root
    double weight;               // path probability of the history
    Kernel kernel;               // one-step kernel below it
    std::vector<int> children;   // depth-t node indices
};

inline std::vector<HistoryBlock> history_blocks(const AdaptedMeasure& mu, int t) {
    std::vector<HistoryBlock> blocks;
    if (t == 1) {
        blocks.push_back({-1, 1.0, mu.root_kernel(), mu.layer(1)});
        return blocks;
    }
    for (int i : mu.layer(t - 1))
        blocks.push_back({i, mu.node(i).path_prob, mu.kernel_at(i), mu.node(i).children});
    return blocks;
}

inline double centered_norm(const std::vector<double>& g, const std::vector<double>& w, double q,
                            double lambda) {
    std::vector<double> shifted(g);
    for (double& x : shifted) x += lambda;
    return lq_norm(shifted, w, q);
}

inline double best_lambda(const std::vector<double>& g, const std::vector<double>& w, double q) {
    double norm0 = lq_norm(g, w, q);
    if (norm0 == 0.0) return 0.0;
    double lo = -2.0 * norm0, hi = 2.0 * norm0;
    return golden_min(lo, hi, [&](double l) { return centered_norm(g, w, q, l); },
                      1e-12 * (1.0 + norm0));
}

}  // namespace detail

/// ell^q aggregate of the unconditional L^q norms of the conditional
/// gradients; the comparison scalar for the path-budget ball.
inline double upsilon_tilde_aggregate(const AdaptedMeasure& mu,
                                      const std::vector<std::map<int, double>>& g, double q) {
    const int N = mu.horizon();
    if (std::isinf(q)) {
        double m = 0.0;
        for (int t = 1; t <= N; ++t)
            for (const auto& [node, val] : g[t - 1]) m = std::max(m, std::abs(val));
        return m;
    }
    double s = 0.0;
    for (int t = 1; t <= N; ++t) {
        double term = 0.0;
        for (const auto& [node, val] : g[t - 1])
            term += mu.node(node).path_prob * std::pow(std::abs(val), q);
        s += term;
    }
    return std::pow(s, 1.0 / q);
}

namespace detail {

inline SensitivityReport upsilon_core(const AdaptedMeasure& mu, const CostModel& cost,
                                      const ControlGrid* control, bool martingale,
                                      const DroOptions& opt) {
    if (martingale && !mu.is_martingale())
        throw ConstraintError("tree violates the conditional-mean property");
    SensitivityReport rep;
    rep.martingale = martingale;
    rep.policy = optimal_policy_at_zero(mu, cost, cost.controlled ? control : nullptr, opt);
    rep.gradients = conditional_gradients(mu, cost, rep.policy);
    const int N = mu.horizon();
    const double q = conjugate_exponent(mu.p());
    rep.per_period.assign(N, 0.0);
    rep.lambda_by_period.assign(N, {});
    for (int t = 1; t <= N; ++t) {
        for (const auto& block : history_blocks(mu, t)) {
            std::vector<double> g(block.kernel.size());
            for (int c = 0; c < block.kernel.size(); ++c)
                g[c] = rep.gradients[t - 1].at(block.children[c]);
            double norm;
            if (martingale) {
                double lambda = best_lambda(g, block.kernel.probs, q);
                rep.lambda_by_period[t - 1][block.history] = lambda;
                norm = centered_norm(g, block.kernel.probs, q, lambda);
            } else {
                norm = lq_norm(g, block.kernel.probs, q);
            }
            rep.per_period[t - 1] += block.weight * norm;
        }
        rep.upsilon += rep.per_period[t - 1];
    }
    rep.upsilon_tilde = upsilon_tilde_aggregate(mu, rep.gradients, q);
    return rep;
}

}  // namespace detail

/// First-order coefficient of delta -> V(delta) at zero: per period, the
/// kernel-wise L^q norm of the conditional gradient, averaged over histories
/// and summed over periods (q = p/(p-1), essential supremum when p = 1).
inline SensitivityReport upsilon(const AdaptedMeasure& mu, const CostModel& cost,
                                 const ControlGrid* control = nullptr, const DroOptions& opt = {}) {
    return detail::upsilon_core(mu, cost, control, false, opt);
}

/// Mean-pinned variant: every kernel norm is recentered by its own scalar,
/// inf_l || g_t + l ||_{L^q}, solved by golden section on [-2||g||, 2||g||].
inline SensitivityReport upsilon_martingale(const AdaptedMeasure& mu, const CostModel& cost,
                                            const ControlGrid* control = nullptr,
                                            const DroOptions& opt = {}) {
    return detail::upsilon_core(mu, cost, control, true, opt);
}

/// Duality map at level t: T_t = sign(g) |g|^{q-1} / ||g||_q^{q-1} per kernel,
/// unit L^p norm, pairing <g, T> = ||g||_q. Martingale variant recenters by
/// lambda* and projects onto mean zero. Only defined for p > 1.
inline std::map<int, double> worst_direction(const AdaptedMeasure& mu, const CostModel& cost,
                                             const Policy& policy, int t, bool martingale = false) {
    const double p = mu.p();
    if (p <= 1.0)
        throw CapabilityError("the duality map is not single-valued for p = 1");
    const double q = conjugate_exponent(p);
    auto gradients = conditional_gradients(mu, cost, policy);
    std::map<int, double> out;
    for (const auto& block : detail::history_blocks(mu, t)) {
        std::vector<double> g(block.kernel.size());
        for (int c = 0; c < block.kernel.size(); ++c)
            g[c] = gradients[t - 1].at(block.children[c]);
        if (martingale) {
            double lambda = detail::best_lambda(g, block.kernel.probs, q);
            for (double& x : g) x += lambda;
        }
        double norm = detail::lq_norm(g, block.kernel.probs, q);
        std::vector<double> T(g.size(), 0.0);
        if (norm > 0.0) {
            for (std::size_t c = 0; c < g.size(); ++c) {
                double s = g[c] >= 0.0 ? 1.0 : -1.0;
                T[c] = s * std::pow(std::abs(g[c]), q - 1.0) / std::pow(norm, q - 1.0);
            }
            if (martingale) {
                double mean = 0.0;
                for (std::size_t c = 0; c < T.size(); ++c) mean += block.kernel.probs[c] * T[c];
                for (double& x : T) x -= mean;
                double lp = 0.0;
                for (std::size_t c = 0; c < T.size(); ++c)
                    lp += block.kernel.probs[c] * std::pow(std::abs(T[c]), p);
                lp = std::pow(lp, 1.0 / p);
                if (lp > 0.0)
                    for (double& x : T) x /= lp;
            }
        }
        for (std::size_t c = 0; c < T.size(); ++c) out[block.children[c]] = T[c];
    }
    return out;
}

/// Finite-difference slopes of delta -> V(delta) over a decreasing schedule,
/// with the first-order adversary x + (delta/(1+delta)) T(x) evaluated as an
/// independent floor (p > 1 only).
inline SensitivityReport empirical_slope(const AdaptedMeasure& mu, const CostModel& cost,
                                         const ControlGrid* control,
                                         std::vector<double> schedule, bool martingale = false,
                                         const DroOptions& opt = {}) {
    if (schedule.empty()) schedule = {0.2, 0.1, 0.05, 0.025, 0.0125};
    SensitivityReport rep = martingale ? upsilon_martingale(mu, cost, control, opt)
                                       : upsilon(mu, cost, control, opt);
    auto solve = [&](double delta) {
        if (martingale)
            return solve_martingale(mu, cost, cost.controlled ? control : nullptr, delta, opt).value;
        if (cost.controlled) return solve_controlled(mu, cost, *control, delta, opt).value;
        return solve_uncontrolled(mu, cost, delta, opt).value;
    };
    double v0 = solve(0.0);

    if (mu.p() > 1.0) {
        for (int t = 1; t <= mu.horizon(); ++t)
            rep.directions.push_back(worst_direction(mu, cost, rep.policy, t, martingale));
    }
    const auto& T = rep.directions;
    auto floor_at = [&](double delta) {
        if (T.empty()) return std::numeric_limits<double>::quiet_NaN();
        double bar = delta / (1.0 + delta);
        double acc = 0.0;
        for (const auto& atom : mu.flatten()) {
            std::vector<double> y(atom.values);
            int cur = atom.leaf;
            for (int d = mu.horizon(); d >= 1; --d) {
                y[d - 1] += bar * T[d - 1].at(cur);
                cur = mu.node(cur).parent;
            }
            acc += atom.prob * cost.eval(y, rep.policy.along_path(mu, atom.leaf));
        }
        return acc;
    };

    for (double delta : schedule) {
        double v = solve(delta);
        rep.slopes.emplace_back(delta, (v - v0) / delta);
        rep.floors.push_back(floor_at(delta));
    }
    return rep;
}

}  // namespace awdro
