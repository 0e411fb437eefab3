// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "awdro/common.hpp"
#include "awdro/cost_model.hpp"
#include "awdro/measures.hpp"
#include "awdro/parallel.hpp"
#include "awdro/transport.hpp"

namespace awdro {

struct ControlGrid {
    double lo = -1.0;
    double hi = 1.0;
    int points = 129;

    std::vector<double> values() const {
        if (points < 1 || hi < lo) throw SchemaError("invalid control grid");
        if (points == 1 || hi == lo) return {0.5 * (lo + hi)};
        std::vector<double> v(points);
        for (int i = 0; i < points; ++i) v[i] = lo + (hi - lo) * i / (points - 1);
        return v;
    }
};

using GridBuilder = std::function<std::vector<double>(const Kernel&, double delta, double p)>;

struct DroOptions {
    int per_atom_points = 64;  // grid points per side of each atom
    GridBuilder grid;          // override for the default perturbation grid
    bool polish = true;        // golden-section refinement when convex-in-control
    int polish_iters = 40;
    int threads = 0;           // 0 resolves via AWDRO_THREADS
};

/// One (mu-node, adversary-history) pair of the dynamic program.
struct DroState {
    int mu_node = -1;       // -1 only at the root state
    int parent = -1;        // state index at the previous depth
    double y = 0.0;         // adversary value realized at this depth
    double value = 0.0;     // V_t (uncontrolled) or continuation W_t (controlled)
    double alpha = 0.0;     // control chosen here for the next period
    double path_prob = 0.0; // mass reaching this state under the extracted plan
    int child_offset = -1;  // first child state in the next layer
    int n_atoms = 0, n_grid = 0;

    struct PlanEntry {
        int atom;
        int grid_index;
        double mass;  // joint mass, sums to 1 over the entries
    };
    std::vector<PlanEntry> plan;

    int child_state(int atom, int grid_index) const {
        return child_offset + atom * n_grid + grid_index;
    }
};

struct DroSolution {
    double value = 0.0;
    double delta = 0.0;
    int horizon = 0;
    double p = 2.0;
    bool controlled = false;
    bool martingale = false;
    std::vector<std::vector<DroState>> layers;  // layers[0] = {root}, layers[t] = depth t

    /// y-path from the root to a state (state at depth t gives y_{1:t}).
    std::vector<double> y_path(int depth, int index) const {
        std::vector<double> path(depth);
        int cur = index;
        for (int d = depth; d >= 1; --d) {
            path[d - 1] = layers[d][cur].y;
            cur = layers[d][cur].parent;
        }
        return path;
    }

    /// Controls along a terminal path (alpha_1..alpha_N); empty if uncontrolled.
    std::vector<double> alpha_path(int leaf_index) const {
        if (!controlled) return {};
        std::vector<double> a(horizon);
        int cur = leaf_index;
        for (int d = horizon; d >= 1; --d) {
            int par = layers[d][cur].parent;
            a[d - 1] = layers[d - 1][par].alpha;
            cur = par;
        }
        return a;
    }

    /// Expected cost of the extracted (adversary, policy) pair; reproduces
    /// `value` up to accumulated floating-point error.
    double evaluate(const CostModel& cost) const {
        double total = 0.0;
        const auto& terminal = layers[horizon];
        for (int s = 0; s < static_cast<int>(terminal.size()); ++s) {
            if (terminal[s].path_prob <= 0.0) continue;
            std::vector<double> y = y_path(horizon, s);
            std::vector<double> a = alpha_path(s);
            total += terminal[s].path_prob * cost.eval(y, a);
        }
        return total;
    }

    /// Second marginal of the extracted plan as a scenario tree.
    AdaptedMeasure adversary() const {
        std::vector<std::pair<std::vector<double>, double>> atoms;
        const auto& terminal = layers[horizon];
        for (int s = 0; s < static_cast<int>(terminal.size()); ++s) {
            if (terminal[s].path_prob <= 0.0) continue;
            atoms.emplace_back(y_path(horizon, s), terminal[s].path_prob);
        }
        return AdaptedMeasure::from_paths(horizon, p, std::move(atoms));
    }
};

namespace detail {

struct NodeGridCache {
    Kernel kernel;
    std::vector<double> grid;
};

inline std::vector<double> build_grid(const GridBuilder& builder, const Kernel& k, double delta,
                                      double p, int per_atom_points) {
    std::vector<double> g =
        builder ? builder(k, delta, p) : perturbation_grid(k, delta, p, per_atom_points);
    if (g.empty()) throw SchemaError("empty perturbation grid");
    return g;
}

/// Shared engine for the three multiperiod solvers.
class DppEngine {
  public:
    DppEngine(const AdaptedMeasure& mu, const CostModel& cost, const ControlGrid* control,
              double delta, bool martingale, const DroOptions& opt)
        : mu_(mu), cost_(cost), control_(control), delta_(delta), martingale_(martingale), opt_(opt) {
        if (cost_.horizon != mu_.horizon())
            throw SchemaError("cost model horizon differs from the tree horizon");
        if (delta_ < 0.0) throw SchemaError("delta must be >= 0");
        if (control_ && !cost_.has_parts())
            throw CapabilityError("controlled solves need the semi-separable decomposition");
        if (control_ && !cost_.controlled)
            throw CapabilityError("control grid supplied for an uncontrolled cost");
        if (!control_ && cost_.controlled)
            throw CapabilityError("controlled cost needs a control grid");
        if (martingale_ && !mu_.is_martingale())
            throw ConstraintError("tree violates the conditional-mean property");
        if (cost_.has_parts()) cost_.check_parts_consistency();
    }

    DroSolution run() {
        build_states();
        backward();
        extract();
        DroSolution out;
        out.value = sol_.layers[0][0].value;
        out.delta = delta_;
        out.horizon = mu_.horizon();
        out.p = mu_.p();
        out.controlled = control_ != nullptr;
        out.martingale = martingale_;
        out.layers = std::move(sol_.layers);
        return out;
    }

  private:
    const AdaptedMeasure& mu_;
    const CostModel& cost_;
    const ControlGrid* control_;
    double delta_;
    bool martingale_;
    DroOptions opt_;
    DroSolution sol_;
    // per depth: cache keyed by mu-node (-1 for the root)
    std::vector<std::map<int, NodeGridCache>> cache_;
    std::vector<std::vector<double>> prefixes_;  // flat y-prefixes per layer

    const NodeGridCache& cache_for(int depth, int node) {
        auto it = cache_[depth].find(node);
        if (it != cache_[depth].end()) return it->second;
        NodeGridCache c;
        c.kernel = node < 0 ? mu_.root_kernel() : mu_.kernel_at(node);
        c.grid = build_grid(opt_.grid, c.kernel, delta_, mu_.p(), opt_.per_atom_points);
        return cache_[depth].emplace(node, std::move(c)).first->second;
    }

    void build_states() {
        const int N = mu_.horizon();
        cache_.assign(N, {});
        sol_.layers.assign(N + 1, {});
        prefixes_.assign(N + 1, {});
        DroState root;
        root.mu_node = -1;
        sol_.layers[0].push_back(root);
        for (int t = 0; t < N; ++t) {
            auto& layer = sol_.layers[t];
            auto& next = sol_.layers[t + 1];
            auto& next_prefix = prefixes_[t + 1];
            for (int s = 0; s < static_cast<int>(layer.size()); ++s) {
                DroState& st = layer[s];
                const NodeGridCache& c = cache_for(t, st.mu_node);
                const std::vector<int>& children =
                    st.mu_node < 0 ? mu_.layer(1) : mu_.node(st.mu_node).children;
                st.child_offset = static_cast<int>(next.size());
                st.n_atoms = c.kernel.size();
                st.n_grid = static_cast<int>(c.grid.size());
                for (int k = 0; k < st.n_atoms; ++k) {
                    for (int j = 0; j < st.n_grid; ++j) {
                        DroState ch;
                        ch.mu_node = children[k];
                        ch.parent = s;
                        ch.y = c.grid[j];
                        next.push_back(ch);
                    }
                }
            }
            // prefix rows for the next layer
            next_prefix.resize(next.size() * static_cast<std::size_t>(t + 1));
            for (std::size_t i = 0; i < next.size(); ++i) {
                const DroState& ch = next[i];
                double* row = next_prefix.data() + i * (t + 1);
                if (t > 0) {
                    const double* prow = prefixes_[t].data() + static_cast<std::size_t>(ch.parent) * t;
                    std::copy(prow, prow + t, row);
                }
                row[t] = ch.y;
            }
        }
    }

    double control_objective(const NodeGridCache& c, const Matrix& base, int t_next, double alpha,
                             Matrix& payoff, std::vector<double>& ybuf,
                             DroOneStepResult& warm) const {
        const int m = c.kernel.size(), n = static_cast<int>(c.grid.size());
        for (int j = 0; j < n; ++j) {
            ybuf[t_next - 1] = c.grid[j];
            double part = cost_.part(t_next, std::span<const double>(ybuf.data(), t_next), alpha);
            for (int k = 0; k < m; ++k) payoff(k, j) = base(k, j) + part;
        }
        DroOneStepResult res =
            martingale_ ? dro_one_step_martingale(c.kernel, payoff, delta_, mu_.p(), c.grid, &warm)
                        : dro_one_step_primal(c.kernel, payoff, delta_, mu_.p(), c.grid, &warm);
        warm = std::move(res);
        return warm.value;
    }

    void backward() {
        const int N = mu_.horizon();
        // terminal layer
        auto& terminal = sol_.layers[N];
        if (!control_) {
            parallel_for(terminal.size(), opt_.threads, [&](std::size_t i) {
                const double* row = prefixes_[N].data() + i * N;
                terminal[i].value = cost_.eval(std::span<const double>(row, N), {});
            });
        }  // controlled: W_N = 0 already

        const std::vector<double> control_values = control_ ? control_->values() : std::vector<double>{};
        for (int t = N - 1; t >= 0; --t) {
            auto& layer = sol_.layers[t];
            const auto& next = sol_.layers[t + 1];
            parallel_for(layer.size(), opt_.threads, [&](std::size_t si) {
                DroState& st = layer[si];
                const NodeGridCache& c = cache_[t].at(st.mu_node);
                const int m = st.n_atoms, n = st.n_grid;
                Matrix base(m, n, 0.0);
                for (int k = 0; k < m; ++k)
                    for (int j = 0; j < n; ++j)
                        base(k, j) = next[st.child_state(k, j)].value;
                if (!control_) {
                    DroOneStepResult res =
                        martingale_ ? dro_one_step_martingale(c.kernel, base, delta_, mu_.p(), c.grid)
                                    : dro_one_step_primal(c.kernel, base, delta_, mu_.p(), c.grid);
                    st.value = res.value;
                    store_plan(st, res.plan);
                    return;
                }
                std::span<const double> prefix(
                    t == 0 ? nullptr : prefixes_[t].data() + si * static_cast<std::size_t>(t),
                    static_cast<std::size_t>(t));
                Matrix payoff(m, n, 0.0);
                std::vector<double> ybuf(t + 1, 0.0);
                if (t > 0) std::copy(prefix.begin(), prefix.end(), ybuf.begin());
                DroOneStepResult warm;
                double best_val = 0.0, best_alpha = control_values.front();
                bool first = true;
                for (double alpha : control_values) {
                    double v = control_objective(c, base, t + 1, alpha, payoff, ybuf, warm);
                    if (first || v < best_val - 1e-12) {
                        best_val = v;
                        best_alpha = alpha;
                        first = false;
                    }
                }
                if (opt_.polish && cost_.convex_in_control && control_values.size() > 1) {
                    double cell = control_values[1] - control_values[0];
                    double a = std::max(control_->lo, best_alpha - cell);
                    double b = std::min(control_->hi, best_alpha + cell);
                    golden_section(a, b, [&](double alpha) {
                        return control_objective(c, base, t + 1, alpha, payoff, ybuf, warm);
                    }, opt_.polish_iters, best_alpha, best_val);
                }
                // final solve at the chosen control records the plan
                DroOneStepResult final_warm = std::move(warm);
                double v = control_objective(c, base, t + 1, best_alpha, payoff, ybuf, final_warm);
                st.value = v;
                st.alpha = best_alpha;
                store_plan(st, final_warm.plan);
            });
        }
    }

    template <class F>
    static void golden_section(double a, double b, F&& f, int iters, double& best_x,
                               double& best_v) {
        constexpr double inv_phi = 0.6180339887498949;
        double x1 = b - inv_phi * (b - a);
        double x2 = a + inv_phi * (b - a);
        double f1 = f(x1), f2 = f(x2);
        auto consider = [&](double x, double v) {
            if (v < best_v - 1e-14 || (std::abs(v - best_v) <= 1e-14 && x < best_x)) {
                best_v = v;
                best_x = x;
            }
        };
        consider(x1, f1);
        consider(x2, f2);
        for (int it = 0; it < iters; ++it) {
            if (f1 <= f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = f(x1);
                consider(x1, f1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = f(x2);
                consider(x2, f2);
            }
        }
    }

    void store_plan(DroState& st, const TransportPlan& plan) {
        st.plan.clear();
        for (int k = 0; k < plan.mass.rows(); ++k)
            for (int j = 0; j < plan.mass.cols(); ++j)
                if (plan.mass(k, j) > 1e-14) st.plan.push_back({k, j, plan.mass(k, j)});
    }

    void extract() {
        sol_.layers[0][0].path_prob = 1.0;
        for (int t = 0; t < mu_.horizon(); ++t) {
            auto& layer = sol_.layers[t];
            auto& next = sol_.layers[t + 1];
            for (auto& st : layer) {
                if (st.path_prob <= 0.0) continue;
                for (const auto& e : st.plan)
                    next[st.child_state(e.atom, e.grid_index)].path_prob += st.path_prob * e.mass;
            }
        }
    }
};

}  // namespace detail

/// Robust value without controls: backward one-step worst-case solves over
/// the perturbation grids. At delta = 0 the grids collapse to the atoms and
/// the value is the plain expectation.
inline DroSolution solve_uncontrolled(const AdaptedMeasure& mu, const CostModel& cost, double delta,
                                      const DroOptions& opt = {}) {
    detail::DppEngine engine(mu, cost, nullptr, delta, false, opt);
    return engine.run();
}

/// Robust control with a compact control interval and a semi-separable cost.
inline DroSolution solve_controlled(const AdaptedMeasure& mu, const CostModel& cost,
                                    const ControlGrid& control, double delta,
                                    const DroOptions& opt = {}) {
    detail::DppEngine engine(mu, cost, &control, delta, false, opt);
    return engine.run();
}

/// Same with the one-step mean-pinning constraint. The input tree must
/// satisfy the conditional-mean property. Pass a null control for the
/// uncontrolled variant.
inline DroSolution solve_martingale(const AdaptedMeasure& mu, const CostModel& cost,
                                    const ControlGrid* control, double delta,
                                    const DroOptions& opt = {}) {
    detail::DppEngine engine(mu, cost, control, delta, true, opt);
    return engine.run();
}

/// inf-sup value minus the best-response bound: fixes the extracted adversary
/// plan and re-optimizes the controls on its support. Nonnegative up to
/// floating point; small under convexity in the control.
inline double minimax_gap(const DroSolution& solution, const CostModel& cost,
                          const ControlGrid& control, const DroOptions& opt = {}) {
    if (!solution.controlled) return 0.0;
    if (!cost.has_parts())
        throw CapabilityError("minimax gap needs the semi-separable decomposition");
    const int N = solution.horizon;
    std::vector<double> control_values = control.values();
    // best response on the support of the extracted plan, backward
    std::vector<std::vector<double>> u(N + 1);
    for (int t = 0; t <= N; ++t) u[t].assign(solution.layers[t].size(), 0.0);
    for (int t = N - 1; t >= 0; --t) {
        const auto& layer = solution.layers[t];
        for (std::size_t si = 0; si < layer.size(); ++si) {
            const DroState& st = layer[si];
            if (st.path_prob <= 0.0 && t > 0) continue;
            if (st.plan.empty()) continue;
            std::vector<double> ybuf = solution.y_path(t, static_cast<int>(si));
            ybuf.push_back(0.0);
            auto objective = [&](double alpha) {
                double v = 0.0;
                for (const auto& e : st.plan) {
                    int child = st.child_state(e.atom, e.grid_index);
                    ybuf[t] = solution.layers[t + 1][child].y;
                    v += e.mass * (cost.part(t + 1, std::span<const double>(ybuf.data(), t + 1),
                                             alpha) +
                                   u[t + 1][child]);
                }
                return v;
            };
            double best_v = objective(control_values.front());
            double best_a = control_values.front();
            for (std::size_t ci = 1; ci < control_values.size(); ++ci) {
                double v = objective(control_values[ci]);
                if (v < best_v - 1e-12) {
                    best_v = v;
                    best_a = control_values[ci];
                }
            }
            if (opt.polish && cost.convex_in_control && control_values.size() > 1) {
                double cell = control_values[1] - control_values[0];
                double lo = std::max(control.lo, best_a - cell);
                double hi = std::min(control.hi, best_a + cell);
                constexpr double inv_phi = 0.6180339887498949;
                double a = lo, b = hi;
                double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
                double f1 = objective(x1), f2 = objective(x2);
                for (int it = 0; it < opt.polish_iters; ++it) {
                    if (f1 <= f2) {
                        b = x2; x2 = x1; f2 = f1;
                        x1 = b - inv_phi * (b - a);
                        f1 = objective(x1);
                    } else {
                        a = x1; x1 = x2; f1 = f2;
                        x2 = a + inv_phi * (b - a);
                        f2 = objective(x2);
                    }
                    double fx = std::min(f1, f2);
                    if (fx < best_v) best_v = fx;
                }
            }
            u[t][si] = best_v;
        }
    }
    return solution.value - u[0][0];
}

}  // namespace awdro
