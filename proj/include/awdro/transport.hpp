// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "awdro/common.hpp"
#include "awdro/measures.hpp"
#include "awdro/simplex.hpp"

namespace awdro {

/// Coupling between two finitely supported marginals, with cached statistics.
struct TransportPlan {
    std::vector<double> source_points, source_probs;
    std::vector<double> target_points, target_probs;
    Matrix mass;  // joint masses, rows x cols; row sums == source_probs
    double p = 2.0;
    double objective = 0.0;   // sum q*c for the cost matrix of the solve
    double cost_p = 0.0;      // sum q |x-y|^p (when support points are known)
    double bottleneck = 0.0;  // max score over the support (bottleneck solves)

    double cp() const { return cost_p <= 0.0 ? 0.0 : std::pow(cost_p, 1.0 / p); }

    double recompute_cost_p() const {
        double s = 0.0;
        for (int i = 0; i < mass.rows(); ++i)
            for (int j = 0; j < mass.cols(); ++j)
                s += mass(i, j) * pow_abs(source_points[i] - target_points[j], p);
        return s;
    }

    double max_marginal_error() const {
        double err = 0.0;
        for (int i = 0; i < mass.rows(); ++i) {
            double r = 0.0;
            for (int j = 0; j < mass.cols(); ++j) r += mass(i, j);
            err = std::max(err, std::abs(r - source_probs[i]));
        }
        if (!target_probs.empty()) {
            for (int j = 0; j < mass.cols(); ++j) {
                double c = 0.0;
                for (int i = 0; i < mass.rows(); ++i) c += mass(i, j);
                err = std::max(err, std::abs(c - target_probs[j]));
            }
        }
        return err;
    }
};

namespace detail {

inline TransportPlan plan_from_masses(const std::vector<double>& a, const std::vector<double>& b,
                                      Matrix mass) {
    TransportPlan plan;
    plan.source_probs = a;
    plan.target_probs = b;
    plan.mass = std::move(mass);
    return plan;
}

}  // namespace detail

/// Exact minimizer of sum q_ij c_ij over the transportation polytope
/// Pi(a, b). Returns a vertex solution (at most m+n-1 nonzeros); pivoting is
/// deterministic. `allowed` masks out forbidden cells entirely; infeasible
/// masked instances return nullopt.
inline std::optional<TransportPlan> solve_transport_masked(const std::vector<double>& a,
                                                           const std::vector<double>& b,
                                                           const Matrix& cost,
                                                           const std::vector<char>* allowed = nullptr) {
    const int m = static_cast<int>(a.size());
    const int n = static_cast<int>(b.size());
    if (cost.rows() != m || cost.cols() != n)
        throw SchemaError("transport cost matrix dimension mismatch");
    std::vector<int> col_of;  // LP column -> cell index
    col_of.reserve(static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            if (allowed && !(*allowed)[static_cast<std::size_t>(i) * n + j]) continue;
            col_of.push_back(i * n + j);
        }
    lp::Problem prob;
    prob.num_vars = static_cast<int>(col_of.size());
    prob.objective.resize(prob.num_vars);
    for (int k = 0; k < prob.num_vars; ++k)
        prob.objective[k] = cost(col_of[k] / n, col_of[k] % n);
    for (int i = 0; i < m; ++i) {
        std::vector<double> row(prob.num_vars, 0.0);
        for (int k = 0; k < prob.num_vars; ++k)
            if (col_of[k] / n == i) row[k] = 1.0;
        prob.add_row(std::move(row), lp::Sense::Equal, a[i]);
    }
    for (int j = 0; j < n; ++j) {
        std::vector<double> row(prob.num_vars, 0.0);
        for (int k = 0; k < prob.num_vars; ++k)
            if (col_of[k] % n == j) row[k] = 1.0;
        prob.add_row(std::move(row), lp::Sense::Equal, b[j]);
    }
    lp::Solution sol = lp::solve(prob);
    if (!sol.feasible) return std::nullopt;
    if (!sol.bounded) throw InternalError("transport LP unbounded");
    Matrix mass(m, n, 0.0);
    for (int k = 0; k < prob.num_vars; ++k)
        if (sol.x[k] > 0.0) mass(col_of[k] / n, col_of[k] % n) = sol.x[k];
    TransportPlan plan = detail::plan_from_masses(a, b, std::move(mass));
    plan.objective = sol.objective;
    return plan;
}

inline TransportPlan solve_transport(const std::vector<double>& a, const std::vector<double>& b,
                                     const Matrix& cost) {
    auto plan = solve_transport_masked(a, b, cost);
    if (!plan) throw InternalError("transport LP infeasible with open support");
    return *plan;
}

inline TransportPlan solve_transport(const Kernel& src, const Kernel& tgt, const Matrix& cost) {
    TransportPlan plan = solve_transport(src.probs, tgt.probs, cost);
    plan.source_points = src.points;
    plan.target_points = tgt.points;
    return plan;
}

/// Quantile (comonotone) coupling of two sorted kernels. For costs |x-y|^p,
/// p >= 1, its cost matches the transport LP; used as an independent
/// cross-check of solve_transport.
inline TransportPlan monotone_coupling(const Kernel& src, const Kernel& tgt, double p) {
    const int m = src.size(), n = tgt.size();
    Matrix mass(m, n, 0.0);
    double cost_p = 0.0;
    int i = 0, j = 0;
    double ra = src.probs[0], rb = tgt.probs[0];
    while (i < m && j < n) {
        double q = std::min(ra, rb);
        if (q > 0.0) {
            mass(i, j) += q;
            cost_p += q * pow_abs(src.points[i] - tgt.points[j], p);
        }
        ra -= q;
        rb -= q;
        if (ra <= 1e-15 && i + 1 < m) ra = src.probs[++i];
        else if (ra <= 1e-15) ++i;
        if (rb <= 1e-15 && j + 1 < n) rb = tgt.probs[++j];
        else if (rb <= 1e-15) ++j;
    }
    TransportPlan plan = detail::plan_from_masses(src.probs, tgt.probs, std::move(mass));
    plan.source_points = src.points;
    plan.target_points = tgt.points;
    plan.p = p;
    plan.cost_p = cost_p;
    plan.objective = cost_p;
    return plan;
}

struct BottleneckResult {
    double value = 0.0;
    TransportPlan plan;
};

/// Minimizes  max( C_p(q), max_{q_ij>0} a_ij )  over couplings of src and tgt.
///
/// Scans thresholds tau over the sorted distinct scores; edges with
/// a_ij > tau are forbidden, the cheapest C_p coupling on the rest is solved
/// exactly, and the candidate value is max(realized bottleneck, C_p). The full
/// scan is kept (no unimodal shortcut) so ties need no special casing.
inline BottleneckResult bottleneck_transport(const Kernel& src, const Kernel& tgt, double p,
                                             const Matrix& scores) {
    const int m = src.size(), n = tgt.size();
    if (scores.rows() != m || scores.cols() != n)
        throw SchemaError("bottleneck score matrix dimension mismatch");
    Matrix cost(m, n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            if (!(scores(i, j) >= 0.0) || !std::isfinite(scores(i, j)))
                throw SchemaError("bottleneck scores must be finite and nonnegative");
            cost(i, j) = pow_abs(src.points[i] - tgt.points[j], p);
        }
    std::vector<double> taus;
    taus.reserve(static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) taus.push_back(scores(i, j));
    std::sort(taus.begin(), taus.end());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

    std::optional<BottleneckResult> best;
    std::vector<char> allowed(static_cast<std::size_t>(m) * n, 0);
    for (double tau : taus) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                allowed[static_cast<std::size_t>(i) * n + j] = scores(i, j) <= tau ? 1 : 0;
        auto plan = solve_transport_masked(src.probs, tgt.probs, cost, &allowed);
        if (!plan) continue;
        plan->source_points = src.points;
        plan->target_points = tgt.points;
        plan->p = p;
        plan->cost_p = plan->objective;
        double realized = 0.0;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                if (plan->mass(i, j) > 1e-14) realized = std::max(realized, scores(i, j));
        plan->bottleneck = realized;
        double value = std::max(realized, plan->cp());
        if (!best || value < best->value) best = BottleneckResult{value, std::move(*plan)};
    }
    if (!best) throw InternalError("bottleneck transport infeasible at the largest threshold");
    return std::move(*best);
}

/// Default perturbation grid for a one-step problem: the source atoms plus
/// points_per_side equispaced offsets on each side of every atom, out to the
/// per-atom reach delta / mu_i^{1/p} (mass moved further would violate the
/// transport budget on its own). Sorted, exact duplicates removed.
inline std::vector<double> perturbation_grid(const Kernel& src, double delta, double p,
                                             int points_per_side) {
    if (points_per_side < 1) throw SchemaError("per-atom grid needs at least one point per side");
    std::vector<double> grid(src.points);
    if (delta > 0.0) {
        for (int i = 0; i < src.size(); ++i) {
            double reach = delta / std::pow(src.probs[i], 1.0 / p);
            double h = reach / points_per_side;
            for (int k = 1; k <= points_per_side; ++k) {
                grid.push_back(src.points[i] + k * h);
                grid.push_back(src.points[i] - k * h);
            }
        }
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

struct DroOneStepResult {
    double value = 0.0;
    TransportPlan plan;
    double lambda = 0.0;       // budget multiplier, >= 0
    double lambda_mart = 0.0;  // mean-pinning multiplier (martingale solves)
    double gap = 0.0;          // |certificate - value|
    std::vector<int> warm_basis, warm_rows;  // pass back in for re-solves with a new payoff
};

namespace detail {

struct OneStepLayout {
    int m = 0, n = 0;
    std::vector<int> order;        // LP column -> cell i*n+j, per-atom sorted by |x-y|
    std::vector<double> cost_p;    // per cell
};

inline OneStepLayout one_step_layout(const Kernel& src, const std::vector<double>& grid, double p) {
    OneStepLayout L;
    L.m = src.size();
    L.n = static_cast<int>(grid.size());
    L.cost_p.resize(static_cast<std::size_t>(L.m) * L.n);
    for (int i = 0; i < L.m; ++i) {
        bool has_self = false;
        for (int j = 0; j < L.n; ++j) {
            L.cost_p[static_cast<std::size_t>(i) * L.n + j] = pow_abs(src.points[i] - grid[j], p);
            has_self |= grid[j] == src.points[i];
        }
        if (!has_self)
            throw SchemaError("target grid is missing source atom " + std::to_string(src.points[i]));
    }
    L.order.reserve(L.cost_p.size());
    for (int i = 0; i < L.m; ++i) {
        std::vector<int> idx(L.n);
        for (int j = 0; j < L.n; ++j) idx[j] = j;
        std::sort(idx.begin(), idx.end(), [&](int a, int b) {
            double ca = L.cost_p[static_cast<std::size_t>(i) * L.n + a];
            double cb = L.cost_p[static_cast<std::size_t>(i) * L.n + b];
            if (ca != cb) return ca < cb;
            return grid[a] < grid[b];
        });
        for (int j : idx) L.order.push_back(i * L.n + j);
    }
    return L;
}

// shared LP for the one-step problem, with or without the mean-pinning row
inline DroOneStepResult one_step_lp(const Kernel& src, const Matrix& payoff, double delta, double p,
                                    const std::vector<double>& grid, bool martingale,
                                    const DroOneStepResult* warm = nullptr) {
    OneStepLayout L = one_step_layout(src, grid, p);
    if (payoff.rows() != L.m || payoff.cols() != L.n)
        throw SchemaError("one-step payoff matrix dimension mismatch");
    if (delta < 0.0) throw SchemaError("delta must be >= 0");
    lp::Problem prob;
    prob.num_vars = static_cast<int>(L.order.size());
    prob.objective.resize(prob.num_vars);
    for (int k = 0; k < prob.num_vars; ++k) {
        int i = L.order[k] / L.n, j = L.order[k] % L.n;
        prob.objective[k] = -src.probs[i] * payoff(i, j);  // maximize
    }
    for (int i = 0; i < L.m; ++i) {
        std::vector<double> row(prob.num_vars, 0.0);
        for (int k = 0; k < prob.num_vars; ++k)
            if (L.order[k] / L.n == i) row[k] = 1.0;
        prob.add_row(std::move(row), lp::Sense::Equal, 1.0);
    }
    {
        std::vector<double> row(prob.num_vars, 0.0);
        for (int k = 0; k < prob.num_vars; ++k) {
            int i = L.order[k] / L.n;
            row[k] = src.probs[i] * L.cost_p[L.order[k]];
        }
        prob.add_row(std::move(row), lp::Sense::LessEqual, pow_abs(delta, p));
    }
    if (martingale) {
        std::vector<double> row(prob.num_vars, 0.0);
        for (int k = 0; k < prob.num_vars; ++k) {
            int i = L.order[k] / L.n, j = L.order[k] % L.n;
            row[k] = src.probs[i] * (src.points[i] - grid[j]);
        }
        prob.add_row(std::move(row), lp::Sense::Equal, 0.0);
    }
    lp::Solution sol =
        warm && !warm->warm_basis.empty()
            ? lp::solve(prob, &warm->warm_basis, &warm->warm_rows)
            : lp::solve(prob);
    if (!sol.feasible || !sol.bounded) throw InternalError("one-step DRO LP failed");

    DroOneStepResult res;
    res.value = -sol.objective;
    res.warm_basis = sol.basis;
    res.warm_rows = sol.live_rows;
    Matrix mass(L.m, L.n, 0.0);
    for (int k = 0; k < prob.num_vars; ++k) {
        if (sol.x[k] <= 0.0) continue;
        int i = L.order[k] / L.n, j = L.order[k] % L.n;
        mass(i, j) = src.probs[i] * sol.x[k];  // joint masses
    }
    TransportPlan& plan = res.plan;
    plan.source_points = src.points;
    plan.source_probs = src.probs;
    plan.target_points = grid;
    plan.mass = std::move(mass);
    plan.p = p;
    plan.cost_p = plan.recompute_cost_p();
    plan.objective = res.value;
    plan.target_probs.assign(L.n, 0.0);
    for (int j = 0; j < L.n; ++j)
        for (int i = 0; i < L.m; ++i) plan.target_probs[j] += plan.mass(i, j);
    // duals: rows are [coupling x m][budget][mean] for the min form; the
    // max-problem multipliers carry the opposite sign
    res.lambda = std::max(0.0, -sol.duals[L.m]);
    if (martingale) res.lambda_mart = -sol.duals[L.m + 1];
    double dual_obj = 0.0;
    for (std::size_t r = 0; r < sol.duals.size(); ++r) dual_obj += sol.duals[r] * prob.rhs[r];
    res.gap = std::abs(res.value - (-dual_obj));
    return res;
}

}  // namespace detail

/// One-step Wasserstein DRO over a fixed target grid:
///   max sum_i mu_i sum_j q_ij payoff(i,j)
///   s.t. rows couple, sum mu_i q_ij |x_i-y_j|^p <= delta^p.
/// Columns are ordered per atom by |x_i-y_j|, so pivot ties break toward the
/// smaller movement.
inline DroOneStepResult dro_one_step_primal(const Kernel& src, const Matrix& payoff, double delta,
                                            double p, const std::vector<double>& grid,
                                            const DroOneStepResult* warm = nullptr) {
    return detail::one_step_lp(src, payoff, delta, p, grid, false, warm);
}

/// Same with the mean-pinning row sum mu_i q_ij (x_i - y_j) = 0. The identity
/// plan is always feasible.
inline DroOneStepResult dro_one_step_martingale(const Kernel& src, const Matrix& payoff,
                                                double delta, double p,
                                                const std::vector<double>& grid,
                                                const DroOneStepResult* warm = nullptr) {
    return detail::one_step_lp(src, payoff, delta, p, grid, true, warm);
}

/// Convex dual of the one-step problem:
///   min_{lambda>=0} lambda delta^p + sum_i mu_i max_j [payoff(i,j) - lambda c_ij].
/// phi is convex piecewise linear; the subgradient sign is bisected over
/// [0, lambda_max], then the exact kink inside the final bracket is polished.
/// The returned value is the dual optimum; the plan and the certificate gap
/// come from a primal solve on the same grid.
inline DroOneStepResult dro_one_step_dual(const Kernel& src, const Matrix& payoff, double delta,
                                          double p, const std::vector<double>& grid) {
    detail::OneStepLayout L = detail::one_step_layout(src, grid, p);
    if (payoff.rows() != L.m || payoff.cols() != L.n)
        throw SchemaError("one-step payoff matrix dimension mismatch");
    const double delta_p = pow_abs(delta, p);

    double gmax = payoff(0, 0), gmin = payoff(0, 0), min_gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < L.m; ++i)
        for (int j = 0; j < L.n; ++j) {
            gmax = std::max(gmax, payoff(i, j));
            gmin = std::min(gmin, payoff(i, j));
            double c = L.cost_p[static_cast<std::size_t>(i) * L.n + j];
            if (c > 0.0) min_gap = std::min(min_gap, c);
        }
    double lambda_max = std::isfinite(min_gap) ? (gmax - gmin) / min_gap + 1.0 : 1.0;

    // phi evaluation; d_plus = right derivative (uses the cheapest argmax cell)
    auto phi = [&](double lam, double* d_plus, std::vector<int>* argmax) {
        double val = lam * delta_p;
        double dp = delta_p;
        for (int i = 0; i < L.m; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            double best_c = 0.0;
            int best_j = 0;
            for (int j = 0; j < L.n; ++j) {
                double c = L.cost_p[static_cast<std::size_t>(i) * L.n + j];
                double v = payoff(i, j) - lam * c;
                if (v > best + 1e-13) {
                    best = v;
                    best_c = c;
                    best_j = j;
                } else if (v > best - 1e-13 && c < best_c) {
                    best_c = c;
                    best_j = j;
                }
            }
            val += src.probs[i] * best;
            dp -= src.probs[i] * best_c;
            if (argmax) (*argmax)[i] = best_j;
        }
        if (d_plus) *d_plus = dp;
        return val;
    };

    double d0;
    phi(0.0, &d0, nullptr);
    double lo = 0.0, hi = lambda_max;
    if (d0 >= 0.0) {
        hi = 0.0;
    } else {
        for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + lambda_max); ++it) {
            double mid = 0.5 * (lo + hi);
            double d;
            phi(mid, &d, nullptr);
            if (d < 0.0)
                lo = mid;
            else
                hi = mid;
        }
    }
    // kink polish: candidate switch points of the per-atom argmax between the
    // bracket ends, then the bracket ends themselves
    std::vector<int> jlo(L.m), jhi(L.m);
    phi(lo, nullptr, &jlo);
    phi(hi, nullptr, &jhi);
    std::vector<double> candidates{lo, hi};
    for (int i = 0; i < L.m; ++i) {
        if (jlo[i] == jhi[i]) continue;
        double c1 = L.cost_p[static_cast<std::size_t>(i) * L.n + jlo[i]];
        double c2 = L.cost_p[static_cast<std::size_t>(i) * L.n + jhi[i]];
        if (c1 == c2) continue;
        double lam = (payoff(i, jlo[i]) - payoff(i, jhi[i])) / (c1 - c2);
        if (lam >= 0.0) candidates.push_back(lam);
    }
    double best_lambda = candidates[0];
    double best_value = phi(candidates[0], nullptr, nullptr);
    for (std::size_t k = 1; k < candidates.size(); ++k) {
        double v = phi(candidates[k], nullptr, nullptr);
        if (v < best_value - 1e-15 || (std::abs(v - best_value) <= 1e-15 && candidates[k] < best_lambda)) {
            best_value = v;
            best_lambda = candidates[k];
        }
    }

    DroOneStepResult primal = detail::one_step_lp(src, payoff, delta, p, grid, false);
    DroOneStepResult res;
    res.value = best_value;
    res.lambda = best_lambda;
    res.plan = primal.plan;
    res.gap = std::abs(best_value - primal.value);
    return res;
}

/// Callable-payoff conveniences matching g(x, y).
inline Matrix payoff_matrix(const Kernel& src, const std::vector<double>& grid,
                            const std::function<double(double, double)>& g) {
    Matrix m(src.size(), static_cast<int>(grid.size()));
    for (int i = 0; i < src.size(); ++i)
        for (int j = 0; j < static_cast<int>(grid.size()); ++j) m(i, j) = g(src.points[i], grid[j]);
    return m;
}

inline DroOneStepResult dro_one_step_primal(const Kernel& src,
                                            const std::function<double(double, double)>& g,
                                            double delta, double p, const std::vector<double>& grid) {
    return dro_one_step_primal(src, payoff_matrix(src, grid, g), delta, p, grid);
}

inline DroOneStepResult dro_one_step_dual(const Kernel& src,
                                          const std::function<double(double, double)>& g,
                                          double delta, double p, const std::vector<double>& grid) {
    return dro_one_step_dual(src, payoff_matrix(src, grid, g), delta, p, grid);
}

inline DroOneStepResult dro_one_step_martingale(const Kernel& src,
                                                const std::function<double(double, double)>& g,
                                                double delta, double p,
                                                const std::vector<double>& grid) {
    return dro_one_step_martingale(src, payoff_matrix(src, grid, g), delta, p, grid);
}

}  // namespace awdro
