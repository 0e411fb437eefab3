// SPDX-License-Identifier: MIT
#pragma once

#include <cmath>
#include <map>
#include <tuple>
#include <vector>

#include "awdro/common.hpp"
#include "awdro/measures.hpp"
#include "awdro/parallel.hpp"
#include "awdro/transport.hpp"

namespace awdro {

enum class MetricKind { Wp, AWp, AWpInf };

/// Per-depth value tables of the backward recursion, keyed by node pairs.
/// Depth N entries are identically zero and omitted.
struct PairValueTable {
    // table[t-1][(i, j)] = continuation value below the depth-t pair (i, j);
    // units are ^p for the nested-sum metric and plain distance for the
    // nested-max metric
    std::vector<std::map<std::pair<int, int>, double>> table;
};

struct DistanceResult {
    double value = 0.0;
    MetricKind kind = MetricKind::Wp;
    double p = 2.0;
    int horizon = 1;

    // optimal one-step plans, keyed by (depth 0..N-1, node of mu, node of nu);
    // depth 0 holds the root coupling under key (-1, -1)
    std::map<std::tuple<int, int, int>, TransportPlan> coupling;
    PairValueTable values;

    /// Re-evaluates the metric from the stored coupling forest alone.
    double recompute(const AdaptedMeasure& mu, const AdaptedMeasure& nu) const {
        if (kind == MetricKind::Wp) {
            const TransportPlan& plan = coupling.at({0, -1, -1});
            auto xa = mu.flatten();
            auto ya = nu.flatten();
            double s = 0.0;
            for (int i = 0; i < plan.mass.rows(); ++i)
                for (int j = 0; j < plan.mass.cols(); ++j) {
                    if (plan.mass(i, j) <= 1e-14) continue;
                    double c = 0.0;
                    for (int t = 0; t < horizon; ++t)
                        c += pow_abs(xa[i].values[t] - ya[j].values[t], p);
                    s += plan.mass(i, j) * c;
                }
            return std::pow(s, 1.0 / p);
        }
        double acc = recompute_rec(mu, nu, 0, -1, -1);
        return kind == MetricKind::AWp ? std::pow(acc, 1.0 / p) : acc;
    }

  private:
    double recompute_rec(const AdaptedMeasure& mu, const AdaptedMeasure& nu, int depth, int i,
                         int j) const {
        const TransportPlan& plan = coupling.at({depth, i, j});
        const std::vector<int>& mu_nodes = depth == 0 ? mu.layer(1) : mu.node(i).children;
        const std::vector<int>& nu_nodes = depth == 0 ? nu.layer(1) : nu.node(j).children;
        double step_cost_p = plan.recompute_cost_p();
        if (kind == MetricKind::AWp) {
            double acc = step_cost_p;
            if (depth + 1 < horizon) {
                for (int k = 0; k < plan.mass.rows(); ++k)
                    for (int l = 0; l < plan.mass.cols(); ++l)
                        if (plan.mass(k, l) > 1e-14)
                            acc += plan.mass(k, l) *
                                   recompute_rec(mu, nu, depth + 1, mu_nodes[k], nu_nodes[l]);
            }
            return acc;
        }
        double worst = std::pow(step_cost_p, 1.0 / p);
        if (depth + 1 < horizon) {
            for (int k = 0; k < plan.mass.rows(); ++k)
                for (int l = 0; l < plan.mass.cols(); ++l)
                    if (plan.mass(k, l) > 1e-14)
                        worst = std::max(worst,
                                         recompute_rec(mu, nu, depth + 1, mu_nodes[k], nu_nodes[l]));
        }
        return worst;
    }
};

namespace detail {

inline void require_compatible(const AdaptedMeasure& mu, const AdaptedMeasure& nu) {
    if (mu.horizon() != nu.horizon())
        throw SchemaError("horizon mismatch: " + std::to_string(mu.horizon()) + " vs " +
                          std::to_string(nu.horizon()));
    if (mu.p() != nu.p())
        throw SchemaError("p mismatch: " + std::to_string(mu.p()) + " vs " + std::to_string(nu.p()));
}

}  // namespace detail

/// Plain W_p between the flattened path laws, cost sum_t |x_t - y_t|^p.
inline DistanceResult wasserstein(const AdaptedMeasure& mu, const AdaptedMeasure& nu) {
    detail::require_compatible(mu, nu);
    const double p = mu.p();
    auto xa = mu.flatten();
    auto ya = nu.flatten();
    Matrix cost(static_cast<int>(xa.size()), static_cast<int>(ya.size()));
    for (std::size_t i = 0; i < xa.size(); ++i)
        for (std::size_t j = 0; j < ya.size(); ++j) {
            double s = 0.0;
            for (int t = 0; t < mu.horizon(); ++t)
                s += pow_abs(xa[i].values[t] - ya[j].values[t], p);
            cost(static_cast<int>(i), static_cast<int>(j)) = s;
        }
    std::vector<double> a(xa.size()), b(ya.size());
    for (std::size_t i = 0; i < xa.size(); ++i) a[i] = xa[i].prob;
    for (std::size_t j = 0; j < ya.size(); ++j) b[j] = ya[j].prob;
    TransportPlan plan = solve_transport(a, b, cost);
    plan.p = p;
    // path-space cost lives in the objective; scalar cost_p does not apply
    plan.cost_p = plan.objective;

    DistanceResult res;
    res.kind = MetricKind::Wp;
    res.p = p;
    res.horizon = mu.horizon();
    res.value = std::pow(plan.objective, 1.0 / p);
    res.coupling.emplace(std::make_tuple(0, -1, -1), std::move(plan));
    return res;
}

namespace detail {

template <bool Bottleneck>
DistanceResult adapted_metric(const AdaptedMeasure& mu, const AdaptedMeasure& nu, int threads) {
    require_compatible(mu, nu);
    const double p = mu.p();
    const int N = mu.horizon();

    DistanceResult res;
    res.kind = Bottleneck ? MetricKind::AWpInf : MetricKind::AWp;
    res.p = p;
    res.horizon = N;
    res.values.table.assign(N, {});

    // backward over depth pairs; V[t][(i,j)] for nodes at depth t+1
    std::vector<std::map<std::pair<int, int>, double>>& V = res.values.table;
    std::map<std::tuple<int, int, int>, TransportPlan> plans;

    for (int depth = N - 1; depth >= 0; --depth) {
        std::vector<int> mu_layer = depth == 0 ? std::vector<int>{-1} : mu.layer(depth);
        std::vector<int> nu_layer = depth == 0 ? std::vector<int>{-1} : nu.layer(depth);
        std::vector<std::pair<int, int>> pairs;
        for (int i : mu_layer)
            for (int j : nu_layer) pairs.emplace_back(i, j);
        std::vector<double> vals(pairs.size());
        std::vector<TransportPlan> pplans(pairs.size());
        parallel_for(pairs.size(), threads, [&](std::size_t k) {
            auto [i, j] = pairs[k];
            Kernel ka = i < 0 ? mu.root_kernel() : mu.kernel_at(i);
            Kernel kb = j < 0 ? nu.root_kernel() : nu.kernel_at(j);
            const std::vector<int>& ca = i < 0 ? mu.layer(1) : mu.node(i).children;
            const std::vector<int>& cb = j < 0 ? nu.layer(1) : nu.node(j).children;
            if constexpr (Bottleneck) {
                Matrix scores(ka.size(), kb.size(), 0.0);
                if (depth + 1 < N) {
                    for (int x = 0; x < ka.size(); ++x)
                        for (int y = 0; y < kb.size(); ++y)
                            scores(x, y) = V[depth + 1].at({ca[x], cb[y]});
                }
                BottleneckResult br = bottleneck_transport(ka, kb, p, scores);
                vals[k] = br.value;
                pplans[k] = std::move(br.plan);
            } else {
                Matrix cost(ka.size(), kb.size(), 0.0);
                for (int x = 0; x < ka.size(); ++x)
                    for (int y = 0; y < kb.size(); ++y) {
                        double c = pow_abs(ka.points[x] - kb.points[y], p);
                        if (depth + 1 < N) c += V[depth + 1].at({ca[x], cb[y]});
                        cost(x, y) = c;
                    }
                TransportPlan plan = solve_transport(ka, kb, cost);
                plan.p = p;
                plan.cost_p = plan.recompute_cost_p();
                vals[k] = plan.objective;
                pplans[k] = std::move(plan);
            }
        });
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            if (depth == 0) {
                res.value = Bottleneck ? vals[k] : std::pow(vals[k], 1.0 / p);
            } else {
                V[depth].emplace(pairs[k], vals[k]);
            }
            plans.emplace(std::make_tuple(depth, pairs[k].first, pairs[k].second),
                          std::move(pplans[k]));
        }
    }
    res.coupling = std::move(plans);
    return res;
}

}  // namespace detail

/// Nested-sum adapted distance via backward induction:
/// V_t(i,j) = min-cost coupling of the one-step kernels with cost
/// |x-y|^p + V_{t+1}(children); value = V_0^{1/p}.
inline DistanceResult adapted_wasserstein(const AdaptedMeasure& mu, const AdaptedMeasure& nu,
                                          int threads = 1) {
    return detail::adapted_metric<false>(mu, nu, threads);
}

/// Nested-max variant: each step solves the bottleneck problem
/// min max(C_p(coupling), max continuation over the support).
inline DistanceResult adapted_wasserstein_inf(const AdaptedMeasure& mu, const AdaptedMeasure& nu,
                                              int threads = 1) {
    return detail::adapted_metric<true>(mu, nu, threads);
}

}  // namespace awdro
