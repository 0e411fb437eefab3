// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "awdro/adapted_metrics.hpp"
#include "awdro/common.hpp"
#include "awdro/cost_model.hpp"
#include "awdro/dro.hpp"
#include "awdro/measures.hpp"
#include "awdro/parallel.hpp"
#include "awdro/transport.hpp"

// Desk-scale ground truth. Nothing here shares solver code with the
// production paths: transport vertices come from spanning-tree enumeration,
// one-step DRO values from basis enumeration, multiperiod values from nested
// Monge-map enumeration. Budgets are hard refusals.

namespace awdro::oracle {

struct OracleBudget {
    int max_atoms = 4;
    int max_grid = 5;
    int max_horizon = 2;
    int max_controls = 5;
    long long max_enumeration = 10'000'000;
};

namespace detail {

// Enumerates every spanning-tree basis of the m x n transportation polytope
// and hands the basic masses (row-major, zeros elsewhere) to fn.
inline void for_each_transport_vertex(const std::vector<double>& a, const std::vector<double>& b,
                                      const std::function<void(const std::vector<double>&)>& fn) {
    const int m = static_cast<int>(a.size()), n = static_cast<int>(b.size());
    const int cells = m * n, need = m + n - 1;
    std::vector<int> chosen;
    std::vector<int> parent(m + n);

    std::function<int(int)> find = [&](int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    };
    std::vector<double> mass(cells);
    auto try_tree = [&]() {
        // peel degree-one vertices to solve the triangular system
        std::vector<double> rem_a(a), rem_b(b);
        std::vector<int> deg(m + n, 0);
        std::vector<char> used(chosen.size(), 0);
        for (int c : chosen) {
            ++deg[c / n];
            ++deg[m + c % n];
        }
        std::fill(mass.begin(), mass.end(), 0.0);
        int remaining = static_cast<int>(chosen.size());
        while (remaining > 0) {
            bool progress = false;
            for (std::size_t k = 0; k < chosen.size(); ++k) {
                if (used[k]) continue;
                int i = chosen[k] / n, j = chosen[k] % n;
                if (deg[i] == 1) {
                    double q = rem_a[i];
                    mass[chosen[k]] = q;
                    rem_a[i] = 0.0;
                    rem_b[j] -= q;
                    used[k] = 1;
                    --deg[i];
                    --deg[m + j];
                    --remaining;
                    progress = true;
                } else if (deg[m + j] == 1) {
                    double q = rem_b[j];
                    mass[chosen[k]] = q;
                    rem_b[j] = 0.0;
                    rem_a[i] -= q;
                    used[k] = 1;
                    --deg[i];
                    --deg[m + j];
                    --remaining;
                    progress = true;
                }
            }
            if (!progress) return;  // not a tree (cannot happen for spanning trees)
        }
        for (double q : mass)
            if (q < -1e-9) return;  // basis infeasible
        fn(mass);
    };

    std::function<void(int)> rec = [&](int start) {
        if (static_cast<int>(chosen.size()) == need) {
            // spanning check: need edges and acyclic implies spanning tree
            for (int v = 0; v < m + n; ++v) parent[v] = v;
            int comps = m + n;
            for (int c : chosen) {
                int u = find(c / n), v = find(m + c % n);
                if (u == v) return;
                parent[u] = v;
                --comps;
            }
            if (comps == 1) try_tree();
            return;
        }
        for (int c = start; c < cells; ++c) {
            chosen.push_back(c);
            rec(c + 1);
            chosen.pop_back();
        }
    };
    rec(0);
}

}  // namespace detail

/// Exact minimum transport cost by exhausting all basic feasible solutions.
inline double brute_transport(const std::vector<double>& a, const std::vector<double>& b,
                              const Matrix& cost, const OracleBudget& budget = {}) {
    const int m = static_cast<int>(a.size()), n = static_cast<int>(b.size());
    if (m > budget.max_atoms || n > budget.max_atoms)
        throw BudgetError("brute_transport: instance exceeds " + std::to_string(budget.max_atoms) +
                          "x" + std::to_string(budget.max_atoms));
    double best = std::numeric_limits<double>::infinity();
    detail::for_each_transport_vertex(a, b, [&](const std::vector<double>& mass) {
        double obj = 0.0;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) obj += mass[static_cast<std::size_t>(i) * n + j] * cost(i, j);
        best = std::min(best, obj);
    });
    if (!std::isfinite(best)) throw InternalError("brute_transport found no feasible basis");
    return best;
}

/// Maximum of c'x over {x >= 0, Ax (sense) b} by basis enumeration with
/// Gaussian solves. Independent check for the one-step DRO LP.
inline double brute_lp_max(const std::vector<double>& objective,
                           const std::vector<std::vector<double>>& rows,
                           const std::vector<lp::Sense>& senses, const std::vector<double>& rhs,
                           const OracleBudget& budget = {}) {
    const int m = static_cast<int>(rows.size());
    int n = static_cast<int>(objective.size());
    // append one slack per inequality
    std::vector<std::vector<double>> A(m);
    std::vector<double> c(objective);
    for (int i = 0; i < m; ++i) A[i] = rows[i];
    for (int i = 0; i < m; ++i) {
        if (senses[i] == lp::Sense::Equal) continue;
        for (int r = 0; r < m; ++r) A[r].push_back(r == i ? (senses[i] == lp::Sense::LessEqual ? 1.0 : -1.0) : 0.0);
        c.push_back(0.0);
        ++n;
    }
    long long combos = 1;
    for (int k = 0; k < m; ++k) combos = combos * (n - k) / (k + 1);
    if (combos > budget.max_enumeration)
        throw BudgetError("brute_lp_max: " + std::to_string(combos) + " bases exceed the budget");

    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> pick(m);
    std::function<void(int, int)> rec = [&](int start, int k) {
        if (k == m) {
            // solve A_B x_B = b
            std::vector<double> M(static_cast<std::size_t>(m) * (m + 1));
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < m; ++j) M[static_cast<std::size_t>(i) * (m + 1) + j] = A[i][pick[j]];
                M[static_cast<std::size_t>(i) * (m + 1) + m] = rhs[i];
            }
            for (int col = 0; col < m; ++col) {
                int piv = -1;
                double mx = 1e-10;
                for (int r = col; r < m; ++r) {
                    double v = std::abs(M[static_cast<std::size_t>(r) * (m + 1) + col]);
                    if (v > mx) {
                        mx = v;
                        piv = r;
                    }
                }
                if (piv < 0) return;  // singular basis
                if (piv != col)
                    for (int j = 0; j <= m; ++j)
                        std::swap(M[static_cast<std::size_t>(piv) * (m + 1) + j],
                                  M[static_cast<std::size_t>(col) * (m + 1) + j]);
                double inv = 1.0 / M[static_cast<std::size_t>(col) * (m + 1) + col];
                for (int r = 0; r < m; ++r) {
                    if (r == col) continue;
                    double f = M[static_cast<std::size_t>(r) * (m + 1) + col] * inv;
                    if (f == 0.0) continue;
                    for (int j = col; j <= m; ++j)
                        M[static_cast<std::size_t>(r) * (m + 1) + j] -=
                            f * M[static_cast<std::size_t>(col) * (m + 1) + j];
                }
            }
            double obj = 0.0;
            for (int j = 0; j < m; ++j) {
                double xj = M[static_cast<std::size_t>(j) * (m + 1) + m] /
                            M[static_cast<std::size_t>(j) * (m + 1) + j];
                if (xj < -1e-9) return;
                obj += c[pick[j]] * xj;
            }
            best = std::max(best, obj);
            return;
        }
        for (int j = start; j <= n - (m - k); ++j) {
            pick[k] = j;
            rec(j + 1, k + 1);
        }
    };
    rec(0, 0);
    return best;
}

/// Nested enumeration of per-node Monge maps composed into full adversaries,
/// with predictable controls on a finite grid. Maps are a subset of couplings,
/// so this lower-bounds the LP-based solvers; values match when the budget
/// constraint leaves slack at the optimum.
inline double brute_dro(const AdaptedMeasure& mu, const CostModel& cost,
                        const std::vector<double>& control_grid, double delta,
                        const GridBuilder& grids, const OracleBudget& budget = {}) {
    const int N = mu.horizon();
    const double p = mu.p();
    const double delta_p = pow_abs(delta, p) + 1e-12;
    if (N > budget.max_horizon)
        throw BudgetError("brute_dro: horizon " + std::to_string(N) + " exceeds the budget");
    if (static_cast<int>(control_grid.size()) > budget.max_controls)
        throw BudgetError("brute_dro: control grid exceeds the budget");
    const bool controlled = !control_grid.empty();
    if (controlled != cost.controlled)
        throw CapabilityError("brute_dro: control grid does not match the cost model");

    struct StepData {
        Kernel kernel;
        std::vector<double> grid;
        std::vector<std::vector<int>> maps;  // each: atom -> grid index, feasible
    };
    auto make_step = [&](const Kernel& k) {
        StepData sd;
        sd.kernel = k;
        sd.grid = grids ? grids(k, delta, p) : perturbation_grid(k, delta, p, 2);
        if (k.size() > budget.max_atoms) throw BudgetError("brute_dro: kernel exceeds max atoms");
        if (static_cast<int>(sd.grid.size()) > budget.max_grid)
            throw BudgetError("brute_dro: grid exceeds max points");
        long long total = 1;
        for (int i = 0; i < k.size(); ++i) {
            total *= static_cast<long long>(sd.grid.size());
            if (total > budget.max_enumeration) throw BudgetError("brute_dro: map count exceeds budget");
        }
        std::vector<int> assign(k.size(), 0);
        for (long long code = 0; code < total; ++code) {
            long long v = code;
            double spent = 0.0;
            for (int i = 0; i < k.size(); ++i) {
                assign[i] = static_cast<int>(v % sd.grid.size());
                v /= static_cast<long long>(sd.grid.size());
                spent += k.probs[i] * pow_abs(k.points[i] - sd.grid[assign[i]], p);
            }
            if (spent <= delta_p) sd.maps.push_back(assign);
        }
        if (sd.maps.empty()) throw InternalError("brute_dro: no feasible map (identity missing?)");
        return sd;
    };

    std::vector<double> controls = controlled ? control_grid : std::vector<double>{0.0};

    if (N == 1) {
        StepData sd = make_step(mu.root_kernel());
        double best_over_controls = std::numeric_limits<double>::infinity();
        for (double a1 : controls) {
            double worst = -std::numeric_limits<double>::infinity();
            for (const auto& T : sd.maps) {
                double v = 0.0;
                for (int i = 0; i < sd.kernel.size(); ++i) {
                    double y = sd.grid[T[i]];
                    std::vector<double> yv{y};
                    std::vector<double> av = controlled ? std::vector<double>{a1} : std::vector<double>{};
                    v += sd.kernel.probs[i] * cost.eval(yv, av);
                }
                worst = std::max(worst, v);
            }
            best_over_controls = std::min(best_over_controls, worst);
        }
        return best_over_controls;
    }

    // N == 2
    StepData s1 = make_step(mu.root_kernel());
    std::vector<int> depth1 = mu.layer(1);
    std::vector<StepData> s2;
    s2.reserve(depth1.size());
    for (int node : depth1) s2.push_back(make_step(mu.kernel_at(node)));

    // inner(i, y1, a1): worst-case second step below atom i, memoized
    std::map<std::tuple<int, int, int>, double> memo;
    auto inner = [&](int i, int y1_idx, int a1_idx) {
        auto key = std::make_tuple(i, y1_idx, a1_idx);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        const StepData& sd = s2[i];
        double y1 = s1.grid[y1_idx];
        double best_ctrl = std::numeric_limits<double>::infinity();
        for (double a2 : controls) {
            double worst = -std::numeric_limits<double>::infinity();
            for (const auto& T : sd.maps) {
                double v = 0.0;
                for (int j = 0; j < sd.kernel.size(); ++j) {
                    std::vector<double> yv{y1, sd.grid[T[j]]};
                    std::vector<double> av =
                        controlled ? std::vector<double>{controls[a1_idx], a2} : std::vector<double>{};
                    v += sd.kernel.probs[j] * cost.eval(yv, av);
                }
                worst = std::max(worst, v);
            }
            best_ctrl = std::min(best_ctrl, worst);
            if (!controlled) break;
        }
        memo.emplace(key, best_ctrl);
        return best_ctrl;
    };

    double best_over_controls = std::numeric_limits<double>::infinity();
    for (int a1 = 0; a1 < static_cast<int>(controls.size()); ++a1) {
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& T : s1.maps) {
            double v = 0.0;
            for (int i = 0; i < s1.kernel.size(); ++i) v += s1.kernel.probs[i] * inner(i, T[i], a1);
            worst = std::max(worst, v);
        }
        best_over_controls = std::min(best_over_controls, worst);
        if (!controlled) break;
    }
    return best_over_controls;
}

/// Nested-max metric over vertex couplings composed bicausally (horizon <= 2).
/// A restriction to polytope vertices a priori upper-bounds the metric; the
/// one-step threshold solves are themselves attained at vertices, so on these
/// horizons the values agree.
inline double brute_aw_inf(const AdaptedMeasure& mu, const AdaptedMeasure& nu,
                           const OracleBudget& budget = {}) {
    if (mu.horizon() != nu.horizon()) throw SchemaError("brute_aw_inf: horizon mismatch");
    const int N = mu.horizon();
    const double p = mu.p();
    if (N > budget.max_horizon) throw BudgetError("brute_aw_inf: horizon exceeds the budget");

    auto cp = [&](const Kernel& a, const Kernel& b, const std::vector<double>& mass) {
        double s = 0.0;
        for (int i = 0; i < a.size(); ++i)
            for (int j = 0; j < b.size(); ++j)
                s += mass[static_cast<std::size_t>(i) * b.size() + j] *
                     pow_abs(a.points[i] - b.points[j], p);
        return std::pow(s, 1.0 / p);
    };
    auto wp_pair = [&](const Kernel& a, const Kernel& b) {
        if (a.size() > budget.max_atoms || b.size() > budget.max_atoms)
            throw BudgetError("brute_aw_inf: kernel exceeds max atoms");
        double best = std::numeric_limits<double>::infinity();
        detail::for_each_transport_vertex(a.probs, b.probs, [&](const std::vector<double>& mass) {
            best = std::min(best, cp(a, b, mass));
        });
        return best;
    };

    Kernel ra = mu.root_kernel(), rb = nu.root_kernel();
    if (N == 1) return wp_pair(ra, rb);

    std::vector<int> la = mu.layer(1), lb = nu.layer(1);
    std::map<std::pair<int, int>, double> inner;
    for (std::size_t i = 0; i < la.size(); ++i)
        for (std::size_t j = 0; j < lb.size(); ++j)
            inner[{static_cast<int>(i), static_cast<int>(j)}] =
                wp_pair(mu.kernel_at(la[i]), nu.kernel_at(lb[j]));

    if (ra.size() > budget.max_atoms || rb.size() > budget.max_atoms)
        throw BudgetError("brute_aw_inf: root kernel exceeds max atoms");
    double best = std::numeric_limits<double>::infinity();
    detail::for_each_transport_vertex(ra.probs, rb.probs, [&](const std::vector<double>& mass) {
        double val = cp(ra, rb, mass);
        for (int i = 0; i < ra.size(); ++i)
            for (int j = 0; j < rb.size(); ++j)
                if (mass[static_cast<std::size_t>(i) * rb.size() + j] > 1e-12)
                    val = std::max(val, inner.at({i, j}));
        best = std::min(best, val);
    });
    return best;
}

struct CausalProbe {
    double causal = 0.0;    // DPP value over one-step couplings
    double bicausal = 0.0;  // map-restricted enumeration on the same grids
    double diff = 0.0;
};

/// Compares the coupling-based DPP value against the map-restricted oracle on
/// shared grids. diff >= 0 always (maps are a subset); it vanishes when the
/// per-step budgets leave slack at the optimum.
inline CausalProbe causal_equals_bicausal_probe(const AdaptedMeasure& mu, const CostModel& cost,
                                                const ControlGrid* control, double delta,
                                                const DroOptions& opt,
                                                const OracleBudget& budget = {}) {
    CausalProbe probe;
    DroSolution sol = control ? solve_controlled(mu, cost, *control, delta, opt)
                              : solve_uncontrolled(mu, cost, delta, opt);
    probe.causal = sol.value;
    std::vector<double> controls = control ? control->values() : std::vector<double>{};
    probe.bicausal = brute_dro(mu, cost, controls, delta, opt.grid, budget);
    probe.diff = probe.causal - probe.bicausal;
    return probe;
}

// ---------------------------------------------------------------------------
// Property suite

struct PropertyOptions {
    std::uint64_t seed = 20240;
    int count = 200;
    bool inject_bug = false;
    int threads = 0;
    std::string dump_dir;  // empty: <temp>/awdro_counterexamples
};

struct PropertyReport {
    int cases = 0;
    int checks = 0;
    int failures = 0;
    std::vector<std::string> failure_messages;
    std::vector<std::string> dump_paths;

    bool pass() const { return failures == 0; }

    std::string render() const {
        std::ostringstream os;
        os << "property suite: " << checks << " checks over " << cases << " instances, "
           << failures << " failure(s)\n";
        for (const auto& msg : failure_messages) os << "  FAIL " << msg << "\n";
        return os.str();
    }
};

namespace detail {

inline std::string dump_counterexample(const std::string& dir, int index, const std::string& check,
                                       const nlohmann::ordered_json& payload) {
    namespace fs = std::filesystem;
    fs::path base = dir.empty() ? fs::temp_directory_path() / "awdro_counterexamples" : fs::path(dir);
    std::error_code ec;
    fs::create_directories(base, ec);
    fs::path file = base / ("counterexample_" + std::to_string(index) + "_" + check + ".json");
    std::ofstream out(file);
    out << payload.dump(2) << "\n";
    return file.string();
}

struct InstanceResult {
    std::vector<std::string> failures;  // rendered messages
    std::vector<std::string> dumps;
    int checks = 0;

    void fail(const PropertyOptions& opt, int index, const std::string& check, double expected,
              double actual, const nlohmann::ordered_json& instance) {
        nlohmann::ordered_json payload;
        payload["check"] = check;
        payload["expected"] = expected;
        payload["actual"] = actual;
        payload["instance"] = instance;
        std::string path = dump_counterexample(opt.dump_dir, index, check, payload);
        std::ostringstream os;
        os << check << " (instance " << index << "): expected " << expected << ", got " << actual
           << " [" << path << "]";
        failures.push_back(os.str());
        dumps.push_back(path);
    }
};

}  // namespace detail

/// Seeded randomized checks of the metric axioms, the one-step duality, the
/// solver-vs-oracle agreements, and the monotonicity properties. Failures
/// dump a JSON reproduction envelope and are reported with its path.
inline PropertyReport property_suite(const PropertyOptions& opt = {}) {
    PropertyReport report;
    report.cases = opt.count;
    std::vector<detail::InstanceResult> results(static_cast<std::size_t>(std::max(0, opt.count)));

    parallel_for(results.size(), opt.threads, [&](std::size_t idx) {
        detail::InstanceResult& r = results[idx];
        std::mt19937_64 rng(opt.seed + 0x9e3779b97f4a7c15ULL * (idx + 1));
        std::uniform_int_distribution<int> un(1, 3);
        std::uniform_real_distribution<double> ur(0.0, 1.0);
        const double ps[3] = {1.0, 2.0, 3.0};
        double p = ps[idx % 3];
        int N = un(rng);
        int branching = un(rng);
        AdaptedMeasure mu = random_tree(rng(), N, branching, -1.0, 1.0, p);
        AdaptedMeasure nu = random_tree(rng(), N, un(rng), -1.0, 1.0, p);
        AdaptedMeasure eta = random_tree(rng(), N, un(rng), -1.0, 1.0, p);
        nlohmann::ordered_json instance;
        instance["mu"] = mu.to_json();
        instance["nu"] = nu.to_json();
        instance["eta"] = eta.to_json();
        instance["p"] = p;

        auto check = [&](const std::string& name, bool ok, double expected, double actual) {
            ++r.checks;
            if (!ok) r.fail(opt, static_cast<int>(idx), name, expected, actual, instance);
        };

        // metric axioms for the nested-max distance
        double d_self = adapted_wasserstein_inf(mu, mu).value;
        check("awinf_identity", std::abs(d_self) <= 1e-12, 0.0, d_self);
        double d_ab = adapted_wasserstein_inf(mu, nu).value;
        double d_ba = adapted_wasserstein_inf(nu, mu).value;
        double sym = std::abs(d_ab - d_ba) + (opt.inject_bug ? 1e-3 : 0.0);
        check("awinf_symmetry", sym <= 1e-9, d_ab, d_ba + (opt.inject_bug ? 1e-3 : 0.0));
        double d_ae = adapted_wasserstein_inf(mu, eta).value;
        double d_eb = adapted_wasserstein_inf(eta, nu).value;
        check("awinf_triangle", d_ab <= d_ae + d_eb + 1e-8, d_ae + d_eb, d_ab);

        double awp = adapted_wasserstein(mu, nu).value;
        double wp = wasserstein(mu, nu).value;
        check("awp_le_scaled_awinf", awp <= std::pow(double(N), 1.0 / p) * d_ab + 1e-8,
              std::pow(double(N), 1.0 / p) * d_ab, awp);
        check("wp_le_awp", wp <= awp + 1e-9, awp, wp);

        // transport solver cross-checks on the root kernels
        Kernel ka = mu.root_kernel(), kb = nu.root_kernel();
        Matrix cost_mat(ka.size(), kb.size());
        for (int i = 0; i < ka.size(); ++i)
            for (int j = 0; j < kb.size(); ++j)
                cost_mat(i, j) = pow_abs(ka.points[i] - kb.points[j], p);
        TransportPlan lp_plan = solve_transport(ka, kb, cost_mat);
        TransportPlan mono = monotone_coupling(ka, kb, p);
        check("lp_equals_monotone", std::abs(lp_plan.objective - mono.cost_p) <= 1e-10,
              mono.cost_p, lp_plan.objective);
        if (ka.size() <= 4 && kb.size() <= 4) {
            double brute = brute_transport(ka.probs, kb.probs, cost_mat);
            check("lp_equals_brute", std::abs(lp_plan.objective - brute) <= 1e-9, brute,
                  lp_plan.objective);
        }
        Matrix zero_scores(ka.size(), kb.size(), 0.0);
        BottleneckResult bres = bottleneck_transport(ka, kb, p, zero_scores);
        check("bottleneck_zero_scores", std::abs(bres.value - mono.cp()) <= 1e-10, mono.cp(),
              bres.value);

        // one-step DRO: duality, martingale ordering, monotonicity
        double delta = 0.25 + ur(rng);
        std::vector<double> grid = perturbation_grid(ka, delta, p, 3);
        double c1 = ur(rng) * 2.0 - 1.0, c2 = ur(rng) * 2.0 - 1.0, c3 = ur(rng) * 2.0 - 1.0;
        auto payoff_fn = [&](double x, double y) { return c1 * y + c2 * y * y + c3 * std::abs(x - y); };
        Matrix payoff = payoff_matrix(ka, grid, payoff_fn);
        DroOneStepResult primal = dro_one_step_primal(ka, payoff, delta, p, grid);
        DroOneStepResult dual = dro_one_step_dual(ka, payoff, delta, p, grid);
        check("onestep_duality",
              std::abs(primal.value - dual.value) <= 1e-7 * (1.0 + std::abs(primal.value)),
              primal.value, dual.value);
        DroOneStepResult mart = dro_one_step_martingale(ka, payoff, delta, p, grid);
        check("onestep_martingale_le", mart.value <= primal.value + 1e-9, primal.value, mart.value);
        DroOneStepResult smaller = dro_one_step_primal(ka, payoff, delta * 0.5, p, grid);
        check("onestep_monotone_delta", smaller.value <= primal.value + 1e-10, primal.value,
              smaller.value);
        std::vector<double> coarse;
        for (std::size_t g = 0; g < grid.size(); g += 2) coarse.push_back(grid[g]);
        for (double pt : ka.points)
            if (!std::binary_search(coarse.begin(), coarse.end(), pt)) coarse.push_back(pt);
        std::sort(coarse.begin(), coarse.end());
        coarse.erase(std::unique(coarse.begin(), coarse.end()), coarse.end());
        DroOneStepResult coarse_res =
            dro_one_step_primal(ka, payoff_matrix(ka, coarse, payoff_fn), delta, p, coarse);
        check("onestep_monotone_grid", coarse_res.value <= primal.value + 1e-10, primal.value,
              coarse_res.value);
        if (ka.size() <= 3 && grid.size() <= 9) {
            // vertex-enumeration certificate for the primal LP
            int m = ka.size(), ncols = m * static_cast<int>(grid.size());
            std::vector<double> obj(ncols);
            std::vector<std::vector<double>> rows;
            std::vector<lp::Sense> senses;
            std::vector<double> rhs;
            for (int i = 0; i < m; ++i)
                for (std::size_t j = 0; j < grid.size(); ++j)
                    obj[i * grid.size() + j] = ka.probs[i] * payoff(i, static_cast<int>(j));
            for (int i = 0; i < m; ++i) {
                std::vector<double> row(ncols, 0.0);
                for (std::size_t j = 0; j < grid.size(); ++j) row[i * grid.size() + j] = 1.0;
                rows.push_back(std::move(row));
                senses.push_back(lp::Sense::Equal);
                rhs.push_back(1.0);
            }
            std::vector<double> brow(ncols, 0.0);
            for (int i = 0; i < m; ++i)
                for (std::size_t j = 0; j < grid.size(); ++j)
                    brow[i * grid.size() + j] = ka.probs[i] * pow_abs(ka.points[i] - grid[j], p);
            rows.push_back(std::move(brow));
            senses.push_back(lp::Sense::LessEqual);
            rhs.push_back(pow_abs(delta, p));
            OracleBudget vbudget;
            vbudget.max_enumeration = 2'000'000;
            double vertex_best = brute_lp_max(obj, rows, senses, rhs, vbudget);
            check("onestep_vs_vertex_oracle",
                  std::abs(primal.value - vertex_best) <= 1e-6 * (1.0 + std::abs(vertex_best)),
                  vertex_best, primal.value);
        }

        // nested-max metric vs the vertex-composition oracle on tiny instances
        if (N <= 2 && branching <= 3) {
            try {
                double brute = brute_aw_inf(mu, nu);
                check("awinf_vs_brute", std::abs(brute - d_ab) <= 1e-9, brute, d_ab);
            } catch (const BudgetError&) {
            }
        }
    });

    for (const auto& r : results) {
        report.checks += r.checks;
        report.failures += static_cast<int>(r.failures.size());
        for (const auto& f : r.failures) report.failure_messages.push_back(f);
        for (const auto& d : r.dumps) report.dump_paths.push_back(d);
    }
    return report;
}

}  // namespace awdro::oracle
