// SPDX-License-Identifier: MIT
//
// awdro - scenario-tree distances, robust values and sensitivities.
//
// Subcommands:
//   gen     deterministic random scenario trees (optionally mean-pinned)
//   dist    W_p, AW_p and AW_p^inf between two tree files
//   dro     multiperiod robust value over the nested-max ball
//   sens    first-order sensitivity in the ball radius, slope sweeps
//   verify  closed-form regression table + randomized property suite
//
// Exit codes: 0 success, 1 verification failure, 2 input error,
// 3 constraint violation, 4 missing capability.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "awdro/adapted_metrics.hpp"
#include "awdro/cost_expr.hpp"
#include "awdro/cost_model.hpp"
#include "awdro/dro.hpp"
#include "awdro/measures.hpp"
#include "awdro/oracle.hpp"
#include "awdro/sensitivity.hpp"
#include "awdro/verify.hpp"
#include "json.hpp"

using namespace awdro;
using nlohmann::ordered_json;

namespace {

struct CostFlags {
    std::string builtin;
    std::string expression;
    std::vector<std::string> parts;
    double strike = 1.0;
    bool convex = false;
    bool strongly_convex = false;
};

void add_cost_flags(CLI::App* cmd, CostFlags& f) {
    cmd->add_option("--builtin", f.builtin,
                    "named cost: quadratic_tracking | call | linear");
    cmd->add_option("--cost", f.expression,
                    "terminal cost over y1..yN, a1..aN with + - * ^ max(,)");
    cmd->add_option("--part", f.parts,
                    "per-period cost part f_t(y1..yt, at); repeat N times");
    cmd->add_option("--strike", f.strike, "strike for the call builtin");
    cmd->add_flag("--convex", f.convex, "assert convexity in the control");
    cmd->add_flag("--strongly-convex", f.strongly_convex,
                  "assert strong convexity in the control");
}

CostModel build_cost(const CostFlags& f, int horizon) {
    int sources = (!f.builtin.empty()) + (!f.expression.empty()) + (!f.parts.empty());
    if (sources != 1)
        throw SchemaError("specify exactly one of --builtin, --cost, --part ...");
    if (!f.builtin.empty()) {
        if (f.builtin == "quadratic_tracking") return quadratic_tracking_cost(horizon);
        if (f.builtin == "call") return call_payoff_cost(horizon, f.strike);
        if (f.builtin == "linear") return linear_path_cost(horizon);
        throw SchemaError("unknown builtin cost: " + f.builtin);
    }
    if (!f.expression.empty())
        return expr::cost_from_expression(f.expression, horizon, f.convex, f.strongly_convex);
    return expr::cost_from_parts(f.parts, horizon, f.convex, f.strongly_convex);
}

ordered_json cost_config(const CostFlags& f) {
    ordered_json j;
    if (!f.builtin.empty()) {
        j["builtin"] = f.builtin;
        if (f.builtin == "call") j["strike"] = f.strike;
    }
    if (!f.expression.empty()) j["cost"] = f.expression;
    if (!f.parts.empty()) j["parts"] = f.parts;
    j["convex"] = f.convex;
    j["strongly_convex"] = f.strongly_convex;
    return j;
}

void emit(const ordered_json& doc, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << doc.dump(2) << "\n";
    } else {
        std::ofstream out(out_path);
        if (!out) throw SchemaError("cannot write output file: " + out_path);
        out << doc.dump(2) << "\n";
    }
}

ordered_json plan_json(const TransportPlan& plan) {
    ordered_json j;
    ordered_json cells = ordered_json::array();
    for (int i = 0; i < plan.mass.rows(); ++i)
        for (int c = 0; c < plan.mass.cols(); ++c)
            if (plan.mass(i, c) > 1e-14)
                cells.push_back({{"row", i}, {"col", c}, {"mass", plan.mass(i, c)}});
    j["cells"] = std::move(cells);
    return j;
}

ordered_json couplings_json(const DistanceResult& res) {
    ordered_json arr = ordered_json::array();
    for (const auto& [key, plan] : res.coupling) {
        auto [depth, i, j] = key;
        ordered_json entry;
        entry["depth"] = depth;
        entry["mu_node"] = i;
        entry["nu_node"] = j;
        entry["plan"] = plan_json(plan);
        arr.push_back(std::move(entry));
    }
    return arr;
}

ordered_json policy_json(const DroSolution& sol) {
    ordered_json arr = ordered_json::array();
    if (!sol.controlled) return arr;
    for (int t = 0; t < sol.horizon; ++t) {
        const auto& layer = sol.layers[t];
        for (int s = 0; s < static_cast<int>(layer.size()); ++s) {
            if (layer[s].path_prob <= 0.0) continue;
            ordered_json e;
            e["period"] = t + 1;  // the control applied over step t+1
            e["mu_node"] = layer[s].mu_node;
            e["y_path"] = sol.y_path(t, s);
            e["alpha"] = layer[s].alpha;
            arr.push_back(std::move(e));
        }
    }
    return arr;
}

int run_gen(const std::string& out, std::uint64_t seed, int horizon, int branching, double p,
            bool martingale, double lo, double hi, double scale) {
    AdaptedMeasure m = martingale ? random_martingale_tree(seed, horizon, branching, scale, p)
                                  : random_tree(seed, horizon, branching, lo, hi, p);
    emit(m.to_json(), out);
    return 0;
}

int run_dist(const std::string& a_path, const std::string& b_path, bool with_couplings,
             const std::string& out, int threads) {
    AdaptedMeasure a = AdaptedMeasure::load_tree_file(a_path);
    AdaptedMeasure b = AdaptedMeasure::load_tree_file(b_path);
    DistanceResult w = wasserstein(a, b);
    DistanceResult aw = adapted_wasserstein(a, b, threads);
    DistanceResult awi = adapted_wasserstein_inf(a, b, threads);
    ordered_json doc;
    doc["config"] = {{"subcommand", "dist"},
                     {"tree_a", a_path},
                     {"tree_b", b_path},
                     {"p", a.p()},
                     {"threads", threads}};
    doc["w_p"] = w.value;
    doc["aw_p"] = aw.value;
    doc["aw_p_inf"] = awi.value;
    if (with_couplings) {
        doc["couplings"] = {{"w_p", couplings_json(w)},
                            {"aw_p", couplings_json(aw)},
                            {"aw_p_inf", couplings_json(awi)}};
    }
    emit(doc, out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adapted optimal transport distances and robust control on scenario trees"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a random scenario tree");
    std::uint64_t gen_seed = 1;
    int gen_horizon = 2, gen_branching = 2;
    double gen_p = 2.0, gen_lo = -1.0, gen_hi = 1.0, gen_scale = 1.0;
    bool gen_mart = false;
    std::string gen_out;
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--horizon", gen_horizon, "number of periods");
    gen->add_option("--branching", gen_branching, "children per node");
    gen->add_option("--p", gen_p, "cost exponent stored with the tree");
    gen->add_option("--lo", gen_lo, "value range lower end");
    gen->add_option("--hi", gen_hi, "value range upper end");
    gen->add_option("--scale", gen_scale, "offset scale for --martingale");
    gen->add_flag("--martingale", gen_mart, "pin every conditional mean");
    gen->add_option("-o,--output", gen_out, "output file (default stdout)");

    // dist
    auto* dist = app.add_subcommand("dist", "distances between two trees");
    std::string dist_a, dist_b, dist_out;
    bool dist_couplings = false;
    int dist_threads = 0;
    dist->add_option("tree_a", dist_a, "first tree file")->required();
    dist->add_option("tree_b", dist_b, "second tree file")->required();
    dist->add_flag("--couplings", dist_couplings, "include optimal couplings");
    dist->add_option("--threads", dist_threads, "worker threads (0: AWDRO_THREADS or 1)");
    dist->add_option("-o,--output", dist_out, "output file (default stdout)");

    // dro
    auto* dro = app.add_subcommand("dro", "multiperiod robust value");
    std::string dro_tree, dro_out;
    CostFlags dro_cost;
    double dro_delta = 0.0, dro_klo = -1.0, dro_khi = 1.0;
    int dro_grid_points = 64, dro_control_points = 129, dro_threads = 0;
    bool dro_mart = false, dro_gap = false;
    dro->add_option("tree", dro_tree, "tree file")->required();
    dro->add_option("--delta", dro_delta, "ball radius")->required();
    add_cost_flags(dro, dro_cost);
    dro->add_option("--klo", dro_klo, "control interval lower end");
    dro->add_option("--khi", dro_khi, "control interval upper end");
    dro->add_option("--grid-points", dro_grid_points, "perturbation points per atom side");
    dro->add_option("--control-points", dro_control_points, "control grid size");
    dro->add_option("--threads", dro_threads, "worker threads (0: AWDRO_THREADS or 1)");
    dro->add_flag("--martingale", dro_mart, "restrict the adversary to mean-pinned steps");
    dro->add_flag("--gap", dro_gap, "also report the best-response minimax gap");
    dro->add_option("-o,--output", dro_out, "output file (default stdout)");

    // sens
    auto* sens = app.add_subcommand("sens", "first-order sensitivity and slope sweep");
    std::string sens_tree, sens_out, sens_csv;
    CostFlags sens_cost;
    double sens_klo = -1.0, sens_khi = 1.0;
    std::vector<double> sens_deltas;
    int sens_grid_points = 64, sens_control_points = 129, sens_threads = 0;
    bool sens_mart = false;
    sens->add_option("tree", sens_tree, "tree file")->required();
    add_cost_flags(sens, sens_cost);
    sens->add_option("--klo", sens_klo, "control interval lower end");
    sens->add_option("--khi", sens_khi, "control interval upper end");
    sens->add_option("--deltas", sens_deltas, "slope sweep radii (decreasing)");
    sens->add_option("--grid-points", sens_grid_points, "perturbation points per atom side");
    sens->add_option("--control-points", sens_control_points, "control grid size");
    sens->add_option("--threads", sens_threads, "worker threads (0: AWDRO_THREADS or 1)");
    sens->add_flag("--martingale", sens_mart, "recentered (mean-pinned) sensitivity");
    sens->add_option("--csv", sens_csv, "write (delta, slope, floor) rows as CSV");
    sens->add_option("-o,--output", sens_out, "output file (default stdout)");

    // verify
    auto* verify = app.add_subcommand("verify", "regression table + property suite");
    std::uint64_t verify_seed = 20240;
    int verify_count = 200, verify_threads = 0;
    bool verify_inject = false;
    std::string verify_dump;
    verify->add_option("--seed", verify_seed, "property suite seed");
    verify->add_option("--count", verify_count, "number of random instances");
    verify->add_option("--threads", verify_threads, "worker threads (0: AWDRO_THREADS or 1)");
    verify->add_flag("--inject-bug", verify_inject, "negative control: corrupt one check");
    verify->add_option("--dump-dir", verify_dump, "directory for counterexample dumps");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return run_gen(gen_out, gen_seed, gen_horizon, gen_branching, gen_p, gen_mart, gen_lo,
                           gen_hi, gen_scale);

        if (dist->parsed())
            return run_dist(dist_a, dist_b, dist_couplings, dist_out, dist_threads);

        if (dro->parsed()) {
            AdaptedMeasure mu = AdaptedMeasure::load_tree_file(dro_tree);
            CostModel cost = build_cost(dro_cost, mu.horizon());
            ControlGrid control{dro_klo, dro_khi, dro_control_points};
            DroOptions opt;
            opt.per_atom_points = dro_grid_points;
            opt.threads = dro_threads;
            DroSolution sol;
            if (dro_mart)
                sol = solve_martingale(mu, cost, cost.controlled ? &control : nullptr, dro_delta,
                                       opt);
            else if (cost.controlled)
                sol = solve_controlled(mu, cost, control, dro_delta, opt);
            else
                sol = solve_uncontrolled(mu, cost, dro_delta, opt);

            ordered_json doc;
            doc["config"] = {{"subcommand", "dro"},
                             {"tree", dro_tree},
                             {"delta", dro_delta},
                             {"cost", cost_config(dro_cost)},
                             {"martingale", dro_mart},
                             {"k", {dro_klo, dro_khi}},
                             {"grid_points", dro_grid_points},
                             {"control_points", dro_control_points},
                             {"threads", dro_threads}};
            doc["value"] = sol.value;
            doc["delta"] = sol.delta;
            doc["policy"] = policy_json(sol);
            doc["adversary_tree"] = sol.adversary().to_json();
            if (dro_gap && cost.controlled)
                doc["minimax_gap"] = minimax_gap(sol, cost, control, opt);
            emit(doc, dro_out);
            return 0;
        }

        if (sens->parsed()) {
            AdaptedMeasure mu = AdaptedMeasure::load_tree_file(sens_tree);
            CostModel cost = build_cost(sens_cost, mu.horizon());
            if (!cost.has_partials())
                throw CapabilityError("sensitivity needs a cost with derivatives");
            ControlGrid control{sens_klo, sens_khi, sens_control_points};
            DroOptions opt;
            opt.per_atom_points = sens_grid_points;
            opt.threads = sens_threads;
            SensitivityReport rep =
                empirical_slope(mu, cost, cost.controlled ? &control : nullptr, sens_deltas,
                                sens_mart, opt);
            ordered_json doc;
            doc["config"] = {{"subcommand", "sens"},
                             {"tree", sens_tree},
                             {"cost", cost_config(sens_cost)},
                             {"martingale", sens_mart},
                             {"deltas", sens_deltas},
                             {"grid_points", sens_grid_points},
                             {"control_points", sens_control_points},
                             {"threads", sens_threads}};
            doc["upsilon"] = rep.upsilon;
            doc["upsilon_tilde"] = rep.upsilon_tilde;
            doc["per_period"] = rep.per_period;
            doc["martingale"] = rep.martingale;
            if (rep.martingale) {
                ordered_json lambdas = ordered_json::array();
                for (int t = 1; t <= mu.horizon(); ++t)
                    for (const auto& [node, lambda] : rep.lambda_by_period[t - 1])
                        lambdas.push_back(
                            {{"period", t}, {"history_node", node}, {"lambda", lambda}});
                doc["lambda_stars"] = std::move(lambdas);
            }
            ordered_json slopes = ordered_json::array();
            for (std::size_t k = 0; k < rep.slopes.size(); ++k) {
                ordered_json e;
                e["delta"] = rep.slopes[k].first;
                e["slope"] = rep.slopes[k].second;
                if (!rep.floors.empty() && std::isfinite(rep.floors[k]))
                    e["floor"] = rep.floors[k];
                slopes.push_back(std::move(e));
            }
            doc["slopes"] = std::move(slopes);
            if (!rep.directions.empty()) {
                ordered_json dirs = ordered_json::array();
                for (int t = 1; t <= mu.horizon(); ++t)
                    for (const auto& [node, val] : rep.directions[t - 1])
                        dirs.push_back({{"period", t}, {"node", node}, {"t_value", val}});
                doc["directions"] = std::move(dirs);
            }
            emit(doc, sens_out);
            if (!sens_csv.empty()) {
                std::ofstream csv(sens_csv);
                if (!csv) throw SchemaError("cannot write CSV file: " + sens_csv);
                csv << "delta,slope,floor\n";
                for (std::size_t k = 0; k < rep.slopes.size(); ++k) {
                    csv << rep.slopes[k].first << "," << rep.slopes[k].second << ",";
                    if (!rep.floors.empty() && std::isfinite(rep.floors[k])) csv << rep.floors[k];
                    csv << "\n";
                }
            }
            return 0;
        }

        if (verify->parsed()) {
            oracle::PropertyOptions opt;
            opt.seed = verify_seed;
            opt.count = verify_count;
            opt.inject_bug = verify_inject;
            opt.threads = verify_threads;
            opt.dump_dir = verify_dump;
            VerifyResult res = run_verify(opt);
            std::cout << res.text;
            return res.pass ? 0 : 1;
        }
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConstraintError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const BudgetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const CapabilityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
