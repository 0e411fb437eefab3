// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "awdro/common.hpp"
#include "json.hpp"

namespace awdro {

struct TreeNode {
    int id = 0;              // external id (sequential on canonical trees)
    int depth = 0;           // 1..N
    double value = 0.0;
    double cond_prob = 0.0;  // conditional given parent; unconditional mass at depth 1
    double path_prob = 0.0;  // product of conditional probabilities along the ancestry
    int parent = -1;         // node index, -1 at depth 1
    std::vector<int> children;
};

/// One-step conditional law: finitely many atoms in canonical sorted form.
struct Kernel {
    std::vector<double> points;  // strictly increasing
    std::vector<double> probs;   // strictly positive, sum to 1 within 1e-12
    int context = -1;            // node index this kernel disintegrates; -1 = first marginal

    int size() const { return static_cast<int>(points.size()); }

    double mean() const {
        double s = 0.0;
        for (int i = 0; i < size(); ++i) s += points[i] * probs[i];
        return s;
    }

    void validate() const {
        if (points.size() != probs.size() || points.empty())
            throw SchemaError("kernel support/probability size mismatch");
        double s = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!(probs[i] > 0.0)) throw SchemaError("kernel atom with non-positive probability");
            if (!std::isfinite(points[i])) throw SchemaError("kernel atom with non-finite value");
            if (i > 0 && !(points[i] > points[i - 1]))
                throw SchemaError("kernel support not strictly increasing");
            s += probs[i];
        }
        if (std::abs(s - 1.0) > kProbTol) throw SchemaError("kernel probabilities do not sum to 1");
    }
};

struct PathAtom {
    std::vector<double> values;  // x_{1:N}
    double prob = 0.0;
    int leaf = -1;  // node index of the terminal node
};

/// Finitely supported law of a scalar discrete-time process with its natural
/// filtration, stored as a rooted scenario tree in canonical form: siblings
/// sorted by value, equal-valued siblings merged.
class AdaptedMeasure {
  public:
    AdaptedMeasure() = default;

    int horizon() const { return horizon_; }
    double p() const { return p_; }
    double q() const { return conjugate_exponent(p_); }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    const TreeNode& node(int i) const { return nodes_[i]; }
    const std::vector<int>& layer(int depth) const { return layers_[depth - 1]; }

    /// First marginal mu^1 as a kernel (context -1).
    Kernel root_kernel() const {
        Kernel k;
        k.context = -1;
        for (int i : layers_[0]) {
            k.points.push_back(nodes_[i].value);
            k.probs.push_back(nodes_[i].cond_prob);
        }
        return k;
    }

    /// One-step conditional law at an interior node.
    Kernel kernel_at(int node_index) const {
        const TreeNode& n = nodes_[node_index];
        if (n.children.empty())
            throw ConstraintError("kernel_at called on a leaf node (id=" + std::to_string(n.id) + ")");
        Kernel k;
        k.context = node_index;
        for (int c : n.children) {
            k.points.push_back(nodes_[c].value);
            k.probs.push_back(nodes_[c].cond_prob);
        }
        return k;
    }

    std::vector<PathAtom> flatten() const {
        std::vector<PathAtom> out;
        std::vector<double> stack;
        for (int r : layers_[0]) flatten_rec(r, stack, out);
        return out;
    }

    /// Checks the one-step conditional means against the node values at every
    /// interior node (depths 1..N-1).
    bool is_martingale(double tol = 1e-9) const {
        for (int d = 1; d < horizon_; ++d) {
            for (int i : layers_[d - 1]) {
                Kernel k = kernel_at(i);
                if (std::abs(k.mean() - nodes_[i].value) > tol) return false;
            }
        }
        return true;
    }

    /// Builds the canonical tree from a list of (path, probability) atoms.
    /// Atoms sharing an exact prefix are grouped into one node; probabilities
    /// accumulate, which also realizes the sibling-merge rule.
    static AdaptedMeasure from_paths(int horizon, double p,
                                     std::vector<std::pair<std::vector<double>, double>> atoms) {
        if (horizon < 1) throw SchemaError("horizon must be >= 1");
        if (!(p >= 1.0)) throw SchemaError("p must be >= 1");
        double total = 0.0;
        for (auto& [path, prob] : atoms) {
            if (static_cast<int>(path.size()) != horizon)
                throw SchemaError("path length differs from horizon");
            if (!(prob > 0.0)) throw SchemaError("negative/zero probability path atom");
            for (double v : path)
                if (!std::isfinite(v)) throw SchemaError("non-finite path value");
            total += prob;
        }
        if (std::abs(total - 1.0) > kProbTolInput)
            throw SchemaError("probability sum " + format_num(total) + " != 1 over paths");
        for (auto& [path, prob] : atoms) prob /= total;

        AdaptedMeasure m;
        m.horizon_ = horizon;
        m.p_ = p;
        m.layers_.assign(horizon, {});
        std::vector<int> order(atoms.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        m.build_rec(atoms, order, 0, -1, 1.0);
        for (std::size_t i = 0; i < m.nodes_.size(); ++i) m.nodes_[i].id = static_cast<int>(i);
        return m;
    }

    /// Parses and validates the JSON tree document
    ///   {"horizon": N, "p": p, "nodes": [{"id","depth","value","prob","parent"}]}
    /// then rebuilds in canonical form (sorted siblings, merged equal atoms,
    /// probabilities renormalized when within 1e-9 of 1).
    static AdaptedMeasure load_tree(const nlohmann::json& doc) {
        if (!doc.is_object()) throw SchemaError("top level is not an object");
        if (!doc.contains("horizon") || !doc["horizon"].is_number_integer())
            throw SchemaError("missing integer field \"horizon\"");
        int horizon = doc["horizon"].get<int>();
        if (horizon < 1) throw SchemaError("horizon must be >= 1");
        double p = 2.0;
        if (doc.contains("p")) {
            if (!doc["p"].is_number()) throw SchemaError("field \"p\" is not a number");
            p = doc["p"].get<double>();
            if (!(p >= 1.0)) throw SchemaError("p must be >= 1");
        }
        if (!doc.contains("nodes") || !doc["nodes"].is_array())
            throw SchemaError("missing array field \"nodes\"");

        struct Raw {
            int id;
            int depth;
            double value;
            double prob;
            bool has_parent;
            int parent;
        };
        std::vector<Raw> raw;
        std::map<int, int> by_id;
        int idx = 0;
        for (const auto& jn : doc["nodes"]) {
            if (!jn.is_object()) throw SchemaError("node entry is not an object");
            for (const char* f : {"id", "depth", "value", "prob"})
                if (!jn.contains(f))
                    throw SchemaError(std::string("node entry missing field \"") + f + "\"");
            Raw r{};
            r.id = jn["id"].get<int>();
            r.depth = jn["depth"].get<int>();
            r.value = jn["value"].get<double>();
            r.prob = jn["prob"].get<double>();
            r.has_parent = jn.contains("parent") && !jn["parent"].is_null();
            r.parent = r.has_parent ? jn["parent"].get<int>() : -1;
            if (r.depth < 1 || r.depth > horizon)
                throw SchemaError("node id=" + std::to_string(r.id) + " has depth " +
                                  std::to_string(r.depth) + " outside 1.." + std::to_string(horizon));
            if (!std::isfinite(r.value))
                throw SchemaError("node id=" + std::to_string(r.id) + " has non-finite value");
            if (!(r.prob > 0.0))
                throw SchemaError("negative/zero probability at node id=" + std::to_string(r.id));
            if (r.prob > 1.0 + kProbTolInput)
                throw SchemaError("probability > 1 at node id=" + std::to_string(r.id));
            if (by_id.count(r.id)) throw SchemaError("duplicate node id=" + std::to_string(r.id));
            by_id[r.id] = idx++;
            raw.push_back(r);
        }
        if (raw.empty()) throw SchemaError("empty node list");

        // structural validation
        std::vector<std::vector<int>> children(raw.size());
        std::vector<int> roots;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const Raw& r = raw[i];
            if (r.depth == 1) {
                if (r.has_parent)
                    throw SchemaError("depth-1 node id=" + std::to_string(r.id) + " has a parent");
                roots.push_back(static_cast<int>(i));
            } else {
                if (!r.has_parent)
                    throw SchemaError("orphan node id=" + std::to_string(r.id) + " (no parent)");
                auto it = by_id.find(r.parent);
                if (it == by_id.end())
                    throw SchemaError("orphan node id=" + std::to_string(r.id) + " (parent id=" +
                                      std::to_string(r.parent) + " not found)");
                if (raw[it->second].depth != r.depth - 1)
                    throw SchemaError("depth gap: node id=" + std::to_string(r.id) + " at depth " +
                                      std::to_string(r.depth) + " has parent at depth " +
                                      std::to_string(raw[it->second].depth));
                children[it->second].push_back(static_cast<int>(i));
            }
        }
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i].depth < horizon && children[i].empty())
                throw SchemaError("depth gap: node id=" + std::to_string(raw[i].id) + " at depth " +
                                  std::to_string(raw[i].depth) + " has no children");
        }
        auto check_sum = [&](const std::vector<int>& sibs, const std::string& where) {
            double s = 0.0;
            for (int c : sibs) s += raw[c].prob;
            if (std::abs(s - 1.0) > kProbTolInput)
                throw SchemaError("probability sum " + format_num(s) + " != 1 " + where);
            return s;
        };
        double root_sum = check_sum(roots, "at depth 1");
        std::vector<double> path_prob(raw.size(), 0.0);
        for (int r : roots) path_prob[r] = raw[r].prob / root_sum;
        // walk depths in order
        std::vector<std::vector<int>> by_depth(horizon);
        for (std::size_t i = 0; i < raw.size(); ++i) by_depth[raw[i].depth - 1].push_back(static_cast<int>(i));
        for (int d = 1; d < horizon; ++d) {
            for (int i : by_depth[d - 1]) {
                if (children[i].empty()) continue;
                double s = check_sum(children[i], "under node id=" + std::to_string(raw[i].id));
                for (int c : children[i]) path_prob[c] = path_prob[i] * (raw[c].prob / s);
            }
        }
        // flatten leaves and rebuild canonically
        std::vector<std::pair<std::vector<double>, double>> atoms;
        for (int i : by_depth[horizon - 1]) {
            std::vector<double> path(horizon);
            int cur = static_cast<int>(i);
            for (int d = horizon; d >= 1; --d) {
                path[d - 1] = raw[cur].value;
                cur = raw[cur].has_parent ? by_id[raw[cur].parent] : -1;
            }
            atoms.emplace_back(std::move(path), path_prob[i]);
        }
        return from_paths(horizon, p, std::move(atoms));
    }

    static AdaptedMeasure load_tree_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw SchemaError("cannot open tree file: " + path);
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const std::exception& e) {
            throw SchemaError(std::string("invalid JSON in ") + path + ": " + e.what());
        }
        return load_tree(doc);
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json doc;
        doc["horizon"] = horizon_;
        doc["p"] = p_;
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (int d = 1; d <= horizon_; ++d) {
            for (int i : layers_[d - 1]) {
                const TreeNode& n = nodes_[i];
                nlohmann::ordered_json jn;
                jn["id"] = n.id;
                jn["depth"] = n.depth;
                jn["value"] = n.value;
                jn["prob"] = n.cond_prob;
                if (n.parent < 0)
                    jn["parent"] = nullptr;
                else
                    jn["parent"] = nodes_[n.parent].id;
                arr.push_back(jn);
            }
        }
        doc["nodes"] = std::move(arr);
        return doc;
    }

  private:
    static std::string format_num(double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    }

    void flatten_rec(int i, std::vector<double>& stack, std::vector<PathAtom>& out) const {
        stack.push_back(nodes_[i].value);
        if (nodes_[i].children.empty()) {
            out.push_back(PathAtom{stack, nodes_[i].path_prob, i});
        } else {
            for (int c : nodes_[i].children) flatten_rec(c, stack, out);
        }
        stack.pop_back();
    }

    // groups `order` (atom indices) by exact value at position `pos`
    void build_rec(const std::vector<std::pair<std::vector<double>, double>>& atoms,
                   const std::vector<int>& order, int pos, int parent, double parent_mass) {
        std::map<double, std::vector<int>> groups;
        for (int a : order) groups[atoms[a].first[pos]].push_back(a);
        for (auto& [value, members] : groups) {
            double mass = 0.0;
            for (int a : members) mass += atoms[a].second;
            TreeNode n;
            n.depth = pos + 1;
            n.value = value;
            n.cond_prob = mass / parent_mass;
            n.path_prob = mass;
            n.parent = parent;
            int idx = static_cast<int>(nodes_.size());
            nodes_.push_back(std::move(n));
            layers_[pos].push_back(idx);
            if (parent >= 0) nodes_[parent].children.push_back(idx);
            if (pos + 1 < horizon_) build_rec(atoms, members, pos + 1, idx, mass);
        }
    }

    int horizon_ = 0;
    double p_ = 2.0;
    std::vector<TreeNode> nodes_;
    std::vector<std::vector<int>> layers_;
};

/// Deterministic random scenario tree: fixed branching, values uniform in
/// [lo, hi] with a jitter pass that separates sibling ties.
inline AdaptedMeasure random_tree(std::uint64_t seed, int horizon, int branching, double lo = -1.0,
                                  double hi = 1.0, double p = 2.0) {
    if (horizon < 1 || branching < 1) throw SchemaError("random_tree: horizon and branching must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uval(lo, hi);
    std::uniform_real_distribution<double> uw(0.25, 1.0);
    const double tick = (hi - lo) * 1e-6 + 1e-12;

    std::vector<std::pair<std::vector<double>, double>> atoms;
    struct Frame {
        std::vector<double> prefix;
        double mass;
    };
    std::vector<Frame> frontier{{{}, 1.0}};
    for (int d = 0; d < horizon; ++d) {
        std::vector<Frame> next;
        for (const auto& f : frontier) {
            std::vector<double> vals(branching);
            std::vector<double> w(branching);
            double wsum = 0.0;
            for (int b = 0; b < branching; ++b) {
                vals[b] = uval(rng);
                w[b] = uw(rng);
                wsum += w[b];
            }
            std::sort(vals.begin(), vals.end());
            for (int b = 1; b < branching; ++b)
                if (vals[b] - vals[b - 1] < tick) vals[b] = vals[b - 1] + tick;
            for (int b = 0; b < branching; ++b) {
                Frame g;
                g.prefix = f.prefix;
                g.prefix.push_back(vals[b]);
                g.mass = f.mass * (w[b] / wsum);
                next.push_back(std::move(g));
            }
        }
        frontier = std::move(next);
    }
    for (auto& f : frontier) atoms.emplace_back(std::move(f.prefix), f.mass);
    return AdaptedMeasure::from_paths(horizon, p, std::move(atoms));
}

/// Deterministic random martingale tree: every interior kernel has its mean
/// pinned to the node value. Branching 2 uses {x-v, x+u}; branching >= 3 adds
/// a middle atom at x.
inline AdaptedMeasure random_martingale_tree(std::uint64_t seed, int horizon, int branching,
                                             double scale = 1.0, double p = 2.0) {
    if (horizon < 1 || branching < 2)
        throw SchemaError("random_martingale_tree: horizon >= 1 and branching >= 2 required");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uoff(0.1 * scale, scale);
    std::uniform_real_distribution<double> umid(0.2, 0.5);

    std::vector<std::pair<std::vector<double>, double>> atoms;
    struct Frame {
        std::vector<double> prefix;
        double mass;
        double x;
    };
    std::vector<Frame> frontier{{{}, 1.0, 0.0}};
    for (int d = 0; d < horizon; ++d) {
        std::vector<Frame> next;
        for (const auto& f : frontier) {
            double u = uoff(rng);
            double v = uoff(rng);
            double pmid = branching >= 3 ? umid(rng) : 0.0;
            double rest = 1.0 - pmid;
            double pdown = rest * u / (u + v);
            double pup = rest * v / (u + v);
            auto push = [&](double val, double prob) {
                Frame g;
                g.prefix = f.prefix;
                g.prefix.push_back(val);
                g.mass = f.mass * prob;
                g.x = val;
                next.push_back(std::move(g));
            };
            push(f.x - v, pdown);
            if (branching >= 3) push(f.x, pmid);
            push(f.x + u, pup);
        }
        frontier = std::move(next);
    }
    for (auto& f : frontier) atoms.emplace_back(std::move(f.prefix), f.mass);
    return AdaptedMeasure::from_paths(horizon, p, std::move(atoms));
}

}  // namespace awdro
