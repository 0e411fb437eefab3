// SPDX-License-Identifier: MIT
#pragma once

#include <cctype>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "awdro/common.hpp"
#include "awdro/cost_model.hpp"

namespace awdro::expr {

// Arithmetic over y1..yN, a1..aN with + - * ^ and max(,). Exponents must be
// constants. Derivatives of max pick the left branch on ties, so costs built
// here are differentiable almost everywhere.
struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
    enum class Kind { Const, VarY, VarA, Add, Sub, Mul, Neg, Pow, Max } kind;
    double value = 0.0;  // Const payload, or the exponent for Pow
    int index = 0;       // 1-based time index for VarY/VarA
    NodePtr a, b;
};

inline NodePtr make(Node n) { return std::make_shared<const Node>(std::move(n)); }

namespace detail {

struct Parser {
    std::string_view text;
    std::size_t pos = 0;
    int horizon;

    [[noreturn]] void fail(const std::string& msg) const {
        throw SchemaError("cost expression: " + msg + " at column " + std::to_string(pos + 1));
    }

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    bool eat(char c) {
        skip_ws();
        if (pos < text.size() && text[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos < text.size() ? text[pos] : '\0';
    }

    NodePtr parse_expr() {
        NodePtr lhs = parse_term();
        for (;;) {
            if (eat('+')) {
                lhs = make({Node::Kind::Add, 0, 0, lhs, parse_term()});
            } else if (eat('-')) {
                lhs = make({Node::Kind::Sub, 0, 0, lhs, parse_term()});
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_term() {
        NodePtr lhs = parse_factor();
        while (eat('*')) lhs = make({Node::Kind::Mul, 0, 0, lhs, parse_factor()});
        return lhs;
    }

    NodePtr parse_factor() {
        NodePtr base = parse_unary();
        if (eat('^')) {
            NodePtr e = parse_unary();
            if (e->kind != Node::Kind::Const &&
                !(e->kind == Node::Kind::Neg && e->a->kind == Node::Kind::Const))
                fail("exponent must be a constant");
            double exp = e->kind == Node::Kind::Const ? e->value : -e->a->value;
            return make({Node::Kind::Pow, exp, 0, base, nullptr});
        }
        return base;
    }

    NodePtr parse_unary() {
        if (eat('-')) return make({Node::Kind::Neg, 0, 0, parse_unary(), nullptr});
        return parse_atom();
    }

    NodePtr parse_atom() {
        skip_ws();
        if (pos >= text.size()) fail("unexpected end of input");
        char c = text[pos];
        if (c == '(') {
            ++pos;
            NodePtr e = parse_expr();
            if (!eat(')')) fail("missing ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t start = pos;
            while (pos < text.size() &&
                   (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.' ||
                    text[pos] == 'e' || text[pos] == 'E' ||
                    ((text[pos] == '+' || text[pos] == '-') &&
                     (text[pos - 1] == 'e' || text[pos - 1] == 'E'))))
                ++pos;
            try {
                return make({Node::Kind::Const, std::stod(std::string(text.substr(start, pos - start))),
                             0, nullptr, nullptr});
            } catch (...) {
                fail("bad number");
            }
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos;
            while (pos < text.size() && std::isalnum(static_cast<unsigned char>(text[pos]))) ++pos;
            std::string_view word = text.substr(start, pos - start);
            if (word == "max") {
                if (!eat('(')) fail("max needs '('");
                NodePtr l = parse_expr();
                if (!eat(',')) fail("max needs two arguments");
                NodePtr r = parse_expr();
                if (!eat(')')) fail("missing ')'");
                return make({Node::Kind::Max, 0, 0, l, r});
            }
            if ((word[0] == 'y' || word[0] == 'a') && word.size() > 1) {
                int idx = 0;
                for (std::size_t k = 1; k < word.size(); ++k) {
                    if (!std::isdigit(static_cast<unsigned char>(word[k]))) idx = -1;
                    if (idx >= 0) idx = idx * 10 + (word[k] - '0');
                }
                if (idx >= 1 && idx <= horizon)
                    return make({word[0] == 'y' ? Node::Kind::VarY : Node::Kind::VarA, 0, idx,
                                 nullptr, nullptr});
                fail("variable '" + std::string(word) + "' out of range 1.." + std::to_string(horizon));
            }
            fail("unknown identifier '" + std::string(word) + "'");
        }
        fail(std::string("unexpected character '") + c + "'");
    }
};

}  // namespace detail

inline NodePtr parse(std::string_view text, int horizon) {
    detail::Parser p{text, 0, horizon};
    NodePtr e = p.parse_expr();
    p.skip_ws();
    if (p.pos != text.size()) p.fail("trailing input");
    return e;
}

inline double eval(const NodePtr& n, std::span<const double> y, std::span<const double> a) {
    switch (n->kind) {
        case Node::Kind::Const: return n->value;
        case Node::Kind::VarY: return y[n->index - 1];
        case Node::Kind::VarA: return a[n->index - 1];
        case Node::Kind::Add: return eval(n->a, y, a) + eval(n->b, y, a);
        case Node::Kind::Sub: return eval(n->a, y, a) - eval(n->b, y, a);
        case Node::Kind::Mul: return eval(n->a, y, a) * eval(n->b, y, a);
        case Node::Kind::Neg: return -eval(n->a, y, a);
        case Node::Kind::Pow: return std::pow(eval(n->a, y, a), n->value);
        case Node::Kind::Max: return std::max(eval(n->a, y, a), eval(n->b, y, a));
    }
    throw InternalError("cost expression: bad node");
}

/// d/dy_t, evaluated directly (max branches on the evaluated arguments).
inline double eval_dy(const NodePtr& n, int t, std::span<const double> y, std::span<const double> a) {
    switch (n->kind) {
        case Node::Kind::Const: return 0.0;
        case Node::Kind::VarY: return n->index == t ? 1.0 : 0.0;
        case Node::Kind::VarA: return 0.0;
        case Node::Kind::Add: return eval_dy(n->a, t, y, a) + eval_dy(n->b, t, y, a);
        case Node::Kind::Sub: return eval_dy(n->a, t, y, a) - eval_dy(n->b, t, y, a);
        case Node::Kind::Mul:
            return eval_dy(n->a, t, y, a) * eval(n->b, y, a) + eval(n->a, y, a) * eval_dy(n->b, t, y, a);
        case Node::Kind::Neg: return -eval_dy(n->a, t, y, a);
        case Node::Kind::Pow: {
            double base = eval(n->a, y, a);
            double db = eval_dy(n->a, t, y, a);
            if (db == 0.0) return 0.0;
            return n->value * std::pow(base, n->value - 1.0) * db;
        }
        case Node::Kind::Max:
            return eval(n->a, y, a) >= eval(n->b, y, a) ? eval_dy(n->a, t, y, a)
                                                        : eval_dy(n->b, t, y, a);
    }
    throw InternalError("cost expression: bad node");
}

inline void collect_vars(const NodePtr& n, int& max_y, int& max_a, std::vector<int>& a_indices) {
    if (!n) return;
    if (n->kind == Node::Kind::VarY) max_y = std::max(max_y, n->index);
    if (n->kind == Node::Kind::VarA) {
        max_a = std::max(max_a, n->index);
        a_indices.push_back(n->index);
    }
    collect_vars(n->a, max_y, max_a, a_indices);
    collect_vars(n->b, max_y, max_a, a_indices);
}

/// Builds a CostModel from one terminal expression. Controlled iff any a_t
/// appears. Partials come from symbolic differentiation of the grammar.
inline CostModel cost_from_expression(std::string_view text, int horizon, bool convex = false,
                                      bool strongly_convex = false) {
    NodePtr ast = parse(text, horizon);
    int max_y = 0, max_a = 0;
    std::vector<int> a_idx;
    collect_vars(ast, max_y, max_a, a_idx);
    CostModel c;
    c.horizon = horizon;
    c.controlled = max_a > 0;
    c.convex_in_control = convex;
    c.strongly_convex_in_control = strongly_convex;
    c.name = std::string(text);
    c.terminal = [ast](std::span<const double> y, std::span<const double> a) {
        return eval(ast, y, a);
    };
    for (int t = 1; t <= horizon; ++t) {
        c.partials.push_back([ast, t](std::span<const double> y, std::span<const double> a) {
            return eval_dy(ast, t, y, a);
        });
    }
    return c;
}

/// Builds a semi-separable CostModel from per-period part expressions; part t
/// may reference y1..yt and a_t only.
inline CostModel cost_from_parts(const std::vector<std::string>& part_texts, int horizon,
                                 bool convex = false, bool strongly_convex = false) {
    if (static_cast<int>(part_texts.size()) != horizon)
        throw SchemaError("expected " + std::to_string(horizon) + " part expressions, got " +
                          std::to_string(part_texts.size()));
    std::vector<NodePtr> asts;
    bool controlled = false;
    for (int t = 1; t <= horizon; ++t) {
        NodePtr ast = parse(part_texts[t - 1], horizon);
        int max_y = 0, max_a = 0;
        std::vector<int> a_idx;
        collect_vars(ast, max_y, max_a, a_idx);
        if (max_y > t)
            throw SchemaError("part " + std::to_string(t) + " references y" + std::to_string(max_y) +
                              " beyond its prefix");
        for (int ai : a_idx)
            if (ai != t)
                throw SchemaError("part " + std::to_string(t) + " may only use a" + std::to_string(t));
        controlled |= max_a > 0;
        asts.push_back(std::move(ast));
    }
    CostModel c;
    c.horizon = horizon;
    c.controlled = controlled;
    c.convex_in_control = convex;
    c.strongly_convex_in_control = strongly_convex;
    c.name = "parts";
    c.terminal = [asts, horizon](std::span<const double> y, std::span<const double> a) {
        double s = 0.0;
        for (int t = 0; t < horizon; ++t) s += eval(asts[t], y, a);
        return s;
    };
    for (int t = 1; t <= horizon; ++t) {
        NodePtr ast = asts[t - 1];
        c.parts.push_back([ast, t, horizon](std::span<const double> y_prefix, double at) {
            // pad to full width; part t only reads y1..yt and a_t
            std::vector<double> y(horizon, 0.0), a(horizon, 0.0);
            std::copy(y_prefix.begin(), y_prefix.end(), y.begin());
            a[t - 1] = at;
            return eval(ast, y, a);
        });
        c.partials.push_back([asts, t, horizon](std::span<const double> y, std::span<const double> a) {
            double s = 0.0;
            for (int s_t = 0; s_t < horizon; ++s_t) s += eval_dy(asts[s_t], t, y, a);
            return s;
        });
    }
    return c;
}

}  // namespace awdro::expr
