// SPDX-License-Identifier: MIT
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "awdro/cost_expr.hpp"
#include "awdro/cost_model.hpp"

using namespace awdro;

TEST_CASE("builtin quadratic tracking is consistent with its parts") {
    CostModel c = quadratic_tracking_cost(3);
    c.check_parts_consistency();
    std::vector<double> y{0.5, -1.0, 2.0}, a{0.0, 0.5, 1.0};
    CHECK(c.eval(y, a) == doctest::Approx(0.25 + 2.25 + 1.0));
    CHECK(c.partial(2, y, a) == doctest::Approx(2.0 * (-1.0 - 0.5)));
}

TEST_CASE("builtin call payoff differentiates almost everywhere") {
    CostModel c = call_payoff_cost(2, 1.0);
    std::vector<double> y{0.0, 3.0};
    CHECK(c.eval(y, {}) == doctest::Approx(2.0));
    CHECK(c.partial(2, y, {}) == doctest::Approx(1.0));
    CHECK(c.partial(1, y, {}) == doctest::Approx(0.0));
    y[1] = 0.5;
    CHECK(c.eval(y, {}) == doctest::Approx(0.0));
    CHECK(c.partial(2, y, {}) == doctest::Approx(0.0));
}

TEST_CASE("inconsistent parts are rejected") {
    CostModel c = quadratic_tracking_cost(2);
    c.parts[1] = [](std::span<const double> y, double a) { return (y[1] - a) * (y[1] - a) + 0.1; };
    CHECK_THROWS_AS(c.check_parts_consistency(), SchemaError);
}

TEST_CASE("expression grammar: parse, evaluate, differentiate") {
    auto ast = expr::parse("y1^2 + 2*y2 - max(y1, a1) + 0.5", 2);
    std::vector<double> y{3.0, -1.0}, a{1.0, 0.0};
    CHECK(expr::eval(ast, y, a) == doctest::Approx(9.0 - 2.0 - 3.0 + 0.5));
    CHECK(expr::eval_dy(ast, 1, y, a) == doctest::Approx(2.0 * 3.0 - 1.0));
    CHECK(expr::eval_dy(ast, 2, y, a) == doctest::Approx(2.0));
    // below the kink the max picks a1
    y[0] = 0.5;
    CHECK(expr::eval_dy(ast, 1, y, a) == doctest::Approx(2.0 * 0.5));
}

TEST_CASE("expression grammar: operator precedence and unary minus") {
    auto ast = expr::parse("-y1 + 2*y1^2", 1);
    std::vector<double> y{2.0};
    CHECK(expr::eval(ast, y, {}) == doctest::Approx(-2.0 + 8.0));
    auto nested = expr::parse("(y1 - 1)^3", 1);
    CHECK(expr::eval(nested, y, {}) == doctest::Approx(1.0));
    CHECK(expr::eval_dy(nested, 1, y, {}) == doctest::Approx(3.0));
}

TEST_CASE("expression errors carry a column position") {
    CHECK_THROWS_AS(expr::parse("y1 +", 1), SchemaError);
    CHECK_THROWS_AS(expr::parse("y3", 2), SchemaError);
    CHECK_THROWS_AS(expr::parse("max(y1)", 1), SchemaError);
    CHECK_THROWS_AS(expr::parse("y1 ^ a1", 1), SchemaError);  // non-constant exponent
    try {
        expr::parse("y1 + qq", 1);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("column") != std::string::npos);
    }
}

TEST_CASE("cost_from_expression wires terminal and partials") {
    CostModel c = expr::cost_from_expression("(y1 - a1)^2 + (y2 - a2)^2", 2, true, true);
    CHECK(c.controlled);
    std::vector<double> y{1.0, 2.0}, a{0.0, 1.0};
    CHECK(c.eval(y, a) == doctest::Approx(2.0));
    CHECK(c.partial(1, y, a) == doctest::Approx(2.0));
    CostModel ref = quadratic_tracking_cost(2);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> yy{u(rng), u(rng)}, aa{u(rng), u(rng)};
        CHECK(c.eval(yy, aa) == doctest::Approx(ref.eval(yy, aa)).epsilon(1e-12));
    }
}

TEST_CASE("cost_from_parts validates prefix discipline") {
    CostModel c = expr::cost_from_parts({"(y1 - a1)^2", "(y2 - a2)^2"}, 2, true, true);
    c.check_parts_consistency();
    CHECK(c.part(1, std::vector<double>{2.0}, 1.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(expr::cost_from_parts({"y2", "y1"}, 2), SchemaError);   // y2 in part 1
    CHECK_THROWS_AS(expr::cost_from_parts({"a2", "y2"}, 2), SchemaError);   // a2 in part 1
}
