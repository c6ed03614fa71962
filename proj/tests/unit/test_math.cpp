#include "doctest.h"

#include "mtutor/math/answers.hpp"
#include "mtutor/math/calculus.hpp"
#include "mtutor/math/parser.hpp"
#include "mtutor/math/plot.hpp"
#include "mtutor/math/simplify.hpp"
#include "mtutor/math/solver.hpp"

#include <cmath>
#include <random>

using namespace mtutor::math;

namespace {

Expr n(long long v) { return Expr::number(v); }
Expr sym(char const * s) { return Expr::symbol(s); }

Expr random_expr(std::mt19937 & rng, int depth)
{
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 9);
    std::uniform_int_distribution<int> small(0, 12);
    switch (pick(rng)) {
    case 0: return n(small(rng));
    case 1: return Expr::symbol(std::string(1, "xyz"[small(rng) % 3]));
    case 2: return Expr::add(random_expr(rng, depth - 1), random_expr(rng, depth - 1));
    case 3: return Expr::sub(random_expr(rng, depth - 1), random_expr(rng, depth - 1));
    case 4: return Expr::mul(random_expr(rng, depth - 1), random_expr(rng, depth - 1));
    case 5: return Expr::div(random_expr(rng, depth - 1), random_expr(rng, depth - 1));
    case 6: return Expr::pow(random_expr(rng, depth - 1), small(rng) % 4 - 1);
    case 7: return Expr::neg(random_expr(rng, depth - 1));
    case 8: return Expr::call(static_cast<Func>(small(rng) % 4), random_expr(rng, depth - 1));
    default: return Expr::number(Rational(small(rng), 4));
    }
}

/// Random polynomial in x with small integer coefficients, degree <= 4.
Expr random_polynomial(std::mt19937 & rng)
{
    std::uniform_int_distribution<int> coeff(-5, 5);
    std::uniform_int_distribution<int> degree(0, 4);
    Expr acc = n(coeff(rng));
    int const d = degree(rng);
    for (int k = 1; k <= d; ++k)
        acc = Expr::add(acc, Expr::mul(n(coeff(rng)), Expr::pow(sym("x"), k)));
    return acc;
}

} // namespace

TEST_CASE("parse builds the documented tree shapes")
{
    CHECK(parse("2*x+3") == Expr::add(Expr::mul(n(2), sym("x")), n(3)));
    CHECK(parse("-x^2") == Expr::neg(Expr::pow(sym("x"), 2)));
    CHECK(parse("2x") == Expr::mul(n(2), sym("x")));
    CHECK(parse("2(x+1)") == Expr::mul(n(2), Expr::add(sym("x"), n(1))));
    CHECK(parse("  2 *   x ") == parse("2*x"));
    CHECK(parse("x^2^3") == Expr::pow(sym("x"), 8));
    CHECK(parse("x^-1") == Expr::pow(sym("x"), -1));
    CHECK(parse("0.5") == Expr::number(Rational(1, 2)));
    CHECK(parse("sin(2x)") == Expr::call(Func::sin, Expr::mul(n(2), sym("x"))));
    CHECK(parse("x² − 5x") == parse("x^2 - 5*x"));
}

TEST_CASE("parse reports syntax errors with byte offsets")
{
    auto offset_of = [](char const * text) -> std::size_t {
        try {
            parse(text);
        } catch (SyntaxError const & e) {
            return e.offset();
        }
        return 9999;
    };
    CHECK(offset_of("2(x+1") == 5);
    CHECK(offset_of("2 + * 3") == 4);
    CHECK(offset_of("x^y") == 2);
    CHECK(offset_of("x $ 1") == 2);
    CHECK(offset_of("sin x") == 4);
}

TEST_CASE("rendered expressions reparse to an equal tree")
{
    std::mt19937 rng(7);
    for (int i = 0; i < 500; ++i) {
        Expr const e = random_expr(rng, 4);
        std::string const text = to_string(e);
        INFO(text);
        Expr const again = parse(text);
        // parse output uses only non-negative literals, so compare through a
        // second round trip
        CHECK(parse(to_string(again)) == again);
    }
    for (char const * text : {"2*x+3", "-x^2", "(x+1)^2 - (x^2+2x+1)", "a-(b-c)", "(a/b)/c", "a/(b/c)",
                              "-(x+2)", "2^(-1)", "(-2)^2", "x*-y", "sin(cos(x))^2", "0.25*x", "--x"}) {
        Expr const e = parse(text);
        CHECK_MESSAGE(parse(to_string(e)) == e, text);
    }
}

TEST_CASE("simplify examples")
{
    CHECK(simplify(parse("(x+1)^2 - (x^2+2x+1)")) == n(0));
    CHECK(simplify(parse("2x + 3x")) == Expr::mul(n(5), sym("x")));
    CHECK(to_string(simplify(parse("3 + x^2 + x*y + 2*x^3"))) == "2*x^3 + x^2 + x*y + 3");
    CHECK(to_string(simplify(parse("y^2 + x^2 + x*y"))) == "x^2 + x*y + y^2");
    CHECK(simplify(parse("6/4")) == Expr::number(Rational(3, 2)));
    CHECK(simplify(parse("sin(x + x)")) == parse("sin(2*x)"));
    CHECK(simplify(parse("x/x")) == n(1));
    CHECK(simplify(parse("sqrt(8)")) == parse("2*sqrt(2)"));
    CHECK(simplify(parse("sqrt(2)*sqrt(2)")) == n(2));
    CHECK(simplify(parse("1/sqrt(2)")) == simplify(parse("sqrt(2)/2")));
    CHECK(equivalent(parse("1/(1+sqrt(5))"), parse("(sqrt(5)-1)/4")));
}

TEST_CASE("rational functions are left unreduced and flagged")
{
    auto const r = simplify_with_report(parse("(x^2-1)/(x-1)"));
    CHECK(r.rational);
    CHECK(r.expr.op() == Op::div);
    CHECK(to_string(r.expr) == "(x^2 - 1)/(x - 1)");
    CHECK_FALSE(simplify_with_report(parse("x^2 - 1")).rational);
    CHECK(simplify(parse("1/x - 1/x")) == n(0));
}

TEST_CASE("simplify rejects constant zero denominators")
{
    CHECK_THROWS_AS(simplify(parse("1/(2-2)")), DivisionByZero);
    CHECK_THROWS_AS(simplify(parse("x/(x-x)")), DivisionByZero);
    CHECK_THROWS_AS(simplify(parse("0^(-1)")), DivisionByZero);
    CHECK_FALSE(equivalent(parse("1/0"), n(0)));
}

TEST_CASE("simplify is idempotent")
{
    std::mt19937 rng(11);
    int checked = 0;
    for (int i = 0; i < 400; ++i) {
        Expr const e = random_expr(rng, 3);
        Expr once;
        try {
            once = simplify(e);
        } catch (DivisionByZero const &) {
            continue;
        }
        INFO(to_string(e));
        CHECK(simplify(once) == once);
        ++checked;
    }
    CHECK(checked > 200);
}

TEST_CASE("solve_equation examples")
{
    auto linear = solve_equation(parse_equation("2x+3=7"));
    REQUIRE(linear.kind == SolveKind::exact);
    REQUIRE(linear.exact.size() == 1);
    CHECK(linear.exact[0] == n(2));

    auto quad = solve_equation(parse_equation("x^2-5x+6=0"));
    REQUIRE(quad.kind == SolveKind::exact);
    REQUIRE(quad.exact.size() == 2);
    CHECK(quad.exact[0] == n(2));
    CHECK(quad.exact[1] == n(3));

    auto complex = solve_equation(parse_equation("x^2+1=0"));
    CHECK(complex.kind == SolveKind::exact);
    CHECK(complex.exact.empty());
    CHECK(complex.complex_roots_exist);

    auto half = solve_equation(parse_equation("2x = 1"));
    REQUIRE(half.exact.size() == 1);
    CHECK(half.exact[0] == Expr::number(Rational(1, 2)));

    auto identity = solve_equation(parse_equation("x + 1 = 1 + x"));
    CHECK(identity.identity);
}

TEST_CASE("quadratic surds stay symbolic and are true roots")
{
    Expr const p = parse("x^2 - 4x + 1");
    auto r = solve_equation(Equation{p, n(0), "x"});
    REQUIRE(r.kind == SolveKind::exact);
    REQUIRE(r.exact.size() == 2);
    CHECK(equivalent(r.exact[0], parse("2 - sqrt(3)")));
    CHECK(equivalent(r.exact[1], parse("2 + sqrt(3)")));
    for (auto const & root : r.exact)
        CHECK(simplify(substitute(p, "x", root)).is_zero());
}

TEST_CASE("higher degree: rational roots then bisection")
{
    auto cubic = solve_equation(parse_equation("(x-1)(x-2)(x+3) = 0"));
    REQUIRE(cubic.kind == SolveKind::exact);
    REQUIRE(cubic.exact.size() == 3);
    CHECK(cubic.exact[0] == n(-3));
    CHECK(cubic.exact[1] == n(1));
    CHECK(cubic.exact[2] == n(2));

    auto numeric = solve_equation(parse_equation("x^3 = 2"));
    REQUIRE(numeric.kind == SolveKind::numeric);
    REQUIRE(numeric.approximations.size() == 1);
    CHECK(std::abs(numeric.approximations[0] - std::cbrt(2.0)) < 1e-8);
    CHECK(numeric.complex_roots_exist);

    auto unsupported = solve_equation(parse_equation("sin(x) = 0"));
    CHECK(unsupported.kind == SolveKind::unsupported);

    auto excluded = solve_equation(parse_equation("(x^2-1)/(x-1) = 0"));
    REQUIRE(excluded.exact.size() == 1);
    CHECK(excluded.exact[0] == n(-1));
}

TEST_CASE("solver agrees with an integer-substitution oracle")
{
    std::mt19937 rng(2024);
    std::uniform_int_distribution<int> root(-9, 9);
    std::uniform_int_distribution<int> degree(1, 2);
    for (int i = 0; i < 200; ++i) {
        int const d = degree(rng);
        int const r1 = root(rng);
        int const r2 = root(rng);
        Expr p = Expr::sub(sym("x"), n(r1));
        if (d == 2)
            p = Expr::mul(p, Expr::sub(sym("x"), n(r2)));
        // brute-force oracle: integers in [-9, 9] where p vanishes
        std::vector<Expr> oracle;
        for (int c = -9; c <= 9; ++c)
            if (simplify(substitute(p, "x", n(c))).is_zero())
                oracle.push_back(n(c));
        auto const got = solve_equation(Equation{simplify(p), n(0), "x"});
        REQUIRE(got.kind == SolveKind::exact);
        CHECK(got.exact == oracle);
    }
}

TEST_CASE("differentiate examples")
{
    CHECK(differentiate(parse("x^2"), "x") == parse("2*x"));
    CHECK(differentiate(parse("sin(2x)"), "x") == simplify(parse("2*cos(2*x)")));
    CHECK(differentiate(parse("7"), "x") == n(0));
    CHECK(differentiate(parse("y^2"), "x") == n(0));
    CHECK(equivalent(differentiate(parse("1/x"), "x"), parse("-1/x^2")));
    CHECK(equivalent(differentiate(parse("ln(x^2)"), "x"), parse("2/x")));
}

TEST_CASE("derivatives match central finite differences")
{
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> point(-2.0, 2.0);
    double const h = 1e-5;
    for (int i = 0; i < 20; ++i) {
        Expr const e = random_polynomial(rng);
        Expr const d = differentiate(e, "x");
        for (int j = 0; j < 10; ++j) {
            double const x = point(rng);
            double const fd = (evaluate(e, {{"x", x + h}}) - evaluate(e, {{"x", x - h}})) / (2 * h);
            CHECK(std::abs(evaluate(d, {{"x", x}}) - fd) <= 1e-6);
        }
    }
}

TEST_CASE("plot samples and svg")
{
    auto s = plot(parse("x^2"), "x", -2, 2, 5);
    REQUIRE(s.samples.size() == 5);
    std::vector<double> ys;
    for (auto const & p : s.samples)
        ys.push_back(*p.y);
    CHECK(ys == std::vector<double>{4, 1, 0, 1, 4});

    auto r = plot(parse("1/x"), "x", -1, 1, 3);
    CHECK(r.samples[0].y.has_value());
    CHECK_FALSE(r.samples[1].y.has_value());
    CHECK(r.samples[2].y.has_value());

    CHECK_THROWS_AS(plot(parse("x"), "x", 1, 1), InvalidRange);
    CHECK_THROWS_AS(plot(parse("x"), "x", 0, 1, 1), InvalidRange);

    std::string const svg = render_svg(plot(parse("1/x"), "x", -1, 1, 4));
    CHECK(svg.find("width=\"640\" height=\"480\"") != std::string::npos);
    std::size_t lines = 0;
    for (std::size_t pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1))
        ++lines;
    CHECK(lines == 1);  // x = -1, -1/3, 1/3, 1: one unbroken run

    std::string const broken = render_svg(plot(parse("1/x"), "x", -1, 1, 5));
    lines = 0;
    for (std::size_t pos = broken.find("<polyline"); pos != std::string::npos; pos = broken.find("<polyline", pos + 1))
        ++lines;
    CHECK(lines == 2);
}

TEST_CASE("answer spans")
{
    auto spans = extract_answer_spans("so x = 2 is the solution");
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].kind == SpanKind::assignment);
    CHECK(spans[0].text == "x = 2");
    CHECK(spans[0].value == n(2));

    spans = extract_answer_spans("what do you get if you subtract 3 from both sides?");
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].value == n(3));

    spans = extract_answer_spans("notice 4/2 appears");
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].kind == SpanKind::literal);
    CHECK(equivalent(spans[0].value, n(2)));

    spans = extract_answer_spans("Look at 2x + 3 = 7. What is x?");
    bool saw_seven = false;
    for (auto const & s : spans) {
        CHECK_FALSE(equivalent(s.value, n(2)));
        saw_seven = saw_seven || equivalent(s.value, n(7));
    }
    CHECK(saw_seven);

    spans = extract_answer_spans("The roots are (x = 2) and x=3.");
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].value == n(2));
    CHECK(spans[1].value == n(3));
}

TEST_CASE("answer candidates and equations in student text")
{
    CHECK(answer_candidates("I think x = -3 because 2 + 1 is 3") == std::vector<Expr>{Expr::neg(n(3))});
    CHECK(answer_candidates("is it 4?") == std::vector<Expr>{n(4)});
    CHECK(answer_candidates("no idea").empty());

    auto eq = find_equation("help me solve 2x+3=7 please");
    REQUIRE(eq.has_value());
    CHECK(eq->var == "x");
    CHECK(eq->lhs == parse("2x+3"));
    CHECK_FALSE(find_equation("I got x = 2").has_value());
}

TEST_CASE("answer lists")
{
    auto a = parse_answer_list("x = 2, x = 3", "x");
    REQUIRE(a.size() == 2);
    CHECK(same_answer_set(a, {n(3), n(2)}));
    CHECK(parse_answer_list("2 or 3").size() == 2);
    CHECK(parse_answer_list("no real solution").empty());
    CHECK(same_answer_set(parse_answer_list("{1/2}"), {Expr::number(Rational(1, 2))}));
    CHECK(same_answer_set(parse_answer_list("0.5"), parse_answer_list("1/2")));
    CHECK_THROWS_AS(parse_answer_list("x = 2 +"), SyntaxError);
    CHECK_FALSE(same_answer_set({n(2)}, {n(2), n(3)}));
}
