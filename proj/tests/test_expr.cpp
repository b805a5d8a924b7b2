#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bateman/errors.hpp"
#include "bateman/expr.hpp"
#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace bateman;
using doctest::Approx;

namespace {

double rel_err(double a, double b)
{
    return std::fabs(a - b) / std::max(1.0, std::max(std::fabs(a), std::fabs(b)));
}

}  // namespace

TEST_CASE("parse builds trees with variables in order of appearance")
{
    ExprSpec sq = parse("u^2");
    CHECK(sq.vars() == std::vector<std::string>{"u"});
    CHECK(sq.to_string() == "(u)^(2)");

    ExprSpec e = parse("exp(v) + u*v");
    CHECK(e.vars() == std::vector<std::string>{"v", "u"});
    CHECK(e.to_string() == "(exp(v))+((u)*(v))");
}

TEST_CASE("operator precedence and associativity")
{
    const std::map<std::string, double> at{{"u", 3.0}, {"a", 2.0}, {"b", 3.0}, {"c", 2.0}};
    CHECK(eval(parse("-u^2"), at) == -9.0);
    CHECK(eval(parse("a^b^c"), at) == Approx(512.0));
    CHECK(eval(parse("a - b - c"), at) == -3.0);
    CHECK(eval(parse("a / b / c"), at) == Approx(1.0 / 3.0));
    CHECK(eval(parse("a + b * c"), at) == 8.0);
    CHECK(eval(parse("u^-1"), at) == Approx(1.0 / 3.0));
    CHECK(eval(parse("2*-u"), at) == -6.0);
    CHECK(eval(parse("1.5e1 + .5"), at) == 15.5);
}

TEST_CASE("syntax errors carry positions")
{
    try {
        (void)parse("u +");
        FAIL("expected parse error");
    } catch (const ParseError& e) {
        CHECK(e.position() == 3);
    }
    try {
        (void)parse("tanh(u)");
        FAIL("expected unknown function");
    } catch (const ParseError& e) {
        CHECK(e.position() == 0);
        CHECK(std::string(e.what()).find("unknown function") != std::string::npos);
    }
    CHECK_THROWS_AS(parse(""), ParseError);
    CHECK_THROWS_AS(parse("(u + 1"), ParseError);
    CHECK_THROWS_AS(parse("u v"), ParseError);
    CHECK_THROWS_AS(parse("exp u"), ParseError);
    CHECK_THROWS_AS(parse("1e999"), ParseError);
}

TEST_CASE("print then parse reproduces the tree")
{
    test::ExprGenerator gen(99);
    for (int i = 0; i < 300; ++i) {
        const std::string text = gen.next(4);
        ExprSpec a = parse(text);
        ExprSpec b = parse(a.to_string());
        INFO(text);
        CHECK(a.same_tree(b));
        CHECK(a.vars() == b.vars());
    }
}

TEST_CASE("eval_jet applies the chain rule")
{
    ExprSpec uv = parse("u*v");
    std::map<std::string, Jet2> args{{"u", jet_var(0, 2.0, 2)}, {"v", jet_var(1, 3.0, 2)}};
    Jet2 r = eval_jet(uv, args);
    CHECK(r.value() == 6.0);
    CHECK(r.d(0) == 3.0);
    CHECK(r.d(1) == 2.0);
    CHECK(r.dd(0, 1) == 1.0);
    CHECK(r.dd(0, 0) == 0.0);

    // Non-seed argument: value 2, gradient (1,1), zero Hessian.
    // d(phi^2) = 2 phi phi', d2(phi^2) = 2 phi phi'' + 2 phi' (x) phi'.
    Jet2 phi(2, 2.0);
    phi.set_d(0, 1.0);
    phi.set_d(1, 1.0);
    Jet2 p2 = eval_jet(parse("phi^2"), {{"phi", phi}});
    CHECK(p2.value() == 4.0);
    CHECK(p2.d(0) == 4.0);
    CHECK(p2.d(1) == 4.0);
    CHECK(p2.dd(0, 0) == 2.0);
    CHECK(p2.dd(0, 1) == 2.0);
    CHECK(p2.dd(1, 1) == 2.0);

    Jet2 neg(1, -4.0);
    CHECK_THROWS_AS(eval_jet(parse("sqrt(u)"), {{"u", neg}}), SingularityError);
    CHECK_THROWS_AS(eval_jet(parse("u + w"), {{"u", neg}}), std::invalid_argument);
}

TEST_CASE("constant-seeded arguments give zero derivatives")
{
    test::ExprGenerator gen(5);
    std::mt19937_64 rng(6);
    for (int i = 0; i < 100; ++i) {
        ExprSpec s = parse(gen.next()).with_vars({"a", "b", "c"});
        auto p = test::random_point(rng, 3);
        std::vector<Jet2> args;
        for (double v : p) args.push_back(Jet2::constant(v, 3));
        Jet2 r = eval_jet(s, args);
        CHECK(r.value() == eval(s, p));
        for (int a = 0; a < 3; ++a) {
            CHECK(r.d(a) == 0.0);
            for (int b = 0; b < 3; ++b) CHECK(r.dd(a, b) == 0.0);
        }
    }
}

TEST_CASE("symbolic partial derivatives")
{
    ExprSpec d = partial(parse("u^2"), "u");
    CHECK(eval(d, std::map<std::string, double>{{"u", 1.75}}) == Approx(3.5));

    ExprSpec e = partial(parse("u*v + exp(v)"), "v");
    CHECK(e.vars() == std::vector<std::string>{"u", "v"});
    const std::map<std::string, double> at{{"u", 0.3}, {"v", -0.4}};
    CHECK(eval(e, at) == Approx(0.3 + std::exp(-0.4)));

    CHECK_THROWS_AS(partial(parse("u"), "w"), std::invalid_argument);

    // Non-constant exponent.
    ExprSpec g = partial(parse("u^v"), "u");
    CHECK(eval(g, std::map<std::string, double>{{"u", 2.0}, {"v", 3.0}}) == Approx(12.0));
}

TEST_CASE("partial agrees with the jet gradient at random points")
{
    test::ExprGenerator gen(31);
    std::mt19937_64 rng(32);
    const std::vector<std::string> names{"a", "b", "c"};
    for (int i = 0; i < 60; ++i) {
        ExprSpec s = parse(gen.next()).with_vars(names);
        for (int a = 0; a < 3; ++a) {
            ExprSpec da = partial(s, names[static_cast<std::size_t>(a)]);
            for (int pt = 0; pt < 20; ++pt) {
                auto p = test::random_point(rng, 3);
                Jet2 j = eval_jet(s, test::seeds(p));
                CHECK(rel_err(eval(da, p), j.d(a)) <= 1e-12);
            }
        }
    }
}

TEST_CASE("two symbolic partials reproduce the Hessian")
{
    test::ExprGenerator gen(41);
    std::mt19937_64 rng(42);
    const std::vector<std::string> names{"a", "b", "c"};
    for (int i = 0; i < 40; ++i) {
        ExprSpec s = parse(gen.next()).with_vars(names);
        auto p = test::random_point(rng, 3);
        Jet2 j = eval_jet(s, test::seeds(p));
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                ExprSpec dab = partial(partial(s, names[static_cast<std::size_t>(a)]),
                                       names[static_cast<std::size_t>(b)]);
                CHECK(rel_err(eval(dab, p), j.dd(a, b)) <= 1e-10);
            }
        }
    }
}

TEST_CASE("fields bind expression variables to coordinates by name")
{
    FieldHandle f = field_from_expr(parse("x2*exp(x1)"), {"x1", "x2"});
    Jet2 j = f({0.0, 3.0});
    CHECK(j.value() == 3.0);
    CHECK(j.d(0) == 3.0);
    CHECK(j.d(1) == 1.0);
    CHECK(j.dd(0, 1) == 1.0);
    CHECK_THROWS_AS(f({1.0}), std::invalid_argument);
    CHECK_THROWS_AS(field_from_expr(parse("y"), {"x1", "x2"}), std::invalid_argument);

    FieldHandle h = reparametrize(f, parse("s^3 + s"));
    Jet2 hj = h({0.0, 1.0});
    CHECK(hj.value() == 2.0);
    CHECK(hj.d(1) == Approx(4.0));  // (3 s^2 + 1) * 1
}
