#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bateman/construct.hpp"
#include "bateman/errors.hpp"
#include "bateman/residuals.hpp"
#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace bateman;
using doctest::Approx;

namespace {

test::ConvergenceCheck fd_check(const FieldHandle& h, const std::vector<double>& p)
{
    auto value = [&](const std::vector<double>& q) { return h(q).value(); };
    return test::check_second_order(h(p), value, p, 1e-3);
}

ImplicitSolveConfig seeded(double s)
{
    ImplicitSolveConfig c;
    c.seed = s;
    return c;
}

ImplicitSolveConfig seeded_uv(double u, double v)
{
    ImplicitSolveConfig c;
    c.seed_vec = {u, v};
    return c;
}

}  // namespace

TEST_CASE("small linear algebra")
{
    auto x = lu_solve({0.0, 2.0, 1.0, 1.0}, {4.0, 3.0}, 2);  // needs pivoting
    CHECK(x[0] == Approx(1.0));
    CHECK(x[1] == Approx(2.0));
    CHECK_THROWS_AS(lu_solve({1.0, 2.0, 2.0, 4.0}, {1.0, 1.0}, 2), DegenerateError);
    CHECK(condition_number({1.0, 0.0, 0.0, 1.0}, 2) == Approx(1.0));
    CHECK(std::isinf(condition_number({1.0, 1.0, 1.0, 1.0}, 2)));
}

TEST_CASE("scalar newton with bisection fallback")
{
    // x^3 - 2x + 2 traps Newton from 0 in a 2-cycle; the bracket rescues it.
    auto f = [](double x) { return ScalarEval{x * x * x - 2 * x + 2, 3 * x * x - 2, 1.0}; };
    ImplicitSolveConfig cfg;
    cfg.seed = 0.0;
    CHECK_THROWS_AS(newton_scalar(f, cfg), ConvergenceError);
    cfg.bracket = std::make_pair(-3.0, -1.0);
    const double r = newton_scalar(f, cfg);
    CHECK(std::fabs(r * r * r - 2 * r + 2) <= 1e-12);

    cfg.max_iter = 0;
    CHECK_THROWS_AS(newton_scalar(f, cfg), std::invalid_argument);
}

TEST_CASE("solve_implicit_fg examples")
{
    FieldHandle phi = solve_implicit_fg(parse("phi - x1*x2"), parse("xb1 + xb2"), seeded(0.0));
    Jet2 j = phi({1.0, 2.0, 3.0, 4.0});
    CHECK(j.value() == Approx(9.0));
    CHECK(j.d(0) == Approx(2.0));
    CHECK(j.d(1) == Approx(1.0));
    CHECK(j.d(2) == Approx(1.0));
    CHECK(j.dd(0, 1) == Approx(1.0));
    CHECK(j.dd(0, 2) == Approx(0.0));

    FieldHandle bad = solve_implicit_fg(parse("phi"), parse("phi"), seeded(0.0));
    CHECK_THROWS_AS(bad({1.0, 2.0, 3.0, 4.0}), DegenerateError);
    FieldHandle none = solve_implicit_fg(parse("x1"), parse("xb1"), seeded(0.0));
    CHECK_THROWS_AS(none({1.0, 2.0, 3.0, 4.0}), DegenerateError);
    CHECK_THROWS_AS(solve_implicit_fg(parse("phi + xb1"), parse("0"), seeded(0.0)), std::invalid_argument);
}

TEST_CASE("implicit solutions satisfy the complex Bateman equation")
{
    FieldHandle phi = solve_implicit_fg(parse("phi^3 + phi - x1*x2"), parse("sin(xb1) + xb2*phi^2"), seeded(0.0));
    std::mt19937_64 rng(10);
    int regular = 0;
    for (int i = 0; i < 100; ++i) {
        auto p = test::random_point(rng, 4, -0.5, 0.5);
        Jet2 j;
        try {
            j = phi(p);
        } catch (const NumericalError&) {
            continue;
        }
        ++regular;
        CHECK(res_complex_bateman(j).normalized <= 1e-9);
    }
    CHECK(regular >= 95);
}

TEST_CASE("holo_sum examples")
{
    FieldHandle a = holo_sum(parse("x1"), parse("xb1"));
    CHECK(a({0.3, 0.1, -0.2, 0.5}).dd(0, 2) == 0.0);
    FieldHandle b = holo_sum(parse("x1*x2"), parse("exp(xb1)"));
    std::mt19937_64 rng(2);
    for (int i = 0; i < 20; ++i) CHECK(res_complex_bateman(b(test::random_point(rng, 4))).normalized <= 1e-12);
    FieldHandle z = holo_sum(parse("0"), parse("0"));
    Jet2 zj = z({1.0, 2.0, 3.0, 4.0});
    CHECK(zj.value() == 0.0);
    CHECK(res_complex_bateman(zj).raw == 0.0);
}

TEST_CASE("parametric hodograph examples")
{
    HodographSolution h(parse("u^2"), parse("v^2"), seeded_uv(1.1, 1.9));
    auto tx = h.forward(1.0, 2.0);
    CHECK(tx[0] == Approx(6.0));
    CHECK(tx[1] == Approx(-5.0));
    auto uv = h.invert(6.0, -5.0);
    CHECK(uv[0] == Approx(1.0).epsilon(1e-12));
    CHECK(uv[1] == Approx(2.0).epsilon(1e-12));

    // Fold: u = v makes the Jacobian singular.
    CHECK_THROWS_AS(h.jets(4.0, -2.0, {1.0, 1.0}), NumericalError);
}

TEST_CASE("hodograph fields solve the companion equation")
{
    const std::pair<const char*, const char*> cases[] = {
        {"u^3", "v^2"}, {"exp(u)", "v^3"}, {"u^4 + u", "sin(v)"}};
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(0.6, 1.4), jitter(-0.02, 0.02);
    for (auto [f, g] : cases) {
        HodographSolution h(parse(f), parse(g), ImplicitSolveConfig{});
        for (int i = 0; i < 40; ++i) {
            const double u = d(rng), v = -d(rng);
            const auto tx = h.forward(u, v);
            const auto j = h.jets(tx[0], tx[1], {u + jitter(rng), v + jitter(rng)});
            CHECK(j[0].value() == Approx(u).epsilon(1e-10));
            CHECK(j[1].value() == Approx(v).epsilon(1e-10));
            // phi = v, phibar = u.
            CHECK(res_another_complex_bateman(j[1], j[0]).normalized <= 1e-9);
            CHECK(res_another_complex_bateman(j[1], j[0], true).normalized <= 1e-9);

            const auto back = h.forward(j[0].value(), j[1].value());
            CHECK(std::fabs(back[0] - tx[0]) <= 1e-10);
            CHECK(std::fabs(back[1] - tx[1]) <= 1e-10);

            const auto fw = h.forward_jets(u, v);
            CHECK(std::fabs(fw[1].d(1) + v * fw[0].d(1)) <= 1e-12 * (1 + std::fabs(fw[1].d(1))));
            CHECK(std::fabs(fw[1].d(0) + u * fw[0].d(0)) <= 1e-12 * (1 + std::fabs(fw[1].d(0))));
        }
    }
}

TEST_CASE("moebius speed transform")
{
    LinearMap2 id;
    CHECK(moebius_transform({0.3, -2.0}, id) == std::array<double, 2>{0.3, -2.0});
    LinearMap2 m{1.0, 0.0, 1.0, 1.0};
    CHECK(moebius_transform(2.5, m) == Approx(1.5));
    LinearMap2 pole{0.0, 1.0, 0.0, 1.0};
    CHECK_THROWS_AS(moebius_transform(0.0, pole), SingularityError);
}

TEST_CASE("linear maps carry solutions to solutions")
{
    HodographSolution h(parse("u^3"), parse("v^2"), seeded_uv(0.9, -1.1));
    FieldPair pr = h.fields();
    const std::vector<double> p{1.0, 0.5};
    const auto tx = h.forward(0.9, -1.1);

    FieldPair same = transform_solution(pr, LinearMap2{});
    const Jet2 a = pr.first({tx[0], tx[1]}), b = same.first({tx[0], tx[1]});
    CHECK(a.value() == b.value());
    CHECK(a.d(0) == b.d(0));
    CHECK(a.dd(0, 1) == b.dd(0, 1));
    CHECK_THROWS_AS(transform_solution(pr, LinearMap2{1.0, 2.0, 2.0, 4.0}), std::invalid_argument);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int i = 0; i < 10; ++i) {
        LinearMap2 m{1.0 + 0.3 * d(rng), 0.3 * d(rng), 0.3 * d(rng), 1.0 + 0.3 * d(rng), d(rng), d(rng)};
        FieldPair tp = transform_solution(pr, m);
        const auto tpxp = m.apply(tx[0], tx[1]);
        const Jet2 phi = tp.first({tpxp[0], tpxp[1]});
        const Jet2 bar = tp.second({tpxp[0], tpxp[1]});
        CHECK(res_another_complex_bateman(phi, bar).normalized <= 1e-9);

        const Jet2 phi0 = pr.first({tx[0], tx[1]});
        const double V = phi0.d(0) / phi0.d(1);
        CHECK(phi.d(0) / phi.d(1) == Approx(moebius_transform(V, m)).epsilon(1e-10));
    }
}

TEST_CASE("Born-Infeld gradient handle")
{
    GradientJet g = BornInfeldField::from_jets(Jet2::constant(4.0, 2), Jet2::constant(1.0, 2), 1.0);
    CHECK(g.phi_x == Approx(1.0));
    CHECK(g.phi_t == Approx(2.0));
    CHECK_THROWS_AS(BornInfeldField::from_jets(Jet2::constant(2.0, 2), Jet2::constant(2.0, 2), 1.0),
                    SingularityError);
    CHECK_THROWS_AS(BornInfeldField::from_jets(Jet2::constant(-2.0, 2), Jet2::constant(2.0, 2), 1.0),
                    SingularityError);
}

TEST_CASE("Born-Infeld residual is the integrability condition of the gradient formulas")
{
    // Symbolic oracle. With phi_x = A(u, v), phi_t = B(u, v) and the
    // hydrodynamic flow u_t = v u_x, v_t = u v_x:
    //   d_t A - d_x B = (v A_u - B_u) u_x + (u A_v - B_v) v_x,
    // which must vanish identically; then the second derivatives of phi
    // expressed through (u_x, v_x) must satisfy the residual formula.
    const ExprSpec A = parse("sqrt(L)/(sqrt(u) - sqrt(v))").with_vars({"u", "v", "L"});
    const ExprSpec B = parse("sqrt(L)*sqrt(u)*sqrt(v)/(sqrt(u) - sqrt(v))").with_vars({"u", "v", "L"});
    const ExprSpec Au = partial(A, "u"), Av = partial(A, "v"), Bu = partial(B, "u"), Bv = partial(B, "v");
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(0.2, 3.0), s(-2.0, 2.0);
    for (int i = 0; i < 50; ++i) {
        const double u = d(rng), v = d(rng), L = d(rng);
        if (std::fabs(std::sqrt(u) - std::sqrt(v)) < 0.05) continue;
        const std::vector<double> at{u, v, L};
        const double au = eval(Au, at), av = eval(Av, at), bu = eval(Bu, at), bv = eval(Bv, at);
        CHECK(std::fabs(v * au - bu) <= 1e-10 * (std::fabs(v * au) + std::fabs(bu)));
        CHECK(std::fabs(u * av - bv) <= 1e-10 * (std::fabs(u * av) + std::fabs(bv)));

        const double ux = s(rng), vx = s(rng);
        const double ut = v * ux, vt = u * vx;
        const double px = eval(A, at), pt = eval(B, at);
        const double ptt = bu * ut + bv * vt;
        const double pxx = au * ux + av * vx;
        const double pxt = bu * ux + bv * vx;
        const double terms[] = {px * px * ptt, pt * pt * pxx, -L * pxt, -2.0 * px * pt * pxt};
        double raw = 0.0, scale = 0.0;
        for (double t : terms) {
            raw += t;
            scale += std::fabs(t);
        }
        CHECK(std::fabs(raw) <= 1e-10 * scale);

        Jet2 phi(2, 0.0);
        phi.set_d(0, pt);
        phi.set_d(1, px);
        phi.set_dd(0, 0, ptt);
        phi.set_dd(1, 1, pxx);
        phi.set_dd(0, 1, pxt);
        CHECK(res_born_infeld(phi, L).raw == Approx(raw).epsilon(1e-12).scale(scale));

        // The literal form with phi_x^2 phi_tt repeated does not vanish.
        const double literal = 2.0 * px * px * ptt - L * pxt - 2.0 * px * pt * pxt;
        CHECK(std::fabs(literal) > 1e-6 * scale);
    }
}

TEST_CASE("Born-Infeld on hodograph-fed speeds")
{
    // Positive preimages: u in [2, 3], v in [0.3, 0.8].
    HodographSolution h(parse("u^3"), parse("v^4"), ImplicitSolveConfig{});
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> du(2.0, 3.0), dv(0.3, 0.8);
    for (int i = 0; i < 40; ++i) {
        const double u = du(rng), v = dv(rng);
        const auto tx = h.forward(u, v);
        const auto j = h.jets(tx[0], tx[1], {u, v});
        const GradientJet g = BornInfeldField::from_jets(j[0], j[1], 1.7);
        const double cross = std::fabs(g.phi_x_t - g.phi_t_x) / (std::fabs(g.phi_x_t) + std::fabs(g.phi_t_x));
        CHECK(cross <= 1e-9);
        CHECK(res_born_infeld(g.as_jet(), 1.7).normalized <= 1e-9);
    }
}

TEST_CASE("implicit_3d examples")
{
    FieldHandle none = implicit_3d(parse("1"), parse("0"), parse("0"), 2.0, seeded(0.0));
    CHECK_THROWS_AS(none({1.0, 2.0, 3.0}), DegenerateError);

    FieldHandle ratio = implicit_3d(parse("phi"), parse("1"), parse("0"), 0.0, seeded(0.0));
    Jet2 r = ratio({2.0, 3.0, 0.4});
    CHECK(r.value() == Approx(-1.5));
    CHECK(res_euclidean_3d(r).normalized <= 1e-9);

    FieldHandle q = implicit_3d(parse("1"), parse("phi"), parse("phi^2"), 1.0, seeded(1.0));
    const double phi = q({0.2, 0.3, 0.1}).value();
    CHECK(std::fabs(0.2 + 0.3 * phi + 0.1 * phi * phi - 1.0) <= 1e-12);
}

TEST_CASE("implicit_3d solutions and the first-order system")
{
    FieldHandle phi = implicit_3d(parse("phi^3 + 2*phi"), parse("cos(phi)"), parse("exp(0.5*phi)"), 1.0, seeded(0.0));
    std::mt19937_64 rng(7);
    int regular = 0;
    for (int i = 0; i < 60; ++i) {
        auto p = test::random_point(rng, 3, 0.2, 1.0);
        Jet2 j;
        try {
            j = phi(p);
        } catch (const NumericalError&) {
            continue;
        }
        ++regular;
        CHECK(res_euclidean_3d(j).normalized <= 1e-9);
        CHECK(res_euclidean_first_order(j, 0).normalized <= 1e-8);
        CHECK(res_euclidean_first_order(j, 1).normalized <= 1e-8);
    }
    CHECK(regular >= 55);
}

TEST_CASE("constructor jets converge to central differences")
{
    std::mt19937_64 rng(8);
    FieldHandle fg = solve_implicit_fg(parse("phi^3 + phi - x1*x2"), parse("sin(xb1) + xb2"), seeded(0.0));
    FieldHandle e3 = implicit_3d(parse("phi^3 + 2*phi"), parse("cos(phi)"), parse("1"), 0.5, seeded(0.0));
    HodographSolution h(parse("u^3"), parse("v^2"), seeded_uv(0.9, -1.1));
    for (int i = 0; i < 10; ++i) {
        auto c1 = fd_check(fg, test::random_point(rng, 4, -0.5, 0.5));
        INFO("fg " << c1.err_h << " " << c1.err_half);
        CHECK(c1.pass);
        auto c2 = fd_check(e3, test::random_point(rng, 3, 0.2, 1.0));
        INFO("3d " << c2.err_h << " " << c2.err_half);
        CHECK(c2.pass);
    }
    const auto tx = h.forward(0.9, -1.1);
    for (FieldHandle f : {h.phi(), h.phibar()}) {
        auto c = fd_check(f, {tx[0], tx[1]});
        INFO("hodograph " << c.err_h << " " << c.err_half);
        CHECK(c.pass);
    }
}

TEST_CASE("reparametrised constructions stay solutions")
{
    const ExprSpec h = parse("s^3 + s");
    std::mt19937_64 rng(9);
    FieldHandle fg = reparametrize(solve_implicit_fg(parse("phi^3 + phi - x1*x2"), parse("sin(xb1) + xb2*phi^2"), seeded(0.0)), h);
    FieldHandle e3 = reparametrize(implicit_3d(parse("phi"), parse("1"), parse("phi^2"), 2.0, seeded(0.5)), h);
    for (int i = 0; i < 20; ++i) {
        CHECK(res_complex_bateman(fg(test::random_point(rng, 4, -0.5, 0.5))).normalized <= 1e-9);
        CHECK(res_euclidean_3d(e3(test::random_point(rng, 3, 0.5, 1.0))).normalized <= 1e-9);
    }
    HodographSolution hs(parse("u^3"), parse("v^2"), seeded_uv(0.9, -1.1));
    const auto tx = hs.forward(0.9, -1.1);
    const Jet2 phi = reparametrize(hs.phi(), h)({tx[0], tx[1]});
    const Jet2 bar = reparametrize(hs.phibar(), parse("exp(s)"))({tx[0], tx[1]});
    CHECK(res_another_complex_bateman(phi, bar).normalized <= 1e-9);
}
