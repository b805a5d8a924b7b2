// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.

#include "bateman/construct.hpp"
#include "bateman/errors.hpp"
#include "bateman/expr.hpp"
#include "bateman/hydro.hpp"
#include "bateman/io.hpp"
#include "bateman/leznov.hpp"
#include "bateman/residuals.hpp"
#include "bateman/scenario.hpp"
#include "bateman/varlag.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace bateman;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Worst value seen against a bound, plus a count of skipped samples.
struct Tally {
    double worst = 0.0;
    int used = 0, skipped = 0;

    void add(double v) { worst = std::max(worst, std::isfinite(v) ? v : INFINITY), ++used; }
    bool within(double bound) const { return used > 0 && worst <= bound && skipped * 5 <= used + skipped; }
};

std::string sci(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
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

// Samples a field over a box; NumericalError counts as a skipped point.
Tally sweep_field(const FieldHandle& f, int count, double lo, double hi, std::uint64_t seed,
                  const std::function<std::vector<double>(const Jet2&)>& residuals)
{
    std::mt19937_64 rng(seed);
    Tally t;
    for (int i = 0; i < count; ++i) {
        const auto p = test::random_point(rng, static_cast<std::size_t>(f.arity()), lo, hi);
        Jet2 j;
        try {
            j = f(p);
        } catch (const NumericalError&) {
            ++t.skipped;
            continue;
        }
        for (double r : residuals(j)) t.add(r);
    }
    return t;
}

const std::pair<const char*, const char*> kFG[] = {
    {"phi^3 + phi - x1*x2", "sin(xb1) + xb2*phi^2"},
    {"phi + 0.2*phi^3 - x1", "xb1*xb2 + 0.1*exp(phi)"},
    {"phi + sin(phi)/3 - x1*x2 - x2", "cos(xb1) - 1 + xb2^3"},
    {"phi^3 + 2*phi + x1^2 - x2", "xb1 - xb2*phi^2"},
    {"exp(phi) - 1 - x1 + x2*phi", "xb1^2 - xb2 + 0.5*xb1*phi"},
};

const std::pair<const char*, const char*> kHodo[] = {
    {"u^3", "v^2"}, {"exp(u)", "v^3"}, {"u^4 + u", "sin(v)"}, {"u^2", "cos(v)"}, {"u*log(u)", "v^4"},
};

Outcome implicit_solutions()
{
    Outcome o;
    for (auto [F, G] : kFG) {
        const FieldHandle phi = solve_implicit_fg(parse(F), parse(G), seeded(0.0));
        const Tally t = sweep_field(phi, 200, -0.5, 0.5, 1, [](const Jet2& j) {
            return std::vector{res_complex_bateman(j).normalized};
        });
        o.pass = o.pass && t.within(1e-9);
        o.detail += sci(t.worst) + "(" + std::to_string(t.skipped) + " skipped) ";
    }
    return o;
}

Outcome holomorphic_sums()
{
    const std::pair<const char*, const char*> fg[] = {
        {"x1 + 2*x2", "3*xb1 - xb2"}, {"x1*x2", "exp(xb1)"}, {"sin(x1)*cos(x2)", "xb1^3 + xb2"},
        {"x1/(2 + x2)", "sqrt(2 + xb1*xb2)"}, {"log(3 + x1 + x2^2)", "exp(xb2)*sin(xb1)"}};
    Outcome o;
    double worst = 0.0;
    for (auto [f, g] : fg) {
        const Tally t = sweep_field(holo_sum(parse(f), parse(g)), 200, -0.5, 0.5, 2, [](const Jet2& j) {
            return std::vector{res_complex_bateman(j).normalized};
        });
        o.pass = o.pass && t.within(1e-12);
        worst = std::max(worst, t.worst);
    }
    o.detail = "max " + sci(worst);
    return o;
}

Outcome hodograph_solutions()
{
    Outcome o;
    double eq = 0.0, ident = 0.0, trip = 0.0;
    int skipped = 0, used = 0;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(0.6, 1.4);
    for (auto [f, g] : kHodo) {
        const HodographSolution h(parse(f), parse(g), ImplicitSolveConfig{});
        for (int i = 0; i < 100; ++i) {
            const double u = d(rng), v = -d(rng);
            const auto tx = h.forward(u, v);
            std::array<Jet2, 2> j;
            try {
                j = h.jets(tx[0], tx[1], {1.01 * u, 1.01 * v});
            } catch (const NumericalError&) {
                ++skipped;
                continue;
            }
            ++used;
            eq = std::max({eq, res_another_complex_bateman(j[1], j[0]).normalized,
                           res_another_complex_bateman(j[1], j[0], true).normalized});
            // x_u = -u t_u, x_v = -v t_v, read off the forward map.
            const auto fw = h.forward_jets(u, v);
            ident = std::max({ident, ResidualSample::from_terms({fw[1].d(0), u * fw[0].d(0)}).normalized,
                              ResidualSample::from_terms({fw[1].d(1), v * fw[0].d(1)}).normalized});
            const auto back = h.forward(j[0].value(), j[1].value());
            trip = std::max({trip, std::fabs(back[0] - tx[0]), std::fabs(back[1] - tx[1])});
        }
    }
    o.pass = eq <= 1e-9 && ident <= 1e-12 && trip <= 1e-10 && skipped * 5 <= used + skipped;
    o.detail = "eq " + sci(eq) + ", identities " + sci(ident) + ", round trip " + sci(trip);
    return o;
}

Outcome covariance()
{
    Outcome o;
    const char* hs[] = {"s^3 + s", "exp(s)", "(exp(2*s) - 1)/(exp(2*s) + 1)"};
    double worst = 0.0;
    const FieldHandle base = solve_implicit_fg(parse(kFG[0].first), parse(kFG[0].second), seeded(0.0));
    const FieldHandle e3 = implicit_3d(parse("phi^3 + 2*phi"), parse("cos(phi)"), parse("exp(0.5*phi)"), 1.0, seeded(0.0));
    for (const char* h : hs) {
        const Tally t = sweep_field(reparametrize(base, parse(h)), 100, -0.5, 0.5, 4, [](const Jet2& j) {
            return std::vector{res_complex_bateman(j).normalized};
        });
        const Tally t3 = sweep_field(reparametrize(e3, parse(h)), 100, 0.2, 1.0, 4, [](const Jet2& j) {
            return std::vector{res_euclidean_3d(j).normalized};
        });
        o.pass = o.pass && t.within(1e-9) && t3.within(1e-9);
        worst = std::max({worst, t.worst, t3.worst});
    }

    // Ten random linear maps acting on a hodograph solution.
    const HodographSolution sol(parse("u^3"), parse("v^2"), ImplicitSolveConfig{});
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<LinearMap2> maps;
    for (int i = 0; i < 10; ++i) {
        maps.push_back({1.0 + 0.3 * d(rng), 0.3 * d(rng), 0.3 * d(rng), 1.0 + 0.3 * d(rng), d(rng), d(rng)});
    }
    double moeb = 0.0;
    for (auto [u, v] : {std::pair{0.9, -1.1}, std::pair{1.2, -0.8}, std::pair{0.7, -1.3}}) {
        const std::array<double, 2> seed{1.01 * u, 1.01 * v};
        const FieldPair pr{FieldHandle(2, "phi", [&sol, seed](std::span<const double> p) { return sol.jets(p[0], p[1], seed)[1]; }),
                           FieldHandle(2, "phibar", [&sol, seed](std::span<const double> p) { return sol.jets(p[0], p[1], seed)[0]; })};
        const auto tx = sol.forward(u, v);
        const Jet2 phi0 = pr.first({tx[0], tx[1]});
        for (const auto& m : maps) {
            const FieldPair tp = transform_solution(pr, m);
            const auto q = m.apply(tx[0], tx[1]);
            const Jet2 phi = tp.first({q[0], q[1]}), bar = tp.second({q[0], q[1]});
            worst = std::max({worst, res_another_complex_bateman(phi, bar).normalized,
                              res_another_complex_bateman(reparametrize(tp.first, parse(hs[0]))({q[0], q[1]}),
                                                          reparametrize(tp.second, parse(hs[1]))({q[0], q[1]}))
                                  .normalized});
            const double V = moebius_transform(phi0.d(0) / phi0.d(1), m);
            moeb = std::max(moeb, std::fabs(phi.d(0) / phi.d(1) - V) / (1.0 + std::fabs(V)));
        }
    }
    o.pass = o.pass && worst <= 1e-9 && moeb <= 1e-9;
    o.detail = "residuals " + sci(worst) + ", speed transform " + sci(moeb);
    return o;
}

Outcome conservation_hierarchy()
{
    auto run = [](int nx) {
        CharGridSpec s;
        s.nx = nx;
        s.t_end = 0.5;
        return integrate_characteristics(parse("1 + 0.3*sin(x)"), parse("-1 + 0.2*cos(x)"), s);
    };
    const CharGrid a = run(128), b = run(256);
    Outcome o;
    double worst_ratio = INFINITY, worst = 0.0;
    for (int n = 1; n <= 5; ++n) {
        const double da = conservation_drift(a, n), db = conservation_drift(b, n);
        worst = std::max(worst, da / (a.h * a.h));
        worst_ratio = std::min(worst_ratio, da / db);
        o.pass = o.pass && da <= 5.0 * a.h * a.h && da >= 3.5 * db;
    }
    o.detail = "max drift/h^2 " + sci(worst) + ", min halving ratio " + sci(worst_ratio);
    return o;
}

Outcome born_infeld()
{
    Outcome o;
    // Symbolic oracle: with phi_x = A(u, v), phi_t = B(u, v) and u_t = v u_x,
    // v_t = u v_x, cross-derivative equality needs v A_u = B_u and
    // u A_v = B_v; the second derivatives then satisfy the residual.
    const ExprSpec A = parse("sqrt(L)/(sqrt(u) - sqrt(v))").with_vars({"u", "v", "L"});
    const ExprSpec B = parse("sqrt(L)*sqrt(u)*sqrt(v)/(sqrt(u) - sqrt(v))").with_vars({"u", "v", "L"});
    const ExprSpec Au = partial(A, "u"), Av = partial(A, "v"), Bu = partial(B, "u"), Bv = partial(B, "v");
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(0.2, 3.0), s(-2.0, 2.0);
    double oracle = 0.0, formula = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double u = d(rng), v = d(rng), L = d(rng);
        if (std::fabs(std::sqrt(u) - std::sqrt(v)) < 0.05) continue;
        const std::vector<double> at{u, v, L};
        const double au = eval(Au, at), av = eval(Av, at), bu = eval(Bu, at), bv = eval(Bv, at);
        oracle = std::max({oracle, std::fabs(v * au - bu) / (std::fabs(v * au) + std::fabs(bu)),
                           std::fabs(u * av - bv) / (std::fabs(u * av) + std::fabs(bv))});
        const double ux = s(rng), vx = s(rng);
        const double px = eval(A, at), pt = eval(B, at);
        Jet2 phi(2, 0.0);
        phi.set_d(0, pt);
        phi.set_d(1, px);
        phi.set_dd(0, 0, bu * v * ux + bv * u * vx);
        phi.set_dd(1, 1, au * ux + av * vx);
        phi.set_dd(0, 1, bu * ux + bv * vx);
        formula = std::max(formula, res_born_infeld(phi, L).normalized);
    }

    const HodographSolution h(parse("u^3"), parse("v^4"), ImplicitSolveConfig{});
    std::uniform_real_distribution<double> du(2.0, 3.0), dv(0.3, 0.8);
    double cross = 0.0, res = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double u = du(rng), v = dv(rng);
        const auto tx = h.forward(u, v);
        const auto j = h.jets(tx[0], tx[1], {u, v});
        const GradientJet g = BornInfeldField::from_jets(j[0], j[1], 1.7);
        cross = std::max(cross, std::fabs(g.phi_x_t - g.phi_t_x) / (std::fabs(g.phi_x_t) + std::fabs(g.phi_t_x)));
        res = std::max(res, res_born_infeld(g.as_jet(), 1.7).normalized);
    }
    o.pass = oracle <= 1e-10 && formula <= 1e-10 && cross <= 1e-9 && res <= 1e-9;
    o.detail = "oracle " + sci(std::max(oracle, formula)) + ", integrability " + sci(cross) + ", residual " + sci(res);
    return o;
}

Outcome leznov()
{
    const LeznovSystem s2(2, {parse("phi + 0.3*phi^3 - x1 - x2*phi^2")}, {parse("xb1*exp(0.2*phi) + xb2*phi")});
    const LeznovSystem s3(3, {parse("phi1 + 0.2*phi1^3 - x1 - x3*phi2"), parse("phi2 + 0.1*phi2^3 - x2 + x3*sin(phi1)")},
                          {parse("xb1 + xb3*phi2^2"), parse("xb2 + 0.3*sin(xb2) + xb3*phi1")});
    Outcome o;
    double root = 0.0, ops = 0.0, zc = 0.0, cb = 0.0;
    std::mt19937_64 rng(7);
    for (const LeznovSystem* sys : {&s2, &s3}) {
        std::vector<std::vector<double>> pts;
        for (int i = 0; i < 50; ++i) pts.push_back(test::random_point(rng, static_cast<std::size_t>(sys->coords()), -0.4, 0.4));
        for (const auto& p : pts) {
            const auto sol = solve_constraints(*sys, p);
            // Independent root check: evaluate Q - P directly.
            std::vector<double> qa(sol.phi), pa(sol.phi);
            for (int k = 0; k < sys->n(); ++k) {
                qa.push_back(p[static_cast<std::size_t>(k)]);
                pa.push_back(p[static_cast<std::size_t>(sys->n() + k)]);
            }
            for (int k = 0; k < sys->unknowns(); ++k) {
                root = std::max(root, std::fabs(eval(sys->Q()[static_cast<std::size_t>(k)], qa) -
                                                eval(sys->P()[static_cast<std::size_t>(k)], pa)));
            }
            const SpeedValues sv = speed_values(speed_jets(*sys, sol, p));
            for (const Jet2& phi : sol.jets) {
                ops = std::max({ops, apply_D(phi, sv, LeznovOperator::D, SpeedBinding::v_on_x_block).normalized,
                                apply_D(phi, sv, LeznovOperator::Dbar, SpeedBinding::v_on_x_block).normalized});
            }
            if (sys->n() == 2) cb = std::max(cb, res_complex_bateman(sol.jets[0]).normalized);
        }
        const auto r = verify_zero_curvature(derive_speeds(*sys), pts, SpeedBinding::v_on_x_block);
        zc = std::max(zc, r.max_norm);
        o.pass = o.pass && r.samples > 0 && r.skipped_singular == 0;
    }
    o.pass = o.pass && root <= 1e-12 && ops <= 1e-8 && zc <= 1e-8 && cb <= 1e-8;
    o.detail = "|Q-P| " + sci(root) + ", D/Dbar " + sci(ops) + ", curvature " + sci(zc) + ", n=2 bateman " + sci(cb);
    return o;
}

Outcome multifield()
{
    Outcome o;
    const std::vector<std::string> c{"x1", "x2", "x3"};
    auto det_at = [&](const char* a, const char* b, const char* p, const char* q, const std::vector<double>& x) {
        const Jet2 A = field_from_expr(parse(a), c)(x), B = field_from_expr(parse(b), c)(x);
        const Jet2 P = field_from_expr(parse(p), c)(x), Q = field_from_expr(parse(q), c)(x);
        return std::max(std::fabs(res_multifield_det(A, B, P, Q, 1).raw), std::fabs(res_multifield_det(A, B, P, Q, 2).raw));
    };
    std::mt19937_64 rng(8);
    double exact = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto x = test::random_point(rng, 3);
        exact = std::max(exact, det_at("x1 + 2*x2 - x3", "3*x1 - x2", "x2 + x3", "2*x1 - x3", x));
        exact = std::max(exact, det_at("x1^2 + x2*x3", "sin(x1)*x3", "x2*x3 + x1", "0.5", x));
    }
    const std::array<ExprSpec, 4> init{parse("0.4*sin(x2) + 0.1*cos(x3)"), parse("0.3*cos(x3) - 0.1*sin(x2)"),
                                       parse("0.35*cos(x2 + x3)"), parse("0.25*sin(x2) + 0.2*sin(x3)")};
    MultiGridSpec s;
    s.t_end = 0.4;
    s.n = 32;
    const MultiCharGrid g1 = integrate_multifield(init, s);
    s.n = 64;
    const MultiCharGrid g2 = integrate_multifield(init, s);
    const double K1 = multifield_det_residual(g1).normalized() / (g1.h * g1.h);
    const double K2 = multifield_det_residual(g2).normalized() / (g2.h * g2.h);
    o.pass = exact == 0.0 && K1 <= 5.0 && K2 <= 5.0 && K2 / K1 >= 0.8 && K2 / K1 <= 1.25;
    o.detail = "exact cases " + sci(exact) + ", K " + sci(K1) + " -> " + sci(K2);
    return o;
}

Outcome variational()
{
    Outcome o;
    const HodographSolution sol(parse("u^3"), parse("v^2"), ImplicitSolveConfig{});
    const char* Hs[] = {"p/q", "p^2/(p^2 + q^2)", "exp(p/q)"};
    double worst = 0.0;
    for (const char* W : {"phibar", "phibar^3"}) {
        const int n = 21;
        const double h = 0.2 / (n - 1);
        const FieldGrid g = hodograph_field_grid(sol, parse(W), 0.13, -2.768, h, h, n, n, {0.9, -1.1});
        for (const char* H : Hs) {
            const DegeneracyReport r = onshell_degeneracy(DiscreteFunctional(parse(H)), g, parse(W));
            o.pass = o.pass && r.pass() && r.psi <= 5 * h * h && r.phibar <= 5 * h * h && r.phi <= 5 * h * h;
            worst = std::max(worst, r.stationarity() / (h * h));
        }
    }
    // Degree-zero factors are accepted, others rejected.
    o.pass = o.pass && degree0_test(parse(Hs[1])) && degree0_test(parse(Hs[2])) && !degree0_test(parse("p"));
    o.detail = "max stationarity/h^2 " + sci(worst);
    return o;
}

Outcome euclidean()
{
    struct Triple {
        const char *F, *G, *K;
        double c, seed;
    };
    const Triple ts[] = {{"phi", "1", "0", 0.0, 0.0},
                         {"1", "phi", "phi^2", 1.0, 1.0},
                         {"phi^3 + 2*phi", "cos(phi)", "exp(0.5*phi)", 1.0, 0.0},
                         {"exp(phi)", "phi", "sin(phi)", 2.0, 0.0}};
    Outcome o;
    double e3 = 0.0, fo = 0.0;
    for (const auto& t : ts) {
        const FieldHandle f = implicit_3d(parse(t.F), parse(t.G), parse(t.K), t.c, seeded(t.seed));
        const Tally a = sweep_field(f, 200, 0.2, 1.0, 10, [](const Jet2& j) { return std::vector{res_euclidean_3d(j).normalized}; });
        const Tally b = sweep_field(f, 200, 0.2, 1.0, 10, [](const Jet2& j) {
            return std::vector{res_euclidean_first_order(j, 0).normalized, res_euclidean_first_order(j, 1).normalized};
        });
        o.pass = o.pass && a.within(1e-9) && b.within(1e-8);
        e3 = std::max(e3, a.worst);
        fo = std::max(fo, b.worst);
    }
    o.detail = "second order " + sci(e3) + ", first-order system " + sci(fo);
    return o;
}

Outcome jets_vs_fd()
{
    test::ExprGenerator gen(20260515);
    std::mt19937_64 rng(11);
    int ok = 0, roundoff = 0;
    for (int i = 0; i < 500; ++i) {
        const ExprSpec e = parse(gen.next(3)).with_vars({"a", "b", "c"});
        const auto p = test::random_point(rng, 3, -0.9, 0.9);
        const Jet2 ad = eval_jet(e, test::seeds(p));
        auto value = [&](const std::vector<double>& q) { return eval(e, q); };
        const auto c = test::check_second_order(ad, value, p, 1e-2);
        ok += c.pass;
        roundoff += c.roundoff_limited;
    }
    return {ok == 500, std::to_string(ok) + "/500 second order (" + std::to_string(roundoff) + " at round-off floor)"};
}

Outcome determinism()
{
    const fs::path root = fs::temp_directory_path() / "bateman_acceptance_determinism";
    fs::remove_all(root);
    RunOptions a, b;
    a.out_dir = (root / "a").string();
    b.out_dir = (root / "b").string();
    const SuiteResult ra = run_suite(default_scenario_dir(), a, 1);
    const SuiteResult rb = run_suite(default_scenario_dir(), b, 4);
    int compared = 0, differ = 0;
    for (const auto& r : ra.rows) {
        const std::string rel = r.name + "/" + r.name + ".report.json";
        const std::string x = read_text((root / "a" / rel).string()), y = read_text((root / "b" / rel).string());
        ++compared;
        differ += x != y;
    }
    fs::remove_all(root);
    return {differ == 0 && compared > 0 && ra.table == rb.table && ra.exit_code == 0,
            std::to_string(compared) + " reports, " + std::to_string(differ) + " differ, suite exit " +
                std::to_string(ra.exit_code)};
}

}  // namespace

int main()
{
    struct Criterion {
        const char* name;
        Outcome (*run)();
    };
    const Criterion criteria[] = {
        {"implicit constraint solutions of the complex Bateman equation", implicit_solutions},
        {"holomorphic plus antiholomorphic sums", holomorphic_sums},
        {"hodograph solutions, identities and round trip", hodograph_solutions},
        {"reparametrization and linear-map covariance", covariance},
        {"conservation hierarchy drift and h-halving", conservation_hierarchy},
        {"Born-Infeld substitution", born_infeld},
        {"constrained construction for n = 2 and n = 3", leznov},
        {"multi-field determinant", multifield},
        {"singular Lagrangian variational suite", variational},
        {"Euclidean equation and first-order system", euclidean},
        {"jets against finite differences", jets_vs_fd},
        {"suite determinism", determinism},
    };
    int failed = 0, id = 0;
    for (const auto& c : criteria) {
        ++id;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("%s %2d  %-62s %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", id, c.name, o.detail.c_str(), secs);
    }
    std::printf("%d/%d criteria passed\n", id - failed, id);
    return failed == 0 ? 0 : 1;
}
