#include "bateman/construct.hpp"

#include "bateman/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace bateman {

namespace {

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

ExprSpec bind(const ExprSpec& e, std::vector<std::string> vars, const char* what)
{
    try {
        return e.with_vars(std::move(vars));
    } catch (const std::invalid_argument& err) {
        throw std::invalid_argument(std::string(what) + ": " + err.what());
    }
}

// Expression in one named variable evaluated on a jet argument. Constant
// expressions still get the argument's arity.
Jet2 eval1(const ExprSpec& e, const Jet2& arg)
{
    const Jet2 args[] = {arg};
    return eval_jet(e, args);
}

double eval1(const ExprSpec& e, double x)
{
    const double args[] = {x};
    return eval(e, args);
}

}  // namespace

std::array<double, 2> LinearMap2::apply(double t, double x) const
{
    return {a * t + b * x + shift_t, c * t + d * x + shift_x};
}

std::array<double, 2> LinearMap2::inverse_apply(double tp, double xp) const
{
    const double D = det();
    if (D == 0.0) throw std::invalid_argument("LinearMap2: map is not invertible");
    const double s = tp - shift_t, y = xp - shift_x;
    return {(d * s - b * y) / D, (-c * s + a * y) / D};
}

// ---------------------------------------------------------------------------

FieldHandle solve_implicit_fg(const ExprSpec& F, const ExprSpec& G, const ImplicitSolveConfig& cfg)
{
    cfg.validate();
    const ExprSpec f = bind(F, {"phi", "x1", "x2"}, "solve_implicit_fg: F");
    const ExprSpec g = bind(G, {"phi", "xb1", "xb2"}, "solve_implicit_fg: G");
    const bool depends = F.has_var("phi") || G.has_var("phi");
    const std::string label = "implicit F=G [F=" + F.to_string() + ", G=" + G.to_string() +
                              "; root: " + cfg.describe() + "]";

    return FieldHandle(4, label, [f, g, cfg, depends](std::span<const double> p) {
        if (!depends) throw DegenerateError("solve_implicit_fg: constraint does not depend on phi");
        auto constraint = [&](double phi) {
            const Jet2 fa[] = {jet_var(0, phi, 1), Jet2::constant(p[0], 1), Jet2::constant(p[1], 1)};
            const Jet2 ga[] = {jet_var(0, phi, 1), Jet2::constant(p[2], 1), Jet2::constant(p[3], 1)};
            const Jet2 fj = eval_jet(f, fa);
            const Jet2 gj = eval_jet(g, ga);
            return ScalarEval{fj.value() - gj.value(), fj.d(0) - gj.d(0),
                              std::fabs(fj.value()) + std::fabs(gj.value())};
        };
        const double phi = newton_scalar(constraint, cfg);

        ConstraintJets cj(1, 4);  // variables (phi, x1, x2, xb1, xb2)
        const Jet2 fa[] = {jet_var(0, phi, 3), jet_var(1, p[0], 3), jet_var(2, p[1], 3)};
        const Jet2 ga[] = {jet_var(0, phi, 3), jet_var(1, p[2], 3), jet_var(2, p[3], 3)};
        cj.add_block(0, eval_jet(f, fa), {0, 1, 2});
        cj.add_block(0, eval_jet(g, ga), {0, 3, 4}, -1.0);
        Jet2 r = cj.solve_jets(cfg.degenerate_rel)[0];
        r.set_value(phi);
        return r;
    });
}

FieldHandle holo_sum(const ExprSpec& f, const ExprSpec& g)
{
    const ExprSpec fb = bind(f, {"x1", "x2"}, "holo_sum: f");
    const ExprSpec gb = bind(g, {"xb1", "xb2"}, "holo_sum: g");
    return FieldHandle(4, "holo_sum[" + f.to_string() + " + " + g.to_string() + "]",
                       [fb, gb](std::span<const double> p) {
                           const Jet2 fa[] = {jet_var(0, p[0], 4), jet_var(1, p[1], 4)};
                           const Jet2 ga[] = {jet_var(2, p[2], 4), jet_var(3, p[3], 4)};
                           return eval_jet(fb, fa) + eval_jet(gb, ga);
                       });
}

// ---------------------------------------------------------------------------

HodographSolution::HodographSolution(const ExprSpec& f, const ExprSpec& g, ImplicitSolveConfig cfg)
    : f_(bind(f, {"u"}, "hodograph: f")),
      g_(bind(g, {"v"}, "hodograph: g")),
      f1_(partial(f_, "u")),
      g1_(partial(g_, "v")),
      f2_(partial(f1_, "u")),
      g2_(partial(g1_, "v")),
      cfg_(std::move(cfg))
{
    cfg_.validate();
    if (!cfg_.seed_vec.empty() && cfg_.seed_vec.size() != 2) {
        throw std::invalid_argument("hodograph: seed_vec must hold (u, v)");
    }
}

std::array<double, 2> HodographSolution::default_seed() const
{
    if (cfg_.seed_vec.size() == 2) return {cfg_.seed_vec[0], cfg_.seed_vec[1]};
    return {cfg_.seed, cfg_.seed + 1.0};
}

std::array<double, 2> HodographSolution::forward(double u, double v) const
{
    const double fu = eval1(f_, u), f1 = eval1(f1_, u);
    const double gv = eval1(g_, v), g1 = eval1(g1_, v);
    return {f1 + g1, fu - u * f1 + gv - v * g1};
}

std::array<Jet2, 2> HodographSolution::forward_jets(double u, double v) const
{
    const Jet2 U = jet_var(0, u, 2), V = jet_var(1, v, 2);
    const Jet2 f1 = eval1(f1_, U), g1 = eval1(g1_, V);
    return {f1 + g1, eval1(f_, U) - U * f1 + eval1(g_, V) - V * g1};
}

std::array<double, 2> HodographSolution::invert(double t, double x) const
{
    return invert(t, x, default_seed());
}

std::array<double, 2> HodographSolution::invert(double t, double x, std::array<double, 2> seed) const
{
    auto system = [&](std::span<const double> y) {
        const double u = y[0], v = y[1];
        const double f1 = eval1(f1_, u), g1 = eval1(g1_, v);
        const double f2 = eval1(f2_, u), g2 = eval1(g2_, v);
        const double fu = eval1(f_, u), gv = eval1(g_, v);
        VectorEval e;
        e.value = {f1 + g1 - t, fu - u * f1 + gv - v * g1 - x};
        // d/du (f - u f') = -u f''.
        e.jacobian = {f2, g2, -u * f2, -v * g2};
        e.scale = std::fabs(t) + std::fabs(x);
        return e;
    };
    const auto y = newton_vector(system, {seed[0], seed[1]}, cfg_);
    return {y[0], y[1]};
}

std::array<Jet2, 2> HodographSolution::jets(double t, double x, std::array<double, 2> seed) const
{
    const auto uv = invert(t, x, seed);
    // Variables (u, v, t, x); constraints T(u, v) - t = 0, X(u, v) - x = 0.
    const auto fw = forward_jets(uv[0], uv[1]);
    ConstraintJets cj(2, 2);
    cj.add_block(0, fw[0], {0, 1});
    cj.add_block(0, jet_var(0, t, 1), {2}, -1.0);
    cj.add_block(1, fw[1], {0, 1});
    cj.add_block(1, jet_var(0, x, 1), {3}, -1.0);
    auto out = cj.solve_jets(cfg_.degenerate_rel);
    out[0].set_value(uv[0]);
    out[1].set_value(uv[1]);
    return {out[0], out[1]};
}

FieldHandle HodographSolution::phi() const
{
    HodographSolution self = *this;
    return FieldHandle(2, "hodograph v [f=" + f_.to_string() + ", g=" + g_.to_string() + "; " + cfg_.describe() + "]",
                       [self](std::span<const double> p) { return self.jets(p[0], p[1], self.default_seed())[1]; });
}

FieldHandle HodographSolution::phibar() const
{
    HodographSolution self = *this;
    return FieldHandle(2, "hodograph u [f=" + f_.to_string() + ", g=" + g_.to_string() + "; " + cfg_.describe() + "]",
                       [self](std::span<const double> p) { return self.jets(p[0], p[1], self.default_seed())[0]; });
}

FieldPair parametric_hodograph(const ExprSpec& f, const ExprSpec& g, const ImplicitSolveConfig& cfg)
{
    return HodographSolution(f, g, cfg).fields();
}

// ---------------------------------------------------------------------------

double moebius_transform(double u, const LinearMap2& map)
{
    const double den = map.a - map.b * u;
    if (den == 0.0) throw SingularityError("moebius pole", u);
    return (map.d * u - map.c) / den;
}

std::array<double, 2> moebius_transform(std::array<double, 2> uv, const LinearMap2& map)
{
    return {moebius_transform(uv[0], map), moebius_transform(uv[1], map)};
}

FieldHandle transform_field(const FieldHandle& field, const LinearMap2& map)
{
    if (field.arity() != 2) throw std::invalid_argument("transform_field: field must live on (t, x)");
    const double D = map.det();
    if (D == 0.0) throw std::invalid_argument("transform_field: map is not invertible");
    // Rows of the inverse linear part: d(t, x)/d(t', x').
    const double it_t = map.d / D, it_x = -map.b / D;
    const double ix_t = -map.c / D, ix_x = map.a / D;
    return FieldHandle(2, "linear(" + field.label() + ")", [field, map, it_t, it_x, ix_t, ix_x](std::span<const double> p) {
        const auto tx = map.inverse_apply(p[0], p[1]);
        const Jet2 outer = field({tx[0], tx[1]});
        Jet2 T(2, tx[0]), X(2, tx[1]);
        T.set_d(0, it_t);
        T.set_d(1, it_x);
        X.set_d(0, ix_t);
        X.set_d(1, ix_x);
        const Jet2 inner[] = {T, X};
        return jet_compose(outer, inner);
    });
}

FieldPair transform_solution(const FieldPair& pair, const LinearMap2& map)
{
    return {transform_field(pair.first, map), transform_field(pair.second, map)};
}

// ---------------------------------------------------------------------------

Jet2 GradientJet::as_jet() const
{
    Jet2 j(2, 0.0);
    j.set_d(0, phi_t);
    j.set_d(1, phi_x);
    j.set_dd(0, 0, phi_tt);
    j.set_dd(1, 1, phi_xx);
    j.set_dd(0, 1, 0.5 * (phi_x_t + phi_t_x));
    return j;
}

BornInfeldField::BornInfeldField(FieldHandle u, FieldHandle v, double lambda)
    : u_(std::move(u)), v_(std::move(v)), lambda_(lambda)
{
    if (!(lambda > 0.0)) throw std::invalid_argument("born_infeld_field: lambda must be positive");
    if (u_.arity() != 2 || v_.arity() != 2) throw std::invalid_argument("born_infeld_field: u, v must live on (t, x)");
}

GradientJet BornInfeldField::from_jets(const Jet2& u, const Jet2& v, double lambda)
{
    if (!(u.value() > 0.0)) throw SingularityError("born_infeld u", u.value());
    if (!(v.value() > 0.0)) throw SingularityError("born_infeld v", v.value());
    const Jet2 su = sqrt(u), sv = sqrt(v);
    const Jet2 den = su - sv;
    if (den.value() == 0.0) throw SingularityError("born_infeld coincident roots", u.value());
    const double sl = std::sqrt(lambda);
    const Jet2 A = sl / den;            // phi_x
    const Jet2 B = sl * su * sv / den;  // phi_t
    GradientJet g;
    g.phi_t = B.value();
    g.phi_x = A.value();
    g.phi_tt = B.d(0);
    g.phi_t_x = B.d(1);
    g.phi_x_t = A.d(0);
    g.phi_xx = A.d(1);
    return g;
}

GradientJet BornInfeldField::operator()(std::span<const double> point) const
{
    return from_jets(u_(point), v_(point), lambda_);
}

BornInfeldField born_infeld_field(const FieldHandle& u, const FieldHandle& v, double lambda)
{
    return BornInfeldField(u, v, lambda);
}

// ---------------------------------------------------------------------------

FieldHandle implicit_3d(const ExprSpec& F, const ExprSpec& G, const ExprSpec& K, double c,
                        const ImplicitSolveConfig& cfg)
{
    cfg.validate();
    const ExprSpec fs[] = {bind(F, {"phi"}, "implicit_3d: F"), bind(G, {"phi"}, "implicit_3d: G"),
                           bind(K, {"phi"}, "implicit_3d: K")};
    std::vector<ExprSpec> specs(std::begin(fs), std::end(fs));
    const bool depends = F.has_var("phi") || G.has_var("phi") || K.has_var("phi");
    const std::string label = "implicit tF+xG+yK=c [F=" + F.to_string() + ", G=" + G.to_string() +
                              ", K=" + K.to_string() + "; root: " + cfg.describe() + "]";

    return FieldHandle(3, label, [specs, c, cfg, depends](std::span<const double> p) {
        if (!depends) throw DegenerateError("implicit_3d: constraint does not depend on phi");
        auto constraint = [&](double phi) {
            ScalarEval e;
            e.value = -c;
            e.scale = std::fabs(c);
            const Jet2 ph = jet_var(0, phi, 1);
            for (int i = 0; i < 3; ++i) {
                const Jet2 fi = eval1(specs[idx(i)], ph);
                e.value += p[idx(i)] * fi.value();
                e.derivative += p[idx(i)] * fi.d(0);
                e.scale += std::fabs(p[idx(i)] * fi.value());
            }
            return e;
        };
        const double phi = newton_scalar(constraint, cfg);

        // Variables (phi, t, x, y); one block per coordinate term.
        ConstraintJets cj(1, 3);
        const Jet2 ph = jet_var(0, phi, 4);
        for (int i = 0; i < 3; ++i) {
            const Jet2 term = jet_var(i + 1, p[idx(i)], 4) * eval1(specs[idx(i)], ph);
            cj.add_block(0, term, {0, 1, 2, 3});
        }
        cj.add_block(0, Jet2(0, c), std::span<const int>{}, -1.0);
        Jet2 r = cj.solve_jets(cfg.degenerate_rel)[0];
        r.set_value(phi);
        return r;
    });
}

}  // namespace bateman
