#include "bateman/leznov.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bateman {

namespace {

std::size_t uz(int i) { return static_cast<std::size_t>(i); }

std::vector<std::string> block_names(const char* prefix, int n)
{
    std::vector<std::string> out;
    for (int i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

ExprSpec bind_vars(const ExprSpec& e, std::vector<std::string> vars, const std::string& what)
{
    try {
        return e.with_vars(std::move(vars));
    } catch (const std::invalid_argument& err) {
        throw std::invalid_argument(what + ": " + err.what());
    }
}

// Does the has_var pattern of rows (expressions) x columns (variables)
// admit a nonzero determinant? Only m <= 2 occurs.
bool structurally_regular(const std::vector<ExprSpec>& rows, const std::vector<std::string>& cols)
{
    auto has = [&](std::size_t r, std::size_t c) { return rows[r].has_var(cols[c]); };
    if (rows.size() == 1) return has(0, 0);
    return (has(0, 0) && has(1, 1)) || (has(0, 1) && has(1, 0));
}

// -A^{-1} b for m <= 2 with jet entries; singularity judged on values.
std::vector<Jet2> minus_solve(const std::vector<Jet2>& A, const std::vector<Jet2>& b, int m, const char* what)
{
    std::vector<double> vals;
    for (const Jet2& a : A) vals.push_back(a.value());
    if (!(condition_number(vals, uz(m)) <= 1e10)) throw DegenerateError(std::string(what) + " is singular");
    if (m == 1) return {-b[0] / A[0]};
    const Jet2 det = A[0] * A[3] - A[1] * A[2];
    return {-(A[3] * b[0] - A[1] * b[1]) / det, -(A[0] * b[1] - A[2] * b[0]) / det};
}

void check_point(const LeznovSystem& sys, std::span<const double> point)
{
    if (point.size() != uz(sys.coords())) {
        throw std::invalid_argument("leznov: point needs " + std::to_string(sys.coords()) + " coordinates");
    }
}

}  // namespace

LeznovSystem::LeznovSystem(int n, std::vector<ExprSpec> Q, std::vector<ExprSpec> P, ImplicitSolveConfig cfg)
    : n_(n), Q_src_(Q), P_src_(P), cfg_(std::move(cfg))
{
    if (n != 2 && n != 3) throw std::invalid_argument("LeznovSystem: n must be 2 or 3");
    if (Q.size() != uz(n - 1) || P.size() != uz(n - 1)) {
        throw std::invalid_argument("LeznovSystem: need n-1 = " + std::to_string(n - 1) + " Q and P expressions");
    }
    cfg_.validate();
    if (n == 3) {
        phi_names_ = {"phi1", "phi2"};
    } else {
        const bool indexed = Q[0].has_var("phi1") || P[0].has_var("phi1");
        phi_names_ = {indexed ? "phi1" : "phi"};
    }
    const auto xs = block_names("x", n), xbs = block_names("xb", n);
    std::vector<std::string> qv = phi_names_, pv = phi_names_;
    qv.insert(qv.end(), xs.begin(), xs.end());
    pv.insert(pv.end(), xbs.begin(), xbs.end());
    for (int j = 0; j < n - 1; ++j) {
        Q_.push_back(bind_vars(Q[uz(j)], qv, "LeznovSystem: Q" + std::to_string(j + 1)));
        P_.push_back(bind_vars(P[uz(j)], pv, "LeznovSystem: P" + std::to_string(j + 1)));
        dQ_.emplace_back();
        dP_.emplace_back();
        for (int c = 0; c < n; ++c) {
            dQ_.back().push_back(partial(Q_.back(), xs[uz(c)]));
            dP_.back().push_back(partial(P_.back(), xbs[uz(c)]));
        }
    }
}

std::vector<double> LeznovSystem::default_seed() const
{
    if (cfg_.seed_vec.size() == uz(unknowns())) return cfg_.seed_vec;
    return std::vector<double>(uz(unknowns()), cfg_.seed);
}

std::vector<std::string> LeznovSystem::coordinate_names() const
{
    auto out = block_names("x", n_);
    const auto xb = block_names("xb", n_);
    out.insert(out.end(), xb.begin(), xb.end());
    return out;
}

ConstraintSolution solve_constraints(const LeznovSystem& sys, std::span<const double> point,
                                     std::span<const double> seed)
{
    check_point(sys, point);
    const int m = sys.unknowns(), n = sys.n(), k = sys.coords();
    if (seed.size() != uz(m)) throw std::invalid_argument("solve_constraints: seed needs n-1 entries");
    bool depends = false;
    for (const auto& name : sys.phi_names()) {
        for (int j = 0; j < m; ++j) depends = depends || sys.Q_source()[uz(j)].has_var(name) || sys.P_source()[uz(j)].has_var(name);
    }
    if (!depends) throw DegenerateError("solve_constraints: constraints do not depend on phi");

    auto block_args = [&](std::span<const double> y, std::span<const double> coords, int arity, bool vary_coords) {
        std::vector<Jet2> a;
        for (int i = 0; i < m; ++i) a.push_back(jet_var(i, y[uz(i)], arity));
        for (int c = 0; c < n; ++c) {
            a.push_back(vary_coords ? jet_var(m + c, coords[uz(c)], arity) : Jet2::constant(coords[uz(c)], arity));
        }
        return a;
    };
    const auto xs = point.subspan(0, uz(n));
    const auto xbs = point.subspan(uz(n), uz(n));

    auto constraint = [&](std::span<const double> y) {
        VectorEval e;
        e.scale = 0.0;
        for (int j = 0; j < m; ++j) {
            const Jet2 q = eval_jet(sys.Q()[uz(j)], block_args(y, xs, m, false));
            const Jet2 p = eval_jet(sys.P()[uz(j)], block_args(y, xbs, m, false));
            e.value.push_back(q.value() - p.value());
            for (int i = 0; i < m; ++i) e.jacobian.push_back(q.d(i) - p.d(i));
            e.scale = std::max({e.scale, std::fabs(q.value()), std::fabs(p.value())});
        }
        return e;
    };
    ConstraintSolution out;
    out.phi = newton_vector(constraint, std::vector<double>(seed.begin(), seed.end()), sys.config());
    for (double r : constraint(out.phi).value) out.residual = std::max(out.residual, std::fabs(r));

    // Global variables (phi..., x1..xn, xb1..xbn).
    ConstraintJets cj(m, k);
    std::vector<int> qvars, pvars;
    for (int i = 0; i < m; ++i) {
        qvars.push_back(i);
        pvars.push_back(i);
    }
    for (int c = 0; c < n; ++c) {
        qvars.push_back(m + c);
        pvars.push_back(m + n + c);
    }
    for (int j = 0; j < m; ++j) {
        cj.add_block(j, eval_jet(sys.Q()[uz(j)], block_args(out.phi, xs, m + n, true)), qvars);
        cj.add_block(j, eval_jet(sys.P()[uz(j)], block_args(out.phi, xbs, m + n, true)), pvars, -1.0);
    }
    out.jets = cj.solve_jets(sys.config().degenerate_rel);
    for (int i = 0; i < m; ++i) out.jets[uz(i)].set_value(out.phi[uz(i)]);
    return out;
}

ConstraintSolution solve_constraints(const LeznovSystem& sys, std::span<const double> point)
{
    const auto seed = sys.default_seed();
    return solve_constraints(sys, point, seed);
}

std::vector<FieldHandle> leznov_fields(const LeznovSystem& sys)
{
    std::vector<FieldHandle> out;
    for (int i = 0; i < sys.unknowns(); ++i) {
        std::string label = "leznov " + sys.phi_names()[uz(i)] + " [";
        for (int j = 0; j < sys.unknowns(); ++j) {
            label += (j ? "; " : "") + sys.Q()[uz(j)].to_string() + " = " + sys.P()[uz(j)].to_string();
        }
        label += "; " + sys.config().describe() + "]";
        out.emplace_back(sys.coords(), label,
                         [sys, i](std::span<const double> p) { return solve_constraints(sys, p).jets[uz(i)]; });
    }
    return out;
}

SpeedJets speed_jets(const LeznovSystem& sys, const ConstraintSolution& sol, std::span<const double> point)
{
    check_point(sys, point);
    const int m = sys.unknowns(), n = sys.n(), k = sys.coords();
    auto speeds = [&](const std::vector<std::vector<ExprSpec>>& d, int offset, const char* what) {
        std::vector<Jet2> args(sol.jets.begin(), sol.jets.end());
        for (int c = 0; c < n; ++c) args.push_back(jet_var(offset + c, point[uz(offset + c)], k));
        std::vector<Jet2> A, b;
        for (int j = 0; j < m; ++j) {
            for (int c = 0; c < m; ++c) A.push_back(eval_jet(d[uz(j)][uz(c)], args));
            b.push_back(eval_jet(d[uz(j)][uz(n - 1)], args));
        }
        return minus_solve(A, b, m, what);
    };
    SpeedJets out;
    out.v = speeds(sys.dQ(), 0, "Q_x");
    out.u = speeds(sys.dP(), n, "P_xb");
    return out;
}

SpeedFields derive_speeds(const LeznovSystem& sys)
{
    const int m = sys.unknowns(), n = sys.n();
    const auto xs = block_names("x", m), xbs = block_names("xb", m);
    if (!structurally_regular(sys.Q_source(), xs)) throw DegenerateError("derive_speeds: Q_x is singular");
    if (!structurally_regular(sys.P_source(), xbs)) throw DegenerateError("derive_speeds: P_xb is singular");
    SpeedFields out;
    for (int i = 0; i < m; ++i) {
        const std::string idx = std::to_string(i + 1) + " (n=" + std::to_string(n) + ")";
        out.v.emplace_back(sys.coords(), "leznov speed v" + idx, [sys, i](std::span<const double> p) {
            return speed_jets(sys, solve_constraints(sys, p), p).v[uz(i)];
        });
        out.u.emplace_back(sys.coords(), "leznov speed u" + idx, [sys, i](std::span<const double> p) {
            return speed_jets(sys, solve_constraints(sys, p), p).u[uz(i)];
        });
    }
    return out;
}

SpeedValues speed_values(const SpeedJets& s)
{
    SpeedValues out;
    for (const Jet2& j : s.u) out.u.push_back(j.value());
    for (const Jet2& j : s.v) out.v.push_back(j.value());
    return out;
}

ResidualSample apply_D(const Jet2& field, const SpeedValues& speeds, LeznovOperator op, SpeedBinding binding)
{
    const int m = static_cast<int>(speeds.u.size());
    if (speeds.v.size() != speeds.u.size() || (m != 1 && m != 2)) {
        throw std::invalid_argument("apply_D: speeds must hold n-1 values each");
    }
    const int n = m + 1;
    if (field.arity() != 2 * n) throw std::invalid_argument("apply_D: field arity must be 2n");
    const bool x_gets_v = binding == SpeedBinding::v_on_x_block;
    const bool on_x = op == LeznovOperator::D;
    const auto& s = (on_x == x_gets_v) ? speeds.v : speeds.u;
    const int offset = on_x ? 0 : n;
    std::vector<double> terms{field.d(offset + n - 1)};
    for (int k = 0; k < m; ++k) terms.push_back(s[uz(k)] * field.d(offset + k));
    return ResidualSample::from_terms(terms);
}

ResidualSample apply_D(const FieldHandle& field, const SpeedFields& speeds, std::span<const double> point,
                       LeznovOperator op, SpeedBinding binding)
{
    SpeedJets sj;
    for (const auto& f : speeds.u) sj.u.push_back(f(point));
    for (const auto& f : speeds.v) sj.v.push_back(f(point));
    return apply_D(field(point), speed_values(sj), op, binding);
}

ResidualReport verify_zero_curvature(const SpeedFields& speeds, const std::vector<std::vector<double>>& points,
                                     SpeedBinding binding)
{
    ReportBuilder rb("[D, Dbar] = 0");
    const bool x_gets_v = binding == SpeedBinding::v_on_x_block;
    for (const auto& p : points) {
        try {
            SpeedJets sj;
            for (const auto& f : speeds.u) sj.u.push_back(f(p));
            for (const auto& f : speeds.v) sj.v.push_back(f(p));
            const SpeedValues vals = speed_values(sj);
            const auto& x_speeds = x_gets_v ? sj.v : sj.u;
            const auto& xb_speeds = x_gets_v ? sj.u : sj.v;
            std::vector<ResidualSample> got;
            // [D, Dbar] xb_k = D(xb speed k), [D, Dbar] x_k = -Dbar(x speed k).
            for (const Jet2& s : xb_speeds) got.push_back(apply_D(s, vals, LeznovOperator::D, binding));
            for (const Jet2& s : x_speeds) got.push_back(apply_D(s, vals, LeznovOperator::Dbar, binding));
            for (const auto& g : got) rb.add(g);
        } catch (const NumericalError&) {
            rb.skip();
        }
    }
    return rb.finish();
}

std::vector<ResidualSample> holomorphy_conditions(const LeznovSystem& sys, std::span<const double> point)
{
    const int m = sys.unknowns(), n = sys.n();
    const auto sol = solve_constraints(sys, point);
    const SpeedValues sv = speed_values(speed_jets(sys, sol, point));
    std::vector<ResidualSample> out;
    auto condition = [&](const std::vector<ExprSpec>& d, std::span<const double> coords,
                         const std::vector<double>& s) {
        std::vector<double> args = sol.phi;
        args.insert(args.end(), coords.begin(), coords.end());
        std::vector<double> terms{eval(d[uz(n - 1)], args)};
        for (int k = 0; k < m; ++k) terms.push_back(s[uz(k)] * eval(d[uz(k)], args));
        return ResidualSample::from_terms(terms);
    };
    for (int j = 0; j < m; ++j) out.push_back(condition(sys.dQ()[uz(j)], point.subspan(0, uz(n)), sv.v));
    for (int j = 0; j < m; ++j) out.push_back(condition(sys.dP()[uz(j)], point.subspan(uz(n), uz(n)), sv.u));
    return out;
}

double antiholomorphic_spread(const LeznovSystem& sys, std::span<const double> point, int samples, double step)
{
    check_point(sys, point);
    if (samples < 1 || !(step != 0.0)) throw std::invalid_argument("antiholomorphic_spread: need samples and a step");
    const int m = sys.unknowns(), n = sys.n();
    const auto sol0 = solve_constraints(sys, point);

    auto dbar_u = [&](std::span<const double> p, const ConstraintSolution& sol) {
        const SpeedJets sj = speed_jets(sys, sol, p);
        const SpeedValues vals = speed_values(sj);
        std::vector<double> out;
        for (const Jet2& u : sj.u) out.push_back(apply_D(u, vals, LeznovOperator::Dbar, SpeedBinding::v_on_x_block).raw);
        return out;
    };
    const auto base = dbar_u(point, sol0);

    // P values stay fixed along the fiber (phi and xb fixed).
    std::vector<double> pargs = sol0.phi, target;
    pargs.insert(pargs.end(), point.begin() + n, point.end());
    for (int j = 0; j < m; ++j) target.push_back(eval(sys.P()[uz(j)], pargs));

    double spread = 0.0;
    for (int dir : {1, -1}) {
        std::vector<double> p(point.begin(), point.end());
        for (int s = 1; s <= (samples + 1) / 2; ++s) {
            const double xn = point[uz(n - 1)] + dir * s * step;
            auto fiber = [&](std::span<const double> y) {
                std::vector<double> args = sol0.phi;
                for (int c = 0; c < m; ++c) args.push_back(y[uz(c)]);
                args.push_back(xn);
                VectorEval e;
                e.scale = 0.0;
                for (int j = 0; j < m; ++j) {
                    const double q = eval(sys.Q()[uz(j)], args);
                    e.value.push_back(q - target[uz(j)]);
                    e.scale = std::max({e.scale, std::fabs(q), std::fabs(target[uz(j)])});
                    for (int c = 0; c < m; ++c) e.jacobian.push_back(eval(sys.dQ()[uz(j)][uz(c)], args));
                }
                return e;
            };
            const auto xhead = newton_vector(fiber, std::vector<double>(p.begin(), p.begin() + m), sys.config());
            for (int c = 0; c < m; ++c) p[uz(c)] = xhead[uz(c)];
            p[uz(n - 1)] = xn;
            const auto sol = solve_constraints(sys, p, sol0.phi);
            const auto val = dbar_u(p, sol);
            for (int i = 0; i < m; ++i) {
                const double ref = std::max(1.0, std::fabs(base[uz(i)]));
                spread = std::max(spread, std::fabs(val[uz(i)] - base[uz(i)]) / ref);
            }
        }
    }
    return spread;
}

}  // namespace bateman
