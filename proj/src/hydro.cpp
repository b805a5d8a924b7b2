#include "bateman/hydro.hpp"
#include "bateman/implicit.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bateman {

namespace {

std::size_t uz(int i) { return static_cast<std::size_t>(i); }

int wrap(int i, int n)
{
    const int r = i % n;
    return r < 0 ? r + n : r;
}

// 4-point Lagrange weights on nodes -1, 0, 1, 2 at offset s from node 0.
std::array<double, 4> cubic_weights(double s)
{
    return {-s * (s - 1.0) * (s - 2.0) / 6.0, (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
            -(s + 1.0) * s * (s - 2.0) / 2.0, (s + 1.0) * s * (s - 1.0) / 6.0};
}

std::array<double, 4> cubic_weights_ds(double s)
{
    return {-(3.0 * s * s - 6.0 * s + 2.0) / 6.0, (3.0 * s * s - 4.0 * s - 1.0) / 2.0,
            -(3.0 * s * s - 2.0 * s - 2.0) / 2.0, (3.0 * s * s - 1.0) / 6.0};
}

struct Sample {
    double value = 0.0;
    double slope = 0.0;
};

Sample interp_line_d(const std::vector<double>& f, double x0, double h, bool periodic, double x)
{
    const int n = static_cast<int>(f.size());
    const double q = (x - x0) / h;
    if (!(std::fabs(q) < 1e9)) throw SingularityError("interpolation point out of range", x);
    int j = static_cast<int>(std::floor(q));
    // Clamped lines shift the stencil inward and extrapolate past the ends.
    if (!periodic) j = std::clamp(j, 1, n - 3);
    const auto w = cubic_weights(q - j);
    const auto dw = cubic_weights_ds(q - j);
    // Differences from the base node: weights sum to one, so constants are
    // reproduced exactly rather than to rounding.
    const double base = f[uz(periodic ? wrap(j, n) : j)];
    Sample r;
    for (int m = 0; m < 4; ++m) {
        const double fv = f[uz(periodic ? wrap(j - 1 + m, n) : j - 1 + m)] - base;
        r.value += w[uz(m)] * fv;
        r.slope += dw[uz(m)] * fv;
    }
    r.value += base;
    r.slope /= h;
    return r;
}

double interp_line(const std::vector<double>& f, double x0, double h, bool periodic, double x)
{
    return interp_line_d(f, x0, h, periodic, x).value;
}

int step_count(double span, double max_speed, double cfl, double h, double requested_dt)
{
    if (span <= 0.0) throw std::invalid_argument("integration window must be positive");
    if (requested_dt > 0.0) {
        const double n = std::ceil(span / requested_dt * (1.0 - 1e-12));
        if (!(n < 1e7)) throw std::invalid_argument("integration needs too many steps");
        return std::max(2, static_cast<int>(n));
    }
    if (max_speed == 0.0) return 2;
    // 5% margin so interpolation overshoot does not trip the CFL guard.
    const double n = std::ceil(span * max_speed / (0.95 * cfl * h));
    if (!(n < 1e7)) throw std::invalid_argument("integration needs too many steps");
    return std::max(2, static_cast<int>(n));
}

double max_abs(const std::vector<double>& a)
{
    double m = 0.0;
    for (double x : a) m = std::max(m, std::fabs(x));
    return m;
}

double range_of(const std::vector<double>& a)
{
    const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
    return *hi - *lo;
}

// Characteristics carried by speed -c converge where c rises across a cell.
// A rise of a quarter of the initial range of c in one cell means the front has
// collapsed onto the grid: the exact characteristics are about to cross.
// Under CFL < 1 the per-step foot ordering cannot detect this on its own.
bool front_collapsed(const std::vector<double>& c, double range0, bool periodic)
{
    if (range0 <= 0.0) return false;
    const std::size_t n = c.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (c[i + 1] - c[i] >= 0.35 * range0) return true;
    }
    return periodic && c[0] - c[n - 1] >= 0.35 * range0;
}

CharGrid integrate_nodes(std::vector<double> u, std::vector<double> v, const CharGridSpec& spec)
{
    const int N = spec.nx;
    CharGrid g;
    g.periodic = spec.periodic;
    g.length = spec.length;
    g.cfl = spec.cfl;
    g.h = spec.periodic ? spec.length / N : spec.length / (N - 1);
    for (int i = 0; i < N; ++i) g.x.push_back(spec.x0 + g.h * i);
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (!std::isfinite(u[i]) || !std::isfinite(v[i])) {
            throw std::invalid_argument("initial data not finite at x = " + std::to_string(g.x[i]));
        }
    }
    const double span = spec.t_end - spec.t0;
    const int nt = step_count(span, std::max(max_abs(u), max_abs(v)), spec.cfl, g.h, spec.dt);
    g.dt = span / nt;
    g.t.push_back(spec.t0);
    g.u.push_back(std::move(u));
    g.v.push_back(std::move(v));

    const double h = g.h, dt = g.dt, x0 = spec.x0;
    const double tol = spec.sweep_tol * h;
    const double range_u = range_of(g.u[0]), range_v = range_of(g.v[0]);
    std::vector<double> xi(uz(N)), eta(uz(N));
    auto abort = [&](AbortKind kind, int level, const std::string& msg) {
        IntegrationAbort e(kind, level, msg);
        e.partial_1d = std::make_shared<const CharGrid>(g);
        throw e;
    };

    for (int step = 1; step <= nt; ++step) {
        const auto& un = g.u.back();
        const auto& vn = g.v.back();
        if (dt * std::max(max_abs(un), max_abs(vn)) > spec.cfl * h) {
            abort(AbortKind::cfl, step, "CFL violated stepping to level " + std::to_string(step));
        }
        auto U = [&](double x) { return interp_line_d(un, x0, h, g.periodic, x); };
        auto V = [&](double x) { return interp_line_d(vn, x0, h, g.periodic, x); };
        bool converged = true;
        double stalled_at = 0.0;
        for (int i = 0; i < N; ++i) {
            const double X = g.x[uz(i)];
            // Trapezoidal feet: u rides dx/dt = -v, v rides dx/dt = -u; the
            // speed at the arrival node is the other field's transported value.
            // Newton sweeps on the coupled pair, slopes from the interpolant.
            double a = X + dt * vn[uz(i)];
            double b = X + dt * un[uz(i)];
            bool done = false;
            for (int sweep = 0; sweep < spec.max_sweeps && !done; ++sweep) {
                const Sample va = V(a), vb = V(b), ua = U(a), ub = U(b);
                const double r1 = a - X - 0.5 * dt * (vb.value + va.value);
                const double r2 = b - X - 0.5 * dt * (ua.value + ub.value);
                const double j11 = 1.0 - 0.5 * dt * va.slope, j12 = -0.5 * dt * vb.slope;
                const double j21 = -0.5 * dt * ua.slope, j22 = 1.0 - 0.5 * dt * ub.slope;
                const double det = j11 * j22 - j12 * j21;
                if (!(std::fabs(det) > 1e-14)) break;
                const double da = (r1 * j22 - r2 * j12) / det;
                const double db = (j11 * r2 - j21 * r1) / det;
                a -= da;
                b -= db;
                if (!(std::fabs(a - X) < g.length) || !(std::fabs(b - X) < g.length)) break;
                done = std::max(std::fabs(da), std::fabs(db)) <= tol;
            }
            if (!done && converged) {
                converged = false;
                stalled_at = X;
            }
            xi[uz(i)] = a;
            eta[uz(i)] = b;
        }
        for (int i = 0; i + 1 < N; ++i) {
            if (!(xi[uz(i + 1)] > xi[uz(i)]) || !(eta[uz(i + 1)] > eta[uz(i)])) {
                abort(AbortKind::crossing, step,
                      "characteristic crossing before t = " + format_double(spec.t0 + step * dt));
            }
        }
        if (g.periodic && (!(xi[0] + g.length > xi[uz(N - 1)]) || !(eta[0] + g.length > eta[uz(N - 1)]))) {
            abort(AbortKind::crossing, step, "characteristic crossing before t = " + format_double(spec.t0 + step * dt));
        }
        if (!converged) {
            throw ConvergenceError("foot-point iteration did not converge at level " + std::to_string(step) +
                                   ", x = " + format_double(stalled_at));
        }
        std::vector<double> u2(uz(N)), v2(uz(N));
        for (int i = 0; i < N; ++i) {
            u2[uz(i)] = U(xi[uz(i)]).value;
            v2[uz(i)] = V(eta[uz(i)]).value;
        }
        if (front_collapsed(v2, range_v, g.periodic) || front_collapsed(u2, range_u, g.periodic)) {
            abort(AbortKind::crossing, step, "characteristic crossing imminent at t = " + format_double(spec.t0 + step * dt));
        }
        const double speed = std::max(max_abs(u2), max_abs(v2));
        if (dt * speed > spec.cfl * h) {
            abort(AbortKind::cfl, step, "CFL violated at level " + std::to_string(step));
        }
        g.t.push_back(spec.t0 + step * dt);
        g.u.push_back(std::move(u2));
        g.v.push_back(std::move(v2));
    }
    return g;
}

void require_interior_level(int level, int levels)
{
    if (level < 1 || level > levels - 2) {
        throw std::invalid_argument("finite-difference jets need an interior time level");
    }
}

}  // namespace

double sn_polynomial(double u, double v, int n)
{
    if (n < 0) throw std::invalid_argument("sn_polynomial: n must be >= 0");
    double s = 1.0;
    double un = 1.0;
    for (int k = 1; k <= n; ++k) {
        un *= u;
        s = un + v * s;
    }
    return s;
}

Jet2 sn_polynomial(const Jet2& u, const Jet2& v, int n)
{
    if (n < 0) throw std::invalid_argument("sn_polynomial: n must be >= 0");
    Jet2 s = Jet2::constant(1.0, u.arity());
    Jet2 un = Jet2::constant(1.0, u.arity());
    for (int k = 1; k <= n; ++k) {
        un *= u;
        s = un + v * s;
    }
    return s;
}

void CharGridSpec::validate() const
{
    if (nx < 8) throw std::invalid_argument("CharGridSpec: nx must be >= 8");
    if (!(length > 0.0)) throw std::invalid_argument("CharGridSpec: length must be positive");
    if (!(t_end > t0)) throw std::invalid_argument("CharGridSpec: t_end must exceed t0");
    if (!(cfl > 0.0) || cfl > 1.0) throw std::invalid_argument("CharGridSpec: cfl must lie in (0, 1]");
    if (!(dt >= 0.0)) throw std::invalid_argument("CharGridSpec: dt must be >= 0");
    if (max_sweeps < 1) throw std::invalid_argument("CharGridSpec: max_sweeps must be >= 1");
    if (!(sweep_tol > 0.0)) throw std::invalid_argument("CharGridSpec: sweep_tol must be positive");
}

const std::vector<double>& CharGrid::field(GridField f, int level) const
{
    return f == GridField::u ? u.at(uz(level)) : v.at(uz(level));
}

double interpolate(const CharGrid& grid, GridField f, int level, double x)
{
    return interp_line(grid.field(f, level), grid.x.front(), grid.h, grid.periodic, x);
}

IntegrationAbort::IntegrationAbort(AbortKind kind, int level, const std::string& what)
    : NumericalError(what), kind_(kind), level_(level)
{
}

Profile profile_from_expr(const ExprSpec& e)
{
    const ExprSpec b = e.with_vars({"x"});
    return [b](double x) {
        const double args[] = {x};
        return eval(b, args);
    };
}

CharGrid integrate_characteristics(const Profile& u0, const Profile& v0, const CharGridSpec& spec)
{
    spec.validate();
    const double h = spec.periodic ? spec.length / spec.nx : spec.length / (spec.nx - 1);
    std::vector<double> u, v;
    for (int i = 0; i < spec.nx; ++i) {
        const double x = spec.x0 + h * i;
        u.push_back(u0(x));
        v.push_back(v0(x));
    }
    return integrate_nodes(std::move(u), std::move(v), spec);
}

CharGrid integrate_characteristics(const ExprSpec& u0, const ExprSpec& v0, const CharGridSpec& spec)
{
    return integrate_characteristics(profile_from_expr(u0), profile_from_expr(v0), spec);
}

std::vector<int> interior_nodes(const CharGrid& grid)
{
    std::vector<int> out;
    const int n = grid.nodes();
    for (int i = grid.periodic ? 0 : 1; i < (grid.periodic ? n : n - 1); ++i) out.push_back(i);
    return out;
}

Jet2 grid_jet(const CharGrid& grid, GridField f, int level, int node)
{
    require_interior_level(level, grid.levels());
    const int n = grid.nodes();
    if (!grid.periodic && (node < 1 || node > n - 2)) throw std::invalid_argument("grid_jet: boundary node");
    const int im = wrap(node - 1, n), ip = wrap(node + 1, n);
    const auto& a = grid.field(f, level - 1);
    const auto& b = grid.field(f, level);
    const auto& c = grid.field(f, level + 1);
    const double dt = grid.dt, h = grid.h;
    const std::size_t i = uz(node);
    Jet2 j(2, b[i]);
    j.set_d(0, (c[i] - a[i]) / (2.0 * dt));
    j.set_d(1, (b[uz(ip)] - b[uz(im)]) / (2.0 * h));
    j.set_dd(0, 0, (c[i] - 2.0 * b[i] + a[i]) / (dt * dt));
    j.set_dd(1, 1, (b[uz(ip)] - 2.0 * b[i] + b[uz(im)]) / (h * h));
    j.set_dd(0, 1, (c[uz(ip)] - c[uz(im)] - a[uz(ip)] + a[uz(im)]) / (4.0 * dt * h));
    return j;
}

double conservation_drift(const CharGrid& grid, int n)
{
    if (n < 1) throw std::invalid_argument("conservation_drift: n must be >= 1");
    if (grid.levels() < 3 || grid.nodes() < 3) throw std::invalid_argument("conservation_drift: grid too small");
    const int L = grid.levels(), N = grid.nodes();
    std::vector<std::vector<double>> S(uz(L)), F(uz(L));
    for (int l = 0; l < L; ++l) {
        for (int i = 0; i < N; ++i) {
            const double u = grid.u[uz(l)][uz(i)], v = grid.v[uz(l)][uz(i)];
            S[uz(l)].push_back(sn_polynomial(u, v, n));
            F[uz(l)].push_back(u * v * sn_polynomial(u, v, n - 1));
        }
    }
    GlobalResidual r;
    for (int l = 1; l < L - 1; ++l) {
        for (int i : interior_nodes(grid)) {
            const double st = (S[uz(l + 1)][uz(i)] - S[uz(l - 1)][uz(i)]) / (2.0 * grid.dt);
            const double fx = (F[uz(l)][uz(wrap(i + 1, N))] - F[uz(l)][uz(wrap(i - 1, N))]) / (2.0 * grid.h);
            r.add(ResidualSample::from_terms({st, -fx}));
        }
    }
    return r.normalized();
}

TransportCheck transport_residual(const CharGrid& grid)
{
    TransportCheck out;
    const TransportPattern pat{0, {1}};
    for (int l = 1; l < grid.levels() - 1; ++l) {
        for (int i : interior_nodes(grid)) {
            const Jet2 u = grid_jet(grid, GridField::u, l, i);
            const Jet2 v = grid_jet(grid, GridField::v, l, i);
            const double su[] = {-v.value()};
            const double sv[] = {-u.value()};
            out.u.add(res_transport(u, su, pat));
            out.v.add(res_transport(v, sv, pat));
        }
    }
    return out;
}

double riemann_variation(const CharGrid& grid, GridField carried, int curves)
{
    if (curves < 1) throw std::invalid_argument("riemann_variation: curves must be >= 1");
    const GridField speed = carried == GridField::u ? GridField::v : GridField::u;
    const auto nodes = interior_nodes(grid);
    const double span = grid.t.back() - grid.t.front();
    const double lo = grid.x.front(), hi = grid.x.back();
    double worst = 0.0;
    for (int c = 0; c < curves; ++c) {
        const int start = nodes[uz(c) * nodes.size() / uz(curves)];
        double X = grid.x[uz(start)];
        const double v0 = grid.field(carried, 0)[uz(start)];
        for (int l = 0; l + 1 < grid.levels(); ++l) {
            const double s0 = -interpolate(grid, speed, l, X);
            const double s1 = -interpolate(grid, speed, l + 1, X + grid.dt * s0);
            X += 0.5 * grid.dt * (s0 + s1);
            if (!grid.periodic && (X < lo || X > hi)) break;
            worst = std::max(worst, std::fabs(interpolate(grid, carried, l + 1, X) - v0) / span);
        }
    }
    return worst;
}

HodographComparison hodograph_cross_check(const HodographSolution& sol, double x_lo, double x_hi, int nx,
                                          double t0, double t1, std::array<double, 2> seed_at_x_lo,
                                          double cfl)
{
    CharGridSpec spec;
    spec.nx = nx;
    spec.x0 = x_lo;
    spec.length = x_hi - x_lo;
    spec.t0 = t0;
    spec.t_end = t1;
    spec.cfl = cfl;
    spec.periodic = false;
    spec.validate();
    const double h = spec.length / (nx - 1);

    std::vector<double> u, v;
    std::array<double, 2> seed = seed_at_x_lo;
    for (int i = 0; i < nx; ++i) {
        seed = sol.invert(t0, x_lo + h * i, seed);  // continuation along the line
        u.push_back(seed[0]);
        v.push_back(seed[1]);
    }
    HodographComparison out;
    out.grid = integrate_nodes(u, v, spec);
    const CharGrid& g = out.grid;
    const double speed = std::max(max_abs(u), max_abs(v));
    const double reach = speed * (t1 - t0) + 4.0 * h;
    const auto& uf = g.u.back();
    const auto& vf = g.v.back();
    for (int i = 0; i < nx; ++i) {
        const double x = g.x[uz(i)];
        if (x - x_lo <= reach || x_hi - x <= reach) continue;
        const auto ex = sol.invert(g.t.back(), x, {uf[uz(i)], vf[uz(i)]});
        out.max_error = std::max({out.max_error, std::fabs(ex[0] - uf[uz(i)]), std::fabs(ex[1] - vf[uz(i)])});
        ++out.compared;
    }
    return out;
}

CsvTable grid_table(const CharGrid& grid)
{
    CsvTable t;
    t.header = {"level", "t", "x", "u", "v"};
    for (int l = 0; l < grid.levels(); ++l) {
        for (int i = 0; i < grid.nodes(); ++i) {
            t.rows.push_back({static_cast<double>(l), grid.t[uz(l)], grid.x[uz(i)], grid.u[uz(l)][uz(i)],
                              grid.v[uz(l)][uz(i)]});
        }
    }
    return t;
}

std::string grid_sidecar(const CharGrid& grid)
{
    nlohmann::ordered_json j;
    j["scheme"] = "semi-lagrangian characteristics, trapezoidal foot points, cubic lagrange interpolation";
    j["h"] = grid.h;
    j["dt"] = grid.dt;
    j["cfl"] = grid.cfl;
    j["nx"] = grid.nodes();
    j["levels"] = grid.levels();
    j["periodic"] = grid.periodic;
    j["x0"] = grid.x.empty() ? 0.0 : grid.x.front();
    j["t0"] = grid.t.empty() ? 0.0 : grid.t.front();
    j["t_last"] = grid.t.empty() ? 0.0 : grid.t.back();
    return j.dump(2) + "\n";
}

void write_grid(const CharGrid& grid, const std::string& path)
{
    write_csv(path, grid_table(grid));
    write_text(path + ".json", grid_sidecar(grid));
}

// ---------------------------------------------------------------------------

void MultiGridSpec::validate() const
{
    if (n < 8) throw std::invalid_argument("MultiGridSpec: n must be >= 8");
    if (!(length > 0.0)) throw std::invalid_argument("MultiGridSpec: length must be positive");
    if (!(t_end > 0.0)) throw std::invalid_argument("MultiGridSpec: t_end must be positive");
    if (!(cfl > 0.0) || cfl > 1.0) throw std::invalid_argument("MultiGridSpec: cfl must lie in (0, 1]");
    if (!(dt >= 0.0)) throw std::invalid_argument("MultiGridSpec: dt must be >= 0");
    if (max_sweeps < 1) throw std::invalid_argument("MultiGridSpec: max_sweeps must be >= 1");
    if (!(sweep_tol > 0.0)) throw std::invalid_argument("MultiGridSpec: sweep_tol must be positive");
}

double MultiCharGrid::at(int level, int field, int j, int k) const
{
    return f[uz(level)][uz(field)][uz(wrap(j, n) * n + wrap(k, n))];
}

namespace {

struct PlaneSample {
    double value = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
};

PlaneSample interp_plane_d(const std::vector<double>& a, int n, double h, double x2, double x3)
{
    const double q2 = x2 / h, q3 = x3 / h;
    if (!(std::fabs(q2) < 1e9) || !(std::fabs(q3) < 1e9)) {
        throw SingularityError("interpolation point out of range", std::fabs(q2) > std::fabs(q3) ? x2 : x3);
    }
    const int j = static_cast<int>(std::floor(q2)), k = static_cast<int>(std::floor(q3));
    const auto w2 = cubic_weights(q2 - j), w3 = cubic_weights(q3 - k);
    const auto dw2 = cubic_weights_ds(q2 - j), dw3 = cubic_weights_ds(q3 - k);
    const double base = a[uz(wrap(j, n) * n + wrap(k, n))];
    PlaneSample r;
    for (int p = 0; p < 4; ++p) {
        const int jj = wrap(j - 1 + p, n);
        double row = 0.0, drow = 0.0;
        for (int q = 0; q < 4; ++q) {
            const double fv = a[uz(jj * n + wrap(k - 1 + q, n))] - base;
            row += w3[uz(q)] * fv;
            drow += dw3[uz(q)] * fv;
        }
        r.value += w2[uz(p)] * row;
        r.d2 += dw2[uz(p)] * row;
        r.d3 += w2[uz(p)] * drow;
    }
    r.value += base;
    r.d2 /= h;
    r.d3 /= h;
    return r;
}

double interp_plane(const std::vector<double>& a, int n, double h, double x2, double x3)
{
    return interp_plane_d(a, n, h, x2, x3).value;
}

}  // namespace

double interpolate(const MultiCharGrid& grid, int field, int level, double x2, double x3)
{
    return interp_plane(grid.f.at(uz(level)).at(uz(field)), grid.n, grid.h, x2, x3);
}

MultiCharGrid integrate_multifield(const std::array<ExprSpec, 4>& init, const MultiGridSpec& spec)
{
    spec.validate();
    MultiCharGrid g;
    const int n = spec.n;
    g.n = n;
    g.h = spec.length / n;
    g.cfl = spec.cfl;
    std::array<std::vector<double>, 4> f0;
    double speed = 0.0;
    for (int fi = 0; fi < 4; ++fi) {
        const ExprSpec e = init[uz(fi)].with_vars({"x2", "x3"});
        for (int j = 0; j < n; ++j) {
            for (int k = 0; k < n; ++k) {
                const double args[] = {g.h * j, g.h * k};
                const double val = eval(e, args);
                if (!std::isfinite(val)) throw std::invalid_argument("multifield initial data not finite");
                f0[uz(fi)].push_back(val);
                speed = std::max(speed, std::fabs(val));
            }
        }
    }
    const int nt = step_count(spec.t_end, speed, spec.cfl, g.h, spec.dt);
    g.dt = spec.t_end / nt;
    g.t.push_back(0.0);
    g.f.push_back(std::move(f0));

    const double h = g.h, dt = g.dt, L = spec.length, tol = spec.sweep_tol * h;
    std::array<double, 4> range0{};
    for (std::size_t fi = 0; fi < 4; ++fi) range0[fi] = range_of(g.f[0][fi]);
    const std::size_t nn = uz(n * n);
    std::vector<double> a2(nn), a3(nn), b2(nn), b3(nn);
    auto abort = [&](AbortKind kind, int level, const std::string& msg) {
        IntegrationAbort e(kind, level, msg);
        e.partial_2d = std::make_shared<const MultiCharGrid>(g);
        throw e;
    };

    for (int step = 1; step <= nt; ++step) {
        const auto& cur = g.f.back();
        double cur_speed = 0.0;
        for (const auto& a : cur) cur_speed = std::max(cur_speed, max_abs(a));
        if (dt * cur_speed > spec.cfl * h) {
            abort(AbortKind::cfl, step, "CFL violated stepping to level " + std::to_string(step));
        }
        auto I = [&](int fi, double x2, double x3) { return interp_plane(cur[uz(fi)], n, h, x2, x3); };
        bool converged = true;
        for (int j = 0; j < n; ++j) {
            for (int k = 0; k < n; ++k) {
                const std::size_t id = uz(j * n + k);
                const double X2 = h * j, X3 = h * k;
                // u feet (xi) ride (v1, v2); v feet (eta) ride (u1, u2).
                double xi2 = X2 - dt * cur[2][id], xi3 = X3 - dt * cur[3][id];
                double et2 = X2 - dt * cur[0][id], et3 = X3 - dt * cur[1][id];
                // Newton sweeps on R = (xi - X + dt/2 (v(eta) + v(xi)), eta - X + dt/2 (u(xi) + u(eta))).
                bool done = false;
                for (int sweep = 0; sweep < spec.max_sweeps && !done; ++sweep) {
                    std::array<PlaneSample, 4> at_xi, at_eta;
                    for (int fi = 0; fi < 4; ++fi) {
                        at_xi[uz(fi)] = interp_plane_d(cur[uz(fi)], n, h, xi2, xi3);
                        at_eta[uz(fi)] = interp_plane_d(cur[uz(fi)], n, h, et2, et3);
                    }
                    const double c = 0.5 * dt;
                    std::vector<double> r{xi2 - X2 + c * (at_eta[2].value + at_xi[2].value),
                                          xi3 - X3 + c * (at_eta[3].value + at_xi[3].value),
                                          et2 - X2 + c * (at_xi[0].value + at_eta[0].value),
                                          et3 - X3 + c * (at_xi[1].value + at_eta[1].value)};
                    std::vector<double> jac(16, 0.0);
                    for (int row = 0; row < 2; ++row) {
                        const PlaneSample& vx = at_xi[uz(2 + row)];
                        const PlaneSample& ve = at_eta[uz(2 + row)];
                        const PlaneSample& ux = at_xi[uz(row)];
                        const PlaneSample& ue = at_eta[uz(row)];
                        const std::size_t rv = uz(row * 4), ru = uz((2 + row) * 4);
                        jac[rv + 0] = c * vx.d2;
                        jac[rv + 1] = c * vx.d3;
                        jac[rv + 2] = c * ve.d2;
                        jac[rv + 3] = c * ve.d3;
                        jac[ru + 0] = c * ux.d2;
                        jac[ru + 1] = c * ux.d3;
                        jac[ru + 2] = c * ue.d2;
                        jac[ru + 3] = c * ue.d3;
                    }
                    for (std::size_t d = 0; d < 4; ++d) jac[d * 5] += 1.0;
                    std::vector<double> delta;
                    try {
                        delta = lu_solve(jac, r, 4);
                    } catch (const DegenerateError&) {
                        break;
                    }
                    xi2 -= delta[0];
                    xi3 -= delta[1];
                    et2 -= delta[2];
                    et3 -= delta[3];
                    double change = 0.0;
                    for (double d : delta) change = std::max(change, std::fabs(d));
                    if (!(change < L)) break;
                    done = change <= tol;
                }
                if (!done && converged) converged = false;
                a2[id] = xi2;
                a3[id] = xi3;
                b2[id] = et2;
                b3[id] = et3;
            }
        }
        // The foot map must stay orientation preserving (no crossing).
        auto jac_ok = [&](const std::vector<double>& p2, const std::vector<double>& p3) {
            for (int j = 0; j < n; ++j) {
                for (int k = 0; k < n; ++k) {
                    const std::size_t id = uz(j * n + k);
                    const std::size_t jn = uz(wrap(j + 1, n) * n + k);
                    const std::size_t kn = uz(j * n + wrap(k + 1, n));
                    const double w2 = j + 1 == n ? L : 0.0;
                    const double w3 = k + 1 == n ? L : 0.0;
                    const double a = p2[jn] + w2 - p2[id], b = p3[jn] - p3[id];
                    const double c = p2[kn] - p2[id], d = p3[kn] + w3 - p3[id];
                    if (!(a * d - b * c > 0.0)) return false;
                }
            }
            return true;
        };
        if (!jac_ok(a2, a3) || !jac_ok(b2, b3)) {
            abort(AbortKind::crossing, step, "characteristic crossing before x1 = " + format_double(step * dt));
        }
        if (!converged) {
            throw ConvergenceError("foot-point iteration did not converge at level " + std::to_string(step));
        }
        std::array<std::vector<double>, 4> nxt;
        double sp = 0.0;
        for (std::size_t id = 0; id < nn; ++id) {
            nxt[0].push_back(I(0, a2[id], a3[id]));
            nxt[1].push_back(I(1, a2[id], a3[id]));
            nxt[2].push_back(I(2, b2[id], b3[id]));
            nxt[3].push_back(I(3, b2[id], b3[id]));
            for (int fi = 0; fi < 4; ++fi) sp = std::max(sp, std::fabs(nxt[uz(fi)].back()));
        }
        // u rides +(v1, v2) and v rides +(u1, u2): a drop of a carrying
        // component across one cell in its own direction is a collapsed front.
        for (int fi = 0; fi < 4; ++fi) {
            const double r = range0[uz(fi)];
            if (r <= 0.0) continue;
            const auto& c = nxt[uz(fi)];
            const bool along2 = fi % 2 == 0;
            for (int j = 0; j < n; ++j) {
                for (int k = 0; k < n; ++k) {
                    const std::size_t nb = along2 ? uz(wrap(j + 1, n) * n + k) : uz(j * n + wrap(k + 1, n));
                    if (c[uz(j * n + k)] - c[nb] >= 0.35 * r) {
                        abort(AbortKind::crossing, step,
                              "characteristic crossing imminent at x1 = " + format_double(step * dt));
                    }
                }
            }
        }
        if (dt * sp > spec.cfl * h) abort(AbortKind::cfl, step, "CFL violated at level " + std::to_string(step));
        g.t.push_back(step * dt);
        g.f.push_back(std::move(nxt));
    }
    return g;
}

std::array<Jet2, 4> multigrid_jets(const MultiCharGrid& grid, int level, int j, int k)
{
    require_interior_level(level, grid.levels());
    const double dt = grid.dt, h = grid.h;
    std::array<Jet2, 4> out;
    for (int fi = 0; fi < 4; ++fi) {
        auto F = [&](int dl, int dj, int dk) { return grid.at(level + dl, fi, j + dj, k + dk); };
        Jet2 J(3, F(0, 0, 0));
        J.set_d(0, (F(1, 0, 0) - F(-1, 0, 0)) / (2.0 * dt));
        J.set_d(1, (F(0, 1, 0) - F(0, -1, 0)) / (2.0 * h));
        J.set_d(2, (F(0, 0, 1) - F(0, 0, -1)) / (2.0 * h));
        J.set_dd(0, 0, (F(1, 0, 0) - 2.0 * F(0, 0, 0) + F(-1, 0, 0)) / (dt * dt));
        J.set_dd(1, 1, (F(0, 1, 0) - 2.0 * F(0, 0, 0) + F(0, -1, 0)) / (h * h));
        J.set_dd(2, 2, (F(0, 0, 1) - 2.0 * F(0, 0, 0) + F(0, 0, -1)) / (h * h));
        J.set_dd(0, 1, (F(1, 1, 0) - F(1, -1, 0) - F(-1, 1, 0) + F(-1, -1, 0)) / (4.0 * dt * h));
        J.set_dd(0, 2, (F(1, 0, 1) - F(1, 0, -1) - F(-1, 0, 1) + F(-1, 0, -1)) / (4.0 * dt * h));
        J.set_dd(1, 2, (F(0, 1, 1) - F(0, 1, -1) - F(0, -1, 1) + F(0, -1, -1)) / (4.0 * h * h));
        out[uz(fi)] = J;
    }
    return out;
}

MultifieldCheck multifield_det_residual(const MultiCharGrid& grid)
{
    MultifieldCheck out;
    for (int l = 1; l < grid.levels() - 1; ++l) {
        for (int j = 0; j < grid.n; ++j) {
            for (int k = 0; k < grid.n; ++k) {
                const auto J = multigrid_jets(grid, l, j, k);
                out.det1.add(res_multifield_det(J[0], J[1], J[2], J[3], 1));
                out.det2.add(res_multifield_det(J[0], J[1], J[2], J[3], 2));
            }
        }
    }
    return out;
}

CsvTable multigrid_table(const MultiCharGrid& grid)
{
    CsvTable t;
    t.header = {"level", "x1", "x2", "x3", "u1", "u2", "v1", "v2"};
    for (int l = 0; l < grid.levels(); ++l) {
        for (int j = 0; j < grid.n; ++j) {
            for (int k = 0; k < grid.n; ++k) {
                std::vector<double> row{static_cast<double>(l), grid.t[uz(l)], grid.coord(j), grid.coord(k)};
                for (int fi = 0; fi < 4; ++fi) row.push_back(grid.at(l, fi, j, k));
                t.rows.push_back(std::move(row));
            }
        }
    }
    return t;
}

}  // namespace bateman
