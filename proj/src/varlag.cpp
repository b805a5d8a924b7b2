#include "bateman/varlag.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <span>
#include <stdexcept>

namespace bateman {

namespace {

std::size_t uz(int i) { return static_cast<std::size_t>(i); }

// Slots of the six first derivatives in the density jets.
constexpr int kPhiT = 0, kPhiX = 1, kBarT = 2, kBarX = 3, kPsiT = 4, kPsiX = 5;

int slot_t(VarField f) { return 2 * static_cast<int>(f); }

ExprSpec bind_w(const ExprSpec& W)
{
    try {
        return W.with_vars({"phibar"});
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("psi = W(phibar): ") + e.what());
    }
}

double eval_w(const ExprSpec& Wb, double phibar)
{
    const double a[] = {phibar};
    return eval(Wb, a);
}

void require_grid(const FieldGrid& g)
{
    if (g.nt < 5 || g.nx < 5) throw std::invalid_argument("field grid needs at least 5 nodes per axis");
    const std::size_t n = uz(g.nt * g.nx);
    if (g.phi.size() != n || g.phibar.size() != n || g.psi.size() != n) {
        throw std::invalid_argument("field grid arrays do not match nt * nx");
    }
    if (!(g.ht > 0.0) || !(g.hx > 0.0)) throw std::invalid_argument("field grid spacing must be positive");
}

// The six centered first differences at an interior node.
std::array<double, 6> node_derivs(const FieldGrid& g, int i, int j)
{
    std::array<double, 6> d{};
    for (int f = 0; f < 3; ++f) {
        const auto F = static_cast<VarField>(f);
        d[uz(2 * f)] = (g.at(F, i + 1, j) - g.at(F, i - 1, j)) / (2.0 * g.ht);
        d[uz(2 * f + 1)] = (g.at(F, i, j + 1) - g.at(F, i, j - 1)) / (2.0 * g.hx);
    }
    return d;
}

}  // namespace

bool degree0_test(const ExprSpec& H)
{
    const ExprSpec Hb = H.with_vars({"p", "q"});
    std::mt19937_64 rng(0x5eed0);
    std::uniform_real_distribution<double> mag(0.2, 2.0);
    std::bernoulli_distribution sign(0.5);
    for (int k = 0; k < 50; ++k) {
        const double p = (sign(rng) ? 1.0 : -1.0) * mag(rng);
        const double q = (sign(rng) ? 1.0 : -1.0) * mag(rng);
        const Jet2 args[] = {jet_var(0, p, 2), jet_var(1, q, 2)};
        const Jet2 h = eval_jet(Hb, args);
        const double a = p * h.d(0), b = q * h.d(1);
        if (!std::isfinite(a) || !std::isfinite(b)) return false;
        if (std::fabs(a + b) > 1e-10 * (std::fabs(a) + std::fabs(b))) return false;
    }
    return true;
}

DiscreteFunctional::DiscreteFunctional(std::optional<ExprSpec> H, double phi_x_floor) : floor_(phi_x_floor)
{
    if (!(phi_x_floor >= 0.0)) throw std::invalid_argument("DiscreteFunctional: phi_x floor must be >= 0");
    if (H) {
        const ExprSpec Hb = H->with_vars({"p", "q"});
        if (!degree0_test(Hb)) {
            throw std::invalid_argument("DiscreteFunctional: factor " + H->to_string() +
                                        " is not homogeneous of degree 0 in (p, q)");
        }
        H_ = Hb;
    }
}

std::string DiscreteFunctional::describe() const
{
    return H_ ? "H = " + H_->to_string() : std::string("H = p/q");
}

Jet2 DiscreteFunctional::factor_jet(const Jet2& p, const Jet2& q) const
{
    if (!(std::fabs(q.value()) > floor_)) throw SingularityError("vanishing phi_x", q.value());
    if (!H_) return p / q;
    const Jet2 args[] = {p, q};
    return eval_jet(*H_, args);
}

std::array<Jet2, 2> DiscreteFunctional::density_terms(std::span<const double> d) const
{
    if (d.size() != 6) throw std::invalid_argument("density_terms: six derivatives expected");
    std::array<Jet2, 6> v;
    for (int s = 0; s < 6; ++s) v[uz(s)] = jet_var(s, d[uz(s)], 6);
    const Jet2 H = factor_jet(v[kPhiT], v[kPhiX]);
    return {v[kBarT] * v[kPsiX] * H, -(v[kPsiT] * v[kBarX]) * H};
}

double eval_density(const Jet2& phi, const Jet2& phibar, const Jet2& psi, const DiscreteFunctional& fn)
{
    if (phi.arity() != 2 || phibar.arity() != 2 || psi.arity() != 2) {
        throw std::invalid_argument("eval_density: jets over (t, x) expected");
    }
    const double J = phibar.d(0) * psi.d(1) - psi.d(0) * phibar.d(1);
    if (J == 0.0) return 0.0;
    const Jet2 p = Jet2::constant(phi.d(0), 0), q = Jet2::constant(phi.d(1), 0);
    return J * fn.factor_jet(p, q).value();
}

double eval_density(const Jet2& phi, const Jet2& phibar, const Jet2& psi, const std::optional<ExprSpec>& H)
{
    return eval_density(phi, phibar, psi, DiscreteFunctional(H));
}

const std::vector<double>& FieldGrid::field(VarField f) const
{
    switch (f) {
    case VarField::phi: return phi;
    case VarField::phibar: return phibar;
    case VarField::psi: return psi;
    }
    throw std::invalid_argument("FieldGrid: unknown field");
}

FieldGrid sample_field_grid(const FieldSampler& f, double t0, double x0, double ht, double hx, int nt, int nx)
{
    FieldGrid g{nt, nx, t0, x0, ht, hx, {}, {}, {}};
    for (int i = 0; i < nt; ++i) {
        for (int j = 0; j < nx; ++j) {
            const auto v = f(g.t(i), g.x(j));
            g.phi.push_back(v[0]);
            g.phibar.push_back(v[1]);
            g.psi.push_back(v[2]);
        }
    }
    require_grid(g);
    return g;
}

FieldGrid hodograph_field_grid(const HodographSolution& sol, const ExprSpec& W, double t0, double x0, double ht,
                               double hx, int nt, int nx, std::array<double, 2> seed)
{
    const ExprSpec Wb = bind_w(W);
    FieldGrid g{nt, nx, t0, x0, ht, hx, {}, {}, {}};
    std::array<double, 2> row_seed = seed;
    for (int i = 0; i < nt; ++i) {
        std::array<double, 2> s = row_seed;
        for (int j = 0; j < nx; ++j) {
            s = sol.invert(g.t(i), g.x(j), s);
            if (j == 0) row_seed = s;
            g.phi.push_back(s[1]);
            g.phibar.push_back(s[0]);
            g.psi.push_back(eval_w(Wb, s[0]));
        }
    }
    require_grid(g);
    return g;
}

FieldGrid field_grid_from_table(const CsvTable& table, const ExprSpec& W)
{
    const ExprSpec Wb = bind_w(W);
    const std::size_t ct = table.column("t"), cx = table.column("x");
    auto has = [&](const char* name) {
        return std::find(table.header.begin(), table.header.end(), name) != table.header.end();
    };
    const bool direct = has("phi") && has("phibar");
    std::map<double, std::map<double, std::array<double, 3>>> rows;
    for (const auto& r : table.rows) {
        std::array<double, 3> v{};
        if (direct) {
            v[0] = r[table.column("phi")];
            v[1] = r[table.column("phibar")];
            v[2] = has("psi") ? r[table.column("psi")] : eval_w(Wb, v[1]);
        } else {
            v[0] = r[table.column("v")];
            v[1] = r[table.column("u")];
            v[2] = eval_w(Wb, v[1]);
        }
        rows[r[ct]][r[cx]] = v;
    }
    if (rows.size() < 2) throw std::invalid_argument("field grid table: need at least two time levels");
    FieldGrid g;
    g.nt = static_cast<int>(rows.size());
    g.nx = static_cast<int>(rows.begin()->second.size());
    g.t0 = rows.begin()->first;
    g.x0 = rows.begin()->second.begin()->first;
    g.ht = (rows.rbegin()->first - g.t0) / (g.nt - 1);
    g.hx = (rows.begin()->second.rbegin()->first - g.x0) / (g.nx - 1);
    for (const auto& [t, row] : rows) {
        if (static_cast<int>(row.size()) != g.nx) throw std::invalid_argument("field grid table: ragged rows");
        for (const auto& [x, v] : row) {
            g.phi.push_back(v[0]);
            g.phibar.push_back(v[1]);
            g.psi.push_back(v[2]);
        }
    }
    // Uniform spacing to a relative 1e-9.
    int i = 0;
    for (const auto& [t, row] : rows) {
        if (std::fabs(t - g.t(i)) > 1e-9 * std::max(1.0, std::fabs(t))) {
            throw std::invalid_argument("field grid table: time levels are not uniform");
        }
        int j = 0;
        for (const auto& [x, v] : row) {
            if (std::fabs(x - g.x(j)) > 1e-9 * std::max(1.0, std::fabs(x))) {
                throw std::invalid_argument("field grid table: nodes are not uniform");
            }
            ++j;
        }
        ++i;
    }
    require_grid(g);
    return g;
}

CsvTable field_grid_table(const FieldGrid& g)
{
    CsvTable t;
    t.header = {"i", "j", "t", "x", "phi", "phibar", "psi"};
    for (int i = 0; i < g.nt; ++i) {
        for (int j = 0; j < g.nx; ++j) {
            t.rows.push_back({static_cast<double>(i), static_cast<double>(j), g.t(i), g.x(j), g.at(VarField::phi, i, j),
                              g.at(VarField::phibar, i, j), g.at(VarField::psi, i, j)});
        }
    }
    return t;
}

double discrete_action(const DiscreteFunctional& fn, const FieldGrid& grid)
{
    require_grid(grid);
    double s = 0.0;
    for (int i = 1; i < grid.nt - 1; ++i) {
        for (int j = 1; j < grid.nx - 1; ++j) {
            const auto d = node_derivs(grid, i, j);
            const auto terms = fn.density_terms(d);
            s += terms[0].value() + terms[1].value();
        }
    }
    return s * grid.ht * grid.hx;
}

ELResidual variational_residual(const DiscreteFunctional& fn, const FieldGrid& grid, VarField vary)
{
    require_grid(grid);
    const int nt = grid.nt, nx = grid.nx;
    const int st = slot_t(vary), sx = st + 1;
    // dL_m / d(field_t), dL_m / d(field_x) for each density term m at nodes 1..n-2.
    std::vector<std::array<double, 4>> part(uz(nt * nx));
    for (int i = 1; i < nt - 1; ++i) {
        for (int j = 1; j < nx - 1; ++j) {
            const auto d = node_derivs(grid, i, j);
            const auto terms = fn.density_terms(d);
            part[uz(i * nx + j)] = {terms[0].d(st), terms[1].d(st), terms[0].d(sx), terms[1].d(sx)};
        }
    }
    ELResidual r;
    r.vary = vary;
    r.nt = nt;
    r.nx = nx;
    r.raw.assign(uz(nt * nx), 0.0);
    r.scale.assign(uz(nt * nx), 0.0);
    for (int i = 2; i < nt - 2; ++i) {
        for (int j = 2; j < nx - 2; ++j) {
            // The nodal value enters the t-difference at rows i -+ 1 with
            // weight +-1/(2 ht), and the x-difference at columns j -+ 1.
            const auto& tm = part[uz((i - 1) * nx + j)];
            const auto& tp = part[uz((i + 1) * nx + j)];
            const auto& xm = part[uz(i * nx + j - 1)];
            const auto& xp = part[uz(i * nx + j + 1)];
            const double terms[] = {(tm[0] - tp[0]) / (2.0 * grid.ht), (tm[1] - tp[1]) / (2.0 * grid.ht),
                                    (xm[2] - xp[2]) / (2.0 * grid.hx), (xm[3] - xp[3]) / (2.0 * grid.hx)};
            const ResidualSample s = ResidualSample::from_terms(terms);
            r.raw[uz(i * nx + j)] = s.raw;
            r.scale[uz(i * nx + j)] = s.scale;
            r.global.add(s);
        }
    }
    return r;
}

CsvTable residual_table(const FieldGrid& g, const ELResidual& r)
{
    CsvTable t;
    t.header = {"i", "j", "t", "x", "raw", "scale"};
    for (int i = 2; i < g.nt - 2; ++i) {
        for (int j = 2; j < g.nx - 2; ++j) {
            const std::size_t id = uz(i * g.nx + j);
            t.rows.push_back({static_cast<double>(i), static_cast<double>(j), g.t(i), g.x(j), r.raw[id], r.scale[id]});
        }
    }
    return t;
}

Jet2 field_grid_jet(const FieldGrid& g, VarField f, int i, int j)
{
    if (i < 1 || i > g.nt - 2 || j < 1 || j > g.nx - 2) throw std::invalid_argument("field_grid_jet: boundary node");
    auto F = [&](int a, int b) { return g.at(f, i + a, j + b); };
    Jet2 J(2, F(0, 0));
    J.set_d(0, (F(1, 0) - F(-1, 0)) / (2.0 * g.ht));
    J.set_d(1, (F(0, 1) - F(0, -1)) / (2.0 * g.hx));
    J.set_dd(0, 0, (F(1, 0) - 2.0 * F(0, 0) + F(-1, 0)) / (g.ht * g.ht));
    J.set_dd(1, 1, (F(0, 1) - 2.0 * F(0, 0) + F(0, -1)) / (g.hx * g.hx));
    J.set_dd(0, 1, (F(1, 1) - F(1, -1) - F(-1, 1) + F(-1, -1)) / (4.0 * g.ht * g.hx));
    return J;
}

double DegeneracyReport::stationarity() const noexcept
{
    return std::max({phi, phibar, psi, combined});
}

DegeneracyReport onshell_degeneracy(const DiscreteFunctional& fn, const FieldGrid& grid, const ExprSpec& W)
{
    require_grid(grid);
    const ExprSpec Wb = bind_w(W);
    DegeneracyReport rep;
    rep.tolerance = 5.0 * grid.h() * grid.h();

    GlobalResidual shell;
    for (int i = 1; i < grid.nt - 1; ++i) {
        for (int j = 1; j < grid.nx - 1; ++j) {
            shell.add(res_another_complex_bateman(field_grid_jet(grid, VarField::phi, i, j),
                                                  field_grid_jet(grid, VarField::phibar, i, j)));
        }
    }
    rep.on_shell = shell.normalized();
    if (rep.on_shell > 10.0 * rep.tolerance) {
        throw std::invalid_argument("onshell_degeneracy: fields are not on-shell (residual " +
                                    format_double(rep.on_shell) + ")");
    }

    const ELResidual rphi = variational_residual(fn, grid, VarField::phi);
    const ELResidual rbar = variational_residual(fn, grid, VarField::phibar);
    const ELResidual rpsi = variational_residual(fn, grid, VarField::psi);
    rep.phi = rphi.normalized();
    rep.phibar = rbar.normalized();
    rep.psi = rpsi.normalized();

    // delta psi = W'(phibar) delta phibar.
    const ExprSpec dW = partial(Wb, "phibar");
    GlobalResidual comb;
    for (int i = 2; i < grid.nt - 2; ++i) {
        for (int j = 2; j < grid.nx - 2; ++j) {
            const std::size_t id = uz(i * grid.nx + j);
            const double w1 = eval_w(dW, grid.phibar[id]);
            comb.add(ResidualSample::make(rbar.raw[id] + w1 * rpsi.raw[id],
                                          rbar.scale[id] + std::fabs(w1) * rpsi.scale[id]));
        }
    }
    rep.combined = comb.normalized();

    double sum = 0.0, mag = 0.0;
    for (int i = 1; i < grid.nt - 1; ++i) {
        for (int j = 1; j < grid.nx - 1; ++j) {
            const auto terms = fn.density_terms(node_derivs(grid, i, j));
            sum += terms[0].value() + terms[1].value();
            mag += std::fabs(terms[0].value()) + std::fabs(terms[1].value());
        }
    }
    rep.divergence = sum == 0.0 ? 0.0 : std::fabs(sum) / std::max(mag, ResidualSample::kScaleFloor);
    return rep;
}

}  // namespace bateman
