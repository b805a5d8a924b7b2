#pragma once

#include "bateman/construct.hpp"
#include "bateman/errors.hpp"
#include "bateman/expr.hpp"
#include "bateman/io.hpp"
#include "bateman/jet.hpp"
#include "bateman/residuals.hpp"

#include <array>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace bateman {

/// Complete homogeneous symmetric polynomial by S_n = u^n + v S_{n-1}, S_0 = 1.
double sn_polynomial(double u, double v, int n);
Jet2 sn_polynomial(const Jet2& u, const Jet2& v, int n);

// ---------------------------------------------------------------------------
// One space dimension: u_t = v u_x, v_t = u v_x.
// u is constant along dx/dt = -v, v along dx/dt = -u.

struct CharGridSpec {
    int nx = 128;
    double x0 = 0.0;
    double length = 2.0 * std::numbers::pi;  // periodic period, or [x0, x0 + length] clamped
    double t0 = 0.0;
    double t_end = 1.0;
    double cfl = 0.5;
    double dt = 0.0;  // requested step; 0 picks one from cfl with a 5% margin
    bool periodic = true;
    int max_sweeps = 10;
    double sweep_tol = 1e-12;  // foot-point tolerance in units of h

    void validate() const;
};

enum class GridField { u = 0, v = 1 };

struct CharGrid {
    std::vector<double> t;                   // levels
    std::vector<double> x;                   // nodes
    std::vector<std::vector<double>> u, v;   // [level][node]
    double h = 0.0;
    double dt = 0.0;
    double cfl = 0.5;
    bool periodic = true;
    double length = 0.0;

    int levels() const noexcept { return static_cast<int>(t.size()); }
    int nodes() const noexcept { return static_cast<int>(x.size()); }
    const std::vector<double>& field(GridField f, int level) const;
};

/// Cubic Lagrange interpolation of a stored level at position `x`.
double interpolate(const CharGrid& grid, GridField f, int level, double x);

enum class AbortKind { cfl, crossing };

struct MultiCharGrid;

/// Integration stopped before t_end. Carries the levels computed so far.
class IntegrationAbort : public NumericalError {
public:
    IntegrationAbort(AbortKind kind, int level, const std::string& what);

    AbortKind kind() const noexcept { return kind_; }
    int level() const noexcept { return level_; }

    std::shared_ptr<const CharGrid> partial_1d;
    std::shared_ptr<const MultiCharGrid> partial_2d;

private:
    AbortKind kind_;
    int level_;
};

using Profile = std::function<double(double)>;

/// Expression in the variable x (or constant).
Profile profile_from_expr(const ExprSpec& e);

/// Semi-Lagrangian characteristic integration. Throws IntegrationAbort on
/// CFL violation or characteristic crossing, ConvergenceError when the
/// foot-point iteration stalls.
CharGrid integrate_characteristics(const Profile& u0, const Profile& v0, const CharGridSpec& spec);
CharGrid integrate_characteristics(const ExprSpec& u0, const ExprSpec& v0, const CharGridSpec& spec);

/// Centered-difference jet over (t, x) at an interior level; boundary nodes
/// of clamped grids are rejected.
Jet2 grid_jet(const CharGrid& grid, GridField f, int level, int node);

/// Nodes where centered stencils exist: all of them when periodic.
std::vector<int> interior_nodes(const CharGrid& grid);

/// max |d_t S_n - d_x(u v S_{n-1})| over interior space-time nodes by centered
/// differences of the two quantities, divided by the largest term magnitude.
double conservation_drift(const CharGrid& grid, int n);

struct TransportCheck {
    GlobalResidual u;  // u_t - v u_x
    GlobalResidual v;  // v_t - u v_x
    double normalized() const noexcept { return std::max(u.normalized(), v.normalized()); }
};

TransportCheck transport_residual(const CharGrid& grid);

/// Largest change per unit time of the carried invariant along `curves`
/// characteristics traced (Heun) from evenly spaced starting nodes.
double riemann_variation(const CharGrid& grid, GridField carried, int curves);

struct HodographComparison {
    double max_error = 0.0;
    std::size_t compared = 0;
    CharGrid grid;
};

/// Samples (u, v) of an exact hodograph solution at t0 on [x_lo, x_hi],
/// integrates with clamped boundaries to t1 and compares with the exact
/// fields at nodes outside the boundary's domain of influence.
HodographComparison hodograph_cross_check(const HodographSolution& sol, double x_lo, double x_hi, int nx,
                                          double t0, double t1, std::array<double, 2> seed_at_x_lo,
                                          double cfl = 0.5);

CsvTable grid_table(const CharGrid& grid);
std::string grid_sidecar(const CharGrid& grid);
/// Writes `path` and `path + ".json"`.
void write_grid(const CharGrid& grid, const std::string& path);

// ---------------------------------------------------------------------------
// Two space dimensions (x2, x3), time-like x1, periodic square:
//   u^i_{x1} + v^1 u^i_{x2} + v^2 u^i_{x3} = 0,
//   v^i_{x1} + u^1 v^i_{x2} + u^2 v^i_{x3} = 0.

struct MultiGridSpec {
    int n = 32;
    double length = 2.0 * std::numbers::pi;
    double t_end = 0.5;
    double cfl = 0.5;
    double dt = 0.0;
    int max_sweeps = 10;
    double sweep_tol = 1e-12;

    void validate() const;
};

/// Field order u1, u2, v1, v2.
struct MultiCharGrid {
    std::vector<double> t;
    int n = 0;
    double h = 0.0;
    double dt = 0.0;
    double cfl = 0.5;
    std::vector<std::array<std::vector<double>, 4>> f;  // [level][field][j * n + k]

    int levels() const noexcept { return static_cast<int>(t.size()); }
    double coord(int j) const noexcept { return h * j; }
    double at(int level, int field, int j, int k) const;  // periodic indices
};

MultiCharGrid integrate_multifield(const std::array<ExprSpec, 4>& init, const MultiGridSpec& spec);

double interpolate(const MultiCharGrid& grid, int field, int level, double x2, double x3);

/// Centered-difference jets over (x1, x2, x3), interior level.
std::array<Jet2, 4> multigrid_jets(const MultiCharGrid& grid, int level, int j, int k);

struct MultifieldCheck {
    GlobalResidual det1, det2;
    double normalized() const noexcept { return std::max(det1.normalized(), det2.normalized()); }
};

/// res_multifield_det with phi^j = u^j, phibar^j = v^j at every interior
/// space-time node, j = 1 and 2.
MultifieldCheck multifield_det_residual(const MultiCharGrid& grid);

CsvTable multigrid_table(const MultiCharGrid& grid);

}  // namespace bateman
