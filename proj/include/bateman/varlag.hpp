#pragma once

#include "bateman/construct.hpp"
#include "bateman/errors.hpp"
#include "bateman/expr.hpp"
#include "bateman/io.hpp"
#include "bateman/jet.hpp"
#include "bateman/residuals.hpp"

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bateman {

// Singular Lagrangian density over (t, x):
//   L = (phibar_t psi_x - psi_t phibar_x) * H(phi_t, phi_x),  H(p, q) = p/q by default.

/// Euler's relation p H_p + q H_q = 0 at 50 fixed pseudo-random (p, q),
/// relative tolerance 1e-10. H uses variables p and q.
bool degree0_test(const ExprSpec& H);

class DiscreteFunctional {
public:
    /// Throws std::invalid_argument when H fails degree0_test.
    explicit DiscreteFunctional(std::optional<ExprSpec> H = std::nullopt, double phi_x_floor = 1e-10);

    const std::optional<ExprSpec>& factor() const noexcept { return H_; }
    double phi_x_floor() const noexcept { return floor_; }
    std::string describe() const;

    /// H and its (p, q) gradient as a jet over whatever arity p and q carry.
    Jet2 factor_jet(const Jet2& p, const Jet2& q) const;

    /// The two bilinear terms of L as jets over the six first derivatives
    /// (phi_t, phi_x, phibar_t, phibar_x, psi_t, psi_x): L = terms[0] + terms[1].
    std::array<Jet2, 2> density_terms(std::span<const double> derivs) const;

private:
    std::optional<ExprSpec> H_;
    double floor_;
};

/// Density from field jets over (t, x). Returns 0 when the Jacobian factor is
/// exactly 0; otherwise throws SingularityError when |phi_x| <= floor.
double eval_density(const Jet2& phi, const Jet2& phibar, const Jet2& psi, const DiscreteFunctional& fn);
double eval_density(const Jet2& phi, const Jet2& phibar, const Jet2& psi,
                    const std::optional<ExprSpec>& H = std::nullopt);

enum class VarField { phi = 0, phibar = 1, psi = 2 };

/// Nodal values on a uniform (t, x) grid, row-major [i * nx + j], i in time.
struct FieldGrid {
    int nt = 0, nx = 0;
    double t0 = 0.0, x0 = 0.0, ht = 0.0, hx = 0.0;
    std::vector<double> phi, phibar, psi;

    const std::vector<double>& field(VarField f) const;
    double at(VarField f, int i, int j) const { return field(f)[static_cast<std::size_t>(i * nx + j)]; }
    double t(int i) const noexcept { return t0 + ht * i; }
    double x(int j) const noexcept { return x0 + hx * j; }
    double h() const noexcept { return ht > hx ? ht : hx; }
};

using FieldSampler = std::function<std::array<double, 3>(double t, double x)>;

FieldGrid sample_field_grid(const FieldSampler& f, double t0, double x0, double ht, double hx, int nt, int nx);

/// phi = v, phibar = u of a hodograph solution, psi = W(phibar) with W in
/// the variable "phibar". Inversion continues along rows from `seed` at
/// (t0, x0).
FieldGrid hodograph_field_grid(const HodographSolution& sol, const ExprSpec& W, double t0, double x0, double ht,
                               double hx, int nt, int nx, std::array<double, 2> seed);

/// Reads a grid CSV: either columns t, x, phi, phibar, psi, or the hydro
/// dump (t, x, u, v) with phi = v, phibar = u and psi = W(phibar).
FieldGrid field_grid_from_table(const CsvTable& table, const ExprSpec& W);
CsvTable field_grid_table(const FieldGrid& grid);

/// Midpoint sum of L over nodes 1..n-2 (centered differences) times ht hx.
double discrete_action(const DiscreteFunctional& fn, const FieldGrid& grid);

struct ELResidual {
    VarField vary = VarField::psi;
    int nt = 0, nx = 0;
    std::vector<double> raw;    // (dS / d nodal value) / (ht hx); 0 outside nodes 2..n-3
    std::vector<double> scale;  // sum of |difference quotients| of each density term
    GlobalResidual global;

    double normalized() const noexcept { return global.normalized(); }
};

/// Exact derivative of the discrete action with respect to each interior
/// nodal value of `vary`. Throws std::invalid_argument for grids with fewer
/// than 5 nodes per axis.
ELResidual variational_residual(const DiscreteFunctional& fn, const FieldGrid& grid, VarField vary);

CsvTable residual_table(const FieldGrid& grid, const ELResidual& r);

/// Centered-difference jet over (t, x) at an interior node.
Jet2 field_grid_jet(const FieldGrid& grid, VarField f, int i, int j);

struct DegeneracyReport {
    double on_shell = 0.0;     // Eq-of-motion residual of (phi, phibar), global normalized
    double phi = 0.0;          // vary phi
    double phibar = 0.0;       // vary phibar
    double psi = 0.0;          // vary psi
    double combined = 0.0;     // vary phibar with psi = W(phibar) following along
    double divergence = 0.0;   // |sum L| / sum(|L terms|)
    double tolerance = 0.0;    // 5 h^2

    double stationarity() const noexcept;
    bool pass() const noexcept { return stationarity() <= tolerance && divergence <= tolerance; }
};

/// Throws std::invalid_argument when (phi, phibar) miss the hydrodynamic
/// second-order equation by more than 10x tolerance.
DegeneracyReport onshell_degeneracy(const DiscreteFunctional& fn, const FieldGrid& grid, const ExprSpec& W);

}  // namespace bateman
