#pragma once

#include "bateman/errors.hpp"
#include "bateman/expr.hpp"
#include "bateman/implicit.hpp"
#include "bateman/jet.hpp"
#include "bateman/residuals.hpp"

#include <span>
#include <string>
#include <vector>

namespace bateman {

// Constrained holomorphic construction on 2n coordinates
// (x1..xn, xb1..xbn), n in {2, 3}, with n-1 unknowns phi:
//   Q^i(phi; x1..xn) = P^i(phi; xb1..xbn).
// Unknowns are named "phi" (n = 2, "phi1" also accepted) or "phi1", "phi2".

class LeznovSystem {
public:
    LeznovSystem(int n, std::vector<ExprSpec> Q, std::vector<ExprSpec> P, ImplicitSolveConfig cfg = {});

    int n() const noexcept { return n_; }
    int unknowns() const noexcept { return n_ - 1; }
    int coords() const noexcept { return 2 * n_; }

    const std::vector<std::string>& phi_names() const noexcept { return phi_names_; }
    /// Q bound to (phi..., x1..xn), P bound to (phi..., xb1..xbn).
    const std::vector<ExprSpec>& Q() const noexcept { return Q_; }
    const std::vector<ExprSpec>& P() const noexcept { return P_; }
    /// As given, before binding; has_var reflects actual use.
    const std::vector<ExprSpec>& Q_source() const noexcept { return Q_src_; }
    const std::vector<ExprSpec>& P_source() const noexcept { return P_src_; }
    /// dQ[j][k] = Q^j_{x_{k+1}}, dP[j][k] = P^j_{xb_{k+1}} at fixed phi.
    const std::vector<std::vector<ExprSpec>>& dQ() const noexcept { return dQ_; }
    const std::vector<std::vector<ExprSpec>>& dP() const noexcept { return dP_; }

    const ImplicitSolveConfig& config() const noexcept { return cfg_; }
    /// cfg.seed_vec when it has n-1 entries, otherwise cfg.seed repeated.
    std::vector<double> default_seed() const;

    /// x-block and xb-block variable names of the 2n coordinates.
    std::vector<std::string> coordinate_names() const;

private:
    int n_;
    std::vector<std::string> phi_names_;
    std::vector<ExprSpec> Q_src_, P_src_, Q_, P_;
    std::vector<std::vector<ExprSpec>> dQ_, dP_;
    ImplicitSolveConfig cfg_;
};

struct ConstraintSolution {
    std::vector<double> phi;
    std::vector<Jet2> jets;   // phi^i over the 2n coordinates
    double residual = 0.0;    // max_j |Q^j - P^j| at the root
};

/// Newton on Q - P = 0, then first and second derivatives by implicit
/// differentiation. Throws DegenerateError when P_phi - Q_phi is singular.
ConstraintSolution solve_constraints(const LeznovSystem& sys, std::span<const double> point,
                                     std::span<const double> seed);
ConstraintSolution solve_constraints(const LeznovSystem& sys, std::span<const double> point);

/// phi^i as fields (each evaluation solves from the default seed).
std::vector<FieldHandle> leznov_fields(const LeznovSystem& sys);

/// v = -(Q_x)^-1 Q_{x_n} and u = -(P_xb)^-1 P_{xb_n}, x = (x1..x_{n-1}), with
/// phi substituted; jets over the 2n coordinates.
struct SpeedJets {
    std::vector<Jet2> u, v;
};

SpeedJets speed_jets(const LeznovSystem& sys, const ConstraintSolution& sol, std::span<const double> point);

struct SpeedFields {
    std::vector<FieldHandle> u, v;
};

/// Throws DegenerateError when Q does not depend on every x1..x_{n-1} (or P
/// on xb1..xb_{n-1}); pointwise singularity is reported at evaluation.
SpeedFields derive_speeds(const LeznovSystem& sys);

/// Which speeds the operators carry.
///   v_on_x_block: D = d/dx_n + sum v^k d/dx_k,  Dbar = d/dxb_n + sum u^k d/dxb_k
///   u_on_x_block: D = d/dx_n + sum u^k d/dx_k,  Dbar = d/dxb_n + sum v^k d/dxb_k
/// Only v_on_x_block annihilates the constructed phi.
enum class SpeedBinding { v_on_x_block, u_on_x_block };
enum class LeznovOperator { D, Dbar };

/// Speed values at a point; each of size n-1.
struct SpeedValues {
    std::vector<double> u, v;
};

SpeedValues speed_values(const SpeedJets& s);

/// D field or Dbar field from the field's jet over the 2n coordinates.
ResidualSample apply_D(const Jet2& field, const SpeedValues& speeds, LeznovOperator op, SpeedBinding binding);
ResidualSample apply_D(const FieldHandle& field, const SpeedFields& speeds, std::span<const double> point,
                       LeznovOperator op, SpeedBinding binding);

/// [D, Dbar] applied to every coordinate function: D of the xb-block speeds
/// and Dbar of the x-block speeds, at each point.
ResidualReport verify_zero_curvature(const SpeedFields& speeds, const std::vector<std::vector<double>>& points,
                                     SpeedBinding binding);

/// Q^j_{x_n} + sum v^k Q^j_{x_k} and P^j_{xb_n} + sum u^k P^j_{xb_k}.
std::vector<ResidualSample> holomorphy_conditions(const LeznovSystem& sys, std::span<const double> point);

/// Dbar u^i must depend only on (u, xb) (v_on_x_block binding). Holds phi
/// and xb fixed, moves x_n by multiples of `step` (solving Q = P for
/// x1..x_{n-1}) and returns the largest spread of Dbar u^i over the samples,
/// relative to max(1, |Dbar u^i|).
double antiholomorphic_spread(const LeznovSystem& sys, std::span<const double> point, int samples, double step);

}  // namespace bateman
