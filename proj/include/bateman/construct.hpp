#pragma once

#include "bateman/expr.hpp"
#include "bateman/implicit.hpp"
#include "bateman/jet.hpp"

#include <array>
#include <utility>

namespace bateman {

/// t' = a t + b x + shift_t, x' = c t + d x + shift_x.
struct LinearMap2 {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;
    double shift_t = 0.0, shift_x = 0.0;

    double det() const noexcept { return a * d - b * c; }
    std::array<double, 2> apply(double t, double x) const;
    /// Throws std::invalid_argument when det() == 0.
    std::array<double, 2> inverse_apply(double tp, double xp) const;
};

using FieldPair = std::pair<FieldHandle, FieldHandle>;

/// phi(x1, x2, xb1, xb2) solving F(phi; x1, x2) = G(phi; xb1, xb2).
/// F may use variables phi, x1, x2; G may use phi, xb1, xb2.
FieldHandle solve_implicit_fg(const ExprSpec& F, const ExprSpec& G, const ImplicitSolveConfig& cfg);

/// f(x1, x2) + g(xb1, xb2).
FieldHandle holo_sum(const ExprSpec& f, const ExprSpec& g);

/// The parametric family t = f'(u) + g'(v), x = f - u f' + g - v g'.
/// Fields over (t, x): phi = v, phibar = u.
class HodographSolution {
public:
    /// f uses variable u, g uses variable v. cfg.seed_vec, when of size 2,
    /// seeds (u, v); otherwise (seed, seed + 1).
    HodographSolution(const ExprSpec& f, const ExprSpec& g, ImplicitSolveConfig cfg);

    std::array<double, 2> forward(double u, double v) const;
    /// (t, x) as jets over (u, v).
    std::array<Jet2, 2> forward_jets(double u, double v) const;

    /// Newton preimage of (t, x).
    std::array<double, 2> invert(double t, double x) const;
    std::array<double, 2> invert(double t, double x, std::array<double, 2> seed) const;

    /// Jets of (u, v) over (t, x) at the preimage found from `seed`.
    std::array<Jet2, 2> jets(double t, double x, std::array<double, 2> seed) const;

    FieldHandle phi() const;     // v
    FieldHandle phibar() const;  // u
    FieldPair fields() const { return {phi(), phibar()}; }

    std::array<double, 2> default_seed() const;
    const ImplicitSolveConfig& config() const noexcept { return cfg_; }

private:
    ExprSpec f_, g_, f1_, g1_, f2_, g2_;
    ImplicitSolveConfig cfg_;
};

FieldPair parametric_hodograph(const ExprSpec& f, const ExprSpec& g, const ImplicitSolveConfig& cfg);

/// Speed transform induced by a linear change of coordinates:
/// u' = (d u - c) / (a - b u). Throws SingularityError at the pole.
std::array<double, 2> moebius_transform(std::array<double, 2> uv, const LinearMap2& map);
double moebius_transform(double u, const LinearMap2& map);

/// Pull-back of a field over (t, x) to the primed coordinates.
FieldHandle transform_field(const FieldHandle& field, const LinearMap2& map);
FieldPair transform_solution(const FieldPair& pair, const LinearMap2& map);

/// First and second derivatives of a field known only through its gradient.
/// Both mixed derivatives are kept so integrability can be checked.
struct GradientJet {
    double phi_t = 0.0, phi_x = 0.0;
    double phi_tt = 0.0;
    double phi_xx = 0.0;
    double phi_x_t = 0.0;  // d/dt of phi_x
    double phi_t_x = 0.0;  // d/dx of phi_t

    /// Arity-2 jet over (t, x) with value 0 (phi is defined up to a
    /// constant) and the mean of the two mixed derivatives.
    Jet2 as_jet() const;
};

/// phi_x = sqrt(lambda) / (sqrt u - sqrt v), phi_t = sqrt(lambda u v) / (sqrt u - sqrt v)
/// with u, v fields over (t, x).
class BornInfeldField {
public:
    BornInfeldField(FieldHandle u, FieldHandle v, double lambda);

    GradientJet operator()(std::span<const double> point) const;
    GradientJet operator()(std::initializer_list<double> point) const
    {
        return (*this)(std::span<const double>(point.begin(), point.size()));
    }

    /// Pointwise formulas, for given u, v jets over (t, x).
    static GradientJet from_jets(const Jet2& u, const Jet2& v, double lambda);

    double lambda() const noexcept { return lambda_; }

private:
    FieldHandle u_, v_;
    double lambda_;
};

BornInfeldField born_infeld_field(const FieldHandle& u, const FieldHandle& v, double lambda);

/// phi(t, x, y) solving t F(phi) + x G(phi) + y K(phi) = c.
FieldHandle implicit_3d(const ExprSpec& F, const ExprSpec& G, const ExprSpec& K, double c,
                        const ImplicitSolveConfig& cfg);

}  // namespace bateman
