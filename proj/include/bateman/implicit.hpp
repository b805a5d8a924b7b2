#pragma once

#include "bateman/jet.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bateman {

struct ImplicitSolveConfig {
    double newton_tol = 1e-12;  // on |constraint|, relative to max(1, term scale)
    int max_iter = 50;
    std::optional<std::pair<double, double>> bracket;  // scalar bisection fallback
    double seed = 0.0;
    std::vector<double> seed_vec;  // multi-unknown solves; empty means all `seed`
    double degenerate_rel = 1e-10;

    void validate() const;
    std::string describe() const;
};

// Dense row-major n x n helpers for the small systems in this library.

/// Solves A x = b by LU with partial pivoting. Throws DegenerateError on an
/// exactly singular pivot.
std::vector<double> lu_solve(std::vector<double> a, std::vector<double> b, std::size_t n);

/// 1-norm condition number via the explicit inverse (fine for n <= 8).
/// Returns +inf for singular matrices.
double condition_number(const std::vector<double>& a, std::size_t n);

/// Second-order Taylor data of m constraints C(y, x) = 0 in m unknowns y and
/// k coordinates x. Variables are ordered (y_0..y_{m-1}, x_0..x_{k-1}).
///
/// Constraints are usually differences of blocks (F(y, x) - G(y, xbar)), so
/// jets are accumulated block by block; `abs_dy` keeps the sum of absolute
/// block contributions to dC/dy for the degeneracy test.
class ConstraintJets {
public:
    ConstraintJets(int m, int k);

    int unknowns() const noexcept { return m_; }
    int coords() const noexcept { return k_; }

    /// Adds sign * block to constraint `eq`; `vars[i]` is the global variable
    /// index of the block's i-th jet variable.
    void add_block(int eq, const Jet2& block, std::span<const int> vars, double sign = 1.0);
    void add_block(int eq, const Jet2& block, std::initializer_list<int> vars, double sign = 1.0)
    {
        add_block(eq, block, std::span<const int>(vars.begin(), vars.size()), sign);
    }

    double value(int eq) const { return value_[static_cast<std::size_t>(eq)]; }
    double d(int eq, int var) const { return grad_[gi(eq, var)]; }
    double dd(int eq, int a, int b) const { return hess_[hi(eq, a, b)]; }
    double abs_dy(int eq, int y) const { return abs_dy_[static_cast<std::size_t>(eq * m_ + y)]; }

    /// Throws DegenerateError when dC/dy is (relatively) singular:
    /// |det| <= rel * permanent(abs_dy) for m <= 2, condition number > 1/rel
    /// otherwise.
    void check_regular(double rel) const;

    /// Jets of y(x) by implicit differentiation, each of arity k (k <= 6).
    std::vector<Jet2> solve_jets(double degenerate_rel) const;

private:
    std::size_t gi(int eq, int var) const
    {
        return static_cast<std::size_t>(eq) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(var);
    }
    std::size_t hi(int eq, int a, int b) const
    {
        return (static_cast<std::size_t>(eq) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(a)) *
                   static_cast<std::size_t>(n_) +
               static_cast<std::size_t>(b);
    }

    int m_, k_, n_;
    std::vector<double> value_;
    std::vector<double> grad_;
    std::vector<double> hess_;
    std::vector<double> abs_dy_;
};

/// Residual, derivative and term scale of a scalar constraint in one unknown.
struct ScalarEval {
    double value = 0.0;
    double derivative = 0.0;
    double scale = 1.0;  // magnitude of the terms making up `value`
};

/// Newton from cfg.seed; on failure, bisection inside cfg.bracket (when set
/// and sign-changing) followed by a Newton polish.
double newton_scalar(const std::function<ScalarEval(double)>& f, const ImplicitSolveConfig& cfg);

struct VectorEval {
    std::vector<double> value;     // m
    std::vector<double> jacobian;  // m x m row-major
    double scale = 1.0;
};

/// Damped Newton in m unknowns starting from `y0`.
std::vector<double> newton_vector(const std::function<VectorEval(std::span<const double>)>& f,
                                  std::vector<double> y0, const ImplicitSolveConfig& cfg);

}  // namespace bateman
