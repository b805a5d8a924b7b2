#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace bateman {

/// Second-order truncated Taylor data of a scalar at a point: value,
/// gradient and (symmetric) Hessian with respect to `arity` independent
/// variables. Arithmetic on Jet2 applies the product and chain rules to
/// second order, so composed closed-form expressions carry exact first and
/// second derivatives.
///
/// Arity 0 is allowed for plain constants; it carries no derivatives and is
/// what scalar evaluation of expressions uses internally.
class Jet2 {
public:
    static constexpr int kMaxArity = 6;

    Jet2() = default;
    explicit Jet2(int arity, double value = 0.0);

    static Jet2 constant(double value, int arity) { return Jet2(arity, value); }

    int arity() const noexcept { return k_; }
    double value() const noexcept { return value_; }
    double d(int i) const noexcept { return grad_[static_cast<std::size_t>(i)]; }
    double dd(int i, int j) const noexcept { return hess_[index(i, j)]; }

    void set_value(double v) noexcept { value_ = v; }
    void set_d(int i, double v) noexcept { grad_[static_cast<std::size_t>(i)] = v; }
    // Writes both (i,j) and (j,i).
    void set_dd(int i, int j, double v) noexcept
    {
        hess_[index(i, j)] = v;
        hess_[index(j, i)] = v;
    }

    bool all_finite() const noexcept;

    Jet2& operator+=(const Jet2& b);
    Jet2& operator-=(const Jet2& b);
    Jet2& operator*=(const Jet2& b);
    Jet2& operator/=(const Jet2& b);

private:
    static constexpr std::size_t index(int i, int j) noexcept
    {
        return static_cast<std::size_t>(i * kMaxArity + j);
    }

    int k_ = 0;
    double value_ = 0.0;
    std::array<double, kMaxArity> grad_{};
    std::array<double, kMaxArity * kMaxArity> hess_{};
};

/// Seed for independent variable `index` among `arity` variables.
/// Throws std::invalid_argument unless 0 <= index < arity <= kMaxArity.
Jet2 jet_var(int index, double value, int arity);

enum class ArithOp { add, sub, mul, div };
enum class Func { exp, log, sin, cos, sqrt };

Jet2 jet_arith(const Jet2& a, const Jet2& b, ArithOp op);
Jet2 jet_func(const Jet2& a, Func f);

/// a^c for a constant exponent. Integral c uses repeated multiplication so
/// negative bases stay in the domain; non-integral c needs a positive base.
Jet2 jet_pow(const Jet2& a, double c);

/// Univariate chain rule: given f(a), f'(a), f''(a), returns the jet of f(a).
Jet2 jet_chain(const Jet2& a, double f0, double f1, double f2);

Jet2 operator+(const Jet2& a, const Jet2& b);
Jet2 operator-(const Jet2& a, const Jet2& b);
Jet2 operator*(const Jet2& a, const Jet2& b);
Jet2 operator/(const Jet2& a, const Jet2& b);
Jet2 operator-(const Jet2& a);

Jet2 operator+(const Jet2& a, double b);
Jet2 operator+(double a, const Jet2& b);
Jet2 operator-(const Jet2& a, double b);
Jet2 operator-(double a, const Jet2& b);
Jet2 operator*(const Jet2& a, double b);
Jet2 operator*(double a, const Jet2& b);
Jet2 operator/(const Jet2& a, double b);
Jet2 operator/(double a, const Jet2& b);

Jet2 exp(const Jet2& a);
Jet2 log(const Jet2& a);
Jet2 sin(const Jet2& a);
Jet2 cos(const Jet2& a);
Jet2 sqrt(const Jet2& a);
Jet2 pow(const Jet2& a, double c);

/// First-order jet of the partial derivative d/dx_i of `a`: value a.d(i),
/// gradient row i of the Hessian. The Hessian of the result is NOT known
/// (third derivatives are not carried) and is left zero; only use the
/// result's value and gradient.
Jet2 partial_jet(const Jet2& a, int i);

/// outer(inner(x)): `outer` is a jet over inner.size() variables evaluated at
/// the inner values; every inner jet shares the result arity.
Jet2 jet_compose(const Jet2& outer, std::span<const Jet2> inner);

}  // namespace bateman
