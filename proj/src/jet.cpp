#include "bateman/jet.hpp"

#include "bateman/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bateman {

namespace {

void check_arity(const Jet2& a, const Jet2& b)
{
    if (a.arity() != b.arity()) {
        throw std::invalid_argument("jet arity mismatch: " + std::to_string(a.arity()) + " vs " +
                                    std::to_string(b.arity()));
    }
}

void ensure_finite(const Jet2& r, const char* op, double offending)
{
    if (!r.all_finite()) {
        throw SingularityError(op, offending);
    }
}

bool is_integral(double c)
{
    return std::isfinite(c) && std::nearbyint(c) == c && std::fabs(c) <= 1024.0;
}

}  // namespace

SingularityError::SingularityError(std::string op, double value)
    : NumericalError("singular " + op + " at value " + std::to_string(value)),
      op_(std::move(op)),
      value_(value)
{
}

ParseError::ParseError(const std::string& message, std::size_t position)
    : std::runtime_error(message + " at position " + std::to_string(position)), position_(position)
{
}

Jet2::Jet2(int arity, double value) : k_(arity), value_(value)
{
    if (arity < 0 || arity > kMaxArity) {
        throw std::invalid_argument("jet arity out of range: " + std::to_string(arity));
    }
}

bool Jet2::all_finite() const noexcept
{
    if (!std::isfinite(value_)) return false;
    for (int i = 0; i < k_; ++i) {
        if (!std::isfinite(d(i))) return false;
        for (int j = i; j < k_; ++j) {
            if (!std::isfinite(dd(i, j))) return false;
        }
    }
    return true;
}

Jet2& Jet2::operator+=(const Jet2& b)
{
    check_arity(*this, b);
    value_ += b.value_;
    for (int i = 0; i < k_; ++i) {
        grad_[i] += b.grad_[i];
        for (int j = i; j < k_; ++j) set_dd(i, j, dd(i, j) + b.dd(i, j));
    }
    return *this;
}

Jet2& Jet2::operator-=(const Jet2& b)
{
    check_arity(*this, b);
    value_ -= b.value_;
    for (int i = 0; i < k_; ++i) {
        grad_[i] -= b.grad_[i];
        for (int j = i; j < k_; ++j) set_dd(i, j, dd(i, j) - b.dd(i, j));
    }
    return *this;
}

Jet2& Jet2::operator*=(const Jet2& b)
{
    check_arity(*this, b);
    Jet2 r(k_, value_ * b.value_);
    for (int i = 0; i < k_; ++i) {
        r.grad_[i] = grad_[i] * b.value_ + value_ * b.grad_[i];
        for (int j = i; j < k_; ++j) {
            r.set_dd(i, j,
                     dd(i, j) * b.value_ + value_ * b.dd(i, j) + grad_[i] * b.grad_[j] +
                         b.grad_[i] * grad_[j]);
        }
    }
    *this = r;
    return *this;
}

Jet2& Jet2::operator/=(const Jet2& b)
{
    check_arity(*this, b);
    if (b.value_ == 0.0) throw SingularityError("div", b.value_);
    // a/b = a * (1/b); reciprocal via chain rule keeps the Hessian symmetric.
    const double inv = 1.0 / b.value_;
    *this *= jet_chain(b, inv, -inv * inv, 2.0 * inv * inv * inv);
    ensure_finite(*this, "div", b.value_);
    return *this;
}

Jet2 jet_var(int index, double value, int arity)
{
    if (arity < 1 || arity > Jet2::kMaxArity) {
        throw std::invalid_argument("jet_var: arity out of range: " + std::to_string(arity));
    }
    if (index < 0 || index >= arity) {
        throw std::invalid_argument("jet_var: index " + std::to_string(index) +
                                    " out of range for arity " + std::to_string(arity));
    }
    Jet2 r(arity, value);
    r.set_d(index, 1.0);
    return r;
}

Jet2 jet_chain(const Jet2& a, double f0, double f1, double f2)
{
    const int k = a.arity();
    Jet2 r(k, f0);
    for (int i = 0; i < k; ++i) {
        r.set_d(i, f1 * a.d(i));
        for (int j = i; j < k; ++j) r.set_dd(i, j, f2 * a.d(i) * a.d(j) + f1 * a.dd(i, j));
    }
    return r;
}

Jet2 jet_arith(const Jet2& a, const Jet2& b, ArithOp op)
{
    switch (op) {
        case ArithOp::add: return a + b;
        case ArithOp::sub: return a - b;
        case ArithOp::mul: return a * b;
        case ArithOp::div: return a / b;
    }
    throw std::invalid_argument("jet_arith: unknown op");
}

Jet2 jet_func(const Jet2& a, Func f)
{
    const double x = a.value();
    Jet2 r;
    switch (f) {
        case Func::exp: {
            const double e = std::exp(x);
            r = jet_chain(a, e, e, e);
            ensure_finite(r, "exp", x);
            return r;
        }
        case Func::log:
            if (!(x > 0.0)) throw SingularityError("log", x);
            r = jet_chain(a, std::log(x), 1.0 / x, -1.0 / (x * x));
            ensure_finite(r, "log", x);
            return r;
        case Func::sin:
            return jet_chain(a, std::sin(x), std::cos(x), -std::sin(x));
        case Func::cos:
            return jet_chain(a, std::cos(x), -std::sin(x), -std::cos(x));
        case Func::sqrt: {
            if (!(x > 0.0)) throw SingularityError("sqrt", x);
            const double s = std::sqrt(x);
            r = jet_chain(a, s, 0.5 / s, -0.25 / (s * x));
            ensure_finite(r, "sqrt", x);
            return r;
        }
    }
    throw std::invalid_argument("jet_func: unknown function");
}

Jet2 jet_pow(const Jet2& a, double c)
{
    if (is_integral(c)) {
        long n = static_cast<long>(c);
        const bool negative = n < 0;
        if (negative) n = -n;
        Jet2 result = Jet2::constant(1.0, a.arity());
        Jet2 base = a;
        while (n > 0) {
            if (n & 1) result *= base;
            n >>= 1;
            if (n > 0) base *= base;
        }
        if (negative) {
            if (result.value() == 0.0) throw SingularityError("pow", a.value());
            result = Jet2::constant(1.0, a.arity()) / result;
        }
        ensure_finite(result, "pow", a.value());
        return result;
    }
    const double x = a.value();
    if (!(x > 0.0)) throw SingularityError("pow", x);
    const double p = std::pow(x, c);
    Jet2 r = jet_chain(a, p, c * p / x, c * (c - 1.0) * p / (x * x));
    ensure_finite(r, "pow", x);
    return r;
}

Jet2 operator+(const Jet2& a, const Jet2& b) { Jet2 r = a; r += b; return r; }
Jet2 operator-(const Jet2& a, const Jet2& b) { Jet2 r = a; r -= b; return r; }
Jet2 operator*(const Jet2& a, const Jet2& b) { Jet2 r = a; r *= b; return r; }
Jet2 operator/(const Jet2& a, const Jet2& b) { Jet2 r = a; r /= b; return r; }

Jet2 operator-(const Jet2& a)
{
    return jet_chain(a, -a.value(), -1.0, 0.0);
}

Jet2 operator+(const Jet2& a, double b) { return a + Jet2::constant(b, a.arity()); }
Jet2 operator+(double a, const Jet2& b) { return Jet2::constant(a, b.arity()) + b; }
Jet2 operator-(const Jet2& a, double b) { return a - Jet2::constant(b, a.arity()); }
Jet2 operator-(double a, const Jet2& b) { return Jet2::constant(a, b.arity()) - b; }
Jet2 operator*(const Jet2& a, double b) { return jet_chain(a, a.value() * b, b, 0.0); }
Jet2 operator*(double a, const Jet2& b) { return b * a; }
Jet2 operator/(const Jet2& a, double b) { return a / Jet2::constant(b, a.arity()); }
Jet2 operator/(double a, const Jet2& b) { return Jet2::constant(a, b.arity()) / b; }

Jet2 exp(const Jet2& a) { return jet_func(a, Func::exp); }
Jet2 log(const Jet2& a) { return jet_func(a, Func::log); }
Jet2 sin(const Jet2& a) { return jet_func(a, Func::sin); }
Jet2 cos(const Jet2& a) { return jet_func(a, Func::cos); }
Jet2 sqrt(const Jet2& a) { return jet_func(a, Func::sqrt); }
Jet2 pow(const Jet2& a, double c) { return jet_pow(a, c); }

Jet2 partial_jet(const Jet2& a, int i)
{
    if (i < 0 || i >= a.arity()) throw std::invalid_argument("partial_jet: index out of range");
    Jet2 r(a.arity(), a.d(i));
    for (int j = 0; j < a.arity(); ++j) r.set_d(j, a.dd(i, j));
    return r;
}

Jet2 jet_compose(const Jet2& outer, std::span<const Jet2> inner)
{
    const int m = outer.arity();
    if (static_cast<std::size_t>(m) != inner.size()) {
        throw std::invalid_argument("jet_compose: outer arity does not match inner count");
    }
    const int k = inner.empty() ? 0 : inner[0].arity();
    for (const Jet2& g : inner) {
        if (g.arity() != k) throw std::invalid_argument("jet_compose: inner arity mismatch");
    }
    Jet2 r(k, outer.value());
    for (int i = 0; i < k; ++i) {
        double gi = 0.0;
        for (int a = 0; a < m; ++a) gi += outer.d(a) * inner[static_cast<std::size_t>(a)].d(i);
        r.set_d(i, gi);
        for (int j = i; j < k; ++j) {
            double h = 0.0;
            for (int a = 0; a < m; ++a) {
                const Jet2& ga = inner[static_cast<std::size_t>(a)];
                h += outer.d(a) * ga.dd(i, j);
                for (int b = 0; b < m; ++b) {
                    h += outer.dd(a, b) * ga.d(i) * inner[static_cast<std::size_t>(b)].d(j);
                }
            }
            r.set_dd(i, j, h);
        }
    }
    return r;
}

}  // namespace bateman
