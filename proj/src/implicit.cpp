#include "bateman/implicit.hpp"

#include "bateman/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace bateman {

void ImplicitSolveConfig::validate() const
{
    if (!(newton_tol > 0.0)) throw std::invalid_argument("ImplicitSolveConfig: newton_tol must be positive");
    if (max_iter < 1) throw std::invalid_argument("ImplicitSolveConfig: max_iter must be >= 1");
    if (bracket && !(bracket->first < bracket->second)) {
        throw std::invalid_argument("ImplicitSolveConfig: bracket must satisfy lo < hi");
    }
}

std::string ImplicitSolveConfig::describe() const
{
    std::ostringstream os;
    os.precision(17);
    os << "newton from seed ";
    if (seed_vec.empty()) {
        os << seed;
    } else {
        os << "(";
        for (std::size_t i = 0; i < seed_vec.size(); ++i) os << (i ? ", " : "") << seed_vec[i];
        os << ")";
    }
    if (bracket) os << ", bisection in [" << bracket->first << ", " << bracket->second << "]";
    return os.str();
}

std::vector<double> lu_solve(std::vector<double> a, std::vector<double> b, std::size_t n)
{
    if (a.size() != n * n || b.size() != n) throw std::invalid_argument("lu_solve: size mismatch");
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
        }
        if (a[piv * n + col] == 0.0) throw DegenerateError("lu_solve: singular matrix");
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[piv * n + c], a[col * n + c]);
            std::swap(b[piv], b[col]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / a[col * n + col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * x[c];
        x[i] = s / a[i * n + i];
    }
    return x;
}

double condition_number(const std::vector<double>& a, std::size_t n)
{
    auto norm1 = [n](const std::vector<double>& m) {
        double best = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += std::fabs(m[r * n + c]);
            best = std::max(best, s);
        }
        return best;
    };
    std::vector<double> inv(n * n);
    try {
        for (std::size_t c = 0; c < n; ++c) {
            std::vector<double> e(n, 0.0);
            e[c] = 1.0;
            auto col = lu_solve(a, e, n);
            for (std::size_t r = 0; r < n; ++r) inv[r * n + c] = col[r];
        }
    } catch (const DegenerateError&) {
        return std::numeric_limits<double>::infinity();
    }
    const double k = norm1(a) * norm1(inv);
    return std::isfinite(k) ? k : std::numeric_limits<double>::infinity();
}

ConstraintJets::ConstraintJets(int m, int k) : m_(m), k_(k), n_(m + k)
{
    if (m < 1 || k < 0) throw std::invalid_argument("ConstraintJets: bad sizes");
    value_.assign(static_cast<std::size_t>(m), 0.0);
    grad_.assign(static_cast<std::size_t>(m * n_), 0.0);
    hess_.assign(static_cast<std::size_t>(m * n_ * n_), 0.0);
    abs_dy_.assign(static_cast<std::size_t>(m * m), 0.0);
}

void ConstraintJets::add_block(int eq, const Jet2& block, std::span<const int> vars, double sign)
{
    if (eq < 0 || eq >= m_) throw std::invalid_argument("ConstraintJets: equation index out of range");
    if (static_cast<int>(vars.size()) != block.arity()) {
        throw std::invalid_argument("ConstraintJets: variable map does not match block arity");
    }
    for (int v : vars) {
        if (v < 0 || v >= n_) throw std::invalid_argument("ConstraintJets: variable index out of range");
    }
    value_[static_cast<std::size_t>(eq)] += sign * block.value();
    const int a = block.arity();
    for (int i = 0; i < a; ++i) {
        const int gi_ = vars[static_cast<std::size_t>(i)];
        grad_[gi(eq, gi_)] += sign * block.d(i);
        if (gi_ < m_) abs_dy_[static_cast<std::size_t>(eq * m_ + gi_)] += std::fabs(block.d(i));
        for (int j = 0; j < a; ++j) {
            hess_[hi(eq, gi_, vars[static_cast<std::size_t>(j)])] += sign * block.dd(i, j);
        }
    }
}

void ConstraintJets::check_regular(double rel) const
{
    if (m_ == 1) {
        if (std::fabs(d(0, 0)) <= rel * abs_dy(0, 0)) {
            throw DegenerateError("degenerate root: constraint derivative in the unknown vanishes");
        }
        return;
    }
    if (m_ == 2) {
        const double det = d(0, 0) * d(1, 1) - d(0, 1) * d(1, 0);
        const double perm = abs_dy(0, 0) * abs_dy(1, 1) + abs_dy(0, 1) * abs_dy(1, 0);
        if (std::fabs(det) <= rel * perm) throw DegenerateError("degenerate root: singular 2x2 Jacobian");
        return;
    }
    std::vector<double> j(static_cast<std::size_t>(m_ * m_));
    for (int r = 0; r < m_; ++r) {
        for (int c = 0; c < m_; ++c) j[static_cast<std::size_t>(r * m_ + c)] = d(r, c);
    }
    if (condition_number(j, static_cast<std::size_t>(m_)) > 1.0 / rel) {
        throw DegenerateError("degenerate root: ill-conditioned Jacobian");
    }
}

std::vector<Jet2> ConstraintJets::solve_jets(double degenerate_rel) const
{
    if (k_ > Jet2::kMaxArity) throw std::invalid_argument("ConstraintJets: too many coordinates for Jet2");
    check_regular(degenerate_rel);
    const auto m = static_cast<std::size_t>(m_);
    const auto k = static_cast<std::size_t>(k_);
    const auto n = static_cast<std::size_t>(n_);

    std::vector<double> cy(m * m);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < m; ++c) cy[r * m + c] = grad_[r * n + c];
    }

    // Y[i][a] = dy_a / dx_i from C_y Y_i = -C_{x_i}.
    std::vector<std::vector<double>> Y(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<double> rhs(m);
        for (std::size_t r = 0; r < m; ++r) rhs[r] = -grad_[r * n + m + i];
        Y[i] = lu_solve(cy, rhs, m);
    }
    // Total derivative of the variable vector (y, x) along x_i.
    auto T = [&](std::size_t i, std::size_t p) {
        if (p < m) return Y[i][p];
        return p - m == i ? 1.0 : 0.0;
    };

    std::vector<Jet2> out;
    for (std::size_t a = 0; a < m; ++a) out.emplace_back(k_, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t a = 0; a < m; ++a) out[a].set_d(static_cast<int>(i), Y[i][a]);
        for (std::size_t j = i; j < k; ++j) {
            std::vector<double> rhs(m, 0.0);
            for (std::size_t r = 0; r < m; ++r) {
                double s = 0.0;
                for (std::size_t p = 0; p < n; ++p) {
                    const double tp = T(i, p);
                    if (tp == 0.0) continue;
                    for (std::size_t q = 0; q < n; ++q) {
                        const double tq = T(j, q);
                        if (tq != 0.0) s += hess_[(r * n + p) * n + q] * tp * tq;
                    }
                }
                rhs[r] = -s;
            }
            auto yij = lu_solve(cy, rhs, m);
            for (std::size_t a = 0; a < m; ++a) out[a].set_dd(static_cast<int>(i), static_cast<int>(j), yij[a]);
        }
    }
    for (const Jet2& j : out) {
        if (!j.all_finite()) throw SingularityError("implicit jets", 0.0);
    }
    return out;
}

namespace {

bool converged(double value, double scale, double tol)
{
    return std::fabs(value) <= tol * std::max(1.0, scale);
}

// One extra Newton step once inside tolerance; kept only if it helps.
double polish(const std::function<ScalarEval(double)>& f, double y, ScalarEval e)
{
    if (e.derivative == 0.0) return y;
    const double y2 = y - e.value / e.derivative;
    try {
        const ScalarEval e2 = f(y2);
        if (std::isfinite(e2.value) && std::fabs(e2.value) < std::fabs(e.value)) return y2;
    } catch (const NumericalError&) {
    }
    return y;
}

std::optional<double> newton_from(const std::function<ScalarEval(double)>& f, double y,
                                  const ImplicitSolveConfig& cfg)
{
    try {
        for (int it = 0; it < cfg.max_iter; ++it) {
            const ScalarEval e = f(y);
            if (!std::isfinite(e.value)) return std::nullopt;
            if (converged(e.value, e.scale, cfg.newton_tol)) return polish(f, y, e);
            if (e.derivative == 0.0 || !std::isfinite(e.derivative)) return std::nullopt;
            y -= e.value / e.derivative;
            if (!std::isfinite(y)) return std::nullopt;
        }
        const ScalarEval e = f(y);
        if (converged(e.value, e.scale, cfg.newton_tol)) return y;
    } catch (const NumericalError&) {
    }
    return std::nullopt;
}

}  // namespace

double newton_scalar(const std::function<ScalarEval(double)>& f, const ImplicitSolveConfig& cfg)
{
    cfg.validate();
    if (auto r = newton_from(f, cfg.seed, cfg)) return *r;
    if (!cfg.bracket) throw ConvergenceError("newton: no convergence from seed");

    double lo = cfg.bracket->first, hi = cfg.bracket->second;
    double flo = f(lo).value, fhi = f(hi).value;
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0)) throw ConvergenceError("bisection: bracket has no sign change");
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::fabs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid).value;
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    const double mid = 0.5 * (lo + hi);
    if (auto r = newton_from(f, mid, cfg)) return *r;
    const ScalarEval e = f(mid);
    if (converged(e.value, e.scale, cfg.newton_tol)) return mid;
    throw ConvergenceError("bisection: tolerance not reached");
}

std::vector<double> newton_vector(const std::function<VectorEval(std::span<const double>)>& f,
                                  std::vector<double> y, const ImplicitSolveConfig& cfg)
{
    cfg.validate();
    const std::size_t m = y.size();
    auto norm = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s = std::max(s, std::fabs(x));
        return s;
    };
    VectorEval e = f(y);
    for (int it = 0; it <= cfg.max_iter; ++it) {
        if (e.value.size() != m || e.jacobian.size() != m * m) {
            throw std::invalid_argument("newton_vector: evaluation size mismatch");
        }
        const double r = norm(e.value);
        if (!std::isfinite(r)) throw ConvergenceError("newton: non-finite residual");
        if (r <= cfg.newton_tol * std::max(1.0, e.scale)) {
            // Same polish as the scalar case.
            try {
                std::vector<double> step = e.value;
                for (double& s : step) s = -s;
                auto dy = lu_solve(e.jacobian, step, m);
                std::vector<double> y2 = y;
                for (std::size_t i = 0; i < m; ++i) y2[i] += dy[i];
                if (norm(f(y2).value) < r) return y2;
            } catch (const NumericalError&) {
            }
            return y;
        }
        if (it == cfg.max_iter) break;
        std::vector<double> rhs = e.value;
        for (double& s : rhs) s = -s;
        const auto dy = lu_solve(e.jacobian, rhs, m);
        // Backtracking keeps Newton from leaving the basin on folded maps.
        double lambda = 1.0;
        for (int bt = 0; bt < 30; ++bt) {
            std::vector<double> y2 = y;
            for (std::size_t i = 0; i < m; ++i) y2[i] += lambda * dy[i];
            try {
                VectorEval e2 = f(y2);
                if (norm(e2.value) < r || bt == 29) {
                    y = std::move(y2);
                    e = std::move(e2);
                    break;
                }
            } catch (const NumericalError&) {
                if (bt == 29) throw;
            }
            lambda *= 0.5;
        }
    }
    throw ConvergenceError("newton: no convergence in " + std::to_string(cfg.max_iter) + " iterations");
}

}  // namespace bateman
