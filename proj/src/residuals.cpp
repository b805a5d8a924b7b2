#include "bateman/residuals.hpp"

#include "bateman/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bateman {

namespace {

void require_arity(const Jet2& j, int k, const char* what)
{
    if (j.arity() != k) {
        throw std::invalid_argument(std::string(what) + ": expected arity " + std::to_string(k) +
                                    ", got " + std::to_string(j.arity()));
    }
}

}  // namespace

ResidualSample ResidualSample::from_terms(std::span<const double> terms)
{
    double raw = 0.0;
    double scale = 0.0;
    for (double t : terms) {
        raw += t;
        scale += std::fabs(t);
    }
    return make(raw, scale);
}

ResidualSample ResidualSample::make(double raw, double scale)
{
    ResidualSample s;
    s.raw = raw;
    s.scale = scale;
    s.normalized = std::fabs(raw) / std::max(scale, kScaleFloor);
    return s;
}

void ReportBuilder::add(const ResidualSample& s)
{
    if (!std::isfinite(s.raw) || !std::isfinite(s.normalized)) {
        skip();
        return;
    }
    add_normalized(s.normalized);
}

void ReportBuilder::add_normalized(double normalized)
{
    ++report_.samples;
    report_.max_norm = std::max(report_.max_norm, normalized);
    sum_sq_ += normalized * normalized;
}

void ReportBuilder::merge(const ResidualReport& other)
{
    report_.samples += other.samples;
    report_.skipped_singular += other.skipped_singular;
    report_.max_norm = std::max(report_.max_norm, other.max_norm);
    sum_sq_ += other.rms_norm * other.rms_norm * static_cast<double>(other.samples);
}

ResidualReport ReportBuilder::finish() const
{
    ResidualReport r = report_;
    r.rms_norm = r.samples == 0 ? 0.0 : std::sqrt(sum_sq_ / static_cast<double>(r.samples));
    // Guard the rms <= max invariant against summation round-off.
    r.rms_norm = std::min(r.rms_norm, r.max_norm);
    return r;
}

void GlobalResidual::add(const ResidualSample& s)
{
    max_raw = std::max(max_raw, std::fabs(s.raw));
    max_scale = std::max(max_scale, s.scale);
    ++samples;
}

void GlobalResidual::merge(const GlobalResidual& other)
{
    max_raw = std::max(max_raw, other.max_raw);
    max_scale = std::max(max_scale, other.max_scale);
    samples += other.samples;
}

double GlobalResidual::normalized() const noexcept
{
    if (max_raw == 0.0) return 0.0;
    return max_raw / std::max(max_scale, ResidualSample::kScaleFloor);
}

ResidualReport sweep(const std::string& equation, const std::vector<std::vector<double>>& points,
                     const std::function<ResidualSample(std::span<const double>)>& eval)
{
    ReportBuilder b(equation);
    for (const auto& p : points) {
        try {
            b.add(eval(p));
        } catch (const NumericalError&) {
            b.skip();
        }
    }
    return b.finish();
}

ResidualSample res_complex_bateman(const Jet2& phi)
{
    require_arity(phi, 4, "res_complex_bateman");
    // Coordinates: 0 = x1, 1 = x2, 2 = xb1, 3 = xb2.
    const double p1 = phi.d(0), p2 = phi.d(1), q1 = phi.d(2), q2 = phi.d(3);
    return ResidualSample::from_terms({
        p1 * q1 * phi.dd(1, 3),
        p2 * q2 * phi.dd(0, 2),
        -p1 * q2 * phi.dd(2, 1),
        -p2 * q1 * phi.dd(0, 3),
    });
}

ResidualSample res_another_complex_bateman(const Jet2& phi, const Jet2& phibar, bool conjugate)
{
    require_arity(phi, 2, "res_another_complex_bateman");
    require_arity(phibar, 2, "res_another_complex_bateman");
    const Jet2& f = conjugate ? phibar : phi;
    const Jet2& g = conjugate ? phi : phibar;
    // Coordinates: 0 = t, 1 = x.
    const double ft = f.d(0), fx = f.d(1), gt = g.d(0), gx = g.d(1);
    return ResidualSample::from_terms({
        gx * fx * f.dd(0, 0),
        -gx * ft * f.dd(0, 1),
        -gt * fx * f.dd(0, 1),
        gt * ft * f.dd(1, 1),
    });
}

ResidualSample res_born_infeld(const Jet2& phi, double lambda)
{
    require_arity(phi, 2, "res_born_infeld");
    if (!(lambda > 0.0)) throw std::invalid_argument("res_born_infeld: lambda must be positive");
    const double pt = phi.d(0), px = phi.d(1);
    return ResidualSample::from_terms({
        px * px * phi.dd(0, 0),
        pt * pt * phi.dd(1, 1),
        -lambda * phi.dd(0, 1),
        -2.0 * px * pt * phi.dd(0, 1),
    });
}

ResidualSample res_euclidean_3d(const Jet2& phi)
{
    require_arity(phi, 3, "res_euclidean_3d");
    // Coordinates: 0 = t, 1 = x, 2 = y.
    const double pt = phi.d(0), px = phi.d(1), py = phi.d(2);
    return ResidualSample::from_terms({
        phi.dd(0, 0) * px * px,
        phi.dd(0, 0) * py * py,
        phi.dd(1, 1) * py * py,
        phi.dd(1, 1) * pt * pt,
        phi.dd(2, 2) * pt * pt,
        phi.dd(2, 2) * px * px,
        -2.0 * phi.dd(0, 1) * pt * px,
        -2.0 * phi.dd(2, 0) * py * pt,
        -2.0 * phi.dd(1, 2) * px * py,
    });
}

ResidualSample res_euclidean_first_order(const Jet2& phi, int which)
{
    require_arity(phi, 3, "res_euclidean_first_order");
    const Jet2 u = partial_jet(phi, 0) / partial_jet(phi, 1);
    const Jet2 v = partial_jet(phi, 2) / partial_jet(phi, 1);
    const double uu = u.value(), vv = v.value();
    const double ut = u.d(0), ux = u.d(1), uy = u.d(2);
    const double vt = v.d(0), vx = v.d(1), vy = v.d(2);
    if (which == 0) {
        return ResidualSample::from_terms({
            uu * ux,
            vv * vx,
            -ut,
            -vy,
            -vv * vv * ut,
            uu * vv * uy,
            uu * vv * vt,
            -uu * uu * vy,
        });
    }
    if (which == 1) {
        return ResidualSample::from_terms({uu * vx, -vv * ux, -vt, uy});
    }
    throw std::invalid_argument("res_euclidean_first_order: which must be 0 or 1");
}

ResidualSample res_multifield_det(const Jet2& phi1, const Jet2& phi2, const Jet2& phibar1,
                                  const Jet2& phibar2, int j)
{
    for (const Jet2* p : {&phi1, &phi2, &phibar1, &phibar2}) require_arity(*p, 3, "res_multifield_det");
    if (j != 1 && j != 2) throw std::invalid_argument("res_multifield_det: j must be 1 or 2");
    const Jet2& phij = j == 1 ? phi1 : phi2;

    std::array<std::array<double, 5>, 5> m{};
    for (int c = 0; c < 3; ++c) {
        m[0][2 + c] = phibar1.d(c);
        m[1][2 + c] = phibar2.d(c);
    }
    for (int r = 0; r < 3; ++r) {
        m[2 + r][0] = phi1.d(r);
        m[2 + r][1] = phi2.d(r);
        for (int c = 0; c < 3; ++c) m[2 + r][2 + c] = phij.dd(r, c);
    }

    // Leibniz expansion; the top-left zero block kills most permutations but
    // the full sum keeps the scale a true sum of |terms|.
    std::array<int, 5> perm{0, 1, 2, 3, 4};
    double raw = 0.0;
    double scale = 0.0;
    do {
        double prod = 1.0;
        for (int r = 0; r < 5 && prod != 0.0; ++r) prod *= m[static_cast<std::size_t>(r)][static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])];
        if (prod == 0.0) continue;
        int inversions = 0;
        for (int a = 0; a < 5; ++a) {
            for (int b = a + 1; b < 5; ++b) inversions += perm[static_cast<std::size_t>(a)] > perm[static_cast<std::size_t>(b)];
        }
        raw += (inversions % 2 == 0) ? prod : -prod;
        scale += std::fabs(prod);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return ResidualSample::make(raw, scale);
}

ResidualSample res_transport(const Jet2& field, std::span<const double> speeds,
                             const TransportPattern& pattern)
{
    const int k = field.arity();
    if (speeds.size() != pattern.space_indices.size()) {
        throw std::invalid_argument("res_transport: speed count does not match pattern");
    }
    auto in_range = [k](int i) { return i >= 0 && i < k; };
    if (!in_range(pattern.time_index)) throw std::invalid_argument("res_transport: bad time index");
    std::vector<double> terms{field.d(pattern.time_index)};
    for (std::size_t j = 0; j < speeds.size(); ++j) {
        const int s = pattern.space_indices[j];
        if (!in_range(s) || s == pattern.time_index) {
            throw std::invalid_argument("res_transport: bad space index");
        }
        terms.push_back(speeds[j] * field.d(s));
    }
    return ResidualSample::from_terms(terms);
}

}  // namespace bateman
