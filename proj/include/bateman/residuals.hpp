#pragma once

#include "bateman/jet.hpp"

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace bateman {

/// Signed residual of one equation at one point, with the sum of absolute
/// values of the equation's additive terms as its scale.
struct ResidualSample {
    static constexpr double kScaleFloor = 1e-300;

    double raw = 0.0;
    double scale = 0.0;
    double normalized = 0.0;

    /// raw = sum of terms, scale = sum of |term|.
    static ResidualSample from_terms(std::span<const double> terms);
    static ResidualSample from_terms(std::initializer_list<double> terms)
    {
        return from_terms(std::span<const double>(terms.begin(), terms.size()));
    }
    static ResidualSample make(double raw, double scale);
};

struct ResidualReport {
    std::string equation;
    std::size_t samples = 0;
    std::size_t skipped_singular = 0;
    double max_norm = 0.0;
    double rms_norm = 0.0;

    std::size_t requested() const noexcept { return samples + skipped_singular; }
    double skipped_fraction() const noexcept
    {
        return requested() == 0 ? 0.0 : static_cast<double>(skipped_singular) / static_cast<double>(requested());
    }
};

/// Accumulates samples in insertion order (fixed-order reduction).
class ReportBuilder {
public:
    explicit ReportBuilder(std::string equation) { report_.equation = std::move(equation); }

    void add(const ResidualSample& s);
    void add_normalized(double normalized);
    void skip() { ++report_.skipped_singular; }
    void merge(const ResidualReport& other);

    ResidualReport finish() const;

private:
    ResidualReport report_;
    double sum_sq_ = 0.0;
};

/// Normalization over a whole sample set: max |raw| / max scale. Used for
/// finite-difference residuals on grids, where pointwise normalization is
/// meaningless at nodes whose terms all vanish.
struct GlobalResidual {
    double max_raw = 0.0;
    double max_scale = 0.0;
    std::size_t samples = 0;

    void add(const ResidualSample& s);
    void merge(const GlobalResidual& other);
    double normalized() const noexcept;
};

/// Evaluates `eval` at each point; NumericalError and non-finite samples are
/// counted as skipped.
ResidualReport sweep(const std::string& equation, const std::vector<std::vector<double>>& points,
                     const std::function<ResidualSample(std::span<const double>)>& eval);

// Pointwise residual operators. Coordinate orders are fixed per equation.

/// Coordinates (x1, x2, xb1, xb2).
ResidualSample res_complex_bateman(const Jet2& phi);

/// Coordinates (t, x). With conjugate = true the roles of phi and phibar are
/// exchanged (the companion equation).
ResidualSample res_another_complex_bateman(const Jet2& phi, const Jet2& phibar,
                                           bool conjugate = false);

/// Coordinates (t, x):
/// phi_x^2 phi_tt + phi_t^2 phi_xx - (lambda + 2 phi_x phi_t) phi_xt.
ResidualSample res_born_infeld(const Jet2& phi, double lambda);

/// Coordinates (t, x, y).
ResidualSample res_euclidean_3d(const Jet2& phi);

/// Both equations of the first-order system with u = phi_t/phi_x,
/// v = phi_y/phi_x, coordinates (t, x, y). Index 0 is the quadratic equation,
/// index 1 the curl-like one.
ResidualSample res_euclidean_first_order(const Jet2& phi, int which);

/// Determinant of the 5x5 matrix whose first two rows are
/// (0, 0, grad phibar^i) and whose last three rows are
/// (phi1_{x_r}, phi2_{x_r}, Hessian row r of phi^j), j in {1, 2}.
/// Coordinates (x1, x2, x3). The scale is the permanent of the absolute
/// entries (sum of |terms| of the Leibniz expansion).
ResidualSample res_multifield_det(const Jet2& phi1, const Jet2& phi2, const Jet2& phibar1,
                                  const Jet2& phibar2, int j);

/// Which coordinate is time-like and which spatial derivative each speed
/// multiplies: raw = d_time f + sum_j speeds[j] * d_{space[j]} f.
/// Equations written as f_t = s f_x are expressed with speed -s.
struct TransportPattern {
    int time_index = 0;
    std::vector<int> space_indices;
};

ResidualSample res_transport(const Jet2& field, std::span<const double> speeds,
                             const TransportPattern& pattern);

}  // namespace bateman
