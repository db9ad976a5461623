#include "evoporo/geometry.hpp"

#include "evoporo/errors.hpp"
#include "evoporo/util.hpp"

#include <cmath>
#include <string>

namespace evoporo {

CutoffProfile CutoffProfile::make(double delta0) {
    if (!(delta0 > 0.0)) throw ConfigError("cutoff window delta0 must be positive");
    CutoffProfile p;
    p.delta0 = delta0;
    p.chi_sup_norm_deriv = (15.0 / 8.0) / (0.5 * delta0);
    return p;
}

ChiEval cutoff_eval(double z, const CutoffProfile& profile) {
    const double a = 0.5 * profile.delta0;
    const double az = std::fabs(z);
    if (az <= a) return {1.0, 0.0};
    if (az >= profile.delta0) return {0.0, 0.0};
    const Smoothstep p = quintic_smoothstep((az - a) / a);
    const double sign = (z > 0.0) ? 1.0 : -1.0;
    return {1.0 - p.value, -sign * p.deriv / a};
}

RadiusBounds RadiusBounds::make(double r_lo, double r_hi) {
    if (!(0.0 < r_lo && r_lo < r_hi && r_hi < 0.5)) {
        throw ConfigError("radius bounds must satisfy 0 < r_lo < r_hi < 1/2");
    }
    return RadiusBounds{r_lo, r_hi};
}

HanzawaGeometry::HanzawaGeometry(RadiusBounds bounds, double delta0)
    : bounds_(bounds), cutoff_(CutoffProfile::make(delta0)) {
    const double limit = std::min(0.5 - bounds_.r_hi, bounds_.r_hi);
    if (!(delta0 < limit)) {
        throw ConfigError("delta0 must satisfy 0 < delta0 < min{1/2 - r_hi, r_hi}");
    }
    frame_.gamma_radius = bounds_.r_hi;
}

void HanzawaGeometry::require_admissible(double R) const {
    if (!(R >= bounds_.r_lo && R <= bounds_.r_hi)) {
        throw RadiusOutOfRange("R = " + std::to_string(R) + " outside [" +
                               std::to_string(bounds_.r_lo) + ", " +
                               std::to_string(bounds_.r_hi) + "]");
    }
}

ChiEval HanzawaGeometry::chi0(const Vec2& y) const {
    return cutoff_eval(frame_.signed_distance(y), cutoff_);
}

Vec2 HanzawaGeometry::map(const Vec2& y, double R) const {
    require_admissible(R);
    const double d = frame_.signed_distance(y);
    if (std::fabs(d) >= cutoff_.delta0) return y;
    const ChiEval c = cutoff_eval(d, cutoff_);
    return y + (R - bounds_.r_hi) * c.chi * frame_.normal(y);
}

Mat2 HanzawaGeometry::grad(const Vec2& y, double R) const {
    require_admissible(R);
    const double d = frame_.signed_distance(y);
    if (std::fabs(d) >= cutoff_.delta0) return Mat2::identity();
    const double rho = d + bounds_.r_hi; // |y - m|
    const ChiEval c = cutoff_eval(d, cutoff_);
    const Vec2 nu = frame_.normal(y);
    const double dR = R - bounds_.r_hi;
    const double iso = 1.0 + c.chi * dR / rho;
    const double aniso = dR * (c.chi_prime - c.chi / rho);
    return Mat2::identity() * iso + Mat2::outer(nu, nu) * aniso;
}

double HanzawaGeometry::det(const Vec2& y, double R, int n) const {
    require_admissible(R);
    const double d = frame_.signed_distance(y);
    if (std::fabs(d) >= cutoff_.delta0) return 1.0;
    const double rho = d + bounds_.r_hi;
    const ChiEval c = cutoff_eval(d, cutoff_);
    const double dR = R - bounds_.r_hi;
    const double radial = 1.0 + c.chi_prime * dR;
    const double tangential = 1.0 + c.chi * dR / rho;
    double pow_t = 1.0;
    for (int i = 0; i < n - 1; ++i) pow_t *= tangential;
    return radial * pow_t;
}

Vec2 HanzawaGeometry::velocity(const Vec2& y, double R, double dR_dt) const {
    const double d = frame_.signed_distance(y);
    if (std::fabs(d) >= cutoff_.delta0) return {0.0, 0.0};
    const double J = det(y, R);
    const Mat2 Finv = grad(y, R).inverse();
    const ChiEval c = cutoff_eval(d, cutoff_);
    const Vec2 dtS = dR_dt * c.chi * frame_.normal(y);
    // grad is symmetric, so F^-T = F^-1.
    return J * (Finv * dtS);
}

double HanzawaGeometry::det_lower_bound(int n) const {
    double b = 1.0;
    for (int i = 0; i < n - 1; ++i) b *= bounds_.r_lo / bounds_.r_hi;
    return b;
}

double HanzawaGeometry::det_upper_bound() const {
    return 1.0 + cutoff_.chi_sup_norm_deriv * (bounds_.r_hi - bounds_.r_lo);
}

Vec2 micro_local_coordinate(const Vec2& x, double eps) {
    auto local = [eps](double v) {
        const double s = v / eps;
        double f = s - std::floor(s);
        // Face points belong to the left/bottom cell: local coordinate 1.
        if (f == 0.0 && s > 0.0) f = 1.0;
        return f;
    };
    return {local(x.x), local(x.y)};
}

MicroMapCoeffs micro_map_coeffs(const HanzawaGeometry& geom, const Vec2& x,
                                double R_cell, double eps) {
    const double R = R_cell / eps;
    geom.require_admissible(R);
    const Vec2 y = micro_local_coordinate(x, eps);
    MicroMapCoeffs out;
    out.F = geom.grad(y, R);
    out.J = geom.det(y, R);
    const ChiEval c = geom.chi0(y);
    if (c.chi == 0.0) {
        out.S = x;
    } else {
        out.S = x + (R_cell - eps * geom.bounds().r_hi) * c.chi * geom.frame().normal(y);
    }
    return out;
}

} // namespace evoporo
