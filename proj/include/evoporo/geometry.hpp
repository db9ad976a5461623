#pragma once

#include "evoporo/linalg.hpp"

#include <utility>

namespace evoporo {

// Even C2 cutoff built from the quintic smoothstep on the transition band
// [delta0/2, delta0]:
//   chi(z) = 1                         for |z| <= delta0/2,
//   chi(z) = 1 - P((|z|-delta0/2)/(delta0/2))  in between,
//   chi(z) = 0                         for |z| >= delta0,
// so chi is even, 0 <= chi <= 1, and z*chi'(z) < 0 strictly on the band.
// sup|chi'| = (15/8)/(delta0/2).
struct CutoffProfile {
    double delta0 = 0.1;
    double chi_sup_norm_deriv = 0.0;

    static CutoffProfile make(double delta0);
};

struct ChiEval {
    double chi;
    double chi_prime;
};

ChiEval cutoff_eval(double z, const CutoffProfile& profile);

// Admissible dimensionless radius interval, 0 < r_lo < r_hi < 1/2.
struct RadiusBounds {
    double r_lo = 0.15;
    double r_hi = 0.35;

    static RadiusBounds make(double r_lo, double r_hi);
    bool contains(double r) const { return r >= r_lo && r <= r_hi; }
};

// Reference-cell frame: center, signed distance to the radius-r_hi sphere,
// and the radial unit normal.
struct CellFrame {
    Vec2 center{0.5, 0.5};
    double gamma_radius = 0.35; // radius of the reference interface

    double signed_distance(const Vec2& y) const {
        return (y - center).norm() - gamma_radius;
    }
    Vec2 normal(const Vec2& y) const {
        const Vec2 d = y - center;
        const double r = d.norm();
        return {d.x / r, d.y / r};
    }
};

// Bundles the cutoff, radius bounds and frame; all Hanzawa evaluations are
// pure functions of this value type.
class HanzawaGeometry {
public:
    HanzawaGeometry() : HanzawaGeometry(RadiusBounds::make(0.15, 0.35), 0.1) {}
    HanzawaGeometry(RadiusBounds bounds, double delta0);

    const RadiusBounds& bounds() const { return bounds_; }
    const CutoffProfile& cutoff() const { return cutoff_; }
    const CellFrame& frame() const { return frame_; }

    // chi0(y) = chi(d_Gamma(y)) and its value/derivative pair.
    ChiEval chi0(const Vec2& y) const;

    // S0(y;R) = y + (R - r_hi) chi0(y) nu0(y); identity outside the collar.
    Vec2 map(const Vec2& y, double R) const;

    // Closed form gradient:
    //   (1 + chi0 (R-r_hi)/|y-m|) I + (R-r_hi)(chi' - chi0/|y-m|) nu0 x nu0.
    Mat2 grad(const Vec2& y, double R) const;

    // det(grad) = (1 + chi'(d)(R-r_hi)) (1 + chi0 (R-r_hi)/|y-m|)^(n-1),
    // dimension-generic in n (meshes use n = 2).
    double det(const Vec2& y, double R, int n = 2) const;

    // Geometric velocity V0 = J0 F^-T (dR/dt) chi0 nu0 (F is symmetric).
    Vec2 velocity(const Vec2& y, double R, double dR_dt) const;

    // Bounds (r_lo/r_hi)^(n-1) <= det <= 1 + sup|chi'| (r_hi - r_lo).
    double det_lower_bound(int n = 2) const;
    double det_upper_bound() const;

    void require_admissible(double R) const;

private:
    RadiusBounds bounds_;
    CutoffProfile cutoff_;
    CellFrame frame_;
};

// Coefficients of the scaled transform at a micro point x with per-cell
// radius R_cell (length units): S_eps(x) = x + (R_cell - eps r_hi) chi0 nu0(x/eps),
// F_eps(x) = grad at (frac(x/eps), R_cell/eps), J_eps likewise.
struct MicroMapCoeffs {
    Vec2 S;
    Mat2 F;
    double J;
};

// frac(x/eps) with componentwise floor; points exactly on cell faces belong
// to the left/bottom cell, so a face point gets local coordinate 1, not 0.
Vec2 micro_local_coordinate(const Vec2& x, double eps);

MicroMapCoeffs micro_map_coeffs(const HanzawaGeometry& geom, const Vec2& x,
                                double R_cell, double eps);

} // namespace evoporo
