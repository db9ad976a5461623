#pragma once

#include "evoporo/geometry.hpp"
#include "evoporo/linalg.hpp"

#include <functional>

namespace evoporo {

// Precipitation/dissolution rate
//   g(u,r) = s+(g_raw(u)) phi_up(r) - s+(-g_raw(u)) phi_down(r),
//   g_raw(u) = cap tanh(k_rate (u - u_eq)/cap),
// where s+ is a C2 smoothing of the positive part (exactly zero for
// nonpositive arguments) and phi_up/phi_down are quintic-smoothstep windows
// that vanish identically within distance `window` of r_hi/r_lo. The window
// construction makes g <= 0 on [r_hi - window, r_hi] and g >= 0 on
// [r_lo, r_lo + window] with no exceptions, which is what keeps radii
// admissible under explicit stepping.
struct Kinetics {
    double u_eq = 1.0;
    double k_rate = 1.0;
    double cap = 2.0;
    double eta = 1e-3;
    double window = 0.05;
    RadiusBounds bounds{};

    static Kinetics make(double u_eq, double k_rate, double cap, double eta,
                         double window, RadiusBounds bounds);

    double raw_rate(double u) const;
    double window_up(double r) const;   // 1 well below r_hi, 0 near it
    double window_down(double r) const; // mirror at r_lo
};

double rate_g(const Kinetics& kin, double u, double r);

struct RatePartials {
    double du;
    double dr;
};
RatePartials rate_g_partials(const Kinetics& kin, double u, double r);

// Analytic bound max(sup|d_u g|, sup|d_r g|) used by the time-step guards.
double rate_g_lipschitz(const Kinetics& kin);

// Problem data shared by the micro and macro solvers.
struct ProblemData {
    Mat2 D = Mat2::identity();
    std::function<Mat2(Vec2)> D_field;             // optional x-dependent tensor
    std::function<double(double, Vec2)> f;         // source f(t, x)
    double rho = 2.0;                              // molar density, > 0
    std::function<double(Vec2)> u_init;            // initial concentration
    std::function<double(Vec2)> R_init_dimless;    // initial radius in [r_lo, r_hi]

    Mat2 diffusion_at(const Vec2& x) const { return D_field ? D_field(x) : D; }
};

} // namespace evoporo
