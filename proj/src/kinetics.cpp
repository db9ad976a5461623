#include "evoporo/kinetics.hpp"

#include "evoporo/errors.hpp"
#include "evoporo/util.hpp"

#include <cmath>

namespace evoporo {

namespace {

// C2 positive-part smoothing: 0 for x <= 0, x - eta/2 for x >= eta, cubic
// blend in between. p' in [0,1], p(x) <= max(x, 0).
double pos_smooth(double x, double eta) {
    if (x <= 0.0) return 0.0;
    if (x >= eta) return x - 0.5 * eta;
    const double x2 = x * x;
    return x2 * x / (eta * eta) - x2 * x2 / (2.0 * eta * eta * eta);
}

double pos_smooth_deriv(double x, double eta) {
    if (x <= 0.0) return 0.0;
    if (x >= eta) return 1.0;
    const double s = x / eta;
    return s * s * (3.0 - 2.0 * s);
}

} // namespace

Kinetics Kinetics::make(double u_eq, double k_rate, double cap, double eta,
                        double window, RadiusBounds bounds) {
    if (!(cap > 0.0) || !(eta > 0.0) || !(window > 0.0) || k_rate < 0.0) {
        throw ConfigError("kinetics parameters must be positive (k_rate >= 0)");
    }
    if (!(bounds.r_hi - bounds.r_lo > 3.0 * window)) {
        throw ConfigError("rate windows overlap: need r_hi - r_lo > 3 * window");
    }
    return Kinetics{u_eq, k_rate, cap, eta, window, bounds};
}

double Kinetics::raw_rate(double u) const {
    if (k_rate == 0.0) return 0.0;
    return cap * std::tanh(k_rate * (u - u_eq) / cap);
}

// Zero on [r_hi - window, r_hi], one on [r_lo, r_hi - 3/2 window], quintic
// smoothstep on the transition band of width window/2.
double Kinetics::window_up(double r) const {
    const double zero_from = bounds.r_hi - window;
    const double one_until = bounds.r_hi - 1.5 * window;
    if (r <= one_until) return 1.0;
    if (r >= zero_from) return 0.0;
    return 1.0 - quintic_smoothstep((r - one_until) / (0.5 * window)).value;
}

double Kinetics::window_down(double r) const {
    return window_up(bounds.r_lo + bounds.r_hi - r);
}

double rate_g(const Kinetics& kin, double u, double r) {
    if (!kin.bounds.contains(r)) {
        throw RadiusOutOfRange("rate evaluated at r = " + std::to_string(r));
    }
    const double raw = kin.raw_rate(u);
    return pos_smooth(raw, kin.eta) * kin.window_up(r) -
           pos_smooth(-raw, kin.eta) * kin.window_down(r);
}

RatePartials rate_g_partials(const Kinetics& kin, double u, double r) {
    if (!kin.bounds.contains(r)) {
        throw RadiusOutOfRange("rate partials at r = " + std::to_string(r));
    }
    const double raw = kin.raw_rate(u);
    const double th = (kin.k_rate == 0.0) ? 0.0 : std::tanh(kin.k_rate * (u - kin.u_eq) / kin.cap);
    const double raw_du = kin.k_rate * (1.0 - th * th);

    const double up = kin.window_up(r);
    const double down = kin.window_down(r);

    // Window derivatives via the smoothstep derivative.
    auto window_up_deriv = [&kin](double rr) {
        const double zero_from = kin.bounds.r_hi - kin.window;
        const double one_until = kin.bounds.r_hi - 1.5 * kin.window;
        if (rr <= one_until || rr >= zero_from) return 0.0;
        return -quintic_smoothstep((rr - one_until) / (0.5 * kin.window)).deriv / (0.5 * kin.window);
    };
    const double up_dr = window_up_deriv(r);
    const double down_dr = -window_up_deriv(kin.bounds.r_lo + kin.bounds.r_hi - r);

    RatePartials p;
    p.du = (pos_smooth_deriv(raw, kin.eta) * up + pos_smooth_deriv(-raw, kin.eta) * down) * raw_du;
    p.dr = pos_smooth(raw, kin.eta) * up_dr - pos_smooth(-raw, kin.eta) * down_dr;
    return p;
}

double rate_g_lipschitz(const Kinetics& kin) {
    const double lu = kin.k_rate;
    const double sup_raw = (kin.k_rate > 0.0) ? kin.cap : 0.0;
    const double sup_pos = pos_smooth(sup_raw, kin.eta);
    const double sup_window_slope = (15.0 / 8.0) / (0.5 * kin.window);
    const double lr = sup_pos * sup_window_slope;
    return std::max(lu, lr);
}

} // namespace evoporo
