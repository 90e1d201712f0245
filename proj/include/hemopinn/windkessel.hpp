#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "hemopinn/errors.hpp"

namespace hemopinn::wk {

// Three-element Windkessel parameters. The steady variant collapses to a
// single total resistance Rt = Rp + Rd with no internal pressure state.
struct Params {
    double Rp = 0.0; // proximal resistance
    double Rd = 0.0; // distal resistance
    double C = 0.0;  // compliance

    double total() const { return Rp + Rd; }
    double decay_time() const { return Rd * C; }
};

struct SteadyParams {
    double Rt = 0.0;
};

struct State {
    double pi = 0.0; // internal pressure (dyn/cm^2)
    double t = 0.0;  // current time (s)
};

inline double steady_pressure(const SteadyParams& p, double Q) { return p.Rt * Q; }

// One backward-Euler step of C dpi/dt + pi/Rd = Q, evaluated at the new time
// level. Returns the advanced state and the outlet pressure P = Rp Q + pi'.
inline std::pair<State, double> step_backward_euler(const Params& p, const State& s,
                                                    double Q_next, double dt) {
    State out;
    out.pi = (s.pi + dt * Q_next / p.C) / (1.0 + dt / (p.Rd * p.C));
    out.t = s.t + dt;
    return {out, p.Rp * Q_next + out.pi};
}

// Closed-form outlet pressure for constant inflow Q: the test oracle for the
// backward-Euler integrator.
inline double analytic_constant_flow(const Params& p, double pi0, double Q, double t) {
    return p.Rp * Q + Q * p.Rd + (pi0 - Q * p.Rd) * std::exp(-t / (p.Rd * p.C));
}

// Decay time tau from a least-squares line fit of ln(pbar) against t over
// [t_close, t_end]; the diastolic window where the Windkessel model predicts
// pbar ~ exp(-t / Rd C).
inline double fit_decay_time(const std::vector<double>& t, const std::vector<double>& pbar,
                             double t_close, double t_end) {
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size() && i < pbar.size(); ++i) {
        if (t[i] < t_close || t[i] > t_end) continue;
        if (!(pbar[i] > 0.0)) throw NonPositivePressure("fit_decay_time: pbar must be positive in the fit window");
        const double y = std::log(pbar[i]);
        st += t[i];
        sy += y;
        stt += t[i] * t[i];
        sty += t[i] * y;
        ++n;
    }
    if (n < 3) throw WindowTooShort("fit_decay_time: need at least 3 samples in [t_close, t_end]");
    const double denom = n * stt - st * st;
    const double slope = (n * sty - st * sy) / denom;
    const double tau = -1.0 / slope;
    // a flat curve yields slope ~ 0 up to rounding: guard against tau -> inf
    if (!(slope < 0.0) || !std::isfinite(tau) || tau > 1e6 * (t_end - t_close))
        throw NonPositiveDecay("fit_decay_time: pressure does not decay over the window");
    return tau;
}

} // namespace hemopinn::wk
