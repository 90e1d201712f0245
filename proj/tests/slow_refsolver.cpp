#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hemopinn/refsolver.hpp"

using namespace hemopinn;
using namespace hemopinn::geom;
using namespace hemopinn::refsolver;

// Longer-running solver verification kept out of the fast unit suite.

TEST_CASE("mass balance over a full cycle") {
    auto spec = DomainSpec::desk_default();
    spec.U = 50.0;
    auto mask = build_mask(spec, 0.125);
    SolverConfig cfg;
    cfg.dt = 1e-3;
    cfg.T = 0.66;
    cfg.save_every = 5;
    auto wave = InflowWaveform::pulse(20.0, 0.0, 0.25, 0.66);
    const std::vector<wk::Params> params = {{713.0, 12023.0, 8.256e-5}, {98.0, 1650.0, 6.015e-4}};
    auto snaps = run_transient(spec, mask, cfg, wave, params, mmhg_to_dyn(78.8));

    // trapezoid integrals of the recorded flow series
    double in = 0.0, out = 0.0, wave_in = 0.0;
    for (std::size_t s = 0; s + 1 < snaps.size(); ++s) {
        const double dt = snaps[s + 1].t - snaps[s].t;
        in += 0.5 * dt * (snaps[s].q_in + snaps[s + 1].q_in);
        wave_in += 0.5 * dt * (wave.flow(snaps[s].t) + wave.flow(snaps[s + 1].t));
        for (std::size_t k = 0; k < snaps[s].Q.size(); ++k)
            out += 0.5 * dt * (snaps[s].Q[k] + snaps[s + 1].Q[k]);
    }
    const double stroke = wave_in;
    CHECK(std::abs(out - in) < 0.01 * stroke);      // discrete conservation
    CHECK(std::abs(in - wave_in) < 0.01 * stroke);  // penalty tracks the waveform
}

TEST_CASE("halving dt changes the peak-systole outlet flow by < 2%") {
    auto spec = DomainSpec::desk_default();
    spec.U = 50.0;
    auto mask = build_mask(spec, 0.125);
    auto wave = InflowWaveform::pulse(20.0, 0.0, 0.25, 0.66);
    const std::vector<wk::Params> params = {{713.0, 12023.0, 8.256e-5}, {98.0, 1650.0, 6.015e-4}};

    auto peak_q = [&](double dt) {
        SolverConfig cfg;
        cfg.dt = dt;
        cfg.T = 0.35;
        cfg.save_every = static_cast<int>(std::round(0.01 / dt));
        auto snaps = run_transient(spec, mask, cfg, wave, params, mmhg_to_dyn(78.8));
        double q1 = 0.0, q2 = 0.0;
        for (const auto& s : snaps) {
            q1 = std::max(q1, s.Q[0]);
            q2 = std::max(q2, s.Q[1]);
        }
        return std::make_pair(q1, q2);
    };
    auto [a1, a2] = peak_q(1e-3);
    auto [b1, b2] = peak_q(5e-4);
    CHECK(std::abs(a1 - b1) < 0.02 * b1);
    CHECK(std::abs(a2 - b2) < 0.02 * b2);
}

TEST_CASE("grid refinement does not degrade the Poiseuille profile") {
    auto poiseuille_err = [&](double h) {
        DomainSpec spec;
        spec.rectangles = {{0.0, 0.0, 4.0, 1.0}};
        spec.inlet = {Axis::vertical, 0.0, 0.0, 1.0, -1};
        spec.outlets = {{Axis::vertical, 4.0, 0.0, 1.0, +1}};
        spec.L = 1.0;
        spec.U = 15.0;
        spec.validate();
        auto mask = build_mask(spec, h);
        SolverConfig cfg;
        cfg.dt = std::min(2e-3, 0.2 * h * h / (0.035 / 1.06));
        cfg.T = 60.0;
        cfg.steady_tol_factor = 1e-6;
        const double Q = 10.0;
        auto snap = run_steady(spec, mask, cfg, Q, {wk::SteadyParams{1e-9}});
        double max_err = 0.0;
        const int imid = mask.nx / 2;
        for (int j = 0; j < mask.ny; ++j) {
            const double y = mask.cy(j);
            max_err = std::max(max_err, std::abs(snap.u[mask.ui(imid, j)] - 6.0 * Q * y * (1.0 - y)));
        }
        return max_err / (1.5 * Q);
    };
    const double e8 = poiseuille_err(1.0 / 8.0);
    const double e16 = poiseuille_err(1.0 / 16.0);
    CHECK(e16 <= e8 * 1.05);
    CHECK(e16 < 0.02);
}
