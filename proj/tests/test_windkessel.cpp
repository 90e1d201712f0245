#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "hemopinn/errors.hpp"
#include "hemopinn/windkessel.hpp"

using namespace hemopinn;

namespace {
// Table-3-like parameter sets (CGS)
const wk::Params kGamma1{713.0, 12023.0, 8.256e-5};
const wk::Params kGamma5{98.0, 1650.0, 6.015e-4};
} // namespace

TEST_CASE("steady pressure P = Rt Q, checked against the reported aorta rows") {
    // Rt = 12.74e3, Q = 25.82 -> 246.7 mmHg; reported 247.96 (agreement within 1%)
    const double P1 = wk::steady_pressure({12.74e3}, 25.82);
    CHECK(P1 == Catch::Approx(3.2894e5).epsilon(1e-3));
    CHECK(std::abs(dyn_to_mmhg(P1) - 247.96) / 247.96 < 0.01);

    CHECK(wk::steady_pressure({12.74e3}, 0.0) == 0.0);

    const double P5 = wk::steady_pressure({98.0 + 1650.0}, 188.85);
    CHECK(P5 == Catch::Approx(3.301e5).epsilon(1e-3));
    CHECK(std::abs(dyn_to_mmhg(P5) - 248.15) / 248.15 < 0.01);
}

TEST_CASE("backward Euler step formula and homogeneous decay") {
    wk::State s{mmhg_to_dyn(78.8), 0.0};
    const double dt = 1e-3;
    auto [s1, P1] = wk::step_backward_euler(kGamma1, s, 0.0, dt);
    CHECK(s1.pi == Catch::Approx(s.pi / (1.0 + dt / (kGamma1.Rd * kGamma1.C))).epsilon(1e-14));
    CHECK(P1 == Catch::Approx(s1.pi).epsilon(1e-14));
    CHECK(s1.t == Catch::Approx(dt));

    // consistency: (pi' - pi)/dt -> (Q - pi/Rd)/C as dt -> 0
    const double q = 25.0;
    const double dt2 = 1e-8;
    auto [s2, P2] = wk::step_backward_euler(kGamma1, s, q, dt2);
    const double rate = (s2.pi - s.pi) / dt2;
    const double exact = (q - s.pi / kGamma1.Rd) / kGamma1.C;
    CHECK(std::abs(rate - exact) / std::abs(exact) < 1e-6);
}

TEST_CASE("analytic constant-flow solution endpoints") {
    const double pi0 = mmhg_to_dyn(78.8), q = 25.0;
    CHECK(wk::analytic_constant_flow(kGamma1, pi0, q, 0.0) ==
          Catch::Approx(kGamma1.Rp * q + pi0).epsilon(1e-14));
    CHECK(wk::analytic_constant_flow(kGamma1, pi0, q, 1e9) ==
          Catch::Approx((kGamma1.Rp + kGamma1.Rd) * q).epsilon(1e-12));
    // Rd C = 0.9926 s: value at t = Rd C decays to 1/e
    const double tau = kGamma1.Rd * kGamma1.C;
    CHECK(tau == Catch::Approx(0.9926).epsilon(1e-3));
    CHECK(wk::analytic_constant_flow(kGamma1, 1.0, 0.0, tau) ==
          Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("backward Euler matches the analytic oracle at dt=1e-4 over 5 RdC") {
    const double pi0 = mmhg_to_dyn(78.8), q = 25.0, dt = 1e-4;
    const double horizon = 5.0 * kGamma1.Rd * kGamma1.C;
    wk::State s{pi0, 0.0};
    double max_rel = 0.0;
    const int n = static_cast<int>(horizon / dt);
    for (int i = 0; i < n; ++i) {
        auto [s2, P] = wk::step_backward_euler(kGamma1, s, q, dt);
        s = s2;
        const double exact = wk::analytic_constant_flow(kGamma1, pi0, q, s.t);
        max_rel = std::max(max_rel, std::abs(P - exact) / std::abs(exact));
    }
    CHECK(max_rel < 1e-3);
}

TEST_CASE("backward Euler is first order in dt") {
    const double pi0 = mmhg_to_dyn(78.8), q = 25.0, T = 1.0;
    auto err = [&](double dt) {
        wk::State s{pi0, 0.0};
        const int n = static_cast<int>(std::round(T / dt));
        double e = 0.0;
        for (int i = 0; i < n; ++i) {
            auto [s2, P] = wk::step_backward_euler(kGamma1, s, q, dt);
            s = s2;
            (void)P;
            e = std::max(e, std::abs(s.pi - (wk::analytic_constant_flow(kGamma1, pi0, q, s.t) -
                                             kGamma1.Rp * q)));
        }
        return e;
    };
    const double e1 = err(1e-3), e2 = err(5e-4), e3 = err(2.5e-4);
    CHECK(e1 / e2 == Catch::Approx(2.0).margin(0.25));
    CHECK(e2 / e3 == Catch::Approx(2.0).margin(0.25));
}

TEST_CASE("backward Euler is unconditionally stable for Q = 0") {
    for (double dt : {1e-4, 1.0, 100.0, 1e6}) {
        wk::State s{1.0, 0.0};
        auto [s2, P] = wk::step_backward_euler(kGamma1, s, 0.0, dt);
        (void)P;
        CHECK(std::abs(s2.pi) <= std::abs(s.pi));
    }
}

TEST_CASE("stepping to steady state recovers the one-element limit") {
    wk::State s{0.0, 0.0};
    const double q = 10.0, dt = 1e-2;
    double P = 0.0;
    for (int i = 0; i < 20000; ++i) {
        auto [s2, Pn] = wk::step_backward_euler(kGamma5, s, q, dt);
        if (std::abs(s2.pi - s.pi) < 1e-12) { s = s2; P = Pn; break; }
        s = s2;
        P = Pn;
    }
    CHECK(P == Catch::Approx((kGamma5.Rp + kGamma5.Rd) * q).epsilon(1e-9));
}

TEST_CASE("decay-time fit recovers tau from a clean exponential") {
    std::vector<double> t, p;
    for (int i = 0; i < 40; ++i) {
        t.push_back(0.03 * i);
        p.push_back(5.0 * std::exp(-0.03 * i / 0.9926));
    }
    const double tau = wk::fit_decay_time(t, p, 0.0, 1.2);
    CHECK(tau == Catch::Approx(0.9926).epsilon(1e-9));
}

TEST_CASE("decay-time fit error paths") {
    std::vector<double> t = {0.0, 0.1, 0.2, 0.3};
    std::vector<double> flat = {2.0, 2.0, 2.0, 2.0};
    CHECK_THROWS_AS(wk::fit_decay_time(t, flat, 0.0, 0.3), NonPositiveDecay);
    std::vector<double> few = {2.0, 1.0, 0.5, 0.25};
    CHECK_THROWS_AS(wk::fit_decay_time(t, few, 0.0, 0.05), WindowTooShort);
    std::vector<double> neg = {2.0, 1.0, -0.5, 0.25};
    CHECK_THROWS_AS(wk::fit_decay_time(t, neg, 0.0, 0.3), NonPositivePressure);
}

TEST_CASE("Table 3 rows share the same decay time within 0.1%") {
    const double taus[5] = {12023.0 * 8.256e-5, 12023.0 * 8.256e-5, 10143.0 * 9.785e-5,
                            11609.0 * 8.55e-5, 1650.0 * 6.015e-4};
    for (int k = 1; k < 5; ++k)
        CHECK(std::abs(taus[k] - taus[0]) / taus[0] < 1e-3);
    CHECK(taus[0] == Catch::Approx(0.9926).epsilon(2e-4));
}
