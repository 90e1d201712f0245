#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "hemopinn/mlp.hpp"
#include "hemopinn/rng.hpp"

using namespace hemopinn;
using namespace hemopinn::neural;

namespace {

// scalar network output via degree-1 jets (value slot)
double net_value(const MlpSpec& spec, std::span<const double> P, double x, double y, double t,
                 int out) {
    MlpWorkspace<Jet31> ws;
    ws.resize(spec);
    ws.in[0] = Jet31::variable(x, 0);
    ws.in[1] = Jet31::variable(y, 1);
    ws.in[2] = Jet31::variable(t, 2);
    mlp_forward(spec, P, ws);
    return ws.out[out].value();
}

double fd_rec(const std::function<double(double, double, double)>& f, double x, double y, double t,
              int ox, int oy, int ot, double h) {
    if (ox > 0)
        return (fd_rec(f, x + h, y, t, ox - 1, oy, ot, h) -
                fd_rec(f, x - h, y, t, ox - 1, oy, ot, h)) /
               (2 * h);
    if (oy > 0)
        return (fd_rec(f, x, y + h, t, ox, oy - 1, ot, h) -
                fd_rec(f, x, y - h, t, ox, oy - 1, ot, h)) /
               (2 * h);
    if (ot > 0)
        return (fd_rec(f, x, y, t + h, ox, oy, ot - 1, h) -
                fd_rec(f, x, y, t - h, ox, oy, ot - 1, h)) /
               (2 * h);
    return f(x, y, t);
}

double fd_richardson(const std::function<double(double, double, double)>& f, double x, double y,
                     double t, int ox, int oy, int ot, double h) {
    const double d1 = fd_rec(f, x, y, t, ox, oy, ot, h);
    const double d2 = fd_rec(f, x, y, t, ox, oy, ot, h / 2);
    return (4.0 * d2 - d1) / 3.0;
}

} // namespace

TEST_CASE("parameter count follows the layer-shape arithmetic") {
    // width 220, 7 hidden layers, io (3, 3):
    // 3*220+220 + 6*(220^2+220) + 220*3+3
    MlpSpec paper{3, 7, 220, 3};
    CHECK(mlp_param_count(paper) == 3 * 220 + 220 + 6 * (220 * 220 + 220) + 220 * 3 + 3);
    CHECK(mlp_param_count(paper) == 293263);

    MlpSpec tiny{2, 1, 4, 1};
    CHECK(mlp_param_count(tiny) == 2 * 4 + 4 + 4 * 1 + 1);
}

TEST_CASE("init is deterministic per seed and Glorot-scaled") {
    MlpSpec spec{3, 7, 220, 3};
    std::vector<double> a(mlp_param_count(spec)), b(mlp_param_count(spec));
    init_mlp_params(spec, a, 11);
    init_mlp_params(spec, b, 11);
    CHECK(a == b);
    init_mlp_params(spec, b, 12);
    CHECK(a != b);

    // middle-layer weights: variance ~= 2 / (fan_in + fan_out) within 5%
    const std::size_t off = 3 * 220 + 220; // after first layer
    double s2 = 0.0;
    const int n = 220 * 220;
    for (int q = 0; q < n; ++q) s2 += a[off + q] * a[off + q];
    const double var = s2 / n;
    CHECK(std::abs(var - 2.0 / 440.0) / (2.0 / 440.0) < 0.05);

    // biases zero
    for (int q = 0; q < 220; ++q) CHECK(a[3 * 220 + q] == 0.0);
}

TEST_CASE("zero-weight network maps everything to zero jets") {
    MlpSpec spec{3, 2, 8, 2};
    std::vector<double> P(mlp_param_count(spec), 0.0);
    MlpWorkspace<Jet33> ws;
    ws.resize(spec);
    ws.in[0] = Jet33::variable(0.3, 0);
    ws.in[1] = Jet33::variable(-1.2, 1);
    ws.in[2] = Jet33::variable(0.9, 2);
    mlp_forward(spec, std::span<const double>(P), ws);
    for (const auto& o : ws.out)
        for (double c : o.c) CHECK(c == 0.0);
}

TEST_CASE("a linear layer on jets reproduces the affine map exactly") {
    // u = 2x + 3y + 0.5
    std::vector<double> P = {2.0, 3.0, 0.5};
    Jet33 in[2] = {Jet33::variable(1.7, 0), Jet33::variable(-0.6, 1)};
    Jet33 out[1];
    std::size_t pos = 0;
    neural::detail::linear_layer(std::span<const double>(P), pos, in, 2, out, 1);
    CHECK(out[0].value() == Catch::Approx(2.0 * 1.7 + 3.0 * (-0.6) + 0.5));
    CHECK(out[0].deriv(1, 0, 0) == Catch::Approx(2.0));
    CHECK(out[0].deriv(0, 1, 0) == Catch::Approx(3.0));
    for (int q = 4; q < Jet33::N; ++q) CHECK(out[0].c[q] == 0.0);
}

TEST_CASE("forward jets match Richardson finite differences on random nets") {
    MlpSpec spec{3, 2, 8, 2};
    std::vector<double> P(mlp_param_count(spec));
    for (int trial = 0; trial < 4; ++trial) {
        init_mlp_params(spec, P, 100 + trial);
        MlpWorkspace<Jet33> ws;
        ws.resize(spec);
        const double x0 = 0.3 - 0.2 * trial, y0 = 0.5 + 0.1 * trial, t0 = -0.4;
        ws.in[0] = Jet33::variable(x0, 0);
        ws.in[1] = Jet33::variable(y0, 1);
        ws.in[2] = Jet33::variable(t0, 2);
        mlp_forward(spec, std::span<const double>(P), ws);
        for (int out = 0; out < 2; ++out) {
            auto f = [&](double x, double y, double t) { return net_value(spec, P, x, y, t, out); };
            for (int ox = 0; ox <= 3; ++ox)
                for (int oy = 0; oy + ox <= 3; ++oy)
                    for (int ot = 0; ot + oy + ox <= 3; ++ot) {
                        const int order = ox + oy + ot;
                        if (order == 0) continue;
                        const double h = order >= 3 ? 4e-2 : (order == 2 ? 1e-2 : 2e-3);
                        const double ref = fd_richardson(f, x0, y0, t0, ox, oy, ot, h);
                        const double got = ws.out[out].deriv(ox, oy, ot);
                        CHECK(std::abs(got - ref) <= 1e-5 * std::max(0.1, std::abs(ref)));
                    }
        }
    }
}

TEST_CASE("backward pass gradient matches finite differences") {
    MlpSpec spec{3, 2, 6, 2};
    std::vector<double> P(mlp_param_count(spec));
    init_mlp_params(spec, P, 77);

    // random linear functional over all output jet coefficients
    std::vector<double> wts(2 * Jet33::N);
    rng::Stream rs(5, 2);
    for (auto& w : wts) w = rs.u(-1, 1);

    auto loss_of = [&](std::span<const double> params) {
        MlpWorkspace<Jet33> ws;
        ws.resize(spec);
        ws.in[0] = Jet33::variable(0.25, 0);
        ws.in[1] = Jet33::variable(-0.5, 1);
        ws.in[2] = Jet33::variable(0.75, 2);
        mlp_forward(spec, params, ws);
        double L = 0.0;
        for (int o = 0; o < 2; ++o)
            for (int q = 0; q < Jet33::N; ++q) L += wts[o * Jet33::N + q] * ws.out[o].c[q];
        return L;
    };

    // analytic gradient via the structural reverse pass
    std::vector<double> G(P.size(), 0.0);
    {
        MlpWorkspace<Jet33> ws;
        ws.resize(spec);
        ws.in[0] = Jet33::variable(0.25, 0);
        ws.in[1] = Jet33::variable(-0.5, 1);
        ws.in[2] = Jet33::variable(0.75, 2);
        mlp_forward(spec, std::span<const double>(P), ws);
        Jet33 bar[2];
        for (int o = 0; o < 2; ++o)
            for (int q = 0; q < Jet33::N; ++q) bar[o].c[q] = wts[o * Jet33::N + q];
        mlp_backward(spec, std::span<const double>(P), std::span<double>(G), ws, bar);
    }

    rng::Stream pick(9, 3);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t q = pick.below(P.size());
        const double h = 1e-6;
        auto Pp = P, Pm = P;
        Pp[q] += h;
        Pm[q] -= h;
        const double fd = (loss_of(Pp) - loss_of(Pm)) / (2 * h);
        CHECK(std::abs(G[q] - fd) <= 2e-5 * std::max(0.5, std::abs(fd)));
    }
}

TEST_CASE("forward evaluation is bitwise repeatable") {
    MlpSpec spec{3, 3, 16, 2};
    std::vector<double> P(mlp_param_count(spec));
    init_mlp_params(spec, P, 4);
    MlpWorkspace<Jet33> ws1, ws2;
    ws1.resize(spec);
    ws2.resize(spec);
    for (auto* ws : {&ws1, &ws2}) {
        ws->in[0] = Jet33::variable(0.1, 0);
        ws->in[1] = Jet33::variable(0.2, 1);
        ws->in[2] = Jet33::variable(0.3, 2);
        mlp_forward(spec, std::span<const double>(P), *ws);
    }
    for (int o = 0; o < 2; ++o)
        for (int q = 0; q < Jet33::N; ++q) CHECK(ws1.out[o].c[q] == ws2.out[o].c[q]);
}

TEST_CASE("loss_gradient driver: quadratic, linearity, divergence guard") {
    ParamVector pv;
    pv.add_slice("net", 5);
    for (std::size_t q = 0; q < 5; ++q) pv.data[q] = 0.3 * (q + 1);

    // L = ||p||^2 / 2 evaluated as one batch member
    auto [L, g] = loss_gradient(pv, 1, [&](int, std::span<double> G) {
        double acc = 0.0;
        for (std::size_t q = 0; q < pv.data.size(); ++q) {
            acc += 0.5 * pv.data[q] * pv.data[q];
            G[q] += pv.data[q];
        }
        return acc;
    });
    for (std::size_t q = 0; q < 5; ++q) CHECK(g[q] == Catch::Approx(pv.data[q]));
    CHECK(L > 0.0);

    // batch of two identical members doubles the gradient
    auto [L2, g2] = loss_gradient(pv, 2, [&](int, std::span<double> G) {
        for (std::size_t q = 0; q < pv.data.size(); ++q) G[q] += pv.data[q];
        return 1.0;
    });
    CHECK(L2 == Catch::Approx(2.0));
    for (std::size_t q = 0; q < 5; ++q) CHECK(g2[q] == Catch::Approx(2.0 * pv.data[q]));

    CHECK_THROWS_AS(loss_gradient(pv, 1,
                                  [&](int, std::span<double>) {
                                      return std::numeric_limits<double>::quiet_NaN();
                                  }),
                    NonFiniteLoss);
}
