#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "hemopinn/jet.hpp"
#include "hemopinn/rng.hpp"

using namespace hemopinn;
using namespace hemopinn::neural;

namespace {

// sequential central differences with Richardson extrapolation
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

TEST_CASE("jet coefficient counts") {
    CHECK(Jet<3, 3>::N == 20);
    CHECK(Jet<2, 2>::N == 6);
    CHECK(Jet<3, 1>::N == 4);
    CHECK(Jet<1, 1>::N == 2);
    CHECK(Jet<2, 0>::N == 1);
}

TEST_CASE("jet products are exact on polynomials") {
    // f = x^2 y at (2, 3)
    const auto x = Jet33::variable(2.0, 0);
    const auto y = Jet33::variable(3.0, 1);
    const auto f = x * x * y;
    CHECK(f.value() == Catch::Approx(12.0));
    CHECK(f.deriv(1, 0, 0) == Catch::Approx(12.0)); // 2xy
    CHECK(f.deriv(0, 1, 0) == Catch::Approx(4.0));  // x^2
    CHECK(f.deriv(2, 0, 0) == Catch::Approx(6.0));  // 2y
    CHECK(f.deriv(1, 1, 0) == Catch::Approx(4.0));  // 2x
    CHECK(f.deriv(2, 1, 0) == Catch::Approx(2.0));
    CHECK(f.deriv(0, 0, 1) == 0.0);
    CHECK(f.deriv(3, 0, 0) == 0.0);
}

TEST_CASE("swish values at the anchors") {
    double f[5];
    swish_derivs(0.0, f, 3);
    CHECK(f[0] == Catch::Approx(0.0).margin(1e-15));
    CHECK(f[1] == Catch::Approx(0.5).epsilon(1e-14));
    swish_derivs(1.0, f, 0);
    CHECK(f[0] == Catch::Approx(0.7310585786300049).epsilon(1e-14));
}

TEST_CASE("swish derivative ladder matches finite differences") {
    auto swish = [](double x, double, double) { return x / (1.0 + std::exp(-x)); };
    for (double x : {-2.3, -0.7, 0.0, 0.4, 1.9}) {
        double f[6];
        swish_derivs(x, f, 5);
        for (int k = 1; k <= 4; ++k) {
            double ref = 0.0;
            if (k == 1) ref = fd_richardson(swish, x, 0, 0, 1, 0, 0, 1e-3);
            if (k == 2) ref = fd_richardson(swish, x, 0, 0, 2, 0, 0, 1e-2);
            if (k == 3) ref = fd_richardson(swish, x, 0, 0, 3, 0, 0, 2e-2);
            if (k == 4) ref = fd_richardson(swish, x, 0, 0, 4, 0, 0, 5e-2);
            // the FD oracle itself limits accuracy for the higher orders
            const double tol = k <= 2 ? 1e-6 : 1e-5;
            CHECK(std::abs(f[k] - ref) < tol * std::max(1.0, std::abs(ref)));
        }
    }
}

TEST_CASE("swish jet carries exact partials of a composed expression") {
    // g(x, y, t) = swish(0.3 x - 0.8 y + 0.5 t + 0.2 x y)
    auto inner = [](double x, double y, double t) { return 0.3 * x - 0.8 * y + 0.5 * t + 0.2 * x * y; };
    auto g = [&](double x, double y, double t) {
        const double z = inner(x, y, t);
        return z / (1.0 + std::exp(-z));
    };
    const double x0 = 0.7, y0 = -0.4, t0 = 1.1;
    const auto x = Jet33::variable(x0, 0);
    const auto y = Jet33::variable(y0, 1);
    const auto t = Jet33::variable(t0, 2);
    const auto z = 0.3 * x - 0.8 * y + 0.5 * t + 0.2 * (x * y);
    const auto s = swish_jet(z);

    for (int ox = 0; ox <= 3; ++ox)
        for (int oy = 0; oy + ox <= 3; ++oy)
            for (int ot = 0; ot + oy + ox <= 3; ++ot) {
                const int order = ox + oy + ot;
                const double h = order >= 3 ? 3e-2 : (order == 2 ? 1e-2 : 1e-3);
                const double ref = fd_richardson(g, x0, y0, t0, ox, oy, ot, h);
                const double got = s.deriv(ox, oy, ot);
                CHECK(std::abs(got - ref) < 1e-6 * std::max(1.0, std::abs(ref)));
            }
}

TEST_CASE("jet multiply adjoint is the transpose of the product map") {
    // directional check: <cbar, a*b> must equal <mul_adjoint(cbar, b), a>
    rng::Stream s(3, 1);
    Jet33 a, b, cbar;
    for (int q = 0; q < Jet33::N; ++q) {
        a.c[q] = s.u(-1, 1);
        b.c[q] = s.u(-1, 1);
        cbar.c[q] = s.u(-1, 1);
    }
    const auto c = a * b;
    double lhs = 0.0;
    for (int q = 0; q < Jet33::N; ++q) lhs += cbar.c[q] * c.c[q];
    Jet33 abar;
    jet_mul_adjoint<3, 3>(cbar.c.data(), b.c.data(), abar.c.data());
    double rhs = 0.0;
    for (int q = 0; q < Jet33::N; ++q) rhs += abar.c[q] * a.c[q];
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
}
