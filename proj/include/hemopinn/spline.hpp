#pragma once

#include <cstddef>
#include <vector>

#include "hemopinn/errors.hpp"

namespace hemopinn {

// Cubic interpolating spline with not-a-knot end conditions, so polynomial
// data up to degree three is reproduced exactly. Degenerate sample counts
// fall back to the unique interpolant of matching degree (line, parabola).
class CubicSpline {
public:
    CubicSpline() = default;

    CubicSpline(std::vector<double> x, std::vector<double> y)
        : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        if (n != y_.size() || n < 2) throw Error("CubicSpline: need >= 2 samples");
        for (std::size_t i = 0; i + 1 < n; ++i)
            if (!(x_[i + 1] > x_[i])) throw Error("CubicSpline: abscissae must be strictly increasing");
        m_.assign(n, 0.0);
        if (n == 2) return; // moments stay zero: straight line
        if (n == 3) {
            // single parabola through three points: constant second derivative
            const double h0 = x_[1] - x_[0], h1 = x_[2] - x_[1];
            const double dd = 2.0 * ((y_[2] - y_[1]) / h1 - (y_[1] - y_[0]) / h0) / (h0 + h1);
            m_.assign(3, dd);
            return;
        }
        solve_moments();
    }

    double operator()(double xq) const {
        const std::size_t i = interval(xq);
        const double h = x_[i + 1] - x_[i];
        const double a = x_[i + 1] - xq, b = xq - x_[i];
        return m_[i] * a * a * a / (6.0 * h) + m_[i + 1] * b * b * b / (6.0 * h) +
               (y_[i] / h - m_[i] * h / 6.0) * a + (y_[i + 1] / h - m_[i + 1] * h / 6.0) * b;
    }

    double front_x() const { return x_.front(); }
    double back_x() const { return x_.back(); }

private:
    std::size_t interval(double xq) const {
        // end intervals extrapolate with their cubic
        std::size_t lo = 0, hi = x_.size() - 1;
        if (xq <= x_.front()) return 0;
        if (xq >= x_.back()) return x_.size() - 2;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            (x_[mid] <= xq ? lo : hi) = mid;
        }
        return lo;
    }

    void solve_moments() {
        const std::size_t n = x_.size();
        std::vector<double> h(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) h[i] = x_[i + 1] - x_[i];
        auto slope = [&](std::size_t i) { return (y_[i + 1] - y_[i]) / h[i]; };

        // Unknowns M_1..M_{n-2}; the not-a-knot rows eliminate M_0, M_{n-1}:
        //   M_0 = ((h0+h1) M_1 - h0 M_2) / h1
        //   M_{n-1} = ((h_{n-2}+h_{n-3}) M_{n-2} - h_{n-2} M_{n-3}) / h_{n-3}
        const std::size_t m = n - 2;
        std::vector<double> dl(m, 0.0), dm(m, 0.0), du(m, 0.0), rhs(m, 0.0);
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t i = k + 1; // interior knot index
            dl[k] = h[i - 1] / 6.0;
            dm[k] = (h[i - 1] + h[i]) / 3.0;
            du[k] = h[i] / 6.0;
            rhs[k] = slope(i) - slope(i - 1);
        }
        // fold the eliminated end moments into the first and last rows
        dm[0] += dl[0] * (h[0] + h[1]) / h[1];
        du[0] -= dl[0] * h[0] / h[1];
        dl[0] = 0.0;
        dm[m - 1] += du[m - 1] * (h[n - 2] + h[n - 3]) / h[n - 3];
        dl[m - 1] -= du[m - 1] * h[n - 2] / h[n - 3];
        du[m - 1] = 0.0;

        // Thomas elimination
        for (std::size_t k = 1; k < m; ++k) {
            const double w = dl[k] / dm[k - 1];
            dm[k] -= w * du[k - 1];
            rhs[k] -= w * rhs[k - 1];
        }
        std::vector<double> sol(m);
        sol[m - 1] = rhs[m - 1] / dm[m - 1];
        for (std::size_t k = m - 1; k-- > 0;) sol[k] = (rhs[k] - du[k] * sol[k + 1]) / dm[k];

        for (std::size_t k = 0; k < m; ++k) m_[k + 1] = sol[k];
        m_[0] = ((h[0] + h[1]) * m_[1] - h[0] * m_[2]) / h[1];
        m_[n - 1] = ((h[n - 2] + h[n - 3]) * m_[n - 2] - h[n - 2] * m_[n - 3]) / h[n - 3];
    }

    std::vector<double> x_, y_;
    std::vector<double> m_; // second derivatives at the knots
};

} // namespace hemopinn
