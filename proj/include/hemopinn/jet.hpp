#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "hemopinn/errors.hpp"

namespace hemopinn::neural {

// Truncated multivariate Taylor (jet) arithmetic up to total degree D in V
// input variables. Coefficients are stored in the Taylor convention,
// c_alpha = d^alpha f / alpha!, ordered by total degree and x-major within a
// degree, so truncated products are plain convolutions over a precomputed
// index table. Propagating jets through the network yields exact input
// derivatives of every output up to degree D.

constexpr int jet_binom(int n, int k) {
    long long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return static_cast<int>(r);
}

template <int V, int D>
struct JetTraits {
    static_assert(V >= 1 && V <= 3 && D >= 0 && D <= 3);
    static constexpr int ncoef = jet_binom(V + D, D);

    static constexpr std::array<std::array<int, 3>, ncoef> make_exponents() {
        std::array<std::array<int, 3>, ncoef> e{};
        int idx = 0;
        for (int g = 0; g <= D; ++g) {
            if constexpr (V == 1) {
                e[idx++] = {g, 0, 0};
            } else if constexpr (V == 2) {
                for (int i = g; i >= 0; --i) e[idx++] = {i, g - i, 0};
            } else {
                for (int i = g; i >= 0; --i)
                    for (int j = g - i; j >= 0; --j) e[idx++] = {i, j, g - i - j};
            }
        }
        return e;
    }
    static constexpr std::array<std::array<int, 3>, ncoef> exponents = make_exponents();

    static constexpr int index_of(int i, int j = 0, int k = 0) {
        for (int q = 0; q < ncoef; ++q)
            if (exponents[q][0] == i && exponents[q][1] == j && exponents[q][2] == k) return q;
        return -1;
    }

    static constexpr int count_pairs() {
        int n = 0;
        for (int a = 0; a < ncoef; ++a)
            for (int b = 0; b < ncoef; ++b) {
                int s = 0;
                for (int v = 0; v < 3; ++v) s += exponents[a][v] + exponents[b][v];
                if (s <= D) ++n;
            }
        return n;
    }
    static constexpr int npairs = count_pairs();

    struct Triple { int a, b, dst; };
    static constexpr std::array<Triple, npairs> make_pairs() {
        std::array<Triple, npairs> t{};
        int n = 0;
        for (int a = 0; a < ncoef; ++a)
            for (int b = 0; b < ncoef; ++b) {
                int s = 0;
                for (int v = 0; v < 3; ++v) s += exponents[a][v] + exponents[b][v];
                if (s > D) continue;
                t[n++] = {a, b, index_of(exponents[a][0] + exponents[b][0],
                                         exponents[a][1] + exponents[b][1],
                                         exponents[a][2] + exponents[b][2])};
            }
        return t;
    }
    static constexpr std::array<Triple, npairs> pairs = make_pairs();

    // pairs whose second factor is not the constant slot: products with a
    // nilpotent jet (zero constant term) only need these
    static constexpr int count_pairs_bnz() {
        int n = 0;
        for (int q = 0; q < npairs; ++q) n += (pairs[q].b != 0);
        return n;
    }
    static constexpr int npairs_bnz = count_pairs_bnz();
    static constexpr std::array<Triple, npairs_bnz> make_pairs_bnz() {
        std::array<Triple, npairs_bnz> t{};
        int n = 0;
        for (int q = 0; q < npairs; ++q)
            if (pairs[q].b != 0) t[n++] = pairs[q];
        return t;
    }
    static constexpr std::array<Triple, npairs_bnz> pairs_bnz = make_pairs_bnz();

    static constexpr double factorial_of(int i, int j, int k) {
        constexpr double f[4] = {1.0, 1.0, 2.0, 6.0};
        return f[i] * f[j] * f[k];
    }
};

namespace detail {

template <int V, int D, std::size_t... I>
inline void mul_unrolled(const double* a, const double* b, double* out, std::index_sequence<I...>) {
    using T = JetTraits<V, D>;
    ((out[T::pairs[I].dst] += a[T::pairs[I].a] * b[T::pairs[I].b]), ...);
}

template <int V, int D, std::size_t... I>
inline void mul_nilpotent_unrolled(const double* a, const double* w, double* out,
                                   std::index_sequence<I...>) {
    using T = JetTraits<V, D>;
    ((out[T::pairs_bnz[I].dst] += a[T::pairs_bnz[I].a] * w[T::pairs_bnz[I].b]), ...);
}

template <int V, int D, std::size_t... I>
inline void mul_adjoint_unrolled(const double* cbar, const double* b, double* abar,
                                 std::index_sequence<I...>) {
    using T = JetTraits<V, D>;
    ((abar[T::pairs[I].a] += cbar[T::pairs[I].dst] * b[T::pairs[I].b]), ...);
}

} // namespace detail

// out = a (*) b, truncated to degree D; out must not alias a or b
template <int V, int D>
inline void jet_mul(const double* a, const double* b, double* out) {
    using T = JetTraits<V, D>;
    for (int q = 0; q < T::ncoef; ++q) out[q] = 0.0;
    detail::mul_unrolled<V, D>(a, b, out, std::make_index_sequence<T::npairs>{});
}

// out += a (*) w with w nilpotent (zero constant slot)
template <int V, int D>
inline void jet_mul_nilpotent_acc(const double* a, const double* w, double* out) {
    using T = JetTraits<V, D>;
    detail::mul_nilpotent_unrolled<V, D>(a, w, out, std::make_index_sequence<T::npairs_bnz>{});
}

// adjoint of jet_mul with respect to its first factor: abar += corr(cbar, b)
template <int V, int D>
inline void jet_mul_adjoint(const double* cbar, const double* b, double* abar) {
    using T = JetTraits<V, D>;
    detail::mul_adjoint_unrolled<V, D>(cbar, b, abar, std::make_index_sequence<T::npairs>{});
}

template <int V, int D>
struct Jet {
    using Traits = JetTraits<V, D>;
    static constexpr int N = Traits::ncoef;
    static constexpr int vars = V;
    static constexpr int degree = D;
    std::array<double, N> c{};

    static Jet constant(double x) {
        Jet j;
        j.c[0] = x;
        return j;
    }
    // seed jet for input variable `var` (0-based) with the given value
    static Jet variable(double value, int var) {
        Jet j;
        j.c[0] = value;
        if constexpr (D >= 1) j.c[1 + var] = 1.0;
        return j;
    }

    double value() const { return c[0]; }

    // partial derivative d^(i+j+k) / dx^i dy^j dt^k
    double deriv(int i, int j = 0, int k = 0) const {
        const int q = Traits::index_of(i, j, k);
        if (q < 0) throw DegreeTooLow("jet does not carry this derivative order");
        return c[q] * Traits::factorial_of(i, j, k);
    }

    Jet& operator+=(const Jet& o) {
        for (int q = 0; q < N; ++q) c[q] += o.c[q];
        return *this;
    }
    Jet& operator-=(const Jet& o) {
        for (int q = 0; q < N; ++q) c[q] -= o.c[q];
        return *this;
    }
    Jet& operator*=(double s) {
        for (int q = 0; q < N; ++q) c[q] *= s;
        return *this;
    }
    friend Jet operator+(Jet a, const Jet& b) { return a += b; }
    friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
    friend Jet operator*(Jet a, double s) { return a *= s; }
    friend Jet operator*(double s, Jet a) { return a *= s; }
    friend Jet operator*(const Jet& a, const Jet& b) {
        Jet r;
        jet_mul<V, D>(a.c.data(), b.c.data(), r.c.data());
        return r;
    }
};

// y = sum_{k<=D} f[k]/k! * w^k with w = x stripped of its constant term:
// the truncated composition of a univariate function with a jet. `f` holds
// the derivative values f^{(k)}(x0) for k = 0..D. Horner in the nilpotent
// part w, so each step is a nilpotent product.
template <int V, int D>
inline Jet<V, D> jet_compose(const Jet<V, D>& x, const double* f) {
    constexpr double inv_fact[4] = {1.0, 1.0, 0.5, 1.0 / 6.0};
    Jet<V, D> w = x;
    w.c[0] = 0.0;
    Jet<V, D> y = Jet<V, D>::constant(f[D] * inv_fact[D]);
    for (int k = D - 1; k >= 0; --k) {
        Jet<V, D> t = Jet<V, D>::constant(f[k] * inv_fact[k]);
        jet_mul_nilpotent_acc<V, D>(y.c.data(), w.c.data(), t.c.data());
        y = t;
    }
    return y;
}

// ---------------------------------------------------------------------------
// Swish activation through jets
// ---------------------------------------------------------------------------

// sigma^{(k)}(x) for k = 0..n (n <= 5), via the polynomial recurrence in
// s = sigma(x): d sigma^{(k)} / dx = P_k'(s) * s (1 - s). The polynomial
// coefficients are constants, built once at compile time.
namespace detail {
constexpr std::array<std::array<double, 8>, 6> sigmoid_poly_table() {
    std::array<std::array<double, 8>, 6> poly{};
    poly[0][1] = 1.0; // sigma = s
    for (int k = 1; k < 6; ++k) {
        double dp[8] = {};
        for (int d = 1; d < 8; ++d) dp[d - 1] = poly[k - 1][d] * d;
        for (int d = 0; d < 6; ++d) {
            poly[k][d + 1] += dp[d];
            poly[k][d + 2] -= dp[d];
        }
    }
    return poly;
}
inline constexpr auto kSigmoidPoly = sigmoid_poly_table();
} // namespace detail

// variant taking the precomputed sigmoid value s = sigma(x)
inline void sigmoid_derivs_from_s(double s, double* out, int n) {
    for (int k = 0; k <= n; ++k) {
        const auto& poly = detail::kSigmoidPoly[k];
        double acc = 0.0;
        for (int d = 7; d >= 0; --d) acc = acc * s + poly[d];
        out[k] = acc;
    }
}

inline void sigmoid_derivs(double x, double* out, int n) {
    sigmoid_derivs_from_s(1.0 / (1.0 + std::exp(-x)), out, n);
}

// swish^{(k)}(x) for k = 0..n, swish(x) = x * sigma(x)
inline void swish_derivs_from_s(double x, double s, double* out, int n) {
    double sg[8];
    sigmoid_derivs_from_s(s, sg, n);
    out[0] = x * sg[0];
    for (int k = 1; k <= n; ++k) out[k] = k * sg[k - 1] + x * sg[k];
}

inline void swish_derivs(double x, double* out, int n) {
    swish_derivs_from_s(x, 1.0 / (1.0 + std::exp(-x)), out, n);
}

template <int V, int D>
inline Jet<V, D> swish_jet(const Jet<V, D>& x) {
    double f[5];
    swish_derivs(x.c[0], f, D);
    return jet_compose<V, D>(x, f);
}

// jet of swish'(x), needed by the reverse pass: in the truncated algebra
// d swish(x) = jet(swish'(x)) (*) dx
template <int V, int D>
inline Jet<V, D> swish_grad_jet(const Jet<V, D>& x) {
    double f[6];
    swish_derivs(x.c[0], f, D + 1);
    return jet_compose<V, D>(x, f + 1);
}

using Jet11 = Jet<1, 1>;
using Jet21 = Jet<2, 1>;
using Jet22 = Jet<2, 2>;
using Jet31 = Jet<3, 1>;
using Jet33 = Jet<3, 3>;

} // namespace hemopinn::neural
