#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "hemopinn/errors.hpp"
#include "hemopinn/jet.hpp"

namespace hemopinn::pinn {

using neural::Jet;

// Named derivatives of the flow state at one space-time point, everything
// the momentum residual needs. Filled either from the stream-function
// representation (transient) or from direct (u, v, p) outputs (steady).
struct FlowDerivs {
    double u = 0, v = 0, p = 0;
    double ux = 0, uy = 0, ut = 0;
    double vx = 0, vy = 0, vt = 0;
    double px = 0, py = 0;
    double lap_u = 0, lap_v = 0;

    double div() const { return ux + vy; }
};

struct FlowDerivsBar {
    double u = 0, v = 0, p = 0;
    double ux = 0, uy = 0, ut = 0;
    double vx = 0, vy = 0, vt = 0;
    double px = 0, py = 0;
    double lap_u = 0, lap_v = 0;
};

// ---------------------------------------------------------------------------
// Stream-function representation: u = dpsi/dy, v = -dpsi/dx. Divergence
// vanishes identically, which is the hard mass-conservation constraint.
// Requires degree-3 jets (the Laplacians of u and v are third derivatives).
// ---------------------------------------------------------------------------

template <int V, int D>
inline FlowDerivs flow_from_potential(const Jet<V, D>& psi, const Jet<V, D>& p) {
    if constexpr (V != 3 || D < 3) {
        (void)psi;
        (void)p;
        throw DegreeTooLow("flow_from_potential needs degree-3 jets in (x, y, t)");
    } else {
        using T = typename Jet<3, 3>::Traits;
        constexpr int i010 = T::index_of(0, 1, 0), i011 = T::index_of(0, 1, 1);
        constexpr int i110 = T::index_of(1, 1, 0), i020 = T::index_of(0, 2, 0);
        constexpr int i210 = T::index_of(2, 1, 0), i030 = T::index_of(0, 3, 0);
        constexpr int i100 = T::index_of(1, 0, 0), i101 = T::index_of(1, 0, 1);
        constexpr int i200 = T::index_of(2, 0, 0), i300 = T::index_of(3, 0, 0);
        constexpr int i120 = T::index_of(1, 2, 0);
        constexpr int i001 = T::index_of(0, 0, 1);
        FlowDerivs f;
        f.u = psi.c[i010];
        f.ut = psi.c[i011];
        f.ux = psi.c[i110];
        f.uy = 2.0 * psi.c[i020];
        f.lap_u = 2.0 * psi.c[i210] + 6.0 * psi.c[i030];
        f.v = -psi.c[i100];
        f.vt = -psi.c[i101];
        f.vx = -2.0 * psi.c[i200];
        f.vy = -psi.c[i110];
        f.lap_v = -6.0 * psi.c[i300] - 2.0 * psi.c[i120];
        f.p = p.c[0];
        f.px = p.c[i100];
        f.py = p.c[i010];
        (void)i001;
        return f;
    }
}

template <int V, int D>
inline void flow_from_potential_adjoint(const FlowDerivsBar& b, Jet<V, D>& psi_bar,
                                        Jet<V, D>& p_bar) {
    static_assert(V == 3 && D >= 3);
    using T = typename Jet<3, 3>::Traits;
    psi_bar.c[T::index_of(0, 1, 0)] += b.u;
    psi_bar.c[T::index_of(0, 1, 1)] += b.ut;
    psi_bar.c[T::index_of(1, 1, 0)] += b.ux - b.vy;
    psi_bar.c[T::index_of(0, 2, 0)] += 2.0 * b.uy;
    psi_bar.c[T::index_of(2, 1, 0)] += 2.0 * b.lap_u;
    psi_bar.c[T::index_of(0, 3, 0)] += 6.0 * b.lap_u;
    psi_bar.c[T::index_of(1, 0, 0)] -= b.v;
    psi_bar.c[T::index_of(1, 0, 1)] -= b.vt;
    psi_bar.c[T::index_of(2, 0, 0)] -= 2.0 * b.vx;
    psi_bar.c[T::index_of(3, 0, 0)] -= 6.0 * b.lap_v;
    psi_bar.c[T::index_of(1, 2, 0)] -= 2.0 * b.lap_v;
    p_bar.c[0] += b.p;
    p_bar.c[T::index_of(1, 0, 0)] += b.px;
    p_bar.c[T::index_of(0, 1, 0)] += b.py;
}

// Direct (u, v, p) outputs on degree-2 jets in (x, y): the steady problem.
inline FlowDerivs flow_from_direct(const Jet<2, 2>& u, const Jet<2, 2>& v, const Jet<2, 2>& p) {
    using T = Jet<2, 2>::Traits;
    constexpr int ix = T::index_of(1, 0), iy = T::index_of(0, 1);
    constexpr int ixx = T::index_of(2, 0), iyy = T::index_of(0, 2);
    FlowDerivs f;
    f.u = u.c[0];
    f.ux = u.c[ix];
    f.uy = u.c[iy];
    f.lap_u = 2.0 * u.c[ixx] + 2.0 * u.c[iyy];
    f.v = v.c[0];
    f.vx = v.c[ix];
    f.vy = v.c[iy];
    f.lap_v = 2.0 * v.c[ixx] + 2.0 * v.c[iyy];
    f.p = p.c[0];
    f.px = p.c[ix];
    f.py = p.c[iy];
    return f;
}

inline void flow_from_direct_adjoint(const FlowDerivsBar& b, Jet<2, 2>& u_bar, Jet<2, 2>& v_bar,
                                     Jet<2, 2>& p_bar) {
    using T = Jet<2, 2>::Traits;
    constexpr int ix = T::index_of(1, 0), iy = T::index_of(0, 1);
    constexpr int ixx = T::index_of(2, 0), iyy = T::index_of(0, 2);
    u_bar.c[0] += b.u;
    u_bar.c[ix] += b.ux;
    u_bar.c[iy] += b.uy;
    u_bar.c[ixx] += 2.0 * b.lap_u;
    u_bar.c[iyy] += 2.0 * b.lap_u;
    v_bar.c[0] += b.v;
    v_bar.c[ix] += b.vx;
    v_bar.c[iy] += b.vy;
    v_bar.c[ixx] += 2.0 * b.lap_v;
    v_bar.c[iyy] += 2.0 * b.lap_v;
    p_bar.c[0] += b.p;
    p_bar.c[ix] += b.px;
    p_bar.c[iy] += b.py;
}

// ---------------------------------------------------------------------------
// Loss terms. Values are the lambda-weighted mean squares from the total
// loss decomposition; adjoints accumulate (callers zero the bar storage).
// ---------------------------------------------------------------------------

// momentum residual + divergence penalty over the interior batch
inline double loss_ns(std::span<const FlowDerivs> pts, double Re, double lambda,
                      std::span<FlowDerivsBar> bars) {
    const double n = static_cast<double>(pts.size());
    double acc = 0.0;
    for (std::size_t q = 0; q < pts.size(); ++q) {
        const auto& f = pts[q];
        const double rx = f.ut + f.u * f.ux + f.v * f.uy - f.lap_u / Re + f.px;
        const double ry = f.vt + f.u * f.vx + f.v * f.vy - f.lap_v / Re + f.py;
        const double dv = f.div();
        acc += rx * rx + ry * ry + dv * dv;
        if (!bars.empty()) {
            auto& b = bars[q];
            const double w = 2.0 * lambda / n;
            b.ut += w * rx;
            b.u += w * (rx * f.ux + ry * f.vx);
            b.ux += w * (rx * f.u + dv);
            b.uy += w * rx * f.v;
            b.lap_u += -w * rx / Re;
            b.px += w * rx;
            b.vt += w * ry;
            b.v += w * (rx * f.uy + ry * f.vy);
            b.vx += w * ry * f.u;
            b.vy += w * (ry * f.v + dv);
            b.lap_v += -w * ry / Re;
            b.py += w * ry;
        }
    }
    return lambda * acc / n;
}

// no-slip penalty on wall points
inline double loss_bc(std::span<const double> u, std::span<const double> v, double lambda,
                      std::span<double> ubar, std::span<double> vbar) {
    const double n = static_cast<double>(u.size());
    double acc = 0.0;
    for (std::size_t q = 0; q < u.size(); ++q) {
        acc += u[q] * u[q] + v[q] * v[q];
        if (!ubar.empty()) {
            ubar[q] += 2.0 * lambda / n * u[q];
            vbar[q] += 2.0 * lambda / n * v[q];
        }
    }
    return lambda * acc / n;
}

// velocity data misfit
inline double loss_udata(std::span<const double> u, std::span<const double> v,
                         std::span<const double> um, std::span<const double> vm, double lambda,
                         std::span<double> ubar, std::span<double> vbar) {
    const double n = static_cast<double>(u.size());
    double acc = 0.0;
    for (std::size_t q = 0; q < u.size(); ++q) {
        const double du = u[q] - um[q], dv = v[q] - vm[q];
        acc += du * du + dv * dv;
        if (!ubar.empty()) {
            ubar[q] += 2.0 * lambda / n * du;
            vbar[q] += 2.0 * lambda / n * dv;
        }
    }
    return lambda * acc / n;
}

// Network pressure evaluations on the outlet quadrature nodes at the
// measurement times, shared by the Windkessel pressure residual, the
// mean-pressure anchor and the flat-pressure penalty.
struct OutletPointBatch {
    int K = 0, M = 0, m = 0;
    std::vector<double> times;             // M (nondimensional)
    std::vector<double> weights;           // K*m quadrature weights
    std::vector<double> lengths;           // K
    std::vector<double> p, px, py;         // K*M*m
    std::vector<double> bar_p, bar_px, bar_py;
    std::vector<double> Q;                 // K*M, frozen per epoch
    std::vector<double> pi;                // K*M (transient; zero in steady)
    std::vector<double> bar_pi;
    std::vector<int> active;               // time subset per step; empty = all

    int at(int k, int t, int q) const { return (k * M + t) * m + q; }
    int kt(int k, int t) const { return k * M + t; }
    int n_active() const { return active.empty() ? M : static_cast<int>(active.size()); }
    int time_index(int slot) const { return active.empty() ? slot : active[slot]; }
    void zero_bars() {
        bar_p.assign(p.size(), 0.0);
        bar_px.assign(px.size(), 0.0);
        bar_py.assign(py.size(), 0.0);
        bar_pi.assign(pi.size(), 0.0);
    }
};

// Windkessel ODE residual sampled in time (transient only).
struct OdeBatch {
    int K = 0, n = 0;
    std::vector<double> pi, pidot, Q; // K*n
    std::vector<double> bar_pi, bar_pidot;

    int at(int k, int t) const { return k * n + t; }
    void zero_bars() {
        bar_pi.assign(pi.size(), 0.0);
        bar_pidot.assign(pidot.size(), 0.0);
    }
};

// || p_k - Rp_k Q_k - pi_k ||^2 on the outlet nodes. `rp` holds the
// exponentiated (nondimensional) proximal resistances; grad_log_rp receives
// d/d log Rp. In steady mode pass pi = 0 and rp = Rt with grad_log_rt.
inline double loss_wk_pressure(OutletPointBatch& b, std::span<const double> rp, double lambda,
                               std::span<double> grad_log_rp, bool with_bars) {
    double total = 0.0;
    const double n = static_cast<double>(b.n_active() * b.m);
    for (int k = 0; k < b.K; ++k) {
        double acc = 0.0;
        for (int slot = 0; slot < b.n_active(); ++slot) {
            const int t = b.time_index(slot);
            const double rpq = rp[k] * b.Q[b.kt(k, t)];
            const double pik = b.pi.empty() ? 0.0 : b.pi[b.kt(k, t)];
            for (int q = 0; q < b.m; ++q) {
                const double r = b.p[b.at(k, t, q)] - rpq - pik;
                acc += r * r;
                if (with_bars) {
                    const double w = 2.0 * lambda / n;
                    b.bar_p[b.at(k, t, q)] += w * r;
                    if (!b.bar_pi.empty()) b.bar_pi[b.kt(k, t)] -= w * r;
                    if (!grad_log_rp.empty()) grad_log_rp[k] -= w * r * rpq;
                }
            }
        }
        total += acc / n;
    }
    return lambda * total;
}

// || C_k dpi/dt + pi_k / Rd_k - Q_k ||^2 with the compliance tied to the
// fitted decay time: C_k = tau / Rd_k.
inline double loss_wk_ode(OdeBatch& b, std::span<const double> rd, double tau, double lambda,
                          std::span<double> grad_log_rd, bool with_bars) {
    double total = 0.0;
    const double n = static_cast<double>(b.n);
    for (int k = 0; k < b.K; ++k) {
        double acc = 0.0;
        for (int t = 0; t < b.n; ++t) {
            const int q = b.at(k, t);
            const double s = (tau * b.pidot[q] + b.pi[q]) / rd[k] - b.Q[q];
            acc += s * s;
            if (with_bars) {
                const double w = 2.0 * lambda / n;
                b.bar_pidot[q] += w * s * tau / rd[k];
                b.bar_pi[q] += w * s / rd[k];
                if (!grad_log_rd.empty()) grad_log_rd[k] -= w * s * (s + b.Q[q]);
            }
        }
        total += acc / n;
    }
    return lambda * total;
}

// mean-pressure anchor: pbar(t) = sum_k (1/len_k) integral of p over outlet k
inline double loss_pdata(OutletPointBatch& b, std::span<const double> pbar_meas, double lambda,
                         bool with_bars) {
    double acc = 0.0;
    const double n = static_cast<double>(b.n_active());
    for (int slot = 0; slot < b.n_active(); ++slot) {
        const int t = b.time_index(slot);
        double pred = 0.0;
        for (int k = 0; k < b.K; ++k)
            for (int q = 0; q < b.m; ++q)
                pred += b.weights[k * b.m + q] * b.p[b.at(k, t, q)] / b.lengths[k];
        const double r = pred - pbar_meas[t];
        acc += r * r;
        if (with_bars)
            for (int k = 0; k < b.K; ++k)
                for (int q = 0; q < b.m; ++q)
                    b.bar_p[b.at(k, t, q)] += 2.0 * lambda / n * r * b.weights[k * b.m + q] / b.lengths[k];
    }
    return lambda * acc / n;
}

// flat-pressure penalty at the outlets
inline double loss_gradp(OutletPointBatch& b, double lambda, bool with_bars) {
    double total = 0.0;
    const double n = static_cast<double>(b.n_active() * b.m);
    for (int k = 0; k < b.K; ++k) {
        double acc = 0.0;
        for (int slot = 0; slot < b.n_active(); ++slot) {
            const int t = b.time_index(slot);
            for (int q = 0; q < b.m; ++q) {
                const int id = b.at(k, t, q);
                acc += b.px[id] * b.px[id] + b.py[id] * b.py[id];
                if (with_bars) {
                    b.bar_px[id] += 2.0 * lambda / n * b.px[id];
                    b.bar_py[id] += 2.0 * lambda / n * b.py[id];
                }
            }
        }
        total += acc / n;
    }
    return lambda * total;
}

// ---------------------------------------------------------------------------
// Loss weights and the automatic balancing rule
// ---------------------------------------------------------------------------

enum class TermId { ns = 0, wk = 1, bc = 2, data = 3, gradp = 4 };

struct LossWeights {
    double ns = 1.0, wk = 1.0, bc = 1.0, data = 1.0, gradp = 1.0;
    bool automatic = true;
    double alpha = 0.1;
    int update_period = 10; // epochs

    double& of(TermId t) {
        switch (t) {
            case TermId::ns: return ns;
            case TermId::wk: return wk;
            case TermId::bc: return bc;
            case TermId::data: return data;
            default: return gradp;
        }
    }
};

inline double l1_norm(std::span<const double> g) {
    double s = 0.0;
    for (double x : g) s += std::abs(x);
    return s;
}

inline double mean_abs(std::span<const double> g) {
    if (g.empty()) return 0.0;
    return l1_norm(g) / static_cast<double>(g.size());
}

// lambda_new = (1 - alpha) lambda_old + alpha * ||grad L_phys||_1 / mean|grad L_i|.
// The physics weight stays 1 in automatic mode. Terms with vanishing
// gradient keep their previous weight.
inline LossWeights update_weights_auto(const LossWeights& w, std::span<const double> grad_phys,
                                       std::span<const double> grad_wk,
                                       std::span<const double> grad_bc,
                                       std::span<const double> grad_data,
                                       std::span<const double> grad_gradp) {
    LossWeights out = w;
    out.ns = 1.0;
    const double phys = l1_norm(grad_phys);
    auto upd = [&](double old, std::span<const double> g) {
        const double denom = mean_abs(g);
        if (denom == 0.0) return old;
        return (1.0 - w.alpha) * old + w.alpha * phys / denom;
    };
    out.wk = upd(w.wk, grad_wk);
    out.bc = upd(w.bc, grad_bc);
    out.data = upd(w.data, grad_data);
    out.gradp = upd(w.gradp, grad_gradp);
    return out;
}

} // namespace hemopinn::pinn
