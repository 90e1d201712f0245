#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "hemopinn/errors.hpp"
#include "hemopinn/geometry.hpp"
#include "hemopinn/spline.hpp"
#include "hemopinn/windkessel.hpp"

namespace hemopinn::refsolver {

using geom::Axis;
using geom::Cell;
using geom::DomainSpec;
using geom::Face;
using geom::GridMask;

struct SolverConfig {
    double rho = 1.06;   // g/cm^3
    double mu = 0.035;   // P
    double dt = 1e-3;    // s
    double T = 0.66;     // s
    double gamma = 1e5;  // inlet penalization, g cm^-2 s^-1
    int save_every = 10;
    double beta_backflow = 1.0;       // 1 = full suppression of inward advective flux
    double poisson_rtol = 1e-10;
    int poisson_maxiter = 50000;
    double div_tol_factor = 1e-9;     // divergence target in units of U/L
    double steady_tol_factor = 1e-8;  // steady stop: max update < factor * U
};

// One saved time level. Velocities live on staggered faces, pressure at cell
// centers; fields are zero on solid cells/faces.
struct FlowSnapshot {
    double t = 0.0;
    std::vector<double> u; // (nx+1) * ny
    std::vector<double> v; // nx * (ny+1)
    std::vector<double> p; // nx * ny
    std::vector<double> Q; // per outlet, outward flow (cm^2/s per unit depth)
    std::vector<double> P; // per outlet pressure (dyn/cm^2)
    double q_in = 0.0;     // inward inlet flow
};

// Total inlet flow over one cycle, stored as samples with periodic
// continuation and evaluated through a cubic interpolant.
struct InflowWaveform {
    std::vector<double> t, q;
    double period = 0.0;

    double flow(double time) const {
        double tau = time - period * std::floor(time / period);
        return spline_(tau);
    }

    void finalize() { spline_ = CubicSpline(t, q); }

    static InflowWaveform pulse(double q_sys, double q_dia, double t_sys, double period,
                                double sample_dt = 1e-3) {
        InflowWaveform w;
        w.period = period;
        const int n = static_cast<int>(std::round(period / sample_dt));
        constexpr double pi = 3.14159265358979323846;
        for (int i = 0; i <= n; ++i) {
            const double ti = i * period / n;
            w.t.push_back(ti);
            w.q.push_back(ti < t_sys ? q_sys * std::sin(pi * ti / t_sys) : q_dia);
        }
        w.finalize();
        return w;
    }

    static InflowWaveform constant(double q, double period = 1.0) {
        InflowWaveform w;
        w.period = period;
        w.t = {0.0, 0.5 * period, period};
        w.q = {q, q, q};
        w.finalize();
        return w;
    }

private:
    CubicSpline spline_;
};

// Parabolic inflow profile along the inlet segment, scaled so its line
// integral equals the waveform flow at time t. `y` is the running coordinate
// on the segment. Returns the inward speed (>= 0 for positive flow).
inline double inlet_profile(double y, double t, const InflowWaveform& w, const DomainSpec& spec) {
    const double H = spec.inlet.length();
    const double s = (y - spec.inlet.lo) / H;
    return 6.0 * w.flow(t) / H * s * (1.0 - s);
}

// ---------------------------------------------------------------------------
// Staggered-grid projection solver with implicit Windkessel coupling.
//
// The outlet pressure enters the pressure Poisson problem as a Dirichlet
// value on the outlet cell faces. Because the Windkessel relation at the new
// time level is affine in the outlet flow, P_k = a_k + b_k Q_k, and Q_k is
// affine in the pressure unknowns, the coupled problem stays linear and
// symmetric positive definite: each outlet adds a rank-one term to the
// Poisson operator. This keeps the 0D coupling unconditionally stable.
// ---------------------------------------------------------------------------
class Solver {
public:
    Solver(const DomainSpec& spec, const GridMask& mask, const SolverConfig& cfg)
        : spec_(spec), mask_(mask), cfg_(cfg) {
        const int nu = (mask_.nx + 1) * mask_.ny;
        const int nv = mask_.nx * (mask_.ny + 1);
        const int nc = mask_.nx * mask_.ny;
        u_.assign(nu, 0.0);
        v_.assign(nv, 0.0);
        us_.assign(nu, 0.0);
        vs_.assign(nv, 0.0);
        p_.assign(nc, 0.0);
        index_fluid_cells();
        K_ = static_cast<int>(spec_.outlets.size());
        outlet_P_.assign(K_, 0.0);
        outlet_Q_.assign(K_, 0.0);
    }

    // transient Windkessel setup
    void set_windkessel(const std::vector<wk::Params>& params, double pi0) {
        wk_params_ = params;
        wk_steady_.clear();
        states_.assign(K_, wk::State{pi0, 0.0});
        for (int k = 0; k < K_; ++k) outlet_P_[k] = pi0; // Q = 0 initially
    }

    void set_windkessel_steady(const std::vector<wk::SteadyParams>& params) {
        wk_steady_ = params;
        wk_params_.clear();
        states_.clear();
        std::fill(outlet_P_.begin(), outlet_P_.end(), 0.0);
    }

    void set_waveform(const InflowWaveform& w) { wave_ = w; }

    double time() const { return t_; }
    const std::vector<double>& u() const { return u_; }
    const std::vector<double>& v() const { return v_; }
    const std::vector<double>& p() const { return p_; }
    const std::vector<double>& outlet_pressure() const { return outlet_P_; }
    const std::vector<double>& outlet_flow() const { return outlet_Q_; }
    const std::vector<wk::State>& states() const { return states_; }

    double advective_cfl() const {
        double m = 0.0;
        for (double x : u_) m = std::max(m, std::abs(x));
        for (double x : v_) m = std::max(m, std::abs(x));
        return m * cfg_.dt / mask_.h;
    }

    double stability_dt() const {
        const double nu = cfg_.mu / cfg_.rho;
        const double h = mask_.h;
        double umax = 1e-12;
        for (double x : u_) umax = std::max(umax, std::abs(x));
        for (double x : v_) umax = std::max(umax, std::abs(x));
        return std::min(h * h / (4.0 * nu), h / umax);
    }

    // advances one time step; returns the max velocity update (steady marching)
    double step() {
        if (advective_cfl() > 1.0)
            throw CFLViolation("advective CFL exceeds 1 at t = " + std::to_string(t_));
        predictor();
        project();
        const double delta = correct_and_measure();
        advance_windkessel();
        t_ += cfg_.dt;
        return delta;
    }

    FlowSnapshot snapshot() const {
        FlowSnapshot s;
        s.t = t_;
        s.u = u_;
        s.v = v_;
        s.p = p_;
        s.Q = outlet_Q_;
        s.P = outlet_P_;
        s.q_in = inlet_flow();
        return s;
    }

    double inlet_flow() const {
        double q = 0.0;
        for (int j = 0; j < mask_.ny; ++j)
            for (int i = 0; i <= mask_.nx; ++i)
                if (mask_.uface[mask_.ui(i, j)] == Face::inlet)
                    q += -inlet_sign_x() * u_[mask_.ui(i, j)] * mask_.h;
        for (int j = 0; j <= mask_.ny; ++j)
            for (int i = 0; i < mask_.nx; ++i)
                if (mask_.vface[mask_.vi(i, j)] == Face::inlet)
                    q += -inlet_sign_y() * v_[mask_.vi(i, j)] * mask_.h;
        return q;
    }

    double max_divergence() const {
        double m = 0.0;
        for (const auto& c : cells_) m = std::max(m, std::abs(divergence(c.i, c.j, u_, v_)));
        return m;
    }

    // Optional external inlet override (used by the postprocess re-simulation):
    // inward speed as a function of (arc coordinate, time).
    std::function<double(double, double)> inlet_override;

private:
    struct CellRef {
        int i, j;
        int lin;                 // linear cell index
        int nb[4];               // compressed neighbor ids across interior faces (-1 otherwise)
        std::uint8_t n_outlet;   // number of outlet faces on this cell
        std::int16_t outlet_k;   // outlet id (faces of one cell share k)
    };

    void index_fluid_cells() {
        cell_id_.assign(mask_.cell.size(), -1);
        for (int j = 0; j < mask_.ny; ++j)
            for (int i = 0; i < mask_.nx; ++i)
                if (mask_.is_fluid(i, j)) {
                    cell_id_[mask_.ci(i, j)] = static_cast<int>(cells_.size());
                    cells_.push_back({i, j, mask_.ci(i, j), {-1, -1, -1, -1}, 0, 0});
                }
        for (auto& c : cells_) {
            const int i = c.i, j = c.j;
            const Face fw = mask_.uface[mask_.ui(i, j)], fe = mask_.uface[mask_.ui(i + 1, j)];
            const Face fs = mask_.vface[mask_.vi(i, j)], fn = mask_.vface[mask_.vi(i, j + 1)];
            if (fw == Face::interior) c.nb[0] = cell_id_[mask_.ci(i - 1, j)];
            if (fe == Face::interior) c.nb[1] = cell_id_[mask_.ci(i + 1, j)];
            if (fs == Face::interior) c.nb[2] = cell_id_[mask_.ci(i, j - 1)];
            if (fn == Face::interior) c.nb[3] = cell_id_[mask_.ci(i, j + 1)];
            auto note_outlet = [&](Face f, std::int16_t k) {
                if (f == Face::outlet) { c.n_outlet++; c.outlet_k = k; }
            };
            note_outlet(fw, mask_.uface_outlet[mask_.ui(i, j)]);
            note_outlet(fe, mask_.uface_outlet[mask_.ui(i + 1, j)]);
            note_outlet(fs, mask_.vface_outlet[mask_.vi(i, j)]);
            note_outlet(fn, mask_.vface_outlet[mask_.vi(i, j + 1)]);
        }
        xsol_.assign(cells_.size(), 0.0);
        rhs_.assign(cells_.size(), 0.0);
        rvec_.assign(cells_.size(), 0.0);
        zvec_.assign(cells_.size(), 0.0);
        dvec_.assign(cells_.size(), 0.0);
        qvec_.assign(cells_.size(), 0.0);
    }

    int inlet_sign_x() const { return spec_.inlet.axis == Axis::vertical ? spec_.inlet.normal_sign : 0; }
    int inlet_sign_y() const { return spec_.inlet.axis == Axis::horizontal ? spec_.inlet.normal_sign : 0; }

    double divergence(int i, int j, const std::vector<double>& uu, const std::vector<double>& vv) const {
        return (uu[mask_.ui(i + 1, j)] - uu[mask_.ui(i, j)] + vv[mask_.vi(i, j + 1)] - vv[mask_.vi(i, j)]) / mask_.h;
    }

    // --- predictor -----------------------------------------------------

    // neighbor fetch for advection: walls read as zero, out-of-domain reads
    // fall back to the centre value (zero gradient through open boundaries)
    double u_adv(int i, int j, double fallback) const {
        if (i < 0 || i > mask_.nx || j < 0 || j >= mask_.ny) return fallback;
        const Face f = mask_.uface[mask_.ui(i, j)];
        if (f == Face::inactive) return fallback;
        if (f == Face::wall) return 0.0;
        return u_[mask_.ui(i, j)];
    }
    double v_adv(int i, int j, double fallback) const {
        if (i < 0 || i >= mask_.nx || j < 0 || j > mask_.ny) return fallback;
        const Face f = mask_.vface[mask_.vi(i, j)];
        if (f == Face::inactive) return fallback;
        if (f == Face::wall) return 0.0;
        return v_[mask_.vi(i, j)];
    }

    // neighbor fetch for diffusion in the tangential direction: mirror ghost
    // across walls, zero-gradient across outlets
    double u_visc_tangential(int i, int j, int jc, double centre) const {
        if (j >= 0 && j < mask_.ny && mask_.uface[mask_.ui(i, j)] != Face::inactive) {
            const Face f = mask_.uface[mask_.ui(i, j)];
            return f == Face::wall ? 0.0 : u_[mask_.ui(i, j)];
        }
        // boundary above/below: outlet -> zero gradient, wall/inlet -> mirror
        const int jb = (j > jc) ? jc + 1 : jc; // v-face row between jc and j
        bool outlet = false;
        for (int ii : {i - 1, i}) {
            if (ii < 0 || ii >= mask_.nx) continue;
            if (mask_.vface[mask_.vi(ii, jb)] == Face::outlet) outlet = true;
        }
        return outlet ? centre : -centre;
    }
    double v_visc_tangential(int i, int j, int ic, double centre) const {
        if (i >= 0 && i < mask_.nx && mask_.vface[mask_.vi(i, j)] != Face::inactive) {
            const Face f = mask_.vface[mask_.vi(i, j)];
            return f == Face::wall ? 0.0 : v_[mask_.vi(i, j)];
        }
        const int ib = (i > ic) ? ic + 1 : ic;
        bool outlet = false;
        for (int jj : {j - 1, j}) {
            if (jj < 0 || jj >= mask_.ny) continue;
            if (mask_.uface[mask_.ui(ib, jj)] == Face::outlet) outlet = true;
        }
        return outlet ? centre : -centre;
    }
    // normal-direction neighbor: faces of the same family along the face axis
    double u_visc_normal(int i, int j, double centre) const {
        if (i < 0 || i > mask_.nx) return centre;
        const Face f = mask_.uface[mask_.ui(i, j)];
        if (f == Face::inactive) return centre; // beyond an open end
        if (f == Face::wall) return 0.0;
        return u_[mask_.ui(i, j)];
    }
    double v_visc_normal(int i, int j, double centre) const {
        if (j < 0 || j > mask_.ny) return centre;
        const Face f = mask_.vface[mask_.vi(i, j)];
        if (f == Face::inactive) return centre;
        if (f == Face::wall) return 0.0;
        return v_[mask_.vi(i, j)];
    }

    void predictor() {
        const double h = mask_.h;
        const double nu = cfg_.mu / cfg_.rho;
        const double t_new = t_ + cfg_.dt;
        const double kappa = cfg_.gamma / (cfg_.rho * h);

        for (int j = 0; j < mask_.ny; ++j)
            for (int i = 0; i <= mask_.nx; ++i) {
                const int id = mask_.ui(i, j);
                const Face f = mask_.uface[id];
                if (f == Face::inactive || f == Face::wall) { us_[id] = 0.0; continue; }
                const double uc = u_[id];
                // advecting v averaged from the four surrounding v-faces
                double vs = 0.0;
                int nv = 0;
                for (int ii : {i - 1, i})
                    for (int jj : {j, j + 1}) {
                        if (ii < 0 || ii >= mask_.nx) continue;
                        vs += v_adv(ii, jj, 0.0);
                        ++nv;
                    }
                const double va = nv ? vs / nv : 0.0;

                const double uW = u_adv(i - 1, j, uc), uE = u_adv(i + 1, j, uc);
                const double uS = u_visc_tangential(i, j - 1, j, uc), uN = u_visc_tangential(i, j + 1, j, uc);
                double adv = uc * (uc > 0 ? (uc - uW) : (uE - uc)) / h +
                             va * (va > 0 ? (uc - u_adv(i, j - 1, uc)) : (u_adv(i, j + 1, uc) - uc)) / h;
                if (f == Face::outlet) {
                    const int s = (spec_.outlets[mask_.uface_outlet[id] - 1].normal_sign);
                    if (uc * s < 0.0) adv *= (1.0 - cfg_.beta_backflow);
                }
                const double lap = (u_visc_normal(i - 1, j, uc) + u_visc_normal(i + 1, j, uc) + uS + uN - 4.0 * uc) / (h * h);
                double star = uc + cfg_.dt * (-adv + nu * lap);
                if (f == Face::inlet) {
                    double target = -inlet_sign_x() * inlet_profile(mask_.cy(j), t_new, wave_, spec_);
                    if (inlet_override) target = -inlet_sign_x() * inlet_override(mask_.cy(j), t_new);
                    star = (star + cfg_.dt * kappa * target) / (1.0 + cfg_.dt * kappa);
                }
                us_[id] = star;
            }

        for (int j = 0; j <= mask_.ny; ++j)
            for (int i = 0; i < mask_.nx; ++i) {
                const int id = mask_.vi(i, j);
                const Face f = mask_.vface[id];
                if (f == Face::inactive || f == Face::wall) { vs_[id] = 0.0; continue; }
                const double vc = v_[id];
                double usum = 0.0;
                int nu_cnt = 0;
                for (int ii : {i, i + 1})
                    for (int jj : {j - 1, j}) {
                        if (jj < 0 || jj >= mask_.ny) continue;
                        usum += u_adv(ii, jj, 0.0);
                        ++nu_cnt;
                    }
                const double ua = nu_cnt ? usum / nu_cnt : 0.0;

                const double vS = v_adv(i, j - 1, vc), vN = v_adv(i, j + 1, vc);
                const double vW = v_visc_tangential(i - 1, j, i, vc), vE = v_visc_tangential(i + 1, j, i, vc);
                double adv = ua * (ua > 0 ? (vc - v_adv(i - 1, j, vc)) : (v_adv(i + 1, j, vc) - vc)) / h +
                             vc * (vc > 0 ? (vc - vS) : (vN - vc)) / h;
                if (f == Face::outlet) {
                    const int s = (spec_.outlets[mask_.vface_outlet[id] - 1].normal_sign);
                    if (vc * s < 0.0) adv *= (1.0 - cfg_.beta_backflow);
                }
                const double lap = (vW + vE + v_visc_normal(i, j - 1, vc) + v_visc_normal(i, j + 1, vc) - 4.0 * vc) / (h * h);
                double star = vc + cfg_.dt * (-adv + nu * lap);
                if (f == Face::inlet) {
                    double target = -inlet_sign_y() * inlet_profile(mask_.cx(i), t_new, wave_, spec_);
                    if (inlet_override) target = -inlet_sign_y() * inlet_override(mask_.cx(i), t_new);
                    star = (star + cfg_.dt * kappa * target) / (1.0 + cfg_.dt * kappa);
                }
                vs_[id] = star;
            }
    }

    // --- Windkessel affine coefficients at the new time level ------------

    void wk_affine(int k, double& a, double& b) const {
        if (!wk_steady_.empty()) {
            a = 0.0;
            b = wk_steady_[k].Rt;
            return;
        }
        const auto& p = wk_params_[k];
        const double beta = 1.0 / (1.0 + cfg_.dt / (p.Rd * p.C));
        a = beta * states_[k].pi;
        b = p.Rp + beta * cfg_.dt / p.C;
    }

    // outward predictor flux through outlet k
    double outlet_flux_star(int k) const {
        double q = 0.0;
        for (int j = 0; j < mask_.ny; ++j)
            for (int i = 0; i <= mask_.nx; ++i) {
                const int id = mask_.ui(i, j);
                if (mask_.uface[id] == Face::outlet && mask_.uface_outlet[id] == k + 1)
                    q += spec_.outlets[k].normal_sign * us_[id] * mask_.h;
            }
        for (int j = 0; j <= mask_.ny; ++j)
            for (int i = 0; i < mask_.nx; ++i) {
                const int id = mask_.vi(i, j);
                if (mask_.vface[id] == Face::outlet && mask_.vface_outlet[id] == k + 1)
                    q += spec_.outlets[k].normal_sign * vs_[id] * mask_.h;
            }
        return q;
    }

    void apply_operator(const std::vector<double>& x, std::vector<double>& y) const {
        const double ih2 = 1.0 / (mask_.h * mask_.h);
        std::vector<double> S(K_, 0.0);
        for (std::size_t c = 0; c < cells_.size(); ++c)
            if (cells_[c].n_outlet) S[cells_[c].outlet_k - 1] += cells_[c].n_outlet * x[c];
        for (std::size_t c = 0; c < cells_.size(); ++c) {
            const auto& cr = cells_[c];
            double acc = 0.0;
            int links = 0;
            for (int q = 0; q < 4; ++q)
                if (cr.nb[q] >= 0) { acc -= x[cr.nb[q]]; ++links; }
            acc += links * x[c];
            if (cr.n_outlet) {
                const int k = cr.outlet_k - 1;
                acc += 2.0 * cr.n_outlet * (x[c] - nu_k_[k] * S[k]);
            }
            y[c] = acc * ih2;
        }
    }

    void project() {
        const double ih2 = 1.0 / (mask_.h * mask_.h);
        mu_k_.assign(K_, 0.0);
        nu_k_.assign(K_, 0.0);
        std::vector<int> nfaces(K_, 0);
        for (const auto& c : cells_)
            if (c.n_outlet) nfaces[c.outlet_k - 1] += c.n_outlet;
        for (int k = 0; k < K_; ++k) {
            double a, b;
            wk_affine(k, a, b);
            const double g = 2.0 * b * cfg_.dt / cfg_.rho;
            const double D = 1.0 + g * nfaces[k];
            mu_k_[k] = (a + b * outlet_flux_star(k)) / D;
            nu_k_[k] = g / D;
        }

        double bnorm2 = 0.0;
        for (std::size_t c = 0; c < cells_.size(); ++c) {
            const auto& cr = cells_[c];
            double b = -(cfg_.rho / cfg_.dt) * divergence(cr.i, cr.j, us_, vs_);
            if (cr.n_outlet) b += 2.0 * ih2 * cr.n_outlet * mu_k_[cr.outlet_k - 1];
            rhs_[c] = b;
            bnorm2 += b * b;
        }

        // Jacobi-preconditioned CG, warm-started from the previous pressure
        const double U = spec_.U, L = spec_.L;
        const double rinf_target = cfg_.div_tol_factor * U / L * cfg_.rho / cfg_.dt;
        std::vector<double> diag(cells_.size());
        for (std::size_t c = 0; c < cells_.size(); ++c) {
            const auto& cr = cells_[c];
            int links = 0;
            for (int q = 0; q < 4; ++q) links += (cr.nb[q] >= 0);
            double d = links * ih2;
            if (cr.n_outlet)
                d += 2.0 * ih2 * cr.n_outlet * (1.0 - nu_k_[cr.outlet_k - 1] * cr.n_outlet);
            diag[c] = d > 0.0 ? d : 1.0;
        }

        for (std::size_t c = 0; c < cells_.size(); ++c) xsol_[c] = p_[cells_[c].lin];
        apply_operator(xsol_, rvec_);
        for (std::size_t c = 0; c < cells_.size(); ++c) rvec_[c] = rhs_[c] - rvec_[c];

        auto converged = [&](double rn2) {
            if (rn2 > cfg_.poisson_rtol * cfg_.poisson_rtol * std::max(bnorm2, 1e-300)) return false;
            double rinf = 0.0;
            for (double r : rvec_) rinf = std::max(rinf, std::abs(r));
            return rinf <= rinf_target;
        };

        double rz = 0.0;
        for (std::size_t c = 0; c < cells_.size(); ++c) {
            zvec_[c] = rvec_[c] / diag[c];
            rz += rvec_[c] * zvec_[c];
        }
        dvec_ = zvec_;
        double rn2 = 0.0;
        for (double r : rvec_) rn2 += r * r;

        int it = 0;
        while (!converged(rn2)) {
            if (++it > cfg_.poisson_maxiter)
                throw PoissonDiverged("pressure solve exceeded max iterations at t = " + std::to_string(t_));
            apply_operator(dvec_, qvec_);
            double dq = 0.0;
            for (std::size_t c = 0; c < cells_.size(); ++c) dq += dvec_[c] * qvec_[c];
            const double alpha = rz / dq;
            rn2 = 0.0;
            for (std::size_t c = 0; c < cells_.size(); ++c) {
                xsol_[c] += alpha * dvec_[c];
                rvec_[c] -= alpha * qvec_[c];
                rn2 += rvec_[c] * rvec_[c];
            }
            double rz_new = 0.0;
            for (std::size_t c = 0; c < cells_.size(); ++c) {
                zvec_[c] = rvec_[c] / diag[c];
                rz_new += rvec_[c] * zvec_[c];
            }
            const double beta = rz_new / rz;
            rz = rz_new;
            for (std::size_t c = 0; c < cells_.size(); ++c) dvec_[c] = zvec_[c] + beta * dvec_[c];
        }

        std::fill(p_.begin(), p_.end(), 0.0);
        for (std::size_t c = 0; c < cells_.size(); ++c) p_[cells_[c].lin] = xsol_[c];

        // outlet pressures at the new time level
        std::vector<double> S(K_, 0.0);
        for (const auto& c : cells_)
            if (c.n_outlet) S[c.outlet_k - 1] += c.n_outlet * p_[c.lin];
        for (int k = 0; k < K_; ++k) outlet_P_[k] = mu_k_[k] + nu_k_[k] * S[k];
    }

    double correct_and_measure() {
        const double h = mask_.h;
        const double c0 = cfg_.dt / cfg_.rho;
        double delta = 0.0;

        for (int j = 0; j < mask_.ny; ++j)
            for (int i = 0; i <= mask_.nx; ++i) {
                const int id = mask_.ui(i, j);
                const Face f = mask_.uface[id];
                double unew = us_[id];
                if (f == Face::interior) {
                    unew -= c0 * (p_[mask_.ci(i, j)] - p_[mask_.ci(i - 1, j)]) / h;
                } else if (f == Face::outlet) {
                    const int k = mask_.uface_outlet[id] - 1;
                    const int s = spec_.outlets[k].normal_sign;
                    const double pc = p_[mask_.ci(s > 0 ? i - 1 : i, j)];
                    unew -= c0 * s * 2.0 * (outlet_P_[k] - pc) / h;
                } else if (f == Face::inactive || f == Face::wall) {
                    unew = 0.0;
                }
                delta = std::max(delta, std::abs(unew - u_[id]));
                u_[id] = unew;
            }
        for (int j = 0; j <= mask_.ny; ++j)
            for (int i = 0; i < mask_.nx; ++i) {
                const int id = mask_.vi(i, j);
                const Face f = mask_.vface[id];
                double vnew = vs_[id];
                if (f == Face::interior) {
                    vnew -= c0 * (p_[mask_.ci(i, j)] - p_[mask_.ci(i, j - 1)]) / h;
                } else if (f == Face::outlet) {
                    const int k = mask_.vface_outlet[id] - 1;
                    const int s = spec_.outlets[k].normal_sign;
                    const double pc = p_[mask_.ci(i, s > 0 ? j - 1 : j)];
                    vnew -= c0 * s * 2.0 * (outlet_P_[k] - pc) / h;
                } else if (f == Face::inactive || f == Face::wall) {
                    vnew = 0.0;
                }
                delta = std::max(delta, std::abs(vnew - v_[id]));
                v_[id] = vnew;
            }

        for (int k = 0; k < K_; ++k) {
            double q = 0.0;
            for (int j = 0; j < mask_.ny; ++j)
                for (int i = 0; i <= mask_.nx; ++i) {
                    const int id = mask_.ui(i, j);
                    if (mask_.uface[id] == Face::outlet && mask_.uface_outlet[id] == k + 1)
                        q += spec_.outlets[k].normal_sign * u_[id] * h;
                }
            for (int j = 0; j <= mask_.ny; ++j)
                for (int i = 0; i < mask_.nx; ++i) {
                    const int id = mask_.vi(i, j);
                    if (mask_.vface[id] == Face::outlet && mask_.vface_outlet[id] == k + 1)
                        q += spec_.outlets[k].normal_sign * v_[id] * h;
                }
            outlet_Q_[k] = q;
        }
        return delta;
    }

    void advance_windkessel() {
        if (!wk_steady_.empty()) {
            for (int k = 0; k < K_; ++k)
                outlet_P_[k] = wk::steady_pressure(wk_steady_[k], outlet_Q_[k]);
            return;
        }
        for (int k = 0; k < K_; ++k) {
            auto [s, P] = wk::step_backward_euler(wk_params_[k], states_[k], outlet_Q_[k], cfg_.dt);
            states_[k] = s;
            outlet_P_[k] = P;
        }
    }

    const DomainSpec& spec_;
    const GridMask& mask_;
    SolverConfig cfg_;
    double t_ = 0.0;
    int K_ = 0;

    std::vector<double> u_, v_, us_, vs_, p_;
    std::vector<wk::Params> wk_params_;
    std::vector<wk::SteadyParams> wk_steady_;
    std::vector<wk::State> states_;
    std::vector<double> outlet_P_, outlet_Q_;
    InflowWaveform wave_ = InflowWaveform::constant(0.0);

    std::vector<CellRef> cells_;
    std::vector<int> cell_id_;
    std::vector<double> mu_k_, nu_k_;
    std::vector<double> xsol_, rhs_, rvec_, zvec_, dvec_, qvec_;
};

// Full pulsatile run from rest with pi_k(0) = pi0. Snapshots every
// `save_every` steps, including t = 0. The optional inlet override replaces
// the waveform profile (postprocess re-simulation).
inline std::vector<FlowSnapshot> run_transient(const DomainSpec& spec, const GridMask& mask,
                                               const SolverConfig& cfg, const InflowWaveform& wave,
                                               const std::vector<wk::Params>& params, double pi0,
                                               std::function<double(double, double)> inlet_override = nullptr) {
    Solver s(spec, mask, cfg);
    s.inlet_override = std::move(inlet_override);
    s.set_waveform(wave);
    s.set_windkessel(params, pi0);
    const int nsteps = static_cast<int>(std::round(cfg.T / cfg.dt));
    std::vector<FlowSnapshot> out;
    out.push_back(s.snapshot());
    for (int n = 1; n <= nsteps; ++n) {
        s.step();
        if (n % cfg.save_every == 0) out.push_back(s.snapshot());
    }
    return out;
}

// Pseudo-time march to a steady state with constant inflow and steady
// Windkessel outlets; stops when the max velocity update per step drops
// below steady_tol_factor * U.
inline FlowSnapshot run_steady(const DomainSpec& spec, const GridMask& mask, const SolverConfig& cfg,
                               double q_in, const std::vector<wk::SteadyParams>& params) {
    Solver s(spec, mask, cfg);
    s.set_waveform(InflowWaveform::constant(q_in, std::max(cfg.T, 1.0)));
    s.set_windkessel_steady(params);
    const int max_steps = static_cast<int>(std::round(cfg.T / cfg.dt));
    const double tol = cfg.steady_tol_factor * spec.U;
    for (int n = 1; n <= max_steps; ++n) {
        const double delta = s.step();
        if (n > 10 && delta < tol) return s.snapshot();
    }
    throw NotConverged("run_steady: pseudo-time march did not reach tolerance within T/dt steps");
}

} // namespace hemopinn::refsolver
