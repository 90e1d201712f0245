#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "hemopinn/errors.hpp"
#include "hemopinn/geometry.hpp"
#include "hemopinn/refsolver.hpp"
#include "hemopinn/rng.hpp"
#include "hemopinn/spline.hpp"

namespace hemopinn::measure {

using geom::DomainSpec;
using geom::GridMask;
using geom::Segment;
using refsolver::FlowSnapshot;

// Cell-centred view of one time level: what the snapshot CSV files store and
// what the acquisition samples from. Face velocities are averaged to cell
// centres; solid cells read as zero.
struct CellField {
    double t = 0.0;
    std::vector<double> u, v, p; // nx * ny
    std::vector<double> Q, P;    // per outlet
    double q_in = 0.0;

    static CellField from_staggered(const GridMask& m, const FlowSnapshot& s) {
        CellField f;
        f.t = s.t;
        f.Q = s.Q;
        f.P = s.P;
        f.q_in = s.q_in;
        f.u.assign(m.cell.size(), 0.0);
        f.v.assign(m.cell.size(), 0.0);
        f.p.assign(m.cell.size(), 0.0);
        for (int j = 0; j < m.ny; ++j)
            for (int i = 0; i < m.nx; ++i) {
                if (!m.is_fluid(i, j)) continue;
                f.u[m.ci(i, j)] = 0.5 * (s.u[m.ui(i, j)] + s.u[m.ui(i + 1, j)]);
                f.v[m.ci(i, j)] = 0.5 * (s.v[m.vi(i, j)] + s.v[m.vi(i, j + 1)]);
                f.p[m.ci(i, j)] = s.p[m.ci(i, j)];
            }
        return f;
    }
};

inline std::vector<CellField> to_cell_fields(const GridMask& m,
                                             const std::vector<FlowSnapshot>& snaps) {
    std::vector<CellField> out;
    out.reserve(snaps.size());
    for (const auto& s : snaps) out.push_back(CellField::from_staggered(m, s));
    return out;
}

// Cross-channel acquisition lines (the 2D analog of axial imaging planes),
// pixel spacing and frame times.
struct SlicePlan {
    std::vector<Segment> lines;
    double spacing = 0.1; // cm
    std::vector<double> times;

    // three lines across the parent channel, one across each branch
    static SlicePlan desk_default(const DomainSpec& spec, double spacing, double cadence, double T);
};

struct MeasurementSet {
    std::vector<double> x, y, t;
    std::vector<double> u_meas, v_meas;
    double venc = 0.0;
    double snr_db = 0.0;
    double m0 = 1.0;
    double phi0 = 0.5;
    std::uint64_t seed = 0;
    std::vector<double> pbar_t, pbar; // mean-pressure anchor curve (dyn/cm^2)
};

// ---------------------------------------------------------------------------
// Magnetization model
// ---------------------------------------------------------------------------

inline constexpr double kPi = 3.14159265358979323846;

// Velocity-encoded and reference magnetizations.
inline std::pair<std::complex<double>, std::complex<double>> encode(double u, double venc,
                                                                    double m0, double phi0) {
    if (!(venc > 0.0)) throw Error("encode: venc must be positive");
    if (!(m0 > 0.0)) throw Error("encode: M0 must be positive");
    const std::complex<double> mu = m0 * std::exp(std::complex<double>(0.0, phi0 + kPi * u / venc));
    const std::complex<double> mref = m0 * std::exp(std::complex<double>(0.0, phi0));
    return {mu, mref};
}

// Adds independent zero-mean Gaussian noise of std sigma = M0 * 10^(-SNR/20)
// to both components. snr_db = +inf leaves the magnetization untouched.
inline std::complex<double> add_noise(std::complex<double> m, double snr_db, double m0,
                                      std::uint64_t seed, std::uint64_t counter) {
    if (std::isinf(snr_db)) return m;
    const double sigma = m0 * std::pow(10.0, -snr_db / 20.0);
    const double nr = rng::normal(seed, rng::kStreamMeasureNoise, 2 * counter);
    const double ni = rng::normal(seed, rng::kStreamMeasureNoise, 2 * counter + 1);
    return m + std::complex<double>(sigma * nr, sigma * ni);
}

inline double reconstruct(std::complex<double> mu, std::complex<double> mref, double venc) {
    if (std::abs(mref) == 0.0) throw ZeroReference("reconstruct: |Mref| = 0");
    return venc * std::arg(mu / mref) / kPi;
}

// venc = 120% of the maximum velocity magnitude over the run.
inline double choose_venc(const std::vector<CellField>& fields) {
    if (fields.empty()) throw Error("choose_venc: no snapshots");
    double m = 0.0;
    for (const auto& f : fields) {
        for (double x : f.u) m = std::max(m, std::abs(x));
        for (double x : f.v) m = std::max(m, std::abs(x));
    }
    if (!(m > 0.0)) throw DegenerateField("choose_venc: zero velocity field");
    return 1.2 * m;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

// Bilinear interpolation on the cell-centre lattice.
inline double bilinear(const GridMask& mask, const std::vector<double>& f, double x, double y) {
    const double gx = (x - mask.ox) / mask.h - 0.5;
    const double gy = (y - mask.oy) / mask.h - 0.5;
    int i0 = static_cast<int>(std::floor(gx));
    int j0 = static_cast<int>(std::floor(gy));
    i0 = std::clamp(i0, 0, mask.nx - 2);
    j0 = std::clamp(j0, 0, mask.ny - 2);
    const double fx = std::clamp(gx - i0, 0.0, 1.0);
    const double fy = std::clamp(gy - j0, 0.0, 1.0);
    auto at = [&](int i, int j) { return f[mask.ci(i, j)]; };
    return (1 - fx) * (1 - fy) * at(i0, j0) + fx * (1 - fy) * at(i0 + 1, j0) +
           (1 - fx) * fy * at(i0, j0 + 1) + fx * fy * at(i0 + 1, j0 + 1);
}

struct CleanSample {
    double x, y, t;
    double u, v;
};

// Interpolates the reference solution onto the slice pixels at the plan
// times (nearest snapshot in time, bilinear in space).
inline std::vector<CleanSample> interpolate_to_slices(const std::vector<CellField>& fields,
                                                      const GridMask& mask, const DomainSpec& spec,
                                                      const SlicePlan& plan) {
    std::vector<CleanSample> out;
    std::vector<double> pix_x, pix_y;
    for (const auto& line : plan.lines) {
        const int n = static_cast<int>(std::floor(line.length() / plan.spacing + 1e-9));
        for (int q = 0; q < n; ++q) {
            double xx, yy;
            line.at((q + 0.5) * plan.spacing, xx, yy);
            if (!spec.contains(xx, yy))
                throw PointOutsideDomain("slice pixel outside the fluid domain");
            pix_x.push_back(xx);
            pix_y.push_back(yy);
        }
    }
    for (double tm : plan.times) {
        std::size_t best = 0;
        double bd = 1e300;
        for (std::size_t s = 0; s < fields.size(); ++s) {
            const double d = std::abs(fields[s].t - tm);
            if (d < bd) { bd = d; best = s; }
        }
        for (std::size_t q = 0; q < pix_x.size(); ++q) {
            CleanSample cs{pix_x[q], pix_y[q], tm, 0.0, 0.0};
            cs.u = bilinear(mask, fields[best].u, cs.x, cs.y);
            cs.v = bilinear(mask, fields[best].v, cs.x, cs.y);
            out.push_back(cs);
        }
    }
    return out;
}

// Sum over outlets of the outlet-averaged pressure per snapshot, resampled to
// the requested times by cubic interpolation. The boundary pressure is the
// linear extrapolation of the two nearest cell rows to the outlet face.
inline std::pair<std::vector<double>, std::vector<double>> mean_pressure_curve(
    const std::vector<CellField>& fields, const GridMask& mask, const DomainSpec& spec,
    const std::vector<double>& times) {
    if (fields.empty()) throw Error("mean_pressure_curve: no snapshots");
    std::vector<double> st, sv;
    for (const auto& field : fields) {
        double total = 0.0;
        for (std::size_t k = 0; k < spec.outlets.size(); ++k) {
            double acc = 0.0;
            int n = 0;
            auto accumulate = [&](int ci, int cj, int di, int dj) {
                const double pc = field.p[mask.ci(ci, cj)];
                const int ii = ci + di, jj = cj + dj;
                const double pin = mask.is_fluid(ii, jj) ? field.p[mask.ci(ii, jj)] : pc;
                acc += pc + 0.5 * (pc - pin);
                ++n;
            };
            for (int j = 0; j < mask.ny; ++j)
                for (int i = 0; i <= mask.nx; ++i) {
                    const int id = mask.ui(i, j);
                    if (mask.uface[id] != geom::Face::outlet ||
                        mask.uface_outlet[id] != static_cast<int>(k) + 1)
                        continue;
                    const int s = spec.outlets[k].normal_sign;
                    accumulate(s > 0 ? i - 1 : i, j, s > 0 ? -1 : 1, 0);
                }
            for (int j = 0; j <= mask.ny; ++j)
                for (int i = 0; i < mask.nx; ++i) {
                    const int id = mask.vi(i, j);
                    if (mask.vface[id] != geom::Face::outlet ||
                        mask.vface_outlet[id] != static_cast<int>(k) + 1)
                        continue;
                    const int s = spec.outlets[k].normal_sign;
                    accumulate(i, s > 0 ? j - 1 : j, 0, s > 0 ? -1 : 1);
                }
            if (n > 0) total += acc / n;
        }
        st.push_back(field.t);
        sv.push_back(total);
    }
    if (st.size() == 1) {
        // steady problem: the curve is a single value at every requested time
        std::vector<double> tt = times.empty() ? std::vector<double>{st[0]} : times;
        std::vector<double> vals(tt.size(), sv[0]);
        return {tt, vals};
    }
    CubicSpline sp(st, sv);
    std::vector<double> tt = times.empty() ? st : times;
    std::vector<double> vals;
    for (double tm : tt) vals.push_back(sp(tm));
    return {tt, vals};
}

inline SlicePlan SlicePlan::desk_default(const DomainSpec& spec, double spacing, double cadence,
                                         double T) {
    SlicePlan plan;
    plan.spacing = spacing;
    // parent channel: the first rectangle; branches: rectangles attached to it
    const auto& parent = spec.rectangles.front();
    for (double f : {0.2, 0.5, 0.8}) {
        const double x = parent.x0 + f * parent.width();
        plan.lines.push_back({geom::Axis::vertical, x, parent.y0, parent.y1, +1});
    }
    for (std::size_t r = 1; r < spec.rectangles.size(); ++r) {
        const auto& br = spec.rectangles[r];
        if (br.height() > br.width()) {
            const double y = br.y0 + 0.5 * br.height();
            plan.lines.push_back({geom::Axis::horizontal, y, br.x0, br.x1, +1});
        } else {
            const double x = br.x0 + 0.5 * br.width();
            plan.lines.push_back({geom::Axis::vertical, x, br.y0, br.y1, +1});
        }
    }
    // frames cover [0, T): the endpoint aliases with the next cycle
    for (double tm = 0.0; tm < T - 1e-9; tm += cadence) plan.times.push_back(tm);
    return plan;
}

// ---------------------------------------------------------------------------
// Full acquisition: slice sampling, encoding, noise, reconstruction, anchor.
// ---------------------------------------------------------------------------

inline MeasurementSet acquire(const std::vector<CellField>& fields, const GridMask& mask,
                              const DomainSpec& spec, const SlicePlan& plan, double snr_db,
                              std::uint64_t seed, double m0 = 1.0, double phi0 = 0.5) {
    MeasurementSet ms;
    ms.snr_db = snr_db;
    ms.seed = seed;
    ms.m0 = m0;
    ms.phi0 = phi0;
    ms.venc = choose_venc(fields);

    const auto clean = interpolate_to_slices(fields, mask, spec, plan);
    ms.x.reserve(clean.size());
    for (std::size_t s = 0; s < clean.size(); ++s) {
        const auto& c = clean[s];
        auto [mu, mref] = encode(c.u, ms.venc, m0, phi0);
        auto [mv, mref2] = encode(c.v, ms.venc, m0, phi0);
        (void)mref2; // both encodes share one reference measurement
        const std::uint64_t base = 3 * static_cast<std::uint64_t>(s);
        mu = add_noise(mu, snr_db, m0, seed, base);
        mv = add_noise(mv, snr_db, m0, seed, base + 1);
        mref = add_noise(mref, snr_db, m0, seed, base + 2);
        ms.x.push_back(c.x);
        ms.y.push_back(c.y);
        ms.t.push_back(c.t);
        ms.u_meas.push_back(reconstruct(mu, mref, ms.venc));
        ms.v_meas.push_back(reconstruct(mv, mref, ms.venc));
    }
    auto [pt, pv] = mean_pressure_curve(fields, mask, spec, plan.times);
    ms.pbar_t = pt;
    ms.pbar = pv;
    return ms;
}

} // namespace hemopinn::measure
