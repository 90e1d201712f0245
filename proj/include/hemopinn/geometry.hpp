#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hemopinn/errors.hpp"
#include "hemopinn/rng.hpp"

namespace hemopinn::geom {

// ---------------------------------------------------------------------------
// Domain description: a union of axis-aligned rectangles (cm) with tagged
// boundary segments. The parent/daughter channel layout used throughout the
// desk problems is one instance; any conforming rectangle union works.
// ---------------------------------------------------------------------------

struct Rect {
    double x0, y0, x1, y1;
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    bool contains(double x, double y, double tol = 0.0) const {
        return x >= x0 - tol && x <= x1 + tol && y >= y0 - tol && y <= y1 + tol;
    }
};

enum class Axis { vertical, horizontal }; // vertical: fixed x, spans y

struct Segment {
    Axis axis = Axis::vertical;
    double coord = 0.0; // the fixed coordinate
    double lo = 0.0, hi = 0.0; // range on the running coordinate
    // outward normal sign along the fixed axis: vertical segment with
    // normal_sign=+1 has outward normal +x (fluid on the left).
    int normal_sign = +1;

    double length() const { return hi - lo; }
    // point at arc-length parameter s in [0, length]
    void at(double s, double& x, double& y) const {
        if (axis == Axis::vertical) { x = coord; y = lo + s; }
        else { x = lo + s; y = coord; }
    }
    bool contains(double x, double y, double tol) const {
        const double c = (axis == Axis::vertical) ? x : y;
        const double r = (axis == Axis::vertical) ? y : x;
        return std::abs(c - coord) <= tol && r >= lo - tol && r <= hi + tol;
    }
    // outward unit normal
    void normal(double& nx, double& ny) const {
        if (axis == Axis::vertical) { nx = normal_sign; ny = 0.0; }
        else { nx = 0.0; ny = normal_sign; }
    }
};

enum class BoundaryTag : std::uint8_t { interior, inlet, wall, outlet };

struct DomainSpec {
    std::vector<Rect> rectangles;
    Segment inlet;
    std::vector<Segment> outlets; // outlet k = index + 1
    std::vector<Segment> walls;   // derived by validate() when left empty
    double L = 1.0; // characteristic length (cm)
    double U = 1.0; // characteristic velocity (cm/s)

    bool contains(double x, double y, double tol = 0.0) const {
        for (const auto& r : rectangles)
            if (r.contains(x, y, tol)) return true;
        return false;
    }

    double area() const {
        double a = 0.0;
        for (const auto& r : rectangles) a += r.area();
        return a;
    }

    void bounding_box(double& x0, double& y0, double& x1, double& y1) const {
        x0 = y0 = 1e300; x1 = y1 = -1e300;
        for (const auto& r : rectangles) {
            x0 = std::min(x0, r.x0); y0 = std::min(y0, r.y0);
            x1 = std::max(x1, r.x1); y1 = std::max(y1, r.y1);
        }
    }

    // Boundary of the rectangle union as oriented segments.
    std::vector<Segment> boundary() const;

    // Checks the rectangle/segment invariants, fills outward normals on the
    // tagged segments and derives the wall list when it was not given.
    void validate();

    BoundaryTag classify_boundary(double x, double y, int& outlet_k, double tol) const {
        if (inlet.contains(x, y, tol)) { outlet_k = 0; return BoundaryTag::inlet; }
        for (std::size_t k = 0; k < outlets.size(); ++k)
            if (outlets[k].contains(x, y, tol)) { outlet_k = static_cast<int>(k) + 1; return BoundaryTag::outlet; }
        for (const auto& w : walls)
            if (w.contains(x, y, tol)) { outlet_k = 0; return BoundaryTag::wall; }
        outlet_k = 0;
        return BoundaryTag::interior;
    }

    // Default desk geometry: 3x1 cm parent channel splitting into two 1 cm
    // wide, 1.5 cm long daughter branches at the far end.
    static DomainSpec desk_default();
};

namespace detail {

struct Interval { double lo, hi; };

inline void add_interval(std::vector<Interval>& v, double lo, double hi) {
    if (hi > lo) v.push_back({lo, hi});
}

// symmetric difference helpers operate on merged, sorted interval lists
inline std::vector<Interval> merge(std::vector<Interval> v) {
    std::sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.lo < b.lo; });
    std::vector<Interval> out;
    for (const auto& iv : v) {
        if (!out.empty() && iv.lo <= out.back().hi + 1e-12) out.back().hi = std::max(out.back().hi, iv.hi);
        else out.push_back(iv);
    }
    return out;
}

// parts of a that are not covered by b
inline std::vector<Interval> subtract(const std::vector<Interval>& a, const std::vector<Interval>& b) {
    std::vector<Interval> out;
    for (auto iv : a) {
        double cur = iv.lo;
        for (const auto& cut : b) {
            if (cut.hi <= cur || cut.lo >= iv.hi) continue;
            if (cut.lo > cur) out.push_back({cur, cut.lo});
            cur = std::max(cur, cut.hi);
        }
        if (cur < iv.hi) out.push_back({cur, iv.hi});
    }
    return out;
}

} // namespace detail

inline std::vector<Segment> DomainSpec::boundary() const {
    std::vector<Segment> out;
    const double eps = 1e-9;
    // vertical boundary pieces at every distinct rectangle x-coordinate
    std::vector<double> xs, ys;
    for (const auto& r : rectangles) { xs.push_back(r.x0); xs.push_back(r.x1); ys.push_back(r.y0); ys.push_back(r.y1); }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end(), [&](double a, double b) { return std::abs(a - b) < eps; }), xs.end());
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end(), [&](double a, double b) { return std::abs(a - b) < eps; }), ys.end());

    for (double x : xs) {
        std::vector<detail::Interval> left, right;
        for (const auto& r : rectangles) {
            if (std::abs(r.x1 - x) < eps) detail::add_interval(left, r.y0, r.y1);  // fluid on the left
            if (std::abs(r.x0 - x) < eps) detail::add_interval(right, r.y0, r.y1); // fluid on the right
        }
        left = detail::merge(left);
        right = detail::merge(right);
        for (const auto& iv : detail::subtract(left, right))
            out.push_back({Axis::vertical, x, iv.lo, iv.hi, +1});
        for (const auto& iv : detail::subtract(right, left))
            out.push_back({Axis::vertical, x, iv.lo, iv.hi, -1});
    }
    for (double y : ys) {
        std::vector<detail::Interval> below, above;
        for (const auto& r : rectangles) {
            if (std::abs(r.y1 - y) < eps) detail::add_interval(below, r.x0, r.x1);
            if (std::abs(r.y0 - y) < eps) detail::add_interval(above, r.x0, r.x1);
        }
        below = detail::merge(below);
        above = detail::merge(above);
        for (const auto& iv : detail::subtract(below, above))
            out.push_back({Axis::horizontal, y, iv.lo, iv.hi, +1});
        for (const auto& iv : detail::subtract(above, below))
            out.push_back({Axis::horizontal, y, iv.lo, iv.hi, -1});
    }
    return out;
}

inline void DomainSpec::validate() {
    if (rectangles.empty()) throw InvalidDomain("[geometry] no rectangles given");
    for (const auto& r : rectangles)
        if (!(r.x1 > r.x0 && r.y1 > r.y0)) throw InvalidDomain("[geometry] degenerate rectangle");
    for (std::size_t i = 0; i < rectangles.size(); ++i)
        for (std::size_t j = i + 1; j < rectangles.size(); ++j) {
            const auto& a = rectangles[i];
            const auto& b = rectangles[j];
            const double ox = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
            const double oy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
            if (ox > 1e-12 && oy > 1e-12)
                throw InvalidDomain("[geometry] rectangles overlap beyond shared edges");
        }
    if (L <= 0.0 || U <= 0.0) throw InvalidDomain("[geometry] scales L, U must be positive");
    if (outlets.empty()) throw InvalidDomain("[geometry] need at least one outlet");

    const auto bnd = boundary();
    const double tol = 1e-9;

    auto find_on_boundary = [&](Segment& s, const char* what) {
        for (const auto& b : bnd) {
            if (b.axis != s.axis) continue;
            if (std::abs(b.coord - s.coord) > tol) continue;
            if (s.lo >= b.lo - tol && s.hi <= b.hi + tol) {
                s.normal_sign = b.normal_sign;
                return;
            }
        }
        throw InvalidDomain(std::string("[geometry] ") + what + " segment does not lie on the domain boundary");
    };
    find_on_boundary(inlet, "inlet");
    if (!(inlet.hi > inlet.lo)) throw InvalidDomain("[geometry] degenerate inlet");
    for (auto& o : outlets) {
        find_on_boundary(o, "outlet");
        if (!(o.hi > o.lo)) throw InvalidDomain("[geometry] degenerate outlet");
    }
    for (std::size_t i = 0; i < outlets.size(); ++i)
        for (std::size_t j = i + 1; j < outlets.size(); ++j) {
            const auto& a = outlets[i];
            const auto& b = outlets[j];
            if (a.axis == b.axis && std::abs(a.coord - b.coord) < tol &&
                std::min(a.hi, b.hi) - std::max(a.lo, b.lo) > tol)
                throw InvalidDomain("[geometry] outlets overlap");
        }

    // walls = boundary minus inlet and outlets (on each boundary piece)
    if (walls.empty()) {
        for (const auto& b : bnd) {
            std::vector<detail::Interval> cuts;
            auto maybe_cut = [&](const Segment& s) {
                if (s.axis == b.axis && std::abs(s.coord - b.coord) < tol)
                    detail::add_interval(cuts, std::max(s.lo, b.lo), std::min(s.hi, b.hi));
            };
            maybe_cut(inlet);
            for (const auto& o : outlets) maybe_cut(o);
            for (const auto& iv : detail::subtract({{b.lo, b.hi}}, detail::merge(cuts)))
                walls.push_back({b.axis, b.coord, iv.lo, iv.hi, b.normal_sign});
        }
    } else {
        for (auto& w : walls) find_on_boundary(w, "wall");
    }

    // connectivity of the rectangle union (edge adjacency flood fill)
    std::vector<int> comp(rectangles.size(), -1);
    std::vector<std::size_t> stack{0};
    comp[0] = 0;
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        for (std::size_t j = 0; j < rectangles.size(); ++j) {
            if (comp[j] >= 0) continue;
            const auto& a = rectangles[i];
            const auto& b = rectangles[j];
            const double ox = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
            const double oy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
            const bool share_edge = (std::abs(ox) < 1e-12 && oy > 1e-12) || (std::abs(oy) < 1e-12 && ox > 1e-12);
            if (share_edge) { comp[j] = 0; stack.push_back(j); }
        }
    }
    for (int c : comp)
        if (c < 0) throw InvalidDomain("[geometry] rectangle union is not connected");
}

inline DomainSpec DomainSpec::desk_default() {
    DomainSpec s;
    s.rectangles = {{0.0, 0.0, 3.0, 1.0}, {2.0, 1.0, 3.0, 2.5}, {2.0, -1.5, 3.0, 0.0}};
    s.inlet = {Axis::vertical, 0.0, 0.0, 1.0, -1};
    s.outlets = {{Axis::horizontal, 2.5, 2.0, 3.0, +1}, {Axis::horizontal, -1.5, 2.0, 3.0, -1}};
    s.L = 1.0;
    s.U = 120.0;
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Grid mask: staggered-grid cell and face classification.
// ---------------------------------------------------------------------------

enum class Cell : std::uint8_t { solid, fluid, inlet, outlet, wall_adjacent };
enum class Face : std::uint8_t { inactive, interior, wall, inlet, outlet };

struct GridMask {
    double h = 0.0;
    int nx = 0, ny = 0;
    double ox = 0.0, oy = 0.0; // lower-left corner of the bounding box
    std::vector<Cell> cell;        // nx * ny
    std::vector<std::int16_t> cell_outlet; // 0 = none, else outlet index k
    std::vector<Face> uface;       // (nx+1) * ny, x-faces carrying u
    std::vector<Face> vface;       // nx * (ny+1), y-faces carrying v
    std::vector<std::int16_t> uface_outlet, vface_outlet;

    int ci(int i, int j) const { return j * nx + i; }
    int ui(int i, int j) const { return j * (nx + 1) + i; }
    int vi(int i, int j) const { return j * nx + i; }

    bool is_fluid(int i, int j) const {
        return i >= 0 && i < nx && j >= 0 && j < ny && cell[ci(i, j)] != Cell::solid;
    }
    double cx(int i) const { return ox + (i + 0.5) * h; }
    double cy(int j) const { return oy + (j + 0.5) * h; }

    int fluid_cell_count() const {
        int n = 0;
        for (auto c : cell) n += (c != Cell::solid);
        return n;
    }
};

inline GridMask build_mask(const DomainSpec& spec, double h) {
    if (h <= 0.0) throw NonConformingGrid("h must be positive");
    double x0, y0, x1, y1;
    spec.bounding_box(x0, y0, x1, y1);

    auto conforming = [&](double len) {
        const double q = len / h;
        return std::abs(q - std::round(q)) <= 1e-9 * std::max(1.0, std::abs(q));
    };
    for (const auto& r : spec.rectangles) {
        if (!conforming(r.width()) || !conforming(r.height()) ||
            !conforming(r.x0 - x0) || !conforming(r.y0 - y0))
            throw NonConformingGrid("cell size does not tile the rectangle union");
    }

    GridMask m;
    m.h = h;
    m.ox = x0;
    m.oy = y0;
    m.nx = static_cast<int>(std::round((x1 - x0) / h));
    m.ny = static_cast<int>(std::round((y1 - y0) / h));
    if (m.nx <= 0 || m.ny <= 0) throw EmptyDomain("bounding box has no cells");
    m.cell.assign(static_cast<std::size_t>(m.nx) * m.ny, Cell::solid);
    m.cell_outlet.assign(m.cell.size(), 0);

    for (int j = 0; j < m.ny; ++j)
        for (int i = 0; i < m.nx; ++i)
            if (spec.contains(m.cx(i), m.cy(j))) m.cell[m.ci(i, j)] = Cell::fluid;
    if (m.fluid_cell_count() == 0) throw EmptyDomain("no fluid cells");

    // classify faces first, then derive boundary-adjacent cell classes
    m.uface.assign(static_cast<std::size_t>(m.nx + 1) * m.ny, Face::inactive);
    m.vface.assign(static_cast<std::size_t>(m.nx) * (m.ny + 1), Face::inactive);
    m.uface_outlet.assign(m.uface.size(), 0);
    m.vface_outlet.assign(m.vface.size(), 0);

    const double tol = h / 100.0;
    auto boundary_face_tag = [&](double x, double y, int& k) {
        const BoundaryTag t = spec.classify_boundary(x, y, k, tol);
        switch (t) {
            case BoundaryTag::inlet: return Face::inlet;
            case BoundaryTag::outlet: return Face::outlet;
            default: return Face::wall;
        }
    };

    for (int j = 0; j < m.ny; ++j)
        for (int i = 0; i <= m.nx; ++i) {
            const bool fl = m.is_fluid(i - 1, j), fr = m.is_fluid(i, j);
            if (fl && fr) { m.uface[m.ui(i, j)] = Face::interior; continue; }
            if (!fl && !fr) continue;
            int k = 0;
            const Face f = boundary_face_tag(m.ox + i * h, m.cy(j), k);
            m.uface[m.ui(i, j)] = f;
            m.uface_outlet[m.ui(i, j)] = static_cast<std::int16_t>(k);
        }
    for (int j = 0; j <= m.ny; ++j)
        for (int i = 0; i < m.nx; ++i) {
            const bool fb = m.is_fluid(i, j - 1), ft = m.is_fluid(i, j);
            if (fb && ft) { m.vface[m.vi(i, j)] = Face::interior; continue; }
            if (!fb && !ft) continue;
            int k = 0;
            const Face f = boundary_face_tag(m.cx(i), m.oy + j * h, k);
            m.vface[m.vi(i, j)] = f;
            m.vface_outlet[m.vi(i, j)] = static_cast<std::int16_t>(k);
        }

    // cell classes: inlet/outlet win over wall adjacency
    for (int j = 0; j < m.ny; ++j)
        for (int i = 0; i < m.nx; ++i) {
            if (m.cell[m.ci(i, j)] == Cell::solid) continue;
            Face fs[4] = {m.uface[m.ui(i, j)], m.uface[m.ui(i + 1, j)],
                          m.vface[m.vi(i, j)], m.vface[m.vi(i, j + 1)]};
            std::int16_t ks[4] = {m.uface_outlet[m.ui(i, j)], m.uface_outlet[m.ui(i + 1, j)],
                                  m.vface_outlet[m.vi(i, j)], m.vface_outlet[m.vi(i, j + 1)]};
            Cell c = Cell::fluid;
            std::int16_t k = 0;
            for (int q = 0; q < 4; ++q) {
                if (fs[q] == Face::inlet && c != Cell::outlet) c = Cell::inlet;
                if (fs[q] == Face::outlet) { c = Cell::outlet; k = ks[q]; }
                if (fs[q] == Face::wall && c == Cell::fluid) c = Cell::wall_adjacent;
            }
            m.cell[m.ci(i, j)] = c;
            m.cell_outlet[m.ci(i, j)] = k;
        }
    return m;
}

// ---------------------------------------------------------------------------
// Point sampling
// ---------------------------------------------------------------------------

struct PointCloud {
    struct Point { double x, y, t; };
    std::vector<Point> pts;
    BoundaryTag tag = BoundaryTag::interior;
    int outlet_k = 0; // valid when tag == outlet
    std::uint64_t seed = 0;
};

// Uniform-in-area interior points, each with an independent uniform time in
// [t_range.first, t_range.second].
inline PointCloud sample_collocation(const DomainSpec& spec, int n,
                                     std::pair<double, double> t_range, std::uint64_t seed) {
    if (n < 1) throw Error("sample_collocation: n must be >= 1");
    std::vector<double> cum;
    double total = 0.0;
    for (const auto& r : spec.rectangles) { total += r.area(); cum.push_back(total); }

    PointCloud pc;
    pc.tag = BoundaryTag::interior;
    pc.seed = seed;
    pc.pts.resize(n);
    for (int i = 0; i < n; ++i) {
        const std::uint64_t c = 4ull * static_cast<std::uint64_t>(i);
        const double pick = rng::uniform01(seed, rng::kStreamCollocation, c) * total;
        std::size_t ri = std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin();
        if (ri >= spec.rectangles.size()) ri = spec.rectangles.size() - 1;
        const auto& r = spec.rectangles[ri];
        pc.pts[i].x = r.x0 + r.width() * rng::uniform01(seed, rng::kStreamCollocation, c + 1);
        pc.pts[i].y = r.y0 + r.height() * rng::uniform01(seed, rng::kStreamCollocation, c + 2);
        pc.pts[i].t = t_range.first +
                      (t_range.second - t_range.first) * rng::uniform01(seed, rng::kStreamCollocation, c + 3);
    }
    return pc;
}

enum class SegmentTag { inlet, wall, outlet };

// Stratified (jittered) points along the arc length of the tagged segments:
// one uniform point per stratum of width total_length / n.
inline PointCloud sample_boundary(const DomainSpec& spec, SegmentTag which, int n,
                                  std::uint64_t seed, int outlet_k = 1) {
    if (n < 1) throw Error("sample_boundary: n must be >= 1");
    std::vector<Segment> segs;
    PointCloud pc;
    pc.seed = seed;
    switch (which) {
        case SegmentTag::inlet:
            segs = {spec.inlet};
            pc.tag = BoundaryTag::inlet;
            break;
        case SegmentTag::wall:
            segs = spec.walls;
            pc.tag = BoundaryTag::wall;
            break;
        case SegmentTag::outlet:
            if (outlet_k < 1 || outlet_k > static_cast<int>(spec.outlets.size()))
                throw UnknownSegment("outlet index " + std::to_string(outlet_k));
            segs = {spec.outlets[static_cast<std::size_t>(outlet_k - 1)]};
            pc.tag = BoundaryTag::outlet;
            pc.outlet_k = outlet_k;
            break;
    }
    if (segs.empty()) throw UnknownSegment("no segments with the requested tag");

    double total = 0.0;
    std::vector<double> cum;
    for (const auto& s : segs) { total += s.length(); cum.push_back(total); }

    pc.pts.resize(n);
    for (int i = 0; i < n; ++i) {
        const double s = (i + rng::uniform01(seed, rng::kStreamBoundary, i)) * total / n;
        std::size_t si = std::lower_bound(cum.begin(), cum.end(), s) - cum.begin();
        if (si >= segs.size()) si = segs.size() - 1;
        const double local = s - (si == 0 ? 0.0 : cum[si - 1]);
        segs[si].at(local, pc.pts[i].x, pc.pts[i].y);
        pc.pts[i].t = 0.0;
    }
    return pc;
}

// Composite-trapezoid quadrature along outlet k; weights sum to the segment
// length exactly.
inline std::pair<PointCloud, std::vector<double>> outlet_quadrature(const DomainSpec& spec,
                                                                    int k, int m) {
    if (k < 1 || k > static_cast<int>(spec.outlets.size()))
        throw UnknownSegment("outlet index " + std::to_string(k));
    if (m < 2) throw Error("outlet_quadrature: need m >= 2 nodes");
    const Segment& seg = spec.outlets[static_cast<std::size_t>(k - 1)];
    const double dh = seg.length() / (m - 1);

    PointCloud pc;
    pc.tag = BoundaryTag::outlet;
    pc.outlet_k = k;
    pc.pts.resize(m);
    std::vector<double> w(m, dh);
    w.front() = w.back() = 0.5 * dh;
    for (int i = 0; i < m; ++i) {
        seg.at(i * dh, pc.pts[i].x, pc.pts[i].y);
        pc.pts[i].t = 0.0;
    }
    return {std::move(pc), std::move(w)};
}

} // namespace hemopinn::geom
