#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hemopinn/errors.hpp"
#include "hemopinn/geometry.hpp"
#include "hemopinn/measure.hpp"
#include "hemopinn/train.hpp"

namespace hemopinn::io {

namespace fs = std::filesystem;
using nlohmann::json;

// shortest round-trip formatting for CSV payloads
inline std::string fmt_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Atomic write: temp file in the same directory, then rename.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw Error("cannot write " + tmp.string());
        f << content;
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// FNV-1a 64-bit content checksum, hex-encoded.
inline std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Snapshot CSV: one file per time level, columns i,j,x,y,u,v,p,mask with
// cell-centred velocities; metadata (times, flows, pressures) in index.json.
// ---------------------------------------------------------------------------

inline std::string snapshot_csv(const geom::GridMask& mask, const measure::CellField& f) {
    std::ostringstream out;
    out << "i,j,x,y,u,v,p,mask\n";
    for (int j = 0; j < mask.ny; ++j)
        for (int i = 0; i < mask.nx; ++i) {
            const int id = mask.ci(i, j);
            out << i << ',' << j << ',' << fmt_g17(mask.cx(i)) << ',' << fmt_g17(mask.cy(j)) << ','
                << fmt_g17(f.u[id]) << ',' << fmt_g17(f.v[id]) << ',' << fmt_g17(f.p[id]) << ','
                << static_cast<int>(mask.cell[id]) << '\n';
        }
    return out.str();
}

inline measure::CellField read_snapshot_csv(const geom::GridMask& mask, const fs::path& path,
                                            double t) {
    measure::CellField f;
    f.t = t;
    f.u.assign(mask.cell.size(), 0.0);
    f.v.assign(mask.cell.size(), 0.0);
    f.p.assign(mask.cell.size(), 0.0);
    std::ifstream in(path);
    if (!in) throw MissingSnapshots("cannot read snapshot " + path.string());
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        int i, j, m;
        double x, y, u, v, p;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf,%lf,%d", &i, &j, &x, &y, &u, &v, &p,
                        &m) != 8)
            throw Error("malformed snapshot row in " + path.string());
        const int id = mask.ci(i, j);
        f.u[id] = u;
        f.v[id] = v;
        f.p[id] = p;
    }
    return f;
}

struct SnapshotIndex {
    std::vector<double> times;
    std::vector<std::vector<double>> Q, P; // [snapshot][outlet]
    std::vector<double> q_in;
    std::vector<std::string> files;
};

inline void write_snapshots(const fs::path& dir, const geom::GridMask& mask,
                            const std::vector<measure::CellField>& fields,
                            const json& config_echo) {
    SnapshotIndex idx;
    fs::create_directories(dir);
    for (std::size_t s = 0; s < fields.size(); ++s) {
        char name[32];
        std::snprintf(name, sizeof(name), "snap_%04zu.csv", s);
        write_file_atomic(dir / name, snapshot_csv(mask, fields[s]));
        idx.times.push_back(fields[s].t);
        idx.Q.push_back(fields[s].Q);
        idx.P.push_back(fields[s].P);
        idx.q_in.push_back(fields[s].q_in);
        idx.files.push_back(name);
    }
    json j;
    j["times"] = idx.times;
    j["Q"] = idx.Q;
    j["P"] = idx.P;
    j["q_in"] = idx.q_in;
    j["files"] = idx.files;
    j["config"] = config_echo;
    write_file_atomic(dir / "index.json", j.dump(2) + "\n");
}

inline std::pair<SnapshotIndex, std::vector<measure::CellField>> read_snapshots(
    const fs::path& dir, const geom::GridMask& mask) {
    if (!fs::exists(dir / "index.json"))
        throw MissingSnapshots("no snapshots at " + dir.string() + " (run 'simulate' first)");
    const json j = json::parse(read_file(dir / "index.json"));
    SnapshotIndex idx;
    idx.times = j.at("times").get<std::vector<double>>();
    idx.Q = j.at("Q").get<std::vector<std::vector<double>>>();
    idx.P = j.at("P").get<std::vector<std::vector<double>>>();
    idx.q_in = j.at("q_in").get<std::vector<double>>();
    idx.files = j.at("files").get<std::vector<std::string>>();
    std::vector<measure::CellField> fields;
    for (std::size_t s = 0; s < idx.files.size(); ++s) {
        auto f = read_snapshot_csv(mask, dir / idx.files[s], idx.times[s]);
        f.Q = idx.Q[s];
        f.P = idx.P[s];
        f.q_in = idx.q_in[s];
        fields.push_back(std::move(f));
    }
    return {idx, fields};
}

// ---------------------------------------------------------------------------
// Measurements
// ---------------------------------------------------------------------------

inline void write_measurements(const fs::path& dir, const measure::MeasurementSet& ms,
                               const measure::SlicePlan& plan) {
    std::ostringstream csv;
    csv << "x,y,t,u_meas,v_meas\n";
    for (std::size_t q = 0; q < ms.x.size(); ++q)
        csv << fmt_g17(ms.x[q]) << ',' << fmt_g17(ms.y[q]) << ',' << fmt_g17(ms.t[q]) << ','
            << fmt_g17(ms.u_meas[q]) << ',' << fmt_g17(ms.v_meas[q]) << '\n';
    write_file_atomic(dir / "measurements.csv", csv.str());

    json meta;
    meta["venc"] = ms.venc;
    meta["snr_db"] = std::isinf(ms.snr_db) ? json("inf") : json(ms.snr_db);
    meta["m0"] = ms.m0;
    meta["phi0"] = ms.phi0;
    meta["seed"] = ms.seed;
    meta["snr_convention"] = "SNR_dB = 20 log10(M0 / sigma) per complex component";
    meta["pbar"] = {{"t", ms.pbar_t}, {"p", ms.pbar}};
    json lines = json::array();
    for (const auto& l : plan.lines)
        lines.push_back({{"axis", l.axis == geom::Axis::vertical ? "vertical" : "horizontal"},
                         {"coord", l.coord},
                         {"from", l.lo},
                         {"to", l.hi}});
    meta["plan"] = {{"lines", lines}, {"spacing", plan.spacing}, {"times", plan.times}};
    write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

inline measure::MeasurementSet read_measurements(const fs::path& dir) {
    if (!fs::exists(dir / "meta.json"))
        throw MissingSnapshots("no measurements at " + dir.string() + " (run 'measure' first)");
    measure::MeasurementSet ms;
    const json meta = json::parse(read_file(dir / "meta.json"));
    ms.venc = meta.at("venc");
    ms.snr_db = meta.at("snr_db").is_string() ? std::numeric_limits<double>::infinity()
                                              : meta.at("snr_db").get<double>();
    ms.m0 = meta.at("m0");
    ms.phi0 = meta.at("phi0");
    ms.seed = meta.at("seed");
    ms.pbar_t = meta.at("pbar").at("t").get<std::vector<double>>();
    ms.pbar = meta.at("pbar").at("p").get<std::vector<double>>();

    std::ifstream in(dir / "measurements.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double x, y, t, u, v;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf", &x, &y, &t, &u, &v) != 5)
            throw Error("malformed measurement row");
        ms.x.push_back(x);
        ms.y.push_back(y);
        ms.t.push_back(t);
        ms.u_meas.push_back(u);
        ms.v_meas.push_back(v);
    }
    return ms;
}

// ---------------------------------------------------------------------------
// Training outputs
// ---------------------------------------------------------------------------

inline std::string history_csv(const std::vector<pinn::TrainHistoryRow>& rows, bool steady, int K) {
    std::ostringstream out;
    out << "epoch,loss_total,loss_ns,loss_wk,loss_bc,loss_udata,loss_pdata,loss_gradp,"
        << "lambda_ns,lambda_wk,lambda_bc,lambda_data,lambda_gradp";
    for (int k = 1; k <= K; ++k) {
        if (steady) out << ",Rt_" << k;
        else out << ",Rp_" << k << ",Rd_" << k << ",C_" << k;
    }
    out << '\n';
    for (const auto& r : rows) {
        out << r.epoch << ',' << fmt_g17(r.total) << ',' << fmt_g17(r.ns) << ',' << fmt_g17(r.wk)
            << ',' << fmt_g17(r.bc) << ',' << fmt_g17(r.udata) << ',' << fmt_g17(r.pdata) << ','
            << fmt_g17(r.gradp) << ',' << fmt_g17(r.weights.ns) << ',' << fmt_g17(r.weights.wk)
            << ',' << fmt_g17(r.weights.bc) << ',' << fmt_g17(r.weights.data) << ','
            << fmt_g17(r.weights.gradp);
        for (int k = 0; k < K; ++k) {
            if (steady) out << ',' << fmt_g17(r.params.rt[k]);
            else
                out << ',' << fmt_g17(r.params.rp[k]) << ',' << fmt_g17(r.params.rd[k]) << ','
                    << fmt_g17(r.params.c[k]);
        }
        out << '\n';
    }
    return out.str();
}

inline std::string curves_csv(const std::vector<double>& t,
                              const std::vector<std::vector<double>>& Q,
                              const std::vector<std::vector<double>>& P,
                              const std::vector<double>& q_in) {
    std::ostringstream out;
    out << "t";
    for (std::size_t k = 0; k < Q.size(); ++k) out << ",Q_" << (k + 1) << ",P_" << (k + 1);
    out << ",Q_in\n";
    for (std::size_t s = 0; s < t.size(); ++s) {
        out << fmt_g17(t[s]);
        for (std::size_t k = 0; k < Q.size(); ++k)
            out << ',' << fmt_g17(Q[k][s]) << ',' << fmt_g17(P[k][s]);
        out << ',' << fmt_g17(q_in.empty() ? 0.0 : q_in[s]) << '\n';
    }
    return out.str();
}

// Checkpoint: JSON header plus a raw little-endian dump of the parameter
// vector (layout documented in docs/formats.md).
inline void write_checkpoint(const fs::path& dir, const pinn::TrainResult& res,
                             const pinn::TrainSetup& setup) {
    json hdr;
    hdr["seed"] = res.seed;
    hdr["mode"] = setup.mode == pinn::Mode::steady ? "steady" : "transient";
    hdr["tau"] = res.estimates.tau;
    hdr["epochs"] = setup.cfg.total_epochs();
    hdr["network"] = {{"hidden_layers", setup.net.hidden_layers},
                      {"width", setup.net.width},
                      {"pi_hidden_layers", setup.net.pi_hidden_layers},
                      {"pi_width", setup.net.pi_width}};
    json slices = json::array();
    for (const auto& sl : res.params.slices)
        slices.push_back({{"name", sl.name}, {"offset", sl.offset}, {"size", sl.size}});
    hdr["slices"] = slices;
    write_file_atomic(dir / "checkpoint.json", hdr.dump(2) + "\n");

    std::string blob(reinterpret_cast<const char*>(res.params.data.data()),
                     res.params.data.size() * sizeof(double));
    write_file_atomic(dir / "checkpoint.bin", blob);
}

inline neural::ParamVector read_checkpoint(const fs::path& dir) {
    const json hdr = json::parse(read_file(dir / "checkpoint.json"));
    neural::ParamVector pv;
    for (const auto& sl : hdr.at("slices"))
        pv.add_slice(sl.at("name").get<std::string>(), sl.at("size").get<std::size_t>());
    const std::string blob = read_file(dir / "checkpoint.bin");
    if (blob.size() != pv.data.size() * sizeof(double))
        throw Error("checkpoint.bin size does not match the slice table");
    std::memcpy(pv.data.data(), blob.data(), blob.size());
    return pv;
}

} // namespace hemopinn::io
